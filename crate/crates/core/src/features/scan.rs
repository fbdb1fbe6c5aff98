//! Sliding-window detection: every window that a scorer accepts casts one
//! unit vote at its center.

use crate::error::{Error, Result};
use crate::features::{DetectorModel, FeatureContext, FilterBank, Rect};
use crate::image::GrayImage;
use crate::inference::FrameObservation;
use crate::scalar::Real;
use crate::voting::{gradient_voters_auto, RoadFrame, VotingPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub width: usize,
    pub height: usize,
    pub stride_x: usize,
    pub stride_y: usize,
    /// Image rows `[start, end)` the windows must stay inside.
    pub band: Option<(usize, usize)>,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { width: 32, height: 16, stride_x: 4, stride_y: 4, band: None }
    }
}

impl WindowSpec {
    fn rows(&self, height: usize) -> (usize, usize) {
        self.band.unwrap_or((0, height))
    }

    pub fn validate(&self, img_width: usize, img_height: usize) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.stride_x == 0 || self.stride_y == 0 {
            return Err(Error::Config("window size and strides must be positive".into()));
        }
        let (y0, y1) = self.rows(img_height);
        if y0 >= y1 || y1 > img_height {
            return Err(Error::Config(format!("row band [{y0}, {y1}) does not fit an image of height {img_height}")));
        }
        if self.width > img_width || self.height > y1 - y0 {
            return Err(Error::Config(format!(
                "{}x{} window does not fit a {img_width}x{} search area",
                self.width,
                self.height,
                y1 - y0
            )));
        }
        Ok(())
    }

    /// Window positions, row-major. Assumes [`WindowSpec::validate`] passed.
    pub fn windows(&self, img_width: usize, img_height: usize) -> Vec<Rect> {
        let (y0, y1) = self.rows(img_height);
        let mut out = Vec::new();
        let mut y = y0;
        while y + self.height <= y1 {
            let mut x = 0;
            while x + self.width <= img_width {
                out.push(Rect::new(x, y, self.width, self.height));
                x += self.stride_x;
            }
            y += self.stride_y;
        }
        out
    }
}

/// Center of a window in pixel-index coordinates.
pub fn window_center(win: Rect) -> (f64, f64) {
    (win.x as f64 + (win.w as f64 - 1.0) / 2.0, win.y as f64 + (win.h as f64 - 1.0) / 2.0)
}

pub trait WindowScorer {
    fn score(&self, ctx: &FeatureContext, win: Rect) -> Result<f64>;
    /// Windows scoring strictly above this fire.
    fn threshold(&self) -> f64;
}

impl WindowScorer for DetectorModel {
    fn score(&self, ctx: &FeatureContext, win: Rect) -> Result<f64> {
        DetectorModel::score(self, &ctx.extract(win)?)
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Unit voters at the centers of firing windows, image coordinates.
pub fn scan_windows_with<T: Real, S: WindowScorer + ?Sized>(
    ctx: &FeatureContext,
    spec: &WindowSpec,
    scorer: &S,
) -> Result<Vec<VotingPoint<T>>> {
    spec.validate(ctx.width(), ctx.height())?;
    let thr = scorer.threshold();
    let mut out = Vec::new();
    for win in spec.windows(ctx.width(), ctx.height()) {
        if scorer.score(ctx, win)? > thr {
            let (cx, cy) = window_center(win);
            out.push(VotingPoint::unit(T::lit(cx), T::lit(cy)));
        }
    }
    Ok(out)
}

pub fn scan_windows<T: Real, S: WindowScorer + ?Sized>(
    img: &GrayImage<T>,
    bank: &FilterBank,
    spec: &WindowSpec,
    scorer: &S,
) -> Result<Vec<VotingPoint<T>>> {
    scan_windows_with(&FeatureContext::new(img, bank), spec, scorer)
}

/// Full detection for one frame: both detectors plus gradient voters, all
/// converted to the road frame.
pub fn detect_frame<T: Real>(
    index: usize,
    img: &GrayImage<T>,
    bank: &FilterBank,
    spec: &WindowSpec,
    border: &DetectorModel,
    lane: &DetectorModel,
) -> Result<FrameObservation<T>> {
    let ctx = FeatureContext::new(img, bank);
    let map = RoadFrame::<T>::new(img.height());
    Ok(FrameObservation {
        index,
        bd_voters: map.flip_points(&scan_windows_with(&ctx, spec, border)?),
        ln_voters: map.flip_points(&scan_windows_with(&ctx, spec, lane)?),
        grad_voters: map.flip_points(&gradient_voters_auto(img)),
    })
}
