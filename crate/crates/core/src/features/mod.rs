//! Window features for the border and lane-marking detectors.
//!
//! A window is described by the mean filter-bank responses of its upper and
//! lower halves followed by gradient-orientation histograms of a 2 x 4 cell
//! grid. Both parts are read from summed-area tables, so a window costs a
//! fixed number of lookups regardless of its size.

pub mod detector;
pub mod filters;
pub mod integral;
pub mod scan;

pub use detector::{fda_project, fda_train, rbf_score, train_detector, train_synthetic_detectors, DetectorModel, SyntheticTraining};
pub use filters::FilterBank;
pub use integral::{IntegralImage, Rect};
pub use scan::{detect_frame, scan_windows, scan_windows_with, window_center, WindowScorer, WindowSpec};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::scalar::Real;

pub const HOG_BINS: usize = 9;
pub const HOG_ROWS: usize = 2;
pub const HOG_COLS: usize = 4;
pub const HOG_EPS: f64 = 1e-5;

pub type FeatureVector = Vec<f64>;

pub fn feature_len(bank_len: usize) -> usize {
    2 * bank_len + HOG_ROWS * HOG_COLS * HOG_BINS
}

/// Unsigned orientation bin of a gradient, `[0, HOG_BINS)`.
pub fn orientation_bin(gx: f64, gy: f64) -> usize {
    let pi = std::f64::consts::PI;
    let mut a = gy.atan2(gx);
    if a < 0.0 {
        a += pi;
    }
    if a >= pi {
        a -= pi;
    }
    ((a / (pi / HOG_BINS as f64)) as usize).min(HOG_BINS - 1)
}

/// Gradient magnitude split into one map per orientation bin (hard
/// binning). Central differences with a replicated border.
pub fn orientation_channels<T: Real>(img: &GrayImage<T>) -> Vec<Vec<f64>> {
    let (w, h) = (img.width(), img.height());
    let mut out = vec![vec![0.0; w * h]; HOG_BINS];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let gx = img.get_clamped(xi + 1, yi).as_f64() - img.get_clamped(xi - 1, yi).as_f64();
            let gy = img.get_clamped(xi, yi + 1).as_f64() - img.get_clamped(xi, yi - 1).as_f64();
            let m = (gx * gx + gy * gy).sqrt();
            if m > 0.0 {
                out[orientation_bin(gx, gy)][y * w + x] = m;
            }
        }
    }
    out
}

/// Bank responses followed by the orientation maps.
pub fn feature_channels<T: Real>(img: &GrayImage<T>, bank: &FilterBank) -> Vec<Vec<f64>> {
    let mut ch = bank.apply(img);
    ch.extend(orientation_channels(img));
    ch
}

/// Upper and lower halves of a window.
pub fn bank_cells(win: Rect) -> [Rect; 2] {
    let top = win.h / 2;
    [Rect::new(win.x, win.y, win.w, top), Rect::new(win.x, win.y + top, win.w, win.h - top)]
}

/// The 2 x 4 histogram cells, row-major.
pub fn hog_cells(win: Rect) -> [Rect; HOG_ROWS * HOG_COLS] {
    let mut out = [Rect::new(0, 0, 0, 0); HOG_ROWS * HOG_COLS];
    for r in 0..HOG_ROWS {
        let y0 = win.y + r * win.h / HOG_ROWS;
        let y1 = win.y + (r + 1) * win.h / HOG_ROWS;
        for c in 0..HOG_COLS {
            let x0 = win.x + c * win.w / HOG_COLS;
            let x1 = win.x + (c + 1) * win.w / HOG_COLS;
            out[r * HOG_COLS + c] = Rect::new(x0, y0, x1 - x0, y1 - y0);
        }
    }
    out
}

/// `v / sqrt(|v|^2 + eps^2)`.
pub fn l2_normalize(v: &mut [f64]) {
    let n = (v.iter().map(|x| x * x).sum::<f64>() + HOG_EPS * HOG_EPS).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Summed-area tables of every feature channel of one image.
#[derive(Debug, Clone)]
pub struct FeatureContext {
    integral: IntegralImage,
    bank_len: usize,
}

impl FeatureContext {
    pub fn new<T: Real>(img: &GrayImage<T>, bank: &FilterBank) -> Self {
        let ch = feature_channels(img, bank);
        let integral = IntegralImage::build(img.width(), img.height(), &ch).expect("channel maps match the image");
        FeatureContext { integral, bank_len: bank.len() }
    }

    pub fn width(&self) -> usize {
        self.integral.width()
    }

    pub fn height(&self) -> usize {
        self.integral.height()
    }

    pub fn feature_len(&self) -> usize {
        feature_len(self.bank_len)
    }

    pub fn extract(&self, win: Rect) -> Result<FeatureVector> {
        if !win.fits(self.width(), self.height()) {
            return Err(Error::WindowOutOfBounds([win.x, win.y, win.w, win.h]));
        }
        let mut f = Vec::with_capacity(self.feature_len());
        for cell in bank_cells(win) {
            let area = cell.area();
            for c in 0..self.bank_len {
                f.push(if area == 0 { 0.0 } else { self.integral.sum(c, cell) / area as f64 });
            }
        }
        for cell in hog_cells(win) {
            let start = f.len();
            for b in 0..HOG_BINS {
                f.push(self.integral.sum(self.bank_len + b, cell));
            }
            l2_normalize(&mut f[start..]);
        }
        Ok(f)
    }
}

/// Features of `win` in `img` with a freshly built context.
pub fn extract_features<T: Real>(img: &GrayImage<T>, bank: &FilterBank, win: Rect) -> Result<FeatureVector> {
    FeatureContext::new(img, bank).extract(win)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image() {
        let img = GrayImage::<f64>::filled(48, 24, 0.4);
        let bank = FilterBank::default();
        let f = extract_features(&img, &bank, Rect::new(8, 4, 32, 16)).unwrap();
        assert_eq!(f.len(), 106);
        for half in 0..2 {
            let m = &f[half * 17..(half + 1) * 17];
            for g in &m[..3] {
                assert!((g - 0.4).abs() < 1e-12);
            }
            for d in &m[3..] {
                assert!(d.abs() < 1e-12);
            }
        }
        assert!(f[34..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_ramp_fills_vertical_bin() {
        let img = GrayImage::<f64>::from_fn(40, 20, |_, y| y as f64 * 0.05);
        let f = extract_features(&img, &FilterBank::default(), Rect::new(4, 2, 32, 16)).unwrap();
        let vertical = orientation_bin(0.0, 1.0);
        assert_eq!(vertical, 4);
        for c in 0..8 {
            let h = &f[34 + c * HOG_BINS..34 + (c + 1) * HOG_BINS];
            for (b, v) in h.iter().enumerate() {
                if b == vertical {
                    assert!((v - 1.0).abs() < 1e-6);
                } else {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn cells_tile_the_window() {
        let w = Rect::new(3, 5, 33, 17);
        let cells = hog_cells(w);
        assert_eq!(cells.iter().map(|c| c.area()).sum::<usize>(), w.area());
        let [a, b] = bank_cells(w);
        assert_eq!(a.area() + b.area(), w.area());
    }

    #[test]
    fn out_of_bounds_window() {
        let img = GrayImage::<f64>::filled(10, 10, 0.0);
        assert!(extract_features(&img, &FilterBank::default(), Rect::new(5, 5, 6, 2)).is_err());
    }

    #[test]
    fn features_only_see_the_bank_radius() {
        let bank = FilterBank::default();
        let r = bank.radius();
        let base = GrayImage::<f64>::from_fn(96, 80, |x, y| ((x * 13 + y * 7) % 17) as f64 / 17.0);
        let win = Rect::new(30, 30, 32, 16);
        let f0 = extract_features(&base, &bank, win).unwrap();
        let mut far = base.clone();
        for y in 0..80 {
            for x in 0..96 {
                let inside_x = x + r >= win.x && x < win.x + win.w + r;
                let inside_y = y + r >= win.y && y < win.y + win.h + r;
                if !(inside_x && inside_y) {
                    far.set(x, y, 1.0 - far.get(x, y));
                }
            }
        }
        // summed-area lookups see far pixels through rounding only
        let diff = |g: Vec<f64>| g.iter().zip(&f0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff(extract_features(&far, &bank, win).unwrap()) < 1e-9);
        let mut near = base.clone();
        near.set(win.x - r, win.y + 3, 5.0);
        assert!(diff(extract_features(&near, &bank, win).unwrap()) > 1e-6);
    }

    #[test]
    fn orientation_bins() {
        assert_eq!(orientation_bin(1.0, 0.0), 0);
        assert_eq!(orientation_bin(-1.0, 0.0), 0);
        assert_eq!(orientation_bin(0.0, -1.0), 4);
        assert_eq!(orientation_bin(-1.0, 1e-12), 8);
    }
}
