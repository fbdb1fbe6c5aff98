//! Evaluation against annotated lines: vertical pixel distortion, angle
//! distortion, their penalized product, the share of good frames and the
//! shoulder-region overlap.

use serde::{Deserialize, Serialize};

use crate::baselines::LinePair;
use crate::error::{Error, Result};
use crate::learning::GroundTruthFrame;
use crate::scalar::Real;
use crate::voting::LineHypothesis;

/// A frame is good when both penalized distortions are within these bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptThresholds {
    pub bd_pen: f64,
    pub ln_pen: f64,
}

impl Default for AcceptThresholds {
    fn default() -> Self {
        AcceptThresholds { bd_pen: 10.0, ln_pen: 20.0 }
    }
}

/// Column order of [`MetricReport::csv_row`].
pub const CSV_HEADER: &str = "Bd_Pxl,Ld_Pxl,Bd_Ang,Ln_Ang,Bd_Pen,Ln_Pen,Accept_Ratio,Overlap_Score";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "Bd_Pxl")]
    pub bd_pxl: f64,
    #[serde(rename = "Ld_Pxl")]
    pub ln_pxl: f64,
    #[serde(rename = "Bd_Ang")]
    pub bd_ang: f64,
    #[serde(rename = "Ln_Ang")]
    pub ln_ang: f64,
    #[serde(rename = "Bd_Pen")]
    pub bd_pen: f64,
    #[serde(rename = "Ln_Pen")]
    pub ln_pen: f64,
    #[serde(rename = "Accept_Ratio")]
    pub accept_ratio: f64,
    #[serde(rename = "Overlap_Score")]
    pub overlap_score: f64,
}

impl MetricReport {
    pub fn csv_row(&self) -> String {
        let v = [
            self.bd_pxl,
            self.ln_pxl,
            self.bd_ang,
            self.ln_ang,
            self.bd_pen,
            self.ln_pen,
            self.accept_ratio,
            self.overlap_score,
        ];
        v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(",")
    }
}

/// Column order of [`FrameMetrics::csv_row`].
pub const FRAME_CSV_HEADER: &str = "frame,Bd_Pxl,Ld_Pxl,Bd_Ang,Ln_Ang,Bd_Pen,Ln_Pen,good,Overlap";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub bd_pxl: f64,
    pub ln_pxl: f64,
    pub bd_ang: f64,
    pub ln_ang: f64,
    pub bd_pen: f64,
    pub ln_pen: f64,
    pub good: bool,
    pub overlap: f64,
}

impl FrameMetrics {
    pub fn csv_row(&self) -> String {
        let v = [self.bd_pxl, self.ln_pxl, self.bd_ang, self.ln_ang, self.bd_pen, self.ln_pen];
        let nums: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
        format!("{},{},{},{:.6}", self.frame, nums.join(","), u8::from(self.good), self.overlap)
    }
}

/// Mean `|y_pred(x) - y_gt(x)|` over integer columns `0..width` where both
/// lines are inside `[0, height]`. `None` when no column qualifies or the
/// prediction is closer to vertical than horizontal.
pub fn vertical_distortion(pred: &LineHypothesis<f64>, gt: &LineHypothesis<f64>, width: usize, height: usize) -> Option<f64> {
    let h = height as f64;
    let inside = |y: f64| (0.0..=h).contains(&y);
    let mut sum = 0.0;
    let mut n = 0usize;
    for x in 0..width {
        let xf = x as f64;
        let yp = pred.y_at(xf)?;
        let Some(yg) = gt.y_at(xf) else { continue };
        if inside(yp) && inside(yg) {
            sum += (yp - yg).abs();
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// `max(1, angle) * pxl`.
pub fn penalized(pxl: f64, ang_deg: f64) -> f64 {
    ang_deg.max(1.0) * pxl
}

/// Shoulder mask: pixel centers (road frame) between the two lines.
fn between_lines(bd: &LineHypothesis<f64>, ln: &LineHypothesis<f64>, width: usize, height: usize) -> Vec<bool> {
    let h = height as f64;
    let mut m = vec![false; width * height];
    for x in 0..width {
        let xc = x as f64 + 0.5;
        let (Some(a), Some(b)) = (bd.y_at(xc), ln.y_at(xc)) else { continue };
        let (lo, hi) = (a.min(b), a.max(b));
        for yi in 0..height {
            let y = h - yi as f64 - 0.5;
            if lo <= y && y < hi {
                m[yi * width + x] = true;
            }
        }
    }
    m
}

/// Even-odd rule point-in-polygon.
fn in_polygon(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[(i + n - 1) % n];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

fn polygon_mask(poly: &[(f64, f64)], width: usize, height: usize) -> Vec<bool> {
    let h = height as f64;
    let mut m = vec![false; width * height];
    for yi in 0..height {
        for x in 0..width {
            m[yi * width + x] = in_polygon(poly, x as f64 + 0.5, h - yi as f64 - 0.5);
        }
    }
    m
}

/// Intersection over union of two masks; 1 when both are empty.
pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    let (mut i, mut u) = (0usize, 0usize);
    for (&p, &q) in a.iter().zip(b) {
        i += (p && q) as usize;
        u += (p || q) as usize;
    }
    if u == 0 {
        1.0
    } else {
        i as f64 / u as f64
    }
}

fn f64_line<T: Real>(l: &LineHypothesis<T>) -> LineHypothesis<f64> {
    LineHypothesis { theta: l.theta.as_f64(), r: l.r.as_f64() }
}

pub fn evaluate_frame<T: Real>(
    pred: &LinePair<T>,
    gt: &GroundTruthFrame<T>,
    width: usize,
    height: usize,
    thr: &AcceptThresholds,
) -> FrameMetrics {
    let (pb, pl) = (f64_line(&pred.bd), f64_line(&pred.ln));
    let (gb, gl) = (f64_line(&gt.bd), f64_line(&gt.ln));
    let max_pen = height as f64;
    let bd = vertical_distortion(&pb, &gb, width, height);
    let ln = vertical_distortion(&pl, &gl, width, height);
    let bd_ang = pb.angle_to(&gb).to_degrees();
    let ln_ang = pl.angle_to(&gl).to_degrees();
    let bd_pxl = bd.unwrap_or(max_pen);
    let ln_pxl = ln.unwrap_or(max_pen);
    let bd_pen = penalized(bd_pxl, bd_ang);
    let ln_pen = penalized(ln_pxl, ln_ang);
    let good = bd.is_some() && ln.is_some() && bd_pen <= thr.bd_pen && ln_pen <= thr.ln_pen;
    let det = between_lines(&pb, &pl, width, height);
    let truth = match &gt.shoulder {
        Some(poly) => {
            let p: Vec<(f64, f64)> = poly.iter().map(|(x, y)| (x.as_f64(), y.as_f64())).collect();
            polygon_mask(&p, width, height)
        }
        None => between_lines(&gb, &gl, width, height),
    };
    FrameMetrics {
        frame: gt.frame,
        bd_pxl,
        ln_pxl,
        bd_ang,
        ln_ang,
        bd_pen,
        ln_pen,
        good,
        overlap: iou(&det, &truth),
    }
}

/// Per-frame metrics averaged over the sequence.
pub fn evaluate<T: Real>(
    pred: &[LinePair<T>],
    truth: &[GroundTruthFrame<T>],
    width: usize,
    height: usize,
    thr: &AcceptThresholds,
) -> Result<(MetricReport, Vec<FrameMetrics>)> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension { expected: truth.len(), got: pred.len() });
    }
    if truth.is_empty() {
        return Err(Error::Config("nothing to evaluate: empty sequence".into()));
    }
    let frames: Vec<FrameMetrics> = pred
        .iter()
        .zip(truth)
        .map(|(p, g)| evaluate_frame(p, g, width, height, thr))
        .collect();
    let n = frames.len() as f64;
    let mean = |f: fn(&FrameMetrics) -> f64| frames.iter().map(f).sum::<f64>() / n;
    let report = MetricReport {
        bd_pxl: mean(|m| m.bd_pxl),
        ln_pxl: mean(|m| m.ln_pxl),
        bd_ang: mean(|m| m.bd_ang),
        ln_ang: mean(|m| m.ln_ang),
        bd_pen: mean(|m| m.bd_pen),
        ln_pen: mean(|m| m.ln_pen),
        accept_ratio: mean(|m| if m.good { 1.0 } else { 0.0 }),
        overlap_score: mean(|m| m.overlap),
    };
    Ok((report, frames))
}
