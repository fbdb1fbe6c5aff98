//! Per-frame wall-clock timing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::{detect_frame, DetectorModel, FilterBank, WindowSpec};
use crate::image::GrayImage;
use crate::inference::FrameObservation;
use crate::kalman::KalmanConfig;
use crate::potentials::ModelParams;
use crate::scalar::Real;
use crate::trackers::{OnlineTracker, TrackerKind};
use crate::voting::HypothesisGrid;

/// Milliseconds. Percentiles use the nearest-rank rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn percentiles(samples: &[f64]) -> Option<Percentiles> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
    Some(Percentiles {
        p50: rank(0.5),
        p90: rank(0.9),
        p99: rank(0.99),
        max: s[s.len() - 1],
        mean: s.iter().sum::<f64>() / s.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub tracker: TrackerKind,
    pub frames: usize,
    pub grid_cells: usize,
    pub inference_ms: Percentiles,
    pub detect_inference_ms: Option<Percentiles>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Tracker step times on precomputed voters.
pub fn time_inference<T: Real>(
    kind: TrackerKind,
    obs: &[FrameObservation<T>],
    grid: &HypothesisGrid<T>,
    params: &ModelParams<T>,
    kalman: &KalmanConfig<T>,
) -> Result<Vec<f64>> {
    let mut t = OnlineTracker::new(kind, grid, params, kalman);
    obs.iter()
        .map(|o| {
            let start = Instant::now();
            t.step(o)?;
            Ok(ms(start))
        })
        .collect()
}

/// Detection of both voter types followed by a tracker step, per frame.
#[allow(clippy::too_many_arguments)]
pub fn time_detect_inference<T: Real>(
    kind: TrackerKind,
    images: &[GrayImage<T>],
    bank: &FilterBank,
    spec: &WindowSpec,
    detectors: &[DetectorModel; 2],
    grid: &HypothesisGrid<T>,
    params: &ModelParams<T>,
    kalman: &KalmanConfig<T>,
) -> Result<Vec<f64>> {
    let mut t = OnlineTracker::new(kind, grid, params, kalman);
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let start = Instant::now();
            let o = detect_frame(i + 1, img, bank, spec, &detectors[0], &detectors[1])?;
            t.step(&o)?;
            Ok(ms(start))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let s: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        let p = percentiles(&s).unwrap();
        assert_eq!((p.p50, p.p90, p.p99, p.max), (50.0, 90.0, 99.0, 100.0));
        assert_eq!(p.mean, 50.5);
        assert_eq!(percentiles(&[3.0]).unwrap().p50, 3.0);
        assert!(percentiles(&[]).is_none());
    }
}
