//! Common frame-by-frame interface over the structured tracker and the
//! reference trackers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{baseline1, LinePair, WindowedTracker};
use crate::error::{Error, Result};
use crate::inference::{init_frame, step_frame, FrameObservation, FrameResult};
use crate::kalman::{KalmanConfig, KalmanPair};
use crate::potentials::ModelParams;
use crate::scalar::Real;
use crate::voting::{HypothesisGrid, VoteConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackerKind {
    Structured,
    Baseline1,
    Baseline2,
    Baseline3,
    Kalman,
}

impl TrackerKind {
    pub const ALL: [TrackerKind; 5] =
        [TrackerKind::Structured, TrackerKind::Baseline1, TrackerKind::Baseline2, TrackerKind::Baseline3, TrackerKind::Kalman];

    pub fn name(self) -> &'static str {
        match self {
            TrackerKind::Structured => "structured",
            TrackerKind::Baseline1 => "baseline1",
            TrackerKind::Baseline2 => "baseline2",
            TrackerKind::Baseline3 => "baseline3",
            TrackerKind::Kalman => "kalman",
        }
    }
}

impl fmt::Display for TrackerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrackerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrackerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown tracker {s:?} (expected structured, baseline1, baseline2, baseline3 or kalman)")))
    }
}

#[derive(Debug, Clone)]
enum State<T> {
    Structured(Option<FrameResult<T>>),
    Baseline1,
    Windowed(WindowedTracker<T>),
    Kalman(KalmanPair<T>),
}

/// One tracker fed one observation at a time.
#[derive(Debug, Clone)]
pub struct OnlineTracker<T> {
    kind: TrackerKind,
    grid: HypothesisGrid<T>,
    params: ModelParams<T>,
    state: State<T>,
}

impl<T: Real> OnlineTracker<T> {
    pub fn new(kind: TrackerKind, grid: &HypothesisGrid<T>, params: &ModelParams<T>, kalman: &KalmanConfig<T>) -> Self {
        let state = match kind {
            TrackerKind::Structured => State::Structured(None),
            TrackerKind::Baseline1 => State::Baseline1,
            TrackerKind::Baseline2 => State::Windowed(WindowedTracker::new(grid, params, false)),
            TrackerKind::Baseline3 => State::Windowed(WindowedTracker::new(grid, params, true)),
            TrackerKind::Kalman => State::Kalman(KalmanPair::new(*kalman)),
        };
        OnlineTracker { kind, grid: grid.clone(), params: *params, state }
    }

    pub fn kind(&self) -> TrackerKind {
        self.kind
    }

    pub fn step(&mut self, o: &FrameObservation<T>) -> Result<LinePair<T>> {
        let cfg = VoteConfig { sigma: self.params.sigma };
        match &mut self.state {
            State::Structured(prev) => {
                let res = match prev.as_ref() {
                    None => init_frame(o, &self.grid, &self.params),
                    Some(p) => step_frame(&p.state, o, &self.grid, &self.params),
                }
                .map_err(|e| e.at_frame(o.index))?;
                let pair = LinePair { frame: res.frame(), bd: res.state.bd.line, ln: res.state.ln.line };
                *prev = Some(res);
                Ok(pair)
            }
            State::Baseline1 => Ok(baseline1(std::slice::from_ref(o), &self.grid, &cfg)[0]),
            State::Windowed(t) => t.step(o, &self.grid),
            State::Kalman(k) => Ok(k.step(o, &self.grid, &cfg)),
        }
    }

    /// Full record of the last structured step.
    pub fn last_result(&self) -> Option<&FrameResult<T>> {
        match &self.state {
            State::Structured(r) => r.as_ref(),
            _ => None,
        }
    }
}

/// Runs `kind` over a whole sequence.
pub fn run_tracker<T: Real>(
    kind: TrackerKind,
    obs: &[FrameObservation<T>],
    grid: &HypothesisGrid<T>,
    params: &ModelParams<T>,
    kalman: &KalmanConfig<T>,
) -> Result<Vec<LinePair<T>>> {
    let mut t = OnlineTracker::new(kind, grid, params, kalman);
    obs.iter().map(|o| t.step(o)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{baseline2, baseline3, structured_pairs};
    use crate::inference::run_sequence;
    use crate::kalman::kalman_track;
    use crate::simulation::{generate, presets};

    #[test]
    fn online_matches_batch() {
        let q = generate::<f64>(&presets::stress(1), 4).unwrap();
        let obs = &q.observations[..60];
        let grid = HypothesisGrid::for_image_height(120);
        let p = ModelParams::default();
        let k = KalmanConfig::default();
        let cfg = VoteConfig { sigma: p.sigma };
        let batch = [
            structured_pairs(&run_sequence(obs, &grid, &p).unwrap()),
            baseline1(obs, &grid, &cfg),
            baseline2(obs, &grid, &p).unwrap(),
            baseline3(obs, &grid, &p).unwrap(),
            kalman_track(obs, &grid, &cfg, &k),
        ];
        for (kind, b) in TrackerKind::ALL.into_iter().zip(batch) {
            assert_eq!(run_tracker(kind, obs, &grid, &p, &k).unwrap(), b, "{kind}");
        }
    }

    #[test]
    fn names_round_trip() {
        for k in TrackerKind::ALL {
            assert_eq!(k.name().parse::<TrackerKind>().unwrap(), k);
        }
        assert!("baseline4".parse::<TrackerKind>().is_err());
    }
}
