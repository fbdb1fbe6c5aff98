//! Reference trackers the structured model is compared against.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::inference::{FrameObservation, FrameResult};
use crate::potentials::{ModelParams, Track};
use crate::scalar::Real;
use crate::voting::{argmax_vote, argmax_vote_constrained, HypothesisGrid, LineHypothesis, Peak, VoteConfig};

/// Border and lane estimate of one frame, whatever produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinePair<T> {
    pub frame: usize,
    pub bd: LineHypothesis<T>,
    pub ln: LineHypothesis<T>,
}

impl<T: Real> LinePair<T> {
    pub fn line(&self, track: Track) -> &LineHypothesis<T> {
        match track {
            Track::Border => &self.bd,
            Track::Lane => &self.ln,
        }
    }
}

/// Selected pairs of a structured run.
pub fn structured_pairs<T: Real>(results: &[FrameResult<T>]) -> Vec<LinePair<T>> {
    results
        .iter()
        .map(|r| LinePair { frame: r.frame(), bd: r.state.bd.line, ln: r.state.ln.line })
        .collect()
}

/// Independent per-frame Hough peaks of the detector voters.
pub fn baseline1<T: Real>(obs: &[FrameObservation<T>], grid: &HypothesisGrid<T>, cfg: &VoteConfig<T>) -> Vec<LinePair<T>> {
    obs.iter()
        .map(|o| LinePair {
            frame: o.index,
            bd: argmax_vote(&o.bd_voters, grid, cfg).line,
            ln: argmax_vote(&o.ln_voters, grid, cfg).line,
        })
        .collect()
}

/// Online form of [`baseline2`] and [`baseline3`].
#[derive(Debug, Clone)]
pub struct WindowedTracker<T> {
    params: ModelParams<T>,
    gradient_fallback: bool,
    prev: Option<(Peak<T>, Peak<T>)>,
}

impl<T: Real> WindowedTracker<T> {
    pub fn new(grid: &HypothesisGrid<T>, params: &ModelParams<T>, gradient_fallback: bool) -> Self {
        WindowedTracker { params: params.floored(grid), gradient_fallback, prev: None }
    }

    pub fn step(&mut self, o: &FrameObservation<T>, grid: &HypothesisGrid<T>) -> Result<LinePair<T>> {
        let p = &self.params;
        let cfg = VoteConfig { sigma: p.sigma };
        let cur = match &self.prev {
            None => (argmax_vote(&o.bd_voters, grid, &cfg), argmax_vote(&o.ln_voters, grid, &cfg)),
            Some((pb, pl)) => {
                let step = |track: Track, last: &Peak<T>| -> Result<Peak<T>> {
                    let (lt, lr) = p.window(track);
                    let mut best = argmax_vote_constrained(o.type1(track), grid, &cfg, &last.line, lt, lr)?;
                    if self.gradient_fallback && best.weight == T::zero() {
                        best = argmax_vote_constrained(&o.grad_voters, grid, &cfg, &last.line, lt, lr)?;
                    }
                    // no evidence in the window: stay put rather than drift to the tie-break cell
                    if best.weight == T::zero() {
                        return Ok(*last);
                    }
                    Ok(best)
                };
                (step(Track::Border, pb)?, step(Track::Lane, pl)?)
            }
        };
        self.prev = Some(cur);
        Ok(LinePair { frame: o.index, bd: cur.0.line, ln: cur.1.line })
    }
}

fn windowed<T: Real>(
    obs: &[FrameObservation<T>],
    grid: &HypothesisGrid<T>,
    params: &ModelParams<T>,
    gradient_fallback: bool,
) -> Result<Vec<LinePair<T>>> {
    let mut t = WindowedTracker::new(grid, params, gradient_fallback);
    obs.iter().map(|o| t.step(o, grid)).collect()
}

/// Hough peaks restricted to the inter-frame window around the previous
/// output; frame 1 is unconstrained. A window without any vote keeps the
/// previous line.
pub fn baseline2<T: Real>(
    obs: &[FrameObservation<T>],
    grid: &HypothesisGrid<T>,
    params: &ModelParams<T>,
) -> Result<Vec<LinePair<T>>> {
    windowed(obs, grid, params, false)
}

/// [`baseline2`], falling back to windowed gradient voting on frames where
/// the detector voters give the window zero vote.
pub fn baseline3<T: Real>(
    obs: &[FrameObservation<T>],
    grid: &HypothesisGrid<T>,
    params: &ModelParams<T>,
) -> Result<Vec<LinePair<T>>> {
    windowed(obs, grid, params, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{generate, presets, Event, SceneScript, TrackSel};

    fn grid() -> HypothesisGrid<f64> {
        HypothesisGrid::for_image_height(120)
    }

    fn same(a: &LineHypothesis<f64>, b: &LineHypothesis<f64>) -> bool {
        (a.theta - b.theta).abs() < 1e-9 && (a.r - b.r).abs() < 1e-9
    }

    fn quiet(frames: usize) -> SceneScript {
        SceneScript { frames, jitter: 0.0, ..SceneScript::default() }
    }

    #[test]
    fn clean_sequences_recover_truth() {
        let q = generate::<f64>(&quiet(25), 1).unwrap();
        let p = ModelParams::default();
        let b1 = baseline1(&q.observations, &grid(), &VoteConfig::default());
        let b2 = baseline2(&q.observations, &grid(), &p).unwrap();
        let b3 = baseline3(&q.observations, &grid(), &p).unwrap();
        for (i, t) in q.truth.iter().enumerate() {
            assert!(same(&b1[i].bd, &t.bd) && same(&b1[i].ln, &t.ln), "b1 frame {}", i + 1);
            assert_eq!(b2[i], b3[i]);
        }
        // baseline2 can only follow truth that stays inside its window
        let p_wide = ModelParams { lambda_bd_r: 10.0, lambda_ln_r: 10.0, lambda_bd_theta: 0.1, lambda_ln_theta: 0.1, ..p };
        let b2 = baseline2(&q.observations, &grid(), &p_wide).unwrap();
        assert!(q.truth.iter().zip(&b2).all(|(t, b)| same(&b.bd, &t.bd) && same(&b.ln, &t.ln)));
    }

    #[test]
    fn baseline1_dropout_falls_to_first_cell() {
        let s = SceneScript { events: vec![Event::Dropout { track: TrackSel::Border, from: 3, to: 4 }], ..quiet(6) };
        let q = generate::<f64>(&s, 2).unwrap();
        let g = grid();
        let b1 = baseline1(&q.observations, &g, &VoteConfig::default());
        assert_eq!(b1[2].bd, g.line(crate::voting::Cell { ti: 0, ri: 0 }));
    }

    #[test]
    fn baseline1_follows_outlier_line() {
        let mut q = generate::<f64>(&quiet(2), 3).unwrap();
        let fake = LineHypothesis::new(95f64.to_radians(), 20.0);
        for k in 0..200 {
            let x = k as f64 * 0.8;
            q.observations[1].bd_voters.push(crate::voting::VotingPoint::unit(x, fake.y_at(x).unwrap()));
        }
        let b1 = baseline1(&q.observations, &grid(), &VoteConfig::default());
        assert!(same(&b1[1].bd, &fake));
    }

    #[test]
    fn baseline2_lags_after_jump_and_stays_in_window() {
        let s = SceneScript {
            drift_r: 0.0,
            drift_theta: 0.0,
            gap_drift_r: 0.0,
            gap_drift_theta: 0.0,
            ..presets::entrance(40, 10, 30.0)
        };
        let q = generate::<f64>(&s, 4).unwrap();
        let p = ModelParams::default();
        let b2 = baseline2(&q.observations, &grid(), &p).unwrap();
        for w in b2.windows(2) {
            assert!((w[1].bd.r - w[0].bd.r).abs() < p.lambda_bd_r);
            assert!((w[1].bd.theta - w[0].bd.theta).abs() < p.lambda_bd_theta);
        }
        // 30 px at under 3 px per frame
        assert!((b2[19].bd.r - q.truth[19].bd.r).abs() > 5.0);
    }

    #[test]
    fn baseline2_dropout_holds() {
        let s = SceneScript { events: vec![Event::Dropout { track: TrackSel::Lane, from: 5, to: 9 }], ..quiet(12) };
        let q = generate::<f64>(&s, 5).unwrap();
        let b2 = baseline2(&q.observations, &grid(), &ModelParams::default()).unwrap();
        for f in 5..=9 {
            assert_eq!(b2[f - 1].ln, b2[3].ln);
        }
    }

    #[test]
    fn baseline3_tracks_edges_through_dropout() {
        let p = ModelParams::default();
        let s = SceneScript {
            render: true,
            render_noise: 0.0,
            events: vec![Event::Dropout { track: TrackSel::Border, from: 5, to: 14 }],
            ..quiet(15)
        };
        let q = generate::<f64>(&s, 6).unwrap();
        let b3 = baseline3(&q.observations, &grid(), &p).unwrap();
        let b2 = baseline2(&q.observations, &grid(), &p).unwrap();
        let err = |v: &[LinePair<f64>]| (5..=14).map(|f| (v[f - 1].bd.r - q.truth[f - 1].bd.r).abs()).sum::<f64>();
        assert!(err(&b3) < err(&b2), "{} vs {}", err(&b3), err(&b2));

        let edgeless = SceneScript {
            events: vec![
                Event::Dropout { track: TrackSel::Border, from: 5, to: 9 },
                Event::Edgeless { track: TrackSel::Border, from: 5, to: 9 },
            ],
            grad_noise: 0,
            grad_density: 0,
            ..quiet(10)
        };
        let q = generate::<f64>(&edgeless, 7).unwrap();
        assert_eq!(baseline3(&q.observations, &grid(), &p).unwrap(), baseline2(&q.observations, &grid(), &p).unwrap());
    }
}
