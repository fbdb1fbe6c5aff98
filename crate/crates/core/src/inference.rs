//! Online MAP inference over the structured voting model.
//!
//! Frame 1 is a joint search over border and lane lines under the coupled
//! structure constraint. Every later frame runs four steps against the
//! previous selection:
//!
//! 1. build three candidates per track (free, windowed Type-1, windowed
//!    gradient);
//! 2. let each track's decision tree pick a candidate, lane first;
//! 3. if the pair violates the structure constraint, regenerate the border
//!    candidates restricted to cells compatible with the chosen lane line;
//! 4. run the border tree again on the regenerated candidates.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{structure_holds, tree_select, CandidateSet, ModelParams, Mode, Track};
use crate::scalar::Real;
use crate::voting::{
    argmax_vote, argmax_vote_constrained, argmax_vote_where, argmax_vote_window_where, in_window, vote_table, Cell,
    HypothesisGrid, LineHypothesis, Peak, VoteConfig, VotingPoint,
};

/// Number of past frames whose mean Type-1 voter weight feeds the gradient
/// calibration.
const CALIBRATION_FRAMES: usize = 10;
const CALIBRATION_FLOOR: f64 = 1e-6;

/// All voters of one frame, in road-frame coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameObservation<T> {
    pub index: usize,
    pub bd_voters: Vec<VotingPoint<T>>,
    pub ln_voters: Vec<VotingPoint<T>>,
    pub grad_voters: Vec<VotingPoint<T>>,
}

impl<T: Real> FrameObservation<T> {
    pub fn empty(index: usize) -> Self {
        FrameObservation { index, bd_voters: Vec::new(), ln_voters: Vec::new(), grad_voters: Vec::new() }
    }

    pub fn type1(&self, track: Track) -> &[VotingPoint<T>] {
        match track {
            Track::Border => &self.bd_voters,
            Track::Lane => &self.ln_voters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState<T> {
    pub frame: usize,
    pub bd: Peak<T>,
    pub ln: Peak<T>,
    pub cands_bd: Option<CandidateSet<T>>,
    pub cands_ln: Option<CandidateSet<T>>,
    /// Mean Type-1 voter weight of recent frames that had any.
    type1_means: VecDeque<T>,
}

impl<T: Real> TrackState<T> {
    pub fn selected(&self, track: Track) -> &Peak<T> {
        match track {
            Track::Border => &self.bd,
            Track::Lane => &self.ln,
        }
    }

    pub fn candidates(&self, track: Track) -> Option<&CandidateSet<T>> {
        match track {
            Track::Border => self.cands_bd.as_ref(),
            Track::Lane => self.cands_ln.as_ref(),
        }
    }

    fn recent_type1_mean(&self) -> T {
        if self.type1_means.is_empty() {
            return T::one();
        }
        let n = T::from_usize_lossy(self.type1_means.len());
        self.type1_means.iter().copied().fold(T::zero(), |a, b| a + b) / n
    }

    fn remember_type1(&mut self, obs: &FrameObservation<T>) {
        let n = obs.bd_voters.len() + obs.ln_voters.len();
        if n == 0 {
            return;
        }
        let total = obs.bd_voters.iter().chain(&obs.ln_voters).fold(T::zero(), |a, v| a + v.weight);
        if self.type1_means.len() == CALIBRATION_FRAMES {
            self.type1_means.pop_front();
        }
        self.type1_means.push_back(total / T::from_usize_lossy(n));
    }
}

/// Vote weights around one back perturbation, kept for learning
/// `lambda_mode`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord<T> {
    /// Largest candidate weight before the border candidates were redrawn.
    pub pre_best: T,
    /// Weight of the border candidate finally selected.
    pub post_selected: T,
}

impl<T: Real> PerturbationRecord<T> {
    pub fn loss(&self) -> T {
        self.pre_best - self.post_selected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult<T> {
    pub state: TrackState<T>,
    /// `None` on frame 1, which has no candidate machinery.
    pub mode_bd: Option<Mode>,
    pub mode_ln: Option<Mode>,
    /// What the border tree chose on the final candidate set. Differs from
    /// `mode_bd` only when the tree pointed at an emptied slot.
    pub tree_bd: Option<Mode>,
    pub tree_ln: Option<Mode>,
    /// Back perturbation ran.
    pub perturbed: bool,
    /// Border candidates from Step 1, before any perturbation.
    pub step1_bd: Option<CandidateSet<T>>,
    pub perturbation: Option<PerturbationRecord<T>>,
    /// Zero evidence: frame 1 with no votes, or a track held in place.
    pub degenerate: bool,
    /// Factor applied to gradient votes before the tree.
    pub gradient_scale: T,
}

impl<T: Real> FrameResult<T> {
    pub fn frame(&self) -> usize {
        self.state.frame
    }

    pub fn mode(&self, track: Track) -> Option<Mode> {
        match track {
            Track::Border => self.mode_bd,
            Track::Lane => self.mode_ln,
        }
    }
}

/// Joint frame-1 estimate: lane line by unconstrained voting, then the best
/// border line compatible with it; if none is, an exact search over all
/// grid pairs.
pub fn init_frame<T: Real>(
    obs: &FrameObservation<T>,
    grid: &HypothesisGrid<T>,
    params: &ModelParams<T>,
) -> Result<FrameResult<T>> {
    if obs.index != 1 {
        return Err(Error::FrameOrder { expected: 1, got: obs.index });
    }
    let p = params.floored(grid);
    let cfg = VoteConfig { sigma: p.sigma };
    let ln = argmax_vote(&obs.ln_voters, grid, &cfg);
    let (bd, ln) = match argmax_vote_where(&obs.bd_voters, grid, &cfg, |_, l| structure_holds(l, &ln.line, &p)) {
        Some(bd) => (bd, ln),
        None => joint_search(&obs.bd_voters, &obs.ln_voters, grid, &p)?,
    };
    let degenerate = bd.weight == T::zero() && ln.weight == T::zero();
    let mut state = TrackState { frame: 1, bd, ln, cands_bd: None, cands_ln: None, type1_means: VecDeque::new() };
    state.remember_type1(obs);
    Ok(FrameResult {
        state,
        mode_bd: None,
        mode_ln: None,
        tree_bd: None,
        tree_ln: None,
        perturbed: false,
        step1_bd: None,
        perturbation: None,
        degenerate,
        gradient_scale: T::one(),
    })
}

/// Exhaustive maximization of `vote_bd + vote_ln` over structure-compatible
/// grid pairs. Ties keep the earliest lane cell, then the earliest border
/// cell.
pub fn joint_search<T: Real>(
    bd_voters: &[VotingPoint<T>],
    ln_voters: &[VotingPoint<T>],
    grid: &HypothesisGrid<T>,
    params: &ModelParams<T>,
) -> Result<(Peak<T>, Peak<T>)> {
    let cfg = VoteConfig { sigma: params.sigma };
    let tb = vote_table(bd_voters, grid, &cfg);
    let tl = vote_table(ln_voters, grid, &cfg);
    let cells: Vec<Cell> = grid.cells().collect();
    let bd_max = tb.iter().copied().fold(T::neg_infinity(), T::max);
    let mut ln_order: Vec<usize> = (0..cells.len()).collect();
    ln_order.sort_by(|&a, &b| tl[b].partial_cmp(&tl[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut best: Option<(T, usize, usize)> = None;
    for &li in &ln_order {
        if let Some((w, _, _)) = best {
            if tl[li] + bd_max < w {
                break;
            }
        }
        let ln_line = grid.line(cells[li]);
        for (bi, &cell) in cells.iter().enumerate() {
            let total = tl[li] + tb[bi];
            if best.is_some_and(|(w, bl, bb)| total < w || (total == w && (li, bi) >= (bl, bb))) {
                continue;
            }
            if structure_holds(&grid.line(cell), &ln_line, params) {
                best = Some((total, li, bi));
            }
        }
    }
    let (_, li, bi) = best.ok_or(Error::InitInfeasible)?;
    let peak = |i: usize, t: &[T]| Peak { cell: cells[i], line: grid.line(cells[i]), weight: t[i] };
    Ok((peak(bi, &tb), peak(li, &tl)))
}

/// Step-1 candidates for one track around the previous selection `prev`.
/// `gradient_scale` multiplies the gradient candidate's weight.
#[allow(clippy::too_many_arguments)]
pub fn generate_candidates<T: Real>(
    prev: &LineHypothesis<T>,
    type1: &[VotingPoint<T>],
    grad: &[VotingPoint<T>],
    grid: &HypothesisGrid<T>,
    params: &ModelParams<T>,
    lambda_theta: T,
    lambda_r: T,
    gradient_scale: T,
) -> Result<CandidateSet<T>> {
    let cfg = VoteConfig { sigma: params.sigma };
    let c1 = argmax_vote(type1, grid, &cfg);
    let c2 = argmax_vote_constrained(type1, grid, &cfg, prev, lambda_theta, lambda_r)?;
    let mut c3 = argmax_vote_constrained(grad, grid, &cfg, prev, lambda_theta, lambda_r)?;
    c3.weight = c3.weight * gradient_scale;
    Ok(CandidateSet::new(c1, c2, c3))
}

/// Border candidates redrawn so every one of them satisfies the structure
/// constraint with `lane`. A windowed slot with no compatible cell is left
/// empty; `None` means no compatible cell exists anywhere on the grid.
#[allow(clippy::too_many_arguments)]
pub fn perturb_border_candidates<T: Real>(
    prev: &LineHypothesis<T>,
    type1: &[VotingPoint<T>],
    grad: &[VotingPoint<T>],
    lane: &LineHypothesis<T>,
    grid: &HypothesisGrid<T>,
    params: &ModelParams<T>,
    gradient_scale: T,
) -> Option<CandidateSet<T>> {
    let cfg = VoteConfig { sigma: params.sigma };
    let (lt, lr) = params.window(Track::Border);
    let ok = |_: Cell, l: &LineHypothesis<T>| structure_holds(l, lane, params);
    let c1 = argmax_vote_where(type1, grid, &cfg, ok)?;
    let c2 = argmax_vote_window_where(type1, grid, &cfg, prev, lt, lr, ok);
    let c3 = argmax_vote_window_where(grad, grid, &cfg, prev, lt, lr, ok).map(|mut c| {
        c.weight = c.weight * gradient_scale;
        c
    });
    Some(CandidateSet { slots: [Some(c1), c2, c3] })
}

fn gradient_scale<T: Real>(state: &TrackState<T>, obs: &FrameObservation<T>, params: &ModelParams<T>) -> T {
    if !params.calibrate_gradient || obs.grad_voters.is_empty() {
        return T::one();
    }
    let n = T::from_usize_lossy(obs.grad_voters.len());
    let grad_mean = obs.grad_voters.iter().fold(T::zero(), |a, v| a + v.weight) / n;
    if !(grad_mean > T::zero()) {
        return T::one();
    }
    (state.recent_type1_mean() / grad_mean).max(T::lit(CALIBRATION_FLOOR))
}

fn hold<T: Real>(prev: &Peak<T>) -> Peak<T> {
    Peak { weight: T::zero(), ..*prev }
}

/// Tree selection with the zero-evidence rule: when all three weights are
/// zero the previous line is held and reported as the windowed mode.
fn select<T: Real>(cands: &mut CandidateSet<T>, prev: &Peak<T>, params: &ModelParams<T>, track: Track) -> (Mode, Mode, bool) {
    let phis = cands.phis();
    if phis.iter().all(|w| *w == T::zero()) && cands.slots[Mode::Tracked.slot()].is_some() {
        cands.slots[Mode::Tracked.slot()] = Some(hold(prev));
        return (Mode::Tracked, Mode::Tracked, true);
    }
    let tree = tree_select(phis, params.tree(track));
    let mode = if cands.get(tree).is_some() { tree } else { Mode::Free };
    (tree, mode, false)
}

/// Grid cell compatible with `lane` closest to `prev` (index distance),
/// preferring cells inside the inter-frame window.
fn nearest_compatible<T: Real>(
    prev: &Peak<T>,
    lane: &LineHypothesis<T>,
    grid: &HypothesisGrid<T>,
    params: &ModelParams<T>,
) -> Option<(Peak<T>, bool)> {
    let (lt, lr) = params.window(Track::Border);
    grid.cells()
        .filter_map(|c| {
            let line = grid.line(c);
            structure_holds(&line, lane, params).then(|| {
                let inside = in_window(&line, &prev.line, lt, lr);
                let dist = c.ti.abs_diff(prev.cell.ti) + c.ri.abs_diff(prev.cell.ri);
                ((!inside, dist, c), Peak { cell: c, line, weight: T::zero() }, inside)
            })
        })
        .min_by(|a, b| a.0.cmp(&b.0))
        .map(|(_, p, inside)| (p, inside))
}

/// One incremental update.
pub fn step_frame<T: Real>(
    state: &TrackState<T>,
    obs: &FrameObservation<T>,
    grid: &HypothesisGrid<T>,
    params: &ModelParams<T>,
) -> Result<FrameResult<T>> {
    let frame = state.frame + 1;
    if obs.index != frame {
        return Err(Error::FrameOrder { expected: frame, got: obs.index });
    }
    let p = params.floored(grid);
    let mut next = state.clone();
    next.frame = frame;
    next.remember_type1(obs);
    let scale = gradient_scale(&next, obs, &p);

    // Step 1
    let cands = |track: Track| {
        let (lt, lr) = p.window(track);
        generate_candidates(&state.selected(track).line, obs.type1(track), &obs.grad_voters, grid, &p, lt, lr, scale)
    };
    let mut cands_ln = cands(Track::Lane)?;
    let mut cands_bd = cands(Track::Border)?;
    let step1_bd = cands_bd;

    // Step 2, lane first
    let (tree_ln, mode_ln, held_ln) = select(&mut cands_ln, &state.ln, &p, Track::Lane);
    let (mut tree_bd, mut mode_bd, mut held_bd) = select(&mut cands_bd, &state.bd, &p, Track::Border);
    let ln = *cands_ln.get(mode_ln).expect("selected slot is filled");
    let mut bd = *cands_bd.get(mode_bd).expect("selected slot is filled");

    // Steps 3 and 4
    let mut perturbed = false;
    let mut perturbation = None;
    if !structure_holds(&bd.line, &ln.line, &p) {
        perturbed = true;
        let pre_best = cands_bd.phis().into_iter().fold(T::zero(), T::max);
        let mut redrawn = perturb_border_candidates(
            &state.bd.line,
            &obs.bd_voters,
            &obs.grad_voters,
            &ln.line,
            grid,
            &p,
            scale,
        )
        .ok_or(Error::ConstraintInfeasible { frame })?;
        if redrawn.phis().iter().all(|w| *w == T::zero()) {
            // nothing to vote with: move the border as little as possible
            let (near, inside) = nearest_compatible(&state.bd, &ln.line, grid, &p).ok_or(Error::ConstraintInfeasible { frame })?;
            let mode = if inside { Mode::Tracked } else { Mode::Free };
            redrawn.slots[mode.slot()] = Some(near);
            tree_bd = mode;
            mode_bd = mode;
            held_bd = true;
        } else {
            tree_bd = tree_select(redrawn.phis(), &p.tree_bd);
            mode_bd = if redrawn.get(tree_bd).is_some() { tree_bd } else { Mode::Free };
            held_bd = false;
        }
        bd = *redrawn.get(mode_bd).expect("selected slot is filled");
        cands_bd = redrawn;
        perturbation = Some(PerturbationRecord { pre_best, post_selected: bd.weight });
    }
    debug_assert!(structure_holds(&bd.line, &ln.line, &p));

    next.bd = bd;
    next.ln = ln;
    next.cands_bd = Some(cands_bd);
    next.cands_ln = Some(cands_ln);
    Ok(FrameResult {
        state: next,
        mode_bd: Some(mode_bd),
        mode_ln: Some(mode_ln),
        tree_bd: Some(tree_bd),
        tree_ln: Some(tree_ln),
        perturbed,
        step1_bd: Some(step1_bd),
        perturbation,
        degenerate: held_bd || held_ln,
        gradient_scale: scale,
    })
}

/// Initializes on the first observation and folds [`step_frame`] over the
/// rest. Errors carry the frame they occurred on.
pub fn run_sequence<T: Real>(
    observations: &[FrameObservation<T>],
    grid: &HypothesisGrid<T>,
    params: &ModelParams<T>,
) -> Result<Vec<FrameResult<T>>> {
    let mut out: Vec<FrameResult<T>> = Vec::with_capacity(observations.len());
    for (i, obs) in observations.iter().enumerate() {
        let res = match out.last() {
            None => init_frame(obs, grid, params),
            Some(prev) => step_frame(&prev.state, obs, grid, params),
        };
        out.push(res.map_err(|e| e.at_frame(i + 1))?);
    }
    Ok(out)
}
