//! Line parameterization, weighted Hough voting and grid search.
//!
//! A line is `sin(theta) * y + cos(theta) * x = r`. Votes are Gaussian in the
//! signed residual of each voting point, so a hypothesis collects
//! `sum_i w_i * exp(-res_i^2 / (2 sigma^2))`.
//!
//! Lines and voters consumed by the tracker live in the *road frame*: x grows
//! to the right and y grows upward from the bottom edge of the image (the
//! vehicle side). [`RoadFrame`] converts from image pixels.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineHypothesis<T> {
    pub theta: T,
    pub r: T,
}

impl<T: Real> LineHypothesis<T> {
    /// Builds a normalized hypothesis: `theta` wrapped into `[0, pi)` with the
    /// sign of `r` flipped when the normal is reversed.
    pub fn new(theta: T, r: T) -> Self {
        let pi = T::PI();
        let mut theta = theta % (pi + pi);
        let mut r = r;
        if theta < T::zero() {
            theta = theta + pi + pi;
        }
        if theta >= pi {
            theta = theta - pi;
            r = -r;
        }
        LineHypothesis { theta, r }
    }

    /// Horizontal line `y = y0`.
    pub fn horizontal(y0: T) -> Self {
        LineHypothesis { theta: T::FRAC_PI_2(), r: y0 }
    }

    /// Line with normal angle `theta` passing through `(x, y)`.
    pub fn through(theta: T, x: T, y: T) -> Self {
        Self::new(theta, theta.sin() * y + theta.cos() * x)
    }

    #[inline]
    pub fn residual(&self, x: T, y: T) -> T {
        self.theta.sin() * y + self.theta.cos() * x - self.r
    }

    /// `y` on the line at column `x`; `None` when the line is vertical or
    /// closer to vertical than horizontal.
    pub fn y_at(&self, x: T) -> Option<T> {
        let s = self.theta.sin();
        let c = self.theta.cos();
        if c.abs() > s {
            return None;
        }
        Some((self.r - c * x) / s)
    }

    /// Unsigned angle between two lines, in `[0, pi/2]`.
    pub fn angle_to(&self, other: &Self) -> T {
        let d = (self.theta - other.theta).abs();
        d.min(T::PI() - d)
    }
}

/// Signed distance of `(x, y)` from the line `h`.
pub fn line_residual<T: Real>(h: &LineHypothesis<T>, x: T, y: T) -> T {
    h.residual(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VotingPoint<T> {
    pub x: T,
    pub y: T,
    pub weight: T,
}

impl<T: Real> VotingPoint<T> {
    pub fn new(x: T, y: T, weight: T) -> Self {
        VotingPoint { x, y, weight }
    }

    /// Unit-weight voter, as emitted by a triggered detector window.
    pub fn unit(x: T, y: T) -> Self {
        VotingPoint { x, y, weight: T::one() }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.weight.is_finite() && self.weight >= T::zero()
    }
}

/// Index of a cell in a [`HypothesisGrid`]. Ordering is theta-major, which is
/// also the tie-break order of every grid search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub ti: usize,
    pub ri: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisGrid<T> {
    theta_min: T,
    theta_step: T,
    n_theta: usize,
    r_min: T,
    r_step: T,
    n_r: usize,
}

fn axis_len<T: Real>(min: T, max: T, step: T) -> Option<usize> {
    if !(step > T::zero()) || !min.is_finite() || !max.is_finite() || max < min {
        return None;
    }
    let span = ((max - min) / step).as_f64();
    Some((span + 1e-9).floor() as usize + 1)
}

impl<T: Real> HypothesisGrid<T> {
    pub fn new(theta_min: T, theta_max: T, theta_step: T, r_min: T, r_max: T, r_step: T) -> Result<Self> {
        let n_theta = axis_len(theta_min, theta_max, theta_step)
            .ok_or_else(|| Error::InvalidGrid(format!("theta range [{theta_min}, {theta_max}] step {theta_step}")))?;
        let n_r = axis_len(r_min, r_max, r_step)
            .ok_or_else(|| Error::InvalidGrid(format!("r range [{r_min}, {r_max}] step {r_step}")))?;
        let grid = HypothesisGrid { theta_min, theta_step, n_theta, r_min, r_step, n_r };
        if grid.theta_min < T::zero() || grid.theta(n_theta - 1) >= T::PI() {
            return Err(Error::InvalidGrid("theta range must lie inside [0, pi)".into()));
        }
        Ok(grid)
    }

    /// Grid in degrees for theta, pixels for r.
    pub fn from_degrees(theta_min: f64, theta_max: f64, theta_step: f64, r_min: f64, r_max: f64, r_step: f64) -> Result<Self> {
        Self::new(
            T::deg(theta_min),
            T::deg(theta_max),
            T::deg(theta_step),
            T::lit(r_min),
            T::lit(r_max),
            T::lit(r_step),
        )
    }

    /// Near-horizontal lines: theta in [60, 120] degrees every 0.5 degree,
    /// r in [0, height] every pixel.
    pub fn for_image_height(height: usize) -> Self {
        Self::from_degrees(60.0, 120.0, 0.5, 0.0, height as f64, 1.0).expect("default grid is valid")
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_r
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta_min(&self) -> T {
        self.theta_min
    }

    pub fn theta_max(&self) -> T {
        self.theta(self.n_theta - 1)
    }

    pub fn theta_step(&self) -> T {
        self.theta_step
    }

    pub fn r_min(&self) -> T {
        self.r_min
    }

    pub fn r_max(&self) -> T {
        self.r(self.n_r - 1)
    }

    pub fn r_step(&self) -> T {
        self.r_step
    }

    #[inline]
    pub fn theta(&self, ti: usize) -> T {
        self.theta_min + T::from_usize_lossy(ti) * self.theta_step
    }

    #[inline]
    pub fn r(&self, ri: usize) -> T {
        self.r_min + T::from_usize_lossy(ri) * self.r_step
    }

    #[inline]
    pub fn line(&self, cell: Cell) -> LineHypothesis<T> {
        LineHypothesis { theta: self.theta(cell.ti), r: self.r(cell.ri) }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.n_theta).flat_map(move |ti| (0..self.n_r).map(move |ri| Cell { ti, ri }))
    }

    /// Cell whose line is closest to `h` along each axis, if `h` is inside
    /// the grid's extent (half a step of slack on each side).
    pub fn nearest_cell(&self, h: &LineHypothesis<T>) -> Option<Cell> {
        let ti = snap(h.theta, self.theta_min, self.theta_step, self.n_theta)?;
        let ri = snap(h.r, self.r_min, self.r_step, self.n_r)?;
        Some(Cell { ti, ri })
    }

    /// Index ranges covering every cell within `lambda` of `center` on each
    /// axis (a superset; callers apply the exact strict test).
    fn window_ranges(&self, center: &LineHypothesis<T>, lambda_theta: T, lambda_r: T) -> (Range<usize>, Range<usize>) {
        (
            index_span(center.theta, lambda_theta, self.theta_min, self.theta_step, self.n_theta),
            index_span(center.r, lambda_r, self.r_min, self.r_step, self.n_r),
        )
    }
}

fn snap<T: Real>(v: T, min: T, step: T, n: usize) -> Option<usize> {
    let k = ((v - min) / step).round();
    if !k.is_finite() || k < T::zero() || k > T::from_usize_lossy(n - 1) {
        return None;
    }
    k.to_usize()
}

fn index_span<T: Real>(center: T, lambda: T, min: T, step: T, n: usize) -> Range<usize> {
    let lo = ((center - lambda - min) / step).floor() - T::one();
    let hi = ((center + lambda - min) / step).ceil() + T::one();
    let clamp = |v: T| -> usize {
        if v <= T::zero() {
            0
        } else {
            v.to_usize().unwrap_or(n).min(n)
        }
    };
    let lo = clamp(lo);
    let hi = clamp(hi + T::one());
    lo..hi.max(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteConfig<T> {
    pub sigma: T,
}

impl<T: Real> Default for VoteConfig<T> {
    fn default() -> Self {
        VoteConfig { sigma: T::lit(5.0) }
    }
}

impl<T: Real> VoteConfig<T> {
    #[inline]
    fn two_sigma_sq(&self) -> T {
        let two = T::lit(2.0);
        two * self.sigma * self.sigma
    }
}

#[inline]
fn kernel<T: Real>(d: T, two_s2: T) -> T {
    (-(d * d) / two_s2).exp()
}

/// Weighted Hough vote of `voters` for `h`. Summation follows voter order.
pub fn vote<T: Real>(h: &LineHypothesis<T>, voters: &[VotingPoint<T>], cfg: &VoteConfig<T>) -> T {
    let two_s2 = cfg.two_sigma_sq();
    let mut acc = T::zero();
    for v in voters {
        acc = acc + v.weight * kernel(h.residual(v.x, v.y), two_s2);
    }
    acc
}

/// Best grid cell of a search together with its vote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak<T> {
    pub cell: Cell,
    pub line: LineHypothesis<T>,
    pub weight: T,
}

/// Cells per block of the pruned scan.
const PRUNE_BLOCK: usize = 8;
/// Stride of the seeding pass on both axes.
const SEED_STRIDE: usize = 4;

/// Maximizes the vote over `theta_range x r_range`, skipping cells rejected
/// by `accept`. Ties keep the first cell in theta-major order.
///
/// Long `r` ranges are scanned in blocks. A block is skipped when an upper
/// bound on its votes (each voter's kernel at the block edge nearest to it)
/// is strictly below a vote already achieved by an accepted cell. Rounding
/// is monotone in every step of the kernel, so the bound never undercuts a
/// computed vote and the result is identical to the plain scan.
fn search<T, F>(
    voters: &[VotingPoint<T>],
    grid: &HypothesisGrid<T>,
    cfg: &VoteConfig<T>,
    theta_range: Range<usize>,
    r_range: Range<usize>,
    mut accept: F,
) -> Option<Peak<T>>
where
    T: Real,
    F: FnMut(Cell, &LineHypothesis<T>) -> bool,
{
    let two_s2 = cfg.two_sigma_sq();
    let prune = r_range.len() >= 2 * PRUNE_BLOCK
        && !voters.is_empty()
        && voters.iter().all(|v| v.weight >= T::zero());
    let mut proj: Vec<T> = Vec::with_capacity(voters.len());
    let cell_vote = |proj: &[T], r: T| -> T {
        let mut acc = T::zero();
        for (p, v) in proj.iter().zip(voters) {
            acc = acc + v.weight * kernel(*p - r, two_s2);
        }
        acc
    };

    let mut floor = T::zero();
    if prune {
        for ti in theta_range.clone().step_by(SEED_STRIDE) {
            let theta = grid.theta(ti);
            let (s, c) = (theta.sin(), theta.cos());
            proj.clear();
            proj.extend(voters.iter().map(|v| s * v.y + c * v.x));
            for ri in r_range.clone().step_by(SEED_STRIDE) {
                let line = LineHypothesis { theta, r: grid.r(ri) };
                if accept(Cell { ti, ri }, &line) {
                    floor = floor.max(cell_vote(&proj, line.r));
                }
            }
        }
    }

    let mut best: Option<Peak<T>> = None;
    for ti in theta_range {
        let theta = grid.theta(ti);
        let (s, c) = (theta.sin(), theta.cos());
        proj.clear();
        proj.extend(voters.iter().map(|v| s * v.y + c * v.x));
        let mut block_start = r_range.start;
        while block_start < r_range.end {
            let block_end = if prune { (block_start + PRUNE_BLOCK).min(r_range.end) } else { r_range.end };
            if prune {
                let threshold = best.as_ref().map_or(floor, |b| b.weight.max(floor));
                let (lo, hi) = (grid.r(block_start), grid.r(block_end - 1));
                let mut bound = T::zero();
                for (p, v) in proj.iter().zip(voters) {
                    let k = if *p > hi {
                        kernel(*p - hi, two_s2)
                    } else if *p < lo {
                        kernel(*p - lo, two_s2)
                    } else {
                        T::one()
                    };
                    bound = bound + v.weight * k;
                }
                if bound < threshold {
                    block_start = block_end;
                    continue;
                }
            }
            for ri in block_start..block_end {
                let cell = Cell { ti, ri };
                let line = LineHypothesis { theta, r: grid.r(ri) };
                if !accept(cell, &line) {
                    continue;
                }
                let acc = cell_vote(&proj, line.r);
                if best.as_ref().map_or(true, |b| acc > b.weight) {
                    best = Some(Peak { cell, line, weight: acc });
                }
            }
            block_start = block_end;
        }
    }
    best
}

/// Unconstrained Hough peak. An empty voter set yields weight 0 at the first
/// grid cell.
pub fn argmax_vote<T: Real>(voters: &[VotingPoint<T>], grid: &HypothesisGrid<T>, cfg: &VoteConfig<T>) -> Peak<T> {
    search(voters, grid, cfg, 0..grid.n_theta(), 0..grid.n_r(), |_, _| true).expect("grid is never empty")
}

/// True when `h` lies strictly inside the inter-frame window around `center`.
#[inline]
pub fn in_window<T: Real>(h: &LineHypothesis<T>, center: &LineHypothesis<T>, lambda_theta: T, lambda_r: T) -> bool {
    (h.theta - center.theta).abs() < lambda_theta && (h.r - center.r).abs() < lambda_r
}

/// Hough peak restricted to `|dtheta| < lambda_theta` and `|dr| < lambda_r`
/// around `center`.
pub fn argmax_vote_constrained<T: Real>(
    voters: &[VotingPoint<T>],
    grid: &HypothesisGrid<T>,
    cfg: &VoteConfig<T>,
    center: &LineHypothesis<T>,
    lambda_theta: T,
    lambda_r: T,
) -> Result<Peak<T>> {
    argmax_vote_window_where(voters, grid, cfg, center, lambda_theta, lambda_r, |_, _| true).ok_or(Error::EmptyWindow)
}

/// Windowed search with an extra cell predicate. `None` when no cell passes.
pub fn argmax_vote_window_where<T, F>(
    voters: &[VotingPoint<T>],
    grid: &HypothesisGrid<T>,
    cfg: &VoteConfig<T>,
    center: &LineHypothesis<T>,
    lambda_theta: T,
    lambda_r: T,
    mut accept: F,
) -> Option<Peak<T>>
where
    T: Real,
    F: FnMut(Cell, &LineHypothesis<T>) -> bool,
{
    let (tr, rr) = grid.window_ranges(center, lambda_theta, lambda_r);
    search(voters, grid, cfg, tr, rr, |cell, line| {
        in_window(line, center, lambda_theta, lambda_r) && accept(cell, line)
    })
}

/// Full-grid search with a cell predicate. `None` when no cell passes.
pub fn argmax_vote_where<T, F>(
    voters: &[VotingPoint<T>],
    grid: &HypothesisGrid<T>,
    cfg: &VoteConfig<T>,
    accept: F,
) -> Option<Peak<T>>
where
    T: Real,
    F: FnMut(Cell, &LineHypothesis<T>) -> bool,
{
    search(voters, grid, cfg, 0..grid.n_theta(), 0..grid.n_r(), accept)
}

/// Vote of every grid cell, theta-major.
pub fn vote_table<T: Real>(voters: &[VotingPoint<T>], grid: &HypothesisGrid<T>, cfg: &VoteConfig<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(grid.len());
    let two_s2 = cfg.two_sigma_sq();
    let mut proj = Vec::with_capacity(voters.len());
    for ti in 0..grid.n_theta() {
        let theta = grid.theta(ti);
        let (s, c) = (theta.sin(), theta.cos());
        proj.clear();
        proj.extend(voters.iter().map(|v| s * v.y + c * v.x));
        for ri in 0..grid.n_r() {
            let r = grid.r(ri);
            let mut acc = T::zero();
            for (p, v) in proj.iter().zip(voters) {
                acc = acc + v.weight * kernel(*p - r, two_s2);
            }
            out.push(acc);
        }
    }
    out
}

/// Type-2 voters: one per pixel whose vertical central-difference gradient
/// magnitude exceeds `threshold`, weighted by that magnitude. Coordinates are
/// image pixels (row index as `y`). The first and last rows have no central
/// difference and never vote.
pub fn gradient_voters<T: Real>(image: &GrayImage<T>, threshold: T) -> Vec<VotingPoint<T>> {
    let (w, h) = (image.width(), image.height());
    let mut out = Vec::new();
    if h < 3 {
        return out;
    }
    let half = T::lit(0.5);
    for y in 1..h - 1 {
        for x in 0..w {
            let g = ((image.get(x, y + 1) - image.get(x, y - 1)) * half).abs();
            if g > threshold {
                out.push(VotingPoint::new(T::from_usize_lossy(x), T::from_usize_lossy(y), g));
            }
        }
    }
    out
}

/// [`gradient_voters`] with the threshold at 10% of the image's largest
/// vertical gradient.
pub fn gradient_voters_auto<T: Real>(image: &GrayImage<T>) -> Vec<VotingPoint<T>> {
    let (w, h) = (image.width(), image.height());
    let mut max = T::zero();
    let half = T::lit(0.5);
    for y in 1..h.saturating_sub(1) {
        for x in 0..w {
            max = max.max(((image.get(x, y + 1) - image.get(x, y - 1)) * half).abs());
        }
    }
    gradient_voters(image, max * T::lit(0.1))
}

/// Flips between image pixels (y down from the top edge) and the road frame
/// (y up from the bottom edge). The map is an involution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadFrame<T> {
    pub height: T,
}

impl<T: Real> RoadFrame<T> {
    pub fn new(height: usize) -> Self {
        RoadFrame { height: T::from_usize_lossy(height) }
    }

    #[inline]
    pub fn flip_y(&self, y: T) -> T {
        self.height - y
    }

    pub fn flip_point(&self, p: &VotingPoint<T>) -> VotingPoint<T> {
        VotingPoint { x: p.x, y: self.flip_y(p.y), weight: p.weight }
    }

    pub fn flip_points(&self, pts: &[VotingPoint<T>]) -> Vec<VotingPoint<T>> {
        pts.iter().map(|p| self.flip_point(p)).collect()
    }

    pub fn flip_line(&self, h: &LineHypothesis<T>) -> LineHypothesis<T> {
        LineHypothesis::new(T::PI() - h.theta, h.theta.sin() * self.height - h.r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn grid_h(height: usize) -> HypothesisGrid<f64> {
        HypothesisGrid::for_image_height(height)
    }

    fn row(y: f64, xs: &[f64]) -> Vec<VotingPoint<f64>> {
        xs.iter().map(|&x| VotingPoint::unit(x, y)).collect()
    }

    #[test]
    fn residual_examples() {
        let h = LineHypothesis::new(FRAC_PI_2, 10.0);
        assert_relative_eq!(line_residual(&h, 3.0, 10.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(line_residual(&h, 3.0, 15.0), 5.0, epsilon = 1e-12);
        let d = LineHypothesis::new(FRAC_PI_4, 0.0);
        assert_relative_eq!(line_residual(&d, 1.0, 1.0), 1.414_213_562_373_095, epsilon = 1e-12);
    }

    #[test]
    fn normalization_keeps_sin_nonnegative() {
        let h = LineHypothesis::new(-FRAC_PI_2, 10.0);
        assert_relative_eq!(h.theta, FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(h.r, -10.0);
        // same geometric line
        assert_relative_eq!(h.residual(4.0, -10.0), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn vote_examples() {
        let cfg = VoteConfig::default();
        let h = LineHypothesis::horizontal(10.0);
        assert_eq!(vote(&h, &[VotingPoint::unit(1.0, 10.0)], &cfg), 1.0);
        assert_relative_eq!(vote(&h, &[VotingPoint::new(0.0, 15.0, 2.0)], &cfg), 2.0 * (-0.5f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(vote(&h, &row(10.0, &[0.0, 7.0]), &cfg), 2.0, epsilon = 1e-12);
        assert_eq!(vote(&h, &[], &cfg), 0.0);
    }

    #[test]
    fn grid_defaults() {
        let g = grid_h(120);
        assert_eq!(g.n_theta(), 121);
        assert_eq!(g.n_r(), 121);
        assert_relative_eq!(g.theta(60), FRAC_PI_2, epsilon = 1e-12);
        assert!(HypothesisGrid::<f64>::new(0.0, 1.0, 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(HypothesisGrid::<f64>::new(0.0, 4.0, 0.1, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn argmax_three_voters_on_row() {
        let g = grid_h(120);
        let p = argmax_vote(&row(40.0, &[10.0, 60.0, 120.0]), &g, &VoteConfig::default());
        assert_eq!(p.cell, Cell { ti: 60, ri: 40 });
        assert_relative_eq!(p.weight, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn argmax_empty_is_first_cell() {
        let g = grid_h(120);
        let p = argmax_vote(&[], &g, &VoteConfig::default());
        assert_eq!(p.cell, Cell { ti: 0, ri: 0 });
        assert_eq!(p.weight, 0.0);
    }

    #[test]
    fn argmax_single_voter_within_resolution() {
        let g = grid_h(120);
        let v = VotingPoint::unit(80.0, 50.3);
        let p = argmax_vote(&[v], &g, &VoteConfig::default());
        // some cell passes within half an r step of the voter
        assert!(p.line.residual(v.x, v.y).abs() <= 0.5 + 1e-9);
        assert!(p.weight > 0.99);
    }

    #[test]
    fn constrained_examples() {
        let g = grid_h(120);
        let cfg = VoteConfig::default();
        let center = g.line(Cell { ti: 60, ri: 40 });
        let p = argmax_vote_constrained(&row(40.0, &[10.0, 60.0, 120.0]), &g, &cfg, &center, 0.1, 5.0).unwrap();
        assert_eq!(p.cell, Cell { ti: 60, ri: 40 });

        let far = row(60.0, &[10.0, 60.0, 120.0]);
        let p = argmax_vote_constrained(&far, &g, &cfg, &center, 0.1, 5.0).unwrap();
        assert!(p.line.r > 35.0 && p.line.r < 45.0);
        assert!(p.weight < argmax_vote(&far, &g, &cfg).weight);

        assert!(matches!(
            argmax_vote_constrained(&far, &g, &cfg, &center, 0.1, 0.0),
            Err(Error::EmptyWindow)
        ));
    }

    #[test]
    fn constrained_window_is_strict() {
        let g = grid_h(120);
        let cfg = VoteConfig::default();
        let center = g.line(Cell { ti: 60, ri: 40 });
        // lambda_r exactly one step admits only the center row of r
        let p = argmax_vote_constrained(&row(60.0, &[0.0, 50.0]), &g, &cfg, &center, 1e-3, 1.0).unwrap();
        assert_eq!(p.cell.ri, 40);
    }

    #[test]
    fn gradient_voter_examples() {
        let flat = GrayImage::filled(8, 6, 0.4);
        assert!(gradient_voters(&flat, 0.0).is_empty());

        let step = GrayImage::from_fn(5, 10, |_, y| if y >= 4 { 1.0 } else { 0.0 });
        let vs = gradient_voters(&step, 0.1);
        assert_eq!(vs.len(), 10);
        assert!(vs.iter().all(|v| v.y == 3.0 || v.y == 4.0));

        let ramp = GrayImage::from_fn(4, 6, |_, y| y as f64 * 0.1);
        let vs = gradient_voters(&ramp, 0.0);
        assert_eq!(vs.len(), 4 * 4);
        assert!(vs.iter().all(|v| (v.weight - 0.1).abs() < 1e-12));
    }

    #[test]
    fn road_frame_flip() {
        let f = RoadFrame::<f64>::new(120);
        let l = LineHypothesis::horizontal(100.0);
        let road = f.flip_line(&l);
        assert_relative_eq!(road.theta, FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(road.r, 20.0, epsilon = 1e-9);
        let back = f.flip_line(&road);
        assert_relative_eq!(back.r, 100.0, epsilon = 1e-9);
        let tilted = LineHypothesis::new(1.4, 50.0);
        let p = VotingPoint::unit(30.0, (50.0 - 1.4f64.cos() * 30.0) / 1.4f64.sin());
        let fp = f.flip_point(&p);
        assert!(f.flip_line(&tilted).residual(fp.x, fp.y).abs() < 1e-9);
    }

    fn arb_voters() -> impl Strategy<Value = Vec<VotingPoint<f64>>> {
        prop::collection::vec((0.0..160.0f64, 0.0..120.0f64, 0.0..3.0f64), 0..25)
            .prop_map(|v| v.into_iter().map(|(x, y, w)| VotingPoint::new(x, y, w)).collect())
    }

    fn small_grid() -> HypothesisGrid<f64> {
        HypothesisGrid::from_degrees(80.0, 100.0, 2.0, 0.0, 120.0, 2.0).unwrap()
    }

    proptest! {
        #[test]
        fn adding_a_voter_never_decreases_vote(vs in arb_voters(), x in 0.0..160.0f64, y in 0.0..120.0f64, w in 0.0..3.0f64,
                                               th in 1.0..2.1f64, r in 0.0..120.0f64) {
            let h = LineHypothesis::new(th, r);
            let cfg = VoteConfig::default();
            let before = vote(&h, &vs, &cfg);
            let mut more = vs.clone();
            more.push(VotingPoint::new(x, y, w));
            prop_assert!(vote(&h, &more, &cfg) >= before);
        }

        #[test]
        fn scaling_weights_scales_votes(vs in arb_voters(), c in 0.1..10.0f64) {
            let g = small_grid();
            let cfg = VoteConfig::default();
            let scaled: Vec<_> = vs.iter().map(|v| VotingPoint::new(v.x, v.y, v.weight * c)).collect();
            let a = vote_table(&vs, &g, &cfg);
            let b = vote_table(&scaled, &g, &cfg);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x * c - y).abs() <= 1e-9 * (x * c).abs().max(1e-300));
            }
            let pa = argmax_vote(&vs, &g, &cfg);
            let pb = argmax_vote(&scaled, &g, &cfg);
            // cells may only differ on exact-value ties broken by rounding
            let ta = a[pa.cell.ti * g.n_r() + pa.cell.ri];
            let tb = a[pb.cell.ti * g.n_r() + pb.cell.ri];
            prop_assert!((ta - tb).abs() <= 1e-9 * ta.abs().max(1e-300));
        }

        #[test]
        fn constrained_never_beats_unconstrained(vs in arb_voters(), ti in 0usize..11, ri in 0usize..61,
                                                 lt in 0.01..0.3f64, lr in 0.5..20.0f64) {
            let g = small_grid();
            let cfg = VoteConfig::default();
            let center = g.line(Cell { ti, ri });
            let c = argmax_vote_constrained(&vs, &g, &cfg, &center, lt, lr).unwrap();
            prop_assert!(c.weight <= argmax_vote(&vs, &g, &cfg).weight);
            prop_assert!(in_window(&c.line, &center, lt, lr));
        }

        #[test]
        fn pruned_scan_matches_brute_force(vs in arb_voters(), dup in 0usize..4, mask in 0u64..4, salt in 0u64..1000) {
            let g = grid_h(60);
            let cfg = VoteConfig::default();
            // duplicated mirror images create exact ties
            let mut voters = vs.clone();
            for _ in 0..dup {
                voters.extend(vs.iter().map(|v| VotingPoint::new(v.x, 60.0 - v.y, v.weight)));
            }
            let keep = |c: Cell| mask == 0 || (c.ti as u64 * 131 + c.ri as u64 * 7 + salt) % (mask + 1) != 0;
            let mut oracle: Option<(Cell, f64)> = None;
            for ti in 0..g.n_theta() {
                for ri in 0..g.n_r() {
                    let c = Cell { ti, ri };
                    if !keep(c) {
                        continue;
                    }
                    let w = vote(&g.line(c), &voters, &cfg);
                    if oracle.map_or(true, |(_, b)| w > b) {
                        oracle = Some((c, w));
                    }
                }
            }
            let got = argmax_vote_where(&voters, &g, &cfg, |c, _| keep(c)).map(|p| (p.cell, p.weight));
            prop_assert_eq!(got, oracle);
        }

        #[test]
        fn vertical_shift_moves_horizontal_peak(xs in prop::collection::vec(0.0..160.0f64, 3..20), y in 20i32..60, dy in 0i32..40) {
            let spread = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
            prop_assume!(spread > 40.0);
            let g = grid_h(120);
            let cfg = VoteConfig::default();
            let a = argmax_vote(&row(y as f64, &xs), &g, &cfg);
            let b = argmax_vote(&row((y + dy) as f64, &xs), &g, &cfg);
            prop_assert_eq!(a.cell.ti, b.cell.ti);
            prop_assert!((b.line.r - a.line.r - dy as f64).abs() < 1e-9);
        }
    }
}
