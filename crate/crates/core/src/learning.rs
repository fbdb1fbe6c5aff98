//! Parameter estimation from annotated sequences.
//!
//! Tolerances are twice a zero-mean Gaussian deviation fitted to the
//! relevant differences; `D_min` is a least-squares line through the lower
//! envelope of observed border/lane separations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::PerturbationRecord;
use crate::potentials::{structure_holds, ModelParams};
use crate::scalar::Real;
use crate::voting::{HypothesisGrid, LineHypothesis};

/// Bucket width (pixels of lane offset) of the separation envelope.
pub const DMIN_BUCKET: f64 = 5.0;

/// Margin added to the largest observed perturbation loss.
const LAMBDA_MODE_MARGIN: f64 = 0.1;
const LAMBDA_MODE_EPS: f64 = 1e-6;

/// Annotated lines of one frame, road frame. `shoulder` is the labelled
/// shoulder polygon when one is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame<T> {
    pub frame: usize,
    pub bd: LineHypothesis<T>,
    pub ln: LineHypothesis<T>,
    pub shoulder: Option<Vec<(T, T)>>,
}

impl<T: Real> GroundTruthFrame<T> {
    pub fn new(frame: usize, bd: LineHypothesis<T>, ln: LineHypothesis<T>) -> Self {
        GroundTruthFrame { frame, bd, ln, shoulder: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterframeLambdas<T> {
    pub bd_theta: T,
    pub bd_r: T,
    pub ln_theta: T,
    pub ln_r: T,
}

/// `2 * sqrt(mean(x^2))`: twice the deviation of a zero-mean Gaussian fit.
pub fn two_sigma_about_zero<T: Real>(samples: &[T]) -> T {
    if samples.is_empty() {
        return T::zero();
    }
    let ss = samples.iter().fold(T::zero(), |a, v| a + *v * *v);
    T::lit(2.0) * (ss / T::from_usize_lossy(samples.len())).sqrt()
}

fn consecutive<T>(gt: &[GroundTruthFrame<T>]) -> impl Iterator<Item = (&GroundTruthFrame<T>, &GroundTruthFrame<T>)> {
    gt.windows(2).filter(|w| w[1].frame == w[0].frame + 1).map(|w| (&w[0], &w[1]))
}

/// Joins independently annotated sequences, renumbering frames so that no
/// pair straddles two sequences.
pub fn concat_sequences<T: Real>(seqs: Vec<Vec<GroundTruthFrame<T>>>) -> Vec<GroundTruthFrame<T>> {
    let mut out: Vec<GroundTruthFrame<T>> = Vec::new();
    for seq in seqs {
        let offset = out.last().map_or(0, |g| g.frame + 1);
        out.extend(seq.into_iter().map(|mut g| {
            g.frame += offset;
            g
        }));
    }
    out
}

/// Inter-frame tolerances from consecutive annotated frames. Frames whose
/// indices are not adjacent (sequence boundaries) contribute no delta.
pub fn learn_interframe_lambdas<T: Real>(gt: &[GroundTruthFrame<T>]) -> Result<InterframeLambdas<T>> {
    let pairs: Vec<_> = consecutive(gt).collect();
    if pairs.is_empty() {
        return Err(Error::Learning("inter-frame tolerances need at least two consecutive frames".into()));
    }
    let col = |f: &dyn Fn(&GroundTruthFrame<T>, &GroundTruthFrame<T>) -> T| -> T {
        two_sigma_about_zero(&pairs.iter().map(|(a, b)| f(a, b)).collect::<Vec<_>>())
    };
    Ok(InterframeLambdas {
        bd_theta: col(&|a, b| b.bd.theta - a.bd.theta),
        bd_r: col(&|a, b| b.bd.r - a.bd.r),
        ln_theta: col(&|a, b| b.ln.theta - a.ln.theta),
        ln_r: col(&|a, b| b.ln.r - a.ln.r),
    })
}

/// Parallelism tolerances per separation band; `None` for an empty band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureLambdas<T> {
    pub str1: Option<T>,
    pub str2: Option<T>,
}

pub fn learn_structure_lambdas<T: Real>(gt: &[GroundTruthFrame<T>], params: &ModelParams<T>) -> StructureLambdas<T> {
    let mut near = Vec::new();
    let mut far = Vec::new();
    for g in gt {
        let dr = g.bd.r - g.ln.r;
        let dtheta = (g.bd.theta - g.ln.theta).abs();
        if params.d1 <= dr && dr < params.d2 {
            near.push(dtheta);
        } else if params.d2 <= dr && dr < params.d3 {
            far.push(dtheta);
        }
    }
    let fit = |v: &[T]| (!v.is_empty()).then(|| two_sigma_about_zero(v));
    StructureLambdas { str1: fit(&near), str2: fit(&far) }
}

/// Ordinary least squares `y = a x + b`.
pub fn fit_line<T: Real>(points: &[(T, T)]) -> Result<(T, T)> {
    let n = T::from_usize_lossy(points.len());
    if points.len() < 2 {
        return Err(Error::Learning("line fit needs at least two points".into()));
    }
    let mx = points.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let my = points.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let sxx = points.iter().fold(T::zero(), |a, p| a + (p.0 - mx) * (p.0 - mx));
    let sxy = points.iter().fold(T::zero(), |a, p| a + (p.0 - mx) * (p.1 - my));
    if !(sxx > T::epsilon() * n * (mx * mx + T::one())) {
        return Err(Error::Learning("rank-deficient design: all lane offsets identical".into()));
    }
    let a = sxy / sxx;
    Ok((a, my - a * mx))
}

/// Lower envelope of `(r_ln, r_bd - r_ln)`: the smallest separation in each
/// lane-offset bucket, at the offset where it was observed.
pub fn separation_envelope<T: Real>(gt: &[GroundTruthFrame<T>]) -> Vec<(T, T)> {
    let width = T::lit(DMIN_BUCKET);
    let mut buckets: BTreeMap<i64, (T, T)> = BTreeMap::new();
    for g in gt {
        let key = (g.ln.r / width).floor().to_i64().unwrap_or(i64::MIN);
        let dr = g.bd.r - g.ln.r;
        buckets
            .entry(key)
            .and_modify(|e| {
                if dr < e.1 {
                    *e = (g.ln.r, dr);
                }
            })
            .or_insert((g.ln.r, dr));
    }
    buckets.into_values().collect()
}

/// Slope and intercept of the minimum-separation line.
pub fn learn_dmin_regression<T: Real>(gt: &[GroundTruthFrame<T>]) -> Result<(T, T)> {
    fit_line(&separation_envelope(gt))
}

/// Largest loss caused by back perturbation plus a 10% margin. Returns
/// `default` when training never perturbed.
pub fn learn_lambda_mode<T: Real>(records: &[PerturbationRecord<T>], default: T) -> T {
    if records.is_empty() {
        return default;
    }
    let worst = records.iter().map(|r| r.loss()).fold(T::neg_infinity(), T::max);
    (worst * T::lit(1.0 + LAMBDA_MODE_MARGIN)).max(T::lit(LAMBDA_MODE_EPS))
}

/// What [`learn_params`] did, for the operator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearnReport {
    pub notes: Vec<String>,
    /// Annotated frames on which the structure constraint (with the learned
    /// parameters) does not hold.
    pub violating_frames: Vec<usize>,
}

/// Learns every estimable parameter, starting from `base` and flooring the
/// tolerances at one grid step.
pub fn learn_params<T: Real>(
    gt: &[GroundTruthFrame<T>],
    records: &[PerturbationRecord<T>],
    grid: &HypothesisGrid<T>,
    base: &ModelParams<T>,
) -> Result<(ModelParams<T>, LearnReport)> {
    let mut report = LearnReport::default();
    let mut p = *base;
    let l = learn_interframe_lambdas(gt)?;
    p.lambda_bd_theta = l.bd_theta;
    p.lambda_bd_r = l.bd_r;
    p.lambda_ln_theta = l.ln_theta;
    p.lambda_ln_r = l.ln_r;

    let s = learn_structure_lambdas(gt, &p);
    match s.str1 {
        Some(v) => p.lambda_str1 = v,
        None => report.notes.push("no frames in the near separation band; lambda_str1 keeps its default".into()),
    }
    match s.str2 {
        Some(v) => p.lambda_str2 = v,
        None => report.notes.push("no frames in the far separation band; lambda_str2 keeps its default".into()),
    }

    match learn_dmin_regression(gt) {
        Ok((a, b)) => {
            p.a = a;
            p.b = b;
        }
        Err(e) => report.notes.push(format!("D_min regression skipped ({e}); a, b keep their defaults")),
    }

    if records.is_empty() {
        report.notes.push("no perturbation records; lambda_mode keeps its default".into());
    }
    p.lambda_mode = learn_lambda_mode(records, base.lambda_mode);

    let p = p.floored(grid);
    report.violating_frames = gt.iter().filter(|g| !structure_holds(&g.bd, &g.ln, &p)).map(|g| g.frame).collect();
    if !report.violating_frames.is_empty() {
        report.notes.push(format!(
            "ground truth violates the structure constraint on {} frame(s)",
            report.violating_frames.len()
        ));
    }
    Ok((p, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};
    use rand_pcg::Pcg32;
    use std::f64::consts::FRAC_PI_2;

    fn gt_from(rows: &[(f64, f64, f64, f64)]) -> Vec<GroundTruthFrame<f64>> {
        rows.iter()
            .enumerate()
            .map(|(i, &(tb, rb, tl, rl))| GroundTruthFrame::new(i + 1, LineHypothesis::new(tb, rb), LineHypothesis::new(tl, rl)))
            .collect()
    }

    #[test]
    fn constant_truth_gives_zero_tolerance() {
        let gt = gt_from(&[(FRAC_PI_2, 60.0, FRAC_PI_2, 20.0); 5]);
        let l = learn_interframe_lambdas(&gt).unwrap();
        assert_eq!((l.bd_theta, l.bd_r, l.ln_theta, l.ln_r), (0.0, 0.0, 0.0, 0.0));
        let (p, _) = learn_params(&gt, &[], &HypothesisGrid::for_image_height(120), &ModelParams::default()).unwrap();
        assert_eq!(p.lambda_bd_r, 1.0);
    }

    #[test]
    fn concatenated_sequences_do_not_pair_across() {
        let a = gt_from(&[(FRAC_PI_2, 60.0, FRAC_PI_2, 20.0); 3]);
        let b = gt_from(&[(FRAC_PI_2, 90.0, FRAC_PI_2, 40.0); 3]);
        let all = concat_sequences(vec![a, b]);
        assert_eq!(all.iter().map(|g| g.frame).collect::<Vec<_>>(), [1, 2, 3, 5, 6, 7]);
        let l = learn_interframe_lambdas(&all).unwrap();
        assert_eq!((l.bd_r, l.ln_r), (0.0, 0.0));
    }

    #[test]
    fn alternating_offsets() {
        let rows: Vec<_> = (0..9).map(|i| (FRAC_PI_2, 60.0 + if i % 2 == 0 { 0.0 } else { 3.0 }, FRAC_PI_2, 20.0)).collect();
        let l = learn_interframe_lambdas(&gt_from(&rows)).unwrap();
        assert!((l.bd_r - 6.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_deltas_recover_two_sigma() {
        let mut rng = Pcg32::seed_from_u64(7);
        let n = Normal::new(0.0, 4.0).unwrap();
        let mut r = 60.0;
        let mut rows = Vec::new();
        for _ in 0..10_001 {
            rows.push((FRAC_PI_2, r, FRAC_PI_2, 20.0));
            r += n.sample(&mut rng);
        }
        let l = learn_interframe_lambdas(&gt_from(&rows)).unwrap();
        assert!((l.bd_r - 8.0).abs() < 0.8, "{}", l.bd_r);
    }

    #[test]
    fn single_frame_is_an_error() {
        assert!(learn_interframe_lambdas(&gt_from(&[(1.5, 60.0, 1.5, 20.0)])).is_err());
    }

    #[test]
    fn sequence_boundaries_are_skipped() {
        let mut gt = gt_from(&[(1.5, 60.0, 1.5, 20.0), (1.5, 60.0, 1.5, 20.0)]);
        let mut second = gt_from(&[(1.5, 90.0, 1.5, 20.0), (1.5, 90.0, 1.5, 20.0)]);
        // restarted numbering
        gt.append(&mut second);
        assert_eq!(learn_interframe_lambdas(&gt).unwrap().bd_r, 0.0);
    }

    #[test]
    fn structure_bands() {
        let p = ModelParams::<f64>::default();
        let d1 = 1f64.to_radians();
        let d2 = 2f64.to_radians();
        let mut rows = Vec::new();
        for i in 0..20 {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            rows.push((FRAC_PI_2 + s * d1, 32.0, FRAC_PI_2, 20.0));
            rows.push((FRAC_PI_2 + s * d2, 45.0, FRAC_PI_2, 20.0));
        }
        let s = learn_structure_lambdas(&gt_from(&rows), &p);
        assert!((s.str1.unwrap() - 2f64.to_radians()).abs() < 1e-9);
        assert!((s.str2.unwrap() - 4f64.to_radians()).abs() < 1e-9);

        let parallel = gt_from(&[(FRAC_PI_2, 32.0, FRAC_PI_2, 20.0); 3]);
        assert_eq!(learn_structure_lambdas(&parallel, &p).str1, Some(0.0));

        let wide = gt_from(&[(FRAC_PI_2, 80.0, FRAC_PI_2, 20.0); 3]);
        let s = learn_structure_lambdas(&wide, &p);
        assert_eq!((s.str1, s.str2), (None, None));
        let (learned, report) = learn_params(&wide, &[], &HypothesisGrid::for_image_height(120), &p).unwrap();
        assert_eq!(learned.lambda_str1, p.lambda_str1);
        assert!(report.notes.iter().any(|n| n.contains("lambda_str1")));
    }

    #[test]
    fn dmin_two_points() {
        let gt = gt_from(&[(FRAC_PI_2, 22.0, FRAC_PI_2, 10.0), (FRAC_PI_2, 34.0, FRAC_PI_2, 20.0)]);
        let (a, b) = learn_dmin_regression(&gt).unwrap();
        assert!((a - 0.2).abs() < 1e-12 && (b - 10.0).abs() < 1e-12);
    }

    #[test]
    fn dmin_rank_error() {
        let gt = gt_from(&[(FRAC_PI_2, 40.0, FRAC_PI_2, 10.0), (FRAC_PI_2, 50.0, FRAC_PI_2, 10.0)]);
        assert!(learn_dmin_regression(&gt).is_err());
    }

    #[test]
    fn dmin_noisy_envelope() {
        let mut rng = Pcg32::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut rows = Vec::new();
        for k in 0..40 {
            let rl = 2.5 + 5.0 * k as f64;
            let env = 0.1 * rl + 5.0;
            rows.push((FRAC_PI_2, rl + env + noise.sample(&mut rng), FRAC_PI_2, rl));
            for _ in 0..5 {
                rows.push((FRAC_PI_2, rl + env + rng.random_range(2.0..15.0), FRAC_PI_2, rl));
            }
        }
        let (a, b) = learn_dmin_regression(&gt_from(&rows)).unwrap();
        assert!((a - 0.1).abs() < 0.015, "a = {a}");
        assert!((b - 5.0).abs() < 0.75, "b = {b}");
    }

    #[test]
    fn lambda_mode_examples() {
        let rec = |pre: f64, post: f64| PerturbationRecord { pre_best: pre, post_selected: post };
        assert_eq!(learn_lambda_mode::<f64>(&[], 42.0), 42.0);
        let l = learn_lambda_mode(&[rec(10.0, 8.0), rec(10.0, 5.0), rec(4.0, 1.0)], 42.0);
        assert!((l - 5.5).abs() < 1e-12);
        assert_eq!(learn_lambda_mode(&[rec(3.0, 3.0)], 42.0), 1e-6);
    }

    proptest::proptest! {
        #[test]
        fn dmin_regression_scale_equivariant(a in 0.0..0.5f64, b in 0.0..20.0f64, c in 1.0..3.0f64,
                                             noise in proptest::collection::vec(-1.0..1.0f64, 12)) {
            let rows: Vec<_> = noise.iter().enumerate()
                .map(|(k, e)| { let rl = 10.0 * k as f64 + 1.0; (FRAC_PI_2, rl + a * rl + b + e, FRAC_PI_2, rl) })
                .collect();
            let scaled: Vec<_> = rows.iter().map(|&(t, rb, tl, rl)| (t, rb * c, tl, rl * c)).collect();
            let (a1, b1) = learn_dmin_regression(&gt_from(&rows)).unwrap();
            let (a2, b2) = learn_dmin_regression(&gt_from(&scaled)).unwrap();
            proptest::prop_assert!((a1 - a2).abs() < 1e-9);
            proptest::prop_assert!((b1 * c - b2).abs() < 1e-8);
        }
    }
}
