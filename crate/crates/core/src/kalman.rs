//! Constant-velocity Kalman tracking of `(theta, r)` from per-frame Hough
//! peaks.

use serde::{Deserialize, Serialize};

use crate::baselines::LinePair;
use crate::inference::FrameObservation;
use crate::potentials::Track;
use crate::scalar::Real;
use crate::voting::{argmax_vote, HypothesisGrid, LineHypothesis, VoteConfig};

type M4<T> = [[T; 4]; 4];

/// Noise parameters. Process noise is white acceleration with spectral
/// densities `q_theta` (rad^2) and `q_r` (px^2); measurement noise is the
/// variance of a Hough peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig<T> {
    pub q_theta: T,
    pub q_r: T,
    pub m_theta: T,
    pub m_r: T,
    /// Initial velocity variances.
    pub p0_theta_dot: T,
    pub p0_r_dot: T,
}

impl<T: Real> Default for KalmanConfig<T> {
    /// Best of a coarse grid (q_theta 1e-7..1e-4, m_theta 1e-5..1e-3,
    /// q_r 0.05..5, m_r 0.25..4, decades or factors of 4) on five clean
    /// default scenes, scored by Bd_Pxl + Ln_Pxl.
    fn default() -> Self {
        KalmanConfig {
            q_theta: T::lit(1e-4),
            q_r: T::lit(5.0),
            m_theta: T::lit(1e-5),
            m_r: T::lit(0.25),
            p0_theta_dot: T::lit(1e-3),
            p0_r_dot: T::lit(4.0),
        }
    }
}

fn zeros<T: Real>() -> M4<T> {
    [[T::zero(); 4]; 4]
}

fn mul<T: Real>(a: &M4<T>, b: &M4<T>) -> M4<T> {
    let mut o = zeros();
    for i in 0..4 {
        for j in 0..4 {
            let mut s = T::zero();
            for k in 0..4 {
                s = s + a[i][k] * b[k][j];
            }
            o[i][j] = s;
        }
    }
    o
}

fn transpose<T: Real>(a: &M4<T>) -> M4<T> {
    let mut o = zeros();
    for i in 0..4 {
        for j in 0..4 {
            o[i][j] = a[j][i];
        }
    }
    o
}

fn symmetrize<T: Real>(a: &mut M4<T>) {
    let half = T::lit(0.5);
    for i in 0..4 {
        for j in i + 1..4 {
            let v = (a[i][j] + a[j][i]) * half;
            a[i][j] = v;
            a[j][i] = v;
        }
    }
}

/// Tracker state `(theta, r, theta_dot, r_dot)` with its covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanTrack<T> {
    pub state: [T; 4],
    pub cov: M4<T>,
    pub config: KalmanConfig<T>,
}

impl<T: Real> KalmanTrack<T> {
    pub fn new(state: [T; 4], cov: M4<T>, config: KalmanConfig<T>) -> Self {
        KalmanTrack { state, cov, config }
    }

    /// Starts at a measured line with zero velocity.
    pub fn from_measurement(z: &LineHypothesis<T>, config: KalmanConfig<T>) -> Self {
        let mut cov = zeros();
        cov[0][0] = config.m_theta;
        cov[1][1] = config.m_r;
        cov[2][2] = config.p0_theta_dot;
        cov[3][3] = config.p0_r_dot;
        KalmanTrack { state: [z.theta, z.r, T::zero(), T::zero()], cov, config }
    }

    pub fn line(&self) -> LineHypothesis<T> {
        LineHypothesis::new(self.state[0], self.state[1])
    }

    pub fn trace(&self) -> T {
        (0..4).fold(T::zero(), |a, i| a + self.cov[i][i])
    }

    pub fn predict(&mut self) {
        let one = T::one();
        let z = T::zero();
        let f: M4<T> = [[one, z, one, z], [z, one, z, one], [z, z, one, z], [z, z, z, one]];
        let s = self.state;
        self.state = [s[0] + s[2], s[1] + s[3], s[2], s[3]];
        let mut p = mul(&mul(&f, &self.cov), &transpose(&f));
        let (q4, q3, q2) = (T::lit(0.25), T::lit(0.5), T::one());
        for (a, v, q) in [(0, 2, self.config.q_theta), (1, 3, self.config.q_r)] {
            p[a][a] = p[a][a] + q4 * q;
            p[a][v] = p[a][v] + q3 * q;
            p[v][a] = p[v][a] + q3 * q;
            p[v][v] = p[v][v] + q2 * q;
        }
        symmetrize(&mut p);
        self.cov = p;
    }

    /// Joseph-form update with a `(theta, r)` measurement. Returns `false`
    /// (and leaves the track alone) when the innovation covariance is
    /// singular.
    pub fn update(&mut self, z: &LineHypothesis<T>) -> bool {
        let p = &self.cov;
        let (mt, mr) = (self.config.m_theta, self.config.m_r);
        let s = [[p[0][0] + mt, p[0][1]], [p[1][0], p[1][1] + mr]];
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        if !(det.abs() > T::min_positive_value()) || !det.is_finite() {
            return false;
        }
        let si = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
        // K = P H^T S^-1, P H^T = first two columns of P
        let mut k = [[T::zero(); 2]; 4];
        for (i, row) in k.iter_mut().enumerate() {
            for (j, kij) in row.iter_mut().enumerate() {
                *kij = p[i][0] * si[0][j] + p[i][1] * si[1][j];
            }
        }
        let y = [z.theta - self.state[0], z.r - self.state[1]];
        for (i, row) in k.iter().enumerate() {
            self.state[i] = self.state[i] + row[0] * y[0] + row[1] * y[1];
        }
        let mut ikh: M4<T> = zeros();
        for (i, row) in ikh.iter_mut().enumerate() {
            row[i] = T::one();
            row[0] = row[0] - k[i][0];
            row[1] = row[1] - k[i][1];
        }
        let mut np = mul(&mul(&ikh, p), &transpose(&ikh));
        for i in 0..4 {
            for j in 0..4 {
                np[i][j] = np[i][j] + k[i][0] * mt * k[j][0] + k[i][1] * mr * k[j][1];
            }
        }
        symmetrize(&mut np);
        self.cov = np;
        true
    }
}

/// Border and lane filters fed with unconstrained Hough peaks of the
/// detector voters. A frame whose peak has zero vote only predicts.
#[derive(Debug, Clone)]
pub struct KalmanPair<T> {
    config: KalmanConfig<T>,
    tracks: [Option<KalmanTrack<T>>; 2],
}

impl<T: Real> KalmanPair<T> {
    pub fn new(config: KalmanConfig<T>) -> Self {
        KalmanPair { config, tracks: [None, None] }
    }

    pub fn step(&mut self, o: &FrameObservation<T>, grid: &HypothesisGrid<T>, cfg: &VoteConfig<T>) -> LinePair<T> {
        let mut lines = [LineHypothesis::horizontal(T::zero()); 2];
        for (slot, track) in [Track::Border, Track::Lane].into_iter().enumerate() {
            let peak = argmax_vote(o.type1(track), grid, cfg);
            let measured = peak.weight > T::zero();
            let kt = &mut self.tracks[slot];
            match kt {
                None => *kt = Some(KalmanTrack::from_measurement(&peak.line, self.config)),
                Some(k) => {
                    k.predict();
                    if measured {
                        k.update(&peak.line);
                    }
                }
            }
            lines[slot] = kt.as_ref().map(|k| k.line()).unwrap_or(peak.line);
        }
        LinePair { frame: o.index, bd: lines[0], ln: lines[1] }
    }
}

/// Batch form of [`KalmanPair`].
pub fn kalman_track<T: Real>(
    obs: &[FrameObservation<T>],
    grid: &HypothesisGrid<T>,
    cfg: &VoteConfig<T>,
    kcfg: &KalmanConfig<T>,
) -> Vec<LinePair<T>> {
    let mut k = KalmanPair::new(*kcfg);
    obs.iter().map(|o| k.step(o, grid, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;

    fn min_eig(p: &M4<f64>) -> f64 {
        let m = Matrix4::from_fn(|i, j| p[i][j]);
        m.symmetric_eigenvalues().min()
    }

    #[test]
    fn converges_from_offset_with_shrinking_trace() {
        let cfg = KalmanConfig { q_theta: 0.0, q_r: 0.0, m_theta: 1e-4, m_r: 1.0, p0_theta_dot: 1e-3, p0_r_dot: 4.0 };
        let truth = LineHypothesis::new(1.6, 50.0);
        let mut cov = [[0.0; 4]; 4];
        (0..4).for_each(|i| cov[i][i] = [1e-2, 100.0, 1e-3, 4.0][i]);
        let mut k = KalmanTrack::new([1.5, 40.0, 0.0, 0.0], cov, cfg);
        let mut last = k.trace();
        for _ in 0..200 {
            k.predict();
            assert!(k.update(&truth));
            let tr = k.trace();
            assert!(tr < last, "{tr} >= {last}");
            assert!(min_eig(&k.cov) >= -1e-9);
            last = tr;
        }
        // zero process noise: the error decays like 1/n
        assert!((k.state[0] - truth.theta).abs() < 2e-5);
        assert!((k.state[1] - truth.r).abs() < 2e-3);
    }

    #[test]
    fn linear_drift_velocity() {
        let cfg = KalmanConfig::default();
        let mut k = KalmanTrack::from_measurement(&LineHypothesis::new(1.5, 20.0), cfg);
        let mut lag = 0.0;
        for f in 1..200 {
            k.predict();
            k.update(&LineHypothesis::new(1.5, 20.0 + f as f64));
            lag = (20.0 + f as f64 - k.state[1]).abs();
        }
        assert!((k.state[3] - 1.0).abs() < 1e-3, "velocity {}", k.state[3]);
        assert!(lag < 1e-2);
    }

    #[test]
    fn zero_vote_frames_only_predict() {
        use crate::inference::FrameObservation;
        use crate::voting::VotingPoint;
        let grid = HypothesisGrid::<f64>::for_image_height(120);
        let frame = |i: usize, y: Option<f64>| {
            let mut o = FrameObservation::empty(i);
            if let Some(y) = y {
                o.bd_voters = (0..40).map(|x| VotingPoint::unit(x as f64 * 4.0, y)).collect();
                o.ln_voters = o.bd_voters.clone();
            }
            o
        };
        let obs = vec![frame(1, Some(50.0)), frame(2, Some(52.0)), frame(3, None), frame(4, None)];
        let out = kalman_track(&obs, &grid, &VoteConfig::default(), &KalmanConfig::default());
        let d23 = out[2].bd.r - out[1].bd.r;
        let d34 = out[3].bd.r - out[2].bd.r;
        assert!(d23 > 0.0 && (d23 - d34).abs() < 1e-12);
    }

    #[test]
    fn singular_innovation_is_skipped() {
        let cfg = KalmanConfig { m_theta: 0.0, m_r: 0.0, ..KalmanConfig::default() };
        let mut k = KalmanTrack::new([1.5, 30.0, 0.0, 0.0], [[0.0; 4]; 4], cfg);
        assert!(!k.update(&LineHypothesis::new(1.5, 31.0)));
        assert_eq!(k.state[1], 30.0);
    }

    proptest::proptest! {
        #[test]
        fn covariance_stays_psd(zs in proptest::collection::vec((1.3..1.8f64, 0.0..120.0f64, proptest::bool::ANY), 1..60),
                                q in 0.0..2.0f64, m in 0.01..5.0f64) {
            let cfg = KalmanConfig { q_theta: q * 1e-4, q_r: q, m_theta: m * 1e-4, m_r: m, ..KalmanConfig::default() };
            let mut k = KalmanTrack::from_measurement(&LineHypothesis::new(zs[0].0, zs[0].1), cfg);
            for &(t, r, skip) in &zs {
                k.predict();
                if !skip {
                    k.update(&LineHypothesis::new(t, r));
                }
                let c = k.cov;
                for i in 0..4 {
                    for j in 0..4 {
                        proptest::prop_assert_eq!(c[i][j], c[j][i]);
                    }
                }
                proptest::prop_assert!(min_eig(&c) >= -1e-9 * (1.0 + k.trace()));
            }
        }
    }
}
