//! Window classifier: linear discriminant projection followed by an RBF
//! kernel expansion.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::scan::window_center;
use crate::features::{FeatureContext, FilterBank, Rect, WindowSpec};
use crate::learning::GroundTruthFrame;
use crate::potentials::Track;
use crate::scalar::Real;
use crate::simulation::SyntheticSequence;

const HEADER: &str = "shv-detector v1";

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub feature_dim: usize,
    pub reduced_dim: usize,
    /// `feature_dim x reduced_dim`, row-major.
    pub projection: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Kernel bandwidth.
    pub gamma: f64,
    /// Windows scoring strictly above this fire.
    pub threshold: f64,
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if self.projection.len() != self.feature_dim * self.reduced_dim {
            return Err(Error::Dimension { expected: self.feature_dim * self.reduced_dim, got: self.projection.len() });
        }
        if self.weights.len() != self.centers.len() {
            return Err(Error::Dimension { expected: self.centers.len(), got: self.weights.len() });
        }
        if let Some(c) = self.centers.iter().find(|c| c.len() != self.reduced_dim) {
            return Err(Error::Dimension { expected: self.reduced_dim, got: c.len() });
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("kernel bandwidth must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn score(&self, f: &[f64]) -> Result<f64> {
        rbf_score(&fda_project(f, self)?, self)
    }

    pub fn to_text(&self) -> String {
        let mut o = format!("{HEADER}\n");
        let _ = writeln!(o, "feature_dim {}", self.feature_dim);
        let _ = writeln!(o, "reduced_dim {}", self.reduced_dim);
        let _ = writeln!(o, "centers {}", self.centers.len());
        let _ = writeln!(o, "gamma {}", self.gamma);
        let _ = writeln!(o, "bias {}", self.bias);
        let _ = writeln!(o, "threshold {}", self.threshold);
        o.push_str("projection\n");
        for row in self.projection.chunks(self.reduced_dim.max(1)) {
            o.push_str(&join(row));
            o.push('\n');
        }
        o.push_str("centers\n");
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let mut v = c.clone();
            v.push(*w);
            o.push_str(&join(&v));
            o.push('\n');
        }
        o
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut rd = Reader {
            lines: text
                .lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
                .filter(|(_, l)| !l.is_empty())
                .collect(),
            pos: 0,
            origin,
        };
        let (ln, h) = rd.next("header")?;
        if h != HEADER {
            return Err(Error::parse(origin, ln, format!("expected header {HEADER:?}, got {h:?}")));
        }
        let feature_dim = rd.field("feature_dim")?;
        let reduced_dim = rd.field("reduced_dim")?;
        let n_centers = rd.field("centers")?;
        let gamma = rd.field("gamma")?;
        let bias = rd.field("bias")?;
        let threshold = rd.field("threshold")?;
        rd.tag("projection")?;
        let mut projection = Vec::with_capacity(feature_dim * reduced_dim);
        for _ in 0..feature_dim {
            projection.extend(rd.row(reduced_dim, "projection row")?);
        }
        rd.tag("centers")?;
        let mut centers = Vec::with_capacity(n_centers);
        let mut weights = Vec::with_capacity(n_centers);
        for _ in 0..n_centers {
            let mut v = rd.row(reduced_dim + 1, "center row")?;
            weights.push(v.pop().expect("non-empty row"));
            centers.push(v);
        }
        let m = DetectorModel { feature_dim, reduced_dim, projection, centers, weights, bias, gamma, threshold };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

struct Reader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let l = self.lines.get(self.pos).copied();
        self.pos += 1;
        l.ok_or_else(|| Error::parse(self.origin, 0, format!("unexpected end of file, expected {what}")))
    }

    fn field<V: std::str::FromStr>(&mut self, key: &str) -> Result<V>
    where
        V::Err: std::fmt::Display,
    {
        let (ln, l) = self.next(key)?;
        match l.split_once(char::is_whitespace) {
            Some((k, v)) if k == key => v.trim().parse().map_err(|e: V::Err| Error::parse(self.origin, ln, e.to_string())),
            _ => Err(Error::parse(self.origin, ln, format!("expected `{key} <value>`"))),
        }
    }

    fn tag(&mut self, tag: &str) -> Result<()> {
        let (ln, l) = self.next(tag)?;
        if l != tag {
            return Err(Error::parse(self.origin, ln, format!("expected `{tag}`")));
        }
        Ok(())
    }

    fn row(&mut self, len: usize, what: &str) -> Result<Vec<f64>> {
        let (ln, l) = self.next(what)?;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::parse(self.origin, ln, format!("bad number {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != len {
            return Err(Error::parse(self.origin, ln, format!("{what}: expected {len} numbers, got {}", v.len())));
        }
        Ok(v)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// `f^T P`.
pub fn fda_project(f: &[f64], m: &DetectorModel) -> Result<Vec<f64>> {
    if f.len() != m.feature_dim {
        return Err(Error::Dimension { expected: m.feature_dim, got: f.len() });
    }
    let mut out = vec![0.0; m.reduced_dim];
    for (i, fi) in f.iter().enumerate() {
        let row = &m.projection[i * m.reduced_dim..(i + 1) * m.reduced_dim];
        for (o, p) in out.iter_mut().zip(row) {
            *o += fi * p;
        }
    }
    Ok(out)
}

/// `sum_k w_k exp(-|v - c_k|^2 / (2 gamma^2)) + bias`.
pub fn rbf_score(v: &[f64], m: &DetectorModel) -> Result<f64> {
    if v.len() != m.reduced_dim {
        return Err(Error::Dimension { expected: m.reduced_dim, got: v.len() });
    }
    let two_g2 = 2.0 * m.gamma * m.gamma;
    let mut s = m.bias;
    for (c, w) in m.centers.iter().zip(&m.weights) {
        let d2: f64 = v.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        s += w * (-d2 / two_g2).exp();
    }
    Ok(s)
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::Learning("singular within-class scatter; increase the ridge".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

fn mean(v: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for x in v {
        for (a, b) in m.iter_mut().zip(x) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|a| *a /= v.len() as f64);
    m
}

/// Two-class Fisher direction `(S_w + ridge I)^-1 (mu_pos - mu_neg)`.
/// Positives project above negatives on average.
pub fn fda_train(pos: &[Vec<f64>], neg: &[Vec<f64>], ridge: f64) -> Result<Vec<f64>> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Learning("discriminant training needs samples of both classes".into()));
    }
    let dim = pos[0].len();
    if let Some(bad) = pos.iter().chain(neg).find(|x| x.len() != dim) {
        return Err(Error::Dimension { expected: dim, got: bad.len() });
    }
    let (mp, mn) = (mean(pos, dim), mean(neg, dim));
    let mut sw = vec![vec![0.0; dim]; dim];
    for (set, m) in [(pos, &mp), (neg, &mn)] {
        for x in set {
            for i in 0..dim {
                let di = x[i] - m[i];
                for j in 0..dim {
                    sw[i][j] += di * (x[j] - m[j]);
                }
            }
        }
    }
    for (i, row) in sw.iter_mut().enumerate() {
        row[i] += ridge;
    }
    let diff: Vec<f64> = mp.iter().zip(&mn).map(|(a, b)| a - b).collect();
    solve(sw, diff)
}

fn evenly(n: usize, k: usize) -> impl Iterator<Item = usize> {
    let k = k.min(n);
    (0..k).map(move |i| i * n / k)
}

/// One-dimensional discriminant followed by a Parzen-style kernel expansion:
/// positive samples carry weight `+1/n_pos`, negatives `-1/n_neg`, so the
/// score is the difference of the two class densities and fires above 0.
pub fn train_detector(pos: &[Vec<f64>], neg: &[Vec<f64>], ridge: f64, max_centers: usize) -> Result<DetectorModel> {
    let dir = fda_train(pos, neg, ridge)?;
    let dim = dir.len();
    let project = |x: &Vec<f64>| x.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
    let zp: Vec<f64> = pos.iter().map(project).collect();
    let zn: Vec<f64> = neg.iter().map(project).collect();
    let all: Vec<f64> = zp.iter().chain(&zn).copied().collect();
    let mu = all.iter().sum::<f64>() / all.len() as f64;
    let sd = (all.iter().map(|z| (z - mu) * (z - mu)).sum::<f64>() / all.len() as f64).sqrt();
    let gamma = (1.06 * sd * (all.len() as f64).powf(-0.2)).max(1e-6);
    let mut centers = Vec::new();
    let mut weights = Vec::new();
    for (z, sign) in [(&zp, 1.0), (&zn, -1.0)] {
        let idx: Vec<usize> = evenly(z.len(), max_centers).collect();
        for &i in &idx {
            centers.push(vec![z[i]]);
            weights.push(sign / idx.len() as f64);
        }
    }
    Ok(DetectorModel { feature_dim: dim, reduced_dim: 1, projection: dir, centers, weights, bias: 0.0, gamma, threshold: 0.0 })
}

/// Positive windows have their center within `pos_dist` px of the track's
/// line; negatives are at least `neg_dist` px away from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticTraining {
    pub pos_dist: f64,
    pub neg_dist: f64,
    pub max_samples: usize,
    pub max_centers: usize,
    pub ridge: f64,
}

impl Default for SyntheticTraining {
    fn default() -> Self {
        SyntheticTraining { pos_dist: 2.0, neg_dist: 6.0, max_samples: 600, max_centers: 60, ridge: 1e-3 }
    }
}

/// Distance in pixels from the center of `win` (image coordinates) to the
/// track's road-frame truth line.
pub fn window_distance<T: Real>(win: Rect, truth: &GroundTruthFrame<T>, track: Track, height: usize) -> f64 {
    let (cx, cy) = window_center(win);
    let l = match track {
        Track::Border => &truth.bd,
        Track::Lane => &truth.ln,
    };
    (l.theta.sin().as_f64() * (height as f64 - cy) + l.theta.cos().as_f64() * cx - l.r.as_f64()).abs()
}

/// Trains one detector per track on the rendered frames of `seq`.
pub fn train_synthetic_detectors<T: Real>(
    seq: &SyntheticSequence<T>,
    spec: &WindowSpec,
    bank: &FilterBank,
    cfg: &SyntheticTraining,
) -> Result<[DetectorModel; 2]> {
    let images = seq
        .images
        .as_ref()
        .ok_or_else(|| Error::Config("detector training needs rendered frames (set render = true)".into()))?;
    let mut samples: [(Vec<Vec<f64>>, Vec<Vec<f64>>); 2] = Default::default();
    for (img, truth) in images.iter().zip(&seq.truth) {
        spec.validate(img.width(), img.height())?;
        let ctx = FeatureContext::new(img, bank);
        for win in spec.windows(img.width(), img.height()) {
            let f = ctx.extract(win)?;
            for (slot, track) in [Track::Border, Track::Lane].into_iter().enumerate() {
                let d = window_distance(win, truth, track, seq.height);
                if d <= cfg.pos_dist {
                    samples[slot].0.push(f.clone());
                } else if d >= cfg.neg_dist {
                    samples[slot].1.push(f.clone());
                }
            }
        }
    }
    let train = |(pos, neg): &(Vec<Vec<f64>>, Vec<Vec<f64>>)| -> Result<DetectorModel> {
        let p: Vec<Vec<f64>> = evenly(pos.len(), cfg.max_samples).map(|i| pos[i].clone()).collect();
        let n: Vec<Vec<f64>> = evenly(neg.len(), cfg.max_samples).map(|i| neg[i].clone()).collect();
        train_detector(&p, &n, cfg.ridge, cfg.max_centers)
    };
    Ok([train(&samples[0])?, train(&samples[1])?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn model(dim: usize, rd: usize, projection: Vec<f64>) -> DetectorModel {
        DetectorModel {
            feature_dim: dim,
            reduced_dim: rd,
            projection,
            centers: vec![vec![0.0; rd]],
            weights: vec![1.0],
            bias: 0.0,
            gamma: 1.0,
            threshold: 0.5,
        }
    }

    #[test]
    fn identity_and_zero_projection() {
        let id = model(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(fda_project(&[1.0, -2.0, 3.5], &id).unwrap(), vec![1.0, -2.0, 3.5]);
        let z = model(3, 2, vec![0.0; 6]);
        assert_eq!(fda_project(&[1.0, -2.0, 3.5], &z).unwrap(), vec![0.0, 0.0]);
        assert!(fda_project(&[1.0], &z).is_err());
    }

    #[test]
    fn rbf_values() {
        let mut m = model(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        m.centers = vec![vec![1.0, 2.0]];
        assert_eq!(rbf_score(&[1.0, 2.0], &m).unwrap(), 1.0);
        m.bias = -0.25;
        assert_eq!(rbf_score(&[1e6, 2.0], &m).unwrap(), -0.25);
        m.centers = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        m.weights = vec![2.0, -0.5];
        m.gamma = 0.7;
        let v = [0.3, 0.9];
        let direct = -0.25
            + 2.0 * (-(0.09 + 0.81) / (2.0 * 0.49f64)).exp()
            - 0.5 * (-(0.49 + 0.01) / (2.0 * 0.49f64)).exp();
        assert!((rbf_score(&v, &m).unwrap() - direct).abs() < 1e-15);
        assert!(rbf_score(&[1.0], &m).is_err());
    }

    #[test]
    fn fda_matches_closed_form() {
        // isotropic classes: direction is proportional to the mean difference
        let mut rng = rand_pcg::Pcg32::seed_from_u64(3);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mu_p = [2.0, -1.0, 0.5];
        let draw = |mu: [f64; 3], rng: &mut rand_pcg::Pcg32| -> Vec<f64> { mu.iter().map(|m| m + n.sample(rng)).collect() };
        let pos: Vec<_> = (0..4000).map(|_| draw(mu_p, &mut rng)).collect();
        let neg: Vec<_> = (0..4000).map(|_| draw([0.0; 3], &mut rng)).collect();
        let w = fda_train(&pos, &neg, 0.0).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = w.iter().zip(&mu_p).map(|(a, b)| a * b).sum::<f64>() / (norm(&w) * norm(&mu_p));
        assert!(cos > 0.999, "{cos}");
        let proj = |x: &Vec<f64>| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let mp = pos.iter().map(proj).sum::<f64>() / 4000.0;
        let mn = neg.iter().map(proj).sum::<f64>() / 4000.0;
        assert!(mp > mn);
    }

    #[test]
    fn fda_exact_on_two_points_per_class() {
        // S_w = diag(2, 0) + ridge; mean difference (0, 4)
        let pos = vec![vec![1.0, 4.0], vec![-1.0, 4.0]];
        let neg = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let w = fda_train(&pos, &neg, 0.5).unwrap();
        assert!((w[0] - 0.0).abs() < 1e-15 && (w[1] - 8.0).abs() < 1e-12);
        assert!(fda_train(&pos, &neg, 0.0).is_err());
    }

    #[test]
    fn trained_detector_separates() {
        let mut rng = rand_pcg::Pcg32::seed_from_u64(9);
        let n = Normal::new(0.0, 1.0).unwrap();
        let pos: Vec<Vec<f64>> = (0..300).map(|_| vec![3.0 + n.sample(&mut rng), n.sample(&mut rng)]).collect();
        let neg: Vec<Vec<f64>> = (0..300).map(|_| vec![-3.0 + n.sample(&mut rng), n.sample(&mut rng)]).collect();
        let m = train_detector(&pos, &neg, 1e-6, 50).unwrap();
        assert!(m.score(&[3.0, 0.0]).unwrap() > m.threshold);
        assert!(m.score(&[-3.0, 0.0]).unwrap() < m.threshold);
    }

    #[test]
    fn text_round_trip() {
        let mut m = model(2, 2, vec![0.1, -0.2, 1.0 / 3.0, 4.0]);
        m.centers.push(vec![1.5, -2.5]);
        m.weights.push(-0.125);
        let back = DetectorModel::from_text(&m.to_text(), "m").unwrap();
        assert_eq!(back, m);
        let bad = m.to_text().replace("gamma 1", "gamma -1");
        assert!(DetectorModel::from_text(&bad, "m").is_err());
        let e = DetectorModel::from_text("shv-detector v2\n", "m.txt").unwrap_err();
        assert!(e.to_string().starts_with("m.txt:1:"));
    }

    #[test]
    fn synthetic_detectors_fire_near_their_lines() {
        use crate::simulation::{generate, SceneScript};
        let script = SceneScript { frames: 12, render: true, ..Default::default() };
        let train = generate::<f64>(&script, 1).unwrap();
        let (bank, spec) = (FilterBank::default(), WindowSpec::default());
        let models = train_synthetic_detectors(&train, &spec, &bank, &SyntheticTraining::default()).unwrap();
        let test = generate::<f64>(&SceneScript { frames: 3, ..script }, 2).unwrap();
        for (img, truth) in test.images.as_ref().unwrap().iter().zip(&test.truth) {
            let ctx = FeatureContext::new(img, &bank);
            for (m, track) in models.iter().zip([Track::Border, Track::Lane]) {
                let fired: Vec<f64> = spec
                    .windows(img.width(), img.height())
                    .into_iter()
                    .filter(|&w| m.score(&ctx.extract(w).unwrap()).unwrap() > m.threshold)
                    .map(|w| window_distance(w, truth, track, test.height))
                    .collect();
                assert!(fired.len() >= 10, "{track:?}: {} windows", fired.len());
                let near = fired.iter().filter(|&&d| d <= 6.0).count();
                assert!(near as f64 >= 0.95 * fired.len() as f64, "{track:?}: {near}/{}", fired.len());
            }
        }
        let untrained = SceneScript { frames: 2, ..Default::default() };
        let seq = generate::<f64>(&untrained, 1).unwrap();
        assert!(train_synthetic_detectors(&seq, &spec, &bank, &SyntheticTraining::default()).is_err());
    }
}
