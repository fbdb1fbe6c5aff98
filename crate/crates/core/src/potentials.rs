//! CRF potentials: inter-frame smoothness, decision-tree mode selection and
//! the coupled border/lane structure constraint.

use std::fmt;
use std::ops::Add;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{exact_decimal, Real};
use crate::voting::{Cell, HypothesisGrid, LineHypothesis, Peak};

/// Extended-real potential value. `HardViolation` stands for minus infinity
/// and absorbs every sum it takes part in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential<T> {
    Finite(T),
    HardViolation,
}

impl<T: Real> Potential<T> {
    pub fn zero() -> Self {
        Potential::Finite(T::zero())
    }

    pub fn is_violation(&self) -> bool {
        matches!(self, Potential::HardViolation)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Finite(v) if *v == T::zero())
    }

    pub fn finite(&self) -> Option<T> {
        match self {
            Potential::Finite(v) => Some(*v),
            Potential::HardViolation => None,
        }
    }
}

impl<T: Real> Add for Potential<T> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        match (self, rhs) {
            (Potential::Finite(a), Potential::Finite(b)) => Potential::Finite(a + b),
            _ => Potential::HardViolation,
        }
    }
}

/// Thresholds of one mode-selection decision tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeThresholds<T> {
    /// Root test: `phi1 - phi2 > root_gap`.
    pub root_gap: T,
    /// Left child (root true): `phi1 > left_abs`.
    pub left_abs: T,
    /// Right child (root false): `phi2 > right_abs`.
    pub right_abs: T,
}

impl<T: Real> Default for TreeThresholds<T> {
    fn default() -> Self {
        TreeThresholds { root_gap: T::lit(50.0), left_abs: T::lit(16.0), right_abs: T::lit(10.0) }
    }
}

/// Which of the three candidate generators a selection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Unconstrained Type-1 voting.
    Free,
    /// Type-1 voting inside the inter-frame window.
    Tracked,
    /// Gradient voting inside the inter-frame window.
    Gradient,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Free, Mode::Tracked, Mode::Gradient];

    /// 1-based index used in reports.
    pub fn index(self) -> u8 {
        match self {
            Mode::Free => 1,
            Mode::Tracked => 2,
            Mode::Gradient => 3,
        }
    }

    pub fn slot(self) -> usize {
        self.index() as usize - 1
    }

    pub fn from_index(i: u8) -> Option<Mode> {
        match i {
            1 => Some(Mode::Free),
            2 => Some(Mode::Tracked),
            3 => Some(Mode::Gradient),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// The three candidate hypotheses of one track in one frame. A slot is empty
/// only after back perturbation, when its search space has no cell that
/// satisfies the structure constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet<T> {
    pub slots: [Option<Peak<T>>; 3],
}

impl<T: Real> CandidateSet<T> {
    pub fn new(c1: Peak<T>, c2: Peak<T>, c3: Peak<T>) -> Self {
        CandidateSet { slots: [Some(c1), Some(c2), Some(c3)] }
    }

    pub fn get(&self, mode: Mode) -> Option<&Peak<T>> {
        self.slots[mode.slot()].as_ref()
    }

    /// Vote weights, with empty slots reading as zero.
    pub fn phis(&self) -> [T; 3] {
        [0, 1, 2].map(|i| self.slots[i].map_or(T::zero(), |p| p.weight))
    }

    pub fn is_complete(&self) -> bool {
        self.slots.iter().all(Option::is_some)
    }
}

/// Learned and fixed scalars of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub sigma: T,
    pub lambda_bd_theta: T,
    pub lambda_bd_r: T,
    pub lambda_ln_theta: T,
    pub lambda_ln_r: T,
    pub lambda_mode: T,
    pub lambda_str1: T,
    pub lambda_str2: T,
    pub d1: T,
    pub d2: T,
    pub d3: T,
    pub a: T,
    pub b: T,
    pub tree_bd: TreeThresholds<T>,
    pub tree_ln: TreeThresholds<T>,
    /// Rescale gradient votes to the Type-1 weight scale before the tree.
    pub calibrate_gradient: bool,
}

/// Lower and upper clamp of the minimum border/lane separation.
pub const DMIN_FLOOR: f64 = 10.0;
pub const DMIN_CEIL: f64 = 27.0;

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        ModelParams {
            sigma: T::lit(5.0),
            lambda_bd_theta: T::deg(1.5),
            lambda_bd_r: T::lit(3.0),
            lambda_ln_theta: T::deg(1.5),
            lambda_ln_r: T::lit(3.0),
            lambda_mode: T::lit(1000.0),
            lambda_str1: T::deg(3.0),
            lambda_str2: T::deg(6.0),
            d1: T::lit(10.0),
            d2: T::lit(17.0),
            d3: T::lit(35.0),
            a: T::lit(0.1),
            b: T::lit(8.0),
            tree_bd: TreeThresholds::default(),
            tree_ln: TreeThresholds::default(),
            calibrate_gradient: true,
        }
    }
}

const PARAM_KEYS: [&str; 22] = [
    "sigma",
    "lambda_bd_theta",
    "lambda_bd_r",
    "lambda_ln_theta",
    "lambda_ln_r",
    "lambda_mode",
    "lambda_str1",
    "lambda_str2",
    "d1",
    "d2",
    "d3",
    "a",
    "b",
    "tree_bd.root_gap",
    "tree_bd.left_abs",
    "tree_bd.right_abs",
    "tree_ln.root_gap",
    "tree_ln.left_abs",
    "tree_ln.right_abs",
    "calibrate_gradient",
    // accepted for readability in hand-written files; stored as radians
    "lambda_str1_deg",
    "lambda_str2_deg",
];

impl<T: Real> ModelParams<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sigma,
            self.lambda_bd_theta,
            self.lambda_bd_r,
            self.lambda_ln_theta,
            self.lambda_ln_r,
            self.lambda_mode,
            self.lambda_str1,
            self.lambda_str2,
            self.d1,
            self.d2,
            self.d3,
            self.a,
            self.b,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("model parameters must be finite".into()));
        }
        if !(self.sigma > T::zero()) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if all[1..8].iter().any(|v| *v < T::zero()) {
            return Err(Error::Config("lambdas must be nonnegative".into()));
        }
        if !(self.d1 < self.d2 && self.d2 < self.d3) {
            return Err(Error::Config("separation bands need d1 < d2 < d3".into()));
        }
        Ok(())
    }

    /// Copy with every inter-frame and parallelism tolerance raised to at
    /// least one grid step on its axis.
    pub fn floored(&self, grid: &HypothesisGrid<T>) -> Self {
        let (ts, rs) = (grid.theta_step(), grid.r_step());
        ModelParams {
            lambda_bd_theta: self.lambda_bd_theta.max(ts),
            lambda_bd_r: self.lambda_bd_r.max(rs),
            lambda_ln_theta: self.lambda_ln_theta.max(ts),
            lambda_ln_r: self.lambda_ln_r.max(rs),
            lambda_str1: self.lambda_str1.max(ts),
            lambda_str2: self.lambda_str2.max(ts),
            ..*self
        }
    }

    pub fn window(&self, track: Track) -> (T, T) {
        match track {
            Track::Border => (self.lambda_bd_theta, self.lambda_bd_r),
            Track::Lane => (self.lambda_ln_theta, self.lambda_ln_r),
        }
    }

    pub fn tree(&self, track: Track) -> &TreeThresholds<T> {
        match track {
            Track::Border => &self.tree_bd,
            Track::Lane => &self.tree_ln,
        }
    }

    /// `name = value` lines, 17 significant digits, fixed key order.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# structured hough voting model parameters (angles in radians)\n");
        let rows: [(&str, T); 19] = [
            ("sigma", self.sigma),
            ("lambda_bd_theta", self.lambda_bd_theta),
            ("lambda_bd_r", self.lambda_bd_r),
            ("lambda_ln_theta", self.lambda_ln_theta),
            ("lambda_ln_r", self.lambda_ln_r),
            ("lambda_mode", self.lambda_mode),
            ("lambda_str1", self.lambda_str1),
            ("lambda_str2", self.lambda_str2),
            ("d1", self.d1),
            ("d2", self.d2),
            ("d3", self.d3),
            ("a", self.a),
            ("b", self.b),
            ("tree_bd.root_gap", self.tree_bd.root_gap),
            ("tree_bd.left_abs", self.tree_bd.left_abs),
            ("tree_bd.right_abs", self.tree_bd.right_abs),
            ("tree_ln.root_gap", self.tree_ln.root_gap),
            ("tree_ln.left_abs", self.tree_ln.left_abs),
            ("tree_ln.right_abs", self.tree_ln.right_abs),
        ];
        for (k, v) in rows {
            s.push_str(&format!("{k} = {}\n", exact_decimal(v)));
        }
        s.push_str(&format!("calibrate_gradient = {}\n", u8::from(self.calibrate_gradient)));
        s
    }

    /// Parses [`ModelParams::to_text`] output. Missing keys keep their
    /// defaults; unknown keys are errors.
    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut p = ModelParams::<T>::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, no + 1, format!("expected `name = value`, got {raw:?}")))?;
            let key = key.trim();
            let value = value.trim();
            if !PARAM_KEYS.contains(&key) {
                return Err(Error::parse(origin, no + 1, format!("unknown parameter {key:?}")));
            }
            if key == "calibrate_gradient" {
                p.calibrate_gradient = match value {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    other => return Err(Error::parse(origin, no + 1, format!("expected 0/1, got {other:?}"))),
                };
                continue;
            }
            let v: f64 = value
                .parse()
                .map_err(|e| Error::parse(origin, no + 1, format!("{key}: {e}")))?;
            let t = T::lit(v);
            match key {
                "sigma" => p.sigma = t,
                "lambda_bd_theta" => p.lambda_bd_theta = t,
                "lambda_bd_r" => p.lambda_bd_r = t,
                "lambda_ln_theta" => p.lambda_ln_theta = t,
                "lambda_ln_r" => p.lambda_ln_r = t,
                "lambda_mode" => p.lambda_mode = t,
                "lambda_str1" => p.lambda_str1 = t,
                "lambda_str2" => p.lambda_str2 = t,
                "lambda_str1_deg" => p.lambda_str1 = T::deg(v),
                "lambda_str2_deg" => p.lambda_str2 = T::deg(v),
                "d1" => p.d1 = t,
                "d2" => p.d2 = t,
                "d3" => p.d3 = t,
                "a" => p.a = t,
                "b" => p.b = t,
                "tree_bd.root_gap" => p.tree_bd.root_gap = t,
                "tree_bd.left_abs" => p.tree_bd.left_abs = t,
                "tree_bd.right_abs" => p.tree_bd.right_abs = t,
                "tree_ln.root_gap" => p.tree_ln.root_gap = t,
                "tree_ln.left_abs" => p.tree_ln.left_abs = t,
                "tree_ln.right_abs" => p.tree_ln.right_abs = t,
                _ => unreachable!(),
            }
        }
        p.validate().map_err(|e| Error::parse(origin, 0, e.to_string()))?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Track {
    Border,
    Lane,
}

/// Zero when `cur` lies strictly inside the inter-frame tolerance of `prev`.
pub fn interframe_potential<T: Real>(
    prev: &LineHypothesis<T>,
    cur: &LineHypothesis<T>,
    lambda_theta: T,
    lambda_r: T,
) -> Potential<T> {
    if (prev.theta - cur.theta).abs() < lambda_theta && (prev.r - cur.r).abs() < lambda_r {
        Potential::zero()
    } else {
        Potential::HardViolation
    }
}

/// Minimum border/lane separation as a clamped linear function of the lane
/// line offset.
pub fn d_min<T: Real>(r_ln: T, a: T, b: T) -> T {
    (a * r_ln + b).min(T::lit(DMIN_CEIL)).max(T::lit(DMIN_FLOOR))
}

/// Coupled structure constraint between a border line and a lane-marking
/// line, both in the road frame (the border carries the larger `r`).
pub fn coupled_structure<T: Real>(bd: &LineHypothesis<T>, ln: &LineHypothesis<T>, p: &ModelParams<T>) -> Potential<T> {
    if structure_holds(bd, ln, p) {
        Potential::zero()
    } else {
        Potential::HardViolation
    }
}

#[inline]
pub fn structure_holds<T: Real>(bd: &LineHypothesis<T>, ln: &LineHypothesis<T>, p: &ModelParams<T>) -> bool {
    let dr = bd.r - ln.r;
    if dr >= p.d3 {
        return true;
    }
    let dtheta = (bd.theta - ln.theta).abs();
    let clear = dr >= d_min(ln.r, p.a, p.b);
    (clear && p.d1 <= dr && dr < p.d2 && dtheta <= p.lambda_str1)
        || (clear && p.d2 <= dr && dr < p.d3 && dtheta <= p.lambda_str2)
}

/// Mode picked by the decision tree from the candidate vote weights.
pub fn tree_select<T: Real>(phis: [T; 3], t: &TreeThresholds<T>) -> Mode {
    let [phi1, phi2, _] = phis;
    if phi1 - phi2 > t.root_gap {
        if phi1 > t.left_abs {
            Mode::Free
        } else {
            Mode::Gradient
        }
    } else if phi2 > t.right_abs {
        Mode::Tracked
    } else {
        Mode::Gradient
    }
}

/// Zero for the tree's choice, `-lambda_mode` for another candidate, hard
/// violation for anything else. Equality is grid-cell identity.
pub fn mode_selection_potential<T: Real>(
    selected: Cell,
    cands: &CandidateSet<T>,
    tree_choice: Mode,
    lambda_mode: T,
) -> Potential<T> {
    if cands.get(tree_choice).is_some_and(|c| c.cell == selected) {
        return Potential::zero();
    }
    if cands.slots.iter().flatten().any(|c| c.cell == selected) {
        return Potential::Finite(-lambda_mode);
    }
    Potential::HardViolation
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn h(theta: f64, r: f64) -> LineHypothesis<f64> {
        LineHypothesis::new(theta, r)
    }

    fn peak(ti: usize, ri: usize, w: f64) -> Peak<f64> {
        Peak { cell: Cell { ti, ri }, line: h(FRAC_PI_2, ri as f64), weight: w }
    }

    #[test]
    fn interframe_examples() {
        let a = h(1.5, 40.0);
        assert!(interframe_potential(&a, &a, 0.02, 3.0).is_zero());
        // exact boundary: representable offsets
        assert!(interframe_potential(&h(1.0, 40.0), &h(1.5, 40.0), 0.5, 3.0).is_violation());
        assert!(interframe_potential(&a, &h(1.5, 45.0), 0.02, 3.0).is_violation());
    }

    #[test]
    fn dmin_examples() {
        assert_eq!(d_min(50.0, 1.0, 0.0), 27.0);
        assert_eq!(d_min(3.0, 1.0, 0.0), 10.0);
        assert!((d_min(100.0f64, 0.1, 5.0) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn coupled_structure_examples() {
        let p = ModelParams::<f64> { a: 0.0, b: 10.0, ..Default::default() };
        let ln = h(FRAC_PI_2, 20.0);
        assert!(coupled_structure(&h(1.3, 55.0), &ln, &p).is_zero());
        assert!(coupled_structure(&h(FRAC_PI_2 + 0.01, 32.0), &ln, &p).is_zero());
        assert!(coupled_structure(&h(FRAC_PI_2 + 0.2, 32.0), &ln, &p).is_violation());
        assert!(coupled_structure(&h(FRAC_PI_2, 25.0), &ln, &p).is_violation());
        // border below the lane line
        assert!(coupled_structure(&h(FRAC_PI_2, 0.0), &ln, &p).is_violation());
    }

    #[test]
    fn dmin_above_d2_empties_first_band() {
        let p = ModelParams::<f64> { a: 0.0, b: 20.0, ..Default::default() };
        let ln = h(FRAC_PI_2, 20.0);
        assert!(coupled_structure(&h(FRAC_PI_2, 20.0 + 16.0), &ln, &p).is_violation());
        assert!(coupled_structure(&h(FRAC_PI_2, 20.0 + 21.0), &ln, &p).is_zero());
    }

    #[test]
    fn tree_examples() {
        let t = TreeThresholds::<f64>::default();
        assert_eq!(tree_select([70.0, 10.0, 5.0], &t), Mode::Free);
        assert_eq!(tree_select([20.0, 15.0, 5.0], &t), Mode::Tracked);
        assert_eq!(tree_select([8.0, 6.0, 30.0], &t), Mode::Gradient);
        let low = TreeThresholds { root_gap: -100.0, left_abs: 16.0, right_abs: 10.0 };
        assert_eq!(tree_select([8.0, 6.0, 30.0], &low), Mode::Gradient);
    }

    #[test]
    fn mode_potential_examples() {
        let c = CandidateSet::new(peak(1, 1, 5.0), peak(2, 2, 4.0), peak(3, 3, 3.0));
        assert!(mode_selection_potential(Cell { ti: 2, ri: 2 }, &c, Mode::Tracked, 7.0).is_zero());
        assert_eq!(mode_selection_potential(Cell { ti: 1, ri: 1 }, &c, Mode::Tracked, 7.0), Potential::Finite(-7.0));
        assert!(mode_selection_potential(Cell { ti: 9, ri: 9 }, &c, Mode::Tracked, 7.0).is_violation());
    }

    #[test]
    fn hard_violation_absorbs() {
        let v = Potential::<f64>::HardViolation;
        assert!((Potential::Finite(3.0) + v).is_violation());
        assert!((v + Potential::Finite(-1e300)).is_violation());
        assert_eq!(Potential::Finite(1.0) + Potential::Finite(2.0), Potential::Finite(3.0));
    }

    #[test]
    fn params_text_round_trip_is_bit_exact() {
        let p = ModelParams::<f64> {
            lambda_bd_theta: 0.1f64.sqrt(),
            a: 1.0 / 3.0,
            b: std::f64::consts::E,
            calibrate_gradient: false,
            ..Default::default()
        };
        let back = ModelParams::<f64>::from_text(&p.to_text(), "mem").unwrap();
        assert_eq!(p, back);
        assert_eq!(back.to_text(), p.to_text());
    }

    #[test]
    fn params_parse_errors_name_the_line() {
        let err = ModelParams::<f64>::from_text("sigma = 5\nbogus = 1\n", "p.txt").unwrap_err();
        assert!(err.to_string().starts_with("p.txt:2:"), "{err}");
        assert!(ModelParams::<f64>::from_text("d1 = 20\n", "p.txt").is_err());
    }

    proptest! {
        #[test]
        fn structure_monotone_beyond_d3(dr in 35.0..80.0f64, extra in 0.0..40.0f64, dth in 0.0..0.5f64, rl in 0.0..60.0f64) {
            let p = ModelParams::<f64>::default();
            let ln = h(FRAC_PI_2, rl);
            let a = coupled_structure(&h(FRAC_PI_2 + dth, rl + dr), &ln, &p);
            let b = coupled_structure(&h(FRAC_PI_2 + dth, rl + dr + extra), &ln, &p);
            prop_assert!(a.is_zero());
            prop_assert!(b.is_zero());
        }

        #[test]
        fn tree_is_total(a in -1e3..1e3f64, b in -1e3..1e3f64, c in -1e3..1e3f64) {
            let m = tree_select([a, b, c], &TreeThresholds::default());
            prop_assert!(Mode::ALL.contains(&m));
        }
    }
}
