//! Synthetic road scenes with scripted adversities.
//!
//! A scene is a lane line and a border line drifting over time (road frame,
//! `y` up from the image bottom). Each frame emits detector voters sampled
//! on the true lines plus scripted outliers, and gradient voters either from
//! a rendered image or sampled directly around the lines.
//!
//! Randomness comes from PCG32 (`rand_pcg::Pcg32`, 64-bit LCG state with an
//! output permutation). The trajectory uses stream 0 of the seed; frame `f`
//! draws its voters from stream `f`, so frames can be regenerated
//! independently.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg32;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::inference::FrameObservation;
use crate::learning::GroundTruthFrame;
use crate::potentials::Track;
use crate::scalar::Real;
use crate::voting::{gradient_voters_auto, LineHypothesis, RoadFrame, VotingPoint};

/// Truth lines never come closer than this to the top or bottom edge.
const EDGE_MARGIN: f64 = 10.0;
/// Largest tilt of a truth line from horizontal, degrees.
const MAX_TILT_DEG: f64 = 3.0;
/// Truth angles are snapped to this step (degrees) and offsets to whole pixels.
const SNAP_THETA_DEG: f64 = 0.5;

const BACKGROUND_GRAY: f64 = 0.6;
const ROAD_GRAY: f64 = 0.25;
const STRIPE_GRAY: f64 = 0.9;
const STRIPE_HALF_WIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackSel {
    Border,
    Lane,
    Both,
}

impl TrackSel {
    pub fn covers(self, t: Track) -> bool {
        matches!((self, t), (TrackSel::Both, _) | (TrackSel::Border, Track::Border) | (TrackSel::Lane, Track::Lane))
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "bd" => Some(TrackSel::Border),
            "ln" => Some(TrackSel::Lane),
            "both" => Some(TrackSel::Both),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            TrackSel::Border => "bd",
            TrackSel::Lane => "ln",
            TrackSel::Both => "both",
        }
    }
}

/// Scripted adversity. Frame ranges are inclusive, 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// Offset step of one line. A lane jump leaves the border in place.
    Jump { frame: usize, track: Track, dr: f64 },
    /// No detector voters for the selected track(s).
    Dropout { track: TrackSel, from: usize, to: usize },
    /// Uniform fake detections, `rate * density` per track per frame, inside
    /// `region = [x0, y0, x1, y1]` (road frame; `None` means the whole image).
    Outliers { from: usize, to: usize, rate: f64, region: Option<[f64; 4]> },
    /// No image edge for the selected track(s): the line is not rendered and
    /// contributes no gradient voters.
    Edgeless { track: TrackSel, from: usize, to: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneScript {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Initial lines: angles in degrees, offsets in pixels.
    pub ln_theta: f64,
    pub ln_r: f64,
    pub bd_theta: f64,
    pub bd_r: f64,
    /// Per-frame Gaussian drift of the lane line (deg, px).
    pub drift_theta: f64,
    pub drift_r: f64,
    /// Per-frame Gaussian drift of the border-lane gap (deg, px).
    pub gap_drift_theta: f64,
    pub gap_drift_r: f64,
    /// Mean-reversion rate towards the (jump-adjusted) initial layout.
    pub reversion: f64,
    /// Smallest border-lane offset the drift may produce.
    pub min_gap: f64,
    pub density_bd: usize,
    pub density_ln: usize,
    /// Detector voter jitter, pixels; draws are truncated at 3 sigma.
    pub jitter: f64,
    /// Gradient samples per line (when not rendering).
    pub grad_density: usize,
    pub grad_jitter: f64,
    /// Background gradient voters per frame (when not rendering).
    pub grad_noise: usize,
    pub render: bool,
    pub render_noise: f64,
    pub events: Vec<Event>,
}

impl Default for SceneScript {
    fn default() -> Self {
        SceneScript {
            frames: 300,
            width: 160,
            height: 120,
            ln_theta: 90.0,
            ln_r: 40.0,
            bd_theta: 90.0,
            bd_r: 78.0,
            drift_theta: 0.5,
            drift_r: 1.0,
            gap_drift_theta: 0.2,
            gap_drift_r: 0.5,
            reversion: 0.05,
            min_gap: 36.0,
            density_bd: 80,
            density_ln: 80,
            jitter: 1.0,
            grad_density: 60,
            grad_jitter: 2.0,
            grad_noise: 40,
            render: false,
            render_noise: 0.02,
            events: Vec::new(),
        }
    }
}

impl SceneScript {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.frames == 0 {
            return bad("frames must be at least 1".into());
        }
        if self.width == 0 || self.height < 3 {
            return bad(format!("image size {}x{} too small", self.width, self.height));
        }
        let nonneg = [
            ("drift_theta", self.drift_theta),
            ("drift_r", self.drift_r),
            ("gap_drift_theta", self.gap_drift_theta),
            ("gap_drift_r", self.gap_drift_r),
            ("jitter", self.jitter),
            ("grad_jitter", self.grad_jitter),
            ("render_noise", self.render_noise),
            ("min_gap", self.min_gap),
        ];
        for (k, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{k} must be finite and >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.reversion) {
            return bad(format!("reversion must lie in [0, 1], got {}", self.reversion));
        }
        for e in &self.events {
            check_event(e, self.frames).map_err(Error::Config)?;
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut s = SceneScript::default();
        let mut in_events = false;
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if line == "[events]" {
                    in_events = true;
                    continue;
                }
                return Err(Error::parse(origin, ln, format!("unknown section {line}")));
            }
            if in_events {
                let e = parse_event(line).and_then(|e| check_event(&e, s.frames).map(|_| e));
                s.events.push(e.map_err(|m| Error::parse(origin, ln, m))?);
            } else {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::parse(origin, ln, "expected `key = value`"))?;
                s.set(k.trim(), v.trim()).map_err(|m| Error::parse(origin, ln, m))?;
            }
        }
        s.validate().map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{origin}: {m}")),
            e => e,
        })?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<V: std::str::FromStr>(v: &str) -> std::result::Result<V, String>
        where
            V::Err: std::fmt::Display,
        {
            v.parse::<V>().map_err(|e| format!("bad value {v:?}: {e}"))
        }
        match key {
            "frames" => self.frames = num(value)?,
            "width" => self.width = num(value)?,
            "height" => self.height = num(value)?,
            "ln_theta" => self.ln_theta = num(value)?,
            "ln_r" => self.ln_r = num(value)?,
            "bd_theta" => self.bd_theta = num(value)?,
            "bd_r" => self.bd_r = num(value)?,
            "drift_theta" => self.drift_theta = num(value)?,
            "drift_r" => self.drift_r = num(value)?,
            "gap_drift_theta" => self.gap_drift_theta = num(value)?,
            "gap_drift_r" => self.gap_drift_r = num(value)?,
            "reversion" => self.reversion = num(value)?,
            "min_gap" => self.min_gap = num(value)?,
            "density_bd" => self.density_bd = num(value)?,
            "density_ln" => self.density_ln = num(value)?,
            "jitter" => self.jitter = num(value)?,
            "grad_density" => self.grad_density = num(value)?,
            "grad_jitter" => self.grad_jitter = num(value)?,
            "grad_noise" => self.grad_noise = num(value)?,
            "render" => self.render = num(value)?,
            "render_noise" => self.render_noise = num(value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Text form accepted by [`SceneScript::parse`].
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let kv: [(&str, String); 21] = [
            ("frames", self.frames.to_string()),
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("ln_theta", self.ln_theta.to_string()),
            ("ln_r", self.ln_r.to_string()),
            ("bd_theta", self.bd_theta.to_string()),
            ("bd_r", self.bd_r.to_string()),
            ("drift_theta", self.drift_theta.to_string()),
            ("drift_r", self.drift_r.to_string()),
            ("gap_drift_theta", self.gap_drift_theta.to_string()),
            ("gap_drift_r", self.gap_drift_r.to_string()),
            ("reversion", self.reversion.to_string()),
            ("min_gap", self.min_gap.to_string()),
            ("density_bd", self.density_bd.to_string()),
            ("density_ln", self.density_ln.to_string()),
            ("jitter", self.jitter.to_string()),
            ("grad_density", self.grad_density.to_string()),
            ("grad_jitter", self.grad_jitter.to_string()),
            ("grad_noise", self.grad_noise.to_string()),
            ("render", self.render.to_string()),
            ("render_noise", self.render_noise.to_string()),
        ];
        for (k, v) in kv {
            let _ = writeln!(o, "{k} = {v}");
        }
        if !self.events.is_empty() {
            o.push_str("\n[events]\n");
            for e in &self.events {
                let _ = match *e {
                    Event::Jump { frame, track, dr } => {
                        writeln!(o, "jump {frame} {} {dr}", if track == Track::Border { "bd" } else { "ln" })
                    }
                    Event::Dropout { track, from, to } => writeln!(o, "dropout {} {from} {to}", track.name()),
                    Event::Edgeless { track, from, to } => writeln!(o, "edgeless {} {from} {to}", track.name()),
                    Event::Outliers { from, to, rate, region: None } => writeln!(o, "outliers {from} {to} {rate}"),
                    Event::Outliers { from, to, rate, region: Some([a, b, c, d]) } => {
                        writeln!(o, "outliers {from} {to} {rate} {a} {b} {c} {d}")
                    }
                };
            }
        }
        o
    }

    fn dropped(&self, frame: usize, t: Track) -> bool {
        self.events.iter().any(|e| matches!(*e, Event::Dropout { track, from, to } if track.covers(t) && (from..=to).contains(&frame)))
    }

    fn edgeless(&self, frame: usize, t: Track) -> bool {
        self.events.iter().any(|e| matches!(*e, Event::Edgeless { track, from, to } if track.covers(t) && (from..=to).contains(&frame)))
    }
}

fn check_event(e: &Event, frames: usize) -> std::result::Result<(), String> {
    let (from, to) = match *e {
        Event::Jump { frame, dr, .. } => {
            if !dr.is_finite() {
                return Err("jump offset must be finite".into());
            }
            (frame, frame)
        }
        Event::Dropout { from, to, .. } | Event::Edgeless { from, to, .. } => (from, to),
        Event::Outliers { from, to, rate, .. } => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(format!("outlier rate must lie in [0, 1], got {rate}"));
            }
            (from, to)
        }
    };
    if from == 0 || from > to || to > frames {
        return Err(format!("event frames {from}..{to} outside 1..{frames}"));
    }
    Ok(())
}

fn parse_event(line: &str) -> std::result::Result<Event, String> {
    let tok: Vec<&str> = line.split_whitespace().collect();
    let f = |i: usize| -> std::result::Result<f64, String> {
        let t = tok.get(i).ok_or_else(|| format!("{}: missing field {}", tok[0], i))?;
        t.parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}"))
    };
    let u = |i: usize| -> std::result::Result<usize, String> {
        let t = tok.get(i).ok_or_else(|| format!("{}: missing field {}", tok[0], i))?;
        t.parse::<usize>().map_err(|e| format!("bad frame {t:?}: {e}"))
    };
    let sel = |i: usize| -> std::result::Result<TrackSel, String> {
        let t = tok.get(i).copied().unwrap_or("");
        TrackSel::parse(t).ok_or_else(|| format!("expected bd, ln or both, got {t:?}"))
    };
    let arity = |n: &[usize]| -> std::result::Result<(), String> {
        if n.contains(&tok.len()) {
            Ok(())
        } else {
            Err(format!("{}: wrong number of fields ({})", tok[0], tok.len() - 1))
        }
    };
    match tok[0] {
        "jump" => {
            arity(&[4])?;
            let track = match sel(2)? {
                TrackSel::Border => Track::Border,
                TrackSel::Lane => Track::Lane,
                TrackSel::Both => return Err("jump needs a single track".into()),
            };
            Ok(Event::Jump { frame: u(1)?, track, dr: f(3)? })
        }
        "dropout" => {
            arity(&[4])?;
            Ok(Event::Dropout { track: sel(1)?, from: u(2)?, to: u(3)? })
        }
        "edgeless" => {
            arity(&[4])?;
            Ok(Event::Edgeless { track: sel(1)?, from: u(2)?, to: u(3)? })
        }
        "outliers" => {
            arity(&[4, 8])?;
            let region = if tok.len() == 8 { Some([f(4)?, f(5)?, f(6)?, f(7)?]) } else { None };
            Ok(Event::Outliers { from: u(1)?, to: u(2)?, rate: f(3)?, region })
        }
        other => Err(format!("unknown event {other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence<T> {
    pub width: usize,
    pub height: usize,
    pub observations: Vec<FrameObservation<T>>,
    pub truth: Vec<GroundTruthFrame<T>>,
    pub images: Option<Vec<GrayImage<T>>>,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    ln_theta: f64,
    ln_r: f64,
    gap_theta: f64,
    gap_r: f64,
}

fn snap(theta_deg: f64, r: f64) -> (f64, f64) {
    ((theta_deg / SNAP_THETA_DEG).round() * SNAP_THETA_DEG, r.round())
}

fn truth_lines(s: &SceneScript, seed: u64) -> Vec<(LineHypothesis<f64>, LineHypothesis<f64>)> {
    let mut rng = Pcg32::new(seed, 0);
    let h = s.height as f64;
    let base0 = Layout {
        ln_theta: s.ln_theta,
        ln_r: s.ln_r,
        gap_theta: s.bd_theta - s.ln_theta,
        gap_r: s.bd_r - s.ln_r,
    };
    let mut base = base0;
    let mut cur = base0;
    let normal = |sd: f64| Normal::new(0.0, sd).expect("validated deviation");
    let (n_lt, n_lr, n_gt, n_gr) = (normal(s.drift_theta), normal(s.drift_r), normal(s.gap_drift_theta), normal(s.gap_drift_r));
    let k = s.reversion;
    let mut out = Vec::with_capacity(s.frames);
    for frame in 1..=s.frames {
        if frame > 1 {
            cur.ln_theta += n_lt.sample(&mut rng) - k * (cur.ln_theta - base.ln_theta);
            cur.ln_r += n_lr.sample(&mut rng) - k * (cur.ln_r - base.ln_r);
            cur.gap_theta += n_gt.sample(&mut rng) - k * (cur.gap_theta - base.gap_theta);
            cur.gap_r += n_gr.sample(&mut rng) - k * (cur.gap_r - base.gap_r);
        }
        for e in &s.events {
            if let Event::Jump { frame: jf, track, dr } = *e {
                if jf == frame {
                    match track {
                        Track::Border => {
                            cur.gap_r += dr;
                            base.gap_r += dr;
                        }
                        Track::Lane => {
                            cur.ln_r += dr;
                            base.ln_r += dr;
                            cur.gap_r -= dr;
                            base.gap_r -= dr;
                        }
                    }
                }
            }
        }
        let lo = 90.0 - MAX_TILT_DEG;
        let hi = 90.0 + MAX_TILT_DEG;
        cur.ln_theta = cur.ln_theta.clamp(lo, hi);
        cur.gap_theta = cur.gap_theta.clamp(lo - cur.ln_theta, hi - cur.ln_theta);
        cur.gap_r = cur.gap_r.clamp(s.min_gap.min(h - 2.0 * EDGE_MARGIN), h - 2.0 * EDGE_MARGIN);
        cur.ln_r = cur.ln_r.clamp(EDGE_MARGIN, h - EDGE_MARGIN - cur.gap_r);

        let (lt, lr) = snap(cur.ln_theta, cur.ln_r);
        let (bt, br) = snap(cur.ln_theta + cur.gap_theta, cur.ln_r + cur.gap_r);
        out.push((LineHypothesis::new(bt.to_radians(), br), LineHypothesis::new(lt.to_radians(), lr)));
    }
    out
}

/// Gaussian draw truncated (by resampling) to `[-3 sd, 3 sd]`.
fn truncated(rng: &mut Pcg32, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    let n = Normal::new(0.0, sd).expect("finite deviation");
    loop {
        let v: f64 = n.sample(rng);
        if v.abs() <= 3.0 * sd {
            return v;
        }
    }
}

fn sample_line(rng: &mut Pcg32, line: &LineHypothesis<f64>, width: f64, sd: f64) -> (f64, f64) {
    let x = rng.random_range(0.0..width);
    let y = line.y_at(x).expect("truth lines are near horizontal");
    // perpendicular offset, so the residual is exactly the draw
    let d = truncated(rng, sd);
    (x + d * line.theta.cos(), y + d * line.theta.sin())
}

/// Renders one frame in image coordinates (row 0 at the top): a dark road
/// surface below the border line, a bright stripe of half-width 1 px around
/// the lane line, and additive Gaussian noise. Lines flagged in `hide` are
/// not drawn.
pub fn render_frame<T: Real>(
    bd: &LineHypothesis<T>,
    ln: &LineHypothesis<T>,
    width: usize,
    height: usize,
    noise: f64,
    hide: (bool, bool),
    rng: &mut Pcg32,
) -> GrayImage<T> {
    let (bd, ln) = (as_f64_line(bd), as_f64_line(ln));
    let h = height as f64;
    let n = (noise > 0.0).then(|| Normal::new(0.0, noise).expect("finite noise"));
    GrayImage::from_fn(width, height, |x, yi| {
        let xf = x as f64;
        let y = h - yi as f64;
        let y_bd = bd.y_at(xf).unwrap_or(f64::INFINITY);
        let y_ln = ln.y_at(xf).unwrap_or(f64::INFINITY);
        let mut v = if hide.0 || y < y_bd { ROAD_GRAY } else { BACKGROUND_GRAY };
        if !hide.1 && (y - y_ln).abs() <= STRIPE_HALF_WIDTH {
            v = STRIPE_GRAY;
        }
        if let Some(n) = &n {
            v += n.sample(rng);
        }
        T::lit(v)
    })
}

fn as_f64_line<T: Real>(l: &LineHypothesis<T>) -> LineHypothesis<f64> {
    LineHypothesis { theta: l.theta.as_f64(), r: l.r.as_f64() }
}

fn voter<T: Real>(x: f64, y: f64, w: f64) -> VotingPoint<T> {
    VotingPoint::new(T::lit(x), T::lit(y), T::lit(w))
}

/// Deterministic in `(script, seed)`.
pub fn generate<T: Real>(script: &SceneScript, seed: u64) -> Result<SyntheticSequence<T>> {
    script.validate()?;
    let s = script;
    let (w, h) = (s.width as f64, s.height as f64);
    let lines = truth_lines(s, seed);
    let frame_map = RoadFrame::<T>::new(s.height);
    let mut observations = Vec::with_capacity(s.frames);
    let mut truth = Vec::with_capacity(s.frames);
    let mut images = s.render.then(Vec::new);

    for (i, (bd, ln)) in lines.iter().enumerate() {
        let frame = i + 1;
        let mut rng = Pcg32::new(seed, frame as u64);
        let mut obs = FrameObservation::empty(frame);

        for (track, line, density) in [(Track::Border, bd, s.density_bd), (Track::Lane, ln, s.density_ln)] {
            let out = match track {
                Track::Border => &mut obs.bd_voters,
                Track::Lane => &mut obs.ln_voters,
            };
            if !s.dropped(frame, track) {
                for _ in 0..density {
                    let (x, y) = sample_line(&mut rng, line, w, s.jitter);
                    out.push(voter(x, y, 1.0));
                }
            }
            for e in &s.events {
                if let Event::Outliers { from, to, rate, region } = *e {
                    if (from..=to).contains(&frame) {
                        let [x0, y0, x1, y1] = region.unwrap_or([0.0, 0.0, w, h]);
                        let n = (rate * density as f64).round() as usize;
                        for _ in 0..n {
                            let x = x0 + (x1 - x0) * rng.random::<f64>();
                            let y = y0 + (y1 - y0) * rng.random::<f64>();
                            out.push(voter(x, y, 1.0));
                        }
                    }
                }
            }
        }

        let hide = (s.edgeless(frame, Track::Border), s.edgeless(frame, Track::Lane));
        let (bd_t, ln_t) = (to_t(bd), to_t(ln));
        if let Some(imgs) = images.as_mut() {
            let img = render_frame::<T>(&bd_t, &ln_t, s.width, s.height, s.render_noise, hide, &mut rng);
            obs.grad_voters = frame_map.flip_points(&gradient_voters_auto(&img));
            imgs.push(img);
        } else {
            for (line, hidden) in [(bd, hide.0), (ln, hide.1)] {
                if hidden {
                    continue;
                }
                for _ in 0..s.grad_density {
                    let (x, y) = sample_line(&mut rng, line, w, s.grad_jitter);
                    let wgt = rng.random_range(0.5..1.0);
                    obs.grad_voters.push(voter(x, y, wgt));
                }
            }
            for _ in 0..s.grad_noise {
                let x = w * rng.random::<f64>();
                let y = h * rng.random::<f64>();
                let wgt = rng.random_range(0.05..0.3);
                obs.grad_voters.push(voter(x, y, wgt));
            }
        }
        observations.push(obs);
        truth.push(GroundTruthFrame::new(frame, bd_t, ln_t));
    }
    Ok(SyntheticSequence { width: s.width, height: s.height, observations, truth, images })
}

fn to_t<T: Real>(l: &LineHypothesis<f64>) -> LineHypothesis<T> {
    LineHypothesis { theta: T::lit(l.theta), r: T::lit(l.r) }
}

/// Ready-made scripts used by the evaluation suites.
pub mod presets {
    use super::*;

    /// A border entrance: the border steps out by `dr` at `frame`, nothing
    /// else happens.
    pub fn entrance(frames: usize, frame: usize, dr: f64) -> SceneScript {
        SceneScript {
            frames,
            events: vec![Event::Jump { frame, track: Track::Border, dr }],
            ..SceneScript::default()
        }
    }

    /// 500 frames of dropouts on either and both tracks, with jumps and 20%
    /// outliers throughout.
    pub fn dropout_outlier() -> SceneScript {
        use Event::*;
        use TrackSel::*;
        SceneScript {
            frames: 500,
            events: vec![
                Outliers { from: 1, to: 500, rate: 0.2, region: None },
                Jump { frame: 60, track: Track::Border, dr: 30.0 },
                Dropout { track: Lane, from: 80, to: 110 },
                Jump { frame: 150, track: Track::Lane, dr: -20.0 },
                Dropout { track: Border, from: 180, to: 200 },
                Dropout { track: Both, from: 240, to: 255 },
                Jump { frame: 300, track: Track::Border, dr: -25.0 },
                Dropout { track: Lane, from: 330, to: 370 },
                Jump { frame: 420, track: Track::Lane, dr: 15.0 },
                Dropout { track: Border, from: 440, to: 460 },
            ],
            ..SceneScript::default()
        }
    }

    /// The `index`-th member of a family of randomized adversarial scripts:
    /// jumps of 25-40 px on either track, dropouts of 5-25 frames and 20%
    /// outliers.
    pub fn stress(index: u64) -> SceneScript {
        let frames = 200;
        let mut rng = Pcg32::new(0x5eed_0000 + index, 1);
        let mut events = vec![Event::Outliers { from: 1, to: frames, rate: 0.2, region: None }];
        for _ in 0..3 {
            let frame = rng.random_range(10..frames);
            let track = if rng.random::<bool>() { Track::Border } else { Track::Lane };
            let mag = rng.random_range(25.0..40.0_f64).round();
            let dr = if rng.random::<bool>() { mag } else { -mag };
            events.push(Event::Jump { frame, track, dr });
        }
        for _ in 0..3 {
            let from = rng.random_range(2..frames - 30);
            let len = rng.random_range(5..=25);
            let track = [TrackSel::Border, TrackSel::Lane, TrackSel::Both][rng.random_range(0..3)];
            events.push(Event::Dropout { track, from, to: from + len - 1 });
        }
        if rng.random::<bool>() {
            let from = rng.random_range(2..frames - 30);
            let track = [TrackSel::Border, TrackSel::Lane, TrackSel::Both][rng.random_range(0..3)];
            events.push(Event::Edgeless { track, from, to: from + 15 });
        }
        SceneScript { frames, events, ..SceneScript::default() }
    }
}
