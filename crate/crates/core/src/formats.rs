//! Text file formats.
//!
//! * Voters: `frame type x y w` per line, `type` one of `bd`, `ln`, `grad`,
//!   road-frame coordinates. An optional `# frames N` line declares trailing
//!   frames without voters.
//! * Ground truth: `frame theta_bd r_bd theta_ln r_ln`, angles in degrees.
//! * Shoulder polygons: `frame x1 y1 x2 y2 ...`.
//! * Results: one JSON object per line (see [`ResultRecord`]).
//!
//! `#` starts a comment everywhere. Numbers are written in shortest
//! round-trip form, so write-then-read is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::LinePair;
use crate::error::{Error, Result};
use crate::inference::{FrameObservation, FrameResult, PerturbationRecord};
use crate::learning::GroundTruthFrame;
use crate::potentials::Track;
use crate::scalar::Real;
use crate::voting::{LineHypothesis, VotingPoint};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn body(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn num<T: Real>(tok: &str, origin: &str, ln: usize) -> Result<T> {
    let v: f64 = tok.parse().map_err(|e| Error::parse(origin, ln, format!("bad number {tok:?}: {e}")))?;
    if !v.is_finite() {
        return Err(Error::parse(origin, ln, format!("non-finite number {tok:?}")));
    }
    T::from_f64(v).ok_or_else(|| Error::parse(origin, ln, format!("{tok:?} out of range")))
}

fn frame_no(tok: &str, origin: &str, ln: usize) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(f) if f >= 1 => Ok(f),
        _ => Err(Error::parse(origin, ln, format!("bad frame number {tok:?} (frames start at 1)"))),
    }
}

pub fn write_voters<T: Real>(obs: &[FrameObservation<T>]) -> String {
    let mut o = format!("# frames {}\n", obs.len());
    for f in obs {
        for (ty, vs) in [("bd", &f.bd_voters), ("ln", &f.ln_voters), ("grad", &f.grad_voters)] {
            for v in vs {
                let _ = writeln!(o, "{} {ty} {} {} {}", f.index, v.x, v.y, v.weight);
            }
        }
    }
    o
}

/// Observations for frames `1..=N`, `N` being the declared or the largest
/// frame number. Voter order within a frame and type is file order.
pub fn read_voters<T: Real>(text: &str, origin: &str) -> Result<Vec<FrameObservation<T>>> {
    let mut declared: Option<usize> = None;
    let mut by_frame: BTreeMap<usize, FrameObservation<T>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let t = raw.trim();
        if let Some(rest) = t.strip_prefix('#') {
            let mut it = rest.split_whitespace();
            if it.next() == Some("frames") {
                let n = it.next().and_then(|v| v.parse().ok());
                declared = Some(n.ok_or_else(|| Error::parse(origin, ln, "bad `# frames` directive"))?);
            }
            continue;
        }
        let line = body(raw);
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 5 {
            return Err(Error::parse(origin, ln, format!("expected `frame type x y w`, got {} fields", tok.len())));
        }
        let frame = frame_no(tok[0], origin, ln)?;
        let v = VotingPoint::new(num(tok[2], origin, ln)?, num(tok[3], origin, ln)?, num(tok[4], origin, ln)?);
        if v.weight < T::zero() {
            return Err(Error::parse(origin, ln, "negative voter weight"));
        }
        let f = by_frame.entry(frame).or_insert_with(|| FrameObservation::empty(frame));
        match tok[1] {
            "bd" => f.bd_voters.push(v),
            "ln" => f.ln_voters.push(v),
            "grad" => f.grad_voters.push(v),
            other => return Err(Error::parse(origin, ln, format!("unknown voter type {other:?}"))),
        }
    }
    let last = by_frame.keys().next_back().copied().unwrap_or(0);
    let n = match declared {
        Some(d) if d < last => {
            return Err(Error::parse(origin, 0, format!("voters for frame {last} beyond declared {d} frames")))
        }
        Some(d) => d,
        None => last,
    };
    Ok((1..=n).map(|f| by_frame.remove(&f).unwrap_or_else(|| FrameObservation::empty(f))).collect())
}

pub fn load_voters<T: Real>(path: &Path) -> Result<Vec<FrameObservation<T>>> {
    read_voters(&read_text(path)?, &path.display().to_string())
}

pub fn write_ground_truth<T: Real>(gt: &[GroundTruthFrame<T>]) -> String {
    let mut o = String::from("# frame theta_bd r_bd theta_ln r_ln (degrees, pixels)\n");
    for g in gt {
        let _ = writeln!(o, "{} {} {} {} {}", g.frame, g.bd.theta.to_deg(), g.bd.r, g.ln.theta.to_deg(), g.ln.r);
    }
    o
}

pub fn read_ground_truth<T: Real>(text: &str, origin: &str) -> Result<Vec<GroundTruthFrame<T>>> {
    let mut out: Vec<GroundTruthFrame<T>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = body(raw);
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 5 {
            return Err(Error::parse(origin, ln, format!("expected `frame theta_bd r_bd theta_ln r_ln`, got {} fields", tok.len())));
        }
        let frame = frame_no(tok[0], origin, ln)?;
        if let Some(prev) = out.last() {
            if frame <= prev.frame {
                return Err(Error::parse(origin, ln, format!("frame {frame} after frame {}", prev.frame)));
            }
        }
        let deg = |t: &str| -> Result<T> { num::<T>(t, origin, ln).map(|v| v.to_radians()) };
        let bd = LineHypothesis::new(deg(tok[1])?, num(tok[2], origin, ln)?);
        let lnl = LineHypothesis::new(deg(tok[3])?, num(tok[4], origin, ln)?);
        out.push(GroundTruthFrame::new(frame, bd, lnl));
    }
    Ok(out)
}

pub fn load_ground_truth<T: Real>(path: &Path) -> Result<Vec<GroundTruthFrame<T>>> {
    read_ground_truth(&read_text(path)?, &path.display().to_string())
}

pub fn read_polygons<T: Real>(text: &str, origin: &str) -> Result<BTreeMap<usize, Vec<(T, T)>>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = body(raw);
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < 7 || tok.len() % 2 == 0 {
            return Err(Error::parse(origin, ln, "expected `frame x1 y1 x2 y2 x3 y3 ...`"));
        }
        let frame = frame_no(tok[0], origin, ln)?;
        let mut pts = Vec::with_capacity(tok.len() / 2);
        for c in tok[1..].chunks(2) {
            pts.push((num(c[0], origin, ln)?, num(c[1], origin, ln)?));
        }
        out.insert(frame, pts);
    }
    Ok(out)
}

/// Attaches shoulder polygons to matching ground-truth frames.
pub fn attach_polygons<T: Real>(gt: &mut [GroundTruthFrame<T>], mut polys: BTreeMap<usize, Vec<(T, T)>>) {
    for g in gt {
        if let Some(p) = polys.remove(&g.frame) {
            g.shoulder = Some(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    /// Degrees.
    pub theta: f64,
    pub r: f64,
    /// Candidate index 1..3, `null` when no mode selection took place.
    pub mode: Option<u8>,
    /// Candidate votes, `null` when there were no candidates.
    pub phi: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub frame: usize,
    pub bd: LineRecord,
    pub ln: LineRecord,
    pub perturbed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationRecord<f64>>,
}

impl ResultRecord {
    pub fn from_frame<T: Real>(r: &FrameResult<T>) -> Self {
        let line = |track: Track| {
            let peak = r.state.selected(track);
            LineRecord {
                theta: peak.line.theta.to_deg().as_f64(),
                r: peak.line.r.as_f64(),
                mode: r.mode(track).map(|m| m.index()),
                phi: r.state.candidates(track).map(|c| c.phis().map(|v| v.as_f64())),
            }
        };
        ResultRecord {
            frame: r.frame(),
            bd: line(Track::Border),
            ln: line(Track::Lane),
            perturbed: r.perturbed,
            perturbation: r
                .perturbation
                .map(|p| PerturbationRecord { pre_best: p.pre_best.as_f64(), post_selected: p.post_selected.as_f64() }),
        }
    }

    pub fn from_pair<T: Real>(p: &LinePair<T>) -> Self {
        let line = |l: &LineHypothesis<T>| LineRecord {
            theta: l.theta.to_deg().as_f64(),
            r: l.r.as_f64(),
            mode: None,
            phi: None,
        };
        ResultRecord { frame: p.frame, bd: line(&p.bd), ln: line(&p.ln), perturbed: false, perturbation: None }
    }

    pub fn pair(&self) -> LinePair<f64> {
        LinePair {
            frame: self.frame,
            bd: LineHypothesis::new(self.bd.theta.to_radians(), self.bd.r),
            ln: LineHypothesis::new(self.ln.theta.to_radians(), self.ln.r),
        }
    }
}

pub fn write_results(records: &[ResultRecord]) -> String {
    let mut o = String::new();
    for r in records {
        o.push_str(&serde_json::to_string(r).expect("records serialize"));
        o.push('\n');
    }
    o
}

pub fn read_results(text: &str, origin: &str) -> Result<Vec<ResultRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(origin, i + 1, e.to_string())))
        .collect()
}

pub fn load_results(path: &Path) -> Result<Vec<ResultRecord>> {
    read_results(&read_text(path)?, &path.display().to_string())
}

/// `*.pgm` files of a directory in lexicographic order.
pub fn list_pgm(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
