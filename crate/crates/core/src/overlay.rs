//! SVG overlays of predicted and annotated lines.

use std::fmt::Write as _;

use crate::baselines::LinePair;
use crate::learning::GroundTruthFrame;
use crate::scalar::Real;
use crate::voting::LineHypothesis;

const TRUTH_STROKE: &str = "#1a9850";
const PRED_STROKE: &str = "#d73027";
const SHOULDER_FILL: &str = "#fdae61";

/// Image-space segment of a road-frame line across the full width.
fn segment(l: &LineHypothesis<f64>, width: f64, height: f64) -> Option<(f64, f64, f64, f64)> {
    let y0 = l.y_at(0.0)?;
    let y1 = l.y_at(width)?;
    Some((0.0, height - y0, width, height - y1))
}

fn line_el(o: &mut String, l: &LineHypothesis<f64>, w: f64, h: f64, stroke: &str, dash: bool, class: &str) {
    if let Some((x0, y0, x1, y1)) = segment(l, w, h) {
        let dash = if dash { " stroke-dasharray=\"4 2\"" } else { "" };
        let _ = writeln!(
            o,
            "  <line class=\"{class}\" x1=\"{x0:.3}\" y1=\"{y0:.3}\" x2=\"{x1:.3}\" y2=\"{y1:.3}\" stroke=\"{stroke}\" stroke-width=\"1\"{dash}/>"
        );
    }
}

fn f64_line<T: Real>(l: &LineHypothesis<T>) -> LineHypothesis<f64> {
    LineHypothesis { theta: l.theta.as_f64(), r: l.r.as_f64() }
}

/// One frame: predicted shoulder filled, truth solid, prediction dashed.
/// `background` is an optional image reference (e.g. the frame's PGM
/// rendered elsewhere).
pub fn frame_svg<T: Real>(
    pred: &LinePair<T>,
    truth: Option<&GroundTruthFrame<T>>,
    width: usize,
    height: usize,
    background: Option<&str>,
) -> String {
    let (w, h) = (width as f64, height as f64);
    let mut o = String::new();
    let _ = writeln!(
        o,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(o, "  <title>frame {}</title>", pred.frame);
    match background {
        Some(href) => {
            let _ = writeln!(o, "  <image href=\"{href}\" x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\"/>");
        }
        None => {
            let _ = writeln!(o, "  <rect width=\"{width}\" height=\"{height}\" fill=\"#404040\"/>");
        }
    }
    let (pb, pl) = (f64_line(&pred.bd), f64_line(&pred.ln));
    if let (Some(b), Some(l)) = (segment(&pb, w, h), segment(&pl, w, h)) {
        let _ = writeln!(
            o,
            "  <polygon class=\"shoulder\" points=\"{:.3},{:.3} {:.3},{:.3} {:.3},{:.3} {:.3},{:.3}\" fill=\"{SHOULDER_FILL}\" fill-opacity=\"0.35\"/>",
            b.0, b.1, b.2, b.3, l.2, l.3, l.0, l.1
        );
    }
    if let Some(t) = truth {
        line_el(&mut o, &f64_line(&t.bd), w, h, TRUTH_STROKE, false, "truth-bd");
        line_el(&mut o, &f64_line(&t.ln), w, h, TRUTH_STROKE, false, "truth-ln");
    }
    line_el(&mut o, &pb, w, h, PRED_STROKE, true, "pred-bd");
    line_el(&mut o, &pl, w, h, PRED_STROKE, true, "pred-ln");
    o.push_str("</svg>\n");
    o
}
