//! Minimal vector-graphics phase portraits: the (x1, x2) trajectory over the
//! feasible-set outline, plus the optimizer path when the problem declares
//! one.

use pzo::sets::FeasibleSet;
use pzo::sim::Trajectory;
use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 640.0;
const MARGIN: f64 = 40.0;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn include(&mut self, x: f64, y: f64) {
        self.x_min = self.x_min.min(x);
        self.x_max = self.x_max.max(x);
        self.y_min = self.y_min.min(y);
        self.y_max = self.y_max.max(y);
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = (W - 2.0 * MARGIN) / (self.x_max - self.x_min).max(1e-12);
        let sy = (H - 2.0 * MARGIN) / (self.y_max - self.y_min).max(1e-12);
        let s = sx.min(sy);
        (
            MARGIN + (x - self.x_min) * s,
            H - MARGIN - (y - self.y_min) * s,
        )
    }
}

fn polyline(frame: &Frame, pts: &[(f64, f64)], style: &str) -> String {
    let mut d = String::new();
    for (i, (x, y)) in pts.iter().enumerate() {
        let (px, py) = frame.map(*x, *y);
        let _ = write!(d, "{}{px:.2},{py:.2}", if i == 0 { "" } else { " " });
    }
    format!("<polyline points=\"{d}\" {style}/>\n")
}

fn set_outline(frame: &Frame, set: &FeasibleSet) -> String {
    match set {
        FeasibleSet::Ball { center, radius } if center.len() == 2 => {
            let (cx, cy) = frame.map(center[0], center[1]);
            let (rx, _) = frame.map(center[0] + radius, center[1]);
            let r = rx - cx;
            format!(
                "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"none\" stroke=\"#c33\" stroke-dasharray=\"6,4\" stroke-width=\"1.5\"/>\n"
            )
        }
        FeasibleSet::Box { lower, upper } if lower.len() == 2 => {
            let corners = [
                (lower[0], lower[1]),
                (upper[0], lower[1]),
                (upper[0], upper[1]),
                (lower[0], upper[1]),
                (lower[0], lower[1]),
            ];
            polyline(
                frame,
                &corners,
                "fill=\"none\" stroke=\"#c33\" stroke-dasharray=\"6,4\" stroke-width=\"1.5\"",
            )
        }
        FeasibleSet::Polytope { rows, rhs, .. } if rows.first().map(|r| r.len()) == Some(2) => {
            // Trace each facet segment within the viewport by sampling.
            let mut out = String::new();
            for (row, b) in rows.iter().zip(rhs) {
                let mut pts = Vec::new();
                for i in 0..=200 {
                    let t = i as f64 / 200.0;
                    let x = frame.x_min + t * (frame.x_max - frame.x_min);
                    if row[1].abs() > 1e-12 {
                        let y = (b - row[0] * x) / row[1];
                        if y >= frame.y_min && y <= frame.y_max {
                            pts.push((x, y));
                        }
                    } else if row[0].abs() > 1e-12 {
                        let xv = b / row[0];
                        let y = frame.y_min + t * (frame.y_max - frame.y_min);
                        pts.push((xv, y));
                    }
                }
                if pts.len() >= 2 {
                    out += &polyline(
                        frame,
                        &pts,
                        "fill=\"none\" stroke=\"#c33\" stroke-dasharray=\"6,4\" stroke-width=\"1.5\"",
                    );
                }
            }
            out
        }
        _ => String::new(),
    }
}

/// Renders the planar phase portrait; `None` when the state is not planar.
/// `optimizer_path` is the optimizer trajectory `d(theta(t))` when known.
pub fn phase_portrait(
    traj: &Trajectory,
    set: &FeasibleSet,
    optimizer_path: Option<&[(f64, f64)]>,
) -> Option<String> {
    if traj.n != 2 {
        return None;
    }
    let mut frame = Frame { x_min: f64::MAX, x_max: f64::MIN, y_min: f64::MAX, y_max: f64::MIN };
    for s in &traj.samples {
        frame.include(s.x[0], s.x[1]);
    }
    if let Some(path) = optimizer_path {
        for (x, y) in path {
            frame.include(*x, *y);
        }
    }
    match set {
        FeasibleSet::Ball { center, radius } => {
            frame.include(center[0] - radius, center[1] - radius);
            frame.include(center[0] + radius, center[1] + radius);
        }
        FeasibleSet::Box { lower, upper } => {
            if lower.iter().chain(upper.iter()).all(|v| v.is_finite()) {
                frame.include(lower[0], lower[1]);
                frame.include(upper[0], upper[1]);
            }
        }
        _ => {}
    }
    // A touch of padding.
    let pad_x = 0.05 * (frame.x_max - frame.x_min).max(1e-9);
    let pad_y = 0.05 * (frame.y_max - frame.y_min).max(1e-9);
    frame.x_min -= pad_x;
    frame.x_max += pad_x;
    frame.y_min -= pad_y;
    frame.y_max += pad_y;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    svg += &set_outline(&frame, set);
    let stride = (traj.samples.len() / 4000).max(1);
    let pts: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .step_by(stride)
        .map(|s| (s.x[0], s.x[1]))
        .collect();
    svg += &polyline(&frame, &pts, "fill=\"none\" stroke=\"#283\" stroke-width=\"1.2\"");
    if let Some(path) = optimizer_path {
        let stride = (path.len() / 2000).max(1);
        let pts: Vec<(f64, f64)> = path.iter().step_by(stride).copied().collect();
        svg += &polyline(
            &frame,
            &pts,
            "fill=\"none\" stroke=\"#36c\" stroke-dasharray=\"2,3\" stroke-width=\"1.2\"",
        );
    }
    if let (Some(first), Some(last)) = (traj.samples.first(), traj.samples.last()) {
        let (sx, sy) = frame.map(first.x[0], first.x[1]);
        let (ex, ey) = frame.map(last.x[0], last.x[1]);
        let _ = write!(
            svg,
            "<circle cx=\"{sx:.2}\" cy=\"{sy:.2}\" r=\"4\" fill=\"#36c\"/>\n<circle cx=\"{ex:.2}\" cy=\"{ey:.2}\" r=\"4\" fill=\"#283\"/>\n"
        );
    }
    svg += "</svg>\n";
    Some(svg)
}
