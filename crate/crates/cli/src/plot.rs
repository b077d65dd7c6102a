//! Dependency-free SVG plots: agent trajectories in the plane, error
//! metrics on a log scale, and per-axis velocity traces.

use formation_core::{Sample, Trace};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 600.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Affine map from data coordinates to one SVG panel.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    px0: f64,
    px1: f64,
    py0: f64,
    py1: f64,
}

impl Frame {
    fn new(x_range: (f64, f64), y_range: (f64, f64), panel: (f64, f64, f64, f64)) -> Self {
        let pad = |lo: f64, hi: f64| {
            let span = (hi - lo).abs().max(1e-12);
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        let (x0, x1) = pad(x_range.0, x_range.1);
        let (y0, y1) = pad(y_range.0, y_range.1);
        Self {
            x0,
            x1,
            y0,
            y1,
            px0: panel.0,
            px1: panel.1,
            py0: panel.2,
            py1: panel.3,
        }
    }

    fn sx(&self, x: f64) -> f64 {
        self.px0 + (x - self.x0) / (self.x1 - self.x0) * (self.px1 - self.px0)
    }

    // SVG y grows downward, so the data range maps inverted.
    fn sy(&self, y: f64) -> f64 {
        self.py1 - (y - self.y0) / (self.y1 - self.y0) * (self.py1 - self.py0)
    }
}

fn polyline(svg: &mut String, frame: &Frame, points: &[(f64, f64)], stroke: &str) {
    if points.is_empty() {
        return;
    }
    svg.push_str(&format!(
        r#"<polyline fill="none" stroke="{stroke}" stroke-width="1.5" points=""#
    ));
    for &(x, y) in points {
        if !x.is_finite() || !y.is_finite() {
            continue;
        }
        svg.push_str(&format!("{:.2},{:.2} ", frame.sx(x), frame.sy(y)));
    }
    svg.push_str("\"/>\n");
}

fn axes(svg: &mut String, frame: &Frame, x_label: &str, y_label: &str, y_ticks: &[(f64, String)]) {
    svg.push_str(&format!(
        r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
        frame.px0,
        frame.py0,
        frame.px1 - frame.px0,
        frame.py1 - frame.py0,
    ));
    svg.push('\n');
    // x ticks: five evenly spaced data values
    for k in 0..=4 {
        let x = frame.x0 + (frame.x1 - frame.x0) * k as f64 / 4.0;
        let sx = frame.sx(x);
        svg.push_str(&format!(
            r##"<line x1="{sx:.1}" y1="{:.1}" x2="{sx:.1}" y2="{:.1}" stroke="#ccc"/>"##,
            frame.py0, frame.py1
        ));
        svg.push_str(&format!(
            r#"<text x="{sx:.1}" y="{:.1}" font-size="11" text-anchor="middle">{:.3}</text>"#,
            frame.py1 + 16.0,
            x
        ));
        svg.push('\n');
    }
    for (y, label) in y_ticks {
        let sy = frame.sy(*y);
        if sy < frame.py0 - 0.5 || sy > frame.py1 + 0.5 {
            continue;
        }
        svg.push_str(&format!(
            r##"<line x1="{:.1}" y1="{sy:.1}" x2="{:.1}" y2="{sy:.1}" stroke="#ccc"/>"##,
            frame.px0, frame.px1
        ));
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{label}</text>"#,
            frame.px0 - 6.0,
            sy + 4.0
        ));
        svg.push('\n');
    }
    svg.push_str(&format!(
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{x_label}</text>"#,
        (frame.px0 + frame.px1) / 2.0,
        frame.py1 + 34.0
    ));
    svg.push_str(&format!(
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{y_label}</text>"#,
        frame.px0 - 48.0,
        (frame.py0 + frame.py1) / 2.0,
        frame.px0 - 48.0,
        (frame.py0 + frame.py1) / 2.0
    ));
    svg.push('\n');
}

fn legend(svg: &mut String, entries: &[(String, &str)]) {
    let x = WIDTH - MARGIN_R + 14.0;
    for (k, (label, stroke)) in entries.iter().enumerate() {
        let y = MARGIN_T + 14.0 + 18.0 * k as f64;
        svg.push_str(&format!(
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{stroke}" stroke-width="2"/>"#,
            x + 22.0
        ));
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" font-size="12">{label}</text>"#,
            x + 28.0,
            y + 4.0
        ));
        svg.push('\n');
    }
}

fn document(title: &str, body: &str, height: f64) -> String {
    format!(
        concat!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" "#,
            r#"viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
            "\n",
            r#"<rect width="{w}" height="{h}" fill="white"/>"#,
            "\n",
            r#"<text x="{cx}" y="24" font-size="15" text-anchor="middle">{title}</text>"#,
            "\n{body}</svg>\n"
        ),
        w = WIDTH,
        h = height,
        cx = WIDTH / 2.0,
        title = title,
        body = body
    )
}

fn minmax(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo > hi {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

/// Planar agent paths (axes 1 and 2), start markers as circles and end
/// markers as squares. One-dimensional formations fall back to position
/// against time.
pub fn trajectories(trace: &Trace) -> String {
    let mut body = String::new();
    let planar = trace.dim >= 2;
    let coord = |s: &Sample, i: usize| -> (f64, f64) {
        if planar {
            (s.positions[i][0], s.positions[i][1])
        } else {
            (s.t, s.positions[i][0])
        }
    };
    let xs = minmax(
        trace
            .samples
            .iter()
            .flat_map(|s| (0..trace.n_agents).map(move |i| coord(s, i).0)),
    );
    let ys = minmax(
        trace
            .samples
            .iter()
            .flat_map(|s| (0..trace.n_agents).map(move |i| coord(s, i).1)),
    );
    let frame = Frame::new(xs, ys, (MARGIN_L, WIDTH - MARGIN_R, MARGIN_T, HEIGHT - MARGIN_B));
    let y_ticks: Vec<(f64, String)> = (0..=4)
        .map(|k| {
            let y = frame.y0 + (frame.y1 - frame.y0) * k as f64 / 4.0;
            (y, format!("{y:.2}"))
        })
        .collect();
    axes(
        &mut body,
        &frame,
        if planar { "x (m)" } else { "t (s)" },
        if planar { "y (m)" } else { "p (m)" },
        &y_ticks,
    );

    let mut entries = Vec::new();
    for i in 0..trace.n_agents {
        let pts: Vec<(f64, f64)> = trace.samples.iter().map(|s| coord(s, i)).collect();
        polyline(&mut body, &frame, &pts, color(i));
        if let (Some(first), Some(last)) = (pts.first(), pts.last()) {
            body.push_str(&format!(
                r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{}"/>"#,
                frame.sx(first.0),
                frame.sy(first.1),
                color(i)
            ));
            body.push_str(&format!(
                r#"<rect x="{:.1}" y="{:.1}" width="7" height="7" fill="{}"/>"#,
                frame.sx(last.0) - 3.5,
                frame.sy(last.1) - 3.5,
                color(i)
            ));
            body.push('\n');
        }
        let role = if i < trace.n_leaders { "leader" } else { "follower" };
        entries.push((format!("agent {} ({role})", i + 1), color(i)));
    }
    legend(&mut body, &entries);
    document("Agent trajectories", &body, HEIGHT)
}

/// Error metrics against time on a base-10 log scale, clamped below at
/// 1e-12.
pub fn errors(trace: &Trace) -> String {
    const FLOOR: f64 = 1e-12;
    let log = |v: f64| v.max(FLOOR).log10();

    let mut series: Vec<(String, Vec<(f64, f64)>)> = vec![
        (
            "max position error (m^2)".into(),
            trace
                .samples
                .iter()
                .map(|s| (s.t, log(s.metrics.max_position_error())))
                .collect(),
        ),
        (
            "max bearing error".into(),
            trace
                .samples
                .iter()
                .map(|s| (s.t, log(s.metrics.max_bearing_error())))
                .collect(),
        ),
        (
            "max velocity error (m/s)".into(),
            trace
                .samples
                .iter()
                .map(|s| (s.t, log(s.metrics.max_velocity_error())))
                .collect(),
        ),
        (
            "|s_F|".into(),
            trace
                .samples
                .iter()
                .map(|s| (s.t, log(s.metrics.sliding_norm)))
                .collect(),
        ),
    ];
    if trace.samples.iter().any(|s| s.metrics.estimator.is_some()) {
        let est = |f: &dyn Fn(&formation_core::analysis::EstimatorMetrics) -> f64| {
            trace
                .samples
                .iter()
                .filter_map(|s| s.metrics.estimator.as_ref().map(|e| (s.t, log(f(e)))))
                .collect::<Vec<_>>()
        };
        series.push(("|gamma|".into(), est(&|e| e.gamma_norm)));
        series.push(("|delta|".into(), est(&|e| e.delta_norm)));
        series.push(("reference position error".into(), est(&|e| e.ref_pos_error)));
    }

    let xs = (0.0, trace.duration());
    let ys = minmax(series.iter().flat_map(|(_, pts)| pts.iter().map(|&(_, y)| y)));
    let frame = Frame::new(xs, ys, (MARGIN_L, WIDTH - MARGIN_R, MARGIN_T, HEIGHT - MARGIN_B));
    let mut body = String::new();
    let y_ticks: Vec<(f64, String)> = (frame.y0.floor() as i64..=frame.y1.ceil() as i64)
        .map(|e| (e as f64, format!("1e{e}")))
        .collect();
    axes(&mut body, &frame, "t (s)", "error (log10)", &y_ticks);
    let mut entries = Vec::new();
    for (k, (label, pts)) in series.iter().enumerate() {
        polyline(&mut body, &frame, pts, color(k));
        entries.push((label.clone(), color(k)));
    }
    legend(&mut body, &entries);
    document("Error metrics (log scale)", &body, HEIGHT)
}

/// One stacked panel per axis showing every agent's velocity component
/// against time.
pub fn velocities(trace: &Trace) -> String {
    let d = trace.dim;
    let panel_h = 160.0;
    let total_h = MARGIN_T + d as f64 * (panel_h + 30.0) + MARGIN_B;
    let mut body = String::new();
    let mut entries = Vec::new();
    for k in 0..d {
        let top = MARGIN_T + k as f64 * (panel_h + 30.0) + 10.0;
        let ys = minmax(
            trace
                .samples
                .iter()
                .flat_map(|s| s.velocities.iter().map(move |v| v[k])),
        );
        let frame = Frame::new(
            (0.0, trace.duration()),
            ys,
            (MARGIN_L, WIDTH - MARGIN_R, top, top + panel_h),
        );
        let y_ticks: Vec<(f64, String)> = (0..=2)
            .map(|j| {
                let y = frame.y0 + (frame.y1 - frame.y0) * j as f64 / 2.0;
                (y, format!("{y:.2}"))
            })
            .collect();
        let axis = if d <= 3 { ["x", "y", "z"][k].to_string() } else { format!("a{}", k + 1) };
        axes(&mut body, &frame, "t (s)", &format!("v_{axis} (m/s)"), &y_ticks);
        for i in 0..trace.n_agents {
            let pts: Vec<(f64, f64)> = trace
                .samples
                .iter()
                .map(|s| (s.t, s.velocities[i][k]))
                .collect();
            polyline(&mut body, &frame, &pts, color(i));
            if k == 0 {
                let role = if i < trace.n_leaders { "leader" } else { "follower" };
                entries.push((format!("agent {} ({role})", i + 1), color(i)));
            }
        }
    }
    legend(&mut body, &entries);
    document("Velocity components", &body, total_h)
}
