//! Plain SVG rendering of plans and benchmark curves.

use std::fmt::Write as _;

use crate::benchmark::SummaryRow;
use crate::environment::{Env, Obstacle};
use crate::planner::{PlannerKind, TreeFile};

const PLOT_SIZE: f64 = 600.0;
const MARGIN: f64 = 50.0;

fn colour(k: PlannerKind) -> &'static str {
    match k {
        PlannerKind::FmtPff => "#1f77b4",
        PlannerKind::FmtFull => "#d62728",
        PlannerKind::KinoRrtStar => "#2ca02c",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Environment, tree edges and the solution path. World y points up.
pub fn plan_svg(env: &Env, start: [f64; 2], goal: [f64; 2], tree: Option<&TreeFile>, solution: Option<&[[f64; 2]]>) -> String {
    let b = env.bounds;
    let scale = PLOT_SIZE / b.width().max(b.height());
    let (w, h) = (b.width() * scale, b.height() * scale);
    let px = |p: [f64; 2]| ((p[0] - b.min[0]) * scale, h - (p[1] - b.min[1]) * scale);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    let _ = writeln!(s, r#"<rect class="bounds" x="0" y="0" width="{w:.1}" height="{h:.1}" fill="white" stroke="black"/>"#);
    for o in &env.obstacles {
        match o {
            Obstacle::Rect { min, max } => {
                let (x0, y1) = px(*min);
                let (x1, y0) = px(*max);
                let _ = writeln!(
                    s,
                    r##"<rect class="obstacle" x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="#888888"/>"##,
                    x1 - x0,
                    y1 - y0
                );
            }
            Obstacle::Circle { center, radius } => {
                let (cx, cy) = px(*center);
                let _ = writeln!(
                    s,
                    r##"<circle class="obstacle" cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="#888888"/>"##,
                    radius * scale
                );
            }
        }
    }
    let polyline = |s: &mut String, pts: &[[f64; 2]], class: &str, stroke: &str, width: f64| {
        if pts.len() < 2 {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|p| {
                let (x, y) = px(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="{class}" points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            coords.join(" ")
        );
    };
    if let Some(t) = tree {
        let _ = writeln!(s, r#"<g class="tree">"#);
        for e in &t.edges {
            polyline(&mut s, e, "edge", "#9ecae1", 0.6);
        }
        let _ = writeln!(s, "</g>");
    }
    if let Some(sol) = solution {
        polyline(&mut s, sol, "solution", "#e6550d", 2.0);
    }
    let (sx, sy) = px(start);
    let (gx, gy) = px(goal);
    let _ = writeln!(s, r##"<circle class="start" cx="{sx:.2}" cy="{sy:.2}" r="5" fill="#31a354"/>"##);
    let _ = writeln!(s, r##"<circle class="goal" cx="{gx:.2}" cy="{gy:.2}" r="5" fill="#de2d26"/>"##);
    s.push_str("</svg>\n");
    s
}

/// Median best-so-far cost against wall time (log x axis), one step curve
/// per planner. Buckets without a median are left out.
pub fn benchmark_svg(rows: &[SummaryRow]) -> String {
    let finite: Vec<&SummaryRow> = rows.iter().filter(|r| r.median_cost.is_finite() && r.bucket_end_s > 0.0).collect();
    let (w, h) = (PLOT_SIZE + 2.0 * MARGIN, 0.7 * PLOT_SIZE + 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="white"/>"#);
    let (pw, ph) = (PLOT_SIZE, 0.7 * PLOT_SIZE);
    let _ = writeln!(
        s,
        r#"<rect class="axes" x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.0}" y="{:.0}" text-anchor="middle" font-size="12">wall time (s, log)</text>"#,
        MARGIN + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.0}" font-size="12" transform="rotate(-90 14 {:.0})" text-anchor="middle">median cost</text>"#,
        MARGIN + ph / 2.0,
        MARGIN + ph / 2.0
    );
    if !finite.is_empty() {
        let t_lo = finite.iter().map(|r| r.bucket_end_s).fold(f64::INFINITY, f64::min).ln();
        let t_hi = finite.iter().map(|r| r.bucket_end_s).fold(0.0, f64::max).ln();
        let c_lo = finite.iter().map(|r| r.median_cost).fold(f64::INFINITY, f64::min);
        let c_hi = finite.iter().map(|r| r.median_cost).fold(f64::NEG_INFINITY, f64::max);
        let span_t = (t_hi - t_lo).max(1e-9);
        let pad = 0.05 * (c_hi - c_lo).max(1e-9);
        let (c_lo, c_hi) = (c_lo - pad, c_hi + pad);
        let x = |t: f64| MARGIN + (t.ln() - t_lo) / span_t * pw;
        let y = |c: f64| MARGIN + ph - (c - c_lo) / (c_hi - c_lo) * ph;
        for (v, label) in [(c_lo, c_lo), (c_hi, c_hi)] {
            let _ = writeln!(
                s,
                r#"<text x="{:.0}" y="{:.1}" text-anchor="end" font-size="10">{label:.1}</text>"#,
                MARGIN - 4.0,
                y(v)
            );
        }
        for t in [t_lo.exp(), t_hi.exp()] {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.0}" text-anchor="middle" font-size="10">{t:.3}</text>"#,
                x(t),
                MARGIN + ph + 14.0
            );
        }
        for (li, k) in PlannerKind::ALL.into_iter().enumerate() {
            let pts: Vec<&&SummaryRow> = finite.iter().filter(|r| r.planner == k).collect();
            if pts.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (i, r) in pts.iter().enumerate() {
                let (px, py) = (x(r.bucket_end_s), y(r.median_cost));
                if i == 0 {
                    let _ = write!(d, "M{px:.2},{py:.2}");
                } else {
                    let _ = write!(d, " H{px:.2} V{py:.2}");
                }
            }
            let _ = writeln!(
                s,
                r#"<path class="curve" data-planner="{}" d="{d}" fill="none" stroke="{}" stroke-width="2"/>"#,
                k.name(),
                colour(k)
            );
            let ly = MARGIN + 16.0 + 16.0 * li as f64;
            let _ = writeln!(
                s,
                r#"<text class="legend" x="{:.0}" y="{ly:.0}" font-size="12" fill="{}">{}</text>"#,
                MARGIN + pw - 110.0,
                colour(k),
                escape(k.name())
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
