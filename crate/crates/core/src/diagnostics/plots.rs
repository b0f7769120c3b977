//! Plain SVG figures: pairs scatter grid, ELBO trace, Pareto k by observation.

use std::fmt::Write;

use crate::draws::DrawMatrix;
use crate::error::{Error, Result};
use crate::vb::TraceRecord;

use super::psis::ParetoDiag;

pub const MAX_PANEL_POINTS: usize = 1000;

fn range(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = xs
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn scale(v: f64, (lo, hi): (f64, f64), start: f64, len: f64) -> f64 {
    start + (v - lo) / (hi - lo) * len
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter grid with parameter names on the diagonal; each panel
/// shows at most [`MAX_PANEL_POINTS`] evenly thinned draws.
pub fn pairs_svg(draws: &DrawMatrix, params: &[String]) -> Result<String> {
    if params.len() < 2 {
        return Err(Error::Diagnostic("pairs plot needs at least 2 parameters".into()));
    }
    let cols: Vec<Vec<f64>> = params
        .iter()
        .map(|p| {
            draws
                .column_by_name(p)
                .ok_or_else(|| Error::Diagnostic(format!("no column named {p}")))
        })
        .collect::<Result<_>>()?;
    let n = draws.nrows();
    let stride = n.div_ceil(MAX_PANEL_POINTS).max(1);
    let rows: Vec<usize> = (0..n).step_by(stride).collect();
    let k = params.len();
    let cell = 140.0;
    let size = cell * k as f64;
    let ranges: Vec<(f64, f64)> = cols.iter().map(|c| range(c.iter().copied())).collect();

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="10">"#
    );
    for a in 0..k {
        for b in 0..k {
            let (x0, y0) = (b as f64 * cell, a as f64 * cell);
            let _ = writeln!(
                s,
                r#"<rect x="{x0}" y="{y0}" width="{cell}" height="{cell}" fill="none" stroke="silver"/>"#
            );
            if a == b {
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                    x0 + cell / 2.0,
                    y0 + cell / 2.0,
                    escape(&params[a])
                );
                continue;
            }
            let _ = write!(s, r#"<g class="panel" fill="steelblue" fill-opacity="0.4">"#);
            for &r in &rows {
                let (vx, vy) = (cols[b][r], cols[a][r]);
                if !(vx.is_finite() && vy.is_finite()) {
                    continue;
                }
                let px = scale(vx, ranges[b], x0 + 5.0, cell - 10.0);
                let py = y0 + cell - (scale(vy, ranges[a], 5.0, cell - 10.0));
                let _ = write!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="1"/>"#);
            }
            let _ = writeln!(s, "</g>");
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn polyline(points: &[(f64, f64)], style: &str) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(r#"<polyline fill="none" {style} points="{}"/>"#, pts.join(" "))
}

/// ELBO trace (solid), relative change on a log scale (dashed, right axis),
/// the tolerance as a dotted horizontal line, and one vertical rule at the
/// best iteration.
pub fn elbo_svg(trace: &[TraceRecord], best_iteration: usize, rel_tol: f64) -> Result<String> {
    if trace.is_empty() {
        return Err(Error::Diagnostic("empty ELBO trace".into()));
    }
    let (w, h, pad) = (640.0, 360.0, 50.0);
    let (pw, ph) = (w - 2.0 * pad, h - 2.0 * pad);
    let xr = range(trace.iter().map(|t| t.iteration as f64));
    let yr = range(trace.iter().map(|t| t.elbo));
    let lr = range(
        trace
            .iter()
            .map(|t| t.rel_change)
            .chain(std::iter::once(rel_tol))
            .filter(|v| *v > 0.0)
            .map(f64::log10),
    );
    let px = |x: f64| scale(x, xr, pad, pw);
    let py = |y: f64| pad + ph - scale(y, yr, 0.0, ph);
    let pl = |y: f64| pad + ph - scale(y.log10(), lr, 0.0, ph);

    let elbo: Vec<(f64, f64)> = trace
        .iter()
        .filter(|t| t.elbo.is_finite())
        .map(|t| (px(t.iteration as f64), py(t.elbo)))
        .collect();
    let delta: Vec<(f64, f64)> = trace
        .iter()
        .filter(|t| t.rel_change > 0.0 && t.rel_change.is_finite())
        .map(|t| (px(t.iteration as f64), pl(t.rel_change)))
        .collect();

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, "{}", polyline(&elbo, r#"class="elbo" stroke="black" stroke-width="1.5""#));
    if delta.len() > 1 {
        let _ = writeln!(
            s,
            "{}",
            polyline(&delta, r#"class="rel-change" stroke="gray" stroke-dasharray="5,3""#)
        );
    }
    let ty = pl(rel_tol);
    let _ = writeln!(
        s,
        r#"<line class="tolerance" x1="{pad}" x2="{}" y1="{ty:.2}" y2="{ty:.2}" stroke="gray" stroke-dasharray="1,3"/>"#,
        pad + pw
    );
    let bx = px(best_iteration as f64);
    let _ = writeln!(
        s,
        r#"<line class="best-iteration" x1="{bx:.2}" x2="{bx:.2}" y1="{pad}" y2="{}" stroke="firebrick" stroke-dasharray="2,2"/>"#,
        pad + ph
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">iteration</text>"#,
        pad + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">ELBO (solid)</text>"#,
        pad + ph / 2.0,
        pad + ph / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" transform="rotate(90 {} {})" text-anchor="middle">relative change, log scale (dashed)</text>"#,
        w - 14.0,
        pad + ph / 2.0,
        w - 14.0,
        pad + ph / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="{}">{:.4e}</text><text x="{pad}" y="{}">{:.4e}</text>"#,
        pad - 6.0,
        yr.1,
        h - pad + 14.0,
        yr.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Pareto k per observation with reference lines at 0.5 and 1.
pub fn khat_svg(diags: &[ParetoDiag]) -> String {
    let (w, h, pad) = (640.0, 320.0, 40.0);
    let (pw, ph) = (w - 2.0 * pad, h - 2.0 * pad);
    let ks: Vec<f64> = diags.iter().filter_map(|d| d.k).collect();
    let (lo, hi) = range(ks.iter().copied().chain([0.0, 1.1]));
    let n = diags.len().max(2) as f64;
    let py = |k: f64| pad + ph - scale(k, (lo, hi), 0.0, ph);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in [0.5, 1.0] {
        let y = py(t);
        let _ = writeln!(
            s,
            r#"<line class="threshold" x1="{pad}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="gray" stroke-dasharray="4,3"/><text x="{}" y="{:.2}">{t}</text>"#,
            pad + pw,
            pad + pw + 4.0,
            y + 4.0
        );
    }
    let _ = write!(s, r#"<g class="khat">"#);
    for (i, d) in diags.iter().enumerate() {
        let k = match d.k {
            Some(k) => k,
            None => hi,
        };
        let x = pad + i as f64 / (n - 1.0) * pw;
        let colour = match d.category {
            super::psis::KCategory::Good => "steelblue",
            super::psis::KCategory::Ok => "orange",
            super::psis::KCategory::Bad => "firebrick",
        };
        let _ = write!(s, r#"<path d="M{:.2},{:.2}h0.01" stroke="{colour}" stroke-width="3" stroke-linecap="round"/>"#, x, py(k));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">observation</text>"#,
        pad + pw / 2.0,
        h - 10.0
    );
    s.push_str("</svg>\n");
    s
}
