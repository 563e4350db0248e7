//! Static SVG charts: histogram panels and box plots.

use std::fmt::Write;

const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 140.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377"];

/// Five-number summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Quartiles {
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[v.len() - 1],
    })
}

fn range(series: &[(String, Vec<f64>)]) -> (f64, f64) {
    let all = series.iter().flat_map(|(_, v)| v.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
}

/// One histogram panel per series over a shared x range.
pub fn histogram_svg(title: &str, x_label: &str, series: &[(String, Vec<f64>)], bins: usize) -> String {
    let bins = bins.max(1);
    let (lo, hi) = range(series);
    let width = (hi - lo) / bins as f64;
    let w = PANEL_W + 2.0 * MARGIN;
    let h = 32.0 + series.len() as f64 * (PANEL_H + 24.0) + 32.0;
    let mut out = String::new();
    open(&mut out, w, h, title);
    for (p, (name, values)) in series.iter().enumerate() {
        let top = 32.0 + p as f64 * (PANEL_H + 24.0);
        let mut counts = vec![0usize; bins];
        for v in values {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
        let peak = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let bar_w = PANEL_W / bins as f64;
        let _ = writeln!(out, r#"<g><title>{}</title>"#, escape(name));
        let _ = writeln!(
            out,
            r#"<text x="{MARGIN:.1}" y="{:.1}">{} (n = {})</text>"#,
            top + 12.0,
            escape(name),
            values.len()
        );
        for (b, c) in counts.iter().enumerate() {
            if *c == 0 {
                continue;
            }
            let bh = (PANEL_H - 16.0) * (*c as f64) / peak;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                MARGIN + b as f64 * bar_w,
                top + PANEL_H - bh,
                bar_w * 0.95,
                bh,
                COLORS[p % COLORS.len()]
            );
        }
        let base = top + PANEL_H;
        let _ = writeln!(out, r##"<line x1="{MARGIN:.1}" y1="{base:.1}" x2="{:.1}" y2="{base:.1}" stroke="#333"/>"##, MARGIN + PANEL_W);
        if lo < 0.0 && hi > 0.0 {
            let x0 = MARGIN + PANEL_W * (-lo) / (hi - lo);
            let _ = writeln!(
                out,
                r##"<line x1="{x0:.2}" y1="{:.1}" x2="{x0:.2}" y2="{base:.1}" stroke="#000" stroke-dasharray="3,3"/>"##,
                top + 16.0
            );
        }
        let _ = writeln!(out, r#"<text x="{MARGIN:.1}" y="{:.1}">{lo:.4}</text>"#, base + 12.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{hi:.4}</text>"#, MARGIN + PANEL_W, base + 12.0);
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, w / 2.0, h - 8.0, escape(x_label));
    out.push_str("</svg>\n");
    out
}

/// Horizontal box plots, one per series, whiskers at min and max.
pub fn boxplot_svg(title: &str, x_label: &str, series: &[(String, Vec<f64>)]) -> String {
    let (lo, hi) = range(series);
    let row = 36.0;
    let left = 120.0;
    let w = left + PANEL_W + MARGIN;
    let h = 40.0 + series.len() as f64 * row + 40.0;
    let x = |v: f64| left + PANEL_W * (v - lo) / (hi - lo);
    let mut out = String::new();
    open(&mut out, w, h, title);
    for (p, (name, values)) in series.iter().enumerate() {
        let Some(q) = quartiles(values) else { continue };
        let cy = 40.0 + p as f64 * row + row / 2.0;
        let color = COLORS[p % COLORS.len()];
        let _ = writeln!(out, r#"<g><title>{}</title>"#, escape(name));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 8.0, cy + 4.0, escape(name));
        let _ = writeln!(out, r##"<line x1="{:.2}" y1="{cy:.1}" x2="{:.2}" y2="{cy:.1}" stroke="#333"/>"##, x(q.min), x(q.max));
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.1}" width="{:.2}" height="{:.1}" fill="{color}" stroke="#333"/>"##,
            x(q.q1),
            cy - 10.0,
            (x(q.q3) - x(q.q1)).max(0.5),
            20.0
        );
        let _ = writeln!(out, r##"<line x1="{m:.2}" y1="{:.1}" x2="{m:.2}" y2="{:.1}" stroke="#000" stroke-width="2"/>"##, cy - 10.0, cy + 10.0, m = x(q.median));
        let _ = writeln!(out, "</g>");
    }
    let base = h - 32.0;
    let _ = writeln!(out, r##"<line x1="{left:.1}" y1="{base:.1}" x2="{:.1}" y2="{base:.1}" stroke="#333"/>"##, left + PANEL_W);
    let _ = writeln!(out, r#"<text x="{left:.1}" y="{:.1}">{lo:.4}</text>"#, base + 12.0);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{hi:.4}</text>"#, left + PANEL_W, base + 12.0);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, w / 2.0, h - 6.0, escape(x_label));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        let q = quartiles(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert!(quartiles(&[]).is_none());
    }

    #[test]
    fn charts_have_one_group_per_series() {
        let s = vec![("a".to_string(), vec![0.0, 1.0, 1.0]), ("b<".to_string(), vec![-1.0, 2.0])];
        let h = histogram_svg("t", "x", &s, 10);
        assert_eq!(h.matches("<g>").count(), 2);
        assert!(h.contains("b&lt;"));
        let b = boxplot_svg("t", "x", &s);
        assert_eq!(b.matches("<g>").count(), 2);
        assert!(b.ends_with("</svg>\n"));
    }
}
