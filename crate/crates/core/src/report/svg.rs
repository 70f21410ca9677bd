//! Minimal SVG renderers. Every plotted datum carries its value in a
//! `data-*` attribute so tests can parse numbers instead of comparing bytes.

use std::fmt::Write;

use ndarray::Array2;

const CELL: f64 = 12.0;
const MARGIN: f64 = 60.0;
const PLOT_W: f64 = 480.0;
const PLOT_H: f64 = 300.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Linear blue→white→red map over `[lo, hi]`.
pub fn color(v: f64, lo: f64, hi: f64) -> String {
    let t = if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (255.0 * u, 255.0 * u, 255.0)
    } else {
        let u = (t - 0.5) / 0.5;
        (255.0, 255.0 * (1.0 - u), 255.0 * (1.0 - u))
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        r.round() as u8,
        g.round() as u8,
        b.round() as u8
    )
}

fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

/// Square matrix heatmap with a legend naming the value range.
pub fn heatmap(title: &str, order: &[String], values: &Array2<f64>) -> String {
    let n = values.nrows();
    let (lo, hi) = finite_range(values.iter().copied());
    let side = CELL * n as f64;
    let width = MARGIN * 2.0 + side + 80.0;
    let height = MARGIN * 2.0 + side;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" data-kind="heatmap" data-n="{n}" data-min="{lo}" data-max="{hi}">"#
    )
    .unwrap();
    writeln!(s, r#"<title>{}</title>"#, escape(title)).unwrap();
    writeln!(
        s,
        r#"<text x="{MARGIN}" y="20" font-size="14">{}</text>"#,
        escape(title)
    )
    .unwrap();
    for i in 0..n {
        for j in 0..n {
            let v = values[[i, j]];
            writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}" data-row="{i}" data-col="{j}" data-value="{v}"><title>{} / {}: {v}</title></rect>"#,
                MARGIN + CELL * j as f64,
                MARGIN + CELL * i as f64,
                color(v, lo, hi),
                escape(order.get(i).map_or("", String::as_str)),
                escape(order.get(j).map_or("", String::as_str)),
            )
            .unwrap();
        }
    }
    let lx = MARGIN + side + 20.0;
    for k in 0..10 {
        let v = hi - (hi - lo) * k as f64 / 9.0;
        writeln!(
            s,
            r#"<rect x="{lx}" y="{}" width="16" height="{}" fill="{}"/>"#,
            MARGIN + side * k as f64 / 10.0,
            side / 10.0,
            color(v, lo, hi)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text class="legend" x="{lx}" y="{}" font-size="10" data-min="{lo}" data-max="{hi}">range [{lo:.4}, {hi:.4}]</text>"#,
        MARGIN + side + 14.0
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn axes(s: &mut String, x_label: &str, y_label: &str, (x0, x1): (f64, f64), (y0, y1): (f64, f64)) {
    let bottom = MARGIN + PLOT_H;
    writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{bottom}" x2="{}" y2="{bottom}" stroke="black"/>"#,
        MARGIN + PLOT_W
    )
    .unwrap();
    writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{bottom}" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11">{} [{x0:.3}, {x1:.3}]</text>"#,
        MARGIN + PLOT_W / 2.0 - 40.0,
        bottom + 35.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="10" y="{}" font-size="11">{} [{y0:.3}, {y1:.3}]</text>"#,
        MARGIN - 10.0,
        escape(y_label)
    )
    .unwrap();
}

fn scale(v: f64, lo: f64, hi: f64, len: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo) * len
    } else {
        len / 2.0
    }
}

/// Multi-series line chart.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xr = finite_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = finite_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let px = |x: f64| MARGIN + scale(x, xr.0, xr.1, PLOT_W);
    let py = |y: f64| MARGIN + PLOT_H - scale(y, yr.0, yr.1, PLOT_H);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" data-kind="line">"#,
        MARGIN * 2.0 + PLOT_W + 120.0,
        MARGIN * 2.0 + PLOT_H
    )
    .unwrap();
    writeln!(s, r#"<title>{}</title>"#, escape(title)).unwrap();
    writeln!(
        s,
        r#"<text x="{MARGIN}" y="20" font-size="14">{}</text>"#,
        escape(title)
    )
    .unwrap();
    axes(&mut s, x_label, y_label, xr, yr);
    for (k, ser) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{c}" points="{}" data-series="{}"/>"#,
            pts.join(" "),
            escape(&ser.name)
        )
        .unwrap();
        for &(x, y) in ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
        {
            writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}" data-series="{}" data-x="{x}" data-y="{y}"/>"#,
                px(x),
                py(y),
                escape(&ser.name)
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{c}">{}</text>"#,
            MARGIN + PLOT_W + 10.0,
            MARGIN + 15.0 * k as f64,
            escape(&ser.name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Counts of `values` in `bins` equal-width bins over `[lo, hi]`; the last
/// bin is closed.
pub fn histogram_counts(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<usize> {
    let mut counts = vec![0; bins];
    if bins == 0 {
        return counts;
    }
    for &v in values.iter().filter(|v| v.is_finite()) {
        if v < lo || v > hi {
            continue;
        }
        let k = if hi > lo {
            (((v - lo) / (hi - lo)) * bins as f64).floor() as usize
        } else {
            0
        };
        counts[k.min(bins - 1)] += 1;
    }
    counts
}

/// Overlaid per-group histograms on a shared bin grid.
pub fn histogram(title: &str, x_label: &str, groups: &[(String, Vec<f64>)], bins: usize) -> String {
    let (lo, hi) = finite_range(groups.iter().flat_map(|g| g.1.iter().copied()));
    let counts: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| histogram_counts(&g.1, bins, lo, hi))
        .collect();
    let max = counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let bw = PLOT_W / bins.max(1) as f64;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" data-kind="histogram" data-bins="{bins}" data-min="{lo}" data-max="{hi}">"#,
        MARGIN * 2.0 + PLOT_W + 120.0,
        MARGIN * 2.0 + PLOT_H
    )
    .unwrap();
    writeln!(s, r#"<title>{}</title>"#, escape(title)).unwrap();
    writeln!(
        s,
        r#"<text x="{MARGIN}" y="20" font-size="14">{}</text>"#,
        escape(title)
    )
    .unwrap();
    axes(&mut s, x_label, "count", (lo, hi), (0.0, max));
    for (k, ((name, _), cs)) in groups.iter().zip(&counts).enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        for (b, &n) in cs.iter().enumerate() {
            let h = PLOT_H * n as f64 / max;
            writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{bw:.2}" height="{h:.2}" fill="{c}" fill-opacity="0.45" data-group="{}" data-bin="{b}" data-count="{n}"/>"#,
                MARGIN + bw * b as f64,
                MARGIN + PLOT_H - h,
                escape(name)
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{c}">{}</text>"#,
            MARGIN + PLOT_W + 10.0,
            MARGIN + 15.0 * k as f64,
            escape(name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_endpoints() {
        assert_eq!(color(0.0, 0.0, 1.0), "#0000ff");
        assert_eq!(color(0.5, 0.0, 1.0), "#ffffff");
        assert_eq!(color(1.0, 0.0, 1.0), "#ff0000");
    }

    #[test]
    fn counts_cover_all_values() {
        let v = [0.0, 0.1, 0.5, 0.99, 1.0];
        assert_eq!(histogram_counts(&v, 2, 0.0, 1.0), vec![2, 3]);
    }

    #[test]
    fn heatmap_cells() {
        let m = Array2::from_shape_vec((2, 2), vec![1.0, -0.5, -0.5, 1.0]).unwrap();
        let svg = heatmap("t", &["a".into(), "b".into()], &m);
        assert_eq!(svg.matches("data-value=").count(), 4);
        assert!(svg.contains("range [-0.5000, 1.0000]"));
    }
}
