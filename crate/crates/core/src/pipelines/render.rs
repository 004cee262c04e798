//! Standalone SVG figures from a report: scatter plots, heatmaps, and
//! overlaid histograms.

use std::fmt::Write;

use crate::stats::Histogram;

use super::report::{sanitize, AnalysisReport, Table};

const W: f64 = 480.0;
const H: f64 = 360.0;
const MARGIN: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

fn range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn axes(out: &mut String, xlabel: &str, ylabel: &str, (x0, x1): (f64, f64), (y0, y1): (f64, f64)) {
    let (left, right, top, bottom) = (MARGIN, W - 16.0, 32.0, H - MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{left} {top} V{bottom} H{right}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let x = left + f * (right - left);
        let y = bottom - f * (bottom - top);
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
            bottom + 14.0,
            x0 + f * (x1 - x0)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            left - 4.0,
            y + 4.0,
            y0 + f * (y1 - y0)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        H - 16.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(14 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (top + bottom) / 2.0,
        escape(ylabel)
    );
}

pub fn scatter_svg(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64]) -> String {
    let mut out = String::new();
    open(&mut out, W, H, title);
    let (xr, yr) = (range(xs), range(ys));
    axes(&mut out, xlabel, ylabel, xr, yr);
    let (left, right, top, bottom) = (MARGIN, W - 16.0, 32.0, H - MARGIN);
    for (x, y) in xs.iter().zip(ys) {
        let px = left + (x - xr.0) / (xr.1 - xr.0) * (right - left);
        let py = bottom - (y - yr.0) / (yr.1 - yr.0) * (bottom - top);
        let _ = writeln!(out, r##"<circle cx="{px:.2}" cy="{py:.2}" r="4" fill="#1f77b4"/>"##);
    }
    out.push_str("</svg>\n");
    out
}

/// Blue-to-red shading over `[lo, hi]`; missing cells are grey.
fn shade(v: Option<f64>, lo: f64, hi: f64) -> String {
    match v {
        None => "#cccccc".to_string(),
        Some(v) => {
            let t = if hi > lo {
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.5
            };
            let r = (255.0 * t) as u8;
            let b = (255.0 * (1.0 - t)) as u8;
            format!("#{r:02x}40{b:02x}")
        }
    }
}

pub fn heatmap_svg(title: &str, table: &Table) -> String {
    let cell = 26.0;
    let label_w = 90.0;
    let width = label_w + cell * table.columns.len() as f64 + 20.0;
    let height = 40.0 + label_w + cell * table.rows.len() as f64 + 20.0;
    let values: Vec<f64> = table
        .rows
        .iter()
        .flat_map(|r| r.values.iter().flatten().copied())
        .collect();
    let (lo, hi) = if values.is_empty() { (0.0, 1.0) } else { range(&values) };
    let mut out = String::new();
    open(&mut out, width, height, title);
    let top = 40.0 + label_w;
    for (j, c) in table.columns.iter().enumerate() {
        let x = label_w + cell * (j as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text transform="translate({x:.1} {:.1}) rotate(-60)">{}</text>"#,
            top - 4.0,
            escape(c)
        );
    }
    for (i, row) in table.rows.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            label_w - 4.0,
            y + cell * 0.65,
            escape(&row.label)
        );
        for (j, v) in row.values.iter().enumerate() {
            let x = label_w + cell * j as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{}"><title>{}</title></rect>"#,
                shade(*v, lo, hi),
                v.map_or("undefined".to_string(), |v| format!("{v:.4}"))
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Overlaid histograms; all inputs are expected to share bin edges.
pub fn histogram_svg(title: &str, series: &[(&str, &Histogram)]) -> String {
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut out = String::new();
    open(&mut out, W, H, title);
    let edges: Vec<f64> = series.iter().flat_map(|(_, h)| h.edges.iter().copied()).collect();
    let xr = range(&edges);
    let max_count = series
        .iter()
        .flat_map(|(_, h)| h.counts.iter().copied())
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    axes(&mut out, "score", "count", xr, (0.0, max_count));
    let (left, right, top, bottom) = (MARGIN, W - 16.0, 32.0, H - MARGIN);
    let sx = |x: f64| left + (x - xr.0) / (xr.1 - xr.0) * (right - left);
    for (k, (label, h)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        for (b, &count) in h.counts.iter().enumerate() {
            let (x0, x1) = (sx(h.edges[b]), sx(h.edges[b + 1]));
            let w = (x1 - x0).max(2.0);
            let hgt = count as f64 / max_count * (bottom - top);
            let _ = writeln!(
                out,
                r#"<rect x="{x0:.2}" y="{:.2}" width="{w:.2}" height="{hgt:.2}" fill="{color}" fill-opacity="0.45"/>"#,
                bottom - hgt
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{} (median {:.3})</text>"#,
            right - 150.0,
            top + 14.0 * (k as f64 + 1.0),
            escape(label),
            h.median
        );
    }
    out.push_str("</svg>\n");
    out
}

fn scatter_pairs(pipeline: &str) -> &'static [(&'static str, &'static str)] {
    match pipeline {
        "rq1_scale_trend" => &[("size_billions", "mean_kappa"), ("mean_accuracy", "mean_kappa")],
        "rq3_resource_correlation" => &[("resource_value", "mean_kappa")],
        "repr_functional_correlation" => &[("adjusted_similarity", "kappa")],
        _ => &[],
    }
}

/// Every figure a report supports, as `(file name, svg)`.
pub fn render_report(report: &AnalysisReport) -> Vec<(String, String)> {
    let body = &report.body;
    let mut out = Vec::new();
    for (x, y) in scatter_pairs(&body.pipeline) {
        if let (Some(xs), Some(ys)) = (body.series.get(*x), body.series.get(*y)) {
            out.push((
                format!("scatter_{x}_vs_{y}.svg"),
                scatter_svg(&format!("{y} vs {x}"), x, y, xs, ys),
            ));
        }
    }
    for t in &body.tables {
        let is_matrix = t.rows.len() == t.columns.len()
            && t.rows.iter().zip(&t.columns).all(|(r, c)| &r.label == c)
            && !t.rows.is_empty();
        if is_matrix || t.name == "kappa" || t.name == "accuracy" {
            out.push((format!("heatmap_{}.svg", sanitize(&t.name)), heatmap_svg(&t.name, t)));
        }
    }
    let mut subjects: Vec<&str> = body.histograms.iter().filter_map(|h| h.subject.as_deref()).collect();
    subjects.dedup();
    for s in subjects {
        let series: Vec<(&str, &Histogram)> = body
            .histograms
            .iter()
            .filter(|h| h.subject.as_deref() == Some(s))
            .map(|h| (h.name.as_str(), &h.histogram))
            .collect();
        out.push((format!("histogram_{}.svg", sanitize(s)), histogram_svg(s, &series)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::paired_histograms;
    use std::collections::BTreeMap;

    #[test]
    fn scatter_has_one_marker_per_point() {
        let svg = scatter_svg("t", "x", "y", &[1.0, 2.0, 3.0], &[0.1, 0.4, 0.2]);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn heatmap_marks_missing_cells_grey() {
        let mut t = Table::new("m", "", &["a", "b"]);
        t.push("a", vec![Some(1.0), None]);
        t.push("b", vec![None, Some(1.0)]);
        let svg = heatmap_svg("m", &t);
        assert_eq!(svg.matches("#cccccc").count(), 2);
        assert_eq!(svg.matches("<rect x=").count(), 4);
    }

    #[test]
    fn labels_are_escaped() {
        let svg = scatter_svg("a<b & c", "x", "y", &[0.0], &[0.0]);
        assert!(svg.contains("a&lt;b &amp; c"));
    }

    #[test]
    fn report_figures_by_pipeline() {
        let mut r = AnalysisReport::new("rq1_scale_trend", String::new(), BTreeMap::new());
        r.body.series.insert("size_billions".into(), vec![1.0, 2.0, 3.0]);
        r.body.series.insert("mean_kappa".into(), vec![0.1, 0.2, 0.3]);
        r.body.series.insert("mean_accuracy".into(), vec![0.4, 0.5, 0.6]);
        let (a, b) = paired_histograms(&[0.1, 0.2], &[0.3, 0.5], 4).unwrap();
        for (name, h) in [("intra", a), ("inter", b)] {
            r.body.histograms.push(super::super::NamedHistogram {
                name: name.into(),
                subject: Some("m1".into()),
                histogram: h,
            });
        }
        let names: Vec<String> = render_report(&r).into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            vec![
                "scatter_size_billions_vs_mean_kappa.svg",
                "scatter_mean_accuracy_vs_mean_kappa.svg",
                "histogram_m1.svg"
            ]
        );
    }
}
