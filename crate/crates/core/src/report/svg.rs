//! Minimal hand-written SVG charts.

use std::fmt::Write;

const W: f64 = 560.0;
const H: f64 = 360.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 44.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(svg: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - BOTTOM,
        W - RIGHT,
        H - BOTTOM
    );
    let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, H - BOTTOM);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
}

fn y_ticks(svg: &mut String, y_max: f64) {
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = H - BOTTOM - (H - TOP - BOTTOM) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#,
            LEFT - 4.0,
            y + 3.0,
            trim(v)
        );
    }
}

fn trim(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Bars labelled `1..=n`.
pub fn bar_chart_svg(title: &str, x_label: &str, y_label: &str, values: &[f64]) -> String {
    let mut svg = String::new();
    open(&mut svg, title, x_label, y_label);
    let y_max = values.iter().copied().fold(0.0, f64::max).max(1.0);
    y_ticks(&mut svg, y_max);
    let slot = (W - LEFT - RIGHT) / values.len().max(1) as f64;
    for (i, v) in values.iter().enumerate() {
        let h = (H - TOP - BOTTOM) * v / y_max;
        let x = LEFT + slot * i as f64;
        let _ = writeln!(
            svg,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="#1f77b4"/>"##,
            x + slot * 0.1,
            H - BOTTOM - h,
            slot * 0.8
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            x + slot / 2.0,
            H - BOTTOM + 14.0,
            i + 1
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Polylines over a shared axis range, with a legend.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let mut svg = String::new();
    open(&mut svg, title, x_label, y_label);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (x_max, y_max) = all.fold((0.0f64, 0.0f64), |(x, y), p| (x.max(p.0), y.max(p.1)));
    let (x_max, y_max) = (if x_max > 0.0 { x_max } else { 1.0 }, if y_max > 0.0 { y_max } else { 1.0 });
    y_ticks(&mut svg, y_max);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .map(|(x, y)| {
                format!(
                    "{:.1},{:.1}",
                    LEFT + (W - LEFT - RIGHT) * x / x_max,
                    H - BOTTOM - (H - TOP - BOTTOM) * y / y_max
                )
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" font-size="11" fill="{color}">{}</text>"#,
            W - RIGHT - 120.0,
            escape(s.label)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"#,
        W - RIGHT,
        H - BOTTOM + 14.0,
        trim(x_max)
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let bars = bar_chart_svg("sizes", "patches", "count", &[1.0, 0.0, 3.0]);
        assert_eq!(bars.matches("<rect").count(), 4);
        assert!(bars.ends_with("</svg>\n"));
        let lines = line_chart_svg(
            "a<b",
            "n",
            "%",
            &[Series {
                label: "m",
                points: vec![(1.0, 0.0), (2.0, 50.0)],
            }],
        );
        assert!(lines.contains("a&lt;b"));
        assert_eq!(lines.matches("<polyline").count(), 1);
        assert!(!line_chart_svg("t", "x", "y", &[]).is_empty());
    }
}
