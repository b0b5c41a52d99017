//! Static SVG bar charts.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 80.0;
const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, max: f64) {
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let base = HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{base}" stroke="#333"/>"##
    );
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN_LEFT}" y1="{base}" x2="{}" y2="{base}" stroke="#333"/>"##,
        WIDTH - MARGIN_RIGHT
    );
    for i in 0..=4 {
        let v = max * i as f64 / 4.0;
        let y = base - plot_h * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end" font-size="11">{}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0,
            format_tick(v)
        );
    }
}

fn format_tick(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn scale_max(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.fold(0.0f64, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Bars sorted by descending value, labelled with their values.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let mut sorted: Vec<&(String, f64)> = bars.iter().collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let max = scale_max(sorted.iter().map(|b| b.1));
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, max);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let base = HEIGHT - MARGIN_BOTTOM;
    let slot = plot_w / sorted.len().max(1) as f64;
    for (i, (name, value)) in sorted.iter().map(|b| (&b.0, b.1)).enumerate() {
        let h = plot_h * value / max;
        let x = MARGIN_LEFT + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>"#,
            base - h,
            slot * 0.7,
            PALETTE[i % PALETTE.len()]
        );
        let cx = x + slot * 0.35;
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
            base - h - 4.0,
            format_tick(value)
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
            base + 18.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One group per category, one bar per series. `None` values leave a gap.
pub fn grouped_bar_chart(title: &str, categories: &[String], series: &[(String, Vec<Option<f64>>)]) -> String {
    let max = scale_max(series.iter().flat_map(|s| s.1.iter().flatten().copied()));
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, max);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let base = HEIGHT - MARGIN_BOTTOM;
    let group = plot_w / categories.len().max(1) as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;
    for (g, cat) in categories.iter().enumerate() {
        let x0 = MARGIN_LEFT + group * g as f64 + group * 0.1;
        for (s, (_, values)) in series.iter().enumerate() {
            let Some(v) = values.get(g).copied().flatten() else {
                continue;
            };
            let h = plot_h * v / max;
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>"#,
                x0 + bar * s as f64,
                base - h,
                bar * 0.9,
                PALETTE[s % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
            x0 + group * 0.4,
            base + 18.0,
            escape(cat)
        );
    }
    for (s, (name, _)) in series.iter().enumerate() {
        let y = HEIGHT - 30.0;
        let x = MARGIN_LEFT + 140.0 * s as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/>"#,
            y - 10.0,
            PALETTE[s % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{y:.1}" font-size="12">{}</text>"#,
            x + 18.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bars_are_sorted_descending() {
        let svg = bar_chart("t", &[("a".into(), 1.0), ("b".into(), 5.0), ("c".into(), 3.0)]);
        let b = svg.find(">b<").unwrap();
        let c = svg.find(">c<").unwrap();
        let a = svg.find(">a<").unwrap();
        assert!(b < c && c < a);
        assert_eq!(svg.matches("<rect").count(), 4);
    }

    #[test]
    fn zero_bars_render() {
        let svg = bar_chart("empty", &[("a".into(), 0.0)]);
        assert!(svg.contains("height=\"0.0\""));
    }

    #[test]
    fn grouped_skips_missing_values() {
        let svg = grouped_bar_chart(
            "g",
            &["PQ".into(), "mPQ".into()],
            &[
                ("x".into(), vec![Some(0.5), None]),
                ("y".into(), vec![Some(1.0), Some(0.2)]),
            ],
        );
        assert_eq!(svg.matches("<rect").count(), 1 + 3 + 2);
    }
}
