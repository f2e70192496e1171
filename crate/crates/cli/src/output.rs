//! CSV number formatting and a minimal SVG line plot.

use std::fmt::Write as _;

/// 12 significant digits, trailing zeros trimmed. Scientific notation
/// outside `[1e-5, 1e12)`. Non-finite values print as `inf` or `nan`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.11e}");
        let (mantissa, exponent) = s.split_once('e').expect("scientific form");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exponent}")
    }
}

/// Comment lines (`# key=value`) followed by the header row.
pub fn csv_preamble(meta: &[(String, String)], header: &[&str]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        writeln!(out, "# {k}={v}").unwrap();
    }
    writeln!(out, "{}", header.join(",")).unwrap();
    out
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Optional vertical marker, drawn dashed in the series colour.
    pub marker: Option<f64>,
}

const COLOURS: [&str; 6] = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#555555"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line plot with linear axes. Non-finite points are skipped.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 60.0);
    let finite = || series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title)).unwrap();
    // axes and ticks
    let (ax0, ax1, ay0, ay1) = (px(x0), px(x1), py(y0), py(y1));
    writeln!(s, r#"<path d="M{ax0:.1},{ay1:.1} L{ax0:.1},{ay0:.1} L{ax1:.1},{ay0:.1}" fill="none" stroke="black"/>"#).unwrap();
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (tx, ty) = (px(xv), py(yv));
        writeln!(s, r#"<line x1="{tx:.1}" y1="{ay0:.1}" x2="{tx:.1}" y2="{:.1}" stroke="black"/>"#, ay0 + 5.0).unwrap();
        writeln!(s, r#"<text x="{tx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, ay0 + 18.0, tick(xv)).unwrap();
        writeln!(s, r#"<line x1="{:.1}" y1="{ty:.1}" x2="{ax0:.1}" y2="{ty:.1}" stroke="black"/>"#, ax0 - 5.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, ax0 - 8.0, ty + 4.0, tick(yv)).unwrap();
    }
    writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (ax0 + ax1) / 2.0, h - 15.0, escape(x_label)).unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0,
        escape(y_label)
    )
    .unwrap();

    for (i, ser) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if !pts.is_empty() {
            writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, pts.join(" ")).unwrap();
        }
        if let Some(m) = ser.marker.filter(|m| m.is_finite() && *m >= x0 && *m <= x1) {
            let mx = px(m);
            writeln!(s, r#"<line x1="{mx:.1}" y1="{ay0:.1}" x2="{mx:.1}" y2="{ay1:.1}" stroke="{colour}" stroke-dasharray="4 3"/>"#).unwrap();
        }
        let ly = top + 16.0 * i as f64;
        writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/>"#, w - 170.0, w - 150.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, w - 145.0, ly + 4.0, escape(&ser.label)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) { format!("{v:.2e}") } else { format!("{v:.3}") }
}
