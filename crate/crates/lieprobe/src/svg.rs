//! Minimal SVG output for histograms and grid heatmaps.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s
}

/// Bar chart of bin counts over `[min, max]`.
pub fn histogram(title: &str, min: f64, max: f64, counts: &[usize]) -> String {
    let mut s = open(title);
    let peak = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let plot_w = W - 2.0 * PAD;
    let plot_h = H - 2.0 * PAD;
    let bw = plot_w / counts.len().max(1) as f64;
    for (i, &c) in counts.iter().enumerate() {
        let h = plot_h * c as f64 / peak;
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4a78b5"/>"##,
            PAD + bw * i as f64,
            H - PAD - h,
            (bw - 1.0).max(0.5),
            h
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{y}" x2="{x}" y2="{y}" stroke="black"/>"#,
        y = H - PAD,
        x = W - PAD
    );
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}">{min}</text>"#, H - PAD + 14.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{max}</text>"#,
        W - PAD,
        H - PAD + 14.0
    );
    let _ = writeln!(s, r#"<text x="4" y="{}">{}</text>"#, PAD, peak as usize);
    s.push_str("</svg>\n");
    s
}

/// Heatmap of `values[i][j]` for row label `rows[i]` and column label
/// `cols[j]`; `None` cells are drawn grey.
pub fn heatmap(title: &str, rows: &[usize], cols: &[usize], values: &[Vec<Option<f64>>]) -> String {
    let mut s = open(title);
    let finite: Vec<f64> = values
        .iter()
        .flatten()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let cw = (W - 2.0 * PAD) / cols.len().max(1) as f64;
    let ch = (H - 2.0 * PAD) / rows.len().max(1) as f64;
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let fill = match v {
                Some(v) if v.is_finite() => {
                    let t = (v - lo) / span;
                    let r = (255.0 * t) as u8;
                    let b = (255.0 * (1.0 - t)) as u8;
                    format!("rgb({r},64,{b})")
                }
                _ => "#cccccc".to_string(),
            };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                PAD + cw * j as f64,
                PAD + ch * i as f64,
                cw,
                ch
            );
        }
    }
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{r}</text>"#,
            PAD - 4.0,
            PAD + ch * (i as f64 + 0.5) + 4.0
        );
    }
    for (j, c) in cols.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{c}</text>"#,
            PAD + cw * (j as f64 + 0.5),
            H - PAD + 14.0
        );
    }
    s.push_str("</svg>\n");
    s
}
