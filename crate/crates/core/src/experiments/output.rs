use std::fmt::Write as _;
use std::path::Path;

use super::ExperimentResult;
use crate::error::{Error, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// CSV text: `# key = value` metadata, a header, one row per grid point.
pub fn to_csv_string(result: &ExperimentResult) -> String {
    let mut s = String::new();
    for (k, v) in &result.metadata {
        let _ = writeln!(s, "# {k} = {v}");
    }
    let excluded: Vec<String> = result.rows.iter().map(|r| r.excluded.to_string()).collect();
    let _ = writeln!(s, "# excluded_per_n = [{}]", excluded.join(", "));
    let _ = writeln!(s, "n,{}", result.columns.join(","));
    for row in &result.rows {
        s.push_str(&row.n.to_string());
        for v in &row.values {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn write_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv_string(result)).map_err(io_err(path))
}

/// Parsed CSV: header columns after `n`, and `(n, values)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<(usize, Vec<f64>)>,
}

pub fn parse_csv(text: &str) -> Result<CsvTable> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Input("CSV has no header".into()))?;
    let mut cols = header.split(',');
    if cols.next() != Some("n") {
        return Err(Error::Input("CSV header must start with 'n'".into()));
    }
    let columns: Vec<String> = cols.map(str::to_string).collect();
    let mut rows = Vec::new();
    for line in lines {
        let mut fields = line.split(',');
        let bad = || Error::Input(format!("malformed CSV row '{line}'"));
        let n = fields.next().and_then(|f| f.parse().ok()).ok_or_else(bad)?;
        let values = fields.map(|f| f.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| bad())?;
        if values.len() != columns.len() {
            return Err(bad());
        }
        rows.push((n, values));
    }
    Ok(CsvTable { columns, rows })
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    parse_csv(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Self-contained SVG line chart: log-scaled `n` on x, dB on y, one polyline per column.
pub fn to_svg_string(result: &ExperimentResult) -> String {
    let (w, h) = (760.0, 480.0);
    let (left, right, top, bottom) = (70.0, 190.0, 30.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);

    let ns: Vec<f64> = result.rows.iter().map(|r| (r.n as f64).log10()).collect();
    let ys: Vec<f64> = result.rows.iter().flat_map(|r| r.values.iter().copied()).filter(|v| v.is_finite()).collect();
    let (x0, x1) = match (ns.first(), ns.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 0.5, a + 0.5),
        _ => (1.0, 4.0),
    };
    let (mut y0, mut y1) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !y0.is_finite() {
        (y0, y1) = (-1.0, 1.0);
    }
    if y1 - y0 < 1e-9 {
        (y0, y1) = (y0 - 1.0, y1 + 1.0);
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, left + pw / 2.0, escape(result.experiment.name()));
    let _ = writeln!(s, r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);

    for d in (x0.ceil() as i32)..=(x1.floor() as i32) {
        for m in 1..10 {
            let x = d as f64 + (m as f64).log10();
            if x < x0 - 1e-12 || x > x1 + 1e-12 {
                continue;
            }
            let px = sx(x);
            let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{top}" x2="{px:.2}" y2="{}" stroke="#ddd"/>"##, top + ph);
            if m == 1 {
                let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, top + ph + 16.0, 10f64.powi(d));
            }
        }
    }
    let step = nice_step((y1 - y0) / 6.0);
    let mut y = (y0 / step).ceil() * step;
    while y <= y1 {
        let py = sy(y);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#ddd"/>"##, left + pw);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, py + 4.0, fmt_tick(y, step));
        y += step;
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#, left + pw / 2.0, h - 12.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">dB</text>"#, top + ph / 2.0, top + ph / 2.0);

    for (c, name) in result.columns.iter().enumerate() {
        let color = PALETTE[c % PALETTE.len()];
        let dash = if name.contains("theory") || name.contains("crb") || name.contains("crlb") { r#" stroke-dasharray="6 4""# } else { "" };
        let pts: Vec<String> = result
            .rows
            .iter()
            .zip(&ns)
            .filter(|(r, _)| r.values[c].is_finite())
            .map(|(r, &x)| format!("{:.2},{:.2}", sx(x), sy(r.values[c])))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.8"{dash} points="{}"/>"#, pts.join(" "));
        let ly = top + 14.0 + 18.0 * c as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.8"{dash}/>"#, lx + 24.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    mag * if f <= 1.0 { 1.0 } else if f <= 2.0 { 2.0 } else if f <= 5.0 { 5.0 } else { 10.0 }
}

fn fmt_tick(y: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{:.*}", decimals, if y.abs() < 1e-12 { 0.0 } else { y })
}

pub fn render_svg(result: &ExperimentResult, path: &Path) -> Result<()> {
    std::fs::write(path, to_svg_string(result)).map_err(io_err(path))
}
