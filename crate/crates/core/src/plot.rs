//! Minimal deterministic SVG line charts from a [`Table`].

use std::fmt::Write;

use crate::error::{validation, Result};
use crate::table::Table;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// Line chart of `y_columns` against `x_column`. Non-finite points are skipped.
pub fn line_chart(table: &Table, x_column: &str, y_columns: &[&str], title: &str) -> Result<String> {
    if y_columns.is_empty() {
        return validation("plot needs at least one y column");
    }
    if table.rows.is_empty() {
        return validation("plot needs at least one row");
    }
    let xs = table.column(x_column)?;
    let ys: Vec<Vec<f64>> = y_columns.iter().map(|c| table.column(c)).collect::<Result<_>>()?;
    let (x0, x1) = range(xs.iter().copied());
    let (y0, y1) = range(ys.iter().flatten().copied());
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<path d="M{l} {t}V{b}H{r}" fill="none" stroke="black"/>"#);
    for (v, anchor, x, y) in [(x0, "start", l, b + 16.0), (x1, "end", r, b + 16.0)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{v:.4e}</text>"#);
    }
    for (v, y) in [(y0, b), (y1, t)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.4e}</text>"#, l - 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, escape(x_column));
    for (k, (name, col)) in y_columns.iter().zip(&ys).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = xs
            .iter()
            .zip(col)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.3},{:.3}", px(x), py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" "));
        let ly = MARGIN + 14.0 * k as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#, r - 150.0, escape(name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        let mut t = Table::new(["t", "a", "b<c", "d"]);
        for i in 0..5 {
            let x = i as f64;
            t.push(vec![x, x * x, -x, if i == 2 { f64::NAN } else { 1.0 }]).unwrap();
        }
        t
    }

    #[test]
    fn one_polyline_per_column() {
        let svg = line_chart(&table(), "t", &["a", "b<c", "d"], "demo & test").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("b&lt;c"));
        assert!(svg.contains("demo &amp; test"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn deterministic() {
        assert_eq!(line_chart(&table(), "t", &["a"], "x").unwrap(), line_chart(&table(), "t", &["a"], "x").unwrap());
    }

    #[test]
    fn rejects_missing_columns() {
        assert!(line_chart(&table(), "t", &["zz"], "x").is_err());
        assert!(line_chart(&table(), "t", &[], "x").is_err());
        assert!(line_chart(&Table::new(["t", "a"]), "t", &["a"], "x").is_err());
    }
}
