//! Deterministic artifact emission: CSV tables (shortest-roundtrip float
//! formatting, `\n` line endings) and minimal self-contained SVG line charts.

use crate::error::Result;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Shortest-roundtrip decimal for a float; the one formatting used in every
/// CSV cell so identical numbers always produce identical bytes.
pub fn fmt_float(v: f64) -> String {
    format!("{v}")
}

/// A rectangular table with a header row; row cells are already strings so
/// the emission layer cannot re-interpret numbers.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push_row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn to_csv_string(&self) -> String {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(&self.columns).expect("in-memory csv");
        for row in &self.rows {
            writer.write_record(row).expect("in-memory csv");
        }
        String::from_utf8(writer.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// One polyline on a chart; points in data coordinates.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// A minimal line chart. Callers pass already-transformed coordinates
/// (e.g. log10 values) and axis labels that say so.
#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    pub fn add_series(&mut self, label: &str, points: Vec<(f64, f64)>) {
        self.series.push(Series { label: label.into(), points });
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &(x, y) in &s.points {
                if x.is_finite() && y.is_finite() {
                    xs = (xs.0.min(x), xs.1.max(x));
                    ys = (ys.0.min(y), ys.1.max(y));
                }
            }
        }
        if !xs.0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        // Degenerate ranges get a symmetric pad so the polyline stays visible.
        let pad = |lo: f64, hi: f64| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5 - lo.abs() * 0.05, hi + 0.5 + hi.abs() * 0.05)
            }
        };
        let (x0, x1) = pad(xs.0, xs.1);
        let (y0, y1) = pad(ys.0, ys.1);
        (x0, x1, y0, y1)
    }

    pub fn to_svg(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * (WIDTH - MARGIN_L - MARGIN_R);
        let py = |y: f64| HEIGHT - MARGIN_B - (y - y0) / (y1 - y0) * (HEIGHT - MARGIN_T - MARGIN_B);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            escape(&self.title)
        );
        // Axes.
        let (ax0, ax1) = (px(x0), px(x1));
        let (ay0, ay1) = (py(y0), py(y1));
        let _ = writeln!(
            svg,
            r#"<line x1="{ax0}" y1="{ay0}" x2="{ax1}" y2="{ay0}" stroke="black" stroke-width="1"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{ax0}" y1="{ay0}" x2="{ax0}" y2="{ay1}" stroke="black" stroke-width="1"/>"#
        );
        // Min/max tick labels on each axis.
        for (v, at_min) in [(x0, true), (x1, false)] {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="{}" font-family="sans-serif" font-size="11">{}</text>"#,
                px(v),
                ay0 + 16.0,
                if at_min { "start" } else { "end" },
                trim_number(v)
            );
        }
        for v in [y0, y1] {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
                ax0 - 6.0,
                py(v) + 4.0,
                trim_number(v)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            (ax0 + ax1) / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
            (ay0 + ay1) / 2.0,
            (ay0 + ay1) / 2.0,
            escape(&self.y_label)
        );
        // Series polylines + legend.
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut path = String::new();
            for &(x, y) in &s.points {
                if x.is_finite() && y.is_finite() {
                    let _ = write!(path, "{},{} ", px(x), py(y));
                }
            }
            if !path.is_empty() {
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    path.trim_end()
                );
                for &(x, y) in &s.points {
                    if x.is_finite() && y.is_finite() {
                        let _ = writeln!(
                            svg,
                            r#"<circle cx="{}" cy="{}" r="2.5" fill="{color}"/>"#,
                            px(x),
                            py(y)
                        );
                    }
                }
            }
            let ly = MARGIN_T + 14.0 * i as f64;
            let lx = WIDTH - MARGIN_R + 12.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                lx + 18.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
                lx + 24.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }

    pub fn write_svg(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_svg())?;
        Ok(())
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Short tick label: round to 4 significant-ish decimals without losing the
/// shortest-roundtrip property for simple values.
fn trim_number(v: f64) -> String {
    let rounded = format!("{v:.4}");
    let trimmed = rounded.trim_end_matches('0').trim_end_matches('.');
    if trimmed.is_empty() || trimmed == "-" {
        "0".into()
    } else {
        trimmed.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_emission_is_deterministic_and_unix_terminated() {
        let mut t = Table::new(&["a", "b"]);
        t.push_row(vec![fmt_float(0.1 + 0.2), fmt_float(1.0)]);
        t.push_row(vec!["x,with comma".into(), fmt_float(std::f64::consts::PI)]);
        let one = t.to_csv_string();
        let two = t.to_csv_string();
        assert_eq!(one, two);
        assert!(one.starts_with("a,b\n"));
        assert!(one.contains("0.30000000000000004"));
        assert!(one.contains("\"x,with comma\""));
        assert!(!one.contains('\r'));
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 12345.6789, -0.0, 2.5e17] {
            let s = fmt_float(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} → {s}");
        }
    }

    #[test]
    fn svg_contains_polylines_axes_and_legend() {
        let mut chart = Chart::new("growth", "log10 x", "log10 y");
        chart.add_series("first", vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.1)]);
        chart.add_series("second", vec![(0.0, 0.5), (1.0, 0.5), (2.0, 0.6)]);
        let svg = chart.to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("growth"));
        assert!(svg.contains("first") && svg.contains("second"));
        assert!(svg.contains("log10 x") && svg.contains("log10 y"));
        assert!(svg.matches("<line").count() >= 4); // axes + legend swatches
    }

    #[test]
    fn degenerate_single_point_chart_still_renders() {
        let mut chart = Chart::new("flat", "x", "y");
        chart.add_series("only", vec![(1.0, 3.0)]);
        let svg = chart.to_svg();
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn table_files_land_on_disk() {
        let dir = std::env::temp_dir().join(format!("dyadic-report-{}", std::process::id()));
        let path = dir.join("t.csv");
        let mut t = Table::new(&["v"]);
        t.push_row(vec![fmt_float(1.25)]);
        t.write_csv(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "v\n1.25\n");
        let chart = Chart::new("t", "x", "y");
        let spath = dir.join("t.svg");
        chart.write_svg(&spath).unwrap();
        assert!(fs::read_to_string(&spath).unwrap().contains("</svg>"));
        let _ = fs::remove_dir_all(&dir);
    }
}
