//! Minimal SVG rendering for result tables: grouped bars and multi-series
//! lines. Output is byte-deterministic for identical tables; floats are
//! formatted with fixed precision and no collection iteration order leaks
//! into the document.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::report::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    /// One bar per row; y from the last float column, x label from the
    /// string columns. Consecutive rows sharing the first string column
    /// form a visual group.
    Bars,
    /// One series per float column, x labels from the first column.
    /// Integer columns (counts) are not plotted.
    Lines,
}

impl std::str::FromStr for ChartKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bars" | "bar" => Ok(ChartKind::Bars),
            "lines" | "line" => Ok(ChartKind::Lines),
            other => Err(Error::invalid_input(format!(
                "unknown chart kind {other:?} (expected bars or lines)"
            ))),
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

/// Renders `table` as a standalone SVG document.
pub fn emit_chart(table: &Table, kind: ChartKind) -> Result<String> {
    if table.rows.is_empty() {
        return Err(Error::invalid_input(format!(
            "table {:?} has no rows to chart",
            table.name
        )));
    }
    match kind {
        ChartKind::Bars => emit_bars(table),
        ChartKind::Lines => emit_lines(table),
    }
}

fn float_columns(table: &Table) -> Vec<usize> {
    (0..table.columns.len())
        .filter(|&c| table.rows.iter().any(|r| matches!(r[c], Cell::Float(_))))
        .collect()
}

fn string_columns(table: &Table) -> Vec<usize> {
    (0..table.columns.len())
        .filter(|&c| table.rows.iter().all(|r| matches!(r[c], Cell::Str(_))))
        .collect()
}

fn fmt_num(x: f64) -> String {
    format!("{x:.4}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Canvas {
    svg: String,
    y_min: f64,
    y_max: f64,
}

impl Canvas {
    /// Plot area spans min(0, data) to max(1, data) so proportions stay
    /// comparable across charts of rates and similarities.
    fn new(title: &str, data_min: f64, data_max: f64) -> Canvas {
        let y_min = data_min.min(0.0);
        let y_max = data_max.max(1.0);
        let mut svg = String::new();
        let _ = write!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        svg.push('\n');
        let _ = writeln!(svg, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
            fmt_num(WIDTH / 2.0),
            escape(title)
        );
        let mut canvas = Canvas { svg, y_min, y_max };
        canvas.axes();
        canvas
    }

    fn plot_left(&self) -> f64 {
        MARGIN_LEFT
    }

    fn plot_width(&self) -> f64 {
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    }

    fn plot_bottom(&self) -> f64 {
        HEIGHT - MARGIN_BOTTOM
    }

    fn plot_height(&self) -> f64 {
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    }

    fn y_px(&self, v: f64) -> f64 {
        let t = (v - self.y_min) / (self.y_max - self.y_min);
        self.plot_bottom() - t * self.plot_height()
    }

    fn axes(&mut self) {
        let x0 = self.plot_left();
        let x1 = x0 + self.plot_width();
        let y0 = self.plot_bottom();
        let _ = writeln!(
            self.svg,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#333333"/>"##,
            fmt_num(x0),
            fmt_num(y0),
            fmt_num(x1),
            fmt_num(y0)
        );
        let _ = writeln!(
            self.svg,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#333333"/>"##,
            fmt_num(x0),
            fmt_num(MARGIN_TOP),
            fmt_num(x0),
            fmt_num(y0)
        );
        // five horizontal gridlines with tick labels
        for i in 0..=4 {
            let v = self.y_min + (self.y_max - self.y_min) * f64::from(i) / 4.0;
            let y = self.y_px(v);
            if i > 0 {
                let _ = writeln!(
                    self.svg,
                    r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#dddddd"/>"##,
                    fmt_num(x0),
                    fmt_num(y),
                    fmt_num(x1),
                    fmt_num(y)
                );
            }
            let _ = writeln!(
                self.svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{:.2}</text>"#,
                fmt_num(x0 - 6.0),
                fmt_num(y + 3.0),
                v
            );
        }
    }

    fn x_label(&mut self, x: f64, text: &str) {
        let _ = writeln!(
            self.svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            fmt_num(x),
            fmt_num(self.plot_bottom() + 14.0),
            escape(text)
        );
    }

    fn axis_title(&mut self, x_title: &str, y_title: &str) {
        let _ = writeln!(
            self.svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            fmt_num(MARGIN_LEFT + self.plot_width() / 2.0),
            fmt_num(HEIGHT - 12.0),
            escape(x_title)
        );
        let cy = MARGIN_TOP + self.plot_height() / 2.0;
        let _ = writeln!(
            self.svg,
            r#"<text x="14" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            fmt_num(cy),
            fmt_num(cy),
            escape(y_title)
        );
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn emit_bars(table: &Table) -> Result<String> {
    let floats = float_columns(table);
    let Some(&value_col) = floats.last() else {
        return Err(Error::invalid_input(format!(
            "table {:?} has no float column to chart",
            table.name
        )));
    };
    let labels = string_columns(table);

    let mut values = Vec::with_capacity(table.rows.len());
    let mut data_min: f64 = f64::INFINITY;
    let mut data_max: f64 = f64::NEG_INFINITY;
    for row in &table.rows {
        let v = match row[value_col] {
            Cell::Float(f) => Some(f),
            _ => None,
        };
        if let Some(f) = v {
            data_min = data_min.min(f);
            data_max = data_max.max(f);
        }
        values.push(v);
    }
    if !data_min.is_finite() {
        return Err(Error::invalid_input(format!(
            "table {:?} has only null values in column {:?}",
            table.name, table.columns[value_col]
        )));
    }

    let mut canvas = Canvas::new(&table.name, data_min, data_max);
    let n = table.rows.len();
    let slot = canvas.plot_width() / n as f64;
    let bar_w = slot * 0.7;
    let zero_y = canvas.y_px(0.0);
    for (i, (row, v)) in table.rows.iter().zip(&values).enumerate() {
        let x = canvas.plot_left() + slot * (i as f64 + 0.15);
        if let Some(v) = v {
            let y = canvas.y_px(v.max(0.0));
            let h = (zero_y - y).abs().max(0.5);
            // groups alternate color when the first string column changes
            let color = PALETTE[group_index(table, &labels, i) % PALETTE.len()];
            let _ = writeln!(
                canvas.svg,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                fmt_num(x),
                fmt_num(y.min(zero_y)),
                fmt_num(bar_w),
                fmt_num(h),
                color
            );
        }
        let label: Vec<String> = labels.iter().map(|&c| row[c].to_string()).collect();
        canvas.x_label(x + bar_w / 2.0, &label.join(" "));
    }
    let x_title = labels
        .iter()
        .map(|&c| table.columns[c].clone())
        .collect::<Vec<_>>()
        .join(" / ");
    canvas.axis_title(&x_title, &table.columns[value_col]);
    Ok(canvas.finish())
}

/// Index of the run of equal first-label values that row `i` belongs to.
fn group_index(table: &Table, labels: &[usize], i: usize) -> usize {
    let Some(&first) = labels.first() else { return 0 };
    let mut g = 0;
    for j in 1..=i {
        if table.rows[j][first] != table.rows[j - 1][first] {
            g += 1;
        }
    }
    g
}

fn emit_lines(table: &Table) -> Result<String> {
    let series_cols = float_columns(table);
    if series_cols.is_empty() {
        return Err(Error::invalid_input(format!(
            "table {:?} has no float column to chart",
            table.name
        )));
    }

    let mut data_min: f64 = f64::INFINITY;
    let mut data_max: f64 = f64::NEG_INFINITY;
    for row in &table.rows {
        for &c in &series_cols {
            if let Cell::Float(f) = row[c] {
                data_min = data_min.min(f);
                data_max = data_max.max(f);
            }
        }
    }
    if !data_min.is_finite() {
        return Err(Error::invalid_input(format!(
            "table {:?} has only null values in its float columns",
            table.name
        )));
    }

    let mut canvas = Canvas::new(&table.name, data_min, data_max);
    let n = table.rows.len();
    let xs: Vec<f64> = {
        let left = canvas.plot_left();
        let width = canvas.plot_width();
        if n > 1 {
            let step = width / (n - 1) as f64;
            (0..n).map(|i| left + step * i as f64).collect()
        } else {
            vec![left + width / 2.0]
        }
    };

    for (i, row) in table.rows.iter().enumerate() {
        canvas.x_label(xs[i], &row[0].to_string());
    }

    for (s, &col) in series_cols.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        // nulls break the polyline into segments
        let mut segment: Vec<(f64, f64)> = Vec::new();
        let mut segments: Vec<Vec<(f64, f64)>> = Vec::new();
        for (i, row) in table.rows.iter().enumerate() {
            match row[col] {
                Cell::Float(f) => segment.push((xs[i], canvas.y_px(f))),
                _ => {
                    if !segment.is_empty() {
                        segments.push(std::mem::take(&mut segment));
                    }
                }
            }
        }
        if !segment.is_empty() {
            segments.push(segment);
        }
        for seg in &segments {
            if seg.len() == 1 {
                let (x, y) = seg[0];
                let _ = writeln!(
                    canvas.svg,
                    r#"<circle cx="{}" cy="{}" r="3" fill="{}"/>"#,
                    fmt_num(x),
                    fmt_num(y),
                    color
                );
            } else {
                let points: Vec<String> =
                    seg.iter().map(|(x, y)| format!("{},{}", fmt_num(*x), fmt_num(*y))).collect();
                let _ = writeln!(
                    canvas.svg,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
                    points.join(" "),
                    color
                );
            }
        }
        // legend entry
        let ly = MARGIN_TOP + 14.0 * s as f64;
        let _ = writeln!(
            canvas.svg,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/>"#,
            fmt_num(WIDTH - MARGIN_RIGHT - 110.0),
            fmt_num(ly),
            color
        );
        let _ = writeln!(
            canvas.svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10">{}</text>"#,
            fmt_num(WIDTH - MARGIN_RIGHT - 96.0),
            fmt_num(ly + 9.0),
            escape(&table.columns[col])
        );
    }
    canvas.axis_title(&table.columns[0], "value");
    Ok(canvas.finish())
}
