//! Metrics reporting: turn any metrics CSV into an SVG line chart (one
//! polyline per numeric column) and summary statistics. Column typing is
//! inferred: a column is a metric when every non-empty cell parses as a
//! number; string columns are skipped. An `epoch` column, when present,
//! becomes the x-axis.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Final, best (maximum), and mean of one metric column, computed over
/// present cells only (empty cells mark undefined values, e.g. an
/// accuracy with a zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnStats {
    #[serde(rename = "final")]
    pub final_value: f64,
    pub best: f64,
    pub mean: f64,
}

/// One parsed metric column: its values in row order, `None` for empty
/// cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricColumn {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

impl MetricColumn {
    pub fn stats(&self) -> Option<ColumnStats> {
        let present: Vec<f64> = self.values.iter().flatten().copied().collect();
        if present.is_empty() {
            return None;
        }
        Some(ColumnStats {
            final_value: *present.last().expect("non-empty"),
            best: present.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: present.iter().sum::<f64>() / present.len() as f64,
        })
    }
}

/// A metrics CSV reduced to its numeric content.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    /// X-axis values: the `epoch` column when present and numeric,
    /// otherwise the row index.
    pub x: Vec<f64>,
    pub x_name: String,
    pub columns: Vec<MetricColumn>,
}

/// Parse a metrics CSV. Fails on ragged rows or an empty file; columns
/// that do not parse as numbers are skipped rather than rejected, so the
/// same reader serves every CSV this workspace emits.
pub fn parse_metrics_csv(text: &str, path: &str) -> Result<MetricsTable> {
    let bad = |reason: String| Error::MalformedFile {
        path: path.to_string(),
        reason,
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty metrics file".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    if header.is_empty() || header.iter().any(|h| h.is_empty()) {
        return Err(bad("blank column name in header".into()));
    }
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    let mut rows = 0usize;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(bad(format!(
                "row {} has {} fields, expected {}",
                rows + 1,
                fields.len(),
                header.len()
            )));
        }
        for (column, field) in cells.iter_mut().zip(&fields) {
            column.push(field.trim().to_string());
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(bad("metrics file has no data rows".into()));
    }

    let parse_column = |values: &[String]| -> Option<Vec<Option<f64>>> {
        let mut parsed = Vec::with_capacity(values.len());
        let mut any = false;
        for v in values {
            if v.is_empty() {
                parsed.push(None);
            } else {
                let x: f64 = v.parse().ok()?;
                parsed.push(Some(x));
                any = true;
            }
        }
        any.then_some(parsed)
    };

    let mut x: Option<(String, Vec<f64>)> = None;
    let mut columns = Vec::new();
    for (name, values) in header.iter().zip(&cells) {
        let Some(parsed) = parse_column(values) else {
            continue; // string column (e.g. a domain tag)
        };
        if *name == "epoch" && x.is_none() && parsed.iter().all(Option::is_some) {
            x = Some((name.to_string(), parsed.into_iter().flatten().collect()));
        } else {
            columns.push(MetricColumn {
                name: name.to_string(),
                values: parsed,
            });
        }
    }
    let (x_name, x) = x.unwrap_or_else(|| ("row".to_string(), (0..rows).map(|i| i as f64).collect()));
    Ok(MetricsTable { x, x_name, columns })
}

/// Summary of every metric column, keyed by column name. Columns with no
/// present values are omitted.
pub fn summarize(table: &MetricsTable) -> BTreeMap<String, ColumnStats> {
    table
        .columns
        .iter()
        .filter_map(|c| c.stats().map(|s| (c.name.clone(), s)))
        .collect()
}

const SVG_WIDTH: f64 = 800.0;
const SVG_HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

fn escape_xml(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

/// Fixed-precision pixel coordinate: deterministic and compact.
fn px(v: f64) -> String {
    format!("{v:.2}")
}

/// Render one self-contained SVG line chart: one polyline per metric
/// column, legend on the right, min/max tick labels on both axes. Rows
/// with empty cells break the polyline into segments (isolated points are
/// drawn as dots) rather than interpolating through missing data.
pub fn render_svg(table: &MetricsTable, title: &str) -> String {
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    let (x_min, x_max) = bounds(table.x.iter().copied());
    let (y_min, y_max) = bounds(table.columns.iter().flat_map(|c| c.values.iter().flatten().copied()));
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let y_span = if y_max > y_min { y_max - y_min } else { 1.0 };
    let to_x = |v: f64| MARGIN_LEFT + (v - x_min) / x_span * plot_w;
    let to_y = |v: f64| MARGIN_TOP + (y_max - v) / y_span * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "  <title>{}</title>\n  <rect width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" fill=\"white\"/>\n",
        escape_xml(title)
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        px(MARGIN_LEFT + plot_w / 2.0),
        escape_xml(title)
    ));
    // Axes.
    svg.push_str(&format!(
        "  <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n  <line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = px(MARGIN_LEFT),
        t = px(MARGIN_TOP),
        b = px(MARGIN_TOP + plot_h),
        r = px(MARGIN_LEFT + plot_w),
    ));
    // Tick labels: axis extremes.
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
        px(MARGIN_LEFT - 6.0),
        px(MARGIN_TOP + plot_h + 4.0),
        escape_xml(&format!("{y_min:?}"))
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
        px(MARGIN_LEFT - 6.0),
        px(MARGIN_TOP + 4.0),
        escape_xml(&format!("{y_max:?}"))
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
        px(MARGIN_LEFT),
        px(MARGIN_TOP + plot_h + 18.0),
        escape_xml(&format!("{x_min:?}"))
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
        px(MARGIN_LEFT + plot_w),
        px(MARGIN_TOP + plot_h + 18.0),
        escape_xml(&format!("{x_max:?}"))
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        px(MARGIN_LEFT + plot_w / 2.0),
        px(SVG_HEIGHT - 12.0),
        escape_xml(&table.x_name)
    ));

    for (index, column) in table.columns.iter().enumerate() {
        let color = PALETTE[index % PALETTE.len()];
        // Split on missing cells into contiguous segments.
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for (x, y) in table.x.iter().zip(&column.values) {
            match y {
                Some(y) => segments.last_mut().expect("non-empty").push((to_x(*x), to_y(*y))),
                None => {
                    if !segments.last().expect("non-empty").is_empty() {
                        segments.push(Vec::new());
                    }
                }
            }
        }
        for segment in segments.iter().filter(|s| !s.is_empty()) {
            if segment.len() == 1 {
                let (x, y) = segment[0];
                svg.push_str(&format!(
                    "  <circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{color}\"/>\n",
                    px(x),
                    px(y)
                ));
            } else {
                let points: Vec<String> =
                    segment.iter().map(|(x, y)| format!("{},{}", px(*x), px(*y))).collect();
                svg.push_str(&format!(
                    "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                    points.join(" ")
                ));
            }
        }
        // Legend.
        let legend_y = MARGIN_TOP + 14.0 * index as f64;
        svg.push_str(&format!(
            "  <line x1=\"{x1}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            x1 = px(SVG_WIDTH - MARGIN_RIGHT + 10.0),
            x2 = px(SVG_WIDTH - MARGIN_RIGHT + 30.0),
            y = px(legend_y),
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{}</text>\n",
            px(SVG_WIDTH - MARGIN_RIGHT + 36.0),
            px(legend_y + 4.0),
            escape_xml(&column.name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if min.is_finite() && max.is_finite() {
        (min, max)
    } else {
        (0.0, 1.0)
    }
}
