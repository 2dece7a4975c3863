//! Flat key=value metric files and aligned-column tables built from them.
//!
//! Evaluation commands write one report per run. Keys under the `metric.`
//! prefix are numeric results eligible for tabulation; everything else is
//! config echo. A table merges several reports side by side, one column per
//! run, with a trailing average column.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Keys carrying this prefix are table rows; the prefix is stripped for
/// display.
pub const METRIC_PREFIX: &str = "metric.";

/// Key under which a report names itself; used as its table column header.
pub const TASK_KEY: &str = "task";

/// Ordered key=value pairs with deterministic text form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    entries: Vec<(String, String)>,
}

fn check_key(key: &str) -> Result<()> {
    if key.is_empty() {
        return Err(Error::Validation("report key is empty".into()));
    }
    if key.contains(['=', '\n', '\r', ' ', '\t']) {
        return Err(Error::Validation(format!(
            "report key {key:?} contains '=' or whitespace"
        )));
    }
    Ok(())
}

impl MetricsReport {
    #[must_use]
    pub fn new() -> Self {
        MetricsReport { entries: Vec::new() }
    }

    /// Appends a key. Keys are unique; re-pushing one is an error.
    pub fn push(&mut self, key: &str, value: &str) -> Result<()> {
        check_key(key)?;
        if value.contains(['\n', '\r']) {
            return Err(Error::Validation(format!(
                "report value for {key:?} contains a line break"
            )));
        }
        if self.get(key).is_some() {
            return Err(Error::Validation(format!("duplicate report key {key:?}")));
        }
        self.entries.push((key.to_string(), value.to_string()));
        Ok(())
    }

    /// Appends a numeric value using the shortest round-trip decimal form.
    pub fn push_f64(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Validation(format!(
                "report value for {key:?} is not finite"
            )));
        }
        self.push(key, &format!("{value}"))
    }

    pub fn push_usize(&mut self, key: &str, value: usize) -> Result<()> {
        self.push(key, &format!("{value}"))
    }

    #[must_use]
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::Validation(format!("report has no key {key:?}")))?;
        raw.parse::<f64>()
            .map_err(|_| Error::Validation(format!("report key {key:?} has non-numeric value {raw:?}")))
    }

    #[must_use]
    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Metric keys in insertion order, `metric.` prefix stripped.
    #[must_use]
    pub fn metric_names(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter_map(|(k, _)| k.strip_prefix(METRIC_PREFIX))
            .collect()
    }

    /// One `key=value` line per entry, insertion order.
    #[must_use]
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Parses the leading key=value block. A blank line ends the block;
    /// anything after it (such as an appended table) is ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut report = MetricsReport::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                break;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Validation(format!("report line {} has no '=': {line:?}", i + 1))
            })?;
            report.push(k, v)?;
        }
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Validation(msg) => Error::format(path, msg),
            other => other,
        })
    }
}

/// Labeled numeric grid rendered with aligned columns, four decimals per
/// cell, and a trailing `Avg` column averaging each row left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    corner: String,
    columns: Vec<String>,
    rows: Vec<(String, Vec<f64>)>,
}

impl MetricsTable {
    pub fn new(corner: &str, columns: Vec<String>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Validation("table needs at least one column".into()));
        }
        Ok(MetricsTable { corner: corner.to_string(), columns, rows: Vec::new() })
    }

    pub fn push_row(&mut self, label: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(Error::Validation(format!(
                "row {label:?} has {} values for {} columns",
                values.len(),
                self.columns.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("row {label:?} has a non-finite value")));
        }
        self.rows.push((label.to_string(), values));
        Ok(())
    }

    /// Mean of a row's values, fixed left-to-right summation.
    #[must_use]
    pub fn row_avg(&self, row: usize) -> f64 {
        let values = &self.rows[row].1;
        values.iter().sum::<f64>() / values.len() as f64
    }

    /// Aligned text: label column left-justified, numeric columns
    /// right-justified, cells formatted to four decimals, two spaces between
    /// columns. `with_avg` appends the per-row mean as a final column.
    #[must_use]
    pub fn render(&self, with_avg: bool) -> String {
        let mut headers: Vec<String> = Vec::with_capacity(self.columns.len() + 2);
        headers.push(self.corner.clone());
        headers.extend(self.columns.iter().cloned());
        if with_avg {
            headers.push("Avg".to_string());
        }
        let mut grid: Vec<Vec<String>> = vec![headers];
        for (i, (label, values)) in self.rows.iter().enumerate() {
            let mut row = Vec::with_capacity(values.len() + 2);
            row.push(label.clone());
            row.extend(values.iter().map(|v| format!("{v:.4}")));
            if with_avg {
                row.push(format!("{:.4}", self.row_avg(i)));
            }
            grid.push(row);
        }
        let cols = grid[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| grid.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &grid {
            for (c, cell) in row.iter().enumerate() {
                if c > 0 {
                    out.push_str("  ");
                }
                if c == 0 {
                    let _ = write!(out, "{cell:<width$}", width = widths[0]);
                } else {
                    let _ = write!(out, "{cell:>width$}", width = widths[c]);
                }
            }
            // Trailing spaces from the left-justified label column would
            // vary with other rows' widths; trim them so single-column rows
            // render identically alone or in a grid.
            while out.ends_with(' ') {
                out.pop();
            }
            out.push('\n');
        }
        out
    }
}

/// Merges per-run reports into one table: rows are the metric keys of the
/// first report, one column per report labeled by its `task` entry (or the
/// given fallback name), plus the `Avg` column when rendered.
///
/// Every report must carry exactly the metric keys of the first, in any
/// order; a mismatch is an error rather than a blank cell.
pub fn merge_reports(reports: &[(String, MetricsReport)]) -> Result<MetricsTable> {
    if reports.is_empty() {
        return Err(Error::Validation("no reports to merge".into()));
    }
    let metric_names = reports[0].1.metric_names();
    if metric_names.is_empty() {
        return Err(Error::Validation(format!(
            "report {:?} has no {METRIC_PREFIX}* keys",
            reports[0].0
        )));
    }
    let columns: Vec<String> = reports
        .iter()
        .map(|(fallback, r)| r.get(TASK_KEY).unwrap_or(fallback).to_string())
        .collect();
    let mut table = MetricsTable::new("metric", columns)?;
    for name in &metric_names {
        let key = format!("{METRIC_PREFIX}{name}");
        let mut values = Vec::with_capacity(reports.len());
        for (label, r) in reports {
            if r.get(&key).is_none() {
                return Err(Error::Validation(format!(
                    "report {label:?} is missing {key:?}"
                )));
            }
            values.push(r.get_f64(&key)?);
        }
        table.push_row(name, values)?;
    }
    for (label, r) in reports {
        let names = r.metric_names();
        if names.len() != metric_names.len() {
            return Err(Error::Validation(format!(
                "report {label:?} has {} metrics, expected {}",
                names.len(),
                metric_names.len()
            )));
        }
    }
    Ok(table)
}
