//! Daily return ingestion, calendar alignment and return transformations.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::TRADING_DAYS;

/// Dated daily simple returns for a single series.
///
/// Dates are strictly increasing, values are finite and greater than −1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::invalid(format!(
                "series length mismatch: {} dates vs {} values",
                dates.len(),
                values.len()
            )));
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(format!(
                    "dates not strictly increasing at {}",
                    w[1]
                )));
            }
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v <= -1.0 {
                return Err(Error::invalid(format!(
                    "return value {v} at {} out of range (must be finite and > -1)",
                    dates[i]
                )));
            }
        }
        Ok(Self { dates, values })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Copy of the sub-series covering `[start, end)` row indices.
    pub fn slice(&self, start: usize, end: usize) -> ReturnSeries {
        ReturnSeries {
            dates: self.dates[start..end].to_vec(),
            values: self.values[start..end].to_vec(),
        }
    }

    fn check_same_calendar(&self, other: &ReturnSeries) -> Result<()> {
        if self.dates != other.dates {
            return Err(Error::CalendarMismatch(format!(
                "{} vs {} rows or differing dates",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }
}

/// Cumulative level path with an implicit base level of 1.0.
///
/// `levels` has one more entry than `dates`: `levels[0]` is the pre-sample
/// base and `levels[t + 1]` is the level at `dates[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceIndex {
    dates: Vec<NaiveDate>,
    levels: Vec<f64>,
}

impl PriceIndex {
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// All levels including the leading base of 1.0.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Compound daily returns into a level path starting at 1.0.
pub fn cumulative_index(r: &ReturnSeries) -> PriceIndex {
    let mut levels = Vec::with_capacity(r.len() + 1);
    let mut level = 1.0;
    levels.push(level);
    for v in r.values() {
        level *= 1.0 + v;
        levels.push(level);
    }
    PriceIndex {
        dates: r.dates.clone(),
        levels,
    }
}

/// Factor active return: factor minus market, elementwise on a shared calendar.
pub fn active_returns(factor: &ReturnSeries, market: &ReturnSeries) -> Result<ReturnSeries> {
    factor.check_same_calendar(market)?;
    let values = factor
        .values
        .iter()
        .zip(&market.values)
        .map(|(f, m)| f - m)
        .collect();
    Ok(ReturnSeries {
        dates: factor.dates.clone(),
        values,
    })
}

/// Return in excess of the risk-free rate.
///
/// `rf` holds annualized yield levels (decimal fractions); the daily
/// deduction is `rf / 252`.
pub fn excess_returns(r: &ReturnSeries, rf: &ReturnSeries) -> Result<ReturnSeries> {
    r.check_same_calendar(rf)?;
    let values = r
        .values
        .iter()
        .zip(&rf.values)
        .map(|(v, y)| v - y / TRADING_DAYS)
        .collect();
    Ok(ReturnSeries {
        dates: r.dates.clone(),
        values,
    })
}

/// How a CSV column is interpreted when loading a panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Values are daily simple returns already.
    Return,
    /// Values are total-return index levels; converted to daily returns.
    Level,
    /// Values are kept untouched (yields, VIX levels, ...).
    Raw,
}

/// One column to extract from a CSV file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    /// Header name in the source file.
    pub source: String,
    /// Name of the column in the loaded panel.
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn new(source: &str, name: &str, kind: ColumnKind) -> Self {
        Self {
            source: source.to_string(),
            name: name.to_string(),
            kind,
        }
    }
}

/// Column-name map describing the CSV layout expected by [`load_panel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelSchema {
    pub date_column: String,
    pub columns: Vec<ColumnSpec>,
}

/// Row bookkeeping from a panel load.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    /// Rows discarded because a required column had a missing value.
    pub rows_dropped: usize,
}

/// Named daily series on one shared trading calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPanel {
    dates: Vec<NaiveDate>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl AlignedPanel {
    pub fn new(dates: Vec<NaiveDate>, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::invalid("column name/data count mismatch"));
        }
        for (n, c) in names.iter().zip(&columns) {
            if c.len() != dates.len() {
                return Err(Error::invalid(format!(
                    "column {n} has {} rows, calendar has {}",
                    c.len(),
                    dates.len()
                )));
            }
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(format!(
                    "panel dates not strictly increasing at {}",
                    w[1]
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.clone()) {
                return Err(Error::invalid(format!("duplicate column name {n}")));
            }
        }
        Ok(Self {
            dates,
            names,
            columns,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    /// Extract a column as a validated [`ReturnSeries`].
    pub fn series(&self, name: &str) -> Result<ReturnSeries> {
        let values = self.column(name)?.to_vec();
        ReturnSeries::new(self.dates.clone(), values)
    }

    /// Inner-join two panels on their date intersection.
    pub fn inner_join(&self, other: &AlignedPanel) -> Result<AlignedPanel> {
        let other_idx: BTreeMap<NaiveDate, usize> = other
            .dates
            .iter()
            .enumerate()
            .map(|(i, d)| (*d, i))
            .collect();
        let mut dates = Vec::new();
        let mut self_rows = Vec::new();
        let mut other_rows = Vec::new();
        for (i, d) in self.dates.iter().enumerate() {
            if let Some(&j) = other_idx.get(d) {
                dates.push(*d);
                self_rows.push(i);
                other_rows.push(j);
            }
        }
        if dates.is_empty() {
            return Err(Error::EmptyIntersection);
        }
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        let mut columns: Vec<Vec<f64>> = self
            .columns
            .iter()
            .map(|c| self_rows.iter().map(|&i| c[i]).collect())
            .collect();
        columns.extend(
            other
                .columns
                .iter()
                .map(|c| other_rows.iter().map(|&j| c[j]).collect::<Vec<f64>>()),
        );
        AlignedPanel::new(dates, names, columns)
    }

    /// Restrict to `[start, end)` row indices.
    pub fn slice(&self, start: usize, end: usize) -> AlignedPanel {
        AlignedPanel {
            dates: self.dates[start..end].to_vec(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| c[start..end].to_vec())
                .collect(),
        }
    }

    /// Keep only the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<AlignedPanel> {
        let mut columns = Vec::with_capacity(names.len());
        for n in names {
            columns.push(self.column(n)?.to_vec());
        }
        AlignedPanel::new(self.dates.clone(), names.to_vec(), columns)
    }

    /// Forward-fill this panel's raw levels onto `calendar`.
    ///
    /// Each output row holds the most recent observation at or before the
    /// calendar date. Errors when a calendar date precedes the first
    /// observation.
    pub fn asof_align(&self, calendar: &[NaiveDate]) -> Result<AlignedPanel> {
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(calendar.len()); self.names.len()];
        let mut j = 0usize;
        for d in calendar {
            while j + 1 < self.dates.len() && self.dates[j + 1] <= *d {
                j += 1;
            }
            if self.dates.is_empty() || self.dates[j] > *d {
                return Err(Error::InsufficientHistory(format!(
                    "no observation at or before {d}"
                )));
            }
            for (c, col) in self.columns.iter().enumerate() {
                columns[c].push(col[j]);
            }
        }
        AlignedPanel::new(calendar.to_vec(), self.names.clone(), columns)
    }
}

/// Load a CSV into an aligned panel per `schema`.
///
/// Rows with a missing value in any required column are dropped and counted
/// in the report; unparseable dates or numbers are hard errors naming the
/// offending row. Rows are sorted by date, so the result does not depend on
/// input row order. Lines starting with `#` are skipped.
pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<(AlignedPanel, LoadReport)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.display().to_string(),
            source,
        })?;
    let headers = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.display().to_string(),
            source,
        })?
        .clone();
    let col_pos = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(format!("{name} in {}", path.display())))
    };
    let date_pos = col_pos(&schema.date_column)?;
    let mut positions = Vec::with_capacity(schema.columns.len());
    for c in &schema.columns {
        positions.push(col_pos(&c.source)?);
    }

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    let mut report = LoadReport::default();
    for (ridx, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: path.display().to_string(),
            source,
        })?;
        report.rows_read += 1;
        let row_no = ridx + 2; // header is line 1
        let raw_date = record.get(date_pos).unwrap_or("").trim();
        let date: NaiveDate = raw_date.parse().map_err(|_| Error::Parse {
            row: row_no,
            msg: format!("unparseable date {raw_date:?}"),
        })?;
        let mut values = Vec::with_capacity(positions.len());
        let mut missing = false;
        for (&pos, spec) in positions.iter().zip(&schema.columns) {
            let cell = record.get(pos).unwrap_or("").trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") || cell.eq_ignore_ascii_case("na")
            {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row_no,
                msg: format!("non-numeric value {cell:?} in column {}", spec.source),
            })?;
            if !v.is_finite() {
                missing = true;
                continue;
            }
            values.push(v);
        }
        if missing {
            report.rows_dropped += 1;
            continue;
        }
        rows.push((date, values));
    }
    rows.sort_by_key(|(d, _)| *d);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::invalid(format!(
                "duplicate date {} in {}",
                w[0].0,
                path.display()
            )));
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyIntersection);
    }

    let needs_level = schema.columns.iter().any(|c| c.kind == ColumnKind::Level);
    let dates: Vec<NaiveDate> = rows.iter().map(|(d, _)| *d).collect();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(schema.columns.len());
    for (ci, spec) in schema.columns.iter().enumerate() {
        let raw: Vec<f64> = rows.iter().map(|(_, v)| v[ci]).collect();
        let col = match spec.kind {
            ColumnKind::Return | ColumnKind::Raw => {
                if needs_level {
                    raw[1..].to_vec()
                } else {
                    raw
                }
            }
            ColumnKind::Level => {
                let mut out = Vec::with_capacity(raw.len().saturating_sub(1));
                for (i, w) in raw.windows(2).enumerate() {
                    if w[0] <= 0.0 {
                        return Err(Error::Parse {
                            row: i + 2,
                            msg: format!("non-positive level {} in column {}", w[0], spec.source),
                        });
                    }
                    out.push(w[1] / w[0] - 1.0);
                }
                out
            }
        };
        columns.push(col);
    }
    let dates = if needs_level { dates[1..].to_vec() } else { dates };
    let names = schema.columns.iter().map(|c| c.name.clone()).collect();
    Ok((AlignedPanel::new(dates, names, columns)?, report))
}
