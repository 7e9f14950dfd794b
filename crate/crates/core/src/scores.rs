//! Score matrices: column labels, CSV ingestion, and missingness bookkeeping.
//!
//! A score matrix has one row per unit and one column per score. Column labels
//! follow a small grammar:
//!
//! * `g` or `g.m<m>`: gold-standard column (method `m`, default 1),
//! * `c.<coder>.<score>`: a score by a coder under method 1,
//! * `m<m>.c.<coder>.<score>`: a score by a coder under method `m`.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{OmegaError, Result};

/// Largest category accepted for nominal or ordinal scores.
pub const MAX_CATEGORIES: usize = 10_000;

/// Raw grid of optional scores, one inner vector per unit.
pub type RawGrid = Vec<Vec<Option<f64>>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Gold,
    Coder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ColumnLabel {
    pub kind: LabelKind,
    pub method: u32,
    pub coder: Option<u32>,
    pub score: Option<u32>,
}

impl ColumnLabel {
    pub fn gold(method: u32) -> Self {
        ColumnLabel {
            kind: LabelKind::Gold,
            method,
            coder: None,
            score: None,
        }
    }

    pub fn coder(method: u32, coder: u32, score: u32) -> Self {
        ColumnLabel {
            kind: LabelKind::Coder,
            method,
            coder: Some(coder),
            score: Some(score),
        }
    }

    pub fn is_gold(&self) -> bool {
        self.kind == LabelKind::Gold
    }
}

impl fmt::Display for ColumnLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.coder, self.score) {
            (LabelKind::Gold, _, _) if self.method == 1 => write!(f, "g"),
            (LabelKind::Gold, _, _) => write!(f, "g.m{}", self.method),
            (LabelKind::Coder, Some(c), Some(s)) if self.method == 1 => write!(f, "c.{c}.{s}"),
            (LabelKind::Coder, Some(c), Some(s)) => write!(f, "m{}.c.{c}.{s}", self.method),
            // coder labels are only ever constructed with both indices
            (LabelKind::Coder, _, _) => write!(f, "c.?.?"),
        }
    }
}

fn positive(digits: &str) -> Option<u32> {
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<u32>().ok().filter(|&v| v > 0)
}

fn method_tag(tag: &str) -> Option<u32> {
    tag.strip_prefix('m').and_then(positive)
}

impl FromStr for ColumnLabel {
    type Err = ();

    fn from_str(text: &str) -> std::result::Result<Self, ()> {
        let parts: Vec<&str> = text.split('.').collect();
        match parts.as_slice() {
            ["g"] => Ok(ColumnLabel::gold(1)),
            ["g", m] => method_tag(m).map(ColumnLabel::gold).ok_or(()),
            ["c", c, s] => match (positive(c), positive(s)) {
                (Some(c), Some(s)) => Ok(ColumnLabel::coder(1, c, s)),
                _ => Err(()),
            },
            [m, "c", c, s] => match (method_tag(m), positive(c), positive(s)) {
                (Some(m), Some(c), Some(s)) => Ok(ColumnLabel::coder(m, c, s)),
                _ => Err(()),
            },
            _ => Err(()),
        }
    }
}

/// Outcome of checking a header row. Failures are reported in-band.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCheck {
    pub labels: Vec<Option<ColumnLabel>>,
    pub success: bool,
    /// 1-based indices of the columns that failed to parse.
    pub bad_columns: Vec<usize>,
}

impl LabelCheck {
    pub fn into_labels(self) -> Result<Vec<ColumnLabel>> {
        if self.success {
            Ok(self.labels.into_iter().flatten().collect())
        } else {
            Err(OmegaError::InvalidLabels(self.bad_columns))
        }
    }
}

/// Rudimentary header check. Duplicate labels are accepted.
pub fn parse_labels<S: AsRef<str>>(headers: &[S]) -> LabelCheck {
    let labels: Vec<Option<ColumnLabel>> = headers
        .iter()
        .map(|h| h.as_ref().parse::<ColumnLabel>().ok())
        .collect();
    let bad_columns: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_none())
        .map(|(i, _)| i + 1)
        .collect();
    LabelCheck {
        success: bad_columns.is_empty() && !labels.is_empty(),
        labels,
        bad_columns,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Nominal,
    Ordinal,
    Interval,
    Ratio,
}

impl Level {
    pub fn is_discrete(self) -> bool {
        matches!(self, Level::Nominal | Level::Ordinal)
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Nominal => "nominal",
            Level::Ordinal => "ordinal",
            Level::Interval => "interval",
            Level::Ratio => "ratio",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Level {
    type Err = OmegaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(Level::Nominal),
            "ordinal" => Ok(Level::Ordinal),
            "interval" => Ok(Level::Interval),
            "ratio" => Ok(Level::Ratio),
            _ => Err(OmegaError::UnknownName {
                what: "level",
                name: s.to_string(),
            }),
        }
    }
}

/// Units × labelled score columns, restricted to units with at least two
/// observed scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    labels: Vec<ColumnLabel>,
    level: Level,
    rows: RawGrid,
    retained: Vec<usize>,
    original_rows: usize,
    categories: Option<usize>,
}

impl ScoreMatrix {
    /// Drops units with fewer than two observed scores and validates values
    /// against the level of measurement.
    pub fn prepare(raw: &[Vec<Option<f64>>], labels: Vec<ColumnLabel>, level: Level) -> Result<Self> {
        Self::prepare_with_categories(raw, labels, level, None)
    }

    /// As [`ScoreMatrix::prepare`], but with a floor on the number of
    /// categories so that subsets of a dataset keep the full support.
    pub fn prepare_with_categories(
        raw: &[Vec<Option<f64>>],
        labels: Vec<ColumnLabel>,
        level: Level,
        min_categories: Option<usize>,
    ) -> Result<Self> {
        let width = labels.len();
        let mut rows = Vec::new();
        let mut retained = Vec::new();
        let mut k_max = 0usize;
        for (r, row) in raw.iter().enumerate() {
            if row.len() != width {
                return Err(OmegaError::RaggedRow {
                    row: r + 1,
                    found: row.len(),
                    expected: width,
                });
            }
            for (c, v) in row.iter().enumerate() {
                let Some(v) = *v else { continue };
                if !v.is_finite() {
                    return Err(OmegaError::BadValue {
                        row: r + 1,
                        col: c + 1,
                        value: v.to_string(),
                    });
                }
                if level.is_discrete() {
                    if v.fract() != 0.0 || v < 1.0 || v > MAX_CATEGORIES as f64 {
                        return Err(OmegaError::Level {
                            row: r + 1,
                            col: c + 1,
                            value: v,
                            level: level.name(),
                        });
                    }
                }
            }
            if row.iter().filter(|v| v.is_some()).count() >= 2 {
                if level.is_discrete() {
                    for v in row.iter().flatten() {
                        k_max = k_max.max(*v as usize);
                    }
                }
                rows.push(row.clone());
                retained.push(r);
            }
        }
        if rows.is_empty() {
            return Err(OmegaError::EmptyData);
        }
        let categories = level
            .is_discrete()
            .then(|| k_max.max(min_categories.unwrap_or(0)));
        Ok(ScoreMatrix {
            labels,
            level,
            rows,
            retained,
            original_rows: raw.len(),
            categories,
        })
    }

    /// Reads a CSV whose header row holds the column labels. `NA` or an empty
    /// cell marks a missing score.
    pub fn from_csv<R: Read>(reader: R, level: Level) -> Result<Self> {
        let (headers, raw) = read_csv(reader)?;
        let labels = parse_labels(&headers).into_labels()?;
        Self::prepare(&raw, labels, level)
    }

    pub fn labels(&self) -> &[ColumnLabel] {
        &self.labels
    }

    pub fn level(&self) -> Level {
        self.level
    }

    /// Retained rows in original order.
    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.rows
    }

    /// Original (0-based) row index of every retained row.
    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn original_rows(&self) -> usize {
        self.original_rows
    }

    pub fn n_units(&self) -> usize {
        self.rows.len()
    }

    pub fn n_columns(&self) -> usize {
        self.labels.len()
    }

    /// Number of categories K (maximum observed integer) for discrete data.
    pub fn categories(&self) -> Option<usize> {
        self.categories
    }

    /// Observed column indices for every retained unit.
    pub fn observed_mask(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| v.is_some())
                    .map(|(c, _)| c)
                    .collect()
            })
            .collect()
    }

    /// Observed scores flattened unit by unit, columns in label order.
    pub fn observed(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|row| row.iter().flatten().copied()).collect()
    }

    pub fn n_observed(&self) -> usize {
        self.rows.iter().map(|r| r.iter().flatten().count()).sum()
    }

    /// Replaces the observed values (in [`ScoreMatrix::observed`] order),
    /// keeping the missingness pattern, labels, and category count.
    pub fn with_observed(&self, values: &[f64]) -> ScoreMatrix {
        assert_eq!(values.len(), self.n_observed(), "observed length mismatch");
        let mut it = values.iter().copied();
        let rows = self
            .rows
            .iter()
            .map(|row| row.iter().map(|v| v.and_then(|_| it.next())).collect())
            .collect();
        let mut out = self.clone();
        out.rows = rows;
        if self.level.is_discrete() {
            let k = values.iter().fold(0usize, |k, &v| k.max(v as usize));
            out.categories = Some(k.max(self.categories.unwrap_or(0)));
        }
        out
    }

    /// Embeds the retained rows back into the original row count; dropped
    /// rows come back fully missing.
    pub fn embed_original(&self) -> RawGrid {
        let mut grid = vec![vec![None; self.labels.len()]; self.original_rows];
        for (row, &orig) in self.rows.iter().zip(&self.retained) {
            grid[orig] = row.clone();
        }
        grid
    }

    /// The dataset without the given original (0-based) rows. Indices of rows
    /// that are not retained are ignored.
    pub fn drop_units(&self, units: &[usize]) -> Result<ScoreMatrix> {
        let (raw, kept): (RawGrid, Vec<usize>) = self
            .rows
            .iter()
            .zip(&self.retained)
            .filter(|(_, orig)| !units.contains(orig))
            .map(|(r, &orig)| (r.clone(), orig))
            .unzip();
        let mut out = Self::prepare_with_categories(&raw, self.labels.clone(), self.level, self.categories)?;
        out.retained = out.retained.iter().map(|&i| kept[i]).collect();
        out.original_rows = self.original_rows;
        Ok(out)
    }

    /// The dataset without every column scored by `coder` under `method`.
    /// Units that fall below two observed scores are dropped.
    pub fn drop_coder(&self, method: u32, coder: u32) -> Result<ScoreMatrix> {
        let keep: Vec<usize> = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| !(l.kind == LabelKind::Coder && l.method == method && l.coder == Some(coder)))
            .map(|(c, _)| c)
            .collect();
        let labels = keep.iter().map(|&c| self.labels[c]).collect();
        let raw: RawGrid = self
            .rows
            .iter()
            .map(|row| keep.iter().map(|&c| row[c]).collect())
            .collect();
        let mut out = Self::prepare_with_categories(&raw, labels, self.level, self.categories)?;
        out.retained = out.retained.iter().map(|&i| self.retained[i]).collect();
        out.original_rows = self.original_rows;
        Ok(out)
    }
}

/// Reads the header and body of a score CSV without interpreting labels.
pub fn read_csv<R: Read>(reader: R) -> Result<(Vec<String>, RawGrid)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut raw = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(OmegaError::RaggedRow {
                row: r + 1,
                found: record.len(),
                expected: headers.len(),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| parse_cell(cell).ok_or_else(|| OmegaError::BadValue {
                row: r + 1,
                col: c + 1,
                value: cell.to_string(),
            }))
            .collect::<Result<Vec<_>>>()?;
        raw.push(row);
    }
    Ok((headers, raw))
}

fn parse_cell(cell: &str) -> Option<Option<f64>> {
    if cell.is_empty() || cell == "NA" {
        return Some(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(Some(v)),
        _ => None,
    }
}

/// Writes a grid with the given labels as CSV, `NA` for missing cells.
pub fn write_csv<W: std::io::Write>(writer: W, labels: &[ColumnLabel], grid: &[Vec<Option<f64>>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(labels.iter().map(|l| l.to_string()))?;
    for row in grid {
        w.write_record(row.iter().map(|v| match v {
            Some(v) => format!("{v}"),
            None => "NA".to_string(),
        }))?;
    }
    w.flush().map_err(|e| OmegaError::Csv(e.to_string()))?;
    Ok(())
}
