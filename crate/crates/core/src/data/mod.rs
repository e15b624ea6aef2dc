// SPDX-License-Identifier: Apache-2.0

//! Typed, time-stamped instance data and the reported case counts it is
//! compared against.
//!
//! A [`Dataset`] is columnar: one [`Column`] per schema attribute, each of
//! length `N`, plus one calendar date per instance. Discrete columns store
//! dictionary codes whose order matches the lexicographic order of the
//! tokens; numeric columns additionally keep the sorted distinct values and
//! a rank per instance so that threshold candidates can be swept in one pass.

mod candidates;
mod condition;
mod schema;
mod time;

use std::collections::HashMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

pub use candidates::{candidate_conditions, Blacklist, CandidateOptions};
pub(crate) use candidates::{enumerate as enumerate_candidates, Candidate};
pub(crate) use time::date_range;
pub use condition::{Condition, ConditionError, ConditionValue, Operator};
pub use schema::{load_schema, parse_schema, validate_schema, AttributeKind, AttributeSchema};
pub use time::{
    build_time_index, detect_granularity, parse_targets, BucketLabel, Granularity, TargetSeries, TimeIndex,
    NO_BUCKET,
};

/// Name of the mandatory per-instance date column in instance files.
pub const DATE_COLUMN: &str = "date";

/// Code stored for a missing discrete cell or rank of a missing numeric cell.
pub const MISSING: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited file: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("duplicate attribute name `{0}`")]
    DuplicateAttribute(String),
    #[error("attribute name `{0}` is reserved")]
    ReservedName(String),
    #[error("unknown column `{0}` in instance file header")]
    UnknownColumn(String),
    #[error("instance file header lacks column `{0}`")]
    MissingColumn(String),
    #[error("kind mismatch at row {row}: column `{column}` is numeric but cell is `{cell}`")]
    KindMismatch {
        row: usize,
        column: String,
        cell: String,
    },
    #[error("unparsable date `{cell}` at row {row}")]
    BadDate { row: usize, cell: String },
    #[error("row {row} has {found} fields, expected {expected}")]
    RowLength {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("dataset must contain at least one instance")]
    Empty,
    #[error("column `{column}` has {found} cells, expected {expected}")]
    ColumnLength {
        column: String,
        found: usize,
        expected: usize,
    },
    #[error("column `{0}` does not match the declared kind")]
    ColumnKind(String),
    #[error("non-finite value in numeric column `{0}`")]
    NonFinite(String),
    #[error("bad target label `{label}` at row {row}: {reason}")]
    BadLabel {
        row: usize,
        label: String,
        reason: String,
    },
    #[error("granularity mismatch: label `{label}` is not a {expected} bucket")]
    GranularityMismatch { label: String, expected: Granularity },
    #[error("gap at {0}")]
    Gap(String),
    #[error("negative count {count} for bucket `{label}`")]
    NegativeCount { label: String, count: i64 },
    #[error("target series is empty")]
    NoTargets,
}

/// Borrowed view of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell<'a> {
    Token(&'a str),
    Number(f64),
    Missing,
}

/// Discrete column: a sorted token dictionary plus one code per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteColumn {
    tokens: Vec<String>,
    codes: Vec<u32>,
}

impl DiscreteColumn {
    /// Builds a column from raw cells; `None` is MISSING.
    pub fn from_cells<S: AsRef<str>>(cells: &[Option<S>]) -> Self {
        let mut tokens: Vec<String> = cells
            .iter()
            .flatten()
            .map(|s| s.as_ref().to_owned())
            .collect();
        tokens.sort_unstable();
        tokens.dedup();
        let lookup: HashMap<&str, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i as u32))
            .collect();
        let codes = cells
            .iter()
            .map(|c| c.as_ref().map_or(MISSING, |s| lookup[s.as_ref()]))
            .collect();
        DiscreteColumn { tokens, codes }
    }

    /// Builds a column from pre-coded cells. `tokens` must be strictly
    /// increasing and every code must index into it or be [`MISSING`].
    pub fn from_codes(tokens: Vec<String>, codes: Vec<u32>) -> Option<Self> {
        let sorted = tokens.windows(2).all(|w| w[0] < w[1]);
        let in_range = codes
            .iter()
            .all(|&c| c == MISSING || (c as usize) < tokens.len());
        (sorted && in_range).then_some(DiscreteColumn { tokens, codes })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn code_of(&self, token: &str) -> Option<u32> {
        self.tokens
            .binary_search_by(|t| t.as_str().cmp(token))
            .ok()
            .map(|i| i as u32)
    }
}

/// Numeric column. Missing cells are stored as NaN, which fails every
/// comparison and therefore never satisfies a condition.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericColumn {
    values: Vec<f64>,
    distinct: Vec<f64>,
    ranks: Vec<u32>,
    order: Vec<u32>,
}

impl NumericColumn {
    /// Builds a column; `None` is MISSING. Returns `None` on a non-finite value.
    pub fn from_cells(cells: &[Option<f64>]) -> Option<Self> {
        if cells.iter().flatten().any(|v| !v.is_finite()) {
            return None;
        }
        let values: Vec<f64> = cells.iter().map(|c| c.unwrap_or(f64::NAN)).collect();
        let mut distinct: Vec<f64> = cells.iter().flatten().copied().collect();
        // -0.0 and 0.0 compare equal and are one value for thresholding.
        distinct.sort_by(f64::total_cmp);
        distinct.dedup_by(|a, b| a == b);
        let ranks: Vec<u32> = values
            .iter()
            .map(|v| {
                if v.is_nan() {
                    MISSING
                } else {
                    distinct.partition_point(|d| d < v) as u32
                }
            })
            .collect();
        let mut order: Vec<u32> = (0..values.len() as u32)
            .filter(|&n| ranks[n as usize] != MISSING)
            .collect();
        order.sort_by_key(|&n| ranks[n as usize]);
        Some(NumericColumn {
            values,
            distinct,
            ranks,
            order,
        })
    }

    /// Raw values, NaN for MISSING.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sorted distinct observed values.
    pub fn distinct(&self) -> &[f64] {
        &self.distinct
    }

    /// Rank of each instance's value in [`distinct`](Self::distinct), or [`MISSING`].
    pub fn ranks(&self) -> &[u32] {
        &self.ranks
    }

    /// Non-missing instance indices ordered by value (ties by index).
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn get(&self, n: usize) -> Option<f64> {
        let v = self.values[n];
        (!v.is_nan()).then_some(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Discrete(DiscreteColumn),
    Numeric(NumericColumn),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Discrete(c) => c.codes.len(),
            Column::Numeric(c) => c.values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> AttributeKind {
        match self {
            Column::Discrete(_) => AttributeKind::Discrete,
            Column::Numeric(_) => AttributeKind::Numeric,
        }
    }

    pub fn cell(&self, n: usize) -> Cell<'_> {
        match self {
            Column::Discrete(c) => match c.codes[n] {
                MISSING => Cell::Missing,
                code => Cell::Token(&c.tokens[code as usize]),
            },
            Column::Numeric(c) => c.get(n).map_or(Cell::Missing, Cell::Number),
        }
    }

    pub fn is_missing(&self, n: usize) -> bool {
        matches!(self.cell(n), Cell::Missing)
    }

    pub fn missing_count(&self) -> usize {
        (0..self.len()).filter(|&n| self.is_missing(n)).count()
    }
}

/// Immutable columnar instance store.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Vec<AttributeSchema>,
    columns: Vec<Column>,
    dates: Vec<NaiveDate>,
}

impl Dataset {
    pub fn new(
        schema: Vec<AttributeSchema>,
        columns: Vec<Column>,
        dates: Vec<NaiveDate>,
    ) -> Result<Self, DataError> {
        validate_schema(&schema)?;
        if dates.is_empty() {
            return Err(DataError::Empty);
        }
        if columns.len() != schema.len() {
            return Err(DataError::Schema(format!(
                "{} columns supplied for {} attributes",
                columns.len(),
                schema.len()
            )));
        }
        for (attr, col) in schema.iter().zip(&columns) {
            if col.kind() != attr.kind {
                return Err(DataError::ColumnKind(attr.name.clone()));
            }
            if col.len() != dates.len() {
                return Err(DataError::ColumnLength {
                    column: attr.name.clone(),
                    found: col.len(),
                    expected: dates.len(),
                });
            }
        }
        Ok(Dataset {
            schema,
            columns,
            dates,
        })
    }

    /// Number of instances `N`.
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn schema(&self) -> &[AttributeSchema] {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, attribute: usize) -> &Column {
        &self.columns[attribute]
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|a| a.name == name)
    }

    pub fn cell(&self, attribute: usize, n: usize) -> Cell<'_> {
        self.columns[attribute].cell(n)
    }
}

/// Reads an instance file and its JSON schema sidecar.
pub fn load_dataset(instances_file: &Path, schema_file: &Path) -> Result<Dataset, DataError> {
    let schema = load_schema(schema_file)?;
    let file = std::fs::File::open(instances_file).map_err(|source| DataError::Io {
        path: instances_file.to_path_buf(),
        source,
    })?;
    read_dataset(file, schema)
}

/// Parses delimited instance text against a schema. The delimiter is a tab
/// if the header line contains one, a comma otherwise.
pub fn read_dataset<R: Read>(
    mut reader: R,
    schema: Vec<AttributeSchema>,
) -> Result<Dataset, DataError> {
    validate_schema(&schema)?;
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|source| DataError::Io {
            path: PathBuf::from("<instances>"),
            source,
        })?;
    let header_line = text.lines().next().unwrap_or("");
    let delimiter = if header_line.contains('\t') { b'\t' } else { b',' };

    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();

    let mut date_pos = None;
    let mut attr_pos = vec![None; schema.len()];
    for (pos, name) in headers.iter().enumerate() {
        let name = name.trim();
        if name == DATE_COLUMN {
            date_pos = Some(pos);
        } else if let Some(a) = schema.iter().position(|s| s.name == name) {
            attr_pos[a] = Some(pos);
        } else {
            return Err(DataError::UnknownColumn(name.to_owned()));
        }
    }
    let date_pos = date_pos.ok_or_else(|| DataError::MissingColumn(DATE_COLUMN.into()))?;
    let attr_pos: Vec<usize> = attr_pos
        .into_iter()
        .zip(&schema)
        .map(|(p, s)| p.ok_or_else(|| DataError::MissingColumn(s.name.clone())))
        .collect::<Result<_, _>>()?;

    let mut discrete: Vec<Vec<Option<String>>> = vec![Vec::new(); schema.len()];
    let mut numeric: Vec<Vec<Option<f64>>> = vec![Vec::new(); schema.len()];
    let mut dates = Vec::new();

    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != headers.len() {
            return Err(DataError::RowLength {
                row,
                found: record.len(),
                expected: headers.len(),
            });
        }
        let date_cell = record[date_pos].trim();
        let date = NaiveDate::parse_from_str(date_cell, "%Y-%m-%d").map_err(|_| {
            DataError::BadDate {
                row,
                cell: date_cell.to_owned(),
            }
        })?;
        dates.push(date);
        for (a, attr) in schema.iter().enumerate() {
            let cell = &record[attr_pos[a]];
            match attr.kind {
                AttributeKind::Discrete => {
                    discrete[a].push((!cell.is_empty()).then(|| cell.to_owned()));
                }
                AttributeKind::Numeric => {
                    let trimmed = cell.trim();
                    if trimmed.is_empty() {
                        numeric[a].push(None);
                        continue;
                    }
                    match trimmed.parse::<f64>() {
                        Ok(v) if v.is_finite() => numeric[a].push(Some(v)),
                        _ => {
                            return Err(DataError::KindMismatch {
                                row,
                                column: attr.name.clone(),
                                cell: cell.to_owned(),
                            })
                        }
                    }
                }
            }
        }
    }

    let columns = schema
        .iter()
        .enumerate()
        .map(|(a, attr)| match attr.kind {
            AttributeKind::Discrete => Ok(Column::Discrete(DiscreteColumn::from_cells(
                &discrete[a],
            ))),
            AttributeKind::Numeric => NumericColumn::from_cells(&numeric[a])
                .map(Column::Numeric)
                .ok_or_else(|| DataError::NonFinite(attr.name.clone())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(schema, columns, dates)
}
