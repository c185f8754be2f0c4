//! Observed-data representation for the missing-exposure problem.
//!
//! A [`Dataset`] holds fully observed covariates `X` and outcome `Y`, a
//! partially observed binary exposure `A`, and the missingness indicator `R`
//! (`R_i = 1` exactly when `A_i` is absent). A [`CompletedDataset`] is one
//! imputed version of the exposure column.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Formula alias for the exposure column.
pub const EXPOSURE_ALIAS: &str = "A";
/// Formula alias for the imputed exposure of a completed dataset.
pub const IMPUTED_ALIAS: &str = "A_imp";
/// Formula alias for the outcome column.
pub const OUTCOME_ALIAS: &str = "Y";
/// Formula alias for the missingness indicator.
pub const MISSING_ALIAS: &str = "R";

pub const RESERVED_NAMES: [&str; 4] = [EXPOSURE_ALIAS, IMPUTED_ALIAS, OUTCOME_ALIAS, MISSING_ALIAS];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("absent value in column `{column}` at row {row}")]
    MissingValue { column: String, row: usize },
    #[error("non-binary exposure value `{value}` at row {row}")]
    NonBinaryExposure { row: usize, value: String },
    #[error("non-binary outcome value `{value}` at row {row}")]
    NonBinaryOutcome { row: usize, value: String },
    #[error("non-numeric value `{value}` in column `{column}` at row {row}")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },
    #[error("value in column `{column}` at row {row} is not finite")]
    NotFinite { column: String, row: usize },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("column name `{0}` collides with a reserved formula name")]
    ReservedName(String),
    #[error("categorical covariate `{column}` has {levels} levels; only two-level categoricals are recoded")]
    MultiLevelCategorical { column: String, levels: usize },
    #[error("column lengths disagree: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("dataset has no rows")]
    Empty,
    #[error("missingness indicator disagrees with exposure at row {0}")]
    MissingIndicatorMismatch(usize),
    #[error("imputed exposure disagrees with observed exposure at row {0}")]
    ImputedMismatch(usize),
    #[error("imputed exposure value {value} at row {row} is not binary")]
    NonBinaryImputed { row: usize, value: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Binary,
    Continuous,
}

/// What a formula name refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Covariate(usize),
    Exposure,
    ImputedExposure,
    Outcome,
    Missingness,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariate_names: Vec<String>,
    covariates: Vec<Vec<f64>>,
    /// Original labels of two-level categorical covariates, `[level0, level1]`.
    covariate_levels: Vec<Option<[String; 2]>>,
    exposure: Vec<Option<u8>>,
    outcome: Vec<f64>,
    outcome_kind: OutcomeKind,
    missing: Vec<u8>,
    exposure_name: String,
    outcome_name: String,
}

impl Dataset {
    /// Builds a validated dataset with exposure named `A` and outcome `Y`.
    /// `covariates` is column-major: one vector per covariate.
    pub fn new(
        covariate_names: Vec<String>,
        covariates: Vec<Vec<f64>>,
        exposure: Vec<Option<u8>>,
        outcome: Vec<f64>,
        outcome_kind: OutcomeKind,
    ) -> Result<Self, DataError> {
        Self::with_names(
            covariate_names,
            covariates,
            exposure,
            outcome,
            outcome_kind,
            EXPOSURE_ALIAS,
            OUTCOME_ALIAS,
        )
    }

    pub fn with_names(
        covariate_names: Vec<String>,
        covariates: Vec<Vec<f64>>,
        exposure: Vec<Option<u8>>,
        outcome: Vec<f64>,
        outcome_kind: OutcomeKind,
        exposure_name: &str,
        outcome_name: &str,
    ) -> Result<Self, DataError> {
        let missing = exposure.iter().map(|a| u8::from(a.is_none())).collect();
        let levels = vec![None; covariate_names.len()];
        let ds = Dataset {
            covariate_names,
            covariates,
            covariate_levels: levels,
            exposure,
            outcome,
            outcome_kind,
            missing,
            exposure_name: exposure_name.to_string(),
            outcome_name: outcome_name.to_string(),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Like [`Dataset::new`] but with an explicit missingness indicator, which
    /// must agree exactly with the absent exposure entries.
    pub fn from_parts(
        covariate_names: Vec<String>,
        covariates: Vec<Vec<f64>>,
        exposure: Vec<Option<u8>>,
        outcome: Vec<f64>,
        outcome_kind: OutcomeKind,
        missing: Vec<u8>,
    ) -> Result<Self, DataError> {
        if missing.len() != exposure.len() {
            return Err(DataError::LengthMismatch {
                expected: exposure.len(),
                found: missing.len(),
            });
        }
        for (i, (r, a)) in missing.iter().zip(&exposure).enumerate() {
            if (*r == 1) != a.is_none() || *r > 1 {
                return Err(DataError::MissingIndicatorMismatch(i));
            }
        }
        Self::new(covariate_names, covariates, exposure, outcome, outcome_kind)
    }

    fn validate(&self) -> Result<(), DataError> {
        let n = self.exposure.len();
        if n == 0 {
            return Err(DataError::Empty);
        }
        if self.outcome.len() != n {
            return Err(DataError::LengthMismatch {
                expected: n,
                found: self.outcome.len(),
            });
        }
        if self.covariates.len() != self.covariate_names.len() {
            return Err(DataError::LengthMismatch {
                expected: self.covariate_names.len(),
                found: self.covariates.len(),
            });
        }
        for c in &self.covariates {
            if c.len() != n {
                return Err(DataError::LengthMismatch {
                    expected: n,
                    found: c.len(),
                });
            }
        }

        if self.exposure_name == self.outcome_name {
            return Err(DataError::DuplicateColumn(self.exposure_name.clone()));
        }
        if [IMPUTED_ALIAS, OUTCOME_ALIAS, MISSING_ALIAS].contains(&self.exposure_name.as_str()) {
            return Err(DataError::ReservedName(self.exposure_name.clone()));
        }
        if [EXPOSURE_ALIAS, IMPUTED_ALIAS, MISSING_ALIAS].contains(&self.outcome_name.as_str()) {
            return Err(DataError::ReservedName(self.outcome_name.clone()));
        }
        let mut seen = HashSet::new();
        for name in &self.covariate_names {
            if RESERVED_NAMES.contains(&name.as_str())
                || *name == self.exposure_name
                || *name == self.outcome_name
            {
                return Err(DataError::ReservedName(name.clone()));
            }
            if !seen.insert(name.as_str()) {
                return Err(DataError::DuplicateColumn(name.clone()));
            }
        }

        for (name, col) in self.covariate_names.iter().zip(&self.covariates) {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NotFinite {
                    column: name.clone(),
                    row,
                });
            }
        }
        for (row, y) in self.outcome.iter().enumerate() {
            if !y.is_finite() {
                return Err(DataError::NotFinite {
                    column: self.outcome_name.clone(),
                    row,
                });
            }
            if self.outcome_kind == OutcomeKind::Binary && *y != 0.0 && *y != 1.0 {
                return Err(DataError::NonBinaryOutcome {
                    row,
                    value: y.to_string(),
                });
            }
        }
        for (row, a) in self.exposure.iter().enumerate() {
            if let Some(v) = a {
                if *v > 1 {
                    return Err(DataError::NonBinaryExposure {
                        row,
                        value: v.to_string(),
                    });
                }
            }
            if (self.missing[row] == 1) != a.is_none() {
                return Err(DataError::MissingIndicatorMismatch(row));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.exposure.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariate(&self, idx: usize) -> &[f64] {
        &self.covariates[idx]
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }

    pub fn exposure(&self) -> &[Option<u8>] {
        &self.exposure
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn missing_indicator(&self) -> &[u8] {
        &self.missing
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().map(|&r| r as usize).sum()
    }

    pub fn missing_rate(&self) -> f64 {
        self.missing_count() as f64 / self.n() as f64
    }

    pub fn observed_count(&self) -> usize {
        self.n() - self.missing_count()
    }

    pub fn exposure_name(&self) -> &str {
        &self.exposure_name
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    /// Resolves a formula name to a column role. The exposure and outcome
    /// answer to both their column names and the `A` / `Y` aliases.
    pub fn resolve(&self, name: &str) -> Option<Role> {
        if name == self.exposure_name || name == EXPOSURE_ALIAS {
            Some(Role::Exposure)
        } else if name == IMPUTED_ALIAS {
            Some(Role::ImputedExposure)
        } else if name == self.outcome_name || name == OUTCOME_ALIAS {
            Some(Role::Outcome)
        } else if name == MISSING_ALIAS {
            Some(Role::Missingness)
        } else {
            self.covariate_index(name).map(Role::Covariate)
        }
    }

    /// Rows drawn by index (duplicates allowed), as used by the bootstrap.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            covariate_names: self.covariate_names.clone(),
            covariates: self.covariates.iter().map(|c| pick(c)).collect(),
            covariate_levels: self.covariate_levels.clone(),
            exposure: rows.iter().map(|&i| self.exposure[i]).collect(),
            outcome: pick(&self.outcome),
            outcome_kind: self.outcome_kind,
            missing: rows.iter().map(|&i| self.missing[i]).collect(),
            exposure_name: self.exposure_name.clone(),
            outcome_name: self.outcome_name.clone(),
        }
    }

    /// Copy of this dataset with the given exposure vector (used to reveal or
    /// mask exposures in simulations).
    pub fn with_exposure(&self, exposure: Vec<Option<u8>>) -> Result<Dataset, DataError> {
        let mut ds = self.clone();
        if exposure.len() != ds.n() {
            return Err(DataError::LengthMismatch {
                expected: ds.n(),
                found: exposure.len(),
            });
        }
        ds.missing = exposure.iter().map(|a| u8::from(a.is_none())).collect();
        ds.exposure = exposure;
        ds.validate()?;
        Ok(ds)
    }
}

/// One imputed version of the exposure column.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedDataset<'a> {
    pub base: &'a Dataset,
    pub exposure_imputed: Vec<u8>,
    /// 1-based index within its imputation set.
    pub imputation_index: usize,
}

impl<'a> CompletedDataset<'a> {
    pub fn new(
        base: &'a Dataset,
        exposure_imputed: Vec<u8>,
        imputation_index: usize,
    ) -> Result<Self, DataError> {
        if exposure_imputed.len() != base.n() {
            return Err(DataError::LengthMismatch {
                expected: base.n(),
                found: exposure_imputed.len(),
            });
        }
        for (row, (&imp, obs)) in exposure_imputed.iter().zip(base.exposure()).enumerate() {
            if imp > 1 {
                return Err(DataError::NonBinaryImputed { row, value: imp });
            }
            if let Some(a) = obs {
                if *a != imp {
                    return Err(DataError::ImputedMismatch(row));
                }
            }
        }
        Ok(CompletedDataset {
            base,
            exposure_imputed,
            imputation_index,
        })
    }

    /// The observed data itself, when nothing is missing.
    pub fn observed(base: &'a Dataset) -> Option<Self> {
        let a: Option<Vec<u8>> = base.exposure().iter().copied().collect();
        a.map(|exposure_imputed| CompletedDataset {
            base,
            exposure_imputed,
            imputation_index: 1,
        })
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn exposed_count(&self) -> usize {
        self.exposure_imputed.iter().map(|&a| a as usize).sum()
    }
}

/// Maps dataset roles onto CSV columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub exposure: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub outcome_kind: OutcomeKind,
    /// Token marking a missing exposure; the empty cell always counts as missing.
    pub missing_token: String,
}

impl CsvSchema {
    pub fn new(exposure: &str, outcome: &str, covariates: &[&str], kind: OutcomeKind) -> Self {
        CsvSchema {
            exposure: exposure.to_string(),
            outcome: outcome.to_string(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            outcome_kind: kind,
            missing_token: String::new(),
        }
    }

    pub fn with_missing_token(mut self, token: &str) -> Self {
        self.missing_token = token.to_string();
        self
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| DataError::Csv(format!("{}: {e}", path.as_ref().display())))?;
    read_csv(file, schema)
}

fn parse_binary(cell: &str) -> Option<u8> {
    match cell.parse::<f64>() {
        Ok(0.0) => Some(0),
        Ok(1.0) => Some(1),
        _ => None,
    }
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let col = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    };
    let a_col = col(&schema.exposure)?;
    let y_col = col(&schema.outcome)?;
    let x_cols = schema
        .covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut raw_x: Vec<Vec<String>> = vec![Vec::new(); x_cols.len()];
    let mut exposure = Vec::new();
    let mut outcome = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
        let cell = |i: usize| rec.get(i).map(str::trim).unwrap_or("");

        let a = cell(a_col);
        if a.is_empty() || a == schema.missing_token {
            exposure.push(None);
        } else {
            exposure.push(Some(parse_binary(a).ok_or_else(|| DataError::NonBinaryExposure {
                row,
                value: a.to_string(),
            })?));
        }

        let y = cell(y_col);
        if y.is_empty() || (!schema.missing_token.is_empty() && y == schema.missing_token) {
            return Err(DataError::MissingValue {
                column: schema.outcome.clone(),
                row,
            });
        }
        let yv = match schema.outcome_kind {
            OutcomeKind::Binary => f64::from(parse_binary(y).ok_or_else(|| {
                DataError::NonBinaryOutcome {
                    row,
                    value: y.to_string(),
                }
            })?),
            OutcomeKind::Continuous => y.parse::<f64>().map_err(|_| DataError::NonNumeric {
                column: schema.outcome.clone(),
                row,
                value: y.to_string(),
            })?,
        };
        outcome.push(yv);

        for (k, &ci) in x_cols.iter().enumerate() {
            let v = cell(ci);
            if v.is_empty() || (!schema.missing_token.is_empty() && v == schema.missing_token) {
                return Err(DataError::MissingValue {
                    column: schema.covariates[k].clone(),
                    row,
                });
            }
            raw_x[k].push(v.to_string());
        }
    }
    if exposure.is_empty() {
        return Err(DataError::Empty);
    }

    let mut covariates = Vec::with_capacity(raw_x.len());
    let mut levels = Vec::with_capacity(raw_x.len());
    for (name, cells) in schema.covariates.iter().zip(raw_x) {
        let numeric: Option<Vec<f64>> = cells.iter().map(|c| c.parse::<f64>().ok()).collect();
        match numeric {
            Some(v) => {
                covariates.push(v);
                levels.push(None);
            }
            None => {
                let distinct: BTreeSet<&str> = cells.iter().map(String::as_str).collect();
                if distinct.len() > 2 {
                    return Err(DataError::MultiLevelCategorical {
                        column: name.clone(),
                        levels: distinct.len(),
                    });
                }
                let lv: Vec<&str> = distinct.into_iter().collect();
                let hi = lv.get(1).copied().unwrap_or("");
                covariates.push(cells.iter().map(|c| f64::from(u8::from(c == hi))).collect());
                levels.push(Some([lv[0].to_string(), hi.to_string()]));
            }
        }
    }

    let mut ds = Dataset::with_names(
        schema.covariates.clone(),
        covariates,
        exposure,
        outcome,
        schema.outcome_kind,
        &schema.exposure,
        &schema.outcome,
    )?;
    ds.covariate_levels = levels;
    Ok(ds)
}

fn fmt_num(v: f64) -> String {
    // shortest representation that parses back to the same f64
    format!("{v}")
}

fn covariate_cell(ds: &Dataset, k: usize, i: usize) -> String {
    let v = ds.covariates[k][i];
    match &ds.covariate_levels[k] {
        Some([lo, hi]) => {
            if v == 1.0 {
                hi.clone()
            } else {
                lo.clone()
            }
        }
        None => fmt_num(v),
    }
}

/// Writes the dataset with columns `covariates..., exposure, outcome`.
/// Missing exposures are written as `missing_token`.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W, missing_token: &str) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds.covariate_names.iter().map(String::as_str).collect();
    header.push(&ds.exposure_name);
    header.push(&ds.outcome_name);
    w.write_record(&header).map_err(|e| DataError::Csv(e.to_string()))?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = (0..ds.covariates.len()).map(|k| covariate_cell(ds, k, i)).collect();
        rec.push(match ds.exposure[i] {
            Some(a) => a.to_string(),
            None => missing_token.to_string(),
        });
        rec.push(fmt_num(ds.outcome[i]));
        w.write_record(&rec).map_err(|e| DataError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| DataError::Csv(e.to_string()))
}

/// Writes completed datasets stacked, with an extra `imputation_index` column.
pub fn write_completed_csv<W: Write>(
    completions: &[CompletedDataset<'_>],
    writer: W,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let Some(first) = completions.first() else {
        return Ok(());
    };
    let ds = first.base;
    let mut header: Vec<&str> = ds.covariate_names.iter().map(String::as_str).collect();
    header.push(&ds.exposure_name);
    header.push(&ds.outcome_name);
    header.push("imputation_index");
    w.write_record(&header).map_err(|e| DataError::Csv(e.to_string()))?;
    for c in completions {
        for i in 0..ds.n() {
            let mut rec: Vec<String> =
                (0..ds.covariates.len()).map(|k| covariate_cell(c.base, k, i)).collect();
            rec.push(c.exposure_imputed[i].to_string());
            rec.push(fmt_num(c.base.outcome[i]));
            rec.push(c.imputation_index.to_string());
            w.write_record(&rec).map_err(|e| DataError::Csv(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| DataError::Csv(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub eps: f64,
    pub count: usize,
    pub indices: Vec<usize>,
}

/// Flags fitted propensities outside `[eps, 1 - eps]`.
pub fn validate_positivity(ps_values: &[f64], eps: f64) -> PositivityReport {
    let indices: Vec<usize> = ps_values
        .iter()
        .enumerate()
        .filter(|(_, &p)| p < eps || p > 1.0 - eps)
        .map(|(i, _)| i)
        .collect();
    PositivityReport {
        eps,
        count: indices.len(),
        indices,
    }
}
