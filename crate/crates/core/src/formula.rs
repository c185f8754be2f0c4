//! Main-effects model formulas (`A ~ X1 + X2 + Y`) and design matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CompletedDataset, Dataset, Role};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormulaError {
    #[error("formula syntax error: {0}")]
    Syntax(String),
    #[error("formula has an empty response")]
    EmptyResponse,
    #[error("duplicate term `{0}`")]
    DuplicateTerm(String),
    #[error("response `{0}` also appears among the predictors")]
    ResponseInPredictors(String),
    #[error("name `{0}` does not resolve to a column")]
    Unresolved(String),
    #[error("exposure `{0}` has missing values and cannot be used as a predictor here")]
    ExposureUnavailable(String),
}

/// A parsed formula. The intercept is always included.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModelSpec {
    pub response: String,
    pub predictors: Vec<String>,
}

impl ModelSpec {
    pub fn new(response: &str, predictors: &[&str]) -> Result<Self, FormulaError> {
        let spec = ModelSpec {
            response: response.to_string(),
            predictors: predictors.iter().map(|s| s.to_string()).collect(),
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<(), FormulaError> {
        if self.response.is_empty() {
            return Err(FormulaError::EmptyResponse);
        }
        check_name(&self.response)?;
        for (i, p) in self.predictors.iter().enumerate() {
            check_name(p)?;
            if *p == self.response {
                return Err(FormulaError::ResponseInPredictors(p.clone()));
            }
            if self.predictors[..i].contains(p) {
                return Err(FormulaError::DuplicateTerm(p.clone()));
            }
        }
        Ok(())
    }

    pub fn is_intercept_only(&self) -> bool {
        self.predictors.is_empty()
    }

    /// Number of coefficients, intercept included.
    pub fn n_coefficients(&self) -> usize {
        self.predictors.len() + 1
    }

    pub fn with_response(&self, response: &str) -> Result<Self, FormulaError> {
        let spec = ModelSpec {
            response: response.to_string(),
            predictors: self.predictors.clone(),
        };
        spec.check()?;
        Ok(spec)
    }
}

fn check_name(name: &str) -> Result<(), FormulaError> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '.')
        && !name.chars().next().is_some_and(|c| c.is_ascii_digit());
    if ok {
        Ok(())
    } else {
        Err(FormulaError::Syntax(format!("invalid term `{name}`")))
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.predictors.is_empty() {
            write!(f, "{} ~ 1", self.response)
        } else {
            write!(f, "{} ~ {}", self.response, self.predictors.join(" + "))
        }
    }
}

impl FromStr for ModelSpec {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = FormulaError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse_formula(&s)
    }
}

impl From<ModelSpec> for String {
    fn from(spec: ModelSpec) -> String {
        spec.to_string()
    }
}

/// Parses `response ~ term (+ term)*`; `response ~ 1` is intercept-only.
pub fn parse_formula(text: &str) -> Result<ModelSpec, FormulaError> {
    let mut parts = text.split('~');
    let lhs = parts.next().unwrap_or("").trim();
    let rhs = parts
        .next()
        .ok_or_else(|| FormulaError::Syntax("missing `~`".into()))?
        .trim();
    if parts.next().is_some() {
        return Err(FormulaError::Syntax("more than one `~`".into()));
    }
    if lhs.is_empty() {
        return Err(FormulaError::EmptyResponse);
    }
    if rhs.is_empty() {
        return Err(FormulaError::Syntax("empty right-hand side".into()));
    }
    for bad in [':', '*', '(', ')', '^', '|', '-', '/'] {
        if rhs.contains(bad) {
            return Err(FormulaError::Syntax(format!(
                "unsupported operator `{bad}`; only main effects joined by `+` are allowed"
            )));
        }
    }
    let mut predictors = Vec::new();
    let mut saw_intercept = false;
    for term in rhs.split('+') {
        let term = term.trim();
        if term.is_empty() {
            return Err(FormulaError::Syntax("empty term".into()));
        }
        if term == "1" {
            if saw_intercept {
                return Err(FormulaError::DuplicateTerm("1".into()));
            }
            saw_intercept = true;
            continue;
        }
        predictors.push(term.to_string());
    }
    let spec = ModelSpec {
        response: lhs.to_string(),
        predictors,
    };
    spec.check()?;
    Ok(spec)
}

/// Something a formula can be evaluated against.
pub trait DesignSource {
    fn dataset(&self) -> &Dataset;
    /// Imputed exposure, when this is a completed dataset.
    fn imputed_exposure(&self) -> Option<&[u8]>;
}

impl DesignSource for Dataset {
    fn dataset(&self) -> &Dataset {
        self
    }
    fn imputed_exposure(&self) -> Option<&[u8]> {
        None
    }
}

impl DesignSource for CompletedDataset<'_> {
    fn dataset(&self) -> &Dataset {
        self.base
    }
    fn imputed_exposure(&self) -> Option<&[u8]> {
        Some(&self.exposure_imputed)
    }
}

/// A resolved column accessor.
enum Column<'a> {
    Real(&'a [f64]),
    Binary(&'a [u8]),
    Observed(&'a [Option<u8>]),
}

impl Column<'_> {
    fn get(&self, i: usize) -> f64 {
        match self {
            Column::Real(v) => v[i],
            Column::Binary(v) => f64::from(v[i]),
            Column::Observed(v) => f64::from(v[i].unwrap_or(0)),
        }
    }
}

fn column<'a, S: DesignSource + ?Sized>(
    source: &'a S,
    name: &str,
    as_response: bool,
) -> Result<Column<'a>, FormulaError> {
    let ds = source.dataset();
    let role = ds
        .resolve(name)
        .ok_or_else(|| FormulaError::Unresolved(name.to_string()))?;
    Ok(match role {
        Role::Covariate(k) => Column::Real(ds.covariate(k)),
        Role::Outcome => Column::Real(ds.outcome()),
        Role::Missingness => Column::Binary(ds.missing_indicator()),
        Role::ImputedExposure => match source.imputed_exposure() {
            Some(a) => Column::Binary(a),
            None => return Err(FormulaError::Unresolved(name.to_string())),
        },
        Role::Exposure => match source.imputed_exposure() {
            Some(a) => Column::Binary(a),
            None if as_response || ds.missing_count() == 0 => Column::Observed(ds.exposure()),
            None => return Err(FormulaError::ExposureUnavailable(name.to_string())),
        },
    })
}

/// Rows a spec is fitted on: observed-exposure rows when the response is the
/// exposure of an uncompleted dataset, all rows otherwise.
pub fn eligible_rows<S: DesignSource + ?Sized>(spec: &ModelSpec, source: &S) -> Vec<usize> {
    let ds = source.dataset();
    let filter = source.imputed_exposure().is_none() && ds.resolve(&spec.response) == Some(Role::Exposure);
    if filter {
        (0..ds.n()).filter(|&i| ds.missing_indicator()[i] == 0).collect()
    } else {
        (0..ds.n()).collect()
    }
}

/// Intercept column followed by `predictors` in order, for the given rows.
pub fn predictor_matrix<S: DesignSource + ?Sized>(
    predictors: &[String],
    source: &S,
    rows: &[usize],
) -> Result<DMatrix<f64>, FormulaError> {
    let cols = predictors
        .iter()
        .map(|p| column(source, p, false))
        .collect::<Result<Vec<_>, _>>()?;
    let k = cols.len() + 1;
    Ok(DMatrix::from_fn(rows.len(), k, |r, c| {
        if c == 0 {
            1.0
        } else {
            cols[c - 1].get(rows[r])
        }
    }))
}

pub fn response_vector<S: DesignSource + ?Sized>(
    spec: &ModelSpec,
    source: &S,
    rows: &[usize],
) -> Result<DVector<f64>, FormulaError> {
    let col = column(source, &spec.response, true)?;
    Ok(DVector::from_iterator(rows.len(), rows.iter().map(|&i| col.get(i))))
}

/// Design matrix (leading intercept column) and response for `spec`.
pub fn design_matrix<S: DesignSource + ?Sized>(
    spec: &ModelSpec,
    source: &S,
) -> Result<(DMatrix<f64>, DVector<f64>), FormulaError> {
    let rows = eligible_rows(spec, source);
    design_for_rows(spec, source, &rows)
}

pub fn design_for_rows<S: DesignSource + ?Sized>(
    spec: &ModelSpec,
    source: &S,
    rows: &[usize],
) -> Result<(DMatrix<f64>, DVector<f64>), FormulaError> {
    let y = response_vector(spec, source, rows)?;
    let x = predictor_matrix(&spec.predictors, source, rows)?;
    Ok((x, y))
}
