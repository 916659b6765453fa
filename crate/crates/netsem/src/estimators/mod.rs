//! Estimators of the mean counterfactual outcome from a single observed
//! replicate: G-computation and IPW with binned-hazard conditional densities,
//! plus a parametric bootstrap for replicate-level variance.

pub mod bootstrap;
pub mod density;
pub mod experiment;
pub mod gcomp;
pub mod ipw;
pub mod logistic;
pub mod summaries;

pub use summaries::{build_summaries, SummaryDef};

use crate::error::{Error, Result};
use crate::exprlang::{evaluate, parse, EvalContext, Expr};
use crate::simengine::Dataset;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// A fitted-regression shape: `lhs ~ rhs1 + rhs2 + ...`. Multiple
/// left-hand-side variables (for the exposure density factorization) are
/// written `A + sumA ~ ...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegressionSpec {
    pub lhs: Vec<String>,
    pub rhs: Vec<String>,
}

impl RegressionSpec {
    pub fn parse(src: &str) -> Result<RegressionSpec> {
        let mut sides = src.split('~');
        let (lhs, rhs) = match (sides.next(), sides.next(), sides.next()) {
            (Some(l), Some(r), None) => (l, r),
            _ => {
                return Err(Error::validation(format!(
                    "formula {src:?} must contain exactly one '~'"
                )))
            }
        };
        let split = |side: &str| -> Result<Vec<String>> {
            let names: Vec<String> = side
                .split('+')
                .map(|t| t.trim().to_string())
                .filter(|t| !t.is_empty())
                .collect();
            for name in &names {
                if !name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
                {
                    return Err(Error::validation(format!(
                        "formula {src:?}: bad term {name:?}"
                    )));
                }
            }
            if names.is_empty() {
                return Err(Error::validation(format!(
                    "formula {src:?} has an empty side"
                )));
            }
            Ok(names)
        };
        Ok(RegressionSpec {
            lhs: split(lhs)?,
            rhs: split(rhs)?,
        })
    }
}

/// Exposure intervention applied inside estimators: each raw exposure is
/// remapped by a formula evaluated against the observed columns, with scalar
/// parameters (e.g. shift, trunc) in scope.
#[derive(Debug, Clone)]
pub struct InterventionDef {
    pub exposures: Vec<(String, Expr)>,
    pub params: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct EstimationConfig {
    pub outcome: String,
    /// Outcome regression, e.g. `Y ~ A + sumA + meanW1 + ...`.
    pub qform: RegressionSpec,
    /// Exposure density factorization, e.g. `A + sumA ~ meanW1 + ...`.
    pub hform: RegressionSpec,
    /// Derived network summaries, rebuilt after intervening exposures.
    pub summaries: Vec<SummaryDef>,
    pub intervention: InterventionDef,
    /// Raw baseline covariate columns (resampled by the bootstrap).
    pub baseline: Vec<String>,
    /// Raw exposure columns (redrawn by the bootstrap).
    pub exposures: Vec<String>,
    pub max_per_bin: usize,
    pub weight_cap: f64,
    pub n_bootstrap: usize,
}

pub const DEFAULT_MAX_PER_BIN: usize = 50;
pub const DEFAULT_WEIGHT_CAP: f64 = 50.0;

/// One estimator's output on one replicate.
#[derive(Debug, Clone, Copy)]
pub struct EstimateReport {
    pub estimate: f64,
    pub var_iid: f64,
    pub var_boot: Option<f64>,
}

pub fn plogis(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-500.0, 500.0)).exp())
}

/// Evaluate a formula against a dataset's columns, yielding one column.
pub fn eval_column(
    ds: &Dataset,
    expr: &Expr,
    scalars: &BTreeMap<String, f64>,
    replace_na_w0: bool,
) -> Result<Vec<f64>> {
    let mut ctx = EvalContext::new(ds.n);
    for (name, col) in ds.names.iter().zip(&ds.cols) {
        ctx.columns.insert(name.clone(), col.as_slice());
    }
    ctx.scalars = scalars.clone();
    ctx.net = ds.network.as_ref();
    ctx.replace_na_w0 = replace_na_w0;
    evaluate(expr, &ctx)?.into_column(ds.n)
}

/// Insert or overwrite a named column.
pub fn set_column(ds: &mut Dataset, name: &str, col: Vec<f64>) {
    match ds.names.iter().position(|s| s == name) {
        Some(i) => ds.cols[i] = col,
        None => {
            ds.names.push(name.to_string());
            ds.cols.push(col);
        }
    }
}

/// Design matrix [1 | cols...] for the named columns.
pub fn design_matrix(ds: &Dataset, cols: &[String]) -> Result<DMatrix<f64>> {
    let n = ds.n;
    let mut x = DMatrix::zeros(n, cols.len() + 1);
    for i in 0..n {
        x[(i, 0)] = 1.0;
    }
    for (j, name) in cols.iter().enumerate() {
        let col = ds.require_column(name)?;
        for i in 0..n {
            let v = col[i];
            if v.is_nan() {
                return Err(Error::numeric(format!(
                    "design column {name:?} has a missing value at unit {}",
                    i + 1
                )));
            }
            x[(i, j + 1)] = v;
        }
    }
    Ok(x)
}

pub fn outcome_vector(ds: &Dataset, name: &str) -> Result<DVector<f64>> {
    let col = ds.require_column(name)?;
    if let Some(i) = col.iter().position(|v| v.is_nan()) {
        return Err(Error::numeric(format!(
            "outcome {name:?} has a missing value at unit {}",
            i + 1
        )));
    }
    Ok(DVector::from_column_slice(col))
}

/// Apply the configured intervention: evaluate every exposure formula against
/// the original columns, substitute, then re-derive all summaries.
pub fn intervene(ds: &Dataset, cfg: &EstimationConfig) -> Result<Dataset> {
    let scalars: BTreeMap<String, f64> = cfg.intervention.params.iter().cloned().collect();
    let mut new_cols = Vec::with_capacity(cfg.intervention.exposures.len());
    for (name, expr) in &cfg.intervention.exposures {
        new_cols.push((name.clone(), eval_column(ds, expr, &scalars, false)?));
    }
    let mut out = ds.clone();
    for (name, col) in new_cols {
        set_column(&mut out, &name, col);
    }
    build_summaries(&mut out, &cfg.summaries)?;
    Ok(out)
}

/// Convenience: parse a formula string into an expression (used for summary
/// and intervention definitions loaded from scenario files).
pub fn parse_expr(src: &str) -> Result<Expr> {
    parse(src)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_spec_parses() {
        let q = RegressionSpec::parse("Y ~ A + sumA + meanW1").unwrap();
        assert_eq!(q.lhs, vec!["Y"]);
        assert_eq!(q.rhs, vec!["A", "sumA", "meanW1"]);
        let h = RegressionSpec::parse("A + sumA ~ W1 + W2").unwrap();
        assert_eq!(h.lhs, vec!["A", "sumA"]);
        assert!(RegressionSpec::parse("Y ~ ").is_err());
        assert!(RegressionSpec::parse("Y").is_err());
        assert!(RegressionSpec::parse("Y ~ A ~ B").is_err());
        assert!(RegressionSpec::parse("Y ~ A*B").is_err());
    }
}
