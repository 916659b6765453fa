//! Derived summary columns (own plus network-aggregated covariates) computed
//! from formulas, e.g. `sumW2 = sum(W2[[1:Kmax]])`.

use super::{eval_column, set_column};
use crate::error::{Error, Result};
use crate::exprlang::Expr;
use crate::simengine::Dataset;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct SummaryDef {
    pub name: String,
    pub expr: Expr,
    pub replace_na_w0: bool,
}

impl SummaryDef {
    pub fn new(name: &str, expr: Expr) -> SummaryDef {
        SummaryDef {
            name: name.to_string(),
            expr,
            replace_na_w0: false,
        }
    }

    pub fn with_replace_na_w0(mut self) -> SummaryDef {
        self.replace_na_w0 = true;
        self
    }
}

/// Check summary names against the raw columns of a dataset; summaries may
/// not shadow them.
pub fn check_no_collision(raw_names: &[String], defs: &[SummaryDef]) -> Result<()> {
    let mut seen = BTreeMap::new();
    for def in defs {
        if raw_names.contains(&def.name) {
            return Err(Error::validation(format!(
                "summary {:?} collides with an existing column",
                def.name
            )));
        }
        if seen.insert(def.name.clone(), ()).is_some() {
            return Err(Error::validation(format!(
                "duplicate summary name {:?}",
                def.name
            )));
        }
    }
    Ok(())
}

/// Evaluate each definition in order and insert (or refresh) its column.
/// Later definitions may reference earlier ones.
pub fn build_summaries(ds: &mut Dataset, defs: &[SummaryDef]) -> Result<()> {
    let scalars = BTreeMap::new();
    for def in defs {
        let col = eval_column(ds, &def.expr, &scalars, def.replace_na_w0)
            .map_err(|e| Error::eval(format!("summary {:?}: {e}", def.name)))?;
        set_column(ds, &def.name, col);
    }
    Ok(())
}
