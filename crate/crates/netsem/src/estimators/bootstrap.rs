//! Parametric bootstrap for replicate-level variance. The network is held
//! fixed; baseline covariate rows are resampled from their empirical
//! distribution, exposures are redrawn from a fitted Gaussian linear model,
//! summaries are rebuilt through the network, outcomes are drawn from the
//! fitted outcome regression, and the estimator is re-run from scratch.

use super::gcomp::gcomp;
use super::ipw::ipw;
use super::logistic::fit_logistic;
use super::{build_summaries, design_matrix, outcome_vector, set_column, EstimationConfig};
use crate::error::{Error, Result};
use crate::semodel::draw_normal;
use crate::simengine::{Dataset, RngFactory};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Gcomp,
    Ipw,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Gcomp => "gcomp",
            Estimator::Ipw => "ipw",
        }
    }
}

struct OlsFit {
    beta: DVector<f64>,
    sigma: f64,
}

fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = x.shape();
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let beta = xtx
        .lu()
        .solve(&xty)
        .ok_or_else(|| Error::numeric("bootstrap: singular exposure design"))?;
    let resid = y - x * &beta;
    let dof = n.saturating_sub(p).max(1);
    let sigma = (resid.norm_squared() / dof as f64).sqrt();
    Ok(OlsFit { beta, sigma })
}

/// Variance of `estimator` under the fitted data-generating mechanism,
/// from `b` bootstrap replicates keyed by `namespace` substreams.
pub fn bootstrap_variance(
    ds: &Dataset,
    cfg: &EstimationConfig,
    estimator: Estimator,
    b: usize,
    factory: &RngFactory,
    namespace: &str,
) -> Result<f64> {
    if b < 2 {
        return Err(Error::parameter("bootstrap: need at least 2 replicates"));
    }
    let n = ds.n;

    // fitted mechanism on the original replicate
    let x_q = design_matrix(ds, &cfg.qform.rhs)?;
    let y = outcome_vector(ds, &cfg.outcome)?;
    let q_fit = fit_logistic(&x_q, &y)?;
    let x_h = design_matrix(ds, &cfg.hform.rhs)?;
    let mut exposure_fits = Vec::with_capacity(cfg.exposures.len());
    for name in &cfg.exposures {
        let v = DVector::from_column_slice(ds.require_column(name)?);
        exposure_fits.push(fit_ols(&x_h, &v)?);
    }
    let baseline_cols: Vec<&[f64]> = cfg
        .baseline
        .iter()
        .map(|name| ds.require_column(name))
        .collect::<Result<_>>()?;

    let mut estimates = Vec::with_capacity(b);
    for rep in 0..b {
        let mut rng = factory.substream(&format!("{namespace}/boot/{rep}"));
        let mut bd = ds.clone();

        // resample baseline rows iid and rebuild their summaries
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        for (name, col) in cfg.baseline.iter().zip(&baseline_cols) {
            let resampled: Vec<f64> = idx.iter().map(|&j| col[j]).collect();
            set_column(&mut bd, name, resampled);
        }
        build_summaries(&mut bd, &cfg.summaries)?;

        // redraw exposures from the fitted linear model, then rebuild the
        // exposure summaries
        let x_hb = design_matrix(&bd, &cfg.hform.rhs)?;
        for (name, fit) in cfg.exposures.iter().zip(&exposure_fits) {
            let mean = &x_hb * &fit.beta;
            let drawn: Vec<f64> = (0..n)
                .map(|i| mean[i] + fit.sigma * draw_normal(&mut rng))
                .collect();
            set_column(&mut bd, name, drawn);
        }
        build_summaries(&mut bd, &cfg.summaries)?;

        // outcomes from the fitted outcome regression
        let x_qb = design_matrix(&bd, &cfg.qform.rhs)?;
        let qb = q_fit.predict(&x_qb);
        let yb: Vec<f64> = (0..n)
            .map(|i| if rng.gen::<f64>() < qb[i] { 1.0 } else { 0.0 })
            .collect();
        set_column(&mut bd, &cfg.outcome, yb);

        let est = match estimator {
            Estimator::Gcomp => gcomp(&bd, cfg)?.estimate,
            Estimator::Ipw => ipw(&bd, cfg)?.estimate,
        };
        estimates.push(est);
    }
    let mean = estimates.iter().sum::<f64>() / b as f64;
    Ok(estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (b - 1) as f64)
}
