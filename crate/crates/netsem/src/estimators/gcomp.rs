//! G-computation: fit the outcome regression, predict under the intervened
//! exposures, average the predictions. The IID variance comes from the
//! influence curve of the plug-in, including the fit's contribution.

use super::logistic::{fit_logistic, LogisticFit};
use super::{design_matrix, intervene, outcome_vector, EstimationConfig};
use crate::error::{Error, Result};
use crate::simengine::Dataset;
use nalgebra::DVector;

#[derive(Debug, Clone)]
pub struct GcompResult {
    pub estimate: f64,
    pub var_iid: f64,
    pub fit: LogisticFit,
    /// Fitted probabilities on the observed design.
    pub q_obs: DVector<f64>,
}

/// Run G-computation on one replicate. `ds` must already carry its summary
/// columns; the intervened copy is derived internally.
pub fn gcomp(ds: &Dataset, cfg: &EstimationConfig) -> Result<GcompResult> {
    let ds_star = intervene(ds, cfg)?;
    gcomp_with_star(ds, &ds_star, cfg)
}

pub fn gcomp_with_star(
    ds: &Dataset,
    ds_star: &Dataset,
    cfg: &EstimationConfig,
) -> Result<GcompResult> {
    if cfg.qform.lhs.len() != 1 || cfg.qform.lhs[0] != cfg.outcome {
        return Err(Error::validation(format!(
            "qform must regress the outcome {:?}",
            cfg.outcome
        )));
    }
    let n = ds.n;
    let x = design_matrix(ds, &cfg.qform.rhs)?;
    let y = outcome_vector(ds, &cfg.outcome)?;
    let fit = fit_logistic(&x, &y)?;
    let x_star = design_matrix(ds_star, &cfg.qform.rhs)?;
    let q_star = fit.predict(&x_star);
    let q_obs = fit.predict(&x);
    let estimate = q_star.mean();

    // influence curve: (q*_i - psi) + x_i' I^{-1} c (y_i - q_i),
    // c = mean_i q*_i (1 - q*_i) x*_i, I = (1/n) X' diag(q(1-q)) X
    let p = x.ncols();
    let mut c = DVector::zeros(p);
    for i in 0..n {
        let s = q_star[i] * (1.0 - q_star[i]);
        for j in 0..p {
            c[j] += s * x_star[(i, j)];
        }
    }
    c /= n as f64;
    let mut xw = x.clone();
    for i in 0..n {
        let s = q_obs[i] * (1.0 - q_obs[i]);
        for j in 0..p {
            xw[(i, j)] *= s;
        }
    }
    let info = x.transpose() * xw / n as f64;
    let a = info
        .lu()
        .solve(&c)
        .ok_or_else(|| Error::numeric("gcomp variance: singular information matrix"))?;
    let mut var_iid = 0.0;
    for i in 0..n {
        let proj: f64 = (0..p).map(|j| x[(i, j)] * a[j]).sum();
        let d = (q_star[i] - estimate) + proj * (y[i] - q_obs[i]);
        var_iid += d * d;
    }
    var_iid /= (n * n) as f64;
    Ok(GcompResult {
        estimate,
        var_iid,
        fit,
        q_obs,
    })
}
