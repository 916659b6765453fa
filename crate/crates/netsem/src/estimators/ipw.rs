//! Inverse-probability weighting with binned-hazard conditional densities.
//! The exposure density is factorized left to right over the hform
//! left-hand side; weights are the capped density ratio g*/g0 evaluated at
//! the observed exposures, and the estimate is self-normalized.

use super::density::BinnedDensityModel;
use super::{intervene, EstimationConfig};
use crate::error::{Error, Result};
use crate::simengine::Dataset;

#[derive(Debug, Clone)]
pub struct IpwResult {
    pub estimate: f64,
    pub var_iid: f64,
    pub weights: Vec<f64>,
    pub n_capped: usize,
    pub n_zero_den: usize,
}

fn conditioning_rows(ds: &Dataset, cols: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut refs = Vec::with_capacity(cols.len());
    for c in cols {
        refs.push(ds.require_column(c)?);
    }
    let mut rows = Vec::with_capacity(ds.n);
    for i in 0..ds.n {
        let row: Vec<f64> = refs.iter().map(|c| c[i]).collect();
        if row.iter().any(|v| v.is_nan()) {
            return Err(Error::numeric(format!(
                "ipw: missing conditioning value at unit {}",
                i + 1
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn ipw(ds: &Dataset, cfg: &EstimationConfig) -> Result<IpwResult> {
    let ds_star = intervene(ds, cfg)?;
    ipw_with_star(ds, &ds_star, cfg)
}

pub fn ipw_with_star(
    ds: &Dataset,
    ds_star: &Dataset,
    cfg: &EstimationConfig,
) -> Result<IpwResult> {
    let n = ds.n;
    let y = ds.require_column(&cfg.outcome)?;
    let mut ratio = vec![1.0f64; n];
    let mut zero_den = vec![false; n];

    // factorize g(A_1, ..., A_m | sW) left to right; factor j conditions on
    // the hform covariates plus the earlier exposures
    let mut cond_cols: Vec<String> = cfg.hform.rhs.clone();
    for exposure in &cfg.hform.lhs {
        let xc_obs = conditioning_rows(ds, &cond_cols)?;
        let v_obs = ds.require_column(exposure)?;
        let g0 = BinnedDensityModel::fit(v_obs, &xc_obs, cfg.max_per_bin)?;
        // numerator model: same shape, fit on the intervened data
        let xc_star = conditioning_rows(&ds_star, &cond_cols)?;
        let v_star = ds_star.require_column(exposure)?;
        let gs = BinnedDensityModel::fit(v_star, &xc_star, cfg.max_per_bin)?;
        for i in 0..n {
            let den = g0.density(v_obs[i], &xc_obs[i]);
            let num = gs.density(v_obs[i], &xc_obs[i]);
            if den <= 0.0 {
                zero_den[i] = true;
            } else {
                ratio[i] *= num / den;
            }
        }
        cond_cols.push(exposure.clone());
    }

    let mut n_capped = 0;
    let mut n_zero_den = 0;
    let weights: Vec<f64> = ratio
        .iter()
        .zip(&zero_den)
        .map(|(&r, &zd)| {
            if zd {
                n_zero_den += 1;
                cfg.weight_cap
            } else if r > cfg.weight_cap {
                n_capped += 1;
                cfg.weight_cap
            } else {
                r
            }
        })
        .collect();

    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return Err(Error::numeric("ipw: all weights are zero"));
    }
    let estimate = weights.iter().zip(y).map(|(w, yi)| w * yi).sum::<f64>() / wsum;
    let wbar = wsum / n as f64;
    let var_iid = weights
        .iter()
        .zip(y)
        .map(|(w, yi)| (w * (yi - estimate) / wbar).powi(2))
        .sum::<f64>()
        / (n * n) as f64;
    Ok(IpwResult {
        estimate,
        var_iid,
        weights,
        n_capped,
        n_zero_den,
    })
}
