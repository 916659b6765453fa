//! Replicated estimation experiments: simulate many observed replicates,
//! run each estimator with IID and bootstrap variances, and aggregate
//! bias / MSE / variance / CI coverage against the Monte Carlo truth.

use super::bootstrap::{bootstrap_variance, Estimator};
use super::gcomp::gcomp;
use super::ipw::ipw;
use super::{build_summaries, EstimationConfig};
use crate::causaltarget::mc_target_mean;
use crate::error::{Error, Result};
use crate::semodel::DagModel;
use crate::simengine::{simulate, RngFactory};
use rayon::prelude::*;

const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Label written into the scenario column of the metrics rows.
    pub scenario: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// Model action defining the truth psi0.
    pub truth_action: String,
    pub truth_reps: usize,
    pub estimators: Vec<Estimator>,
}

#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub scenario: String,
    pub estimator: String,
    pub psi0: f64,
    pub mean_est: f64,
    pub bias: f64,
    pub mse: f64,
    pub variance: f64,
    pub cover_iid: f64,
    pub cover_boot: f64,
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<MetricsRow>,
    pub failed_replicates: usize,
}

pub const METRICS_HEADER: &str =
    "scenario,estimator,psi0,mean_est,bias,mse,variance,cover_iid,cover_boot,reps,n,seed";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{},{},{}\n",
            r.scenario,
            r.estimator,
            r.psi0,
            r.mean_est,
            r.bias,
            r.mse,
            r.variance,
            r.cover_iid,
            r.cover_boot,
            r.reps,
            r.n,
            r.seed
        ));
    }
    out
}

struct ReplicateEstimates {
    /// (estimate, var_iid, var_boot) per configured estimator.
    per_estimator: Vec<(f64, f64, f64)>,
}

fn one_replicate(
    model: &DagModel,
    cfg: &EstimationConfig,
    exp: &ExperimentConfig,
    r: usize,
) -> Result<ReplicateEstimates> {
    let mut ds = simulate(model, None, exp.n, exp.seed, "exp", r)?;
    build_summaries(&mut ds, &cfg.summaries)?;
    let factory = RngFactory::new(exp.seed);
    let mut per_estimator = Vec::with_capacity(exp.estimators.len());
    for est in &exp.estimators {
        let (estimate, var_iid) = match est {
            Estimator::Gcomp => {
                let g = gcomp(&ds, cfg)?;
                (g.estimate, g.var_iid)
            }
            Estimator::Ipw => {
                let i = ipw(&ds, cfg)?;
                (i.estimate, i.var_iid)
            }
        };
        let var_boot = if cfg.n_bootstrap >= 2 {
            bootstrap_variance(
                &ds,
                cfg,
                *est,
                cfg.n_bootstrap,
                &factory,
                &format!("exp/{r}/{}", est.name()),
            )?
        } else {
            f64::NAN
        };
        per_estimator.push((estimate, var_iid, var_boot));
    }
    Ok(ReplicateEstimates { per_estimator })
}

/// Run the full experiment: truth by Monte Carlo, then `reps` observed
/// replicates through every estimator. Replicates whose estimation fails
/// (e.g. degenerate fits) are counted and skipped.
pub fn run_experiment(
    model: &DagModel,
    cfg: &EstimationConfig,
    exp: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    if exp.reps == 0 {
        return Err(Error::parameter("experiment: reps must be >= 1"));
    }
    if exp.estimators.is_empty() {
        return Err(Error::parameter("experiment: no estimators configured"));
    }
    let psi0 = mc_target_mean(
        model,
        Some(&exp.truth_action),
        &cfg.outcome,
        exp.n,
        exp.truth_reps,
        exp.seed,
    )?
    .psi;

    let results: Vec<Result<ReplicateEstimates>> = (0..exp.reps)
        .into_par_iter()
        .map(|r| one_replicate(model, cfg, exp, r))
        .collect();
    let mut ok = Vec::new();
    let mut failed = 0usize;
    let mut last_err = None;
    for res in results {
        match res {
            Ok(v) => ok.push(v),
            Err(e) => {
                failed += 1;
                last_err = Some(e);
            }
        }
    }
    if ok.len() < exp.reps.div_ceil(2) {
        return Err(Error::numeric(format!(
            "experiment: {failed}/{} replicates failed (last error: {})",
            exp.reps,
            last_err.map_or_else(|| "none".into(), |e| e.to_string())
        )));
    }

    let mut rows = Vec::with_capacity(exp.estimators.len());
    for (e_idx, est) in exp.estimators.iter().enumerate() {
        let ests: Vec<f64> = ok.iter().map(|r| r.per_estimator[e_idx].0).collect();
        let viids: Vec<f64> = ok.iter().map(|r| r.per_estimator[e_idx].1).collect();
        let vboots: Vec<f64> = ok.iter().map(|r| r.per_estimator[e_idx].2).collect();
        let m = ests.len() as f64;
        let mean_est = ests.iter().sum::<f64>() / m;
        let bias = mean_est - psi0;
        let mse = ests.iter().map(|e| (e - psi0).powi(2)).sum::<f64>() / m;
        let variance = if ests.len() > 1 {
            ests.iter().map(|e| (e - mean_est).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        let covered = |vars: &[f64]| -> f64 {
            let hits = ests
                .iter()
                .zip(vars)
                .filter(|(e, v)| (*e - psi0).abs() <= Z_95 * v.sqrt())
                .count();
            hits as f64 / m
        };
        let cover_iid = covered(&viids);
        let cover_boot = if vboots.iter().all(|v| v.is_nan()) {
            f64::NAN
        } else {
            covered(&vboots)
        };
        rows.push(MetricsRow {
            scenario: exp.scenario.clone(),
            estimator: est.name().to_string(),
            psi0,
            mean_est,
            bias,
            mse,
            variance,
            cover_iid,
            cover_boot,
            reps: ests.len(),
            n: exp.n,
            seed: exp.seed,
        });
    }
    Ok(ExperimentOutcome {
        rows,
        failed_replicates: failed,
    })
}

/// Coefficient grid for a sweep: `points` vectors interpolating linearly
/// from `start` to `end` (inclusive).
pub fn sweep_grid(start: &[f64], end: &[f64], points: usize) -> Result<Vec<Vec<f64>>> {
    if start.len() != end.len() || start.is_empty() {
        return Err(Error::parameter(
            "sweep: start and end must have the same nonzero length",
        ));
    }
    if points < 2 {
        return Err(Error::parameter("sweep: need at least 2 scenarios"));
    }
    Ok((0..points)
        .map(|s| {
            let t = s as f64 / (points - 1) as f64;
            start
                .iter()
                .zip(end)
                .map(|(a, b)| a + t * (b - a))
                .collect()
        })
        .collect())
}

/// Substitute `{c1}..{ck}` placeholders in a formula template.
pub fn fill_template(template: &str, coefs: &[f64]) -> Result<String> {
    let mut out = template.to_string();
    for (j, c) in coefs.iter().enumerate() {
        let key = format!("{{c{}}}", j + 1);
        if !out.contains(&key) {
            return Err(Error::validation(format!(
                "sweep template is missing placeholder {key}"
            )));
        }
        out = out.replace(&key, &format!("({c})"));
    }
    if out.contains('{') {
        return Err(Error::validation(format!(
            "sweep template has unfilled placeholders: {out}"
        )));
    }
    Ok(out)
}

/// Run one experiment per interpolated coefficient vector. `build` maps a
/// coefficient vector to a finalized model; scenario rows are labeled
/// `s1..sK` (appended to any base label).
pub fn scenario_sweep<F>(
    build: F,
    cfg: &EstimationConfig,
    exp_base: &ExperimentConfig,
    start: &[f64],
    end: &[f64],
    points: usize,
) -> Result<ExperimentOutcome>
where
    F: Fn(&[f64]) -> Result<DagModel>,
{
    let grid = sweep_grid(start, end, points)?;
    let mut rows = Vec::new();
    let mut failed = 0usize;
    for (s, coefs) in grid.iter().enumerate() {
        let model = build(coefs)?;
        let mut exp = exp_base.clone();
        exp.scenario = if exp_base.scenario.is_empty() {
            format!("s{}", s + 1)
        } else {
            format!("{}_s{}", exp_base.scenario, s + 1)
        };
        let out = run_experiment(&model, cfg, &exp)?;
        rows.extend(out.rows);
        failed += out.failed_replicates;
    }
    Ok(ExperimentOutcome {
        rows,
        failed_replicates: failed,
    })
}
