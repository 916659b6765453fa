//! Logistic regression by iteratively reweighted least squares.

use super::plogis;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const MAX_ITER: usize = 100;
const SCORE_TOL: f64 = 1e-8;
/// |beta| beyond this is flagged as (quasi-)separation.
const SEPARATION_BOUND: f64 = 15.0;

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub beta: DVector<f64>,
    pub converged: bool,
    pub separation: bool,
}

impl LogisticFit {
    /// Fitted probabilities for a design matrix.
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        (x * &self.beta).map(plogis)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        plogis(row.iter().zip(self.beta.iter()).map(|(a, b)| a * b).sum())
    }
}

/// Fit P(y=1|x) = plogis(x'beta) by Newton steps on the score. A singular
/// information matrix gets a tiny ridge before giving up.
pub fn fit_logistic(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LogisticFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::parameter(format!(
            "logistic fit: {n} design rows but {} responses",
            y.len()
        )));
    }
    if n < p {
        return Err(Error::numeric(format!(
            "logistic fit: {n} rows for {p} coefficients"
        )));
    }
    let mut beta = DVector::zeros(p);
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let mu = (x * &beta).map(plogis);
        let score = x.transpose() * (y - &mu);
        if score.amax() < SCORE_TOL {
            converged = true;
            break;
        }
        let wd = mu.map(|m| (m * (1.0 - m)).max(1e-10));
        let mut xw = x.clone();
        for i in 0..n {
            for j in 0..p {
                xw[(i, j)] *= wd[i];
            }
        }
        let mut h = x.transpose() * xw;
        let step = match h.clone().lu().solve(&score) {
            Some(s) => s,
            None => {
                for j in 0..p {
                    h[(j, j)] += 1e-8;
                }
                h.lu().solve(&score).ok_or_else(|| {
                    Error::numeric("logistic fit: singular information matrix")
                })?
            }
        };
        beta += step;
        if !beta.iter().all(|b| b.is_finite()) {
            return Err(Error::numeric("logistic fit: coefficients diverged"));
        }
    }
    let separation = beta.amax() > SEPARATION_BOUND;
    Ok(LogisticFit {
        beta,
        converged,
        separation,
    })
}
