//! Conditional density of a continuous variable by discretization: equal-mass
//! bins, then a pooled hazard-style logistic regression of bin membership on
//! bin indicators plus the conditioning covariates.

use super::logistic::{fit_logistic, LogisticFit};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Equal-mass cut points: empirical quantiles at nb+1 evenly spaced levels
/// (linear interpolation), deduplicated.
fn quantile_cuts(v: &[f64], nb: usize) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    let mut cuts = Vec::with_capacity(nb + 1);
    for k in 0..=nb {
        let h = (n - 1) as f64 * k as f64 / nb as f64;
        let lo = h.floor() as usize;
        let q = if lo + 1 < n {
            s[lo] + (h - lo as f64) * (s[lo + 1] - s[lo])
        } else {
            s[n - 1]
        };
        cuts.push(q);
    }
    cuts.dedup();
    cuts
}

fn bin_of(cuts: &[f64], v: f64) -> usize {
    let nb = cuts.len() - 1;
    // searchsorted right, then clamp into [0, nb-1]
    let pos = cuts.partition_point(|c| *c <= v);
    pos.saturating_sub(1).min(nb - 1)
}

#[derive(Debug, Clone)]
pub struct BinnedDensityModel {
    cuts: Vec<f64>,
    nb: usize,
    ncol_k: usize,
    fit: LogisticFit,
}

impl BinnedDensityModel {
    /// Fit the density of `v` given conditioning rows `xcond` (one slice per
    /// unit, no intercept). Bin count is ceil(n / max_per_bin).
    pub fn fit(v: &[f64], xcond: &[Vec<f64>], max_per_bin: usize) -> Result<BinnedDensityModel> {
        let n = v.len();
        if n == 0 {
            return Err(Error::parameter("density fit: empty sample"));
        }
        if xcond.len() != n {
            return Err(Error::parameter(format!(
                "density fit: {n} values but {} conditioning rows",
                xcond.len()
            )));
        }
        if max_per_bin == 0 {
            return Err(Error::parameter("density fit: max_per_bin must be >= 1"));
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::numeric(format!(
                "density fit: non-finite value at unit {}",
                i + 1
            )));
        }
        let nb_req = n.div_ceil(max_per_bin);
        let cuts = quantile_cuts(v, nb_req.max(1));
        let nb = cuts.len() - 1;
        if nb == 0 {
            return Err(Error::numeric("density fit: degenerate sample (one point)"));
        }
        let ncol_k = nb.saturating_sub(2);
        let pcond = xcond[0].len();

        // expanded hazard rows: unit i contributes rows k = 0..min(b_i, nb-2),
        // response 1{k == b_i}; hazard at the last bin is implicit
        let mut rows_x: Vec<f64> = Vec::new();
        let mut rows_y: Vec<f64> = Vec::new();
        let mut n_rows = 0usize;
        for i in 0..n {
            let b = bin_of(&cuts, v[i]);
            let top = b.min(nb.saturating_sub(2));
            for k in 0..=top {
                rows_x.push(1.0);
                for d in 0..ncol_k {
                    rows_x.push(if k > 0 && d == k - 1 { 1.0 } else { 0.0 });
                }
                rows_x.extend_from_slice(&xcond[i]);
                rows_y.push(if k == b { 1.0 } else { 0.0 });
                n_rows += 1;
            }
        }
        let x = DMatrix::from_row_slice(n_rows, 1 + ncol_k + pcond, &rows_x);
        let y = DVector::from_vec(rows_y);
        let fit = fit_logistic(&x, &y)?;
        Ok(BinnedDensityModel {
            cuts,
            nb,
            ncol_k,
            fit,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.nb
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    fn hazard(&self, k: usize, xc: &[f64]) -> f64 {
        let mut row = Vec::with_capacity(1 + self.ncol_k + xc.len());
        row.push(1.0);
        for d in 0..self.ncol_k {
            row.push(if k > 0 && d == k - 1 { 1.0 } else { 0.0 });
        }
        row.extend_from_slice(xc);
        self.fit.predict_row(&row)
    }

    /// Estimated conditional density at `v`; zero outside the fitted range.
    pub fn density(&self, v: f64, xc: &[f64]) -> f64 {
        if v < self.cuts[0] || v > self.cuts[self.nb] {
            return 0.0;
        }
        let j = bin_of(&self.cuts, v);
        let mut prob = 1.0;
        for k in 0..j.min(self.nb - 1) {
            prob *= 1.0 - self.hazard(k, xc);
        }
        if j < self.nb - 1 {
            prob *= self.hazard(j, xc);
        }
        let width = self.cuts[j + 1] - self.cuts[j];
        prob / width
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semodel::draw_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn quantile_cuts_basic() {
        let v: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let cuts = quantile_cuts(&v, 4);
        assert_eq!(cuts, vec![0.0, 25.0, 50.0, 75.0, 100.0]);
    }

    #[test]
    fn bin_count_tracks_sample_size() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..500).map(|_| draw_normal(&mut rng)).collect();
        let xc = vec![vec![]; 500];
        let m = BinnedDensityModel::fit(&v, &xc, 50).unwrap();
        assert_eq!(m.n_bins(), 10);
    }

    #[test]
    fn density_integrates_to_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..1000).map(|_| draw_normal(&mut rng)).collect();
        let xc = vec![vec![]; 1000];
        let m = BinnedDensityModel::fit(&v, &xc, 50).unwrap();
        // Riemann sum over the support
        let (lo, hi) = (m.cuts()[0], *m.cuts().last().unwrap());
        let steps = 20_000;
        let dx = (hi - lo) / steps as f64;
        let total: f64 = (0..steps)
            .map(|i| m.density(lo + (i as f64 + 0.5) * dx, &[]) * dx)
            .sum();
        assert!((total - 1.0).abs() < 0.02, "integral {total}");
    }

    #[test]
    fn unconditional_density_tracks_normal() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..5000).map(|_| draw_normal(&mut rng)).collect();
        let xc = vec![vec![]; 5000];
        let m = BinnedDensityModel::fit(&v, &xc, 50).unwrap();
        let phi = |x: f64| (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        for x in [-1.0, -0.3, 0.0, 0.4, 1.2] {
            let d = m.density(x, &[]);
            assert!((d - phi(x)).abs() < 0.06, "density({x}) = {d} vs {}", phi(x));
        }
        assert_eq!(m.density(1e6, &[]), 0.0);
    }

    #[test]
    fn conditional_shift_is_detected() {
        // v | z ~ N(2z, 1) with z in {0, 1}
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let n = 4000;
        let mut v = Vec::with_capacity(n);
        let mut xc = Vec::with_capacity(n);
        for i in 0..n {
            let z = (i % 2) as f64;
            v.push(2.0 * z + draw_normal(&mut rng));
            xc.push(vec![z]);
        }
        let m = BinnedDensityModel::fit(&v, &xc, 50).unwrap();
        assert!(m.density(0.0, &[0.0]) > 2.0 * m.density(0.0, &[1.0]));
        assert!(m.density(2.0, &[1.0]) > 2.0 * m.density(2.0, &[0.0]));
    }
}
