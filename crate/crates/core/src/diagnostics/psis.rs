//! Pareto-smoothed importance sampling leave-one-out cross-validation.

use serde::{Deserialize, Serialize};

use crate::draws::DrawMatrix;
use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::model::{log_marginal_patient, Dataset, ParamLayout};

/// Draws × patients matrix of marginal log-likelihoods, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LoglikMatrix {
    pub draws: usize,
    pub patients: usize,
    pub values: Vec<f64>,
}

impl LoglikMatrix {
    pub fn get(&self, s: usize, i: usize) -> f64 {
        self.values[s * self.patients + i]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.patients..(s + 1) * self.patients]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.draws).map(|s| self.get(s, i)).collect()
    }
}

/// Entry `(s, i)` is `ln p(record_i | θ_s)` with the latent class summed out.
/// The draws must carry the `η` columns.
pub fn pointwise_loglik(draws: &DrawMatrix, layout: &ParamLayout, data: &Dataset) -> Result<LoglikMatrix> {
    if !layout.include_eta || layout.shape != data.shape || layout.n_patients != data.len() {
        return Err(Error::Shape(
            "pointwise log-likelihood needs draws with eta columns for every patient".into(),
        ));
    }
    if draws.names != layout.names() {
        return Err(Error::Shape("draw columns do not match the parameter layout".into()));
    }
    let n = data.len();
    let mut values = Vec::with_capacity(draws.nrows() * n);
    for s in 0..draws.nrows() {
        let params = layout.unflatten(draws.row(s))?;
        for (i, rec) in data.records.iter().enumerate() {
            values.push(log_marginal_patient(rec, &params, i)?);
        }
    }
    Ok(LoglikMatrix {
        draws: draws.nrows(),
        patients: n,
        values,
    })
}

/// Generalized Pareto fit `(k, σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub k: f64,
    pub sigma: f64,
}

/// Profile log-likelihood per observation of the reparameterized GPD at `θ`.
fn profile_lx(theta: f64, x: &[f64]) -> f64 {
    let k = x.iter().map(|&v| (-theta * v).ln_1p()).sum::<f64>() / x.len() as f64;
    (-theta / k).ln() - k - 1.0
}

/// Fits a generalized Pareto distribution to positive exceedances with the
/// Zhang–Stephens posterior-mean estimator, followed by the weakly
/// informative shrinkage of `k` towards 0.5 used in PSIS.
pub fn gpd_fit_tail(tail: &[f64]) -> Result<GpdFit> {
    let n = tail.len();
    if n < 5 {
        return Err(Error::Diagnostic(format!("GPD fit needs at least 5 tail samples, got {n}")));
    }
    if tail.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Diagnostic("GPD tail samples must be positive and finite".into()));
    }
    let mut x = tail.to_vec();
    x.sort_by(f64::total_cmp);
    let prior = 3.0;
    let m = 30 + (n as f64).sqrt().floor() as usize;
    let xstar = x[((n as f64) / 4.0 + 0.5).floor() as usize - 1];
    let thetas: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x[n - 1] + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / xstar)
        .collect();
    let l_theta: Vec<f64> = thetas.iter().map(|&t| n as f64 * profile_lx(t, &x)).collect();
    let lse = log_sum_exp(&l_theta);
    let theta_hat: f64 = thetas
        .iter()
        .zip(&l_theta)
        .map(|(t, l)| t * (l - lse).exp())
        .sum();
    let k = x.iter().map(|&v| (-theta_hat * v).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let k = (k * n as f64 + 0.5 * 10.0) / (n as f64 + 10.0);
    if !k.is_finite() || !sigma.is_finite() {
        return Err(Error::Diagnostic("GPD fit did not converge".into()));
    }
    Ok(GpdFit { k, sigma })
}

/// GPD quantile function.
pub fn gpd_quantile(p: f64, fit: GpdFit) -> f64 {
    if fit.k.abs() < 1e-12 {
        -fit.sigma * (-p).ln_1p()
    } else {
        fit.sigma * ((-fit.k * (-p).ln_1p()).exp_m1()) / fit.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KCategory {
    Good,
    Ok,
    Bad,
}

impl KCategory {
    /// `k < 0.5` good, `0.5 ≤ k ≤ 1` ok, `k > 1` bad; no estimate is bad.
    pub fn classify(k: Option<f64>) -> Self {
        match k {
            Some(k) if k < 0.5 => KCategory::Good,
            Some(k) if k <= 1.0 => KCategory::Ok,
            _ => KCategory::Bad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoDiag {
    /// Pareto shape estimate; `None` when the tail could not be fitted.
    pub k: Option<f64>,
    pub category: KCategory,
    /// This observation's contribution to `elpd_loo`.
    pub elpd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsisLoo {
    pub elpd_loo: f64,
    pub se_elpd_loo: f64,
    /// In-sample `Σ_i ln mean_s p(y_i | θ_s)`.
    pub lppd: f64,
    pub p_loo: f64,
    pub pointwise: Vec<ParetoDiag>,
}

impl PsisLoo {
    /// Counts of (good, ok, bad).
    pub fn category_counts(&self) -> (usize, usize, usize) {
        let count = |c| self.pointwise.iter().filter(|d| d.category == c).count();
        (count(KCategory::Good), count(KCategory::Ok), count(KCategory::Bad))
    }
}

/// Tail length `ceil(min(0.2 S, 3 √S))`.
pub fn tail_length(draws: usize) -> usize {
    let s = draws as f64;
    (0.2 * s).min(3.0 * s.sqrt()).ceil() as usize
}

/// Smoothed log weights and `k` for one observation. `loglik` must be sorted
/// ascending so the result does not depend on draw order.
fn psis_observation(sorted_ll: &[f64]) -> (Vec<f64>, Option<f64>) {
    let s = sorted_ll.len();
    // Raw log ratios −ℓ, largest first since ℓ is ascending.
    let max_lr = -sorted_ll[0];
    let mut lw: Vec<f64> = sorted_ll.iter().map(|&l| -l - max_lr).collect();
    let m = tail_length(s);
    if m < 5 || m >= s {
        return (lw, None);
    }
    // lw is descending: the tail is lw[0..m], the cutoff is lw[m].
    let cutoff = lw[m];
    let exp_cut = cutoff.exp();
    let exceed: Vec<f64> = lw[..m].iter().map(|v| v.exp() - exp_cut).collect();
    if exceed.iter().all(|&e| e <= 0.0) {
        return (lw, Some(0.0));
    }
    let positive: Vec<f64> = exceed.iter().copied().filter(|&e| e > 0.0).collect();
    let fit = match gpd_fit_tail(&positive) {
        Ok(f) => f,
        Err(_) => return (lw, None),
    };
    // Replace the tail, largest last in quantile order, truncated at the raw maximum (0).
    for (rank, slot) in (0..m).rev().enumerate() {
        let p = (rank as f64 + 0.5) / m as f64;
        let smoothed = (gpd_quantile(p, fit) + exp_cut).ln();
        lw[slot] = smoothed.min(0.0);
    }
    (lw, Some(fit.k))
}

/// PSIS-LOO over the columns of a log-likelihood matrix.
pub fn psis_loo(loglik: &LoglikMatrix) -> Result<PsisLoo> {
    let s = loglik.draws;
    if s < 2 {
        return Err(Error::Diagnostic("PSIS-LOO needs at least 2 draws".into()));
    }
    let mut pointwise = Vec::with_capacity(loglik.patients);
    let mut lppd = 0.0;
    for i in 0..loglik.patients {
        let mut col = loglik.column(i);
        let in_sample = log_sum_exp(&col) - (s as f64).ln();
        if col.iter().any(|v| !v.is_finite()) {
            pointwise.push(ParetoDiag {
                k: None,
                category: KCategory::Bad,
                elpd: f64::NAN,
            });
            lppd += in_sample;
            continue;
        }
        col.sort_by(f64::total_cmp);
        let (mut lw, k) = psis_observation(&col);
        let norm = log_sum_exp(&lw);
        lw.iter_mut().for_each(|w| *w -= norm);
        let terms: Vec<f64> = lw.iter().zip(&col).map(|(w, l)| w + l).collect();
        let elpd = log_sum_exp(&terms);
        lppd += in_sample;
        pointwise.push(ParetoDiag {
            k,
            category: KCategory::classify(k),
            elpd,
        });
    }
    let finite: Vec<f64> = pointwise.iter().map(|d| d.elpd).filter(|e| e.is_finite()).collect();
    let elpd_loo = if finite.len() == pointwise.len() {
        finite.iter().sum()
    } else {
        f64::NAN
    };
    let n = finite.len() as f64;
    let se = if finite.len() > 1 {
        let m = finite.iter().sum::<f64>() / n;
        (n * finite.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    Ok(PsisLoo {
        elpd_loo,
        se_elpd_loo: se,
        lppd,
        p_loo: lppd - elpd_loo,
        pointwise,
    })
}
