//! Marginal likelihood of the two-class model, with the latent class summed
//! out in log space.

use super::{ParamSet, PatientRecord, Priors};
use crate::error::{Error, Result};
use crate::math::{bernoulli_logit_lpmf, expit, log_sum_exp2, normal_lpdf};

/// `β₀ + Σ x_m β_m` for a channel vector laid out as (intercept, covariates, latent).
#[inline]
pub(crate) fn channel_base(x: &[f64], beta: &[f64]) -> f64 {
    let mut acc = beta[0];
    for (xm, bm) in x.iter().zip(&beta[1..]) {
        acc += xm * bm;
    }
    acc
}

#[inline]
pub(crate) fn dot(x: &[f64], beta: &[f64]) -> f64 {
    x.iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// `(1, x, d) · β`.
pub fn linear_predictor(record: &PatientRecord, d: bool, beta: &[f64]) -> Result<f64> {
    let m = record.x.len();
    if beta.len() != m + 2 {
        return Err(Error::Shape(format!(
            "coefficient vector has length {}, expected M + 2 = {}",
            beta.len(),
            m + 2
        )));
    }
    let lat = if d { beta[m + 1] } else { 0.0 };
    Ok(channel_base(&record.x, beta) + lat)
}

/// Unnormalised log joint of the record and `D_i = d` for `d = 0, 1`.
///
/// Element `d` is `ln P(D_i = d) + Σ_channels ln f(· | D_i = d)`. The biomarker
/// value only enters where it is available.
pub fn class_log_terms(record: &PatientRecord, params: &ParamSet, i: usize) -> Result<[f64; 2]> {
    let li = record.x.len() + 1;
    let lp_d = dot(&record.x, &params.beta_d) + params.eta[i];
    let mut t = [
        bernoulli_logit_lpmf(false, lp_d),
        bernoulli_logit_lpmf(true, lp_d),
    ];

    for (j, (beta_r, beta_y)) in params.beta_r.iter().zip(&params.beta_y).enumerate() {
        let avail = record.r[j];
        let base = channel_base(&record.x, beta_r);
        t[0] += bernoulli_logit_lpmf(avail, base);
        t[1] += bernoulli_logit_lpmf(avail, base + beta_r[li]);
        if avail {
            let mu = channel_base(&record.x, beta_y);
            let var = params.tau2[j];
            t[0] += normal_lpdf(record.y[j], mu, var);
            t[1] += normal_lpdf(record.y[j], mu + beta_y[li], var);
        }
    }
    for (beta, &obs) in params
        .beta_w
        .iter()
        .zip(&record.w)
        .chain(params.beta_p.iter().zip(&record.p))
    {
        let base = channel_base(&record.x, beta);
        t[0] += bernoulli_logit_lpmf(obs, base);
        t[1] += bernoulli_logit_lpmf(obs, base + beta[li]);
    }

    if t.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::numerical(Some(i), "non-finite class log term"));
    }
    Ok(t)
}

/// `ln Σ_d P(D_i = d) f(record | D_i = d)`.
pub fn log_marginal_patient(record: &PatientRecord, params: &ParamSet, i: usize) -> Result<f64> {
    let [t0, t1] = class_log_terms(record, params, i)?;
    let v = log_sum_exp2(t0, t1);
    if !v.is_finite() {
        return Err(Error::numerical(Some(i), "marginal likelihood is not finite"));
    }
    Ok(v)
}

/// `P(D_i = 1 | record, params)`.
pub fn class_posterior(record: &PatientRecord, params: &ParamSet, i: usize) -> Result<f64> {
    let [t0, t1] = class_log_terms(record, params, i)?;
    Ok(expit(t1 - t0))
}

/// Per-patient marginal log-likelihoods.
pub fn log_likelihood_patients(records: &[PatientRecord], params: &ParamSet) -> Result<Vec<f64>> {
    if params.eta.len() != records.len() {
        return Err(Error::Shape(format!(
            "eta has {} entries for {} patients",
            params.eta.len(),
            records.len()
        )));
    }
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| log_marginal_patient(rec, params, i))
        .collect()
}

/// Sum of all prior log-densities; `−∞` outside the support.
pub fn log_prior(params: &ParamSet, priors: &Priors) -> f64 {
    let mut lp = priors.beta_d.ln_pdf(&params.beta_d);
    lp += params.beta_r.iter().map(|b| priors.beta_r.ln_pdf(b)).sum::<f64>();
    lp += params.beta_y.iter().map(|b| priors.beta_y.ln_pdf(b)).sum::<f64>();
    lp += params.beta_w.iter().map(|b| priors.beta_w.ln_pdf(b)).sum::<f64>();
    lp += params.beta_p.iter().map(|b| priors.beta_p.ln_pdf(b)).sum::<f64>();
    lp += params.tau2.iter().map(|&t| priors.tau2_ln_pdf(t)).sum::<f64>();
    lp += params.eta.iter().map(|&e| priors.eta_ln_pdf(e)).sum::<f64>();
    lp
}

/// Marginal log-likelihood of all patients plus the log prior.
pub fn log_joint(records: &[PatientRecord], params: &ParamSet, priors: &Priors) -> Result<f64> {
    if params.eta.len() != records.len() {
        return Err(Error::Shape(format!(
            "eta has {} entries for {} patients",
            params.eta.len(),
            records.len()
        )));
    }
    let lp = log_prior(params, priors);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    let mut total = lp;
    for (i, rec) in records.iter().enumerate() {
        total += log_marginal_patient(rec, params, i)?;
    }
    Ok(total)
}
