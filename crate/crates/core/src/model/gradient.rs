//! Analytic gradient of the marginal log joint with respect to the
//! constrained parameters.

use super::likelihood::{channel_base, dot, log_prior};
use super::{ParamSet, PatientRecord, Priors};
use crate::error::{Error, Result};
use crate::math::{bernoulli_logit_lpmf, expit, log_sum_exp2, normal_lpdf};

/// Which patients contribute to the likelihood and how it is rescaled.
///
/// With a subset, the likelihood value and the gradients of the global
/// parameters are multiplied by `scale` (normally `N / |batch|`). The gradient
/// of a batch patient's own `η_i` is left unscaled since `η_i` only appears in
/// that patient's term.
#[derive(Debug, Clone, Default)]
pub struct LikelihoodBatch {
    pub indices: Option<Vec<usize>>,
    pub scale: f64,
}

impl LikelihoodBatch {
    pub fn full() -> Self {
        LikelihoodBatch {
            indices: None,
            scale: 1.0,
        }
    }

    pub fn subset(indices: Vec<usize>, n_total: usize) -> Self {
        let scale = n_total as f64 / indices.len() as f64;
        LikelihoodBatch {
            indices: Some(indices),
            scale,
        }
    }
}

#[inline]
fn axpy_design(grad: &mut [f64], x: &[f64], base_coef: f64, lat_coef: f64) {
    grad[0] += base_coef;
    for (g, xm) in grad[1..=x.len()].iter_mut().zip(x) {
        *g += base_coef * xm;
    }
    grad[x.len() + 1] += lat_coef;
}

/// Accumulates patient `i`'s marginal log-likelihood gradient into `grad`
/// (global blocks multiplied by `scale`, `η_i` unscaled) and returns its value.
fn accumulate_patient(
    rec: &PatientRecord,
    params: &ParamSet,
    i: usize,
    scale: f64,
    grad: &mut ParamSet,
) -> Result<f64> {
    let x = &rec.x;
    let li = x.len() + 1;
    let n_r = params.beta_r.len();

    // First pass: class log terms.
    let lp_d = dot(x, &params.beta_d) + params.eta[i];
    let mut t = [
        bernoulli_logit_lpmf(false, lp_d),
        bernoulli_logit_lpmf(true, lp_d),
    ];
    for (j, (beta_r, beta_y)) in params.beta_r.iter().zip(&params.beta_y).enumerate() {
        let avail = rec.r[j];
        let base = channel_base(x, beta_r);
        t[0] += bernoulli_logit_lpmf(avail, base);
        t[1] += bernoulli_logit_lpmf(avail, base + beta_r[li]);
        if avail {
            let mu = channel_base(x, beta_y);
            t[0] += normal_lpdf(rec.y[j], mu, params.tau2[j]);
            t[1] += normal_lpdf(rec.y[j], mu + beta_y[li], params.tau2[j]);
        }
    }
    for (beta, &obs) in params
        .beta_w
        .iter()
        .zip(&rec.w)
        .chain(params.beta_p.iter().zip(&rec.p))
    {
        let base = channel_base(x, beta);
        t[0] += bernoulli_logit_lpmf(obs, base);
        t[1] += bernoulli_logit_lpmf(obs, base + beta[li]);
    }
    let value = log_sum_exp2(t[0], t[1]);
    if !value.is_finite() {
        return Err(Error::numerical(Some(i), "marginal likelihood is not finite"));
    }
    let w1 = expit(t[1] - t[0]);
    let w0 = 1.0 - w1;

    // Second pass: responsibility-weighted score of each channel.
    let d_score = w1 - expit(lp_d);
    for (g, xm) in grad.beta_d.iter_mut().zip(x) {
        *g += scale * d_score * xm;
    }
    grad.eta[i] += d_score;

    let bern_score = |obs: bool, lp: f64| if obs { 1.0 - expit(lp) } else { -expit(lp) };
    for j in 0..n_r {
        let avail = rec.r[j];
        let beta_r = &params.beta_r[j];
        let base = channel_base(x, beta_r);
        let s0 = w0 * bern_score(avail, base);
        let s1 = w1 * bern_score(avail, base + beta_r[li]);
        axpy_design(&mut grad.beta_r[j], x, scale * (s0 + s1), scale * s1);
        if avail {
            let beta_y = &params.beta_y[j];
            let tau2 = params.tau2[j];
            let mu0 = channel_base(x, beta_y);
            let res0 = rec.y[j] - mu0;
            let res1 = res0 - beta_y[li];
            let g0 = w0 * res0 / tau2;
            let g1 = w1 * res1 / tau2;
            axpy_design(&mut grad.beta_y[j], x, scale * (g0 + g1), scale * g1);
            let dtau = -0.5 / tau2 + 0.5 * (w0 * res0 * res0 + w1 * res1 * res1) / (tau2 * tau2);
            grad.tau2[j] += scale * dtau;
        }
    }
    for (k, (beta, &obs)) in params.beta_w.iter().zip(&rec.w).enumerate() {
        let base = channel_base(x, beta);
        let s0 = w0 * bern_score(obs, base);
        let s1 = w1 * bern_score(obs, base + beta[li]);
        axpy_design(&mut grad.beta_w[k], x, scale * (s0 + s1), scale * s1);
    }
    for (l, (beta, &obs)) in params.beta_p.iter().zip(&rec.p).enumerate() {
        let base = channel_base(x, beta);
        let s0 = w0 * bern_score(obs, base);
        let s1 = w1 * bern_score(obs, base + beta[li]);
        axpy_design(&mut grad.beta_p[l], x, scale * (s0 + s1), scale * s1);
    }
    Ok(value)
}

fn zero_like(params: &ParamSet) -> ParamSet {
    let z = |v: &[Vec<f64>]| v.iter().map(|b| vec![0.0; b.len()]).collect::<Vec<_>>();
    ParamSet {
        beta_d: vec![0.0; params.beta_d.len()],
        beta_r: z(&params.beta_r),
        beta_y: z(&params.beta_y),
        tau2: vec![0.0; params.tau2.len()],
        beta_w: z(&params.beta_w),
        beta_p: z(&params.beta_p),
        eta: vec![0.0; params.eta.len()],
    }
}

/// Value and gradient of the (possibly minibatched) marginal log joint.
///
/// The gradient is with respect to constrained parameters (`τ²` and `η`
/// themselves); the caller applies the change of variables. Returns `−∞` with
/// a zero gradient when `params` is outside the prior support.
pub fn log_joint_grad(
    records: &[PatientRecord],
    params: &ParamSet,
    priors: &Priors,
    batch: &LikelihoodBatch,
) -> Result<(f64, ParamSet)> {
    if params.eta.len() != records.len() {
        return Err(Error::Shape(format!(
            "eta has {} entries for {} patients",
            params.eta.len(),
            records.len()
        )));
    }
    let mut grad = zero_like(params);
    let lp = log_prior(params, priors);
    if lp == f64::NEG_INFINITY {
        return Ok((lp, grad));
    }

    let mut ll = 0.0;
    match &batch.indices {
        None => {
            for (i, rec) in records.iter().enumerate() {
                ll += accumulate_patient(rec, params, i, batch.scale, &mut grad)?;
            }
        }
        Some(idx) => {
            for &i in idx {
                ll += accumulate_patient(&records[i], params, i, batch.scale, &mut grad)?;
            }
        }
    }

    priors.beta_d.add_grad(&params.beta_d, &mut grad.beta_d);
    for (b, g) in params.beta_r.iter().zip(grad.beta_r.iter_mut()) {
        priors.beta_r.add_grad(b, g);
    }
    for (b, g) in params.beta_y.iter().zip(grad.beta_y.iter_mut()) {
        priors.beta_y.add_grad(b, g);
    }
    for (b, g) in params.beta_w.iter().zip(grad.beta_w.iter_mut()) {
        priors.beta_w.add_grad(b, g);
    }
    for (b, g) in params.beta_p.iter().zip(grad.beta_p.iter_mut()) {
        priors.beta_p.add_grad(b, g);
    }
    let (c, d) = (priors.spec.tau_shape, priors.spec.tau_rate);
    for (&t, g) in params.tau2.iter().zip(grad.tau2.iter_mut()) {
        *g += -(c + 1.0) / t + d / (t * t);
    }

    Ok((batch.scale * ll + lp, grad))
}
