//! Conditional updates of the Metropolis-within-Gibbs sweep.
//!
//! The sampler imputes `D`, so every coefficient block only touches its own
//! channel's conditional log-likelihood. [`GibbsState`] caches one such term
//! per channel (plus the latent-class model term) and each step keeps the
//! cache in sync with the parameters it changes.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::math::{bernoulli_logit_lpmf, expit, log1m_expit, log_expit, logit, normal_lpdf, LN_2PI};
use crate::model::likelihood::{channel_base, dot};
use crate::model::{class_posterior, Block, Dataset, ModelShape, ParamSet, PatientRecord, Priors};

/// Sampler state: parameters, imputed classes, and cached conditional
/// log-likelihoods.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub params: ParamSet,
    pub d: Vec<bool>,
    shape: ModelShape,
    /// Indexed by [`cache_index`]: latent-class term, then availability,
    /// biomarker, code and medication channels.
    cache: Vec<f64>,
}

fn cache_len(shape: &ModelShape) -> usize {
    1 + 2 * shape.j + shape.k + shape.l
}

fn cache_index(shape: &ModelShape, block: Block) -> usize {
    match block {
        Block::LatentClass => 0,
        Block::Availability(j) => 1 + j,
        Block::Biomarker(j) => 1 + shape.j + j,
        Block::Code(k) => 1 + 2 * shape.j + k,
        Block::Medication(l) => 1 + 2 * shape.j + shape.k + l,
    }
}

/// Conditional log-likelihood of one channel given the imputed classes, with
/// `coefs` standing in for that channel's coefficient vector.
pub fn channel_loglik(
    block: Block,
    coefs: &[f64],
    params: &ParamSet,
    d: &[bool],
    records: &[PatientRecord],
) -> f64 {
    let li = coefs.len().saturating_sub(1);
    let lat = |di: bool| if di { coefs[li] } else { 0.0 };
    match block {
        Block::LatentClass => records
            .iter()
            .zip(d)
            .zip(&params.eta)
            .map(|((rec, &di), &e)| bernoulli_logit_lpmf(di, dot(&rec.x, coefs) + e))
            .sum(),
        Block::Availability(j) => records
            .iter()
            .zip(d)
            .map(|(rec, &di)| bernoulli_logit_lpmf(rec.r[j], channel_base(&rec.x, coefs) + lat(di)))
            .sum(),
        Block::Biomarker(j) => {
            let var = params.tau2[j];
            records
                .iter()
                .zip(d)
                .filter(|(rec, _)| rec.r[j])
                .map(|(rec, &di)| normal_lpdf(rec.y[j], channel_base(&rec.x, coefs) + lat(di), var))
                .sum()
        }
        Block::Code(k) => records
            .iter()
            .zip(d)
            .map(|(rec, &di)| bernoulli_logit_lpmf(rec.w[k], channel_base(&rec.x, coefs) + lat(di)))
            .sum(),
        Block::Medication(l) => records
            .iter()
            .zip(d)
            .map(|(rec, &di)| bernoulli_logit_lpmf(rec.p[l], channel_base(&rec.x, coefs) + lat(di)))
            .sum(),
    }
}

fn cache_blocks(shape: &ModelShape) -> impl Iterator<Item = Block> {
    std::iter::once(Block::LatentClass)
        .chain((0..shape.j).map(Block::Availability))
        .chain((0..shape.j).map(Block::Biomarker))
        .chain((0..shape.k).map(Block::Code))
        .chain((0..shape.l).map(Block::Medication))
}

impl GibbsState {
    pub fn new(data: &Dataset, params: ParamSet, d: Vec<bool>) -> Result<Self> {
        params.check_shape(&data.shape, Some(data.len()))?;
        if d.len() != data.len() {
            return Err(Error::Shape(format!(
                "{} class indicators for {} patients",
                d.len(),
                data.len()
            )));
        }
        let mut state = GibbsState {
            params,
            d,
            shape: data.shape,
            cache: vec![0.0; cache_len(&data.shape)],
        };
        state.refresh_caches(data);
        Ok(state)
    }

    /// Recomputes every cached term from scratch.
    pub fn refresh_caches(&mut self, data: &Dataset) {
        for block in cache_blocks(&self.shape) {
            let coefs = block.coefs(&self.params);
            let v = channel_loglik(block, coefs, &self.params, &self.d, &data.records);
            self.cache[cache_index(&self.shape, block)] = v;
        }
    }

    /// Cached conditional log-likelihood of one channel (or of the class model
    /// for [`Block::LatentClass`]).
    pub fn cached_loglik(&self, block: Block) -> f64 {
        self.cache[cache_index(&self.shape, block)]
    }

    /// `ln p(data, D | params)` from the caches.
    pub fn conditional_loglik(&self) -> f64 {
        self.cache.iter().sum()
    }

    fn cache_mut(&mut self, block: Block) -> &mut f64 {
        let idx = cache_index(&self.shape, block);
        &mut self.cache[idx]
    }

    /// Relabels the classes: reflects the parameters and flips every `D_i`.
    pub fn reflect(&mut self, data: &Dataset, eta_bounds: (f64, f64)) {
        self.params.reflect_classes(&self.shape, eta_bounds);
        for di in &mut self.d {
            *di = !*di;
        }
        self.refresh_caches(data);
    }
}

/// Draws `D_i` from its full conditional `Bernoulli(class_posterior)`.
pub fn step_d<R: Rng + ?Sized>(
    record: &PatientRecord,
    params: &ParamSet,
    i: usize,
    rng: &mut R,
) -> Result<bool> {
    let p = class_posterior(record, params, i)?;
    Ok(rng.random::<f64>() < p)
}

/// Redraws every `D_i` and rebuilds the caches from the chosen class terms.
pub(crate) fn sweep_d<R: Rng + ?Sized>(state: &mut GibbsState, data: &Dataset, rng: &mut R) -> Result<()> {
    let shape = data.shape;
    let li = shape.latent_index();
    let params = &state.params;
    let mut terms = vec![[0.0f64; 2]; cache_len(&shape)];
    let mut acc = vec![0.0f64; terms.len()];
    for (i, rec) in data.records.iter().enumerate() {
        let lp_d = dot(&rec.x, &params.beta_d) + params.eta[i];
        terms[0] = [bernoulli_logit_lpmf(false, lp_d), bernoulli_logit_lpmf(true, lp_d)];
        let mut slot = 1;
        for beta in &params.beta_r {
            let j = slot - 1;
            let base = channel_base(&rec.x, beta);
            terms[slot] = [
                bernoulli_logit_lpmf(rec.r[j], base),
                bernoulli_logit_lpmf(rec.r[j], base + beta[li]),
            ];
            slot += 1;
        }
        for (j, beta) in params.beta_y.iter().enumerate() {
            terms[slot] = if rec.r[j] {
                let mu = channel_base(&rec.x, beta);
                let var = params.tau2[j];
                [normal_lpdf(rec.y[j], mu, var), normal_lpdf(rec.y[j], mu + beta[li], var)]
            } else {
                [0.0, 0.0]
            };
            slot += 1;
        }
        for (beta, &obs) in params
            .beta_w
            .iter()
            .zip(&rec.w)
            .chain(params.beta_p.iter().zip(&rec.p))
        {
            let base = channel_base(&rec.x, beta);
            terms[slot] = [bernoulli_logit_lpmf(obs, base), bernoulli_logit_lpmf(obs, base + beta[li])];
            slot += 1;
        }
        let (t0, t1) = terms
            .iter()
            .fold((0.0, 0.0), |(a, b), t| (a + t[0], b + t[1]));
        if t0.is_nan() || t1.is_nan() || t0 == f64::INFINITY || t1 == f64::INFINITY {
            return Err(Error::numerical(Some(i), "non-finite class log term in D update"));
        }
        let di = rng.random::<f64>() < expit(t1 - t0);
        state.d[i] = di;
        let pick = usize::from(di);
        for (a, t) in acc.iter_mut().zip(&terms) {
            *a += t[pick];
        }
    }
    state.cache = acc;
    Ok(())
}

/// Random-walk proposal for one coefficient block: `v' = v + step·L z`, with
/// `L` an optional lower-triangular preconditioner (row-major, `dim × dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockProposal {
    pub step: f64,
    pub chol: Option<Vec<f64>>,
}

impl BlockProposal {
    pub fn isotropic(step: f64) -> Self {
        BlockProposal { step, chol: None }
    }

    fn perturb<R: Rng + ?Sized>(&self, current: &[f64], rng: &mut R) -> Vec<f64> {
        let dim = current.len();
        let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        match &self.chol {
            None => current.iter().zip(&z).map(|(v, zi)| v + self.step * zi).collect(),
            Some(l) => (0..dim)
                .map(|r| {
                    let lz: f64 = (0..=r).map(|c| l[r * dim + c] * z[c]).sum();
                    current[r] + self.step * lz
                })
                .collect(),
        }
    }
}

/// Metropolis update of one coefficient vector against the conditional
/// likelihood of its channel. Returns whether the proposal was accepted.
pub fn step_beta_block<R: Rng + ?Sized>(
    block: Block,
    state: &mut GibbsState,
    data: &Dataset,
    priors: &Priors,
    proposal: &BlockProposal,
    rng: &mut R,
) -> bool {
    let prior = priors.block(block);
    let current = block.coefs(&state.params);
    let candidate = proposal.perturb(current, rng);
    let old = state.cached_loglik(block) + prior.ln_pdf(current);
    let new_ll = channel_loglik(block, &candidate, &state.params, &state.d, &data.records);
    let new = new_ll + prior.ln_pdf(&candidate);
    let log_ratio = new - old;
    if !new.is_finite() || log_ratio.is_nan() {
        return false;
    }
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        *block.coefs_mut(&mut state.params) = candidate;
        *state.cache_mut(block) = new_ll;
        true
    } else {
        false
    }
}

/// Inverse-gamma posterior `(c + n/2, d + SSR/2)`.
pub fn inv_gamma_posterior(shape: f64, rate: f64, n: usize, ssr: f64) -> (f64, f64) {
    (shape + n as f64 / 2.0, rate + ssr / 2.0)
}

/// Draws from `InvGamma(shape, rate)` as the reciprocal of a gamma draw.
pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
    1.0 / g.sample(rng)
}

/// Number of available values and residual sum of squares of biomarker `j`
/// against `(1, x_i, D_i)·β^Y_j`.
pub fn biomarker_residuals(j: usize, state: &GibbsState, data: &Dataset) -> (usize, f64) {
    let beta = &state.params.beta_y[j];
    let li = data.shape.latent_index();
    let mut n = 0;
    let mut ssr = 0.0;
    for (rec, &di) in data.records.iter().zip(&state.d) {
        if rec.r[j] {
            let mu = channel_base(&rec.x, beta) + if di { beta[li] } else { 0.0 };
            let e = rec.y[j] - mu;
            ssr += e * e;
            n += 1;
        }
    }
    (n, ssr)
}

/// Full-conditional `(shape, rate)` of `τ²_j`.
pub fn tau_posterior(j: usize, state: &GibbsState, data: &Dataset, priors: &Priors) -> (f64, f64) {
    let (n, ssr) = biomarker_residuals(j, state, data);
    inv_gamma_posterior(priors.spec.tau_shape, priors.spec.tau_rate, n, ssr)
}

/// Conjugate draw of `τ²_j`; returns the new value.
pub fn step_tau<R: Rng + ?Sized>(
    j: usize,
    state: &mut GibbsState,
    data: &Dataset,
    priors: &Priors,
    rng: &mut R,
) -> f64 {
    let (n, ssr) = biomarker_residuals(j, state, data);
    let (shape, rate) = inv_gamma_posterior(priors.spec.tau_shape, priors.spec.tau_rate, n, ssr);
    let tau2 = sample_inv_gamma(shape, rate, rng);
    state.params.tau2[j] = tau2;
    *state.cache_mut(Block::Biomarker(j)) = -0.5 * (n as f64 * (LN_2PI + tau2.ln()) + ssr / tau2);
    tau2
}

/// Random-walk Metropolis on `u_i = logit((η_i − a)/(b − a))` targeting
/// patient `i`'s class-model term under the flat prior.
pub fn step_eta<R: Rng + ?Sized>(
    i: usize,
    state: &mut GibbsState,
    data: &Dataset,
    priors: &Priors,
    step: f64,
    rng: &mut R,
) -> bool {
    let (a, b) = priors.eta_bounds();
    let z: f64 = rng.sample(StandardNormal);
    let delta_u = step * z;
    let u_accept: f64 = rng.random();
    if delta_u == 0.0 {
        return true;
    }
    let eta = state.params.eta[i];
    let u = logit((eta - a) / (b - a));
    let u_new = u + delta_u;
    let eta_new = a + (b - a) * expit(u_new);
    if !(eta_new > a && eta_new < b) {
        return false;
    }
    let rec = &data.records[i];
    let di = state.d[i];
    let xb = dot(&rec.x, &state.params.beta_d);
    let old = bernoulli_logit_lpmf(di, xb + eta);
    let new = bernoulli_logit_lpmf(di, xb + eta_new);
    let log_jac = |u: f64| log_expit(u) + log1m_expit(u);
    let log_ratio = new - old + log_jac(u_new) - log_jac(u);
    if log_ratio.is_nan() {
        return false;
    }
    if u_accept.ln() < log_ratio {
        state.params.eta[i] = eta_new;
        *state.cache_mut(Block::LatentClass) += new - old;
        true
    } else {
        false
    }
}
