//! Mean-field Gaussian stochastic variational inference.
//!
//! The variational family is a diagonal Gaussian over the unconstrained
//! parameter vector (coefficients, `ln τ²`, and the logit-scaled `η_i`), with
//! `D` summed out of the likelihood. Gradients are reparameterization
//! estimates; the optimizer is Adam with a `1/√t`-type decay. The fit
//! returns the best evaluated iterate, not the last.

mod stopping;

pub use stopping::{
    best_index, relative_change, stopping_check, BestSnapshot, ConvergenceMonitor, StopReason, StoppingRule,
    TracePoint,
};

use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::draws::DrawMatrix;
use crate::error::{Error, Result};
use crate::math::normal_entropy;
use crate::model::{
    log_joint_grad, log_likelihood_patients, log_marginal_patient, log_prior, Dataset, LikelihoodBatch, ModelShape, ParamLayout, ParamSet,
    Priors,
};

/// Diagonal Gaussian `q(v) = N(mu, diag(exp(log_sigma))²)` over the
/// unconstrained layout of [`ParamLayout::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub shape: ModelShape,
    pub n_patients: usize,
    pub eta_bounds: (f64, f64),
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
    pub iteration: usize,
}

impl VariationalState {
    /// Centred at the prior means with `τ² = 1`, `η` at the middle of its
    /// interval, and a common initial scale.
    pub fn initial(shape: ModelShape, n_patients: usize, priors: &Priors, log_sigma: f64) -> Self {
        let layout = ParamLayout::new(shape, n_patients);
        let mut mu = vec![0.0; layout.dim()];
        let put = |mu: &mut Vec<f64>, range: std::ops::Range<usize>, mean: &[f64]| {
            mu[range].copy_from_slice(mean);
        };
        put(&mut mu, layout.beta_d_range(), priors.beta_d.mean());
        for j in 0..shape.j {
            put(&mut mu, layout.beta_r_range(j), priors.beta_r.mean());
            put(&mut mu, layout.beta_y_range(j), priors.beta_y.mean());
        }
        for k in 0..shape.k {
            put(&mut mu, layout.beta_w_range(k), priors.beta_w.mean());
        }
        for l in 0..shape.l {
            put(&mut mu, layout.beta_p_range(l), priors.beta_p.mean());
        }
        VariationalState {
            shape,
            n_patients,
            eta_bounds: priors.eta_bounds(),
            log_sigma: vec![log_sigma; mu.len()],
            mu,
            iteration: 0,
        }
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.shape, self.n_patients)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn entropy(&self) -> f64 {
        self.log_sigma.iter().map(|&s| normal_entropy(s)).sum()
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        if self.shape != data.shape || self.n_patients != data.len() {
            return Err(Error::Shape(format!(
                "variational state is for {} patients of shape {:?}, data has {} of shape {:?}",
                self.n_patients,
                self.shape,
                data.len(),
                data.shape
            )));
        }
        if self.mu.len() != self.layout().dim() || self.log_sigma.len() != self.mu.len() {
            return Err(Error::Shape("variational state vectors have the wrong length".into()));
        }
        Ok(())
    }

    /// The constrained parameters at `T(mu)`.
    pub fn mean_params(&self) -> Result<ParamSet> {
        Ok(self.layout().to_constrained(&self.mu, self.eta_bounds)?.params)
    }

    /// Relabels the classes when the anchor biomarker's latent shift is
    /// negative (only for symmetric `η` bounds, where relabelling is an exact
    /// symmetry). The intercept absorbing the latent coefficient takes the
    /// combined scale of both. Returns whether a reflection happened.
    pub fn apply_anchor(&mut self, priors: &Priors) -> bool {
        let (a, b) = self.eta_bounds;
        let Some(anchor) = priors.anchor() else {
            return false;
        };
        if (a + b).abs() > 1e-12 {
            return false;
        }
        let layout = self.layout();
        let li = self.shape.latent_index();
        if self.mu[layout.beta_y_range(anchor).start + li] >= 0.0 {
            return false;
        }
        let mut channel_starts: Vec<usize> = Vec::new();
        channel_starts.extend((0..self.shape.j).map(|j| layout.beta_r_range(j).start));
        channel_starts.extend((0..self.shape.j).map(|j| layout.beta_y_range(j).start));
        channel_starts.extend((0..self.shape.k).map(|k| layout.beta_w_range(k).start));
        channel_starts.extend((0..self.shape.l).map(|l| layout.beta_p_range(l).start));
        for s in channel_starts {
            let (i0, il) = (s, s + li);
            self.mu[i0] += self.mu[il];
            self.mu[il] = -self.mu[il];
            let var = (2.0 * self.log_sigma[i0]).exp() + (2.0 * self.log_sigma[il]).exp();
            self.log_sigma[i0] = 0.5 * var.ln();
        }
        for idx in layout.beta_d_range().chain(layout.eta_range()) {
            self.mu[idx] = -self.mu[idx];
        }
        true
    }
}

/// One reparameterized draw `v = mu + sigma∘z`.
fn sample_unconstrained<R: Rng + ?Sized>(q: &VariationalState, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let z: Vec<f64> = (0..q.dim()).map(|_| rng.sample(StandardNormal)).collect();
    let v = q
        .mu
        .iter()
        .zip(&q.log_sigma)
        .zip(&z)
        .map(|((m, s), zi)| m + s.exp() * zi)
        .collect();
    (v, z)
}

/// Uniform minibatch without replacement, sorted, with the `N / B` scale.
pub fn sample_batch<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> LikelihoodBatch {
    if size >= n {
        return LikelihoodBatch::full();
    }
    let mut idx = index::sample(rng, n, size).into_vec();
    idx.sort_unstable();
    LikelihoodBatch::subset(idx, n)
}

/// Monte Carlo ELBO estimate with its standard error and the number of
/// skipped (non-finite) samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboEstimate {
    pub value: f64,
    pub std_err: f64,
    pub skipped: usize,
}

/// `ln p(data, θ) + ln|J|` at `T(v)` without the gradient.
fn log_density_value(
    q: &VariationalState,
    layout: &ParamLayout,
    v: &[f64],
    data: &Dataset,
    priors: &Priors,
    batch: &LikelihoodBatch,
) -> Option<f64> {
    let point = layout.to_constrained(v, q.eta_bounds).ok()?;
    let lp = log_prior(&point.params, priors);
    if !lp.is_finite() {
        return None;
    }
    let ll = match &batch.indices {
        None => log_likelihood_patients(&data.records, &point.params).ok()?.iter().sum::<f64>(),
        Some(idx) => {
            let mut acc = 0.0;
            for &i in idx {
                acc += log_marginal_patient(&data.records[i], &point.params, i).ok()?;
            }
            acc
        }
    };
    let value = batch.scale * ll + lp + point.log_jacobian;
    value.is_finite().then_some(value)
}

fn log_density_at(
    q: &VariationalState,
    layout: &ParamLayout,
    v: &[f64],
    data: &Dataset,
    priors: &Priors,
    batch: &LikelihoodBatch,
) -> Option<(f64, ParamSet)> {
    let point = layout.to_constrained(v, q.eta_bounds).ok()?;
    let (lj, grad) = log_joint_grad(&data.records, &point.params, priors, batch).ok()?;
    let value = lj + point.log_jacobian;
    value.is_finite().then_some((value, grad))
}

/// `mean_s [ln p(data, T(v_s)) + ln|J(v_s)|] + H(q)`, with the likelihood
/// optionally restricted to a rescaled minibatch.
pub fn elbo_estimate_detailed<R: Rng + ?Sized>(
    q: &VariationalState,
    data: &Dataset,
    priors: &Priors,
    n_mc: usize,
    batch: &LikelihoodBatch,
    rng: &mut R,
) -> Result<ElboEstimate> {
    q.check(data)?;
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be at least 1".into()));
    }
    let layout = q.layout();
    let mut vals = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let (v, _) = sample_unconstrained(q, rng);
        if let Some(val) = log_density_value(q, &layout, &v, data, priors, batch) {
            vals.push(val);
        }
    }
    if vals.is_empty() {
        return Err(Error::numerical(None, "every ELBO sample was non-finite"));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = if vals.len() > 1 {
        vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(ElboEstimate {
        value: mean + q.entropy(),
        std_err: (var / n).sqrt(),
        skipped: n_mc - vals.len(),
    })
}

/// [`elbo_estimate_detailed`] on the full data, value only.
pub fn elbo_estimate<R: Rng + ?Sized>(
    q: &VariationalState,
    data: &Dataset,
    priors: &Priors,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(elbo_estimate_detailed(q, data, priors, n_mc, &LikelihoodBatch::full(), rng)?.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElboGradient {
    pub grad_mu: Vec<f64>,
    pub grad_log_sigma: Vec<f64>,
    /// ELBO estimate from the same samples.
    pub value: f64,
    pub skipped: usize,
}

/// Reparameterization gradient of the ELBO. Uses the same draws as
/// [`elbo_estimate_detailed`] given the same RNG state.
pub fn elbo_gradient<R: Rng + ?Sized>(
    q: &VariationalState,
    data: &Dataset,
    priors: &Priors,
    n_mc: usize,
    batch: &LikelihoodBatch,
    rng: &mut R,
) -> Result<ElboGradient> {
    q.check(data)?;
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be at least 1".into()));
    }
    let layout = q.layout();
    let dim = q.dim();
    let mut grad_mu = vec![0.0; dim];
    let mut grad_ls = vec![0.0; dim];
    let mut total = 0.0;
    let mut used = 0usize;
    let mut flat = Vec::with_capacity(dim);
    for _ in 0..n_mc {
        let (v, z) = sample_unconstrained(q, rng);
        let Some((val, grad)) = log_density_at(q, &layout, &v, data, priors, batch) else {
            continue;
        };
        flat.clear();
        layout.flatten_into(&grad, &mut flat);
        layout.chain_rule(&v, &mut flat, q.eta_bounds);
        for c in 0..dim {
            grad_mu[c] += flat[c];
            grad_ls[c] += flat[c] * z[c] * q.log_sigma[c].exp();
        }
        total += val;
        used += 1;
    }
    if used == 0 {
        return Err(Error::numerical(None, "every gradient sample was non-finite"));
    }
    let inv = 1.0 / used as f64;
    grad_mu.iter_mut().for_each(|g| *g *= inv);
    grad_ls.iter_mut().for_each(|g| *g = *g * inv + 1.0);
    Ok(ElboGradient {
        grad_mu,
        grad_log_sigma: grad_ls,
        value: total * inv + q.entropy(),
        skipped: n_mc - used,
    })
}

/// Adam moments for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(dim: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }
}

/// Bias-corrected Adam ascent step. With `active`, only those coordinates
/// (and their moments) change; the step counter is shared.
pub fn adam_step(adam: &mut Adam, params: &mut [f64], grads: &[f64], lr: f64, active: Option<&[usize]>) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient lengths differ");
    assert_eq!(params.len(), adam.m.len(), "parameter and moment lengths differ");
    adam.t += 1;
    let t = adam.t as i32;
    let c1 = 1.0 - adam.beta1.powi(t);
    let c2 = 1.0 - adam.beta2.powi(t);
    let all: Vec<usize>;
    let idx = match active {
        Some(idx) => idx,
        None => {
            all = (0..params.len()).collect();
            &all
        }
    };
    for &c in idx {
        let g = grads[c];
        adam.m[c] = adam.beta1 * adam.m[c] + (1.0 - adam.beta1) * g;
        adam.v[c] = adam.beta2 * adam.v[c] + (1.0 - adam.beta2) * g * g;
        let m_hat = adam.m[c] / c1;
        let v_hat = adam.v[c] / c2;
        params[c] += lr * m_hat / (v_hat.sqrt() + adam.eps);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VbOptions {
    pub lr: f64,
    /// Iterations over which the learning rate halves its square:
    /// `lr_t = lr / sqrt(1 + t / lr_decay)`.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Monte Carlo samples per gradient.
    pub n_mc: usize,
    /// Monte Carlo samples per ELBO evaluation.
    pub n_mc_eval: usize,
    /// Patients per gradient step; `None` uses all.
    pub minibatch: Option<usize>,
    pub eval_every: usize,
    pub rule: StoppingRule,
    pub seed: u64,
    pub init_log_sigma: f64,
}

impl Default for VbOptions {
    fn default() -> Self {
        VbOptions {
            lr: 0.05,
            lr_decay: 1000.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            n_mc: 1,
            n_mc_eval: 8,
            minibatch: None,
            eval_every: 100,
            rule: StoppingRule::default(),
            seed: 1,
            init_log_sigma: -2.0,
        }
    }
}

impl VbOptions {
    pub fn validate(&self) -> Result<()> {
        self.rule.validate()?;
        if !(self.lr > 0.0 && self.lr_decay > 0.0) {
            return Err(Error::Config("lr and lr_decay must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("Adam requires beta1, beta2 in [0, 1) and eps > 0".into()));
        }
        if self.n_mc == 0 || self.n_mc_eval == 0 || self.eval_every == 0 {
            return Err(Error::Config("n_mc, n_mc_eval and eval_every must be at least 1".into()));
        }
        if self.minibatch == Some(0) {
            return Err(Error::Config("minibatch must be at least 1".into()));
        }
        if !self.init_log_sigma.is_finite() {
            return Err(Error::Config("init_log_sigma must be finite".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self, t: usize) -> f64 {
        self.lr / (1.0 + t as f64 / self.lr_decay).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub elbo: f64,
    /// Relative change from the previous evaluation; NaN for the first.
    pub rel_change: f64,
    pub is_best: bool,
}

#[derive(Debug, Clone)]
pub struct VbFit {
    /// The best evaluated iterate.
    pub state: VariationalState,
    pub best_iteration: usize,
    pub best_elbo: f64,
    pub stop_reason: StopReason,
    pub trace: Vec<TraceRecord>,
    /// Iterations actually run.
    pub iterations: usize,
    pub skipped_samples: usize,
    pub reflections: usize,
    pub wall_time_secs: f64,
    pub options: VbOptions,
}

/// ELBO drop (below the first evaluation) treated as divergence.
pub const DIVERGENCE_DROP: f64 = 1e6;

/// Runs stochastic variational inference and returns the best snapshot.
pub fn svi_fit(data: &Dataset, priors: &Priors, options: &VbOptions) -> Result<VbFit> {
    options.validate()?;
    if data.is_empty() {
        return Err(Error::Shape("dataset has no patients".into()));
    }
    let start = Instant::now();
    let n = data.len();
    let mut state = VariationalState::initial(data.shape, n, priors, options.init_log_sigma);
    let n_global = state.layout().n_global();
    let dim = state.dim();
    let mut adam_mu = Adam::new(dim, options.beta1, options.beta2, options.eps);
    let mut adam_ls = Adam::new(dim, options.beta1, options.beta2, options.eps);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(0);
    let evaluate = |q: &VariationalState| -> Result<ElboEstimate> {
        let mut eval_rng = ChaCha8Rng::seed_from_u64(options.seed);
        eval_rng.set_stream(1);
        elbo_estimate_detailed(q, data, priors, options.n_mc_eval, &LikelihoodBatch::full(), &mut eval_rng)
    };

    let mut reflections = 0usize;
    if state.apply_anchor(priors) {
        reflections += 1;
    }
    let mut monitor: ConvergenceMonitor<VariationalState> = ConvergenceMonitor::new(options.rule);
    let first = evaluate(&state)?;
    let mut skipped = first.skipped;
    let initial_elbo = first.value;
    let mut stop = monitor.observe(0, first.value, || state.clone());
    let mut iterations = 0;
    let mut active: Vec<usize> = Vec::new();

    while stop.is_none() {
        let t = iterations + 1;
        let batch = match options.minibatch {
            Some(b) => sample_batch(n, b, &mut rng),
            None => LikelihoodBatch::full(),
        };
        let grad = elbo_gradient(&state, data, priors, options.n_mc, &batch, &mut rng)?;
        skipped += grad.skipped;
        let lr = options.learning_rate(t);
        let active_ref = match &batch.indices {
            None => None,
            Some(idx) => {
                active.clear();
                active.extend(0..n_global);
                active.extend(idx.iter().map(|i| n_global + i));
                Some(active.as_slice())
            }
        };
        adam_step(&mut adam_mu, &mut state.mu, &grad.grad_mu, lr, active_ref);
        adam_step(&mut adam_ls, &mut state.log_sigma, &grad.grad_log_sigma, lr, active_ref);
        iterations = t;
        state.iteration = t;

        if t % options.eval_every == 0 || t >= options.rule.max_iters {
            if state.apply_anchor(priors) {
                reflections += 1;
                adam_mu.reset();
                adam_ls.reset();
            }
            let est = evaluate(&state)?;
            skipped += est.skipped;
            if est.value < initial_elbo - DIVERGENCE_DROP {
                return Err(Error::Divergence(format!(
                    "ELBO fell from {initial_elbo:.3} to {:.3} at iteration {t}; try a smaller learning rate",
                    est.value
                )));
            }
            stop = monitor.observe(t, est.value, || state.clone());
        }
    }

    let stop_reason = stop.expect("loop exits on a stop decision");
    let best_index = monitor.best().map(|b| b.index);
    let trace: Vec<TraceRecord> = monitor
        .trace()
        .iter()
        .enumerate()
        .map(|(i, p)| TraceRecord {
            iteration: p.iteration,
            elbo: p.elbo,
            rel_change: if i == 0 {
                f64::NAN
            } else {
                relative_change(monitor.trace()[i - 1].elbo, p.elbo)
            },
            is_best: Some(i) == best_index,
        })
        .collect();
    let best = monitor
        .into_best()
        .ok_or_else(|| Error::numerical(None, "no finite ELBO evaluation"))?;
    Ok(VbFit {
        state: best.snapshot,
        best_iteration: best.iteration,
        best_elbo: best.elbo,
        stop_reason,
        trace,
        iterations,
        skipped_samples: skipped,
        reflections,
        wall_time_secs: start.elapsed().as_secs_f64(),
        options: options.clone(),
    })
}

/// `n` independent draws `T(mu + sigma∘z)` in constrained space, with the
/// same column names as the sampler's draws.
pub fn vb_posterior_draws<R: Rng + ?Sized>(q: &VariationalState, n: usize, rng: &mut R) -> Result<DrawMatrix> {
    let layout = q.layout();
    let mut out = DrawMatrix::with_capacity(layout.names(), n);
    let mut row = Vec::with_capacity(layout.dim());
    for _ in 0..n {
        let (v, _) = sample_unconstrained(q, rng);
        let point = layout.to_constrained(&v, q.eta_bounds)?;
        row.clear();
        layout.flatten_into(&point.params, &mut row);
        out.push_row(&row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{log_joint, PatientRecord};

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let mut adam = Adam::new(1, 0.9, 0.999, 1e-8);
        let mut p = [0.0];
        adam_step(&mut adam, &mut p, &[0.0], 0.1, None);
        assert_eq!(p, [0.0]);
        let mut adam = Adam::new(1, 0.9, 0.999, 1e-8);
        adam_step(&mut adam, &mut p, &[1.0], 0.1, None);
        assert!((p[0] - 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_respects_active_set() {
        let mut adam = Adam::new(3, 0.9, 0.999, 1e-8);
        let mut p = [0.0; 3];
        adam_step(&mut adam, &mut p, &[1.0, 1.0, 1.0], 0.1, Some(&[0, 2]));
        assert_eq!(p[1], 0.0);
        assert!(p[0] > 0.0 && p[2] > 0.0);
    }

    fn small_data() -> (Dataset, Priors) {
        let shape = ModelShape::new(1, 1, 1, 0).unwrap();
        let recs = vec![
            PatientRecord {
                x: vec![0.5],
                r: vec![true],
                y: vec![1.2],
                w: vec![true],
                p: vec![],
            },
            PatientRecord {
                x: vec![-1.0],
                r: vec![false],
                y: vec![f64::NAN],
                w: vec![false],
                p: vec![],
            },
        ];
        let data = Dataset::new(shape, recs).unwrap();
        let priors = Priors::default_for(&shape);
        (data, priors)
    }

    #[test]
    fn collapsed_family_matches_point_evaluation() {
        let (data, priors) = small_data();
        let mut q = VariationalState::initial(data.shape, data.len(), &priors, (1e-6f64).ln());
        for (i, m) in q.mu.iter_mut().enumerate() {
            *m += 0.1 * i as f64 - 0.4;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let elbo = elbo_estimate(&q, &data, &priors, 16, &mut rng).unwrap();
        let layout = q.layout();
        let point = layout.to_constrained(&q.mu, q.eta_bounds).unwrap();
        let direct = log_joint(&data.records, &point.params, &priors).unwrap() + point.log_jacobian + q.entropy();
        assert!((elbo - direct).abs() < 1e-3, "{elbo} vs {direct}");
    }

    #[test]
    fn collapsed_draws_equal_transformed_mean() {
        let (data, priors) = small_data();
        let q = VariationalState::initial(data.shape, data.len(), &priors, (1e-8f64).ln());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = vb_posterior_draws(&q, 10, &mut rng).unwrap();
        let at_mean = q.layout().flatten(&q.mean_params().unwrap());
        for r in 0..draws.nrows() {
            for (a, b) in draws.row(r).iter().zip(&at_mean) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        let tau = draws.column_index("tau2[0]").unwrap();
        assert!(draws.column(tau).iter().all(|&t| t > 0.0));
    }
}
