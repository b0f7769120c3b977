//! Metropolis-within-Gibbs sampler over `(D, η, β, τ²)`.
//!
//! Each iteration redraws every `D_i` from its full conditional, updates each
//! `η_i` by a random walk on the logit scale, proposes each coefficient block
//! with a (preconditioned) random walk, and draws every `τ²_j` from its
//! inverse-gamma conditional. Step sizes adapt during warmup only.

mod steps;

pub use steps::{
    biomarker_residuals, channel_loglik, inv_gamma_posterior, sample_inv_gamma, step_beta_block, step_d,
    step_eta, step_tau, tau_posterior, BlockProposal, GibbsState,
};

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::draws::DrawMatrix;
use crate::error::{Error, Result};
use crate::model::{class_posterior, log_joint, Block, Dataset, ParamLayout, ParamSet, Priors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GibbsOptions {
    pub chains: usize,
    /// Total iterations per chain, warmup included.
    pub iters: usize,
    pub warmup: usize,
    pub thin: usize,
    pub seed: u64,
    /// Initial random-walk scale of every coefficient block.
    pub initial_step: f64,
    /// Initial random-walk scale of `η` on the logit scale.
    pub initial_eta_step: f64,
    pub adapt_target: f64,
    /// Standard deviation of the initial perturbation of coefficients and
    /// `ln τ²`; spreads chains apart.
    pub jitter: f64,
    /// Record the per-patient `η_i` columns.
    pub keep_eta: bool,
    /// Worker threads for running chains; `None` uses the available cores.
    pub threads: Option<usize>,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        GibbsOptions {
            chains: 3,
            iters: 4000,
            warmup: 1000,
            thin: 1,
            seed: 1,
            initial_step: 0.1,
            initial_eta_step: 1.0,
            adapt_target: 0.30,
            jitter: 0.5,
            keep_eta: true,
            threads: None,
        }
    }
}

impl GibbsOptions {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if self.warmup >= self.iters {
            return Err(Error::Config(format!(
                "warmup ({}) must be smaller than iters ({})",
                self.warmup, self.iters
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return Err(Error::Config("adapt_target must lie in (0, 1)".into()));
        }
        if !(self.initial_step >= 0.0 && self.initial_eta_step >= 0.0 && self.jitter >= 0.0) {
            return Err(Error::Config("step sizes and jitter must be non-negative".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Kept draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        (self.iters - self.warmup) / self.thin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    /// Block name, e.g. `beta_w[0]`, or `eta`.
    pub block: String,
    pub warmup_rate: f64,
    pub sampling_rate: f64,
    /// Step size in force after warmup.
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct Chain {
    /// Kept draws in constrained space.
    pub draws: DrawMatrix,
    /// Marginal `ln p(data, θ)` at every kept draw.
    pub log_joint: Vec<f64>,
    pub acceptance: Vec<Acceptance>,
    /// Step sizes in force at every kept draw; one column per block plus `eta`.
    pub step_trace: DrawMatrix,
    /// Number of anchor-sign relabellings performed.
    pub reflections: u64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct ChainDraws {
    pub layout: ParamLayout,
    pub options: GibbsOptions,
    pub chains: Vec<Chain>,
}

impl ChainDraws {
    pub fn total_wall_time_secs(&self) -> f64 {
        self.chains.iter().map(|c| c.wall_time_secs).sum()
    }

    /// Draw matrices of all chains.
    pub fn matrices(&self) -> Vec<&DrawMatrix> {
        self.chains.iter().map(|c| &c.draws).collect()
    }
}

/// Robbins–Monro log-step adaptation with covariance preconditioning for one
/// block. The step frozen at the end of warmup is the average of the iterates
/// since the last reset, not the last (noisy) iterate.
struct Adapter {
    dim: usize,
    log_step: f64,
    chol: Option<Vec<f64>>,
    since_reset: usize,
    log_step_sum: f64,
    averaged: usize,
    samples: Vec<f64>,
}

/// Updates after a reset that are left out of the average.
const AVERAGE_BURN: usize = 50;

impl Adapter {
    fn new(dim: usize, step: f64) -> Self {
        Adapter {
            dim,
            log_step: step.ln(),
            chol: None,
            since_reset: 0,
            log_step_sum: 0.0,
            averaged: 0,
            samples: Vec::new(),
        }
    }

    fn proposal(&self) -> BlockProposal {
        BlockProposal {
            step: self.log_step.exp(),
            chol: self.chol.clone(),
        }
    }

    fn update(&mut self, accept_rate: f64, target: f64) {
        let gain = 2.0 / (self.since_reset as f64 + 10.0).powf(0.6);
        self.log_step = (self.log_step + gain * (accept_rate - target)).clamp(-12.0, 3.0);
        self.since_reset += 1;
        if self.since_reset > AVERAGE_BURN {
            self.log_step_sum += self.log_step;
            self.averaged += 1;
        }
    }

    /// Ends adaptation at the averaged step.
    fn freeze(&mut self) {
        if self.averaged > 0 {
            self.log_step = self.log_step_sum / self.averaged as f64;
        }
    }

    fn record(&mut self, coefs: &[f64]) {
        self.samples.extend_from_slice(coefs);
    }

    /// Replaces the preconditioner by the Cholesky factor of the empirical
    /// covariance of the samples recorded since the last call.
    fn precondition(&mut self) {
        let dim = self.dim;
        let n = self.samples.len() / dim.max(1);
        if dim == 0 || n < 2 * dim + 2 {
            self.samples.clear();
            return;
        }
        let x = DMatrix::from_row_slice(n, dim, &self.samples);
        self.samples.clear();
        let mean = x.row_mean();
        let centered = DMatrix::from_fn(n, dim, |r, c| x[(r, c)] - mean[c]);
        let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let ridge = 1e-10 * (cov.trace() / dim as f64).max(1e-300);
        for d in 0..dim {
            cov[(d, d)] += ridge;
        }
        if let Some(ch) = cov.cholesky() {
            let l = ch.l();
            let mut flat = vec![0.0; dim * dim];
            for r in 0..dim {
                for c in 0..=r {
                    flat[r * dim + c] = l[(r, c)];
                }
            }
            if flat.iter().all(|v| v.is_finite()) {
                self.chol = Some(flat);
                self.log_step = (2.38 / (dim as f64).sqrt()).ln();
                self.since_reset = 0;
                self.log_step_sum = 0.0;
                self.averaged = 0;
            }
        }
    }
}

struct Counter {
    accepted: u64,
    proposed: u64,
}

impl Counter {
    fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Initial parameters: prior means, `τ² = 1`, `η` at the centre of its
/// interval, then jittered.
fn initial_params<R: Rng + ?Sized>(data: &Dataset, priors: &Priors, jitter: f64, rng: &mut R) -> ParamSet {
    let shape = &data.shape;
    let (a, b) = priors.eta_bounds();
    let mut params = ParamSet::zeros(shape, data.len());
    for block in Block::all(shape) {
        let mean = priors.block(block).mean().to_vec();
        *block.coefs_mut(&mut params) = mean;
    }
    params.eta.iter_mut().for_each(|e| *e = 0.5 * (a + b));
    if jitter > 0.0 {
        for block in Block::all(shape) {
            for v in block.coefs_mut(&mut params).iter_mut() {
                *v += jitter * rng.sample::<f64, _>(StandardNormal);
            }
        }
        for t in &mut params.tau2 {
            *t *= (jitter * rng.sample::<f64, _>(StandardNormal)).exp();
        }
    }
    params
}

fn anchor_negative(params: &ParamSet, priors: &Priors, li: usize) -> bool {
    match priors.anchor() {
        Some(j) => params.beta_y[j][li] < 0.0,
        None => false,
    }
}

/// Runs one chain. `chain` selects the RNG stream.
pub fn run_chain(data: &Dataset, priors: &Priors, options: &GibbsOptions, chain: usize) -> Result<Chain> {
    options.validate()?;
    let start = Instant::now();
    let shape = data.shape;
    let li = shape.latent_index();
    let bounds = priors.eta_bounds();
    // Label switching is an exact symmetry only for symmetric η bounds.
    let reflectable = (bounds.0 + bounds.1).abs() < 1e-12;
    let mut rng = chain_rng(options.seed, chain);

    let params = initial_params(data, priors, options.jitter, &mut rng);
    let mut d = Vec::with_capacity(data.len());
    for (i, rec) in data.records.iter().enumerate() {
        let p = class_posterior(rec, &params, i)
            .map_err(|e| Error::Init(format!("{e}; try a different seed or a smaller jitter")))?;
        d.push(rng.random::<f64>() < p);
    }
    let lj0 = log_joint(&data.records, &params, priors)?;
    if !lj0.is_finite() {
        return Err(Error::Init(format!(
            "initial log joint is {lj0} for chain {chain}; try a different seed or a smaller jitter"
        )));
    }
    let mut state = GibbsState::new(data, params, d)?;
    if reflectable && anchor_negative(&state.params, priors, li) {
        state.reflect(data, bounds);
    }

    let blocks = Block::all(&shape);
    let mut adapters: Vec<Adapter> = blocks
        .iter()
        .map(|b| Adapter::new(b.coefs(&state.params).len(), options.initial_step))
        .collect();
    let mut eta_adapter = Adapter::new(1, options.initial_eta_step);
    let mut counts: Vec<[Counter; 2]> = (0..=blocks.len())
        .map(|_| {
            [
                Counter { accepted: 0, proposed: 0 },
                Counter { accepted: 0, proposed: 0 },
            ]
        })
        .collect();

    let layout = if options.keep_eta {
        ParamLayout::new(shape, data.len())
    } else {
        ParamLayout::without_eta(shape, data.len())
    };
    let n_keep = options.draws_per_chain();
    let mut draws = DrawMatrix::with_capacity(layout.names(), n_keep);
    let mut step_names: Vec<String> = blocks.iter().map(|b| b.name()).collect();
    step_names.push("eta".into());
    let mut step_trace = DrawMatrix::with_capacity(step_names, n_keep);
    let mut log_joints = Vec::with_capacity(n_keep);
    let mut reflections = 0u64;
    let milestones = if options.warmup >= 100 {
        vec![options.warmup / 4, options.warmup / 2, 3 * options.warmup / 4]
    } else {
        Vec::new()
    };
    let mut row = Vec::with_capacity(layout.dim());

    for it in 0..options.iters {
        let warm = it < options.warmup;
        let phase = usize::from(!warm);
        steps::sweep_d(&mut state, data, &mut rng)?;

        let eta_step = eta_adapter.log_step.exp();
        let mut eta_acc = 0u64;
        for i in 0..data.len() {
            eta_acc += u64::from(step_eta(i, &mut state, data, priors, eta_step, &mut rng));
        }
        let eta_count = &mut counts[blocks.len()][phase];
        eta_count.accepted += eta_acc;
        eta_count.proposed += data.len() as u64;

        for (b, block) in blocks.iter().enumerate() {
            let proposal = adapters[b].proposal();
            let acc = step_beta_block(*block, &mut state, data, priors, &proposal, &mut rng);
            counts[b][phase].accepted += u64::from(acc);
            counts[b][phase].proposed += 1;
            if warm {
                adapters[b].update(f64::from(u8::from(acc)), options.adapt_target);
            }
        }
        for j in 0..shape.j {
            step_tau(j, &mut state, data, priors, &mut rng);
        }
        if reflectable && anchor_negative(&state.params, priors, li) {
            state.reflect(data, bounds);
            reflections += 1;
        }

        if warm {
            if !data.is_empty() {
                eta_adapter.update(eta_acc as f64 / data.len() as f64, options.adapt_target);
            }
            for (b, block) in blocks.iter().enumerate() {
                adapters[b].record(block.coefs(&state.params));
            }
            if milestones.contains(&(it + 1)) {
                adapters.iter_mut().for_each(Adapter::precondition);
            }
            if it + 1 == options.warmup {
                adapters.iter_mut().for_each(Adapter::freeze);
                eta_adapter.freeze();
            }
            continue;
        }
        if (it + 1 - options.warmup) % options.thin == 0 {
            row.clear();
            layout.flatten_into(&state.params, &mut row);
            draws.push_row(&row);
            row.clear();
            row.extend(adapters.iter().map(|a| a.log_step.exp()));
            row.push(eta_adapter.log_step.exp());
            step_trace.push_row(&row);
            log_joints.push(log_joint(&data.records, &state.params, priors)?);
        }
    }

    let mut acceptance: Vec<Acceptance> = blocks
        .iter()
        .enumerate()
        .map(|(b, block)| Acceptance {
            block: block.name(),
            warmup_rate: counts[b][0].rate(),
            sampling_rate: counts[b][1].rate(),
            step: adapters[b].log_step.exp(),
        })
        .collect();
    acceptance.push(Acceptance {
        block: "eta".into(),
        warmup_rate: counts[blocks.len()][0].rate(),
        sampling_rate: counts[blocks.len()][1].rate(),
        step: eta_adapter.log_step.exp(),
    });

    Ok(Chain {
        draws,
        log_joint: log_joints,
        acceptance,
        step_trace,
        reflections,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Runs all chains, concurrently when more than one worker thread is
/// available. Output does not depend on the number of threads.
pub fn gibbs_fit(data: &Dataset, priors: &Priors, options: &GibbsOptions) -> Result<ChainDraws> {
    options.validate()?;
    if data.is_empty() {
        return Err(Error::Shape("dataset has no patients".into()));
    }
    let threads = options
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .min(options.chains)
        .max(1);
    let mut results: Vec<Option<Result<Chain>>> = (0..options.chains).map(|_| None).collect();
    if threads == 1 {
        for (c, slot) in results.iter_mut().enumerate() {
            *slot = Some(run_chain(data, priors, options, c));
        }
    } else {
        for batch in (0..options.chains).collect::<Vec<_>>().chunks(threads) {
            let outs: Vec<(usize, Result<Chain>)> = std::thread::scope(|scope| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|&c| scope.spawn(move || (c, run_chain(data, priors, options, c))))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("chain thread panicked"))
                    .collect()
            });
            for (c, r) in outs {
                results[c] = Some(r);
            }
        }
    }
    let chains = results
        .into_iter()
        .map(|r| r.expect("every chain ran"))
        .collect::<Result<Vec<_>>>()?;
    let layout = if options.keep_eta {
        ParamLayout::new(data.shape, data.len())
    } else {
        ParamLayout::without_eta(data.shape, data.len())
    };
    Ok(ChainDraws {
        layout,
        options: options.clone(),
        chains,
    })
}
