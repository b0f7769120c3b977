mod common;

use lcapheno::data::Standardization;
use lcapheno::diagnostics::{ess_values, pointwise_loglik};
use lcapheno::draws::DrawMatrix;
use lcapheno::gibbs::{gibbs_fit, step_d, step_eta, GibbsOptions, GibbsState};
use lcapheno::model::{
    derived_quantities, log_likelihood_patients, Dataset, LikelihoodBatch, ModelShape, ParamSet, PatientRecord,
    PriorSpec, Priors,
};
use lcapheno::synth::{generate_cohort, SynthConfig};
use lcapheno::vb::{elbo_estimate_detailed, VariationalState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_fit_inputs(n: usize, seed: u64) -> (Dataset, Priors) {
    let cohort = generate_cohort(&SynthConfig {
        n,
        seed,
        ..Default::default()
    })
    .unwrap();
    let data = Standardization::fit(&cohort.dataset).apply(&cohort.dataset);
    let mut spec = PriorSpec::default_for(&data.shape);
    spec.eta_bounds = cohort.truth.model_eta_bounds();
    let priors = Priors::new(spec, &data.shape).unwrap();
    (data, priors)
}

#[test]
fn eta_is_uniform_without_data_influence() {
    let shape = ModelShape::new(0, 0, 1, 0).unwrap();
    let rec = PatientRecord {
        x: vec![],
        r: vec![],
        y: vec![],
        w: vec![true],
        p: vec![],
    };
    let data = Dataset::new(shape, vec![rec.clone()]).unwrap();
    let priors = Priors::default_for(&shape);
    let (a, b) = priors.eta_bounds();
    let params = ParamSet::zeros(&shape, 1);
    let mut state = GibbsState::new(&data, params, vec![false]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 100_000;
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        state.d[0] = step_d(&rec, &state.params, 0, &mut rng).unwrap();
        state.refresh_caches(&data);
        step_eta(0, &mut state, &data, &priors, 2.0, &mut rng);
        xs.push(state.params.eta[0]);
    }
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = (x - a) / (b - a);
            (f - i as f64 / n as f64).abs().max((f - (i + 1) as f64 / n as f64).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS statistic {ks}");
}

#[test]
fn draws_respect_support_and_counts_and_steps_freeze() {
    let (data, priors) = small_fit_inputs(150, 5);
    let options = GibbsOptions {
        chains: 2,
        iters: 1200,
        warmup: 400,
        thin: 2,
        seed: 8,
        ..Default::default()
    };
    let fit = gibbs_fit(&data, &priors, &options).unwrap();
    let (a, b) = priors.eta_bounds();
    for chain in &fit.chains {
        assert_eq!(chain.draws.nrows(), 400);
        assert_eq!(chain.log_joint.len(), 400);
        for r in 0..chain.draws.nrows() {
            let p = fit.layout.unflatten(chain.draws.row(r)).unwrap();
            assert!(p.tau2.iter().all(|&t| t > 0.0));
            assert!(p.eta.iter().all(|&e| e > a && e < b));
        }
        for c in 0..chain.step_trace.ncols() {
            let col = chain.step_trace.column(c);
            assert!(col.iter().all(|&s| s == col[0]), "step size moved after warmup");
        }
    }
}

#[test]
fn adapted_acceptance_is_near_target() {
    let (data, priors) = small_fit_inputs(1000, 42);
    let options = GibbsOptions {
        chains: 1,
        iters: 2500,
        warmup: 1000,
        seed: 3,
        ..Default::default()
    };
    let fit = gibbs_fit(&data, &priors, &options).unwrap();
    for acc in &fit.chains[0].acceptance {
        assert!(
            (acc.sampling_rate - options.adapt_target).abs() <= 0.1,
            "{}: {:.3}",
            acc.block,
            acc.sampling_rate
        );
    }
}

#[test]
fn same_seed_is_reproducible_for_any_thread_count() {
    let (data, priors) = small_fit_inputs(80, 6);
    let base = GibbsOptions {
        chains: 3,
        iters: 300,
        warmup: 100,
        seed: 12,
        ..Default::default()
    };
    let one = gibbs_fit(&data, &priors, &GibbsOptions { threads: Some(1), ..base.clone() }).unwrap();
    let again = gibbs_fit(&data, &priors, &GibbsOptions { threads: Some(1), ..base.clone() }).unwrap();
    let three = gibbs_fit(&data, &priors, &GibbsOptions { threads: Some(3), ..base }).unwrap();
    for ((x, y), z) in one.chains.iter().zip(&again.chains).zip(&three.chains) {
        assert_eq!(x.draws.csv_bytes(), y.draws.csv_bytes());
        for r in 0..x.draws.nrows() {
            assert_eq!(x.draws.row(r), y.draws.row(r));
            assert_eq!(x.draws.row(r), z.draws.row(r));
        }
    }
}

fn derived_means(data: &Dataset, priors: &Priors, seed: u64) -> Vec<(String, f64, f64)> {
    let fit = gibbs_fit(
        data,
        priors,
        &GibbsOptions {
            chains: 2,
            iters: 3000,
            warmup: 1000,
            seed,
            keep_eta: false,
            ..Default::default()
        },
    )
    .unwrap();
    let labels = Default::default();
    let mut cols: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for (c, chain) in fit.chains.iter().enumerate() {
        for r in 0..chain.draws.nrows() {
            let params = fit.layout.unflatten(chain.draws.row(r)).unwrap();
            let rep = derived_quantities(&data.shape, &labels, &params, None, None);
            if cols.is_empty() {
                cols = rep
                    .quantities
                    .iter()
                    .map(|q| (q.key.clone(), vec![Vec::new(); fit.chains.len()]))
                    .collect();
            }
            for (q, (_, per_chain)) in rep.quantities.iter().zip(cols.iter_mut()) {
                per_chain[c].push(q.value);
            }
        }
    }
    cols.into_iter()
        .map(|(k, per_chain)| {
            let refs: Vec<&[f64]> = per_chain.iter().map(Vec::as_slice).collect();
            let all: Vec<f64> = per_chain.concat();
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (all.len() - 1) as f64;
            let ess = ess_values(&refs).unwrap().unwrap();
            (k, mean, (var / ess).sqrt())
        })
        .collect()
}

#[test]
fn patient_order_does_not_change_summaries() {
    let (data, priors) = small_fit_inputs(400, 14);
    let mut reversed = data.clone();
    reversed.records.reverse();
    let a = derived_means(&data, &priors, 1);
    let b = derived_means(&reversed, &priors, 2);
    for ((k, ma, sa), (_, mb, sb)) in a.iter().zip(&b) {
        let se = (sa * sa + sb * sb).sqrt();
        assert!((ma - mb).abs() <= 3.0 * se, "{k}: {ma:.4} vs {mb:.4} (se {se:.4})");
    }
}

#[test]
fn pointwise_loglik_matches_direct_evaluation() {
    let (data, priors) = small_fit_inputs(60, 2);
    let fit = gibbs_fit(
        &data,
        &priors,
        &GibbsOptions {
            chains: 1,
            iters: 300,
            warmup: 100,
            ..Default::default()
        },
    )
    .unwrap();
    let draws: &DrawMatrix = &fit.chains[0].draws;
    let ll = pointwise_loglik(draws, &fit.layout, &data).unwrap();
    assert_eq!((ll.draws, ll.patients), (200, 60));
    for s in [0, 57, 199] {
        let params = fit.layout.unflatten(draws.row(s)).unwrap();
        let direct = log_likelihood_patients(&data.records, &params).unwrap();
        assert_eq!(ll.row(s), direct.as_slice());
        let total: f64 = data
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                (common::joint_density(r, &params, i, false) + common::joint_density(r, &params, i, true)).ln()
            })
            .sum();
        let row_sum: f64 = ll.row(s).iter().sum();
        assert!((row_sum - total).abs() < 1e-8 * total.abs(), "{row_sum} vs {total}");
    }
}

#[test]
fn minibatch_elbo_is_unbiased() {
    let (data, priors) = small_fit_inputs(200, 4);
    let mut q = VariationalState::initial(data.shape, data.len(), &priors, -1.5);
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let reps = 200;
    let (mut full, mut mini) = (Vec::new(), Vec::new());
    q.mu.iter_mut().enumerate().for_each(|(c, m)| *m += 0.01 * (c % 7) as f64);
    for _ in 0..reps {
        full.push(
            elbo_estimate_detailed(&q, &data, &priors, 2, &LikelihoodBatch::full(), &mut rng)
                .unwrap()
                .value,
        );
        let batch = lcapheno::vb::sample_batch(data.len(), 40, &mut rng);
        mini.push(elbo_estimate_detailed(&q, &data, &priors, 2, &batch, &mut rng).unwrap().value);
    }
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        (m, var / v.len() as f64)
    };
    let (mf, vf) = stats(&full);
    let (mm, vm) = stats(&mini);
    assert!((mf - mm).abs() <= 3.0 * (vf + vm).sqrt(), "full {mf} minibatch {mm}");
}
