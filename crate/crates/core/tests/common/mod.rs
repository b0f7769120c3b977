//! Independent reference computations shared by the integration tests.
//! Nothing here calls the library's likelihood code.

#![allow(dead_code)]

use lcapheno::model::{Dataset, ModelShape, ParamSet, PatientRecord};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn bern(obs: bool, p: f64) -> f64 {
    if obs {
        p
    } else {
        1.0 - p
    }
}

fn lin(x: &[f64], beta: &[f64], d: bool) -> f64 {
    let m = x.len();
    let mut s = beta[0];
    for k in 0..m {
        s += x[k] * beta[k + 1];
    }
    if d {
        s += beta[m + 1];
    }
    s
}

/// `P(record, D_i = d)` in linear space.
pub fn joint_density(rec: &PatientRecord, params: &ParamSet, i: usize, d: bool) -> f64 {
    let mut lp = params.eta[i];
    for (xm, b) in rec.x.iter().zip(&params.beta_d) {
        lp += xm * b;
    }
    let mut f = bern(d, sigmoid(lp));
    for j in 0..rec.r.len() {
        f *= bern(rec.r[j], sigmoid(lin(&rec.x, &params.beta_r[j], d)));
        if rec.r[j] {
            let mu = lin(&rec.x, &params.beta_y[j], d);
            let v = params.tau2[j];
            f *= (-(rec.y[j] - mu).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        }
    }
    for k in 0..rec.w.len() {
        f *= bern(rec.w[k], sigmoid(lin(&rec.x, &params.beta_w[k], d)));
    }
    for l in 0..rec.p.len() {
        f *= bern(rec.p[l], sigmoid(lin(&rec.x, &params.beta_p[l], d)));
    }
    f
}

/// `Σ_{D ∈ {0,1}^n} Π_i P(record_i, D_i)` by explicit enumeration of all
/// class configurations.
pub fn enumerate_likelihood(data: &Dataset, params: &ParamSet) -> f64 {
    let n = data.len();
    assert!(n <= 20, "enumeration is exponential in n");
    let table: Vec<[f64; 2]> = data
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| [joint_density(r, params, i, false), joint_density(r, params, i, true)])
        .collect();
    let mut total = 0.0;
    for config in 0u32..(1u32 << n) {
        let mut prod = 1.0;
        for (i, t) in table.iter().enumerate() {
            prod *= t[((config >> i) & 1) as usize];
        }
        total += prod;
    }
    total
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// A random shape, cohort of `n` patients and parameter set with moderate
/// values.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (Dataset, ParamSet) {
    let shape = loop {
        let (m, j, k, l) = (
            rng.random_range(0..3),
            rng.random_range(0..3),
            rng.random_range(0..3),
            rng.random_range(0..3),
        );
        if let Ok(s) = ModelShape::new(m, j, k, l) {
            break s;
        }
    };
    let c = shape.coef_len();
    let coefs = |count: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..count).map(|_| (0..c).map(|_| normal(rng)).collect()).collect()
    };
    let params = ParamSet {
        beta_d: (0..shape.m).map(|_| normal(rng)).collect(),
        beta_r: coefs(shape.j, rng),
        beta_y: coefs(shape.j, rng),
        tau2: (0..shape.j).map(|_| rng.random_range(0.3..2.0)).collect(),
        beta_w: coefs(shape.k, rng),
        beta_p: coefs(shape.l, rng),
        eta: (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
    };
    let records = (0..n)
        .map(|_| {
            let r: Vec<bool> = (0..shape.j).map(|_| rng.random_bool(0.7)).collect();
            PatientRecord {
                x: (0..shape.m).map(|_| normal(rng)).collect(),
                y: r.iter().map(|&a| if a { 2.0 * normal(rng) } else { f64::NAN }).collect(),
                r,
                w: (0..shape.k).map(|_| rng.random_bool(0.4)).collect(),
                p: (0..shape.l).map(|_| rng.random_bool(0.4)).collect(),
            }
        })
        .collect();
    (Dataset::new(shape, records).unwrap(), params)
}

/// Composite Simpson weights for `n` (odd) equally spaced nodes on `[lo, hi]`.
pub fn simpson(lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 3 && n % 2 == 1);
    let h = (hi - lo) / (n - 1) as f64;
    let nodes = (0..n).map(|i| lo + i as f64 * h).collect();
    let weights = (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect();
    (nodes, weights)
}

/// Posterior means of `(β₀, β₁, η_1, …, η_n)` for a single-code model with no
/// covariates, prior `β ~ N(mu, diag(var))` and `η_i ~ Unif(a, b)`, by dense
/// quadrature. The `η_i` integrals factor per patient and are done on a
/// fine 1-D grid; `β` on a 2-D grid.
pub fn single_code_posterior_means(w: &[bool], mu: [f64; 2], var: [f64; 2], bounds: (f64, f64)) -> Vec<f64> {
    let (a, b) = bounds;
    let (eta, ew) = simpson(a, b, 4001);
    // ∫ σ(η) dη, ∫ η σ(η) dη, ∫ η dη, b − a
    let i1: f64 = eta.iter().zip(&ew).map(|(e, w)| w * sigmoid(*e)).sum();
    let j1: f64 = eta.iter().zip(&ew).map(|(e, w)| w * e * sigmoid(*e)).sum();
    let j0 = 0.5 * (b * b - a * a);
    let len = b - a;

    let half = 8.0;
    let (g0, w0) = simpson(mu[0] - half * var[0].sqrt(), mu[0] + half * var[0].sqrt(), 801);
    let (g1, w1) = simpson(mu[1] - half * var[1].sqrt(), mu[1] + half * var[1].sqrt(), 801);
    let n = w.len();
    let mut z = 0.0;
    let mut m = vec![0.0; 2 + n];
    let mut per_patient = vec![(0.0, 0.0); n];
    for (x0, q0) in g0.iter().zip(&w0) {
        for (x1, q1) in g1.iter().zip(&w1) {
            let prior = (-(x0 - mu[0]).powi(2) / (2.0 * var[0]) - (x1 - mu[1]).powi(2) / (2.0 * var[1])).exp();
            let mut lik = 1.0;
            for (i, &obs) in w.iter().enumerate() {
                let f1 = bern(obs, sigmoid(x0 + x1));
                let f0 = bern(obs, sigmoid(*x0));
                // ∫ [σ(η) f1 + (1 − σ(η)) f0] dη / (b − a) and the η-weighted version
                let h = (f1 * i1 + f0 * (len - i1)) / len;
                let g = (f1 * j1 + f0 * (j0 - j1)) / len;
                per_patient[i] = (h, g);
                lik *= h;
            }
            let wt = q0 * q1 * prior * lik;
            z += wt;
            m[0] += wt * x0;
            m[1] += wt * x1;
            for (i, &(h, g)) in per_patient.iter().enumerate() {
                m[2 + i] += wt * g / h;
            }
        }
    }
    m.iter().map(|v| v / z).collect()
}

/// Draws from a generalized Pareto with location 0 by inversion.
pub fn gpd_draws(k: f64, sigma: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            if k.abs() < 1e-12 {
                -sigma * (1.0 - u).ln()
            } else {
                sigma * ((1.0 - u).powf(-k) - 1.0) / k
            }
        })
        .collect()
}
