use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::ModelShape;
use crate::error::{Error, Result};
use crate::math::LN_2PI;

const DEFAULT_PRIOR_SD: f64 = 2.5;

/// Prior hyperparameters as they appear in the model JSON document.
///
/// Channel means are shared across the channels of a kind (one `mu_r` for
/// every availability model, and so on). Covariances are dense row-major
/// matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub sigma_d: Vec<Vec<f64>>,
    pub mu_r: Vec<f64>,
    pub sigma_r: Vec<Vec<f64>>,
    pub mu_y: Vec<f64>,
    pub sigma_y: Vec<Vec<f64>>,
    pub mu_w: Vec<f64>,
    pub sigma_w: Vec<Vec<f64>>,
    pub mu_p: Vec<f64>,
    pub sigma_p: Vec<Vec<f64>>,
    pub eta_bounds: (f64, f64),
    pub tau_shape: f64,
    pub tau_rate: f64,
    /// Biomarker whose latent shift is constrained positive to fix the class
    /// labels (`D = 1` is the class with the higher anchor mean). `None`
    /// disables the constraint.
    #[serde(default = "default_anchor")]
    pub anchor_biomarker: Option<usize>,
}

fn default_anchor() -> Option<usize> {
    Some(0)
}

fn diag(dim: usize, var: f64) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|r| (0..dim).map(|c| if r == c { var } else { 0.0 }).collect())
        .collect()
}

impl PriorSpec {
    /// Weakly informative defaults for standardized data: zero means, diagonal
    /// covariance `2.5²`, a `+1` prior mean on every biomarker latent shift,
    /// `η ~ Unif(−3, 3)` and `τ² ~ InvGamma(0.1, 0.1)`.
    pub fn default_for(shape: &ModelShape) -> Self {
        let c = shape.coef_len();
        let var = DEFAULT_PRIOR_SD * DEFAULT_PRIOR_SD;
        let mut mu_y = vec![0.0; c];
        mu_y[shape.latent_index()] = 1.0;
        PriorSpec {
            sigma_d: diag(shape.m, var),
            mu_r: vec![0.0; c],
            sigma_r: diag(c, var),
            mu_y,
            sigma_y: diag(c, var),
            mu_w: vec![0.0; c],
            sigma_w: diag(c, var),
            mu_p: vec![0.0; c],
            sigma_p: diag(c, var),
            eta_bounds: (-3.0, 3.0),
            tau_shape: 0.1,
            tau_rate: 0.1,
            anchor_biomarker: if shape.j > 0 { Some(0) } else { None },
        }
    }
}

/// Multivariate normal with a precomputed precision matrix.
#[derive(Debug, Clone)]
pub struct Mvn {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
}

impl Mvn {
    pub fn new(mean: &[f64], cov: &[Vec<f64>], what: &str) -> Result<Self> {
        let dim = mean.len();
        if cov.len() != dim || cov.iter().any(|row| row.len() != dim) {
            return Err(Error::Config(format!(
                "{what}: covariance must be {dim}x{dim} to match its mean"
            )));
        }
        let m = DMatrix::from_fn(dim, dim, |r, c| cov[r][c]);
        for r in 0..dim {
            for c in 0..r {
                if (m[(r, c)] - m[(c, r)]).abs() > 1e-12 * (1.0 + m[(r, c)].abs()) {
                    return Err(Error::Config(format!("{what}: covariance is not symmetric")));
                }
            }
        }
        if m.iter().any(|v| !v.is_finite()) || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("{what}: non-finite hyperparameter")));
        }
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Config(format!("{what}: covariance is not positive definite")))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Mvn {
            mean: DVector::from_column_slice(mean),
            precision: chol.inverse(),
            log_norm: -0.5 * (dim as f64 * LN_2PI + log_det),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        let dim = self.dim();
        let mut quad = 0.0;
        for r in 0..dim {
            let dr = x[r] - self.mean[r];
            for c in 0..dim {
                quad += dr * self.precision[(r, c)] * (x[c] - self.mean[c]);
            }
        }
        self.log_norm - 0.5 * quad
    }

    /// Adds `∇ ln p(x) = −Σ⁻¹(x − μ)` into `grad`.
    pub fn add_grad(&self, x: &[f64], grad: &mut [f64]) {
        let dim = self.dim();
        for r in 0..dim {
            let mut acc = 0.0;
            for c in 0..dim {
                acc += self.precision[(r, c)] * (x[c] - self.mean[c]);
            }
            grad[r] -= acc;
        }
    }
}

/// Validated priors ready for density evaluation.
#[derive(Debug, Clone)]
pub struct Priors {
    pub spec: PriorSpec,
    pub beta_d: Mvn,
    pub beta_r: Mvn,
    pub beta_y: Mvn,
    pub beta_w: Mvn,
    pub beta_p: Mvn,
    ln_gamma_shape: f64,
}

impl Priors {
    pub fn new(spec: PriorSpec, shape: &ModelShape) -> Result<Self> {
        let c = shape.coef_len();
        let check_len = |v: &[f64], what: &str| {
            if v.len() != c {
                Err(Error::Config(format!("{what} must have length M + 2 = {c}")))
            } else {
                Ok(())
            }
        };
        check_len(&spec.mu_r, "mu_r")?;
        check_len(&spec.mu_y, "mu_y")?;
        check_len(&spec.mu_w, "mu_w")?;
        check_len(&spec.mu_p, "mu_p")?;
        let (a, b) = spec.eta_bounds;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::Config(format!("eta_bounds must satisfy a < b, got ({a}, {b})")));
        }
        if !(spec.tau_shape > 0.0 && spec.tau_rate > 0.0) {
            return Err(Error::Config("tau_shape and tau_rate must be positive".into()));
        }
        if let Some(anchor) = spec.anchor_biomarker {
            if anchor >= shape.j {
                return Err(Error::Config(format!(
                    "anchor_biomarker {anchor} out of range for J = {}",
                    shape.j
                )));
            }
        }
        let zeros = vec![0.0; shape.m];
        Ok(Priors {
            beta_d: Mvn::new(&zeros, &spec.sigma_d, "sigma_d")?,
            beta_r: Mvn::new(&spec.mu_r, &spec.sigma_r, "sigma_r")?,
            beta_y: Mvn::new(&spec.mu_y, &spec.sigma_y, "sigma_y")?,
            beta_w: Mvn::new(&spec.mu_w, &spec.sigma_w, "sigma_w")?,
            beta_p: Mvn::new(&spec.mu_p, &spec.sigma_p, "sigma_p")?,
            ln_gamma_shape: ln_gamma(spec.tau_shape),
            spec,
        })
    }

    pub fn default_for(shape: &ModelShape) -> Self {
        Priors::new(PriorSpec::default_for(shape), shape).expect("default priors are valid")
    }

    /// Prior of a coefficient block.
    pub fn block(&self, block: super::Block) -> &Mvn {
        match block {
            super::Block::LatentClass => &self.beta_d,
            super::Block::Availability(_) => &self.beta_r,
            super::Block::Biomarker(_) => &self.beta_y,
            super::Block::Code(_) => &self.beta_w,
            super::Block::Medication(_) => &self.beta_p,
        }
    }

    pub fn eta_bounds(&self) -> (f64, f64) {
        self.spec.eta_bounds
    }

    pub fn anchor(&self) -> Option<usize> {
        self.spec.anchor_biomarker
    }

    /// `ln InvGamma(τ²; c, d)`; `−∞` outside the support.
    pub fn tau2_ln_pdf(&self, tau2: f64) -> f64 {
        if tau2 <= 0.0 || !tau2.is_finite() {
            return f64::NEG_INFINITY;
        }
        let (c, d) = (self.spec.tau_shape, self.spec.tau_rate);
        c * d.ln() - self.ln_gamma_shape - (c + 1.0) * tau2.ln() - d / tau2
    }

    /// `ln Unif(η; a, b)`; `−∞` outside the open interval.
    pub fn eta_ln_pdf(&self, eta: f64) -> f64 {
        let (a, b) = self.spec.eta_bounds;
        if eta > a && eta < b {
            -(b - a).ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}
