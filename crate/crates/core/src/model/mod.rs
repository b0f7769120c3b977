//! Data types of the two-class latent phenotype model.
//!
//! Every observed channel (biomarker availability `r`, biomarker value `y`,
//! clinical code `w`, medication `p`) is regressed on the design row
//! `(1, x_1..x_M, d)`, so each channel coefficient vector has length `M + 2`
//! ordered as (intercept, covariates, latent-class coefficient). The latent
//! class `D_i` itself follows `Bernoulli(expit(x_i·β_D + η_i))` with no
//! separate intercept.

mod derived;
mod gradient;
pub(crate) mod likelihood;
mod priors;
mod transform;

pub use derived::{derived_quantities, DerivedQuantity, DerivedReport, QuantityKind};
pub use gradient::{log_joint_grad, LikelihoodBatch};
pub use likelihood::{
    class_log_terms, class_posterior, linear_predictor, log_joint, log_likelihood_patients,
    log_marginal_patient, log_prior,
};
pub use priors::{Mvn, PriorSpec, Priors};
pub use transform::{ParamLayout, TransformedPoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts of covariates and observed channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
}

impl ModelShape {
    pub fn new(m: usize, j: usize, k: usize, l: usize) -> Result<Self> {
        let shape = ModelShape { m, j, k, l };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.j + self.k + self.l == 0 {
            return Err(Error::Shape(
                "at least one observed channel (J + K + L >= 1) is required".into(),
            ));
        }
        Ok(())
    }

    /// Length of every channel coefficient vector.
    #[inline]
    pub fn coef_len(&self) -> usize {
        self.m + 2
    }

    /// Index of the latent-class coefficient within a channel vector.
    #[inline]
    pub fn latent_index(&self) -> usize {
        self.m + 1
    }
}

/// Optional display names for the observed channels, used in reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelLabels {
    pub biomarkers: Vec<String>,
    pub codes: Vec<String>,
    pub medications: Vec<String>,
}

impl ChannelLabels {
    pub fn biomarker(&self, j: usize) -> String {
        self.biomarkers
            .get(j)
            .cloned()
            .unwrap_or_else(|| format!("Biomarker {}", j + 1))
    }

    pub fn code(&self, k: usize) -> String {
        self.codes
            .get(k)
            .cloned()
            .unwrap_or_else(|| format!("Code {}", k + 1))
    }

    pub fn medication(&self, l: usize) -> String {
        self.medications
            .get(l)
            .cloned()
            .unwrap_or_else(|| format!("Medication {}", l + 1))
    }
}

/// One patient's observed covariates and indicators. The latent class is
/// never stored here; it is marginalized or imputed by the inference code.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub x: Vec<f64>,
    /// Biomarker availability.
    pub r: Vec<bool>,
    /// Biomarker values; only meaningful where `r` is set. Missing values are NaN.
    pub y: Vec<f64>,
    /// Clinical codes.
    pub w: Vec<bool>,
    /// Medications.
    pub p: Vec<bool>,
}

impl PatientRecord {
    pub fn validate(&self, shape: &ModelShape) -> Result<()> {
        if self.x.len() != shape.m
            || self.r.len() != shape.j
            || self.y.len() != shape.j
            || self.w.len() != shape.k
            || self.p.len() != shape.l
        {
            return Err(Error::Shape(format!(
                "record has (x={}, r={}, y={}, w={}, p={}) entries, expected (M={}, J={}, K={}, L={})",
                self.x.len(),
                self.r.len(),
                self.y.len(),
                self.w.len(),
                self.p.len(),
                shape.m,
                shape.j,
                shape.j,
                shape.l,
            )));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite covariate".into()));
        }
        for (j, (&avail, &y)) in self.r.iter().zip(&self.y).enumerate() {
            if avail && !y.is_finite() {
                return Err(Error::Domain(format!(
                    "biomarker {j} is marked available but has no finite value"
                )));
            }
        }
        Ok(())
    }
}

/// All model parameters in constrained space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub beta_d: Vec<f64>,
    pub beta_r: Vec<Vec<f64>>,
    pub beta_y: Vec<Vec<f64>>,
    pub tau2: Vec<f64>,
    pub beta_w: Vec<Vec<f64>>,
    pub beta_p: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
}

impl ParamSet {
    /// All coefficients zero, unit variances, `η = 0` for `n` patients.
    pub fn zeros(shape: &ModelShape, n: usize) -> Self {
        let c = shape.coef_len();
        ParamSet {
            beta_d: vec![0.0; shape.m],
            beta_r: vec![vec![0.0; c]; shape.j],
            beta_y: vec![vec![0.0; c]; shape.j],
            tau2: vec![1.0; shape.j],
            beta_w: vec![vec![0.0; c]; shape.k],
            beta_p: vec![vec![0.0; c]; shape.l],
            eta: vec![0.0; n],
        }
    }

    pub fn n_patients(&self) -> usize {
        self.eta.len()
    }

    /// Checks dimensions against `shape` (and `n` patients when given).
    pub fn check_shape(&self, shape: &ModelShape, n: Option<usize>) -> Result<()> {
        let c = shape.coef_len();
        let blocks_ok = |b: &[Vec<f64>], count: usize| b.len() == count && b.iter().all(|v| v.len() == c);
        if self.beta_d.len() != shape.m
            || !blocks_ok(&self.beta_r, shape.j)
            || !blocks_ok(&self.beta_y, shape.j)
            || self.tau2.len() != shape.j
            || !blocks_ok(&self.beta_w, shape.k)
            || !blocks_ok(&self.beta_p, shape.l)
        {
            return Err(Error::Shape(format!(
                "parameter set does not match shape (M={}, J={}, K={}, L={})",
                shape.m, shape.j, shape.k, shape.l
            )));
        }
        if let Some(n) = n {
            if self.eta.len() != n {
                return Err(Error::Shape(format!(
                    "eta has {} entries for {} patients",
                    self.eta.len(),
                    n
                )));
            }
        }
        Ok(())
    }

    /// True when every value lies in its support: `τ² > 0`, `η ∈ (a, b)`, all finite.
    pub fn in_support(&self, eta_bounds: (f64, f64)) -> bool {
        let (a, b) = eta_bounds;
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        finite(&self.beta_d)
            && self.beta_r.iter().all(|v| finite(v))
            && self.beta_y.iter().all(|v| finite(v))
            && self.beta_w.iter().all(|v| finite(v))
            && self.beta_p.iter().all(|v| finite(v))
            && self.tau2.iter().all(|&t| t.is_finite() && t > 0.0)
            && self.eta.iter().all(|&e| e > a && e < b)
    }

    /// Relabels the two classes: `D → 1 − D`.
    ///
    /// Every channel's intercept absorbs its latent coefficient and the latent
    /// coefficient flips sign, `β_D` flips sign, and `η` is mirrored inside
    /// `(a, b)`. For symmetric bounds (`a = −b`) the mirror is `η → −η` and the
    /// map leaves every patient's marginal likelihood unchanged.
    pub fn reflect_classes(&mut self, shape: &ModelShape, eta_bounds: (f64, f64)) {
        let li = shape.latent_index();
        for beta in self
            .beta_r
            .iter_mut()
            .chain(self.beta_y.iter_mut())
            .chain(self.beta_w.iter_mut())
            .chain(self.beta_p.iter_mut())
        {
            beta[0] += beta[li];
            beta[li] = -beta[li];
        }
        for b in &mut self.beta_d {
            *b = -*b;
        }
        let (a, b) = eta_bounds;
        for e in &mut self.eta {
            *e = a + b - *e;
        }
    }
}

/// Identifies one Metropolis block (a coefficient vector) or a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Block {
    /// `β_D`; only present when `M > 0`.
    LatentClass,
    Availability(usize),
    Biomarker(usize),
    Code(usize),
    Medication(usize),
}

impl Block {
    /// Blocks in canonical order for a shape.
    pub fn all(shape: &ModelShape) -> Vec<Block> {
        let mut out = Vec::new();
        if shape.m > 0 {
            out.push(Block::LatentClass);
        }
        out.extend((0..shape.j).map(Block::Availability));
        out.extend((0..shape.j).map(Block::Biomarker));
        out.extend((0..shape.k).map(Block::Code));
        out.extend((0..shape.l).map(Block::Medication));
        out
    }

    pub fn name(&self) -> String {
        match self {
            Block::LatentClass => "beta_d".into(),
            Block::Availability(j) => format!("beta_r[{j}]"),
            Block::Biomarker(j) => format!("beta_y[{j}]"),
            Block::Code(k) => format!("beta_w[{k}]"),
            Block::Medication(l) => format!("beta_p[{l}]"),
        }
    }

    pub fn coefs<'a>(&self, params: &'a ParamSet) -> &'a [f64] {
        match *self {
            Block::LatentClass => &params.beta_d,
            Block::Availability(j) => &params.beta_r[j],
            Block::Biomarker(j) => &params.beta_y[j],
            Block::Code(k) => &params.beta_w[k],
            Block::Medication(l) => &params.beta_p[l],
        }
    }

    pub fn coefs_mut<'a>(&self, params: &'a mut ParamSet) -> &'a mut Vec<f64> {
        match *self {
            Block::LatentClass => &mut params.beta_d,
            Block::Availability(j) => &mut params.beta_r[j],
            Block::Biomarker(j) => &mut params.beta_y[j],
            Block::Code(k) => &mut params.beta_w[k],
            Block::Medication(l) => &mut params.beta_p[l],
        }
    }
}

/// A validated cohort: shape plus records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub shape: ModelShape,
    pub records: Vec<PatientRecord>,
}

impl Dataset {
    pub fn new(shape: ModelShape, records: Vec<PatientRecord>) -> Result<Self> {
        shape.validate()?;
        for (i, rec) in records.iter().enumerate() {
            rec.validate(&shape).map_err(|e| match e {
                Error::Domain(msg) => Error::Domain(format!("patient {i}: {msg}")),
                other => other,
            })?;
        }
        Ok(Dataset { shape, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
