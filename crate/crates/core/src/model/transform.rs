//! Flat parameter layout, canonical column names, and the map between
//! constrained parameters and an unconstrained real vector.
//!
//! Unconstrained coordinates: coefficients map identically, `τ²_j = exp(s_j)`
//! and `η_i = a + (b − a)·expit(u_i)`.

use std::ops::Range;

use super::{ModelShape, ParamSet};
use crate::error::{Error, Result};
use crate::math::{expit, log1m_expit, log_expit, logit};

/// Column ordering of a flattened [`ParamSet`]:
/// `beta_d, beta_r[·], beta_y[·], tau2, beta_w[·], beta_p[·], eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub shape: ModelShape,
    pub n_patients: usize,
    /// Whether the per-patient `η_i` columns are part of the layout.
    pub include_eta: bool,
}

/// Result of [`ParamLayout::to_constrained`].
#[derive(Debug, Clone)]
pub struct TransformedPoint {
    pub params: ParamSet,
    pub log_jacobian: f64,
}

impl ParamLayout {
    pub fn new(shape: ModelShape, n_patients: usize) -> Self {
        ParamLayout {
            shape,
            n_patients,
            include_eta: true,
        }
    }

    pub fn without_eta(shape: ModelShape, n_patients: usize) -> Self {
        ParamLayout {
            shape,
            n_patients,
            include_eta: false,
        }
    }

    /// Number of coordinates before the `η` columns.
    pub fn n_global(&self) -> usize {
        let s = &self.shape;
        s.m + (2 * s.j + s.k + s.l) * s.coef_len() + s.j
    }

    pub fn dim(&self) -> usize {
        self.n_global() + if self.include_eta { self.n_patients } else { 0 }
    }

    pub fn beta_d_range(&self) -> Range<usize> {
        0..self.shape.m
    }

    pub fn beta_r_range(&self, j: usize) -> Range<usize> {
        let c = self.shape.coef_len();
        let start = self.shape.m + j * c;
        start..start + c
    }

    pub fn beta_y_range(&self, j: usize) -> Range<usize> {
        let c = self.shape.coef_len();
        let start = self.shape.m + (self.shape.j + j) * c;
        start..start + c
    }

    pub fn tau2_range(&self) -> Range<usize> {
        let start = self.shape.m + 2 * self.shape.j * self.shape.coef_len();
        start..start + self.shape.j
    }

    pub fn beta_w_range(&self, k: usize) -> Range<usize> {
        let c = self.shape.coef_len();
        let start = self.tau2_range().end + k * c;
        start..start + c
    }

    pub fn beta_p_range(&self, l: usize) -> Range<usize> {
        let c = self.shape.coef_len();
        let start = self.tau2_range().end + (self.shape.k + l) * c;
        start..start + c
    }

    pub fn eta_range(&self) -> Range<usize> {
        let g = self.n_global();
        if self.include_eta {
            g..g + self.n_patients
        } else {
            g..g
        }
    }

    /// Canonical column names, e.g. `beta_w[0][2]`, `tau2[1]`, `eta[17]`.
    pub fn names(&self) -> Vec<String> {
        let s = &self.shape;
        let c = s.coef_len();
        let mut out = Vec::with_capacity(self.dim());
        out.extend((0..s.m).map(|m| format!("beta_d[{m}]")));
        for j in 0..s.j {
            out.extend((0..c).map(|m| format!("beta_r[{j}][{m}]")));
        }
        for j in 0..s.j {
            out.extend((0..c).map(|m| format!("beta_y[{j}][{m}]")));
        }
        out.extend((0..s.j).map(|j| format!("tau2[{j}]")));
        for k in 0..s.k {
            out.extend((0..c).map(|m| format!("beta_w[{k}][{m}]")));
        }
        for l in 0..s.l {
            out.extend((0..c).map(|m| format!("beta_p[{l}][{m}]")));
        }
        if self.include_eta {
            out.extend((0..self.n_patients).map(|i| format!("eta[{i}]")));
        }
        out
    }

    pub fn flatten(&self, params: &ParamSet) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        self.flatten_into(params, &mut out);
        out
    }

    pub fn flatten_into(&self, params: &ParamSet, out: &mut Vec<f64>) {
        out.extend_from_slice(&params.beta_d);
        params.beta_r.iter().for_each(|b| out.extend_from_slice(b));
        params.beta_y.iter().for_each(|b| out.extend_from_slice(b));
        out.extend_from_slice(&params.tau2);
        params.beta_w.iter().for_each(|b| out.extend_from_slice(b));
        params.beta_p.iter().for_each(|b| out.extend_from_slice(b));
        if self.include_eta {
            out.extend_from_slice(&params.eta);
        }
    }

    pub fn unflatten(&self, v: &[f64]) -> Result<ParamSet> {
        if v.len() != self.dim() {
            return Err(Error::Shape(format!(
                "flat vector has {} entries, layout expects {}",
                v.len(),
                self.dim()
            )));
        }
        let s = &self.shape;
        let blocks = |f: &dyn Fn(usize) -> Range<usize>, count: usize| {
            (0..count).map(|i| v[f(i)].to_vec()).collect::<Vec<_>>()
        };
        Ok(ParamSet {
            beta_d: v[self.beta_d_range()].to_vec(),
            beta_r: blocks(&|j| self.beta_r_range(j), s.j),
            beta_y: blocks(&|j| self.beta_y_range(j), s.j),
            tau2: v[self.tau2_range()].to_vec(),
            beta_w: blocks(&|k| self.beta_w_range(k), s.k),
            beta_p: blocks(&|l| self.beta_p_range(l), s.l),
            eta: v[self.eta_range()].to_vec(),
        })
    }

    /// Maps constrained parameters to the unconstrained vector. The returned
    /// log-Jacobian is that of [`Self::to_constrained`] at the result.
    pub fn to_unconstrained(&self, params: &ParamSet, eta_bounds: (f64, f64)) -> Result<(Vec<f64>, f64)> {
        let (a, b) = eta_bounds;
        if !params.in_support(eta_bounds) {
            return Err(Error::Domain(
                "parameters outside their support cannot be unconstrained".into(),
            ));
        }
        let mut v = self.flatten(params);
        for s in &mut v[self.tau2_range()] {
            *s = s.ln();
        }
        for u in &mut v[self.eta_range()] {
            *u = logit((*u - a) / (b - a));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical(None, "unconstrained vector is not finite"));
        }
        let lj = self.log_jacobian(&v, eta_bounds);
        Ok((v, lj))
    }

    /// Maps an unconstrained vector to parameters and `ln |det ∂θ/∂v|`.
    pub fn to_constrained(&self, v: &[f64], eta_bounds: (f64, f64)) -> Result<TransformedPoint> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical(None, "unconstrained vector is not finite"));
        }
        let (a, b) = eta_bounds;
        let mut flat = v.to_vec();
        for s in &mut flat[self.tau2_range()] {
            *s = s.exp();
        }
        for u in &mut flat[self.eta_range()] {
            *u = a + (b - a) * expit(*u);
        }
        let params = self.unflatten(&flat)?;
        Ok(TransformedPoint {
            params,
            log_jacobian: self.log_jacobian(v, eta_bounds),
        })
    }

    /// `Σ_j s_j + Σ_i [ln(b − a) + ln expit(u_i) + ln(1 − expit(u_i))]`.
    pub fn log_jacobian(&self, v: &[f64], eta_bounds: (f64, f64)) -> f64 {
        let width = (eta_bounds.1 - eta_bounds.0).ln();
        let tau: f64 = v[self.tau2_range()].iter().sum();
        let eta: f64 = v[self.eta_range()]
            .iter()
            .map(|&u| width + log_expit(u) + log1m_expit(u))
            .sum();
        tau + eta
    }

    /// Converts a gradient with respect to constrained parameters into the
    /// gradient of `ln p(T(v)) + ln |J(v)|` with respect to `v`, in place.
    pub fn chain_rule(&self, v: &[f64], grad: &mut [f64], eta_bounds: (f64, f64)) {
        let (a, b) = eta_bounds;
        for idx in self.tau2_range() {
            grad[idx] = grad[idx] * v[idx].exp() + 1.0;
        }
        for idx in self.eta_range() {
            let s = expit(v[idx]);
            grad[idx] = grad[idx] * (b - a) * s * (1.0 - s) + (1.0 - 2.0 * s);
        }
    }
}
