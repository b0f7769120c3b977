//! Clinically interpretable quantities derived from the coefficients,
//! evaluated with all covariates at zero.

use serde::{Deserialize, Serialize};

use super::likelihood::dot;
use super::{ChannelLabels, ModelShape, ParamSet, PatientRecord};
use crate::math::expit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityKind {
    Probability,
    MeanShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantity {
    /// Stable machine key, e.g. `sens_w[0]`.
    pub key: String,
    /// Report label, e.g. `T2DM code sensitivity`.
    pub label: String,
    pub kind: QuantityKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedReport {
    pub quantities: Vec<DerivedQuantity>,
}

impl DerivedReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.quantities.iter().find(|q| q.key == key).map(|q| q.value)
    }
}

fn push_sens_spec(
    out: &mut Vec<DerivedQuantity>,
    beta: &[f64],
    latent: usize,
    key: &str,
    label: &str,
) {
    out.push(DerivedQuantity {
        key: format!("sens_{key}"),
        label: format!("{label} sensitivity"),
        kind: QuantityKind::Probability,
        value: expit(beta[0] + beta[latent]),
    });
    out.push(DerivedQuantity {
        key: format!("spec_{key}"),
        label: format!("{label} specificity"),
        kind: QuantityKind::Probability,
        value: 1.0 - expit(beta[0]),
    });
}

/// Sensitivity `expit(β₀ + β_latent)` and specificity `1 − expit(β₀)` of every
/// binary channel, biomarker mean shifts, and (when `records` is given) the
/// prevalence `mean_i expit(x_i·β_D + η_i)`.
///
/// `biomarker_scale` multiplies the mean shifts to undo standardization.
pub fn derived_quantities(
    shape: &ModelShape,
    labels: &ChannelLabels,
    params: &ParamSet,
    records: Option<&[PatientRecord]>,
    biomarker_scale: Option<&[f64]>,
) -> DerivedReport {
    let li = shape.latent_index();
    let mut out = Vec::new();
    for (k, beta) in params.beta_w.iter().enumerate() {
        push_sens_spec(&mut out, beta, li, &format!("w[{k}]"), &format!("{} code", labels.code(k)));
    }
    for (l, beta) in params.beta_p.iter().enumerate() {
        push_sens_spec(
            &mut out,
            beta,
            li,
            &format!("p[{l}]"),
            &format!("{} code", labels.medication(l)),
        );
    }
    for (j, beta) in params.beta_r.iter().enumerate() {
        push_sens_spec(
            &mut out,
            beta,
            li,
            &format!("r[{j}]"),
            &format!("{} availability", labels.biomarker(j)),
        );
    }
    for (j, beta) in params.beta_y.iter().enumerate() {
        let scale = biomarker_scale.and_then(|s| s.get(j).copied()).unwrap_or(1.0);
        out.push(DerivedQuantity {
            key: format!("shift_y[{j}]"),
            label: format!("Mean shift in {}", labels.biomarker(j)),
            kind: QuantityKind::MeanShift,
            value: beta[li] * scale,
        });
    }
    if let Some(recs) = records {
        if !recs.is_empty() && params.eta.len() == recs.len() {
            let prev = recs
                .iter()
                .zip(&params.eta)
                .map(|(r, &e)| expit(dot(&r.x, &params.beta_d) + e))
                .sum::<f64>()
                / recs.len() as f64;
            out.push(DerivedQuantity {
                key: "prevalence".into(),
                label: "Class prevalence".into(),
                kind: QuantityKind::Probability,
                value: prev,
            });
        }
    }
    DerivedReport { quantities: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sens_spec_from_coefficients() {
        let shape = ModelShape::new(0, 0, 1, 0).unwrap();
        let mut params = ParamSet::zeros(&shape, 0);
        params.beta_w[0] = vec![-2.944_438_979_166_44, 4.330_733_340_286_331];
        let labels = ChannelLabels {
            codes: vec!["T2DM".into()],
            ..Default::default()
        };
        let rep = derived_quantities(&shape, &labels, &params, None, None);
        assert!((rep.get("sens_w[0]").unwrap() - 0.8).abs() < 1e-12);
        assert!((rep.get("spec_w[0]").unwrap() - 0.95).abs() < 1e-12);
        assert_eq!(rep.quantities[0].label, "T2DM code sensitivity");

        params.beta_w[0] = vec![0.0, 0.0];
        let rep = derived_quantities(&shape, &labels, &params, None, None);
        assert_eq!(rep.get("sens_w[0]"), Some(0.5));
        assert_eq!(rep.get("spec_w[0]"), Some(0.5));
    }

    #[test]
    fn shift_is_unstandardized_and_labelled() {
        let shape = ModelShape::new(0, 1, 0, 0).unwrap();
        let mut params = ParamSet::zeros(&shape, 0);
        params.beta_y[0] = vec![0.0, 2.0];
        let labels = ChannelLabels {
            biomarkers: vec!["HbA1c".into()],
            ..Default::default()
        };
        let rep = derived_quantities(&shape, &labels, &params, None, Some(&[1.5]));
        assert_eq!(rep.get("shift_y[0]"), Some(3.0));
        assert!(rep.quantities.iter().any(|q| q.label == "Mean shift in HbA1c"));
        assert!(rep.get("prevalence").is_none());
    }
}
