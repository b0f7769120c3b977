//! Synthetic cohorts drawn from a fully specified generating model, used for
//! parameter-recovery testing.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{expit, logit};
use crate::model::{ChannelLabels, Dataset, ModelShape, ParamSet, PatientRecord};

/// Default clamp applied to sensitivity/specificity targets of exactly 0 or 1.
pub const DEFAULT_CLAMP: f64 = 1e-4;

/// Intercept and latent-class coefficient reproducing a sensitivity and
/// specificity at covariates zero: `β₀ = logit(1 − spec)`,
/// `β_latent = logit(sens) − logit(1 − spec)`.
pub fn beta_from_sens_spec(sens: f64, spec: f64) -> Result<(f64, f64)> {
    for (name, v) in [("sensitivity", sens), ("specificity", spec)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain(format!(
                "{name} must lie strictly inside (0, 1), got {v}; clamp boundary targets \
                 (e.g. to [{DEFAULT_CLAMP}, 1 - {DEFAULT_CLAMP}]) before converting"
            )));
        }
    }
    let b0 = logit(1.0 - spec);
    Ok((b0, logit(sens) - b0))
}

fn clamp_prob(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSpec {
    StandardNormal,
    Bernoulli { q: f64 },
}

/// A binary channel given either by operating characteristics or by raw
/// coefficients `(intercept, covariates.., latent)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelTarget {
    SensSpec {
        sens: f64,
        spec: f64,
        #[serde(default)]
        covariate_effects: Vec<f64>,
    },
    Coefficients { coefficients: Vec<f64> },
}

impl ChannelTarget {
    pub fn sens_spec(sens: f64, spec: f64) -> Self {
        ChannelTarget::SensSpec {
            sens,
            spec,
            covariate_effects: Vec::new(),
        }
    }

    fn coefficients(&self, m: usize, clamp: f64, what: &str) -> Result<Vec<f64>> {
        match self {
            ChannelTarget::SensSpec {
                sens,
                spec,
                covariate_effects,
            } => {
                if !(0.0..=1.0).contains(sens) || !(0.0..=1.0).contains(spec) {
                    return Err(Error::Config(format!(
                        "{what}: sensitivity/specificity must be probabilities"
                    )));
                }
                let (b0, lat) = beta_from_sens_spec(clamp_prob(*sens, clamp), clamp_prob(*spec, clamp))
                    .map_err(|e| Error::Config(format!("{what}: {e}")))?;
                let mut beta = vec![b0];
                match covariate_effects.len() {
                    0 => beta.extend(std::iter::repeat_n(0.0, m)),
                    n if n == m => beta.extend_from_slice(covariate_effects),
                    n => {
                        return Err(Error::Config(format!(
                            "{what}: {n} covariate effects for M = {m}"
                        )))
                    }
                }
                beta.push(lat);
                Ok(beta)
            }
            ChannelTarget::Coefficients { coefficients } => {
                if coefficients.len() != m + 2 || coefficients.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config(format!(
                        "{what}: coefficients must be {} finite values",
                        m + 2
                    )));
                }
                Ok(coefficients.clone())
            }
        }
    }
}

/// Raw-scale biomarker: mean among `D = 0` at covariates zero, latent shift,
/// residual SD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerSpec {
    pub mean: f64,
    pub shift: f64,
    pub sd: f64,
    #[serde(default)]
    pub covariate_effects: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub shape: ModelShape,
    pub n: usize,
    pub prevalence_target: f64,
    #[serde(default)]
    pub labels: ChannelLabels,
    pub covariates: Vec<CovariateSpec>,
    /// `β_D`; the prevalence offset is solved on top of it.
    pub beta_d: Vec<f64>,
    pub eta_bounds: (f64, f64),
    pub availability: Vec<ChannelTarget>,
    pub biomarkers: Vec<BiomarkerSpec>,
    pub codes: Vec<ChannelTarget>,
    pub medications: Vec<ChannelTarget>,
    #[serde(default = "default_clamp")]
    pub clamp: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_clamp() -> f64 {
    DEFAULT_CLAMP
}

impl Default for SynthConfig {
    /// Pediatric type 2 diabetes defaults: operating characteristics of the
    /// codes and medications, and raw-scale biomarker shifts of 89.30 (glucose)
    /// and 4.80 (HbA1c). Perfect specificities are represented as 0.9996.
    fn default() -> Self {
        SynthConfig {
            shape: ModelShape {
                m: 2,
                j: 2,
                k: 2,
                l: 2,
            },
            n: 5_000,
            prevalence_target: 0.05,
            labels: ChannelLabels {
                biomarkers: vec!["glucose".into(), "HbA1c".into()],
                codes: vec!["T2DM".into(), "Endocrinologist visit".into()],
                medications: vec!["Metformin".into(), "Insulin".into()],
            },
            covariates: vec![CovariateSpec::StandardNormal, CovariateSpec::Bernoulli { q: 0.5 }],
            beta_d: vec![0.3, 0.3],
            eta_bounds: (-3.0, 3.0),
            availability: vec![ChannelTarget::sens_spec(0.85, 0.55), ChannelTarget::sens_spec(0.90, 0.70)],
            biomarkers: vec![
                BiomarkerSpec {
                    mean: 95.0,
                    shift: 89.30,
                    sd: 25.0,
                    covariate_effects: Vec::new(),
                },
                BiomarkerSpec {
                    mean: 5.3,
                    shift: 4.80,
                    sd: 0.6,
                    covariate_effects: Vec::new(),
                },
            ],
            codes: vec![ChannelTarget::sens_spec(0.15, 0.9996), ChannelTarget::sens_spec(0.18, 0.99)],
            medications: vec![ChannelTarget::sens_spec(0.40, 0.98), ChannelTarget::sens_spec(0.55, 0.9996)],
            clamp: DEFAULT_CLAMP,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Generating parameters (raw biomarker scale) with `η` left empty.
    pub fn generating_params(&self) -> Result<ParamSet> {
        let s = self.shape;
        s.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if !(self.prevalence_target > 0.0 && self.prevalence_target < 1.0) {
            return Err(Error::Config("prevalence_target must lie in (0, 1)".into()));
        }
        if !(self.clamp > 0.0 && self.clamp < 0.5) {
            return Err(Error::Config("clamp must lie in (0, 0.5)".into()));
        }
        let (a, b) = self.eta_bounds;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::Config("eta_bounds must satisfy a < b".into()));
        }
        let counts = [
            ("covariates", self.covariates.len(), s.m),
            ("beta_d", self.beta_d.len(), s.m),
            ("availability", self.availability.len(), s.j),
            ("biomarkers", self.biomarkers.len(), s.j),
            ("codes", self.codes.len(), s.k),
            ("medications", self.medications.len(), s.l),
        ];
        for (what, got, want) in counts {
            if got != want {
                return Err(Error::Config(format!("{what}: {got} entries, shape requires {want}")));
            }
        }
        for cov in &self.covariates {
            if let CovariateSpec::Bernoulli { q } = cov {
                if !(*q > 0.0 && *q < 1.0) {
                    return Err(Error::Config("Bernoulli covariate q must lie in (0, 1)".into()));
                }
            }
        }
        let mut beta_y = Vec::with_capacity(s.j);
        let mut tau2 = Vec::with_capacity(s.j);
        for (j, bm) in self.biomarkers.iter().enumerate() {
            if !(bm.sd > 0.0 && bm.sd.is_finite()) || !bm.mean.is_finite() || !bm.shift.is_finite() {
                return Err(Error::Config(format!("biomarker {j}: sd must be positive and values finite")));
            }
            let mut beta = vec![bm.mean];
            match bm.covariate_effects.len() {
                0 => beta.extend(std::iter::repeat_n(0.0, s.m)),
                n if n == s.m => beta.extend_from_slice(&bm.covariate_effects),
                n => return Err(Error::Config(format!("biomarker {j}: {n} covariate effects for M = {}", s.m))),
            }
            beta.push(bm.shift);
            beta_y.push(beta);
            tau2.push(bm.sd * bm.sd);
        }
        let chans = |targets: &[ChannelTarget], what: &str| {
            targets
                .iter()
                .enumerate()
                .map(|(i, t)| t.coefficients(s.m, self.clamp, &format!("{what} {i}")))
                .collect::<Result<Vec<_>>>()
        };
        Ok(ParamSet {
            beta_d: self.beta_d.clone(),
            beta_r: chans(&self.availability, "availability")?,
            beta_y,
            tau2,
            beta_w: chans(&self.codes, "code")?,
            beta_p: chans(&self.medications, "medication")?,
            eta: Vec::new(),
        })
    }
}

/// Generating truth written next to a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub shape: ModelShape,
    pub labels: ChannelLabels,
    /// Raw-scale generating parameters; `eta` holds the drawn random effects.
    pub params: ParamSet,
    /// Offset added to `x·β_D + η` so the cohort meets the prevalence target.
    pub d_offset: f64,
    /// Bounds of the uniform the `η_i` were drawn from.
    pub eta_bounds: (f64, f64),
    pub prevalence_target: f64,
    pub prevalence_realized: f64,
    pub seed: u64,
}

impl SynthTruth {
    /// `η` bounds under which the generating process belongs to the model
    /// family: the prevalence offset moves into `η_i + offset ~ Unif(a + offset, b + offset)`.
    pub fn model_eta_bounds(&self) -> (f64, f64) {
        (self.eta_bounds.0 + self.d_offset, self.eta_bounds.1 + self.d_offset)
    }

    /// Generating parameters expressed in the model's parameterization, with
    /// the offset folded into `η` (valid under [`Self::model_eta_bounds`]).
    pub fn model_params(&self) -> ParamSet {
        let mut p = self.params.clone();
        p.eta.iter_mut().for_each(|e| *e += self.d_offset);
        p
    }
}

#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub dataset: Dataset,
    pub truth: SynthTruth,
    pub d_true: Vec<bool>,
}

fn open_uniform(rng: &mut ChaCha8Rng, a: f64, b: f64) -> f64 {
    loop {
        let v = rng.random_range(a..b);
        if v > a {
            return v;
        }
    }
}

/// Offset `s` with `mean_i expit(lp_i + s) = target`, by bisection.
fn solve_offset(lps: &[f64], target: f64) -> Result<f64> {
    let mean_at = |s: f64| lps.iter().map(|lp| expit(lp + s)).sum::<f64>() / lps.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    if !(mean_at(lo) < target && mean_at(hi) > target) {
        return Err(Error::Config(format!(
            "prevalence target {target} is not attainable for this covariate model"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = mean_at(mid);
        if (v - target).abs() < 1e-10 {
            return Ok(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draws a cohort. Covariates and `η_i ~ Unif(a, b)` are drawn first, the
/// prevalence offset is solved on the realised linear predictors, then each
/// patient's class and indicators are drawn. Biomarker values are only drawn
/// where available.
pub fn generate_cohort(config: &SynthConfig) -> Result<SynthCohort> {
    let mut truth_params = config.generating_params()?;
    let s = config.shape;
    let n = config.n;
    let (a, b) = config.eta_bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut xs = Vec::with_capacity(n);
    let mut etas = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = config
            .covariates
            .iter()
            .map(|c| match *c {
                CovariateSpec::StandardNormal => rng.sample(StandardNormal),
                CovariateSpec::Bernoulli { q } => {
                    if rng.random_bool(q) {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
            .collect();
        xs.push(x);
        etas.push(open_uniform(&mut rng, a, b));
    }
    let lps: Vec<f64> = xs
        .iter()
        .zip(&etas)
        .map(|(x, e)| x.iter().zip(&truth_params.beta_d).map(|(u, v)| u * v).sum::<f64>() + e)
        .collect();
    let offset = solve_offset(&lps, config.prevalence_target)?;

    let li = s.latent_index();
    let lin = |x: &[f64], beta: &[f64], d: bool| {
        let mut acc = beta[0] + x.iter().zip(&beta[1..]).map(|(u, v)| u * v).sum::<f64>();
        if d {
            acc += beta[li];
        }
        acc
    };
    let mut records = Vec::with_capacity(n);
    let mut d_true = Vec::with_capacity(n);
    for (x, lp) in xs.into_iter().zip(&lps) {
        let d = rng.random_bool(expit(lp + offset));
        let r: Vec<bool> = truth_params
            .beta_r
            .iter()
            .map(|beta| rng.random_bool(expit(lin(&x, beta, d))))
            .collect();
        let y: Vec<f64> = (0..s.j)
            .map(|j| {
                if r[j] {
                    let z: f64 = rng.sample(StandardNormal);
                    lin(&x, &truth_params.beta_y[j], d) + truth_params.tau2[j].sqrt() * z
                } else {
                    f64::NAN
                }
            })
            .collect();
        let w: Vec<bool> = truth_params
            .beta_w
            .iter()
            .map(|beta| rng.random_bool(expit(lin(&x, beta, d))))
            .collect();
        let p: Vec<bool> = truth_params
            .beta_p
            .iter()
            .map(|beta| rng.random_bool(expit(lin(&x, beta, d))))
            .collect();
        records.push(PatientRecord { x, r, y, w, p });
        d_true.push(d);
    }
    truth_params.eta = etas;
    let realized = d_true.iter().filter(|&&d| d).count() as f64 / n as f64;
    Ok(SynthCohort {
        dataset: Dataset::new(s, records)?,
        truth: SynthTruth {
            shape: s,
            labels: config.labels.clone(),
            params: truth_params,
            d_offset: offset,
            eta_bounds: config.eta_bounds,
            prevalence_target: config.prevalence_target,
            prevalence_realized: realized,
            seed: config.seed,
        },
        d_true,
    })
}

/// One row of the target-versus-empirical channel table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelRate {
    pub channel: String,
    pub target_sens: f64,
    pub target_spec: f64,
    pub empirical_sens: f64,
    pub empirical_spec: f64,
}

/// Empirical sensitivity and specificity of every binary channel against the
/// true labels, next to the generating values at covariates zero.
pub fn channel_rates(cohort: &SynthCohort) -> Vec<ChannelRate> {
    let s = cohort.dataset.shape;
    let li = s.latent_index();
    let truth = &cohort.truth.params;
    let labels = &cohort.truth.labels;
    let rate = |get: &dyn Fn(&PatientRecord) -> bool, class: bool| {
        let (mut hits, mut total) = (0usize, 0usize);
        for (rec, &d) in cohort.dataset.records.iter().zip(&cohort.d_true) {
            if d == class {
                total += 1;
                if get(rec) {
                    hits += 1;
                }
            }
        }
        if total == 0 {
            f64::NAN
        } else {
            hits as f64 / total as f64
        }
    };
    let mut out = Vec::new();
    let mut push = |name: String, beta: &[f64], get: &dyn Fn(&PatientRecord) -> bool| {
        out.push(ChannelRate {
            channel: name,
            target_sens: expit(beta[0] + beta[li]),
            target_spec: 1.0 - expit(beta[0]),
            empirical_sens: rate(get, true),
            empirical_spec: 1.0 - rate(get, false),
        });
    };
    for j in 0..s.j {
        push(format!("{} availability", labels.biomarker(j)), &truth.beta_r[j], &|r| r.r[j]);
    }
    for k in 0..s.k {
        push(format!("{} code", labels.code(k)), &truth.beta_w[k], &|r| r.w[k]);
    }
    for l in 0..s.l {
        push(format!("{} code", labels.medication(l)), &truth.beta_p[l], &|r| r.p[l]);
    }
    out
}

/// Sidecar paths for a cohort CSV: `<stem>.truth.json` and `<stem>.labels.csv`.
pub fn sidecar_paths(csv_path: &Path) -> (PathBuf, PathBuf) {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cohort".into());
    let dir = csv_path.parent().unwrap_or_else(|| Path::new(""));
    (
        dir.join(format!("{stem}.truth.json")),
        dir.join(format!("{stem}.labels.csv")),
    )
}

pub fn write_labels<W: std::io::Write>(d_true: &[bool], mut out: W) -> std::io::Result<()> {
    writeln!(out, "d")?;
    for &d in d_true {
        writeln!(out, "{}", u8::from(d))?;
    }
    Ok(())
}
