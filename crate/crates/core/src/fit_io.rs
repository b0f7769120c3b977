//! Fit directories: a `manifest.json` plus CSV/JSON artifacts per method.
//!
//! Gibbs: `chain<c>.csv`, `logjoint<c>.csv`, `steps<c>.csv`.
//! VB: `vb_state.json`, `elbo_trace.csv`, optionally `draws.csv`.
//! Wall-clock times go to `timing.json` so every other file is a pure
//! function of the inputs and seed.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{fmt_f64, read_dataset, Standardization};
use crate::draws::DrawMatrix;
use crate::error::{Error, Result};
use crate::gibbs::{Acceptance, ChainDraws, GibbsOptions};
use crate::model::{ChannelLabels, Dataset, ModelShape, ParamLayout, PriorSpec, Priors};
use crate::vb::{vb_posterior_draws, StopReason, TraceRecord, VariationalState, VbFit, VbOptions};

pub const MANIFEST: &str = "manifest.json";
pub const TIMING: &str = "timing.json";
pub const VB_STATE: &str = "vb_state.json";
pub const ELBO_TRACE: &str = "elbo_trace.csv";
pub const VB_DRAWS: &str = "draws.csv";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gibbs,
    Vb,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Gibbs => "gibbs",
            Method::Vb => "vb",
        }
    }
}

/// Everything needed to rebuild the model a fit was run against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitContext {
    /// Cohort CSV path as given on the command line.
    pub data_path: String,
    pub n_patients: usize,
    pub shape: ModelShape,
    pub labels: ChannelLabels,
    /// Biomarker z-scoring applied before fitting.
    pub standardization: Standardization,
    pub priors: PriorSpec,
}

impl FitContext {
    /// Reads and standardizes the cohort, checking it against the record.
    pub fn load_data(&self) -> Result<Dataset> {
        let raw = read_dataset(Path::new(&self.data_path))?;
        if raw.shape != self.shape || raw.len() != self.n_patients {
            return Err(Error::Shape(format!(
                "{} no longer matches the fit ({} patients, shape {:?})",
                self.data_path, self.n_patients, self.shape
            )));
        }
        Ok(self.standardization.apply(&raw))
    }

    pub fn priors(&self) -> Result<Priors> {
        Priors::new(self.priors.clone(), &self.shape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub draws: String,
    pub log_joint: String,
    pub steps: String,
    pub rows: usize,
    pub acceptance: Vec<Acceptance>,
    pub reflections: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsRecord {
    pub options: GibbsOptions,
    pub chains: Vec<ChainRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbRecord {
    pub options: VbOptions,
    pub stop_reason: StopReason,
    pub best_iteration: usize,
    pub best_elbo: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub skipped_samples: usize,
    pub reflections: usize,
    /// Seed of the posterior draws (stored in `draws.csv` or regenerated).
    pub draw_seed: u64,
    pub n_draws: usize,
    pub draws_stored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitManifest {
    pub format_version: u32,
    pub method: Method,
    pub context: FitContext,
    /// Bytes of the serialized posterior state: all chain CSVs for Gibbs,
    /// `vb_state.json` for VB.
    pub state_bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gibbs: Option<GibbsRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vb: Option<VbRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_time_secs: f64,
    /// Per chain for Gibbs; empty for VB.
    pub chains: Vec<f64>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_draws(path: &Path, m: &DrawMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    m.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_draws(path: &Path) -> Result<DrawMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    DrawMatrix::read_csv(BufReader::new(file)).map_err(|e| match e {
        Error::Parse { row, column, msg } => Error::Parse {
            row,
            column,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

fn file_len(path: &Path) -> Result<u64> {
    Ok(fs::metadata(path).map_err(|e| Error::io(path, e))?.len())
}

/// Refuses to replace an existing fit unless `force` is set. Plain files and
/// non-empty directories without a manifest are never replaced.
pub fn check_output_dir(dir: &Path, force: bool) -> Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    if !dir.is_dir() {
        return Err(Error::Config(format!("{} exists and is not a directory", dir.display())));
    }
    if dir.join(MANIFEST).exists() {
        return if force {
            Ok(())
        } else {
            Err(Error::Overwrite(dir.join(MANIFEST)))
        };
    }
    let empty = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_none();
    if empty {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} is not empty and holds no fit manifest; refusing to replace it",
            dir.display()
        )))
    }
}

/// Writes into a sibling staging directory, then moves it into place.
fn write_atomically(dir: &Path, force: bool, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    check_output_dir(dir, force)?;
    let name = dir
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a valid output directory", dir.display())))?;
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let staging = parent.join(format!(".{}.partial", name.to_string_lossy()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir(&staging).map_err(|e| Error::io(&staging, e))?;
    if let Err(e) = fill(&staging) {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))
}

pub fn write_gibbs_fit(dir: &Path, context: &FitContext, fit: &ChainDraws, force: bool) -> Result<FitManifest> {
    let mut manifest = None;
    write_atomically(dir, force, |out| {
        let mut chains = Vec::with_capacity(fit.chains.len());
        let mut bytes = 0;
        for (c, chain) in fit.chains.iter().enumerate() {
            let rec = ChainRecord {
                draws: format!("chain{c}.csv"),
                log_joint: format!("logjoint{c}.csv"),
                steps: format!("steps{c}.csv"),
                rows: chain.draws.nrows(),
                acceptance: chain.acceptance.clone(),
                reflections: chain.reflections,
            };
            let draws_path = out.join(&rec.draws);
            write_draws(&draws_path, &chain.draws)?;
            bytes += file_len(&draws_path)?;
            let mut lj = DrawMatrix::with_capacity(vec!["log_joint".into()], chain.log_joint.len());
            chain.log_joint.iter().for_each(|v| lj.push_row(&[*v]));
            write_draws(&out.join(&rec.log_joint), &lj)?;
            write_draws(&out.join(&rec.steps), &chain.step_trace)?;
            chains.push(rec);
        }
        let m = FitManifest {
            format_version: FORMAT_VERSION,
            method: Method::Gibbs,
            context: context.clone(),
            state_bytes: bytes,
            gibbs: Some(GibbsRecord {
                options: fit.options.clone(),
                chains,
            }),
            vb: None,
        };
        write_json(&out.join(MANIFEST), &m)?;
        write_json(
            &out.join(TIMING),
            &Timing {
                wall_time_secs: fit.total_wall_time_secs(),
                chains: fit.chains.iter().map(|c| c.wall_time_secs).collect(),
            },
        )?;
        manifest = Some(m);
        Ok(())
    })?;
    Ok(manifest.expect("manifest written"))
}

fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "iteration,elbo,rel_change,is_best").map_err(io)?;
    for t in trace {
        let rel = if t.rel_change.is_finite() {
            fmt_f64(t.rel_change)
        } else {
            String::new()
        };
        writeln!(w, "{},{},{},{}", t.iteration, fmt_f64(t.elbo), rel, u8::from(t.is_best)).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let bad = |column: &str| Error::Parse {
            row: row + 1,
            column: column.into(),
            msg: format!("{}: malformed trace row", path.display()),
        };
        let rel = rec.get(2).ok_or_else(|| bad("rel_change"))?;
        out.push(TraceRecord {
            iteration: rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| bad("iteration"))?,
            elbo: rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| bad("elbo"))?,
            rel_change: if rel.is_empty() {
                f64::NAN
            } else {
                rel.parse().map_err(|_| bad("rel_change"))?
            },
            is_best: rec.get(3).ok_or_else(|| bad("is_best"))? == "1",
        });
    }
    Ok(out)
}

/// Posterior draws of a variational state with a fixed seed.
pub fn vb_draws(state: &VariationalState, n: usize, seed: u64) -> Result<DrawMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    vb_posterior_draws(state, n, &mut rng)
}

pub fn write_vb_fit(
    dir: &Path,
    context: &FitContext,
    fit: &VbFit,
    n_draws: usize,
    store_draws: bool,
    force: bool,
) -> Result<FitManifest> {
    let mut manifest = None;
    let draw_seed = fit.options.seed;
    let draws = if store_draws && n_draws > 0 {
        Some(vb_draws(&fit.state, n_draws, draw_seed)?)
    } else {
        None
    };
    write_atomically(dir, force, |out| {
        let state_path = out.join(VB_STATE);
        write_json(&state_path, &fit.state)?;
        write_trace(&out.join(ELBO_TRACE), &fit.trace)?;
        if let Some(d) = &draws {
            write_draws(&out.join(VB_DRAWS), d)?;
        }
        let m = FitManifest {
            format_version: FORMAT_VERSION,
            method: Method::Vb,
            context: context.clone(),
            state_bytes: file_len(&state_path)?,
            gibbs: None,
            vb: Some(VbRecord {
                options: fit.options.clone(),
                stop_reason: fit.stop_reason,
                best_iteration: fit.best_iteration,
                best_elbo: fit.best_elbo,
                iterations: fit.iterations,
                evaluations: fit.trace.len(),
                skipped_samples: fit.skipped_samples,
                reflections: fit.reflections,
                draw_seed,
                n_draws,
                draws_stored: draws.is_some(),
            }),
        };
        write_json(&out.join(MANIFEST), &m)?;
        write_json(
            &out.join(TIMING),
            &Timing {
                wall_time_secs: fit.wall_time_secs,
                chains: Vec::new(),
            },
        )?;
        manifest = Some(m);
        Ok(())
    })?;
    Ok(manifest.expect("manifest written"))
}

/// A fit directory read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedFit {
    pub dir: PathBuf,
    pub manifest: FitManifest,
}

impl LoadedFit {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Err(Error::Config(format!("{} is not a fit directory (no {MANIFEST})", dir.display())));
        }
        let manifest: FitManifest = read_json(&path)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported fit format version {}",
                manifest.format_version
            )));
        }
        let consistent = match manifest.method {
            Method::Gibbs => manifest.gibbs.is_some(),
            Method::Vb => manifest.vb.is_some(),
        };
        if !consistent {
            return Err(Error::Config(format!("{} has no {} section", path.display(), manifest.method.as_str())));
        }
        Ok(LoadedFit {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn method(&self) -> Method {
        self.manifest.method
    }

    pub fn context(&self) -> &FitContext {
        &self.manifest.context
    }

    /// Column layout of the stored or regenerated draws.
    pub fn layout(&self) -> ParamLayout {
        let ctx = self.context();
        let keep_eta = match &self.manifest.gibbs {
            Some(g) => g.options.keep_eta,
            None => true,
        };
        if keep_eta {
            ParamLayout::new(ctx.shape, ctx.n_patients)
        } else {
            ParamLayout::without_eta(ctx.shape, ctx.n_patients)
        }
    }

    pub fn vb_state(&self) -> Result<VariationalState> {
        read_json(&self.dir.join(VB_STATE))
    }

    pub fn elbo_trace(&self) -> Result<Vec<TraceRecord>> {
        read_trace(&self.dir.join(ELBO_TRACE))
    }

    /// One matrix per chain for Gibbs; a single matrix of variational draws
    /// for VB (read from `draws.csv` or regenerated from the state).
    pub fn draw_chains(&self) -> Result<Vec<DrawMatrix>> {
        let names = self.layout().names();
        let chains = match (&self.manifest.gibbs, &self.manifest.vb) {
            (Some(g), _) => g
                .chains
                .iter()
                .map(|c| read_draws(&self.dir.join(&c.draws)))
                .collect::<Result<Vec<_>>>()?,
            (None, Some(v)) => {
                let m = if v.draws_stored {
                    read_draws(&self.dir.join(VB_DRAWS))?
                } else {
                    vb_draws(&self.vb_state()?, v.n_draws.max(1), v.draw_seed)?
                };
                vec![m]
            }
            (None, None) => unreachable!("checked on open"),
        };
        if chains.iter().any(|c| c.names != names) {
            return Err(Error::Shape("stored draws do not match the fit's parameter layout".into()));
        }
        Ok(chains)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_overwrite_without_force() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("fit");
        write_atomically(&dir, false, |out| write_json(&out.join(MANIFEST), &1)).unwrap();
        let again = write_atomically(&dir, false, |out| write_json(&out.join(MANIFEST), &2));
        assert!(matches!(again, Err(Error::Overwrite(_))));
        write_atomically(&dir, true, |out| write_json(&out.join(MANIFEST), &3)).unwrap();
        let v: u32 = read_json(&dir.join(MANIFEST)).unwrap();
        assert_eq!(v, 3);
        assert!(!tmp.path().join(".fit.partial").exists());
    }

    #[test]
    fn trace_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("t.csv");
        let trace = vec![
            TraceRecord {
                iteration: 0,
                elbo: -10.5,
                rel_change: f64::NAN,
                is_best: false,
            },
            TraceRecord {
                iteration: 100,
                elbo: -3.25,
                rel_change: 0.69,
                is_best: true,
            },
        ];
        write_trace(&path, &trace).unwrap();
        let back = read_trace(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back[0].rel_change.is_nan());
        assert_eq!(back[1], trace[1]);
    }
}
