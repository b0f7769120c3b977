//! C ABI for the lcapheno engine.
//!
//! Every fallible function returns an `int` status (`LCA_OK` on success) and
//! writes results through out-pointers. Objects are opaque handles released
//! with their `*_free` function. The message of the last failure on the
//! calling thread is available from [`lca_last_error`]. Panics never cross
//! the boundary; they are reported as `LCA_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lcapheno::data::{read_dataset, write_dataset, Standardization};
use lcapheno::diagnostics::{ess_values, psis_loo, split_rhat_values, LoglikMatrix};
use lcapheno::fit_io::{write_gibbs_fit, write_vb_fit, FitContext};
use lcapheno::gibbs::{gibbs_fit, ChainDraws, GibbsOptions};
use lcapheno::model::{log_likelihood_patients, ChannelLabels, Dataset, ParamLayout, PriorSpec, Priors};
use lcapheno::synth::{generate_cohort, SynthConfig};
use lcapheno::vb::{svi_fit, StopReason, VbFit, VbOptions};
use lcapheno::Error;

pub const LCA_OK: c_int = 0;
pub const LCA_ERR_NULL: c_int = 1;
pub const LCA_ERR_INPUT: c_int = 2;
pub const LCA_ERR_OVERWRITE: c_int = 3;
pub const LCA_ERR_NUMERICAL: c_int = 4;
pub const LCA_ERR_IO: c_int = 5;
pub const LCA_ERR_BUFFER: c_int = 6;
pub const LCA_ERR_PANIC: c_int = 7;

pub const LCA_STOP_MAX_ITERS: c_int = 0;
pub const LCA_STOP_REL_TOL: c_int = 1;
pub const LCA_STOP_PATIENCE: c_int = 2;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> c_int {
    match err {
        Error::Overwrite(_) => LCA_ERR_OVERWRITE,
        Error::Divergence(_) | Error::Numerical { .. } => LCA_ERR_NUMERICAL,
        Error::Io { .. } | Error::Csv { .. } => LCA_ERR_IO,
        _ => LCA_ERR_INPUT,
    }
}

struct Failure(c_int, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(LCA_ERR_NULL, format!("{what} is null"))
}

/// Runs `f`, records any failure and converts it to a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            LCA_OK
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            LCA_ERR_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LCA_ERR_INPUT, format!("{what} is not valid UTF-8")))
}

unsafe fn opt_json<T: serde::de::DeserializeOwned>(p: *const c_char, what: &str) -> Result<Option<T>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    let s = str_arg(p, what)?;
    serde_json::from_str(s)
        .map(Some)
        .map_err(|e| Failure(LCA_ERR_INPUT, format!("{what}: {e}")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Failure> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < src.len() {
        return Err(Failure(
            LCA_ERR_BUFFER,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// A cohort, standardized for fitting, with the path it came from.
pub struct LcaDataset {
    raw: Dataset,
    data: Dataset,
    standardization: Standardization,
    labels: ChannelLabels,
    source: String,
}

impl LcaDataset {
    fn new(raw: Dataset, labels: ChannelLabels, source: String) -> Self {
        let standardization = Standardization::fit(&raw);
        let data = standardization.apply(&raw);
        LcaDataset {
            raw,
            data,
            standardization,
            labels,
            source,
        }
    }

    fn priors(&self, spec: Option<PriorSpec>, eta_bounds: *const f64) -> Result<(Priors, PriorSpec), Failure> {
        let mut spec = spec.unwrap_or_else(|| PriorSpec::default_for(&self.data.shape));
        if !eta_bounds.is_null() {
            // SAFETY: the caller passes two readable doubles when non-null.
            let b = unsafe { std::slice::from_raw_parts(eta_bounds, 2) };
            spec.eta_bounds = (b[0], b[1]);
        }
        Ok((Priors::new(spec.clone(), &self.data.shape)?, spec))
    }

    fn context(&self, priors: PriorSpec) -> FitContext {
        FitContext {
            data_path: self.source.clone(),
            n_patients: self.data.len(),
            shape: self.data.shape,
            labels: self.labels.clone(),
            standardization: self.standardization.clone(),
            priors,
        }
    }
}

pub struct LcaGibbsFit {
    fit: ChainDraws,
    context: FitContext,
}

pub struct LcaVbFit {
    fit: VbFit,
    context: FitContext,
}

/// Copies the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lca_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lca_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads a cohort CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lca_dataset_read_csv(path: *const c_char, out: *mut *mut LcaDataset) -> c_int {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let raw = read_dataset(Path::new(path))?;
        *out = Box::into_raw(Box::new(LcaDataset::new(raw, ChannelLabels::default(), path.to_string())));
        Ok(())
    })
}

/// Generates a synthetic cohort. `config_json` may be null for the defaults;
/// `seed` always applies and `n` overrides the size when positive. When
/// `eta_bounds_out` is non-null it receives the two prior bounds under which
/// the generator lies inside the model family.
///
/// # Safety
/// Pointers must be null or valid as documented.
#[no_mangle]
pub unsafe extern "C" fn lca_synth_generate(
    config_json: *const c_char,
    seed: u64,
    n: usize,
    out: *mut *mut LcaDataset,
    eta_bounds_out: *mut f64,
) -> c_int {
    guard(|| {
        let out = out_arg(out, "out")?;
        let mut config: SynthConfig = opt_json(config_json, "config_json")?.unwrap_or_default();
        config.seed = seed;
        if n > 0 {
            config.n = n;
        }
        let cohort = generate_cohort(&config)?;
        if !eta_bounds_out.is_null() {
            let (a, b) = cohort.truth.model_eta_bounds();
            *eta_bounds_out = a;
            *eta_bounds_out.add(1) = b;
        }
        let ds = LcaDataset::new(cohort.dataset, cohort.truth.labels, String::new());
        *out = Box::into_raw(Box::new(ds));
        Ok(())
    })
}

/// Writes the raw (unstandardized) cohort as CSV and remembers the path as
/// the dataset's source.
///
/// # Safety
/// `dataset` must come from this library; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lca_dataset_write_csv(dataset: *mut LcaDataset, path: *const c_char) -> c_int {
    guard(|| {
        let ds = dataset.as_mut().ok_or_else(|| null("dataset"))?;
        let path = str_arg(path, "path")?;
        write_dataset(Path::new(path), &ds.raw)?;
        ds.source = path.to_string();
        Ok(())
    })
}

/// Number of patients, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lca_dataset_len(dataset: *const LcaDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.data.len())
}

/// Writes `(M, J, K, L)` into `out[0..4]`.
///
/// # Safety
/// `dataset` must come from this library; `out` must hold 4 values.
#[no_mangle]
pub unsafe extern "C" fn lca_dataset_shape(dataset: *const LcaDataset, out: *mut usize) -> c_int {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = ds.data.shape;
        for (i, v) in [s.m, s.j, s.k, s.l].into_iter().enumerate() {
            *out.add(i) = v;
        }
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or come from this library, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn lca_dataset_free(dataset: *mut LcaDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of model parameters, with or without the per-patient `η`.
///
/// # Safety
/// `dataset` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lca_param_count(dataset: *const LcaDataset, include_eta: bool) -> usize {
    dataset.as_ref().map_or(0, |d| {
        let layout = if include_eta {
            ParamLayout::new(d.data.shape, d.data.len())
        } else {
            ParamLayout::without_eta(d.data.shape, d.data.len())
        };
        layout.dim()
    })
}

/// Per-patient marginal log-likelihoods at a flat parameter vector (full
/// layout including `η`, on the standardized biomarker scale).
///
/// # Safety
/// `params` must hold `n_params` values and `out` room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn lca_log_likelihood(
    dataset: *const LcaDataset,
    params: *const f64,
    n_params: usize,
    out: *mut f64,
    out_len: usize,
) -> c_int {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        if params.is_null() {
            return Err(null("params"));
        }
        let layout = ParamLayout::new(ds.data.shape, ds.data.len());
        let p = layout.unflatten(std::slice::from_raw_parts(params, n_params))?;
        let ll = log_likelihood_patients(&ds.data.records, &p)?;
        copy_out(&ll, out, out_len)
    })
}

/// Runs the Gibbs sampler. `options_json` and `priors_json` may be null for
/// defaults; `eta_bounds` (two doubles) may be null.
///
/// # Safety
/// Pointers must be null or valid as documented.
#[no_mangle]
pub unsafe extern "C" fn lca_gibbs_fit(
    dataset: *const LcaDataset,
    options_json: *const c_char,
    priors_json: *const c_char,
    eta_bounds: *const f64,
    out: *mut *mut LcaGibbsFit,
) -> c_int {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        let out = out_arg(out, "out")?;
        let options: GibbsOptions = opt_json(options_json, "options_json")?.unwrap_or_default();
        let (priors, spec) = ds.priors(opt_json(priors_json, "priors_json")?, eta_bounds)?;
        let fit = gibbs_fit(&ds.data, &priors, &options)?;
        *out = Box::into_raw(Box::new(LcaGibbsFit {
            fit,
            context: ds.context(spec),
        }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lca_gibbs_chains(fit: *const LcaGibbsFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.chains.len())
}

/// Kept draws per chain.
///
/// # Safety
/// `fit` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lca_gibbs_draws(fit: *const LcaGibbsFit) -> usize {
    fit.as_ref()
        .and_then(|f| f.fit.chains.first())
        .map_or(0, |c| c.draws.nrows())
}

/// Columns per draw.
///
/// # Safety
/// `fit` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lca_gibbs_params(fit: *const LcaGibbsFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.layout.dim())
}

/// Copies one chain's draws, row-major (`draws × params`).
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lca_gibbs_copy_chain(
    fit: *const LcaGibbsFit,
    chain: usize,
    buf: *mut f64,
    len: usize,
) -> c_int {
    guard(|| {
        let f = handle(fit, "fit")?;
        let c = f
            .fit
            .chains
            .get(chain)
            .ok_or_else(|| Failure(LCA_ERR_INPUT, format!("no chain {chain}")))?;
        copy_out(&c.draws.values, buf, len)
    })
}

/// Persists the fit as a fit directory.
///
/// # Safety
/// `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lca_gibbs_write(fit: *const LcaGibbsFit, dir: *const c_char, force: bool) -> c_int {
    guard(|| {
        let f = handle(fit, "fit")?;
        let dir = str_arg(dir, "dir")?;
        write_gibbs_fit(Path::new(dir), &f.context, &f.fit, force)?;
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or come from this library, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn lca_gibbs_free(fit: *mut LcaGibbsFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Runs stochastic variational inference; arguments as for [`lca_gibbs_fit`].
///
/// # Safety
/// Pointers must be null or valid as documented.
#[no_mangle]
pub unsafe extern "C" fn lca_vb_fit(
    dataset: *const LcaDataset,
    options_json: *const c_char,
    priors_json: *const c_char,
    eta_bounds: *const f64,
    out: *mut *mut LcaVbFit,
) -> c_int {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        let out = out_arg(out, "out")?;
        let options: VbOptions = opt_json(options_json, "options_json")?.unwrap_or_default();
        let (priors, spec) = ds.priors(opt_json(priors_json, "priors_json")?, eta_bounds)?;
        let fit = svi_fit(&ds.data, &priors, &options)?;
        *out = Box::into_raw(Box::new(LcaVbFit {
            fit,
            context: ds.context(spec),
        }));
        Ok(())
    })
}

/// Best ELBO, its iteration, and the stop reason (`LCA_STOP_*`).
///
/// # Safety
/// Out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn lca_vb_result(
    fit: *const LcaVbFit,
    best_elbo: *mut f64,
    best_iteration: *mut usize,
    stop_reason: *mut c_int,
) -> c_int {
    guard(|| {
        let f = handle(fit, "fit")?;
        *out_arg(best_elbo, "best_elbo")? = f.fit.best_elbo;
        *out_arg(best_iteration, "best_iteration")? = f.fit.best_iteration;
        *out_arg(stop_reason, "stop_reason")? = match f.fit.stop_reason {
            StopReason::MaxIters => LCA_STOP_MAX_ITERS,
            StopReason::RelTol => LCA_STOP_REL_TOL,
            StopReason::Patience => LCA_STOP_PATIENCE,
        };
        Ok(())
    })
}

/// Length of the variational mean vector (unconstrained space).
///
/// # Safety
/// `fit` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lca_vb_dim(fit: *const LcaVbFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.state.dim())
}

/// Copies the variational mean and log-scale (unconstrained space).
///
/// # Safety
/// Buffers must have room for `len` doubles each.
#[no_mangle]
pub unsafe extern "C" fn lca_vb_copy_state(
    fit: *const LcaVbFit,
    mu: *mut f64,
    log_sigma: *mut f64,
    len: usize,
) -> c_int {
    guard(|| {
        let f = handle(fit, "fit")?;
        copy_out(&f.fit.state.mu, mu, len)?;
        copy_out(&f.fit.state.log_sigma, log_sigma, len)
    })
}

/// Persists the fit with `n_draws` stored posterior draws.
///
/// # Safety
/// `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lca_vb_write(
    fit: *const LcaVbFit,
    dir: *const c_char,
    n_draws: usize,
    force: bool,
) -> c_int {
    guard(|| {
        let f = handle(fit, "fit")?;
        let dir = str_arg(dir, "dir")?;
        write_vb_fit(Path::new(dir), &f.context, &f.fit, n_draws, n_draws > 0, force)?;
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or come from this library, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn lca_vb_free(fit: *mut LcaVbFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

unsafe fn chains_arg<'a>(values: *const f64, n_chains: usize, n_draws: usize) -> Result<Vec<&'a [f64]>, Failure> {
    if values.is_null() {
        return Err(null("values"));
    }
    let all = std::slice::from_raw_parts(values, n_chains * n_draws);
    Ok(all.chunks(n_draws.max(1)).take(n_chains).collect())
}

/// Split R-hat of `n_chains` consecutive chains of `n_draws` values.
/// `*defined` is set to false (and `*out` to NaN) for zero variance.
///
/// # Safety
/// `values` must hold `n_chains * n_draws` doubles.
#[no_mangle]
pub unsafe extern "C" fn lca_split_rhat(
    values: *const f64,
    n_chains: usize,
    n_draws: usize,
    out: *mut f64,
    defined: *mut bool,
) -> c_int {
    guard(|| {
        let chains = chains_arg(values, n_chains, n_draws)?;
        let r = split_rhat_values(&chains)?;
        *out_arg(out, "out")? = r.unwrap_or(f64::NAN);
        *out_arg(defined, "defined")? = r.is_some();
        Ok(())
    })
}

/// Bulk ESS; layout and sentinel as for [`lca_split_rhat`].
///
/// # Safety
/// `values` must hold `n_chains * n_draws` doubles.
#[no_mangle]
pub unsafe extern "C" fn lca_ess_bulk(
    values: *const f64,
    n_chains: usize,
    n_draws: usize,
    out: *mut f64,
    defined: *mut bool,
) -> c_int {
    guard(|| {
        let chains = chains_arg(values, n_chains, n_draws)?;
        let r = ess_values(&chains)?;
        *out_arg(out, "out")? = r.unwrap_or(f64::NAN);
        *out_arg(defined, "defined")? = r.is_some();
        Ok(())
    })
}

/// PSIS-LOO of a row-major `draws × patients` log-likelihood matrix. Writes
/// `elpd_loo` and one Pareto k per patient (NaN where no fit was possible).
///
/// # Safety
/// `loglik` must hold `draws * patients` doubles, `khat` room for `patients`.
#[no_mangle]
pub unsafe extern "C" fn lca_psis_loo(
    loglik: *const f64,
    draws: usize,
    patients: usize,
    elpd_loo: *mut f64,
    khat: *mut f64,
) -> c_int {
    guard(|| {
        if loglik.is_null() {
            return Err(null("loglik"));
        }
        let m = LoglikMatrix {
            draws,
            patients,
            values: std::slice::from_raw_parts(loglik, draws * patients).to_vec(),
        };
        let loo = psis_loo(&m)?;
        *out_arg(elpd_loo, "elpd_loo")? = loo.elpd_loo;
        let ks: Vec<f64> = loo.pointwise.iter().map(|d| d.k.unwrap_or(f64::NAN)).collect();
        copy_out(&ks, khat, patients)
    })
}
