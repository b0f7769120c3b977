//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 refusal to
//! overwrite, 4 numerical divergence.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{read_dataset, write_dataset, Standardization};
use crate::error::{Error, Result};
use crate::fit_io::{read_json, write_gibbs_fit, write_json, write_vb_fit, FitContext, LoadedFit};
use crate::gibbs::{gibbs_fit, GibbsOptions};
use crate::model::{ChannelLabels, PriorSpec, Priors};
use crate::report::{compare, derived_summary, format_comparison, format_summary, write_diagnostics, write_plots};
use crate::synth::{channel_rates, generate_cohort, sidecar_paths, write_labels, SynthConfig, SynthTruth};
use crate::vb::{svi_fit, StoppingRule, VbOptions};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_OVERWRITE: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "lcapheno", version, about = "Bayesian latent-class phenotyping of EHR cohorts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the default synthetic-cohort configuration as JSON.
    DefaultConfig,
    /// Generate a synthetic cohort with its truth and label sidecars.
    Synth(SynthArgs),
    /// Fit the model with the Gibbs sampler or variational inference.
    Fit(FitArgs),
    /// Convergence, PSIS-LOO and correlation diagnostics for a fit.
    Diagnose(DiagnoseArgs),
    /// Posterior summary of the derived quantities.
    Summarize(SummarizeArgs),
    /// Side-by-side derived quantities of two fits.
    Compare(CompareArgs),
    /// Pairs plot and, for variational fits, the ELBO trace.
    Plot(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synthetic-cohort configuration (JSON). Defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output cohort CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the cohort size.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Gibbs,
    Vb,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Cohort CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Output fit directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Prior hyperparameters (JSON); weakly informative defaults otherwise.
    #[arg(long)]
    pub priors: Option<PathBuf>,
    /// Bounds `A,B` of the uniform prior on every `η_i`.
    #[arg(long, value_parser = parse_bounds, allow_hyphen_values = true)]
    pub eta_bounds: Option<(f64, f64)>,
    /// Channel names (JSON), or a cohort truth sidecar to take them from.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,

    #[arg(long, default_value_t = 3, help_heading = "Gibbs")]
    pub chains: usize,
    #[arg(long, default_value_t = 4000, help_heading = "Gibbs")]
    pub iters: usize,
    #[arg(long, default_value_t = 1000, help_heading = "Gibbs")]
    pub warmup: usize,
    #[arg(long, default_value_t = 1, help_heading = "Gibbs")]
    pub thin: usize,
    /// Do not store the per-patient `η` draws (disables PSIS-LOO).
    #[arg(long, help_heading = "Gibbs")]
    pub no_eta: bool,
    /// Worker threads for the chains.
    #[arg(long, env = "LCAPHENO_THREADS", help_heading = "Gibbs")]
    pub threads: Option<usize>,

    #[arg(long, default_value_t = 200_000, help_heading = "VB")]
    pub max_iters: usize,
    /// Rolling-median relative ELBO change that ends the run.
    #[arg(long, default_value_t = 5e-3, help_heading = "VB")]
    pub tol: f64,
    #[arg(long, default_value_t = 20, help_heading = "VB")]
    pub window: usize,
    #[arg(long, default_value_t = 20, help_heading = "VB")]
    pub patience: usize,
    #[arg(long, default_value_t = 0.05, help_heading = "VB")]
    pub lr: f64,
    #[arg(long, default_value_t = 1, help_heading = "VB")]
    pub n_mc: usize,
    #[arg(long, default_value_t = 8, help_heading = "VB")]
    pub n_mc_eval: usize,
    /// Patients per gradient step; all patients when omitted.
    #[arg(long, help_heading = "VB")]
    pub minibatch: Option<usize>,
    #[arg(long, default_value_t = 100, help_heading = "VB")]
    pub eval_every: usize,
    /// Posterior draws to store in `draws.csv`; with 0 nothing is stored and
    /// diagnostics regenerate 1000 draws from the saved state.
    #[arg(long, default_value_t = 1000, help_heading = "VB")]
    pub draws: usize,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Fit directory.
    #[arg(long)]
    pub fit: PathBuf,
    /// Output directory; the fit directory when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated parameters for the pairs plot.
    #[arg(long, value_delimiter = ',')]
    pub pairs: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub fit: PathBuf,
    /// Also write the summary as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Also write the comparison as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_bounds(s: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected two numbers A,B".into());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| format!("not a number: {}", parts[0]))?;
    let b: f64 = parts[1].trim().parse().map_err(|_| format!("not a number: {}", parts[1]))?;
    if !(a < b) {
        return Err("lower bound must be below the upper bound".into());
    }
    Ok((a, b))
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Overwrite(_) => EXIT_OVERWRITE,
        Error::Divergence(_) | Error::Numerical { .. } => EXIT_DIVERGENCE,
        _ => EXIT_INPUT,
    }
}

fn refuse_existing(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Overwrite(path.to_path_buf()));
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut config: SynthConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.n {
        config.n = n;
    }
    let (truth_path, labels_path) = sidecar_paths(&args.out);
    for p in [&args.out, &truth_path, &labels_path] {
        refuse_existing(p, args.force)?;
    }
    let cohort = generate_cohort(&config)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_dataset(&args.out, &cohort.dataset)?;
    write_json(&truth_path, &cohort.truth)?;
    let file = File::create(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let mut w = BufWriter::new(file);
    write_labels(&cohort.d_true, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&labels_path, e))?;

    let stdout = io::stdout();
    let mut out = stdout.lock();
    let _ = writeln!(
        out,
        "wrote {} patients to {} (prevalence target {:.4}, realized {:.4})",
        cohort.dataset.len(),
        args.out.display(),
        cohort.truth.prevalence_target,
        cohort.truth.prevalence_realized
    );
    let _ = writeln!(
        out,
        "{:32} {:>11} {:>11} {:>11} {:>11}",
        "channel", "target sens", "emp. sens", "target spec", "emp. spec"
    );
    for r in channel_rates(&cohort) {
        let _ = writeln!(
            out,
            "{:32} {:>11.4} {:>11.4} {:>11.4} {:>11.4}",
            r.channel, r.target_sens, r.empirical_sens, r.target_spec, r.empirical_spec
        );
    }
    let (a, b) = cohort.truth.model_eta_bounds();
    let _ = writeln!(out, "well-specified fit: --eta-bounds={a},{b}");
    Ok(())
}

fn read_labels(path: &Path) -> Result<ChannelLabels> {
    match read_json::<SynthTruth>(path) {
        Ok(truth) => Ok(truth.labels),
        Err(_) => read_json::<ChannelLabels>(path),
    }
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    crate::fit_io::check_output_dir(&args.out, args.force)?;
    let raw = read_dataset(&args.data)?;
    let standardization = Standardization::fit(&raw);
    let data = standardization.apply(&raw);
    let mut spec = match &args.priors {
        Some(p) => read_json::<PriorSpec>(p)?,
        None => PriorSpec::default_for(&data.shape),
    };
    if let Some(bounds) = args.eta_bounds {
        spec.eta_bounds = bounds;
    }
    let priors = Priors::new(spec.clone(), &data.shape)?;
    let labels = match &args.labels {
        Some(p) => read_labels(p)?,
        None => ChannelLabels::default(),
    };
    let context = FitContext {
        data_path: args.data.to_string_lossy().into_owned(),
        n_patients: data.len(),
        shape: data.shape,
        labels,
        standardization,
        priors: spec,
    };
    match args.method {
        MethodArg::Gibbs => {
            let options = GibbsOptions {
                chains: args.chains,
                iters: args.iters,
                warmup: args.warmup,
                thin: args.thin,
                seed: args.seed,
                keep_eta: !args.no_eta,
                threads: args.threads,
                ..Default::default()
            };
            let fit = gibbs_fit(&data, &priors, &options)?;
            let m = write_gibbs_fit(&args.out, &context, &fit, args.force)?;
            println!(
                "gibbs: {} chains x {} draws in {:.1} s -> {}",
                fit.chains.len(),
                options.draws_per_chain(),
                fit.total_wall_time_secs(),
                args.out.display()
            );
            for (c, chain) in m.gibbs.iter().flat_map(|g| &g.chains).enumerate() {
                let rates: Vec<String> = chain
                    .acceptance
                    .iter()
                    .map(|a| format!("{} {:.2}", a.block, a.sampling_rate))
                    .collect();
                println!("  chain {c}: {}", rates.join(", "));
            }
        }
        MethodArg::Vb => {
            let options = VbOptions {
                lr: args.lr,
                n_mc: args.n_mc,
                n_mc_eval: args.n_mc_eval,
                minibatch: args.minibatch,
                eval_every: args.eval_every,
                rule: StoppingRule {
                    max_iters: args.max_iters,
                    rel_tol: args.tol,
                    window: args.window,
                    patience: args.patience,
                },
                seed: args.seed,
                ..Default::default()
            };
            let fit = svi_fit(&data, &priors, &options)?;
            let n_draws = if args.draws == 0 { 1000 } else { args.draws };
            write_vb_fit(&args.out, &context, &fit, n_draws, args.draws > 0, args.force)?;
            println!(
                "vb: stopped ({}) after {} iterations in {:.1} s; best ELBO {:.3} at iteration {} -> {}",
                fit.stop_reason.as_str(),
                fit.iterations,
                fit.wall_time_secs,
                fit.best_elbo,
                fit.best_iteration,
                args.out.display()
            );
        }
    }
    Ok(())
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<()> {
    let fit = LoadedFit::open(&args.fit)?;
    let out = args.out.clone().unwrap_or_else(|| args.fit.clone());
    let report = write_diagnostics(&fit, &out, args.pairs.as_deref())?;
    let stdout = io::stdout();
    let mut w = stdout.lock();
    for note in &report.notes {
        let _ = writeln!(w, "note: {note}");
    }
    let _ = format_summary(&report.derived, &mut w);
    if let Some(loo) = &report.loo {
        let _ = writeln!(
            w,
            "elpd_loo {:.2} (se {:.2}); k-hat good {} / ok {} / bad {}",
            loo.elpd_loo, loo.se_elpd_loo, loo.good, loo.ok, loo.bad
        );
    }
    for p in &report.pairs.flagged {
        let _ = writeln!(w, "warning: |rho| = {:.3} between {} and {}", p.rho.abs(), p.a, p.b);
    }
    let _ = writeln!(w, "wrote diagnostics to {}", out.display());
    Ok(())
}

fn cmd_summarize(args: &SummarizeArgs) -> Result<()> {
    let fit = LoadedFit::open(&args.fit)?;
    let data = fit.context().load_data()?;
    let table = derived_summary(&fit, &data, &fit.draw_chains()?)?;
    let _ = format_summary(&table, io::stdout().lock());
    if let Some(path) = &args.csv {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        table.write_csv(BufWriter::new(file)).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let a = LoadedFit::open(&args.a)?;
    let b = LoadedFit::open(&args.b)?;
    let cmp = compare(&a, &b)?;
    let _ = format_comparison(&cmp, io::stdout().lock());
    if let Some(path) = &args.out {
        write_json(path, &cmp)?;
    }
    Ok(())
}

fn cmd_plot(args: &DiagnoseArgs) -> Result<()> {
    let fit = LoadedFit::open(&args.fit)?;
    let out = args.out.clone().unwrap_or_else(|| args.fit.clone());
    write_plots(&fit, &out, args.pairs.as_deref())?;
    println!("wrote plots to {}", out.display());
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::DefaultConfig => {
            let json = serde_json::to_string_pretty(&SynthConfig::default()).expect("config serializes");
            println!("{json}");
            Ok(())
        }
        Command::Synth(a) => cmd_synth(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
