//! Reports built from fit directories: diagnostics, derived summaries and
//! method comparison.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    elbo_svg, khat_svg, pairs_correlation, pairs_svg, pointwise_loglik, psis_loo, summarize, DerivedContext,
    KCategory, PairsCorrelation, SummaryTable,
};
use crate::draws::DrawMatrix;
use crate::error::{Error, Result};
use crate::fit_io::{write_json, LoadedFit, Method};
use crate::model::Dataset;

/// Pairs with `|ρ|` above this are flagged.
pub const CORRELATION_FLAG: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// `None` for an open lower end.
    pub lower: Option<f64>,
    /// `None` for an open upper end.
    pub upper: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooSection {
    pub elpd_loo: f64,
    pub se_elpd_loo: f64,
    pub lppd: f64,
    pub p_loo: f64,
    pub n_draws: usize,
    pub good: usize,
    pub ok: usize,
    pub bad: usize,
    pub khat_histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedPair {
    pub a: String,
    pub b: String,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsSection {
    pub correlation: PairsCorrelation,
    pub flagged: Vec<FlaggedPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub method: Method,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub notes: Vec<String>,
    /// Global parameters (the per-patient `η` are left out).
    pub parameters: SummaryTable,
    pub derived: SummaryTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loo: Option<LooSection>,
    pub pairs: PairsSection,
}

fn khat_histogram(ks: &[Option<f64>]) -> Vec<HistogramBin> {
    let mut edges = vec![None];
    edges.extend((0..=10).map(|i| Some(i as f64 / 10.0)));
    edges.push(None);
    let mut bins: Vec<HistogramBin> = edges
        .windows(2)
        .map(|w| HistogramBin {
            lower: w[0],
            upper: w[1],
            count: 0,
        })
        .collect();
    for k in ks.iter().flatten() {
        let idx = bins
            .iter()
            .position(|b| b.lower.is_none_or(|l| *k >= l) && b.upper.is_none_or(|u| *k < u))
            .expect("bins cover the real line");
        bins[idx].count += 1;
    }
    bins
}

/// Default pairs subset: every biomarker coefficient.
pub fn default_pairs(fit: &LoadedFit) -> Vec<String> {
    let layout = fit.layout();
    let names = layout.names();
    (0..layout.shape.j)
        .flat_map(|j| layout.beta_y_range(j))
        .map(|i| names[i].clone())
        .collect()
}

fn global_columns(chains: &[DrawMatrix], n_global: usize) -> Vec<DrawMatrix> {
    let cols: Vec<usize> = (0..n_global).collect();
    chains.iter().map(|c| c.select(&cols)).collect()
}

/// Derived-quantity summary with raw-scale biomarker shifts.
pub fn derived_summary(fit: &LoadedFit, data: &Dataset, chains: &[DrawMatrix]) -> Result<SummaryTable> {
    let layout = fit.layout();
    let ctx = fit.context();
    let derived = DerivedContext {
        layout: &layout,
        labels: &ctx.labels,
        records: Some(&data.records),
        biomarker_scale: Some(&ctx.standardization.sds),
    };
    let refs: Vec<&DrawMatrix> = chains.iter().collect();
    summarize(&refs, Some(&derived), fit.method() == Method::Gibbs)
}

pub fn diagnose(fit: &LoadedFit, pairs: Option<&[String]>) -> Result<(DiagnosticReport, Option<crate::diagnostics::PsisLoo>)> {
    let data = fit.context().load_data()?;
    let chains = fit.draw_chains()?;
    let layout = fit.layout();
    let gibbs = fit.method() == Method::Gibbs;
    let mut notes = Vec::new();
    if !gibbs {
        notes.push("R-hat omitted: a variational fit has a single 'chain' of independent draws".into());
    }

    let globals = global_columns(&chains, layout.n_global());
    let global_refs: Vec<&DrawMatrix> = globals.iter().collect();
    let parameters = summarize(&global_refs, None, gibbs)?;
    let derived = derived_summary(fit, &data, &chains)?;

    let chain_refs: Vec<&DrawMatrix> = chains.iter().collect();
    let pooled = DrawMatrix::concat(&chain_refs)?;
    let (loo, psis) = if layout.include_eta {
        let ll = pointwise_loglik(&pooled, &layout, &data)?;
        if ll.draws < 100 {
            notes.push(format!("PSIS-LOO computed from only {} draws", ll.draws));
        }
        let psis = psis_loo(&ll)?;
        let (good, ok, bad) = psis.category_counts();
        let ks: Vec<Option<f64>> = psis.pointwise.iter().map(|d| d.k).collect();
        (
            Some(LooSection {
                elpd_loo: psis.elpd_loo,
                se_elpd_loo: psis.se_elpd_loo,
                lppd: psis.lppd,
                p_loo: psis.p_loo,
                n_draws: ll.draws,
                good,
                ok,
                bad,
                khat_histogram: khat_histogram(&ks),
            }),
            Some(psis),
        )
    } else {
        notes.push("PSIS-LOO skipped: the draws do not include the per-patient eta".into());
        (None, None)
    };

    let names = match pairs {
        Some(p) => p.to_vec(),
        None => default_pairs(fit),
    };
    let correlation = pairs_correlation(&pooled, &names)?;
    let flagged = correlation
        .flagged(CORRELATION_FLAG)
        .into_iter()
        .map(|(a, b, rho)| FlaggedPair { a, b, rho })
        .collect();

    Ok((
        DiagnosticReport {
            method: fit.method(),
            n_chains: chains.len(),
            draws_per_chain: chains[0].nrows(),
            notes,
            parameters,
            derived,
            loo,
            pairs: PairsSection { correlation, flagged },
        },
        psis,
    ))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `khat.csv`, `khat.svg`, `pairs.svg` and, for VB
/// fits, `elbo.svg` into `out`.
pub fn write_diagnostics(fit: &LoadedFit, out: &Path, pairs: Option<&[String]>) -> Result<DiagnosticReport> {
    let (report, psis) = diagnose(fit, pairs)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("report.json"), &report)?;
    if let Some(psis) = &psis {
        let mut csv = String::from("patient,k,category\n");
        for (i, d) in psis.pointwise.iter().enumerate() {
            let k = d.k.map(crate::data::fmt_f64).unwrap_or_else(|| "undefined".into());
            let cat = match d.category {
                KCategory::Good => "good",
                KCategory::Ok => "ok",
                KCategory::Bad => "bad",
            };
            csv.push_str(&format!("{i},{k},{cat}\n"));
        }
        write_text(&out.join("khat.csv"), &csv)?;
        write_text(&out.join("khat.svg"), &khat_svg(&psis.pointwise))?;
    }
    write_plots(fit, out, pairs)?;
    Ok(report)
}

/// Writes `pairs.svg` and, for VB fits, `elbo.svg`.
pub fn write_plots(fit: &LoadedFit, out: &Path, pairs: Option<&[String]>) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let chains = fit.draw_chains()?;
    let refs: Vec<&DrawMatrix> = chains.iter().collect();
    let pooled = DrawMatrix::concat(&refs)?;
    let names = match pairs {
        Some(p) => p.to_vec(),
        None => default_pairs(fit),
    };
    write_text(&out.join("pairs.svg"), &pairs_svg(&pooled, &names)?)?;
    if let Some(vb) = &fit.manifest.vb {
        let trace = fit.elbo_trace()?;
        write_text(
            &out.join("elbo.svg"),
            &elbo_svg(&trace, vb.best_iteration, vb.options.rule.rel_tol)?,
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub label: String,
    pub a: Interval,
    pub b: Interval,
    /// The two 95% intervals do not overlap.
    pub disjoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method_a: Method,
    pub method_b: Method,
    pub rows: Vec<ComparisonRow>,
    pub n_flagged: usize,
}

pub fn compare(a: &LoadedFit, b: &LoadedFit) -> Result<Comparison> {
    let (ca, cb) = (a.context(), b.context());
    if ca.shape != cb.shape || ca.n_patients != cb.n_patients {
        return Err(Error::Shape(format!(
            "fits are over different data: {:?} with {} patients vs {:?} with {}",
            ca.shape, ca.n_patients, cb.shape, cb.n_patients
        )));
    }
    let data = ca.load_data()?;
    let sa = derived_summary(a, &data, &a.draw_chains()?)?;
    let sb = derived_summary(b, &data, &b.draw_chains()?)?;
    let interval = |r: &crate::diagnostics::SummaryRow| Interval {
        mean: r.mean,
        q025: r.q025,
        q975: r.q975,
    };
    let rows: Vec<ComparisonRow> = sa
        .rows
        .iter()
        .filter_map(|ra| sb.get(&ra.name).map(|rb| (ra, rb)))
        .map(|(ra, rb)| ComparisonRow {
            name: ra.name.clone(),
            label: ra.label.clone(),
            a: interval(ra),
            b: interval(rb),
            disjoint: ra.q975 < rb.q025 || rb.q975 < ra.q025,
        })
        .collect();
    Ok(Comparison {
        method_a: a.method(),
        method_b: b.method(),
        n_flagged: rows.iter().filter(|r| r.disjoint).count(),
        rows,
    })
}

/// Fixed-width table: `label  mean (2.5%, 97.5%)`.
pub fn format_summary<W: Write>(table: &SummaryTable, mut out: W) -> std::io::Result<()> {
    let width = table.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(9);
    writeln!(out, "{:width$}  {:>30}  {:>7}  {:>8}", "quantity", "mean (95% CI)", "R-hat", "ESS")?;
    for r in &table.rows {
        let ci = format!("{:.4} ({:.4}, {:.4})", r.mean, r.q025, r.q975);
        let rhat = r.rhat.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let ess = r.ess.map(|v| format!("{v:.0}")).unwrap_or_else(|| "-".into());
        writeln!(out, "{:width$}  {ci:>30}  {rhat:>7}  {ess:>8}", r.label)?;
    }
    Ok(())
}

pub fn format_comparison<W: Write>(cmp: &Comparison, mut out: W) -> std::io::Result<()> {
    let width = cmp.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(9);
    let (ma, mb) = (cmp.method_a.as_str(), cmp.method_b.as_str());
    writeln!(out, "{:width$}  {ma:>30}  {mb:>30}  flag", "quantity")?;
    for r in &cmp.rows {
        let fmt = |i: &Interval| format!("{:.4} ({:.4}, {:.4})", i.mean, i.q025, i.q975);
        let flag = if r.disjoint { "DISJOINT" } else { "" };
        writeln!(out, "{:width$}  {:>30}  {:>30}  {flag}", r.label, fmt(&r.a), fmt(&r.b))?;
    }
    writeln!(out, "{} of {} rows have disjoint intervals", cmp.n_flagged, cmp.rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_covers_everything() {
        let ks = [Some(-0.3), Some(0.0), Some(0.45), Some(0.7), Some(1.0), Some(2.5), None];
        let bins = khat_histogram(&ks);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 6);
        assert_eq!(bins[0].count, 1);
        assert_eq!(bins.last().unwrap().count, 2);
    }
}
