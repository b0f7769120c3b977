//! Posterior summaries and pairwise correlations.

use serde::{Deserialize, Serialize};

use super::convergence::{ess_values, split_rhat_values};
use crate::draws::DrawMatrix;
use crate::error::{Error, Result};
use crate::math::quantile_sorted;
use crate::model::{derived_quantities, ChannelLabels, ParamLayout, PatientRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub label: String,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
    /// `None` when undefined (zero variance) or not computed.
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub rhat_computed: bool,
}

impl SummaryTable {
    pub fn get(&self, name: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let opt = |v: Option<f64>| v.map(crate::data::fmt_f64).unwrap_or_else(|| "undefined".into());
        w.write_record(["name", "label", "mean", "q2.5", "q97.5", "rhat", "ess_bulk"])?;
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                r.label.clone(),
                crate::data::fmt_f64(r.mean),
                crate::data::fmt_f64(r.q025),
                crate::data::fmt_f64(r.q975),
                opt(r.rhat),
                opt(r.ess),
            ])?;
        }
        w.flush()
    }
}

/// What is needed to map parameter draws to derived quantities.
#[derive(Debug, Clone, Copy)]
pub struct DerivedContext<'a> {
    pub layout: &'a ParamLayout,
    pub labels: &'a ChannelLabels,
    /// Enables the prevalence row when the draws carry `η`.
    pub records: Option<&'a [PatientRecord]>,
    pub biomarker_scale: Option<&'a [f64]>,
}

/// Maps every draw through the derived quantities. Returns the draws and the
/// row labels.
pub fn derive_draws(draws: &DrawMatrix, ctx: &DerivedContext) -> Result<(DrawMatrix, Vec<String>)> {
    if draws.names != ctx.layout.names() {
        return Err(Error::Shape("draw columns do not match the parameter layout".into()));
    }
    let mut out: Option<DrawMatrix> = None;
    let mut labels = Vec::new();
    for s in 0..draws.nrows() {
        let params = ctx.layout.unflatten(draws.row(s))?;
        let report = derived_quantities(&ctx.layout.shape, ctx.labels, &params, ctx.records, ctx.biomarker_scale);
        let values: Vec<f64> = report.quantities.iter().map(|q| q.value).collect();
        let m = out.get_or_insert_with(|| {
            labels = report.quantities.iter().map(|q| q.label.clone()).collect();
            let names = report.quantities.iter().map(|q| q.key.clone()).collect();
            DrawMatrix::with_capacity(names, draws.nrows())
        });
        m.push_row(&values);
    }
    out.map(|m| (m, labels))
        .ok_or_else(|| Error::Diagnostic("no draws to summarize".into()))
}

/// Mean, central 95% interval and (when `rhat` is set) split R-hat per
/// column, pooled over chains. Bulk ESS is always reported.
pub fn summarize_columns(chains: &[&DrawMatrix], labels: Option<&[String]>, rhat: bool) -> Result<SummaryTable> {
    let first = chains
        .first()
        .ok_or_else(|| Error::Diagnostic("no chains to summarize".into()))?;
    if chains.iter().any(|c| c.names != first.names) {
        return Err(Error::Shape("chains have different columns".into()));
    }
    if chains.iter().all(|c| c.nrows() == 0) {
        return Err(Error::Diagnostic("no draws to summarize".into()));
    }
    let enough = chains.iter().all(|c| c.nrows() >= 4);
    let mut rows = Vec::with_capacity(first.ncols());
    for (c, name) in first.names.iter().enumerate() {
        let cols: Vec<Vec<f64>> = chains.iter().map(|m| m.column(c)).collect();
        let mut pooled: Vec<f64> = cols.concat();
        let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
        pooled.sort_by(f64::total_cmp);
        let refs: Vec<&[f64]> = cols.iter().map(|v| v.as_slice()).collect();
        rows.push(SummaryRow {
            name: name.clone(),
            label: labels.and_then(|l| l.get(c).cloned()).unwrap_or_else(|| name.clone()),
            mean,
            q025: quantile_sorted(&pooled, 0.025),
            q975: quantile_sorted(&pooled, 0.975),
            rhat: if rhat && enough { split_rhat_values(&refs)? } else { None },
            ess: if enough { ess_values(&refs)? } else { None },
        });
    }
    Ok(SummaryTable {
        rows,
        rhat_computed: rhat && enough,
    })
}

/// Summary of raw parameters, or of derived quantities when `derived` is
/// given. R-hat is computed when `rhat` is set.
pub fn summarize(chains: &[&DrawMatrix], derived: Option<&DerivedContext>, rhat: bool) -> Result<SummaryTable> {
    match derived {
        None => summarize_columns(chains, None, rhat),
        Some(ctx) => {
            let mut mapped = Vec::with_capacity(chains.len());
            let mut labels = Vec::new();
            for c in chains {
                let (m, l) = derive_draws(c, ctx)?;
                mapped.push(m);
                labels = l;
            }
            let refs: Vec<&DrawMatrix> = mapped.iter().collect();
            summarize_columns(&refs, Some(&labels), rhat)
        }
    }
}

/// Pearson correlation matrix over a subset of columns. An entry is `None`
/// when either column has zero variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsCorrelation {
    pub names: Vec<String>,
    pub matrix: Vec<Vec<Option<f64>>>,
}

impl PairsCorrelation {
    /// Off-diagonal pairs with `|ρ| > threshold`.
    pub fn flagged(&self, threshold: f64) -> Vec<(String, String, f64)> {
        let mut out = Vec::new();
        for a in 0..self.names.len() {
            for b in a + 1..self.names.len() {
                if let Some(r) = self.matrix[a][b] {
                    if r.abs() > threshold {
                        out.push((self.names[a].clone(), self.names[b].clone(), r));
                    }
                }
            }
        }
        out
    }
}

fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn pairs_correlation(draws: &DrawMatrix, params: &[String]) -> Result<PairsCorrelation> {
    if params.len() < 2 {
        return Err(Error::Diagnostic("pairs correlation needs at least 2 parameters".into()));
    }
    let cols: Vec<Vec<f64>> = params
        .iter()
        .map(|p| {
            draws
                .column_by_name(p)
                .ok_or_else(|| Error::Diagnostic(format!("no column named {p}")))
        })
        .collect::<Result<_>>()?;
    let k = cols.len();
    let mut matrix = vec![vec![None; k]; k];
    for a in 0..k {
        for b in a..k {
            let r = correlation(&cols[a], &cols[b]);
            matrix[a][b] = r;
            matrix[b][a] = r;
        }
    }
    Ok(PairsCorrelation {
        names: params.to_vec(),
        matrix,
    })
}
