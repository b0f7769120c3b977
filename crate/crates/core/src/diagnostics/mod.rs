//! Convergence diagnostics, posterior summaries, correlation checks and
//! PSIS-LOO. Everything here works on plain draw matrices, so Gibbs chains
//! and variational draws are treated alike.

mod convergence;
mod plots;
mod psis;
mod summary;

pub use convergence::{ess_bulk, ess_values, split_rhat, split_rhat_values};
pub use plots::{elbo_svg, khat_svg, pairs_svg, MAX_PANEL_POINTS};
pub use psis::{
    gpd_fit_tail, gpd_quantile, pointwise_loglik, psis_loo, tail_length, GpdFit, KCategory, LoglikMatrix,
    ParetoDiag, PsisLoo,
};
pub use summary::{
    derive_draws, pairs_correlation, summarize, summarize_columns, DerivedContext, PairsCorrelation, SummaryRow,
    SummaryTable,
};
