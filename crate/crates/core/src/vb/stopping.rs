//! ELBO-trace stopping rule and best-iterate bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub max_iters: usize,
    /// Threshold on the rolling-median relative ELBO change.
    pub rel_tol: f64,
    /// Number of evaluations in the rolling window.
    pub window: usize,
    /// Evaluations without a new best before stopping.
    pub patience: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            max_iters: 200_000,
            rel_tol: 5e-3,
            window: 20,
            patience: 20,
        }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config("rel_tol must be positive".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if self.patience < self.window {
            return Err(Error::Config(format!(
                "patience ({}) must be at least the window ({})",
                self.patience, self.window
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    RelTol,
    Patience,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::MaxIters => "max_iters",
            StopReason::RelTol => "rel_tol",
            StopReason::Patience => "patience",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub elbo: f64,
}

/// `|e_k − e_{k−1}| / |e_{k−1}|`.
pub fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / prev.abs().max(f64::MIN_POSITIVE)
}

/// Index of the first maximum of the trace.
pub fn best_index(trace: &[TracePoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in trace.iter().enumerate() {
        if !p.elbo.is_finite() {
            continue;
        }
        match best {
            Some(b) if trace[b].elbo >= p.elbo => {}
            _ => best = Some(i),
        }
    }
    best
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Applies the rule to a trace of evaluations, checking in order: the
/// iteration cap; the median relative change over the last `window`
/// evaluations (the last change when `window = 1`); evaluations since the
/// best.
pub fn stopping_check(trace: &[TracePoint], rule: &StoppingRule) -> Option<StopReason> {
    let last = trace.last()?;
    if last.iteration >= rule.max_iters {
        return Some(StopReason::MaxIters);
    }
    let span = rule.window.max(2);
    if trace.len() >= span {
        let tail = &trace[trace.len() - span..];
        let changes: Vec<f64> = tail
            .windows(2)
            .map(|w| relative_change(w[0].elbo, w[1].elbo))
            .collect();
        if median(changes) < rule.rel_tol {
            return Some(StopReason::RelTol);
        }
    }
    if let Some(b) = best_index(trace) {
        if trace.len() - 1 - b >= rule.patience {
            return Some(StopReason::Patience);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestSnapshot<S> {
    /// Position in the trace.
    pub index: usize,
    pub iteration: usize,
    pub elbo: f64,
    pub snapshot: S,
}

/// Feeds evaluations one at a time, keeps the best snapshot, and reports
/// when to stop.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor<S> {
    rule: StoppingRule,
    trace: Vec<TracePoint>,
    best: Option<BestSnapshot<S>>,
}

impl<S> ConvergenceMonitor<S> {
    pub fn new(rule: StoppingRule) -> Self {
        ConvergenceMonitor {
            rule,
            trace: Vec::new(),
            best: None,
        }
    }

    /// Records an evaluation. `snapshot` is only called when the value is a
    /// new strict maximum.
    pub fn observe(&mut self, iteration: usize, elbo: f64, snapshot: impl FnOnce() -> S) -> Option<StopReason> {
        self.trace.push(TracePoint { iteration, elbo });
        let improved = elbo.is_finite() && self.best.as_ref().is_none_or(|b| elbo > b.elbo);
        if improved {
            self.best = Some(BestSnapshot {
                index: self.trace.len() - 1,
                iteration,
                elbo,
                snapshot: snapshot(),
            });
        }
        stopping_check(&self.trace, &self.rule)
    }

    pub fn trace(&self) -> &[TracePoint] {
        &self.trace
    }

    pub fn best(&self) -> Option<&BestSnapshot<S>> {
        self.best.as_ref()
    }

    pub fn into_best(self) -> Option<BestSnapshot<S>> {
        self.best
    }
}
