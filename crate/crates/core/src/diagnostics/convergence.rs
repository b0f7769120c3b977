//! Split R-hat and bulk effective sample size.

use crate::draws::DrawMatrix;
use crate::error::{Error, Result};

const MIN_DRAWS: usize = 4;

fn check_chains(chains: &[&[f64]]) -> Result<usize> {
    if chains.is_empty() {
        return Err(Error::Diagnostic("at least one chain is required".into()));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Diagnostic("chains have different lengths".into()));
    }
    if n < MIN_DRAWS {
        return Err(Error::Diagnostic(format!(
            "at least {MIN_DRAWS} draws per chain are required, got {n}"
        )));
    }
    Ok(n)
}

/// Each chain cut into two halves of equal length (the middle draw of an
/// odd-length chain is dropped).
fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Split R-hat from raw columns, one slice per chain. `None` when the
/// within-chain variance is zero (undefined).
pub fn split_rhat_values(chains: &[&[f64]]) -> Result<Option<f64>> {
    check_chains(chains)?;
    let halves = split(chains);
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = halves.iter().map(|h| var(h)).sum::<f64>() / halves.len() as f64;
    if !(w > 0.0) || !w.is_finite() {
        return Ok(None);
    }
    let b_over_n = var(&means);
    let var_plus = (n - 1.0) / n * w + b_over_n;
    Ok(Some((var_plus / w).sqrt()))
}

/// Autocovariances at lags `0..=max_lag` (divided by `n`).
fn autocov(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    (0..=max_lag.min(n - 1))
        .map(|t| c[..n - t].iter().zip(&c[t..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Bulk ESS from Geyer's initial positive (monotone) sequence of the
/// pooled split-chain autocorrelations, capped at the total draw count.
/// `None` for zero variance.
pub fn ess_values(chains: &[&[f64]]) -> Result<Option<f64>> {
    check_chains(chains)?;
    let halves = split(chains);
    let m = halves.len();
    let n = halves[0].len();
    let total = (m * n) as f64;
    let acovs: Vec<Vec<f64>> = halves.iter().map(|h| autocov(h, n - 1)).collect();
    let nf = n as f64;
    let chain_vars: Vec<f64> = acovs.iter().map(|a| a[0] * nf / (nf - 1.0)).collect();
    let mean_var = mean(&chain_vars);
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += var(&means);
    }
    if !(var_plus > 0.0) || !var_plus.is_finite() {
        return Ok(None);
    }
    let rho = |t: usize| -> f64 {
        let avg = acovs.iter().map(|a| a[t]).sum::<f64>() / m as f64;
        1.0 - (mean_var - avg) / var_plus
    };

    // Sum of positive, monotonically non-increasing pair sums.
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * sum).max(1.0 / total.log10().max(1.0));
    Ok(Some((total / tau).min(total)))
}

fn columns<'a>(chains: &[&'a DrawMatrix], param: &str) -> Result<Vec<Vec<f64>>> {
    chains
        .iter()
        .map(|c| {
            c.column_by_name(param)
                .ok_or_else(|| Error::Diagnostic(format!("no column named {param}")))
        })
        .collect()
}

/// Split R-hat of one named parameter across chains.
pub fn split_rhat(chains: &[&DrawMatrix], param: &str) -> Result<Option<f64>> {
    let cols = columns(chains, param)?;
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    split_rhat_values(&refs)
}

/// Bulk ESS of one named parameter across chains.
pub fn ess_bulk(chains: &[&DrawMatrix], param: &str) -> Result<Option<f64>> {
    let cols = columns(chains, param)?;
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    ess_values(&refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn independent_chains() {
        let a = normals(1, 5000);
        let b = normals(2, 5000);
        let r = split_rhat_values(&[&a, &b]).unwrap().unwrap();
        assert!(r < 1.01, "{r}");
        let ess = ess_values(&[&a, &b]).unwrap().unwrap();
        assert!((ess - 10_000.0).abs() < 1000.0, "{ess}");
    }

    #[test]
    fn trend_inflates_rhat() {
        let trend: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert!(split_rhat_values(&[&trend]).unwrap().unwrap() > 1.1);
    }

    #[test]
    fn constant_chains_are_undefined() {
        let c = vec![2.0; 100];
        assert_eq!(split_rhat_values(&[&c, &c]).unwrap(), None);
        assert_eq!(ess_values(&[&c]).unwrap(), None);
    }

    #[test]
    fn too_few_draws() {
        assert!(matches!(split_rhat_values(&[&[1.0, 2.0, 3.0]]), Err(Error::Diagnostic(_))));
    }

    #[test]
    fn ar1_ess_ratio() {
        let z = normals(3, 20_000);
        let mut x = vec![0.0; z.len()];
        for t in 1..z.len() {
            x[t] = 0.9 * x[t - 1] + z[t];
        }
        let ratio = ess_values(&[&x]).unwrap().unwrap() / x.len() as f64;
        let theory = 0.1 / 1.9;
        assert!((ratio - theory).abs() < 0.5 * theory, "{ratio}");
    }
}
