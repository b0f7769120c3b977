//! Scalar numerics shared by the likelihood, samplers and diagnostics.

use std::f64::consts::PI;

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Logistic function `exp(x) / (1 + exp(x))`, evaluated on the sign-split form
/// so neither branch can overflow.
#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`expit`].
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln expit(x)`.
#[inline]
pub fn log_expit(x: f64) -> f64 {
    -softplus(-x)
}

/// `ln(1 - expit(x))`.
#[inline]
pub fn log1m_expit(x: f64) -> f64 {
    -softplus(x)
}

/// Bernoulli log-mass of `y` under a logit-scale linear predictor.
#[inline]
pub fn bernoulli_logit_lpmf(y: bool, eta: f64) -> f64 {
    if y {
        log_expit(eta)
    } else {
        log1m_expit(eta)
    }
}

/// Normal log-density parameterised by variance.
#[inline]
pub fn normal_lpdf(y: f64, mean: f64, var: f64) -> f64 {
    let r = y - mean;
    -0.5 * (LN_2PI + var.ln() + r * r / var)
}

/// `ln(exp(a) + exp(b))`.
#[inline]
pub fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log-sum-exp over a slice; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Entropy of a univariate normal with log standard deviation `log_sigma`.
#[inline]
pub fn normal_entropy(log_sigma: f64) -> f64 {
    log_sigma + 0.5 * (2.0 * PI * std::f64::consts::E).ln()
}

/// Sample quantile with linear interpolation between order statistics
/// (the "type 7" definition). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}
