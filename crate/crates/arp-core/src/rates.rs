//! Empirical complexity-rate checks against the method's guarantees.
//!
//! The solver's theory promises, for order `p`, that the running minimum of
//! the gradient norm decays like `O(k^{-p/(p+1)})` and the running minimum
//! of the negative-curvature measure like `O(k^{-(p-1)/(p+1)})`, with an
//! iteration count of `O(max[eps1^{-(p+1)/p}, eps2^{-(p+1)/(p-1)}])`.
//! These are worst-case bounds with unexposed constants, so the checks here
//! are one-sided: fitted decay at least as fast as promised, and a
//! boundedness statistic with no upward trend.
//!
//! All fits run on the tail of a trace (default: the second half) to skip
//! transients; iteration ranks are 1-based so the log-log fits are
//! well-defined from the first record.

use thiserror::Error;

use crate::trace::RunTrace;

/// Minimum number of iteration records required to fit rates.
pub const MIN_TRACE_LEN: usize = 50;

#[derive(Debug, Error)]
pub enum RateError {
    #[error("trace has {len} iteration records; rate fits need at least {MIN_TRACE_LEN}")]
    ShortTrace { len: usize },
    #[error("tail fraction {value} must lie in (0, 1]")]
    BadTailFraction { value: f64 },
}

/// Fitted decay rates and boundedness statistics for one run.
#[derive(Debug, Clone)]
pub struct RateReport {
    /// Model order the exponents were computed against.
    pub p: usize,
    /// Fraction of the trace (from the end) used by the fits.
    pub tail_fraction: f64,
    /// Number of records in the fitted tail.
    pub tail_len: usize,
    /// Log-log slope of the running-min gradient norm against iteration
    /// rank; the guarantee corresponds to slope <= -p/(p+1) up to constants.
    pub grad_slope: f64,
    /// Log-log slope of the running-min curvature measure (exact-Hessian
    /// audit when present, otherwise the approximate measure).
    pub curvature_slope: f64,
    /// sup over the tail of running-min gradient norm times k^(p/(p+1)).
    pub grad_sup_statistic: f64,
    /// Mann-Kendall S of the gradient boundedness series over the tail;
    /// non-positive means no upward trend.
    pub grad_trend: i64,
    /// sup over the tail of running-min curvature times k^((p-1)/(p+1)).
    pub curvature_sup_statistic: f64,
    /// Mann-Kendall S of the curvature boundedness series over the tail.
    pub curvature_trend: i64,
    /// Fitted exponent of iterations against eps1, when produced by a
    /// sweep (single-trace reports leave it unset).
    pub sweep_exponent: Option<f64>,
}

/// Mann-Kendall trend statistic: the sum over ordered pairs of
/// `sign(z_j - z_i)`.  Positive values indicate an upward trend.  Pairs
/// equal to within a relative band of 1e-12 count as ties, so floating-point
/// noise on a flat series cannot masquerade as trend.
pub fn mann_kendall_s(z: &[f64]) -> i64 {
    let mut s = 0i64;
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            let tie_band = 1e-12 * z[i].abs().max(z[j].abs());
            if z[j] > z[i] + tie_band {
                s += 1;
            } else if z[j] < z[i] - tie_band {
                s -= 1;
            }
        }
    }
    s
}

/// Least-squares slope of `ln y` against `ln x`.  Non-positive values are
/// clamped to a tiny positive floor so exact zeros (a converged measure)
/// cannot poison the fit.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "slope fit needs at least two points");
    let lx: Vec<f64> = xs.iter().map(|&x| x.max(1e-300).ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|&y| y.max(1e-300).ln()).collect();
    let n = lx.len() as f64;
    let mean_x = lx.iter().sum::<f64>() / n;
    let mean_y = ly.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in lx.iter().zip(ly.iter()) {
        cov += (x - mean_x) * (y - mean_y);
        var += (x - mean_x) * (x - mean_x);
    }
    assert!(var > 0.0, "slope fit needs distinct abscissae");
    cov / var
}

/// Fitted exponent `e` of `iterations ~ C * eps^(-e)` from a sweep table of
/// `(eps, iterations)` pairs.
pub fn sweep_exponent(pairs: &[(f64, f64)]) -> f64 {
    assert!(pairs.len() >= 2, "sweep fit needs at least two grid points");
    let inv_eps: Vec<f64> = pairs.iter().map(|&(e, _)| 1.0 / e).collect();
    let iters: Vec<f64> = pairs.iter().map(|&(_, it)| it).collect();
    log_log_slope(&inv_eps, &iters)
}

/// Rate report for one trace.  `tail_fraction` selects the portion (from
/// the end) the fits run on.
pub fn fit_rates(trace: &RunTrace, p: usize, tail_fraction: f64) -> Result<RateReport, RateError> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(RateError::BadTailFraction {
            value: tail_fraction,
        });
    }
    let len = trace.iters.len();
    if len < MIN_TRACE_LEN {
        return Err(RateError::ShortTrace { len });
    }

    // Running minima over the iteration records, 1-based ranks.
    let mut min_grad = Vec::with_capacity(len);
    let mut min_curv = Vec::with_capacity(len);
    let mut best_g = f64::INFINITY;
    let mut best_c = f64::INFINITY;
    for record in &trace.iters {
        best_g = best_g.min(record.grad_norm);
        best_c = best_c.min(record.beta.unwrap_or(record.chi));
        min_grad.push(best_g);
        min_curv.push(best_c);
    }
    let ranks: Vec<f64> = (1..=len).map(|k| k as f64).collect();

    let tail_len = ((len as f64) * tail_fraction).ceil() as usize;
    let tail_len = tail_len.clamp(2, len);
    let start = len - tail_len;

    let grad_exponent = p as f64 / (p as f64 + 1.0);
    let curv_exponent = (p as f64 - 1.0) / (p as f64 + 1.0);
    let grad_stat: Vec<f64> = (start..len)
        .map(|i| min_grad[i] * ranks[i].powf(grad_exponent))
        .collect();
    let curv_stat: Vec<f64> = (start..len)
        .map(|i| min_curv[i] * ranks[i].powf(curv_exponent))
        .collect();

    Ok(RateReport {
        p,
        tail_fraction,
        tail_len,
        grad_slope: log_log_slope(&ranks[start..], &min_grad[start..]),
        curvature_slope: log_log_slope(&ranks[start..], &min_curv[start..]),
        grad_sup_statistic: grad_stat.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        grad_trend: mann_kendall_s(&grad_stat),
        curvature_sup_statistic: curv_stat.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        curvature_trend: mann_kendall_s(&curv_stat),
        sweep_exponent: None,
    })
}
