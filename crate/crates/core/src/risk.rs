//! Risk metrics over simulated terminal portfolio values.
//!
//! VaR is reported as a portfolio value level: the `alpha`-quantile of terminal
//! values. `potential_loss` carries the same figure as a loss from the initial
//! investment.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::market_data::ReturnMatrix;
use crate::optimizer::WeightVector;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_BACKTEST_WINDOW: usize = 252;
pub const DEFAULT_PERCENTILES: [f64; 9] = [0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.99];

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// Quantile of already-sorted values using linear interpolation at
/// `h = alpha * (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], alpha: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptySeries);
    }
    check_alpha(alpha)?;
    let h = alpha * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

pub fn quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, alpha)
}

/// Fraction of values strictly below `initial_value`.
pub fn chance_of_loss(values: &[f64], initial_value: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    if !(initial_value > 0.0) {
        return Err(Error::invalid("initial_value must be positive"));
    }
    let below = values.iter().filter(|&&v| v < initial_value).count();
    Ok(below as f64 / values.len() as f64)
}

/// Closed-form `alpha`-quantile of a single GBM asset at horizon `t`:
/// `s0 * exp((mu - sigma^2 / 2) t + sigma sqrt(t) z_alpha)`.
pub fn analytic_var_single_asset(s0: f64, mu: f64, sigma: f64, t: f64, alpha: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid("sigma must be non-negative"));
    }
    if !(t > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    let drift = (mu - 0.5 * sigma * sigma) * t;
    if sigma == 0.0 {
        return Ok(s0 * drift.exp());
    }
    let z = Normal::standard().inverse_cdf(alpha);
    Ok(s0 * (drift + sigma * t.sqrt() * z).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Percentile {
    pub fraction: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub var_level: f64,
    pub var_value: f64,
    pub potential_loss: f64,
    pub chance_of_loss: f64,
    pub percentiles: Vec<Percentile>,
    pub initial_value: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Summarizes terminal values: VaR at `alpha`, chance of loss and the default
/// percentile table (with `alpha` merged in if absent).
pub fn risk_report(
    values: &[f64],
    alpha: f64,
    initial_value: f64,
    seed: u64,
) -> Result<RiskReport> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("terminal values"));
    }
    check_alpha(alpha)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut fractions = DEFAULT_PERCENTILES.to_vec();
    if !fractions.contains(&alpha) {
        fractions.push(alpha);
        fractions.sort_by(f64::total_cmp);
    }
    let percentiles = fractions
        .iter()
        .map(|&f| {
            Ok(Percentile {
                fraction: f,
                value: quantile_sorted(&sorted, f)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let var_value = quantile_sorted(&sorted, alpha)?;
    Ok(RiskReport {
        var_level: alpha,
        var_value,
        potential_loss: initial_value - var_value,
        chance_of_loss: chance_of_loss(values, initial_value)?,
        percentiles,
        initial_value,
        n_paths: values.len(),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViolationCount {
    pub violations: usize,
    pub rate: f64,
}

/// A violation at `t` is a realized outcome strictly below its forecast
/// threshold.
pub fn count_var_violations(realized: &[f64], forecasts: &[f64]) -> Result<ViolationCount> {
    if realized.len() != forecasts.len() {
        return Err(Error::DimensionMismatch {
            expected: realized.len(),
            got: forecasts.len(),
        });
    }
    if realized.is_empty() {
        return Err(Error::EmptySeries);
    }
    let violations = realized
        .iter()
        .zip(forecasts)
        .filter(|(r, f)| r < f)
        .count();
    Ok(ViolationCount {
        violations,
        rate: violations as f64 / realized.len() as f64,
    })
}

/// Per-period log-return of a portfolio held at fixed weights.
pub fn portfolio_log_returns(returns: &ReturnMatrix, weights: &WeightVector) -> Result<Vec<f64>> {
    if weights.len() != returns.n_assets() {
        return Err(Error::DimensionMismatch {
            expected: returns.n_assets(),
            got: weights.len(),
        });
    }
    Ok(returns
        .returns()
        .row_iter()
        .map(|row| {
            row.iter()
                .zip(&weights.w)
                .map(|(r, w)| w * r.exp())
                .sum::<f64>()
                .ln()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestResult {
    pub window: usize,
    pub alpha: f64,
    pub periods: usize,
    pub violations: usize,
    pub rate: f64,
    /// Forecast simple-return thresholds, one per tested period.
    pub thresholds: Vec<f64>,
    /// Realized simple returns, one per tested period.
    pub realized: Vec<f64>,
}

/// Rolling-origin VaR backtest on a series of per-period log-returns.
///
/// For each period `t >= window`, a lognormal model is fitted by MLE to the
/// trailing `window` log-returns and the one-period `alpha` quantile of the
/// simple return is forecast; period `t`'s realized simple return is then
/// compared against it.
pub fn rolling_var_backtest(
    log_returns: &[f64],
    window: usize,
    alpha: f64,
) -> Result<BacktestResult> {
    if window < 2 {
        return Err(Error::invalid("backtest window must be at least 2"));
    }
    if log_returns.len() <= window {
        return Err(Error::TooFewRows {
            needed: window + 1,
            got: log_returns.len(),
        });
    }
    if log_returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("returns"));
    }
    let mut thresholds = Vec::with_capacity(log_returns.len() - window);
    let mut realized = Vec::with_capacity(log_returns.len() - window);
    for t in window..log_returns.len() {
        let hist = &log_returns[t - window..t];
        let n = window as f64;
        let m = hist.iter().sum::<f64>() / n;
        let var = hist.iter().map(|r| (r - m).powi(2)).sum::<f64>() / n;
        let s = var.sqrt();
        let q = analytic_var_single_asset(1.0, m + 0.5 * var, s, 1.0, alpha)?;
        thresholds.push(q - 1.0);
        realized.push(log_returns[t].exp() - 1.0);
    }
    let count = count_var_violations(&realized, &thresholds)?;
    Ok(BacktestResult {
        window,
        alpha,
        periods: realized.len(),
        violations: count.violations,
        rate: count.rate,
        thresholds,
        realized,
    })
}
