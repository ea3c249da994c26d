//! Maximum-likelihood GBM parameters from daily log-returns.
//!
//! Daily statistics use the MLE (divide-by-`n`) convention and are annualized by
//! the trading-day count. The annualized drift is reconstructed as
//! `mu = mean * trading_days + var / 2`, so the simulated log-return mean
//! `(mu - var / 2) * dt` reproduces the historical daily mean exactly.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_data::ReturnMatrix;

pub const DEFAULT_TRADING_DAYS: u32 = 252;

/// Annualized drift, volatility and covariance for a set of assets.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    pub tickers: Vec<String>,
    pub mu: DVector<f64>,
    pub sigma: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub trading_days: u32,
}

impl MarketParams {
    /// Builds parameters from drift and covariance; `sigma` is derived from the
    /// covariance diagonal.
    pub fn from_cov(
        tickers: Vec<String>,
        mu: Vec<f64>,
        cov: DMatrix<f64>,
        trading_days: u32,
    ) -> Result<Self> {
        let n = tickers.len();
        if mu.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: mu.len(),
            });
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: cov.nrows().max(cov.ncols()),
            });
        }
        if mu.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("market parameters"));
        }
        if let Some(i) = (0..n).find(|&i| cov[(i, i)] < 0.0) {
            return Err(Error::invalid(format!(
                "negative variance {} for asset {i}",
                cov[(i, i)]
            )));
        }
        let sigma = DVector::from_fn(n, |i, _| cov[(i, i)].sqrt());
        Ok(Self {
            tickers,
            mu: DVector::from_vec(mu),
            sigma,
            cov,
            trading_days,
        })
    }

    /// Convenience for tests and fixtures: covariance built from volatilities
    /// and a correlation matrix.
    pub fn from_vol_corr(
        tickers: Vec<String>,
        mu: Vec<f64>,
        sigma: &[f64],
        corr: &DMatrix<f64>,
        trading_days: u32,
    ) -> Result<Self> {
        let n = sigma.len();
        if corr.nrows() != n || corr.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: corr.nrows(),
            });
        }
        let cov = DMatrix::from_fn(n, n, |i, j| corr[(i, j)] * sigma[i] * sigma[j]);
        Self::from_cov(tickers, mu, cov, trading_days)
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    /// Per-period mean of the log-return implied by the drift convention.
    pub fn log_drift(&self, i: usize) -> f64 {
        self.mu[i] - 0.5 * self.cov[(i, i)]
    }

    pub fn summary(&self) -> ParamsSummary {
        ParamsSummary {
            tickers: self.tickers.clone(),
            trading_days: self.trading_days,
            mu: self.mu.iter().copied().collect(),
            sigma: self.sigma.iter().copied().collect(),
            cov: crate::rows_of(&self.cov),
        }
    }
}

/// Serializable view of [`MarketParams`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamsSummary {
    pub tickers: Vec<String>,
    pub trading_days: u32,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// MLE estimate of annualized GBM parameters.
pub fn estimate_params(returns: &ReturnMatrix, trading_days: u32) -> Result<MarketParams> {
    let r = returns.returns();
    let n = r.nrows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    if trading_days == 0 {
        return Err(Error::invalid("trading_days must be at least 1"));
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("returns"));
    }

    let n_f = n as f64;
    let means: DVector<f64> = DVector::from_fn(r.ncols(), |i, _| r.column(i).sum() / n_f);
    let mut centered = r.clone();
    for (i, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[i]);
    }
    let daily_cov = (centered.transpose() * &centered) / n_f;
    // exact symmetry regardless of summation order
    let daily_cov = (&daily_cov + daily_cov.transpose()) * 0.5;

    let td = f64::from(trading_days);
    let cov = daily_cov * td;
    let mu: Vec<f64> = (0..r.ncols())
        .map(|i| means[i] * td + 0.5 * cov[(i, i)])
        .collect();
    MarketParams::from_cov(returns.tickers().to_vec(), mu, cov, trading_days)
}

/// Correlation matrix implied by the covariance; requires nonzero volatilities.
pub fn correlation_of(params: &MarketParams) -> Result<DMatrix<f64>> {
    correlation_from_cov(&params.cov)
}

pub fn correlation_from_cov(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let sd: Vec<f64> = (0..n).map(|i| cov[(i, i)].sqrt()).collect();
    if let Some(index) = sd.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::ZeroVolatility { index });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            cov[(i, j)] / (sd[i] * sd[j])
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn tick(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("A{i}")).collect()
    }

    /// Flat double-loop recomputation, independent of the matrix path.
    fn brute_force(rows: &[Vec<f64>], td: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = rows.len() as f64;
        let k = rows[0].len();
        let mut mean = vec![0.0; k];
        for row in rows {
            for i in 0..k {
                mean[i] += row[i];
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut cov = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                let mut s = 0.0;
                for row in rows {
                    s += (row[i] - mean[i]) * (row[j] - mean[j]);
                }
                cov[i][j] = s / n * td;
            }
        }
        let mu = (0..k).map(|i| mean[i] * td + cov[i][i] / 2.0).collect();
        (mu, cov)
    }

    #[test]
    fn constant_returns_scale_to_annual_drift() {
        let rows = vec![vec![0.001]; 500];
        let p = estimate_params(&ReturnMatrix::from_rows(tick(1), &rows).unwrap(), 252).unwrap();
        assert_relative_eq!(p.mu[0], 0.252, epsilon = 1e-12);
        assert!(p.sigma[0] < 1e-9);
    }

    #[test]
    fn daily_variance_annualizes() {
        // +-0.02 alternating: MLE mean 0, MLE variance 0.0004
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|t| vec![if t % 2 == 0 { 0.02 } else { -0.02 }])
            .collect();
        let p = estimate_params(&ReturnMatrix::from_rows(tick(1), &rows).unwrap(), 252).unwrap();
        assert_relative_eq!(p.cov[(0, 0)], 0.1008, epsilon = 1e-12);
        assert_relative_eq!(p.sigma[0], 0.317490, epsilon = 1e-6);
    }

    #[test]
    fn duplicated_columns_are_perfectly_correlated() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|t| {
                let x = ((t * 37 % 11) as f64 - 5.0) * 0.003;
                vec![x, x]
            })
            .collect();
        let p = estimate_params(&ReturnMatrix::from_rows(tick(2), &rows).unwrap(), 252).unwrap();
        let c = correlation_of(&p).unwrap();
        assert!((c[(0, 1)] - 1.0).abs() < 1e-12);
        let det = p.cov[(0, 0)] * p.cov[(1, 1)] - p.cov[(0, 1)] * p.cov[(1, 0)];
        assert!(det.abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_three_assets() {
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|t| {
                let t = t as f64;
                vec![
                    0.01 * (t * 0.7).sin(),
                    0.02 * (t * 1.3).cos() + 0.0005,
                    0.015 * (t * 0.3).sin() * (t * 0.11).cos() - 0.0002,
                ]
            })
            .collect();
        let p = estimate_params(&ReturnMatrix::from_rows(tick(3), &rows).unwrap(), 252).unwrap();
        let (mu, cov) = brute_force(&rows, 252.0);
        for i in 0..3 {
            assert_relative_eq!(p.mu[i], mu[i], epsilon = 1e-13);
            for j in 0..3 {
                assert_relative_eq!(p.cov[(i, j)], cov[i][j], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn errors() {
        let one = ReturnMatrix::from_rows(tick(1), &[vec![0.1]]).unwrap();
        assert!(matches!(
            estimate_params(&one, 252),
            Err(Error::TooFewRows { .. })
        ));
        let nan = ReturnMatrix::from_rows(tick(1), &[vec![0.1], vec![f64::NAN]]).unwrap();
        assert!(matches!(
            estimate_params(&nan, 252),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn correlation_examples() {
        let diag = MarketParams::from_cov(
            tick(2),
            vec![0.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 0.09]),
            252,
        )
        .unwrap();
        assert_eq!(correlation_of(&diag).unwrap(), DMatrix::identity(2, 2));

        let p = MarketParams::from_cov(
            tick(2),
            vec![0.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 4.0]),
            252,
        )
        .unwrap();
        let c = correlation_of(&p).unwrap();
        assert_relative_eq!(c[(0, 1)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(c[(1, 0)], 0.5, epsilon = 1e-15);

        let z = MarketParams::from_cov(tick(1), vec![0.0], DMatrix::zeros(1, 1), 252).unwrap();
        assert!(matches!(
            correlation_of(&z),
            Err(Error::ZeroVolatility { index: 0 })
        ));
    }

    fn arb_returns() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..5, 2usize..40).prop_flat_map(|(k, n)| {
            prop::collection::vec(prop::collection::vec(-0.2f64..0.2, k), n)
        })
    }

    proptest! {
        #[test]
        fn invariants_hold(rows in arb_returns()) {
            let k = rows[0].len();
            let rm = ReturnMatrix::from_rows(tick(k), &rows).unwrap();
            let p = estimate_params(&rm, 252).unwrap();
            let n = rows.len() as f64;
            for i in 0..k {
                prop_assert!(p.sigma[i] >= 0.0);
                prop_assert!((p.cov[(i, i)] - p.sigma[i] * p.sigma[i]).abs() < 1e-12);
                for j in 0..k {
                    prop_assert!((p.cov[(i, j)] - p.cov[(j, i)]).abs() < 1e-12);
                }
                let m = rows.iter().map(|r| r[i]).sum::<f64>() / n;
                let implied = (p.mu[i] - p.cov[(i, i)] / 2.0) / 252.0;
                prop_assert!((implied - m).abs() < 1e-12);
            }
            let min_eig = p.cov.clone().symmetric_eigenvalues().min();
            prop_assert!(min_eig > -1e-10, "min eigenvalue {min_eig}");
        }

        #[test]
        fn unit_trading_days_is_raw_daily(rows in arb_returns()) {
            let k = rows[0].len();
            let rm = ReturnMatrix::from_rows(tick(k), &rows).unwrap();
            let daily = estimate_params(&rm, 1).unwrap();
            let annual = estimate_params(&rm, 252).unwrap();
            for i in 0..k {
                for j in 0..k {
                    prop_assert!((daily.cov[(i, j)] * 252.0 - annual.cov[(i, j)]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn price_scale_leaves_params_unchanged(rows in arb_returns(), scale in 0.01f64..100.0) {
            use crate::market_data::{log_returns, PriceSeries};
            let k = rows[0].len();
            let mut level = vec![1.0; k];
            let mut prices = vec![level.clone()];
            for r in &rows {
                for i in 0..k { level[i] *= r[i].exp(); }
                prices.push(level.clone());
            }
            let dates: Vec<String> = (0..prices.len()).map(|d| format!("d{d:04}")).collect();
            let build = |s: f64| {
                let m = DMatrix::from_fn(prices.len(), k, |t, i| prices[t][i] * s);
                PriceSeries::new(tick(k), dates.clone(), m).unwrap()
            };
            let a = estimate_params(&log_returns(&build(1.0)).unwrap(), 252).unwrap();
            let b = estimate_params(&log_returns(&build(scale)).unwrap(), 252).unwrap();
            for i in 0..k {
                prop_assert!((a.mu[i] - b.mu[i]).abs() < 1e-9);
                for j in 0..k {
                    prop_assert!((a.cov[(i, j)] - b.cov[(i, j)]).abs() < 1e-9);
                }
            }
        }
    }
}
