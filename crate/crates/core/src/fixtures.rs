//! Synthetic GBM price histories for reproducible test and demo datasets.
//!
//! With `exact_moments` set, the generated daily log-returns are centered and
//! whitened before the target covariance is applied, so the MLE estimates
//! recovered from the file equal the generator parameters to rounding.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_data::PriceSeries;
use crate::simulation::{cholesky, draw_standard_normals};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureSpec {
    pub name: String,
    pub tickers: Vec<String>,
    /// Annualized mean of the log-return, `mu - sigma^2 / 2`.
    pub log_drift: Vec<f64>,
    pub vol: Vec<f64>,
    /// Row-major correlation matrix.
    pub corr: Vec<Vec<f64>>,
    pub start_prices: Vec<f64>,
    pub start_date: String,
    /// Number of price rows (one more than the number of returns).
    pub n_rows: usize,
    pub trading_days: u32,
    pub seed: u64,
    pub exact_moments: bool,
}

impl FixtureSpec {
    /// Annualized drift `mu` under the estimation convention.
    pub fn mu(&self) -> Vec<f64> {
        self.log_drift
            .iter()
            .zip(&self.vol)
            .map(|(m, s)| m + 0.5 * s * s)
            .collect()
    }

    pub fn cov(&self) -> DMatrix<f64> {
        let n = self.vol.len();
        DMatrix::from_fn(n, n, |i, j| self.corr[i][j] * self.vol[i] * self.vol[j])
    }
}

/// High-volatility, highly correlated basket. The third asset is dominated in
/// variance, so the minimum-variance portfolio leaves it out.
pub fn crypto_like() -> FixtureSpec {
    FixtureSpec {
        name: "crypto_like".into(),
        tickers: vec!["CRX".into(), "CRS".into(), "CRA".into()],
        log_drift: vec![-0.55, -0.70, -0.80],
        vol: vec![0.70, 0.75, 1.00],
        corr: vec![
            vec![1.0, 0.60, 0.85],
            vec![0.60, 1.0, 0.85],
            vec![0.85, 0.85, 1.0],
        ],
        start_prices: vec![0.52, 145.0, 0.38],
        start_date: "2024-01-02".into(),
        n_rows: 252,
        trading_days: 252,
        seed: 20_240_101,
        exact_moments: true,
    }
}

/// Lower-volatility equity basket; the middle asset is dominated.
pub fn equity_like() -> FixtureSpec {
    FixtureSpec {
        name: "equity_like".into(),
        tickers: vec!["EQA".into(), "EQT".into(), "EQN".into()],
        log_drift: vec![0.12, 0.05, 0.20],
        vol: vec![0.28, 0.55, 0.45],
        corr: vec![
            vec![1.0, 0.50, 0.45],
            vec![0.50, 1.0, 0.50],
            vec![0.45, 0.50, 1.0],
        ],
        start_prices: vec![185.0, 240.0, 480.0],
        start_date: "2024-01-02".into(),
        n_rows: 252,
        trading_days: 252,
        seed: 20_240_102,
        exact_moments: true,
    }
}

/// `count` consecutive weekdays starting at `start` (rolled forward if it is
/// a weekend), formatted `YYYY-MM-DD`.
pub fn business_days(start: &str, count: usize) -> Result<Vec<String>> {
    let mut d = NaiveDate::parse_from_str(start, "%Y-%m-%d")
        .map_err(|e| Error::invalid(format!("start date {start:?}: {e}")))?;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d.format("%Y-%m-%d").to_string());
        }
        d += Duration::days(1);
    }
    Ok(out)
}

/// Daily log-returns drawn from the spec (`(n_rows - 1) x N`).
pub fn generate_returns(spec: &FixtureSpec) -> Result<DMatrix<f64>> {
    let n = spec.tickers.len();
    for len in [
        spec.log_drift.len(),
        spec.vol.len(),
        spec.corr.len(),
        spec.start_prices.len(),
    ] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    if spec.n_rows < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: spec.n_rows,
        });
    }
    let periods = spec.n_rows - 1;
    if spec.exact_moments && periods <= n {
        return Err(Error::invalid(
            "exact moments need more periods than assets",
        ));
    }
    let td = f64::from(spec.trading_days);
    let daily_cov = spec.cov() / td;
    let l = cholesky(&daily_cov)?.l;

    let mut z = DMatrix::zeros(periods, n);
    for t in 0..periods {
        let draws = draw_standard_normals(spec.seed, t as u64, n);
        for i in 0..n {
            z[(t, i)] = draws[i];
        }
    }
    if spec.exact_moments {
        let mean = z.row_mean();
        for mut row in z.row_iter_mut() {
            row -= &mean;
        }
        let sample = (z.transpose() * &z) / periods as f64;
        let ls = cholesky(&sample)?.l;
        // z <- z * ls^{-T}, so the sample covariance becomes the identity
        let zt = ls
            .solve_lower_triangular(&z.transpose())
            .ok_or_else(|| Error::invalid("degenerate draws"))?;
        z = zt.transpose();
    }

    let mean = DVector::from_fn(n, |i, _| spec.log_drift[i] / td);
    let mut r = z * l.transpose();
    for mut row in r.row_iter_mut() {
        row += mean.transpose();
    }
    Ok(r)
}

pub fn generate_prices(spec: &FixtureSpec) -> Result<PriceSeries> {
    let r = generate_returns(spec)?;
    let n = spec.tickers.len();
    let dates = business_days(&spec.start_date, spec.n_rows)?;
    let mut prices = DMatrix::zeros(spec.n_rows, n);
    for i in 0..n {
        let mut level = spec.start_prices[i].ln();
        prices[(0, i)] = spec.start_prices[i];
        for t in 0..r.nrows() {
            level += r[(t, i)];
            prices[(t + 1, i)] = level.exp();
        }
    }
    PriceSeries::new(spec.tickers.clone(), dates, prices)
}

/// Sidecar metadata recording how a fixture file was produced.
#[derive(Debug, Clone, Serialize)]
pub struct FixtureMeta {
    pub generator: FixtureSpec,
    pub window_start: String,
    pub window_end: String,
    pub mu: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

pub fn fixture_meta(spec: &FixtureSpec, series: &PriceSeries) -> FixtureMeta {
    FixtureMeta {
        generator: spec.clone(),
        window_start: series.dates()[0].clone(),
        window_end: series.dates()[series.n_dates() - 1].clone(),
        mu: spec.mu(),
        cov: crate::rows_of(&spec.cov()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::estimate_params;
    use crate::market_data::log_returns;

    #[test]
    fn business_days_skip_weekends() {
        let d = business_days("2024-01-05", 3).unwrap();
        assert_eq!(d, ["2024-01-05", "2024-01-08", "2024-01-09"]);
        assert!(business_days("2024-13-01", 1).is_err());
    }

    #[test]
    fn exact_moments_are_recovered() {
        for spec in [crypto_like(), equity_like()] {
            let s = generate_prices(&spec).unwrap();
            assert_eq!((s.n_dates(), s.n_assets()), (252, 3));
            let p = estimate_params(&log_returns(&s).unwrap(), 252).unwrap();
            let (mu, cov) = (spec.mu(), spec.cov());
            for i in 0..3 {
                assert!((p.mu[i] - mu[i]).abs() < 1e-9, "{} vs {}", p.mu[i], mu[i]);
                for j in 0..3 {
                    assert!((p.cov[(i, j)] - cov[(i, j)]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = equity_like();
        assert_eq!(
            generate_prices(&spec).unwrap(),
            generate_prices(&spec).unwrap()
        );
        let mut raw = spec.clone();
        raw.exact_moments = false;
        assert_ne!(
            generate_prices(&raw).unwrap(),
            generate_prices(&spec).unwrap()
        );
    }
}
