//! Monte Carlo portfolio risk under correlated geometric Brownian motion.
//!
//! The pipeline loads adjusted closes, estimates annualized drift and
//! covariance from daily log-returns, picks long-only weights, simulates
//! correlated price paths and summarizes the terminal value distribution.

pub mod error;
pub mod estimation;
pub mod fixtures;
pub mod market_data;
pub mod optimizer;
pub mod pipeline;
pub mod risk;
pub mod simulation;

use nalgebra::DMatrix;

pub use error::{Error, Result};
pub use estimation::{estimate_params, MarketParams};
pub use market_data::{load_prices, log_returns, PriceSeries, ReturnMatrix};
pub use optimizer::{max_sharpe, min_variance, OptimizedPortfolio, PortfolioStats, WeightVector};
pub use pipeline::{run_pipeline, Report, RunConfig};
pub use risk::RiskReport;
pub use simulation::{simulate, SimConfig, SimulationResult};

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
