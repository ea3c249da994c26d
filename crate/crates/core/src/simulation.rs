//! Correlated geometric Brownian motion by Monte Carlo.
//!
//! Each path draws its shocks from its own ChaCha stream keyed by
//! `(seed, path_index)`, so results do not depend on thread count or
//! scheduling. Per step, asset log-prices advance by
//! `(mu_i - sigma_i^2 / 2) dt + sqrt(dt) * (L z)_i` with `L L' = cov`.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::MarketParams;
use crate::optimizer::WeightVector;

/// Pivots down to this negative value are treated as rounding noise.
pub const PIVOT_TOLERANCE: f64 = 1e-10;
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;
/// Diagonal shifts tried, in order, when factoring a covariance matrix.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

pub const DEFAULT_PATHS: usize = 10_000;
pub const DEFAULT_HORIZON_YEARS: f64 = 1.0;
pub const DEFAULT_STEPS_PER_YEAR: u32 = 252;
pub const DEFAULT_INITIAL_VALUE: f64 = 100_000.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub horizon_years: f64,
    pub steps_per_year: u32,
    pub seed: u64,
    pub initial_value: f64,
    pub weights: WeightVector,
    /// Starting price per asset; only terminal asset prices depend on it.
    pub initial_prices: Vec<f64>,
    /// Keep every intermediate price, not just the terminal ones.
    pub record_paths: bool,
}

impl SimConfig {
    /// 10,000 one-year paths at daily steps from a $100,000 start.
    pub fn new(weights: WeightVector, initial_prices: Vec<f64>, seed: u64) -> Self {
        Self {
            n_paths: DEFAULT_PATHS,
            horizon_years: DEFAULT_HORIZON_YEARS,
            steps_per_year: DEFAULT_STEPS_PER_YEAR,
            seed,
            initial_value: DEFAULT_INITIAL_VALUE,
            weights,
            initial_prices,
            record_paths: false,
        }
    }

    /// `horizon_years * steps_per_year`, rounded, at least one.
    pub fn n_steps(&self) -> usize {
        ((self.horizon_years * f64::from(self.steps_per_year)).round() as usize).max(1)
    }

    pub fn dt(&self) -> f64 {
        self.horizon_years / self.n_steps() as f64
    }

    fn validate(&self, n_assets: usize) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths must be at least 1"));
        }
        if self.steps_per_year == 0 {
            return Err(Error::invalid("steps_per_year must be at least 1"));
        }
        if !(self.horizon_years.is_finite() && self.horizon_years > 0.0) {
            return Err(Error::invalid("horizon_years must be positive"));
        }
        if !(self.initial_value.is_finite() && self.initial_value > 0.0) {
            return Err(Error::invalid("initial_value must be positive"));
        }
        for len in [self.weights.len(), self.initial_prices.len()] {
            if len != n_assets {
                return Err(Error::DimensionMismatch {
                    expected: n_assets,
                    got: len,
                });
            }
        }
        if self
            .initial_prices
            .iter()
            .any(|p| !(p.is_finite() && *p > 0.0))
        {
            return Err(Error::invalid("initial prices must be positive"));
        }
        Ok(())
    }
}

/// Lower-triangular `L` with `L L' = cov`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    pub l: DMatrix<f64>,
}

impl CholeskyFactor {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }
}

/// Cholesky factorization that accepts positive semidefinite input.
///
/// A pivot whose value and remaining column are both within `1e-10` of zero is
/// treated as an exact zero and its column is left empty. A pivot below
/// `-1e-10`, or a non-positive pivot with a non-zero column, is rejected with
/// its index.
pub fn cholesky(cov: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cov.ncols(),
        });
    }
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    for i in 0..n {
        for j in 0..i {
            let diff = (cov[(i, j)] - cov[(j, i)]).abs();
            if diff > SYMMETRY_TOLERANCE {
                return Err(Error::NotSymmetric {
                    row: i,
                    col: j,
                    diff,
                });
            }
        }
    }

    let mut l = DMatrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        let mut d = cov[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -PIVOT_TOLERANCE {
            return Err(Error::NotPositiveSemidefinite { pivot: j, value: d });
        }
        for i in (j + 1)..n {
            let mut s = cov[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            col[i] = s;
        }
        let residual = col[j + 1..].iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if d <= PIVOT_TOLERANCE && residual <= PIVOT_TOLERANCE {
            // rank-deficient direction; leave the column at zero
            continue;
        }
        if d <= 0.0 {
            return Err(Error::NotPositiveSemidefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            l[(i, j)] = col[i] / ljj;
        }
    }
    Ok(CholeskyFactor { l })
}

/// A covariance matrix made factorable by the smallest diagonal shift.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdRepair {
    pub matrix: DMatrix<f64>,
    pub jitter: f64,
    pub factor: CholeskyFactor,
}

/// Adds the smallest jitter from [`JITTER_LADDER`] to the diagonal that lets
/// [`cholesky`] succeed.
pub fn repair_psd(cov: &DMatrix<f64>) -> Result<PsdRepair> {
    let n = cov.nrows();
    let mut last = None;
    for &jitter in &JITTER_LADDER {
        let matrix = cov + DMatrix::identity(n, n) * jitter;
        match cholesky(&matrix) {
            Ok(factor) => {
                return Ok(PsdRepair {
                    matrix,
                    jitter,
                    factor,
                })
            }
            Err(e @ Error::NotPositiveSemidefinite { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("jitter ladder is non-empty"))
}

/// Maps independent shocks (one draw per row) to correlated ones: `z L'`.
pub fn correlated_shocks(factor: &CholeskyFactor, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if z.ncols() != factor.dim() {
        return Err(Error::DimensionMismatch {
            expected: factor.dim(),
            got: z.ncols(),
        });
    }
    Ok(z * factor.l.transpose())
}

fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// `count` standard normals from the stream owned by `(seed, path_index)`.
pub fn draw_standard_normals(seed: u64, path_index: u64, count: usize) -> Vec<f64> {
    let mut rng = path_rng(seed, path_index);
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// `n_paths x N`.
    pub terminal_asset_prices: DMatrix<f64>,
    pub terminal_portfolio_values: Vec<f64>,
    pub config: SimConfig,
    pub params: MarketParams,
    /// Diagonal shift applied to the covariance before factoring.
    pub jitter: f64,
    /// Per path, `(n_steps + 1) x N` prices including the start; only when
    /// `record_paths` is set.
    pub paths: Option<Vec<DMatrix<f64>>>,
}

struct PathOutcome {
    terminal: Vec<f64>,
    value: f64,
    trace: Option<DMatrix<f64>>,
}

pub fn simulate(params: &MarketParams, config: &SimConfig) -> Result<SimulationResult> {
    simulate_with_workers(params, config, None)
}

/// Runs the simulation on a dedicated pool of `workers` threads (or the global
/// pool when `None`). Output is identical for every worker count.
pub fn simulate_with_workers(
    params: &MarketParams,
    config: &SimConfig,
    workers: Option<usize>,
) -> Result<SimulationResult> {
    let n = params.n_assets();
    config.validate(n)?;
    if params
        .mu
        .iter()
        .chain(params.cov.iter())
        .any(|x| !x.is_finite())
    {
        return Err(Error::NonFinite("market parameters"));
    }
    let repair = repair_psd(&params.cov)?;

    let n_steps = config.n_steps();
    let dt = config.dt();
    let sqrt_dt = dt.sqrt();
    let drift: Vec<f64> = (0..n).map(|i| params.log_drift(i) * dt).collect();
    // row-major lower triangle for the hot loop
    let l: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| repair.factor.l[(i, j)])
        .collect();
    let weights = &config.weights.w;
    let s0 = &config.initial_prices;

    let run_path = |p: usize| -> PathOutcome {
        let mut rng = path_rng(config.seed, p as u64);
        let mut log_ratio = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut trace = config.record_paths.then(|| {
            let mut m = DMatrix::zeros(n_steps + 1, n);
            for i in 0..n {
                m[(0, i)] = s0[i];
            }
            m
        });
        for step in 0..n_steps {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            for i in 0..n {
                let row = &l[i * n..i * n + i + 1];
                let shock: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
                log_ratio[i] += drift[i] + sqrt_dt * shock;
            }
            if let Some(m) = trace.as_mut() {
                for i in 0..n {
                    m[(step + 1, i)] = s0[i] * log_ratio[i].exp();
                }
            }
        }
        let ratios: Vec<f64> = log_ratio.iter().map(|x| x.exp()).collect();
        let growth: f64 = weights.iter().zip(&ratios).map(|(w, r)| w * r).sum();
        PathOutcome {
            terminal: ratios.iter().zip(s0).map(|(r, s)| r * s).collect(),
            value: config.initial_value * growth,
            trace,
        }
    };

    let outcomes: Vec<PathOutcome> = match workers {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(|| (0..config.n_paths).into_par_iter().map(run_path).collect())
        }
        None => (0..config.n_paths).into_par_iter().map(run_path).collect(),
    };

    let mut terminal_asset_prices = DMatrix::zeros(config.n_paths, n);
    let mut terminal_portfolio_values = Vec::with_capacity(config.n_paths);
    let mut paths = config
        .record_paths
        .then(|| Vec::with_capacity(config.n_paths));
    for (p, o) in outcomes.into_iter().enumerate() {
        for i in 0..n {
            terminal_asset_prices[(p, i)] = o.terminal[i];
        }
        terminal_portfolio_values.push(o.value);
        if let (Some(all), Some(t)) = (paths.as_mut(), o.trace) {
            all.push(t);
        }
    }

    Ok(SimulationResult {
        terminal_asset_prices,
        terminal_portfolio_values,
        config: config.clone(),
        params: params.clone(),
        jitter: repair.jitter,
        paths,
    })
}

/// Dumps recorded paths as `path,step,ticker,price` rows.
pub fn write_paths_csv<W: Write>(result: &SimulationResult, writer: W) -> Result<()> {
    let paths = result
        .paths
        .as_ref()
        .ok_or_else(|| Error::invalid("paths were not recorded"))?;
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["path", "step", "ticker", "price"])?;
    for (p, m) in paths.iter().enumerate() {
        for step in 0..m.nrows() {
            for (i, ticker) in result.params.tickers.iter().enumerate() {
                wtr.write_record([
                    p.to_string(),
                    step.to_string(),
                    ticker.clone(),
                    m[(step, i)].to_string(),
                ])?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}
