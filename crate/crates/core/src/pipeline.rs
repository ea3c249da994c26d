//! End-to-end runs: configuration, orchestration and report emission.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{correlation_of, estimate_params, MarketParams, ParamsSummary};
use crate::market_data::{load_prices, log_returns, CsvFormat, PriceSeries, ReturnMatrix};
use crate::optimizer::{
    efficient_frontier, max_sharpe, min_variance, portfolio_stats, FrontierPoint,
    OptimizedPortfolio, PortfolioStats, WeightVector,
};
use crate::risk::{
    portfolio_log_returns, risk_report, rolling_var_backtest, BacktestResult, Percentile,
    RiskReport,
};
use crate::simulation::{simulate_with_workers, write_paths_csv, SimConfig, SimulationResult};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PortfolioMode {
    Mvp,
    #[serde(alias = "max_sharpe")]
    MaxSharpe,
    #[serde(alias = "explicit_weights", alias = "explicit")]
    ExplicitWeights,
}

impl std::str::FromStr for PortfolioMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mvp" => Ok(Self::Mvp),
            "max-sharpe" | "max_sharpe" => Ok(Self::MaxSharpe),
            "explicit-weights" | "explicit_weights" | "explicit" => Ok(Self::ExplicitWeights),
            other => Err(Error::Config(format!("unknown portfolio mode {other:?}"))),
        }
    }
}

fn default_trading_days() -> u32 {
    crate::estimation::DEFAULT_TRADING_DAYS
}
fn default_n_paths() -> usize {
    crate::simulation::DEFAULT_PATHS
}
fn default_horizon() -> f64 {
    crate::simulation::DEFAULT_HORIZON_YEARS
}
fn default_alpha() -> f64 {
    crate::risk::DEFAULT_ALPHA
}
fn default_initial_value() -> f64 {
    crate::simulation::DEFAULT_INITIAL_VALUE
}
fn default_seed() -> u64 {
    42
}
fn default_mode() -> PortfolioMode {
    PortfolioMode::Mvp
}
fn default_window() -> usize {
    crate::risk::DEFAULT_BACKTEST_WINDOW
}
fn default_frontier_points() -> usize {
    20
}

/// Every knob of a run. Defaults reproduce the reference setup: 10,000 paths
/// over one year at daily steps, 5% VaR, $100,000 initial investment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub price_csv: PathBuf,
    #[serde(default)]
    pub tickers: Option<Vec<String>>,
    #[serde(default = "default_trading_days")]
    pub trading_days: u32,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_horizon")]
    pub horizon_years: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_initial_value")]
    pub initial_value: f64,
    #[serde(default)]
    pub risk_free: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub portfolio_mode: PortfolioMode,
    #[serde(default)]
    pub explicit_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub record_paths: bool,
    #[serde(default = "default_window")]
    pub backtest_window: usize,
    #[serde(default = "default_frontier_points")]
    pub frontier_points: usize,
}

impl RunConfig {
    pub fn new(price_csv: impl Into<PathBuf>) -> Self {
        Self {
            price_csv: price_csv.into(),
            tickers: None,
            trading_days: default_trading_days(),
            n_paths: default_n_paths(),
            horizon_years: default_horizon(),
            alpha: default_alpha(),
            initial_value: default_initial_value(),
            risk_free: 0.0,
            seed: default_seed(),
            portfolio_mode: default_mode(),
            explicit_weights: None,
            record_paths: false,
            backtest_window: default_window(),
            frontier_points: default_frontier_points(),
        }
    }

    /// Reads a TOML (`.toml`) or JSON (anything else) config file. Unknown keys
    /// are rejected. A relative `price_csv` resolves against the file's
    /// directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        };
        if cfg.price_csv.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.price_csv = dir.join(&cfg.price_csv);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.trading_days == 0 {
            return bad("trading_days must be at least 1");
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1");
        }
        if !(self.horizon_years.is_finite() && self.horizon_years > 0.0) {
            return bad("horizon_years must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.initial_value.is_finite() && self.initial_value > 0.0) {
            return bad("initial_value must be positive");
        }
        if !self.risk_free.is_finite() {
            return bad("risk_free must be finite");
        }
        match (self.portfolio_mode, &self.explicit_weights) {
            (PortfolioMode::ExplicitWeights, None) => {
                return bad("explicit_weights required for explicit-weights mode")
            }
            (PortfolioMode::Mvp | PortfolioMode::MaxSharpe, Some(_)) => {
                return bad("explicit_weights only allowed in explicit-weights mode")
            }
            _ => {}
        }
        if self.backtest_window < 2 {
            return bad("backtest_window must be at least 2");
        }
        if self.frontier_points < 2 {
            return bad("frontier_points must be at least 2");
        }
        Ok(())
    }
}

/// Prices, returns and parameters shared by every command.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub prices: PriceSeries,
    pub returns: ReturnMatrix,
    pub params: MarketParams,
}

pub fn load_inputs(config: &RunConfig) -> Result<Inputs> {
    config.validate()?;
    let mut prices =
        load_prices(&config.price_csv, &CsvFormat::default()).map_err(|e| e.at_stage("load"))?;
    if let Some(t) = &config.tickers {
        prices = prices.select(t).map_err(|e| e.at_stage("load"))?;
    }
    let returns = log_returns(&prices).map_err(|e| e.at_stage("returns"))?;
    let params =
        estimate_params(&returns, config.trading_days).map_err(|e| e.at_stage("estimate"))?;
    Ok(Inputs {
        prices,
        returns,
        params,
    })
}

fn choose_portfolio(config: &RunConfig, params: &MarketParams) -> Result<OptimizedPortfolio> {
    match config.portfolio_mode {
        PortfolioMode::Mvp => {
            let mut p = min_variance(params)?;
            p.stats = portfolio_stats(&p.weights, params, config.risk_free)?;
            Ok(p)
        }
        PortfolioMode::MaxSharpe => max_sharpe(params, config.risk_free),
        PortfolioMode::ExplicitWeights => {
            let w = config.explicit_weights.clone().unwrap_or_default();
            let weights = WeightVector::new(params.tickers.clone(), w)?;
            let stats = portfolio_stats(&weights, params, config.risk_free)?;
            Ok(OptimizedPortfolio {
                weights,
                stats,
                iterations: 0,
                warning: None,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickerWeight {
    pub ticker: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveSettings {
    pub engine_version: String,
    pub tickers: Vec<String>,
    pub window_start: String,
    pub window_end: String,
    pub n_prices: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub psd_jitter: f64,
    pub initial_prices: Vec<f64>,
    pub params: ParamsSummary,
    pub optimizer_iterations: usize,
    pub optimizer_warning: Option<String>,
    pub var_level: f64,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub run: RunConfig,
    pub effective: EffectiveSettings,
}

/// The `report.json` document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub weights: Vec<TickerWeight>,
    pub stats: PortfolioStats,
    pub var_value: f64,
    pub potential_loss: f64,
    pub chance_of_loss: f64,
    pub percentiles: Vec<Percentile>,
    pub config_echo: ConfigEcho,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: Report,
    pub risk: RiskReport,
    pub portfolio: OptimizedPortfolio,
    pub simulation: SimulationResult,
}

/// load -> align -> log-returns -> estimate -> choose weights -> simulate ->
/// risk metrics. `workers` sets the simulation thread count and never changes
/// the output.
pub fn run_pipeline(config: &RunConfig, workers: Option<usize>) -> Result<PipelineOutput> {
    let inputs = load_inputs(config)?;
    let params = &inputs.params;
    let portfolio = choose_portfolio(config, params).map_err(|e| e.at_stage("optimize"))?;

    let sim_config = SimConfig {
        n_paths: config.n_paths,
        horizon_years: config.horizon_years,
        steps_per_year: config.trading_days,
        seed: config.seed,
        initial_value: config.initial_value,
        weights: portfolio.weights.clone(),
        initial_prices: inputs.prices.last_prices(),
        record_paths: config.record_paths,
    };
    let simulation =
        simulate_with_workers(params, &sim_config, workers).map_err(|e| e.at_stage("simulate"))?;
    let risk = risk_report(
        &simulation.terminal_portfolio_values,
        config.alpha,
        config.initial_value,
        config.seed,
    )
    .map_err(|e| e.at_stage("risk"))?;

    let dates = inputs.prices.dates();
    let report = Report {
        weights: portfolio
            .weights
            .tickers
            .iter()
            .zip(&portfolio.weights.w)
            .map(|(t, &w)| TickerWeight {
                ticker: t.clone(),
                weight: w,
            })
            .collect(),
        stats: portfolio.stats,
        var_value: risk.var_value,
        potential_loss: risk.potential_loss,
        chance_of_loss: risk.chance_of_loss,
        percentiles: risk.percentiles.clone(),
        config_echo: ConfigEcho {
            run: config.clone(),
            effective: EffectiveSettings {
                engine_version: ENGINE_VERSION.to_string(),
                tickers: params.tickers.clone(),
                window_start: dates[0].clone(),
                window_end: dates[dates.len() - 1].clone(),
                n_prices: dates.len(),
                n_steps: sim_config.n_steps(),
                dt: sim_config.dt(),
                psd_jitter: simulation.jitter,
                initial_prices: sim_config.initial_prices.clone(),
                params: params.summary(),
                optimizer_iterations: portfolio.iterations,
                optimizer_warning: portfolio.warning.clone(),
                var_level: config.alpha,
                n_paths: config.n_paths,
                seed: config.seed,
            },
        },
    };
    Ok(PipelineOutput {
        report,
        risk,
        portfolio,
        simulation,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn percentiles_csv(percentiles: &[Percentile]) -> String {
    let mut s = String::from("percentile,value\n");
    for p in percentiles {
        s.push_str(&format!("{},{}\n", p.fraction, p.value));
    }
    s
}

/// Writes `report.json`, `percentiles.csv` and, when paths were recorded,
/// `paths.csv` into `out_dir`. Returns the files written.
pub fn write_artifacts(output: &PipelineOutput, out_dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out_dir)?;
    let mut written = Vec::new();

    let report = out_dir.join("report.json");
    let mut json = output.report.to_json()?;
    json.push('\n');
    write_file(&report, json.as_bytes())?;
    written.push(report);

    let pct = out_dir.join("percentiles.csv");
    write_file(&pct, percentiles_csv(&output.report.percentiles).as_bytes())?;
    written.push(pct);

    if output.simulation.paths.is_some() {
        let path = out_dir.join("paths.csv");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut buf = std::io::BufWriter::new(file);
        write_paths_csv(&output.simulation, &mut buf)?;
        buf.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub window_start: String,
    pub window_end: String,
    pub n_returns: usize,
    pub params: ParamsSummary,
    /// `None` when an asset has zero volatility.
    pub correlation: Option<Vec<Vec<f64>>>,
}

pub fn run_estimate(config: &RunConfig) -> Result<EstimateReport> {
    let inputs = load_inputs(config)?;
    let dates = inputs.prices.dates();
    Ok(EstimateReport {
        window_start: dates[0].clone(),
        window_end: dates[dates.len() - 1].clone(),
        n_returns: inputs.returns.n_periods(),
        params: inputs.params.summary(),
        correlation: correlation_of(&inputs.params)
            .ok()
            .map(|c| crate::rows_of(&c)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeReport {
    pub selected: OptimizedPortfolio,
    pub min_variance: OptimizedPortfolio,
    pub max_sharpe: OptimizedPortfolio,
    pub frontier: Vec<FrontierPoint>,
}

pub fn run_optimize(config: &RunConfig) -> Result<OptimizeReport> {
    let inputs = load_inputs(config)?;
    let params = &inputs.params;
    let opt = |e: Error| e.at_stage("optimize");
    let selected = choose_portfolio(config, params).map_err(opt)?;
    let mut mvp = min_variance(params).map_err(opt)?;
    mvp.stats = portfolio_stats(&mvp.weights, params, config.risk_free).map_err(opt)?;
    let msr = max_sharpe(params, config.risk_free).map_err(opt)?;
    let mut frontier = efficient_frontier(params, config.frontier_points).map_err(opt)?;
    for pt in &mut frontier {
        pt.stats = portfolio_stats(&pt.weights, params, config.risk_free).map_err(opt)?;
    }
    Ok(OptimizeReport {
        selected,
        min_variance: mvp,
        max_sharpe: msr,
        frontier,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub weights: Vec<TickerWeight>,
    pub window: usize,
    pub alpha: f64,
    pub periods: usize,
    pub violations: usize,
    pub rate: f64,
    pub first_tested: String,
    pub last_tested: String,
}

/// Rolling one-period VaR backtest of the configured portfolio. Optimized
/// weights are fitted on the first window only and then held fixed.
pub fn run_backtest(config: &RunConfig) -> Result<(BacktestReport, BacktestResult)> {
    let inputs = load_inputs(config)?;
    let window = config.backtest_window;
    if inputs.returns.n_periods() <= window {
        return Err(Error::TooFewRows {
            needed: window + 1,
            got: inputs.returns.n_periods(),
        }
        .at_stage("backtest"));
    }
    let first = inputs.returns.rows(0, window);
    let first_params =
        estimate_params(&first, config.trading_days).map_err(|e| e.at_stage("estimate"))?;
    let portfolio = choose_portfolio(config, &first_params).map_err(|e| e.at_stage("optimize"))?;
    let series = portfolio_log_returns(&inputs.returns, &portfolio.weights)
        .map_err(|e| e.at_stage("backtest"))?;
    let result =
        rolling_var_backtest(&series, window, config.alpha).map_err(|e| e.at_stage("backtest"))?;

    // return row t ends on price date t + 1
    let dates = inputs.prices.dates();
    let report = BacktestReport {
        weights: portfolio
            .weights
            .tickers
            .iter()
            .zip(&portfolio.weights.w)
            .map(|(t, &w)| TickerWeight {
                ticker: t.clone(),
                weight: w,
            })
            .collect(),
        window,
        alpha: config.alpha,
        periods: result.periods,
        violations: result.violations,
        rate: result.rate,
        first_tested: dates[window + 1].clone(),
        last_tested: dates[dates.len() - 1].clone(),
    };
    Ok((report, result))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub var_value: f64,
    pub potential_loss: f64,
    pub chance_of_loss: f64,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub var_level: [f64; 2],
    pub rows: [ComparisonRow; 2],
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("portfolio,var_level,var_value,potential_loss,chance_of_loss\n");
        for (row, level) in self.rows.iter().zip(self.var_level) {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                row.label, level, row.var_value, row.potential_loss, row.chance_of_loss
            ));
        }
        s
    }
}

fn row_for(label: &str, out: &PipelineOutput) -> ComparisonRow {
    ComparisonRow {
        label: label.to_string(),
        var_value: out.risk.var_value,
        potential_loss: out.risk.potential_loss,
        chance_of_loss: out.risk.chance_of_loss,
        n_paths: out.risk.n_paths,
        seed: out.risk.seed,
    }
}

/// Runs both configurations and tabulates VaR and chance of loss side by side.
pub fn compare_portfolios(
    a: (&str, &RunConfig),
    b: (&str, &RunConfig),
    workers: Option<usize>,
) -> Result<(Comparison, PipelineOutput, PipelineOutput)> {
    let out_a = run_pipeline(a.1, workers).map_err(|e| e.at_stage("portfolio a"))?;
    let out_b = run_pipeline(b.1, workers).map_err(|e| e.at_stage("portfolio b"))?;
    let cmp = Comparison {
        var_level: [a.1.alpha, b.1.alpha],
        rows: [row_for(a.0, &out_a), row_for(b.0, &out_b)],
    };
    Ok((cmp, out_a, out_b))
}
