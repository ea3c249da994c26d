use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gbm_risk::pipeline::{
    compare_portfolios, percentiles_csv, run_backtest, run_estimate, run_optimize, run_pipeline,
    write_artifacts, PortfolioMode, RunConfig,
};
use gbm_risk::{Error, Result};

#[derive(Parser)]
#[command(
    name = "gbm-risk",
    version,
    about = "Monte Carlo GBM portfolio risk engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate annualized drift, volatility and covariance from a price CSV.
    Estimate(RunArgs),
    /// Minimum-variance, max-Sharpe and efficient-frontier portfolios.
    Optimize(RunArgs),
    /// Full pipeline: choose weights, simulate paths, report risk.
    Simulate(RunArgs),
    /// Run two configurations and tabulate VaR and chance of loss.
    Compare {
        #[arg(long)]
        config_a: PathBuf,
        #[arg(long)]
        config_b: PathBuf,
        #[arg(long, default_value = "a")]
        label_a: String,
        #[arg(long, default_value = "b")]
        label_b: String,
        #[arg(long, env = "GBM_RISK_OUT_DIR")]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Rolling one-period historical VaR backtest.
    Backtest(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    price_csv: Option<PathBuf>,
    /// Comma-separated subset of columns to use.
    #[arg(long, value_delimiter = ',')]
    tickers: Option<Vec<String>>,
    #[arg(long)]
    trading_days: Option<u32>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    horizon_years: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    initial_value: Option<f64>,
    #[arg(long)]
    risk_free: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// mvp, max-sharpe or explicit-weights.
    #[arg(long)]
    portfolio_mode: Option<PortfolioMode>,
    /// Comma-separated weights in column order; implies explicit-weights.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    record_paths: bool,
    #[arg(long)]
    backtest_window: Option<usize>,
    #[arg(long)]
    frontier_points: Option<usize>,
    /// Directory for report files; stdout only when absent.
    #[arg(long, env = "GBM_RISK_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Simulation worker threads. Does not affect results.
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.price_csv) {
            (Some(path), _) => RunConfig::from_file(path)?,
            (None, Some(csv)) => RunConfig::new(csv.clone()),
            (None, None) => return Err(Error::Config("pass --config or --price-csv".into())),
        };
        if let Some(v) = &self.price_csv {
            cfg.price_csv = v.clone();
        }
        if let Some(v) = &self.tickers {
            cfg.tickers = Some(v.clone());
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(
            trading_days,
            n_paths,
            horizon_years,
            alpha,
            initial_value,
            risk_free,
            seed,
            portfolio_mode,
            backtest_window,
            frontier_points
        );
        if let Some(w) = &self.weights {
            cfg.explicit_weights = Some(w.clone());
            cfg.portfolio_mode = PortfolioMode::ExplicitWeights;
        }
        if self.record_paths {
            cfg.record_paths = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn emit(out_dir: Option<&Path>, file: &str, json: &str) -> Result<()> {
    print!("{json}");
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let path = dir.join(file);
        fs::write(&path, json).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(args) => {
            let report = run_estimate(&args.resolve()?)?;
            emit(args.out_dir.as_deref(), "estimate.json", &to_json(&report)?)
        }
        Command::Optimize(args) => {
            let report = run_optimize(&args.resolve()?)?;
            emit(args.out_dir.as_deref(), "optimize.json", &to_json(&report)?)
        }
        Command::Simulate(args) => {
            let cfg = args.resolve()?;
            let out = run_pipeline(&cfg, args.workers)?;
            match &args.out_dir {
                Some(dir) => {
                    for path in write_artifacts(&out, dir)? {
                        eprintln!("wrote {}", path.display());
                    }
                    print!("{}", to_json(&out.report)?);
                }
                None => {
                    print!("{}", to_json(&out.report)?);
                    eprint!("{}", percentiles_csv(&out.report.percentiles));
                }
            }
            Ok(())
        }
        Command::Compare {
            config_a,
            config_b,
            label_a,
            label_b,
            out_dir,
            workers,
        } => {
            let a = RunConfig::from_file(&config_a)?;
            let b = RunConfig::from_file(&config_b)?;
            let (cmp, _, _) = compare_portfolios((&label_a, &a), (&label_b, &b), workers)?;
            let json = to_json(&cmp)?;
            emit(out_dir.as_deref(), "comparison.json", &json)?;
            if let Some(dir) = &out_dir {
                let path = dir.join("comparison.csv");
                fs::write(&path, cmp.to_csv()).map_err(|e| Error::Io { path, source: e })?;
            }
            Ok(())
        }
        Command::Backtest(args) => {
            let (report, _) = run_backtest(&args.resolve()?)?;
            emit(args.out_dir.as_deref(), "backtest.json", &to_json(&report)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
