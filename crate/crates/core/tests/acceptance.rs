//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use gbm_risk::fixtures::{equity_like, generate_prices};
use gbm_risk::market_data::save_prices;
use gbm_risk::optimizer::quad_form_double_sum;
use gbm_risk::pipeline::{run_backtest, run_pipeline, RunConfig};
use gbm_risk::simulation::cholesky;
use gbm_risk::{min_variance, simulate, MarketParams, SimConfig, WeightVector};

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn tickers(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("A{i}")).collect()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn three_asset_params() -> MarketParams {
    let corr = DMatrix::from_row_slice(3, 3, &[1.0, 0.6, -0.3, 0.6, 1.0, 0.2, -0.3, 0.2, 1.0]);
    MarketParams::from_vol_corr(
        tickers(3),
        vec![0.08, 0.15, -0.05],
        &[0.2, 0.45, 0.3],
        &corr,
        252,
    )
    .unwrap()
}

fn sim_100k(params: &MarketParams, s0: Vec<f64>, seed: u64) -> gbm_risk::SimulationResult {
    let mut cfg = SimConfig::new(WeightVector::equal(params.tickers.clone()), s0, seed);
    cfg.n_paths = 100_000;
    cfg.initial_value = 100.0;
    simulate(params, &cfg).unwrap()
}

fn c1_analytic_var() -> Outcome {
    let start = Instant::now();
    let params = MarketParams::from_cov(
        tickers(1),
        vec![0.05],
        DMatrix::from_element(1, 1, 0.04),
        252,
    )
    .unwrap();
    let res = sim_100k(&params, vec![100.0], 11);
    let mut prices: Vec<f64> = res
        .terminal_asset_prices
        .column(0)
        .iter()
        .copied()
        .collect();
    prices.sort_by(f64::total_cmp);
    let h = 0.05 * (prices.len() - 1) as f64;
    let lo = h.floor() as usize;
    let mc = prices[lo] + (h - lo as f64) * (prices[lo + 1] - prices[lo]);
    let elapsed = start.elapsed();
    // z_0.05 = -1.6448536269514722
    let exact = 100.0 * ((0.05 - 0.02) + 0.2 * -1.6448536269514722f64).exp();
    let rel = (mc - exact).abs() / exact;
    check(
        rel < 0.01 && elapsed < Duration::from_secs(5),
        format!("mc={mc:.4} closed-form={exact:.4} rel_err={rel:.5} time={elapsed:.2?}"),
    )
}

fn c2_moments() -> Outcome {
    let params = three_asset_params();
    let s0 = vec![50.0, 120.0, 10.0];
    let res = sim_100k(&params, s0.clone(), 22);
    let t = 1.0;
    let mut worst = 0.0f64;
    for i in 0..3 {
        let st: Vec<f64> = res
            .terminal_asset_prices
            .column(i)
            .iter()
            .copied()
            .collect();
        let n = st.len() as f64;
        let logs: Vec<f64> = st.iter().map(|s| (s / s0[i]).ln()).collect();
        let s2 = params.cov[(i, i)];
        let (m, v) = mean_var(&logs);
        let z_mean = (m - (params.mu[i] - s2 / 2.0) * t) / (s2 * t / n).sqrt();
        let z_var = (v - s2 * t) / (s2 * t * (2.0 / (n - 1.0)).sqrt());
        let (ms, vs) = mean_var(&st);
        let z_level = (ms - s0[i] * (params.mu[i] * t).exp()) / (vs / n).sqrt();
        worst = worst.max(z_mean.abs()).max(z_var.abs()).max(z_level.abs());
    }
    check(
        worst < 3.0,
        format!("max |z| over 9 moment checks = {worst:.3}"),
    )
}

fn c3_correlation() -> Outcome {
    let params = three_asset_params();
    let s0 = vec![1.0; 3];
    let res = sim_100k(&params, s0, 33);
    let logs: Vec<Vec<f64>> = (0..3)
        .map(|i| {
            res.terminal_asset_prices
                .column(i)
                .iter()
                .map(|s| s.ln())
                .collect()
        })
        .collect();
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let (mi, vi) = mean_var(&logs[i]);
            let (mj, vj) = mean_var(&logs[j]);
            let n = logs[i].len() as f64;
            let c = logs[i]
                .iter()
                .zip(&logs[j])
                .map(|(a, b)| (a - mi) * (b - mj))
                .sum::<f64>()
                / (n - 1.0);
            let target = params.cov[(i, j)] / (params.sigma[i] * params.sigma[j]);
            worst = worst.max((c / (vi * vj).sqrt() - target).abs());
        }
    }
    check(worst < 0.05, format!("max |corr error| = {worst:.5}"))
}

fn c4_cholesky() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let n = 1 + k % 8;
        let rank = 1 + rng.random_range(0..n);
        let a = gaussian_matrix(&mut rng, n, rank);
        let sigma = &a * a.transpose();
        let l = match cholesky(&sigma) {
            Ok(f) => f.l,
            Err(e) => {
                return Err(format!(
                    "PSD matrix #{k} (n={n}, rank={rank}) rejected: {e}"
                ))
            }
        };
        worst = worst.max((&l * l.transpose() - &sigma).amax());
    }
    let mut rejected = 0;
    for _ in 0..200 {
        let n = 2 + rng.random_range(0..7);
        let q = gaussian_matrix(&mut rng, n, n).qr().q();
        let mut eig: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        eig[rng.random_range(0..n)] = -rng.random_range(0.05..1.0);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eig));
        let m = &q * d * q.transpose();
        let m = (&m + m.transpose()) * 0.5;
        if cholesky(&m).is_err() {
            rejected += 1;
        }
    }
    check(
        worst < 1e-10 && rejected == 200,
        format!("max reconstruction error = {worst:.3e}; indefinite rejected {rejected}/200"),
    )
}

fn grid_min(cov: &DMatrix<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..=100 {
        for b in 0..=(100 - a) {
            let w = [
                a as f64 / 100.0,
                b as f64 / 100.0,
                (100 - a - b) as f64 / 100.0,
            ];
            let mut v = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    v += w[i] * w[j] * cov[(i, j)];
                }
            }
            best = best.min(v);
        }
    }
    best
}

fn c5_optimizer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst_gap = f64::NEG_INFINITY;
    for k in 0..25 {
        let factors = if k % 5 == 4 { 2 } else { 3 };
        let a = gaussian_matrix(&mut rng, 3, factors) * 0.3;
        let cov = &a * a.transpose() + DMatrix::identity(3, 3) * 1e-4 * (k % 2) as f64;
        let params = MarketParams::from_cov(tickers(3), vec![0.1, 0.1, 0.1], cov.clone(), 252)
            .map_err(|e| e.to_string())?;
        let p = min_variance(&params).map_err(|e| e.to_string())?;
        let w = &p.weights.w;
        let mut v = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                v += w[i] * w[j] * cov[(i, j)];
            }
        }
        worst_gap = worst_gap.max(v - grid_min(&cov));
    }
    let mut worst_w = 0.0f64;
    for _ in 0..50 {
        let s1: f64 = rng.random_range(0.05..1.5);
        let s2: f64 = rng.random_range(0.05..1.5);
        let cov = DMatrix::from_row_slice(2, 2, &[s1 * s1, 0.0, 0.0, s2 * s2]);
        let params = MarketParams::from_cov(tickers(2), vec![0.0, 0.0], cov, 252).unwrap();
        let w = min_variance(&params).map_err(|e| e.to_string())?.weights.w;
        worst_w = worst_w.max((w[0] - s2 * s2 / (s1 * s1 + s2 * s2)).abs());
    }
    check(
        worst_gap <= 1e-9 && worst_w < 1e-6,
        format!("max (mvp - grid) objective = {worst_gap:.3e} over 25 covariances; two-asset max |dw| = {worst_w:.3e}"),
    )
}

fn c6_double_sum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let n = 1 + k % 10;
        let a = gaussian_matrix(&mut rng, n, n) * 0.5;
        let cov = &a * a.transpose();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let params = MarketParams::from_cov(tickers(n), vec![0.0; n], cov.clone(), 252).unwrap();
        let wv = nalgebra::DVector::from_vec(w.clone());
        let matrix_form = (wv.transpose() * &cov * &wv)[(0, 0)];
        let double = quad_form_double_sum(&w, &params).map_err(|e| e.to_string())?;
        worst = worst.max((matrix_form - double).abs());
    }
    check(
        worst < 1e-12,
        format!("max |w'Sw - double sum| = {worst:.3e} over 1000 draws"),
    )
}

fn c7_determinism() -> Outcome {
    let cfg = RunConfig::from_file(fixture("crypto_like.toml")).map_err(|e| e.to_string())?;
    let reports: Vec<String> = [None, Some(1), Some(3), Some(8)]
        .into_iter()
        .map(|w| run_pipeline(&cfg, w).and_then(|o| o.report.to_json()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let same = reports.windows(2).all(|p| p[0] == p[1]);
    check(
        same,
        format!(
            "{} runs (workers default/1/3/8), {} bytes each",
            reports.len(),
            reports[0].len()
        ),
    )
}

fn c8_ordering() -> Outcome {
    let crypto = run_pipeline(
        &RunConfig::from_file(fixture("crypto_like.toml")).unwrap(),
        None,
    )
    .map_err(|e| e.to_string())?
    .report;
    let equity = run_pipeline(
        &RunConfig::from_file(fixture("equity_like.toml")).unwrap(),
        None,
    )
    .map_err(|e| e.to_string())?
    .report;
    check(
        crypto.var_value < equity.var_value && crypto.chance_of_loss > equity.chance_of_loss,
        format!(
            "high-vol VaR={:.2} loss={:.4}; low-vol VaR={:.2} loss={:.4}",
            crypto.var_value, crypto.chance_of_loss, equity.var_value, equity.chance_of_loss
        ),
    )
}

fn c9_backtest() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut spec = equity_like();
    spec.n_rows = 252 + 1000 + 1;
    spec.exact_moments = false;
    spec.seed = 99;
    let csv = dir.path().join("synthetic.csv");
    save_prices(&generate_prices(&spec).unwrap(), &csv).map_err(|e| e.to_string())?;
    let (report, _) = run_backtest(&RunConfig::new(csv)).map_err(|e| e.to_string())?;
    check(
        report.periods == 1000 && (0.03..=0.07).contains(&report.rate),
        format!(
            "{} violations over {} periods, rate {:.4}",
            report.violations, report.periods, report.rate
        ),
    )
}

fn c10_runtime() -> Outcome {
    let cfg = RunConfig::from_file(fixture("equity_like.toml")).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let out = run_pipeline(&cfg, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let e = &out.report.config_echo.effective;
    check(
        elapsed < Duration::from_secs(10) && e.n_steps == 252 && e.n_paths == 10_000,
        format!(
            "N={} paths={} steps={} time={elapsed:.2?}",
            e.tickers.len(),
            e.n_paths,
            e.n_steps
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 analytic VaR oracle", c1_analytic_var),
        ("2 moment suite", c2_moments),
        ("3 correlation preservation", c3_correlation),
        ("4 cholesky reconstruction", c4_cholesky),
        ("5 optimizer oracle equivalence", c5_optimizer),
        ("6 double-sum equivalence", c6_double_sum),
        ("7 determinism", c7_determinism),
        ("8 high-vol vs low-vol ordering", c8_ordering),
        ("9 backtest calibration", c9_backtest),
        ("10 end-to-end runtime", c10_runtime),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(d) => println!("PASS criterion {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
