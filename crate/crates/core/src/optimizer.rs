//! Long-only, fully-invested portfolio construction.
//!
//! All solvers run projected gradient descent on the weight simplex with an
//! exact sort-based projection. Quadratic objectives use the fixed step
//! `1 / (2 * lambda_max(cov))`. After the descent, an active-set polish solves
//! the equality-constrained KKT system on the detected support and keeps the
//! result only when it is feasible and no worse than the iterate.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::MarketParams;

pub const MAX_ITERATIONS: usize = 10_000;
pub const OBJECTIVE_TOLERANCE: f64 = 1e-12;
/// Weights smaller than this in magnitude are reported as exactly zero.
pub const WEIGHT_CLAMP: f64 = 1e-12;
pub const GRID_MAX_ASSETS: usize = 4;

/// Portfolio weights on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub tickers: Vec<String>,
    pub w: Vec<f64>,
}

impl WeightVector {
    /// Validates and clamps: entries must be `>= -1e-12` and sum to one within
    /// `1e-9`; anything with magnitude below `1e-12` becomes `0.0`.
    pub fn new(tickers: Vec<String>, w: Vec<f64>) -> Result<Self> {
        if tickers.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: tickers.len(),
                got: w.len(),
            });
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        if let Some(bad) = w.iter().find(|&&x| x < -WEIGHT_CLAMP) {
            return Err(Error::invalid(format!("negative weight {bad}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
        }
        let w = w
            .into_iter()
            .map(|x| {
                if x.abs() < WEIGHT_CLAMP {
                    0.0
                } else {
                    x.max(0.0)
                }
            })
            .collect();
        Ok(Self { tickers, w })
    }

    pub fn equal(tickers: Vec<String>) -> Self {
        let n = tickers.len();
        Self {
            w: vec![1.0 / n as f64; n],
            tickers,
        }
    }

    fn from_solution(tickers: &[String], x: &DVector<f64>) -> Result<Self> {
        let clamped: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
        let s: f64 = clamped.iter().sum();
        Self::new(tickers.to_vec(), clamped.iter().map(|v| v / s).collect())
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.w)
    }
}

/// Annualized return, risk and Sharpe ratio of a weighted portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PortfolioStats {
    pub expected_return: f64,
    pub variance: f64,
    pub volatility: f64,
    /// `None` when the volatility is zero.
    pub sharpe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizedPortfolio {
    pub weights: WeightVector,
    pub stats: PortfolioStats,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub target_return: f64,
    pub weights: WeightVector,
    pub stats: PortfolioStats,
}

fn check_dims(n: usize, params: &MarketParams) -> Result<()> {
    if n != params.n_assets() {
        return Err(Error::DimensionMismatch {
            expected: params.n_assets(),
            got: n,
        });
    }
    Ok(())
}

fn quad_form(cov: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    w.dot(&(cov * w))
}

pub fn portfolio_stats(
    weights: &WeightVector,
    params: &MarketParams,
    risk_free: f64,
) -> Result<PortfolioStats> {
    check_dims(weights.len(), params)?;
    let w = weights.as_dvector();
    Ok(stats_for(&w, params, risk_free))
}

fn stats_for(w: &DVector<f64>, params: &MarketParams, risk_free: f64) -> PortfolioStats {
    let expected_return = w.dot(&params.mu);
    let variance = quad_form(&params.cov, w).max(0.0);
    let volatility = variance.sqrt();
    let sharpe = (volatility > 0.0).then(|| (expected_return - risk_free) / volatility);
    PortfolioStats {
        expected_return,
        variance,
        volatility,
        sharpe,
    }
}

/// Portfolio variance written out as the explicit sum over own-variance terms
/// and ordered pairs of distinct assets. Kept as a cross-check for the matrix
/// quadratic form.
pub fn quad_form_double_sum(weights: &[f64], params: &MarketParams) -> Result<f64> {
    check_dims(weights.len(), params)?;
    let n = weights.len();
    let mut own = 0.0;
    for i in 0..n {
        own += weights[i] * weights[i] * params.sigma[i] * params.sigma[i];
    }
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                cross += weights[i] * weights[j] * params.cov[(i, j)];
            }
        }
    }
    Ok(own + cross)
}

/// Euclidean projection onto `{x >= 0, sum x = 1}` (sort-based).
pub fn project_simplex(y: &DVector<f64>) -> DVector<f64> {
    let n = y.len();
    let mut u: Vec<f64> = y.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    DVector::from_fn(n, |i, _| (y[i] - theta).max(0.0))
}

/// Projection onto the simplex intersected with `{mu . x = target}`; the
/// multiplier on the return constraint is found by bisection. `target` must lie
/// strictly between `min(mu)` and `max(mu)`.
fn project_simplex_with_return(y: &DVector<f64>, mu: &DVector<f64>, target: f64) -> DVector<f64> {
    let at = |b: f64| project_simplex(&(y - mu * b));
    let excess = |b: f64| at(b).dot(mu) - target;

    // excess(b) is non-increasing in b
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let mut step = 1.0;
    if excess(0.0) > 0.0 {
        while excess(hi) > 0.0 && step < 1e300 {
            lo = hi;
            hi += step;
            step *= 2.0;
        }
    } else {
        while excess(lo) < 0.0 && step < 1e300 {
            hi = lo;
            lo -= step;
            step *= 2.0;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (wl, wh) = (at(lo), at(hi));
    let (el, eh) = (wl.dot(mu) - target, wh.dot(mu) - target);
    // w(b) is piecewise linear; interpolate across the final bracket
    if el > eh {
        let s = el / (el - eh);
        &wl * (1.0 - s) + &wh * s
    } else {
        wl
    }
}

fn lambda_max(cov: &DMatrix<f64>) -> f64 {
    cov.clone().symmetric_eigenvalues().max()
}

fn validate_cov(cov: &DMatrix<f64>) -> Result<f64> {
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    let eig = cov.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo < -1e-10 * hi.abs().max(1.0) {
        let pivot = eig.iter().position(|&e| e == lo).unwrap_or(0);
        return Err(Error::NotPositiveSemidefinite { pivot, value: lo });
    }
    Ok(hi.max(0.0))
}

/// Fixed-step projected gradient descent on `w' cov w`.
fn descend_quadratic(
    cov: &DMatrix<f64>,
    lmax: f64,
    start: DVector<f64>,
    project: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> Result<(DVector<f64>, usize)> {
    let mut x = project(&start);
    if lmax <= 0.0 {
        return Ok((x, 0));
    }
    let step = 1.0 / (2.0 * lmax);
    let tol = OBJECTIVE_TOLERANCE * lmax.max(f64::MIN_POSITIVE);
    let mut f = quad_form(cov, &x);
    for it in 1..=MAX_ITERATIONS {
        let grad = (cov * &x) * 2.0;
        let next = project(&(&x - grad * step));
        let f_next = quad_form(cov, &next);
        let delta = (f - f_next).abs();
        x = next;
        f = f_next;
        if delta < tol {
            return Ok((x, it));
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
    })
}

/// Solves `min x' cov x` subject to `rows . x = rhs` restricted to `support`,
/// dropping the most negative coordinate until the solution is nonnegative.
fn polish_on_support(
    cov: &DMatrix<f64>,
    constraints: &[(&DVector<f64>, f64)],
    mut support: Vec<usize>,
) -> Option<DVector<f64>> {
    let n = cov.nrows();
    while !support.is_empty() {
        let k = support.len();
        let m = constraints.len();
        let mut kkt = DMatrix::zeros(k + m, k + m);
        let mut rhs = DVector::zeros(k + m);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = 2.0 * cov[(i, j)];
            }
            for (c, (row, _)) in constraints.iter().enumerate() {
                kkt[(a, k + c)] = row[i];
                kkt[(k + c, a)] = row[i];
            }
        }
        for (c, (_, b)) in constraints.iter().enumerate() {
            rhs[k + c] = *b;
        }
        let sol = kkt.lu().solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let (worst, min) = (0..k)
            .map(|a| (a, sol[a]))
            .min_by(|x, y| x.1.total_cmp(&y.1))?;
        if min < -1e-14 {
            support.remove(worst);
            continue;
        }
        let mut x = DVector::zeros(n);
        for (a, &i) in support.iter().enumerate() {
            x[i] = sol[a].max(0.0);
        }
        return Some(x);
    }
    None
}

fn support_of(x: &DVector<f64>) -> Vec<usize> {
    (0..x.len()).filter(|&i| x[i] > 1e-9).collect()
}

fn feasible(x: &DVector<f64>, constraints: &[(&DVector<f64>, f64)]) -> bool {
    x.iter().all(|&v| v >= 0.0)
        && constraints
            .iter()
            .all(|(row, b)| (row.dot(x) - b).abs() <= 1e-10 * b.abs().max(1.0))
}

fn minimize_variance(
    cov: &DMatrix<f64>,
    lmax: f64,
    constraints: &[(&DVector<f64>, f64)],
    project: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> Result<(DVector<f64>, usize)> {
    let n = cov.nrows();
    let start = DVector::from_element(n, 1.0 / n as f64);
    let (x, iterations) = descend_quadratic(cov, lmax, start, project)?;
    let f = quad_form(cov, &x);
    if let Some(p) = polish_on_support(cov, constraints, support_of(&x)) {
        if feasible(&p, constraints) && quad_form(cov, &p) <= f + 1e-15 * lmax.max(1.0) {
            return Ok((p, iterations));
        }
    }
    Ok((x, iterations))
}

/// Minimum variance portfolio over the long-only simplex. Stats are reported
/// with a zero risk-free rate.
pub fn min_variance(params: &MarketParams) -> Result<OptimizedPortfolio> {
    let n = params.n_assets();
    if n == 0 {
        return Err(Error::invalid("no assets"));
    }
    let lmax = validate_cov(&params.cov)?;
    let ones = DVector::from_element(n, 1.0);
    let (x, iterations) = minimize_variance(&params.cov, lmax, &[(&ones, 1.0)], project_simplex)?;
    let weights = WeightVector::from_solution(&params.tickers, &x)?;
    let stats = stats_for(&weights.as_dvector(), params, 0.0);
    Ok(OptimizedPortfolio {
        weights,
        stats,
        iterations,
        warning: None,
    })
}

/// Minimum-variance portfolio on the simplex whose expected return equals
/// `target`. Returns `None` when the target lies outside `[min mu, max mu]`.
pub fn frontier_point(params: &MarketParams, target: f64) -> Result<Option<FrontierPoint>> {
    let n = params.n_assets();
    let lmax = validate_cov(&params.cov)?;
    let mu = &params.mu;
    let (lo, hi) = (mu.min(), mu.max());
    let tol = 1e-12 * (hi - lo).abs().max(mu.amax()).max(1.0);
    if target < lo - tol || target > hi + tol {
        return Ok(None);
    }

    let x = if hi - lo <= tol || target <= lo + tol || target >= hi - tol {
        // extreme target: only assets attaining it can carry weight
        let edge = if target <= lo + tol { lo } else { hi };
        let idx: Vec<usize> = (0..n).filter(|&i| (mu[i] - edge).abs() <= tol).collect();
        let sub_cov = params.cov.select_rows(&idx).select_columns(&idx);
        let sub_lmax = lambda_max(&sub_cov).max(0.0);
        let ones = DVector::from_element(idx.len(), 1.0);
        let (sub, _) = minimize_variance(&sub_cov, sub_lmax, &[(&ones, 1.0)], project_simplex)?;
        let mut x = DVector::zeros(n);
        for (a, &i) in idx.iter().enumerate() {
            x[i] = sub[a];
        }
        x
    } else {
        let ones = DVector::from_element(n, 1.0);
        let (x, _) = minimize_variance(&params.cov, lmax, &[(&ones, 1.0), (mu, target)], |y| {
            project_simplex_with_return(y, mu, target)
        })?;
        x
    };

    let weights = WeightVector::from_solution(&params.tickers, &x)?;
    let stats = stats_for(&weights.as_dvector(), params, 0.0);
    Ok(Some(FrontierPoint {
        target_return: target,
        weights,
        stats,
    }))
}

/// `n_points` evenly spaced target returns from `min(mu)` to `max(mu)`, each
/// solved for minimum variance.
pub fn efficient_frontier(params: &MarketParams, n_points: usize) -> Result<Vec<FrontierPoint>> {
    if n_points < 2 {
        return Err(Error::invalid("efficient frontier needs at least 2 points"));
    }
    let (lo, hi) = (params.mu.min(), params.mu.max());
    let mut out = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let target = if k == n_points - 1 {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (n_points - 1) as f64
        };
        if let Some(p) = frontier_point(params, target)? {
            out.push(p);
        }
    }
    Ok(out)
}

fn sharpe_objective(w: &DVector<f64>, params: &MarketParams, risk_free: f64) -> f64 {
    let var = quad_form(&params.cov, w);
    let excess = w.dot(&params.mu) - risk_free;
    if var <= 0.0 {
        return if excess > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
    }
    excess / var.sqrt()
}

fn numerical_gradient(w: &DVector<f64>, f: impl Fn(&DVector<f64>) -> f64) -> DVector<f64> {
    let h = 1e-7;
    DVector::from_fn(w.len(), |i, _| {
        let mut up = w.clone();
        let mut dn = w.clone();
        up[i] += h;
        dn[i] -= h;
        (f(&up) - f(&dn)) / (2.0 * h)
    })
}

/// Projected gradient ascent with backtracking on the Sharpe ratio.
fn ascend_sharpe(
    params: &MarketParams,
    risk_free: f64,
    start: DVector<f64>,
) -> Result<(DVector<f64>, usize)> {
    let f = |w: &DVector<f64>| sharpe_objective(w, params, risk_free);
    let mut x = project_simplex(&start);
    let mut fx = f(&x);
    let mut step = 1.0;
    for it in 1..=MAX_ITERATIONS {
        if !fx.is_finite() {
            return Ok((x, it));
        }
        let g = numerical_gradient(&x, f);
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let cand = project_simplex(&(&x + &g * t));
            let fc = f(&cand);
            let moved = &cand - &x;
            // sufficient-increase test for projected steps
            if fc >= fx + 1e-4 * g.dot(&moved) || fc.is_infinite() && fc > 0.0 {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((next, f_next)) = accepted else {
            return Ok((x, it));
        };
        let delta = (f_next - fx).abs();
        x = next;
        fx = f_next;
        step = (t * 2.0).min(1e6);
        if delta < OBJECTIVE_TOLERANCE {
            return Ok((x, it));
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
    })
}

/// Tangency weights on a support: `cov_SS^-1 (mu_S - rf)`, normalized.
fn tangency_on_support(
    params: &MarketParams,
    risk_free: f64,
    mut support: Vec<usize>,
) -> Option<DVector<f64>> {
    let n = params.n_assets();
    while !support.is_empty() {
        let sub = params.cov.select_rows(&support).select_columns(&support);
        let excess = DVector::from_fn(support.len(), |a, _| params.mu[support[a]] - risk_free);
        let z = sub.lu().solve(&excess)?;
        let total: f64 = z.sum();
        if !(total > 0.0) || z.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let z = z / total;
        let (worst, min) = (0..z.len())
            .map(|a| (a, z[a]))
            .min_by(|x, y| x.1.total_cmp(&y.1))?;
        if min < -1e-14 {
            support.remove(worst);
            continue;
        }
        let mut x = DVector::zeros(n);
        for (a, &i) in support.iter().enumerate() {
            x[i] = z[a].max(0.0);
        }
        let total = x.sum();
        return Some(x / total);
    }
    None
}

/// Maximum Sharpe ratio portfolio over the simplex. Starts from the equal
/// weight portfolio and from every vertex; ties in Sharpe go to the lower
/// volatility candidate. When no asset beats the risk-free rate the result
/// carries a warning.
pub fn max_sharpe(params: &MarketParams, risk_free: f64) -> Result<OptimizedPortfolio> {
    let n = params.n_assets();
    if n == 0 {
        return Err(Error::invalid("no assets"));
    }
    validate_cov(&params.cov)?;
    if params.mu.iter().any(|m| !m.is_finite()) || !risk_free.is_finite() {
        return Err(Error::NonFinite("drift"));
    }

    let mut starts = vec![DVector::from_element(n, 1.0 / n as f64)];
    for i in 0..n {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        starts.push(v);
    }

    let mut candidates = Vec::new();
    let mut iterations = 0;
    for s in starts {
        let (x, it) = ascend_sharpe(params, risk_free, s)?;
        iterations += it;
        if let Some(t) = tangency_on_support(params, risk_free, support_of(&x)) {
            candidates.push(t);
        }
        candidates.push(x);
    }
    if let Some(t) = tangency_on_support(params, risk_free, (0..n).collect()) {
        candidates.push(t);
    }

    let score = |w: &DVector<f64>| {
        let s = sharpe_objective(w, params, risk_free);
        (s, quad_form(&params.cov, w).max(0.0))
    };
    let mut best = candidates[0].clone();
    let (mut best_s, mut best_v) = score(&best);
    for c in candidates.into_iter().skip(1) {
        let (s, v) = score(&c);
        let tie = (s - best_s).abs() <= 1e-12 * s.abs().max(1.0) || s == best_s;
        if (!tie && s > best_s) || (tie && v < best_v) {
            best = c;
            best_s = s;
            best_v = v;
        }
    }

    let weights = WeightVector::from_solution(&params.tickers, &best)?;
    let stats = stats_for(&weights.as_dvector(), params, risk_free);
    let warning = params
        .mu
        .iter()
        .all(|&m| m <= risk_free)
        .then(|| format!("no asset has expected return above the risk-free rate {risk_free}"));
    Ok(OptimizedPortfolio {
        weights,
        stats,
        iterations,
        warning,
    })
}

/// Exhaustive search over simplex lattice points spaced `resolution` apart.
/// Independent of the gradient solver; used to verify it.
pub fn grid_oracle_min_variance(params: &MarketParams, resolution: f64) -> Result<WeightVector> {
    let n = params.n_assets();
    if n > GRID_MAX_ASSETS {
        return Err(Error::TooManyAssets {
            max: GRID_MAX_ASSETS,
            got: n,
        });
    }
    if n == 0 {
        return Err(Error::invalid("no assets"));
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::invalid(format!(
            "resolution {resolution} out of (0, 1]"
        )));
    }
    let steps = (1.0 / resolution).round();
    if (steps * resolution - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "resolution {resolution} does not divide 1"
        )));
    }
    let steps = steps as usize;

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut counts = vec![0usize; n];
    enumerate_compositions(steps, 0, &mut counts, &mut |c| {
        let w = DVector::from_fn(n, |i, _| c[i] as f64 / steps as f64);
        let v = quad_form(&params.cov, &w);
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, c.to_vec()));
        }
    });
    let (_, c) = best.expect("lattice is non-empty");
    WeightVector::new(
        params.tickers.clone(),
        c.iter().map(|&k| k as f64 / steps as f64).collect(),
    )
}

fn enumerate_compositions(
    remaining: usize,
    idx: usize,
    counts: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if idx == counts.len() - 1 {
        counts[idx] = remaining;
        visit(counts);
        return;
    }
    for k in 0..=remaining {
        counts[idx] = k;
        enumerate_compositions(remaining - k, idx + 1, counts, visit);
    }
}
