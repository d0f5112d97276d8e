//! Comparison solvers: ARD and a cross-validated lasso.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bmfs::{fit_with_prior, PosteriorResult, Prior, SolverOptions};
use crate::case::Design;
use crate::error::{BalanceError, Result};

/// The horse-shoe model with an uncorrelated prior `γ diag(λ)`.
///
/// Same state, schedule and thresholding as [`crate::bmfs::fit`]; the `d`
/// update loses its off-diagonal coupling.
pub fn fit_ard(design: &Design, opts: &SolverOptions) -> Result<PosteriorResult> {
    fit_with_prior(design, opts, Prior::Ard)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoOptions {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub max_iters: usize,
    /// Relative change of `β` that stops ISTA.
    pub tol: f64,
}

/// `count` values spaced evenly in log scale over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { lambda_grid: log_grid(1e-2, 1e2, 30), folds: 5, max_iters: 5000, tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoResult {
    /// Coefficients in original column units.
    pub beta: Vec<f64>,
    /// Coefficients on the design scale.
    pub beta_raw: Vec<f64>,
    pub lambda: f64,
    pub support: Vec<usize>,
    /// Mean held-out squared error per grid value.
    pub cv_mse: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IstaOutcome {
    pub beta: DVector<f64>,
    pub iters: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting from the initial point.
    pub objective: Vec<f64>,
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `½‖y − Xβ‖² + λ‖β‖₁`.
pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * (y - x * beta).norm_squared() + lambda * beta.lp_norm(1)
}

/// Proximal gradient for `½‖y − Xβ‖² + λ‖β‖₁` with backtracking on the
/// step size. `step` is carried across calls as a warm start.
pub fn ista(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    start: &DVector<f64>,
    step: &mut f64,
    max_iters: usize,
    tol: f64,
    track: bool,
) -> IstaOutcome {
    let mut beta = start.clone();
    let mut resid = y - x * &beta;
    let mut smooth = 0.5 * resid.norm_squared();
    let mut objective = Vec::new();
    if track {
        objective.push(smooth + lambda * beta.lp_norm(1));
    }
    for it in 1..=max_iters {
        let grad = -x.tr_mul(&resid);
        loop {
            let t = *step;
            let cand = DVector::from_fn(beta.len(), |j, _| soft(beta[j] - t * grad[j], t * lambda));
            let diff = &cand - &beta;
            let cand_resid = y - x * &cand;
            let cand_smooth = 0.5 * cand_resid.norm_squared();
            let bound = smooth + grad.dot(&diff) + diff.norm_squared() / (2.0 * t);
            if cand_smooth <= bound + 1e-12 * smooth.abs().max(1.0) {
                let change = diff.norm() / beta.norm().max(cand.norm()).max(f64::MIN_POSITIVE);
                beta = cand;
                resid = cand_resid;
                smooth = cand_smooth;
                if track {
                    objective.push(smooth + lambda * beta.lp_norm(1));
                }
                if change < tol || diff.norm() == 0.0 {
                    return IstaOutcome { beta, iters: it, converged: true, objective };
                }
                break;
            }
            *step *= 0.5;
            if *step < 1e-300 {
                return IstaOutcome { beta, iters: it, converged: false, objective };
            }
        }
    }
    IstaOutcome { beta, iters: max_iters, converged: false, objective }
}

/// Largest eigenvalue of `XᵀX` by power iteration, padded by 1% so the
/// first step is almost always accepted.
fn lipschitz(x: &DMatrix<f64>) -> f64 {
    let mut v = DVector::from_element(x.ncols(), 1.0 / (x.ncols() as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..50 {
        let w = x.tr_mul(&(x * &v));
        let norm = w.norm();
        if norm == 0.0 {
            return 1.0;
        }
        v = w / norm;
        if (norm - est).abs() <= 1e-6 * norm {
            est = norm;
            break;
        }
        est = norm;
    }
    1.01 * est
}

/// Fits the lasso path on `x, y` for every grid value, from the largest
/// to the smallest with warm starts. Returned in grid order.
fn lasso_path(x: &DMatrix<f64>, y: &DVector<f64>, opts: &LassoOptions) -> Vec<IstaOutcome> {
    let mut order: Vec<usize> = (0..opts.lambda_grid.len()).collect();
    order.sort_by(|&a, &b| opts.lambda_grid[b].total_cmp(&opts.lambda_grid[a]));
    let mut step = 1.0 / lipschitz(x);
    let mut warm = DVector::zeros(x.ncols());
    let mut out: Vec<Option<IstaOutcome>> = vec![None; order.len()];
    for &k in &order {
        let res = ista(x, y, opts.lambda_grid[k], &warm, &mut step, opts.max_iters, opts.tol, false);
        warm = res.beta.clone();
        out[k] = Some(res);
    }
    out.into_iter().map(|r| r.expect("every grid value is visited")).collect()
}

/// Lasso with `λ` chosen by `folds`-fold cross-validated prediction error.
///
/// Missing `x` cells are replaced by their column mean first. Folds assign
/// row `i` to fold `i mod folds`.
pub fn fit_lasso(design: &Design, opts: &LassoOptions) -> Result<LassoResult> {
    design.validate()?;
    if opts.lambda_grid.is_empty() || opts.lambda_grid.iter().any(|&l| !(l > 0.0)) {
        return Err(BalanceError::Validation("lasso grid must be non-empty and positive".into()));
    }
    let (n, p) = design.x.shape();
    if opts.folds < 2 || opts.folds > n {
        return Err(BalanceError::Validation(format!("folds must lie in [2, {n}]")));
    }
    let mut x = design.x.clone();
    for j in 0..p {
        let obs: Vec<f64> = (0..n).filter(|&i| !design.x_mask[(i, j)]).map(|i| design.x[(i, j)]).collect();
        let mean = if obs.is_empty() { 0.0 } else { obs.iter().sum::<f64>() / obs.len() as f64 };
        for i in 0..n {
            if design.x_mask[(i, j)] {
                x[(i, j)] = mean;
            }
        }
    }
    let rows: Vec<usize> = (0..n).filter(|&i| !design.y_mask[i]).collect();
    let x = x.select_rows(&rows);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| design.y[i]));
    let n_obs = rows.len();

    let mut cv_mse = vec![0.0; opts.lambda_grid.len()];
    for fold in 0..opts.folds {
        let train: Vec<usize> = (0..n_obs).filter(|i| i % opts.folds != fold).collect();
        let test: Vec<usize> = (0..n_obs).filter(|i| i % opts.folds == fold).collect();
        if test.is_empty() {
            continue;
        }
        let xt = x.select_rows(&train);
        let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let xv = x.select_rows(&test);
        let yv = DVector::from_iterator(test.len(), test.iter().map(|&i| y[i]));
        for (k, res) in lasso_path(&xt, &yt, opts).iter().enumerate() {
            cv_mse[k] += (&yv - &xv * &res.beta).norm_squared() / n_obs as f64;
        }
    }
    // Ties go to the larger penalty, i.e. the sparser model.
    let mut best = 0;
    for k in 1..cv_mse.len() {
        let better = cv_mse[k] < cv_mse[best]
            || (cv_mse[k] == cv_mse[best] && opts.lambda_grid[k] > opts.lambda_grid[best]);
        if better {
            best = k;
        }
    }
    let lambda = opts.lambda_grid[best];
    let path = lasso_path(&x, &y, opts);
    let chosen = &path[best];
    let support: Vec<usize> = (0..p).filter(|&j| chosen.beta[j] != 0.0).collect();
    Ok(LassoResult {
        beta: (0..p).map(|j| chosen.beta[j] / design.columns[j].scale).collect(),
        beta_raw: chosen.beta.iter().copied().collect(),
        lambda,
        support,
        cv_mse,
        iters: chosen.iters,
        converged: chosen.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_penalty_kills_everything() {
        let x = DMatrix::from_fn(8, 3, |i, j| ((i + 2 * j) % 5) as f64 - 2.0);
        let y = DVector::from_fn(8, |i, _| i as f64 - 3.5);
        let kill = x.tr_mul(&y).amax();
        let mut step = 0.01;
        let res = ista(&x, &y, kill * 1.0001, &DVector::zeros(3), &mut step, 5000, 1e-12, false);
        assert!(res.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn orthonormal_closed_form() {
        let x = DMatrix::<f64>::identity(4, 4);
        let y = DVector::from_vec(vec![3.0, -0.5, 1.2, -2.0]);
        let mut step = 1.0;
        let res = ista(&x, &y, 1.0, &DVector::zeros(4), &mut step, 5000, 1e-14, false);
        for j in 0..4 {
            assert!((res.beta[j] - soft(y[j], 1.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = log_grid(1e-2, 1e2, 30);
        assert_eq!(g.len(), 30);
        assert!((g[0] - 1e-2).abs() < 1e-15 && (g[29] - 1e2).abs() < 1e-10);
        let r = g[1] / g[0];
        assert!(g.windows(2).all(|w| ((w[1] / w[0]) - r).abs() < 1e-10));
    }
}
