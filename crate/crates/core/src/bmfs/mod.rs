//! Variational inference for the correlated horse-shoe linear model.
//!
//! Model: `y = Xβ + ε` with `ε ~ N(0, α⁻¹I)` and the prior precision of `β`
//! equal to `γ D X̃ᵀX̃ D`, where `D = diag(λ½)` carries per-coordinate local
//! scales with horse-shoe hyperpriors and `γ` is global. Jeffreys priors sit
//! on `α` and `γ`. The mean-field posterior is
//! `q(β) q(λ) q(α) q(γ)`, with `q(β)` Gaussian for signed coefficients or a
//! product of log-normals when `β ≥ 0`.
//!
//! One iteration updates, in order, `q(β)`, `q(λ)` (damped, line-searched),
//! `q(α)` and `q(γ)`, then imputes missing cells. After convergence the
//! shrinkage weights `ω_j = ⟨λ_j⟩/(⟨λ_j⟩ + 1)` are thresholded by
//! [`soft_threshold`].
//!
//! The prior Gram `XᵀX` is singular whenever `p > n` or columns are exactly
//! collinear. Its null space is then constrained only by `jitter`, which lets
//! `Cov[β]` blow up along it and drives `⟨γ⟩` to zero. A fixed isotropic
//! ridge `τ I` with `τ = ridge · tr(XᵀX)/p` is therefore added to the Gaussian
//! precision (and to the log-normal curvature). It enters no other update.

pub mod linalg;
pub mod moments;
pub mod threshold;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::case::Design;
use crate::error::{BalanceError, Result};
use crate::specfun::SpecFunConfig;
use linalg::SpdFactor;

pub use moments::{c3_coefficient, lambda_moments, lambda_moments_with, lambda_stat, C3Form, LambdaStat};
pub use threshold::{omega_threshold, shrinkage_weights, soft_threshold, FixedMeanGmm};

/// Largest relative jitter tried before a factorisation is declared singular.
const MAX_JITTER: f64 = 1e-2;
/// Floor on `b_α` so exact fits do not divide by zero.
const B_ALPHA_FLOOR: f64 = 1e-12;
const B_GAMMA_FLOOR: f64 = 1e-300;
/// Relative slack allowed in the line-search objective.
const ARMIJO_SLACK: f64 = 1e-12;
/// Log-normal moments are rejected past this exponent.
const LOG_MOMENT_MAX: f64 = 700.0;

/// Prior on `β` given the local scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prior {
    /// Precision `γ D XᵀX D`.
    Correlated,
    /// Precision `γ diag(λ)`: the uncorrelated horse-shoe, i.e. ARD.
    Ard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative ℓ₂ change of `⟨β⟩` that counts as converged.
    pub tol: f64,
    pub rho_init: f64,
    pub armijo_shrink: f64,
    pub armijo_max_backtracks: usize,
    /// Relative to `tr(XᵀX)/p`.
    pub jitter: f64,
    /// Relative to `tr(XᵀX)/p`; used by the correlated prior only.
    pub ridge: f64,
    pub nonneg: bool,
    /// Recorded for reproducibility; the solver itself draws no random
    /// numbers.
    pub seed: u64,
    pub c3_form: C3Form,
    pub specfun: SpecFunConfig,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 200,
            tol: 1e-5,
            rho_init: 1.0,
            armijo_shrink: 0.5,
            armijo_max_backtracks: 20,
            jitter: 1e-8,
            ridge: 0.1,
            nonneg: false,
            seed: 0,
            c3_form: C3Form::Exact,
            specfun: SpecFunConfig::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BalanceError::Validation(m.to_string()));
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.rho_init > 0.0 && self.rho_init <= 1.0) {
            return bad("rho_init must lie in (0, 1]");
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return bad("armijo_shrink must lie in (0, 1)");
        }
        if !(self.jitter >= 0.0) || !(self.ridge >= 0.0) {
            return bad("jitter and ridge must be non-negative");
        }
        self.specfun.validate().map_err(BalanceError::Validation)
    }
}

/// Natural and mean parameters of every factor, plus the working data with
/// missing cells filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub prior: Prior,
    pub nonneg: bool,
    pub beta_h: DVector<f64>,
    /// Empty in the log-normal branch.
    pub beta_j: DMatrix<f64>,
    /// Empty in the Gaussian branch.
    pub beta_zeta: DVector<f64>,
    pub d: DVector<f64>,
    pub a_alpha: f64,
    pub b_alpha: f64,
    pub a_gamma: f64,
    pub b_gamma: f64,
    pub mean_beta: DVector<f64>,
    /// Full covariance in the Gaussian branch, diagonal in the log-normal one.
    pub cov_beta: DMatrix<f64>,
    pub mean_beta_sq: DVector<f64>,
    pub mean_log_beta: DVector<f64>,
    pub var_log_beta: DVector<f64>,
    pub mean_lambda: DVector<f64>,
    pub mean_lambda_half: DVector<f64>,
    pub c3: DVector<f64>,
    log_scaled_norm: DVector<f64>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    /// `tr(XᵀX)/p` at initialisation; jitter and ridge are relative to it.
    pub gram_scale: f64,
    pub ridge_abs: f64,
    pub jitter_abs: f64,
}

impl VariationalState {
    pub fn p(&self) -> usize {
        self.d.len()
    }

    pub fn mean_alpha(&self) -> f64 {
        self.a_alpha / self.b_alpha
    }

    pub fn mean_gamma(&self) -> f64 {
        self.a_gamma / self.b_gamma
    }

    pub fn cov_beta_diag(&self) -> DVector<f64> {
        self.cov_beta.diagonal()
    }

    /// `⟨ββᵀ⟩`. Off-diagonal entries factorise in the log-normal branch.
    pub fn second_moment(&self) -> DMatrix<f64> {
        let m = &self.mean_beta;
        let mut b = m * m.transpose();
        if self.nonneg {
            for j in 0..self.p() {
                b[(j, j)] = self.mean_beta_sq[j];
            }
        } else {
            b += &self.cov_beta;
        }
        b
    }

    fn refresh_lambda(&mut self, form: C3Form, cfg: &SpecFunConfig) -> Result<()> {
        for j in 0..self.p() {
            let s = lambda_stat(self.d[j], form, cfg)?;
            self.mean_lambda[j] = s.mean;
            self.mean_lambda_half[j] = s.half;
            self.c3[j] = s.c3;
            self.log_scaled_norm[j] = s.log_scaled_norm;
        }
        Ok(())
    }

    fn refresh_caches(&mut self) {
        self.gram = gram_of(&self.x);
        self.xty = self.x.tr_mul(&self.y);
        self.yty = self.y.dot(&self.y);
    }

    /// Coupled precision `αG + γ·prior + (τ + jitter) I` before jitter
    /// escalation.
    fn precision(&self, extra_jitter: f64) -> DMatrix<f64> {
        let alpha = self.mean_alpha();
        let gamma = self.mean_gamma();
        let p = self.p();
        let mut j = match self.prior {
            Prior::Correlated => {
                let h = &self.mean_lambda_half;
                DMatrix::from_fn(p, p, |r, c| self.gram[(r, c)] * (alpha + gamma * (h[r] * h[c])))
            }
            Prior::Ard => {
                let mut j = &self.gram * alpha;
                for k in 0..p {
                    j[(k, k)] += gamma * self.mean_lambda[k];
                }
                j
            }
        };
        for k in 0..p {
            j[(k, k)] += self.ridge_abs + extra_jitter;
        }
        j
    }
}

/// `XᵀX` with the upper triangle mirrored, so it is bitwise symmetric.
fn gram_of(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = x.tr_mul(x);
    g.fill_lower_triangle_with_upper_triangle();
    g
}

fn gram_scale(gram: &DMatrix<f64>) -> f64 {
    let p = gram.nrows().max(1) as f64;
    let s = gram.trace() / p;
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Cholesky with the jitter escalation schedule `base, 10·base, …` up to
/// `MAX_JITTER · scale`.
fn factor_with_jitter(
    build: impl Fn(f64) -> DMatrix<f64>,
    base: f64,
    scale: f64,
    iter: usize,
) -> Result<(SpdFactor, f64)> {
    let mut jitter = base;
    loop {
        if let Some(ch) = SpdFactor::new(&build(jitter)) {
            return Ok((ch, jitter));
        }
        jitter = if jitter > 0.0 { jitter * 10.0 } else { 1e-12 * scale };
        if jitter > MAX_JITTER * scale {
            return Err(BalanceError::Singular {
                iter,
                msg: format!("factorisation failed with jitter up to {:e}", MAX_JITTER * scale),
            });
        }
    }
}

/// Deterministic starting point: `d = 1`, unit gamma parameters, missing
/// `x` cells at their column mean and missing `y` at the normal-segment
/// median.
pub fn init_state(design: &Design, opts: &SolverOptions) -> Result<VariationalState> {
    init_state_with_prior(design, opts, Prior::Correlated)
}

pub fn init_state_with_prior(design: &Design, opts: &SolverOptions, prior: Prior) -> Result<VariationalState> {
    design.validate()?;
    opts.validate()?;
    let (n, p) = design.x.shape();
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
    let mut y = design.y.clone();
    if design.y_mask.iter().any(|&m| m) {
        let end = design.normal_end.unwrap_or(n).min(n);
        let mut normal: Vec<f64> = (0..end).filter(|&i| !design.y_mask[i]).map(|i| design.y[i]).collect();
        if normal.is_empty() {
            normal = (0..n).filter(|&i| !design.y_mask[i]).map(|i| design.y[i]).collect();
        }
        let fill = median(&mut normal);
        for i in 0..n {
            if design.y_mask[i] {
                y[i] = fill;
            }
        }
    }
    let gram = gram_of(&x);
    let xty = x.tr_mul(&y);
    let yty = y.dot(&y);
    let scale = gram_scale(&gram);
    let jitter_abs = opts.jitter * scale;
    let ridge_abs = if prior == Prior::Correlated { opts.ridge * scale } else { 0.0 };

    let ones = DVector::from_element(p, 1.0);
    let mut state = VariationalState {
        prior,
        nonneg: opts.nonneg,
        beta_h: DVector::zeros(p),
        beta_j: DMatrix::zeros(0, 0),
        beta_zeta: DVector::zeros(0),
        d: ones.clone(),
        a_alpha: 1.0,
        b_alpha: 1.0,
        a_gamma: 1.0,
        b_gamma: 1.0,
        mean_beta: DVector::zeros(p),
        cov_beta: DMatrix::zeros(p, p),
        mean_beta_sq: DVector::zeros(p),
        mean_log_beta: DVector::zeros(0),
        var_log_beta: DVector::zeros(0),
        mean_lambda: ones.clone(),
        mean_lambda_half: ones.clone(),
        c3: DVector::zeros(p),
        log_scaled_norm: DVector::zeros(p),
        x,
        y,
        gram,
        xty,
        yty,
        gram_scale: scale,
        ridge_abs,
        jitter_abs,
    };
    state.refresh_lambda(opts.c3_form, &opts.specfun)?;
    if opts.nonneg {
        state.beta_zeta = state.gram.diagonal().add_scalar(jitter_abs);
        state.beta_h = ones;
        set_lognormal_moments(&mut state);
    } else {
        let mut j = state.gram.clone();
        for k in 0..p {
            j[(k, k)] += jitter_abs;
        }
        for k in 0..p {
            state.cov_beta[(k, k)] = 1.0 / j[(k, k)];
        }
        state.beta_h = state.xty.clone();
        state.beta_j = j;
    }
    Ok(state)
}

/// Gaussian `q(β)` by direct assignment of the natural parameters.
pub fn update_q_beta_gaussian(state: &mut VariationalState, iter: usize) -> Result<()> {
    let (chol, jitter) = factor_with_jitter(|jit| state.precision(jit), state.jitter_abs, state.gram_scale, iter)?;
    let h = &state.xty * state.mean_alpha();
    let mean = chol.solve(&h);
    let mut cov = chol.inverse();
    cov = (&cov + cov.transpose()) * 0.5;
    state.beta_j = state.precision(jitter);
    state.beta_h = h;
    state.mean_beta = mean;
    state.mean_beta_sq = DVector::from_fn(state.p(), |j, _| cov[(j, j)] + state.mean_beta[j].powi(2));
    state.cov_beta = cov;
    Ok(())
}

fn set_lognormal_moments(state: &mut VariationalState) -> bool {
    let p = state.p();
    let mu = state.beta_h.component_div(&state.beta_zeta);
    let var = state.beta_zeta.map(|z| 1.0 / z);
    if (0..p).any(|j| 2.0 * mu[j] + 2.0 * var[j] > LOG_MOMENT_MAX || !mu[j].is_finite()) {
        return false;
    }
    state.mean_beta = DVector::from_fn(p, |j, _| (mu[j] + 0.5 * var[j]).exp());
    state.mean_beta_sq = DVector::from_fn(p, |j, _| (2.0 * mu[j] + 2.0 * var[j]).exp());
    state.cov_beta = DMatrix::from_diagonal(&DVector::from_fn(p, |j, _| {
        (state.mean_beta_sq[j] - state.mean_beta[j].powi(2)).max(0.0)
    }));
    state.mean_log_beta = mu;
    state.var_log_beta = var;
    true
}

/// Curvature `αG + γ·prior + τI` used by the log-normal branch.
fn lognormal_curvature(state: &VariationalState) -> DMatrix<f64> {
    state.precision(0.0)
}

fn lognormal_targets(state: &VariationalState) -> (DVector<f64>, DVector<f64>) {
    let p = state.p();
    let m_mat = lognormal_curvature(state);
    let m = &state.mean_beta;
    let mut off_m = &m_mat * m;
    for j in 0..p {
        off_m[j] -= m_mat[(j, j)] * m[j];
    }
    let alpha = state.mean_alpha();
    let c1 = DVector::from_fn(p, |j, _| m_mat[(j, j)] * state.mean_beta_sq[j]);
    let c2 = DVector::from_fn(p, |j, _| (alpha * state.xty[j] - off_m[j]) * m[j]);
    let mu = &state.mean_log_beta;
    let h = DVector::from_fn(p, |j, _| -c1[j] * (1.0 - 2.0 * mu[j]) + c2[j] * (1.0 - mu[j]) + 1.0);
    let zeta = DVector::from_fn(p, |j, _| 2.0 * c1[j] - c2[j]);
    (h, zeta)
}

fn lognormal_objective(state: &VariationalState) -> f64 {
    let m_mat = lognormal_curvature(state);
    let m = &state.mean_beta;
    let p = state.p();
    let mut quad = 0.0;
    for j in 0..p {
        for i in 0..p {
            quad += if i == j { m_mat[(j, j)] * state.mean_beta_sq[j] } else { m_mat[(i, j)] * m[i] * m[j] };
        }
    }
    let entropy: f64 = (0..p).map(|j| state.mean_log_beta[j] + 0.5 * state.var_log_beta[j].ln()).sum();
    -0.5 * quad + state.mean_alpha() * state.xty.dot(m) + entropy
}

fn lognormal_candidate(state: &VariationalState, target: &(DVector<f64>, DVector<f64>), rho: f64) -> Option<VariationalState> {
    let mut next = state.clone();
    next.beta_h = &state.beta_h * (1.0 - rho) + &target.0 * rho;
    next.beta_zeta = &state.beta_zeta * (1.0 - rho) + &target.1 * rho;
    if next.beta_zeta.iter().any(|&z| !(z > 0.0) || !z.is_finite()) {
        return None;
    }
    set_lognormal_moments(&mut next).then_some(next)
}

/// One damped log-normal step. Returns `false`, leaving the state
/// untouched, if the step leaves the domain `ζ > 0`.
pub fn update_q_beta_lognormal(state: &mut VariationalState, rho: f64) -> bool {
    if rho == 0.0 {
        return true;
    }
    let target = lognormal_targets(state);
    match lognormal_candidate(state, &target, rho) {
        Some(next) => {
            *state = next;
            true
        }
        None => false,
    }
}

/// The quadratic prior form `Q` with `b_γ = Q/2`.
fn prior_quadratic(prior: Prior, gb: &DMatrix<f64>, b: &DMatrix<f64>, mean: &DVector<f64>, half: &DVector<f64>) -> f64 {
    let p = mean.len();
    match prior {
        Prior::Correlated => {
            let mut q = 0.0;
            for c in 0..p {
                let mut col = 0.0;
                for r in 0..p {
                    if r != c {
                        col += gb[(r, c)] * half[r];
                    }
                }
                q += half[c] * col + mean[c] * gb[(c, c)];
            }
            q
        }
        Prior::Ard => (0..p).map(|j| mean[j] * b[(j, j)]).sum(),
    }
}

fn lambda_target(state: &VariationalState, gb: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    let gamma = state.mean_gamma();
    let p = state.p();
    match state.prior {
        Prior::Correlated => {
            let mut off = gb * &state.mean_lambda_half;
            for j in 0..p {
                off[j] -= gb[(j, j)] * state.mean_lambda_half[j];
            }
            DVector::from_fn(p, |j, _| gamma * (off[j] * state.c3[j] + 0.5 * gb[(j, j)]))
        }
        Prior::Ard => DVector::from_fn(p, |j, _| gamma * 0.5 * b[(j, j)]),
    }
}

/// Terms of the free energy that depend on `q(λ)`:
/// `Σ_j [ln(eᵈE₁(d_j)) + d_j⟨λ_j⟩] − ½⟨γ⟩Q`.
fn lambda_objective(state: &VariationalState, gb: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let own: f64 = (0..state.p()).map(|j| state.log_scaled_norm[j] + state.d[j] * state.mean_lambda[j]).sum();
    own - 0.5 * state.mean_gamma() * prior_quadratic(state.prior, gb, b, &state.mean_lambda, &state.mean_lambda_half)
}

fn lambda_candidate(
    state: &VariationalState,
    target: &DVector<f64>,
    rho: f64,
    opts: &SolverOptions,
) -> Result<Option<VariationalState>> {
    let d = &state.d * (1.0 - rho) + target * rho;
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Ok(None);
    }
    let mut next = state.clone();
    next.d = d;
    next.refresh_lambda(opts.c3_form, &opts.specfun)?;
    Ok(Some(next))
}

/// One damped `d` step. Returns `false`, leaving the state untouched, if
/// any `d_j` would become non-positive.
pub fn update_q_lambda(state: &mut VariationalState, opts: &SolverOptions, rho: f64) -> Result<bool> {
    if rho == 0.0 {
        return Ok(true);
    }
    let b = state.second_moment();
    let gb = state.gram.component_mul(&b);
    let target = lambda_target(state, &gb, &b);
    match lambda_candidate(state, &target, rho, opts)? {
        Some(next) => {
            *state = next;
            Ok(true)
        }
        None => Ok(false),
    }
}

/// Gamma updates for the noise and global precisions.
pub fn update_q_alpha_gamma(state: &mut VariationalState) {
    let b = state.second_moment();
    let gb = state.gram.component_mul(&b);
    update_alpha_gamma_with(state, &gb, &b);
}

fn update_alpha_gamma_with(state: &mut VariationalState, gb: &DMatrix<f64>, b: &DMatrix<f64>) {
    let n = state.x.nrows() as f64;
    let p = state.p() as f64;
    state.a_alpha = n / 2.0;
    state.b_alpha = (0.5 * (state.yty + gb.sum() - 2.0 * state.xty.dot(&state.mean_beta))).max(B_ALPHA_FLOOR);
    state.a_gamma = p / 2.0;
    let q = prior_quadratic(state.prior, gb, b, &state.mean_lambda, &state.mean_lambda_half);
    state.b_gamma = (0.5 * q).max(B_GAMMA_FLOOR);
}

/// Point estimates for missing `x` cells and posterior means for missing
/// `y`, followed by a cache refresh.
pub fn impute_missing(state: &mut VariationalState, design: &Design, iter: usize) -> Result<()> {
    if !design.has_missing() {
        return Ok(());
    }
    let (n, p) = design.x.shape();
    let b = state.second_moment();
    for i in 0..n {
        let cols: Vec<usize> = (0..p).filter(|&j| design.x_mask[(i, j)]).collect();
        if cols.is_empty() {
            continue;
        }
        let k = cols.len();
        let block = DMatrix::from_fn(k, k, |r, c| b[(cols[r], cols[c])]);
        let scale = gram_scale(&block);
        let (chol, _) = factor_with_jitter(
            |jit| {
                let mut m = block.clone();
                for r in 0..k {
                    m[(r, r)] += jit;
                }
                m
            },
            1e-8 * scale,
            scale,
            iter,
        )?;
        let rhs = DVector::from_fn(k, |r, _| state.mean_beta[cols[r]] * state.y[i]);
        let xhat = chol.solve(&rhs);
        for (r, &j) in cols.iter().enumerate() {
            state.x[(i, j)] = xhat[r];
        }
    }
    for i in 0..n {
        if design.y_mask[i] {
            state.y[i] = state.x.row(i).transpose().dot(&state.mean_beta);
        }
    }
    state.refresh_caches();
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    LognormalBeta,
    Lambda,
}

/// Backtracking line search on the damping `ρ`.
///
/// A step is accepted once the natural parameters stay in their domain and
/// the free-energy terms owned by the factor do not decrease by more than
/// a relative `1e-12`.
pub fn armijo_step(kind: UpdateKind, state: &mut VariationalState, opts: &SolverOptions, iter: usize) -> Result<f64> {
    let accept = |old: f64, new: f64| new.is_finite() && new >= old - ARMIJO_SLACK * old.abs().max(1.0);
    let mut rho = opts.rho_init;
    match kind {
        UpdateKind::Lambda => {
            let b = state.second_moment();
            let gb = state.gram.component_mul(&b);
            let target = lambda_target(state, &gb, &b);
            let old = lambda_objective(state, &gb, &b);
            for _ in 0..=opts.armijo_max_backtracks {
                if let Some(next) = lambda_candidate(state, &target, rho, opts)? {
                    if accept(old, lambda_objective(&next, &gb, &b)) {
                        *state = next;
                        return Ok(rho);
                    }
                }
                rho *= opts.armijo_shrink;
            }
            Err(BalanceError::StepFailure { iter, update: "lambda" })
        }
        UpdateKind::LognormalBeta => {
            let target = lognormal_targets(state);
            let old = lognormal_objective(state);
            for _ in 0..=opts.armijo_max_backtracks {
                if let Some(next) = lognormal_candidate(state, &target, rho) {
                    if accept(old, lognormal_objective(&next)) {
                        *state = next;
                        return Ok(rho);
                    }
                }
                rho *= opts.armijo_shrink;
            }
            Err(BalanceError::StepFailure { iter, update: "log-normal beta" })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResult {
    /// Thresholded `⟨β⟩` in original column units.
    pub beta: Vec<f64>,
    /// Pre-threshold `⟨β⟩` in standardized units.
    pub beta_raw: Vec<f64>,
    pub cov_diag: Vec<f64>,
    pub mean_lambda: Vec<f64>,
    pub omega: Vec<f64>,
    pub omega_hat: f64,
    pub support: Vec<usize>,
    pub mean_alpha: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Fits the correlated horse-shoe model and thresholds the result.
pub fn fit(design: &Design, opts: &SolverOptions) -> Result<PosteriorResult> {
    fit_with_prior(design, opts, Prior::Correlated)
}

/// Runs the solver to convergence and returns the final state.
pub fn run(design: &Design, opts: &SolverOptions, prior: Prior) -> Result<(VariationalState, usize, bool)> {
    let mut state = init_state_with_prior(design, opts, prior)?;
    let has_missing = design.has_missing();
    let mut converged = false;
    let mut iters = 0;
    for it in 1..=opts.max_iters {
        iters = it;
        let prev = state.mean_beta.clone();
        if opts.nonneg {
            armijo_step(UpdateKind::LognormalBeta, &mut state, opts, it)?;
        } else {
            update_q_beta_gaussian(&mut state, it)?;
        }
        armijo_step(UpdateKind::Lambda, &mut state, opts, it)?;
        update_q_alpha_gamma(&mut state);
        if has_missing {
            impute_missing(&mut state, design, it)?;
        }
        let norm = state.mean_beta.norm();
        let change = (&state.mean_beta - &prev).norm() / norm.max(f64::MIN_POSITIVE);
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok((state, iters, converged))
}

pub fn fit_with_prior(design: &Design, opts: &SolverOptions, prior: Prior) -> Result<PosteriorResult> {
    let (state, iters, converged) = run(design, opts, prior)?;
    Ok(posterior_from_state(design, &state, iters, converged))
}

pub fn posterior_from_state(design: &Design, state: &VariationalState, iters: usize, converged: bool) -> PosteriorResult {
    let (thresholded, omega_hat, support) = soft_threshold(&state.mean_lambda, &state.mean_beta);
    let beta = thresholded.iter().zip(&design.columns).map(|(b, c)| b / c.scale).collect();
    PosteriorResult {
        beta,
        beta_raw: state.mean_beta.iter().copied().collect(),
        cov_diag: state.cov_beta_diag().iter().copied().collect(),
        mean_lambda: state.mean_lambda.iter().copied().collect(),
        omega: shrinkage_weights(&state.mean_lambda).iter().copied().collect(),
        omega_hat,
        support,
        mean_alpha: state.mean_alpha(),
        iters,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_design(y: &[f64]) -> Design {
        let p = y.len();
        Design::from_dense(DMatrix::identity(p, p), DVector::from_column_slice(y))
    }

    #[test]
    fn init_identity_precision() {
        let state = init_state(&identity_design(&[1.0, 0.0, 0.0]), &SolverOptions::default()).unwrap();
        assert_relative_eq!(state.beta_j, DMatrix::identity(3, 3) * (1.0 + 1e-8), epsilon = 1e-15);
        assert_eq!(state.d, DVector::from_element(3, 1.0));
        assert_eq!(state.mean_alpha(), 1.0);
    }

    #[test]
    fn gaussian_update_hand_solve() {
        let opts = SolverOptions { ridge: 0.0, ..Default::default() };
        let mut state = init_state(&identity_design(&[1.0, 0.0, 0.0]), &opts).unwrap();
        state.mean_lambda_half.fill(1.0);
        update_q_beta_gaussian(&mut state, 1).unwrap();
        assert_relative_eq!(state.mean_beta[0], 0.5, epsilon = 1e-8);
        assert_relative_eq!(state.mean_beta[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_update_is_idempotent() {
        let x = DMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let y = DVector::from_fn(6, |i, _| i as f64);
        let mut state = init_state(&Design::from_dense(x, y), &SolverOptions::default()).unwrap();
        state.mean_lambda_half = DVector::from_vec(vec![0.3, 1.1, 2.0]);
        update_q_beta_gaussian(&mut state, 1).unwrap();
        let first = state.clone();
        update_q_beta_gaussian(&mut state, 2).unwrap();
        assert_eq!(first.beta_j, state.beta_j);
        assert_eq!(first.beta_h, state.beta_h);
        assert_eq!(first.mean_beta, state.mean_beta);
    }

    #[test]
    fn lognormal_moment_identity() {
        let mut state = init_state(
            &identity_design(&[1.0]),
            &SolverOptions { nonneg: true, ..Default::default() },
        )
        .unwrap();
        state.beta_zeta = DVector::from_element(1, 2.0);
        state.beta_h = DVector::from_element(1, 1.0);
        assert!(set_lognormal_moments(&mut state));
        assert_relative_eq!(state.mean_log_beta[0], 0.5);
        assert_relative_eq!(state.var_log_beta[0], 0.5);
        assert_relative_eq!(state.mean_beta[0], 0.75f64.exp(), max_relative = 1e-14);
    }

    #[test]
    fn zero_step_leaves_state() {
        let opts = SolverOptions { nonneg: true, ..Default::default() };
        let mut state = init_state(&identity_design(&[1.0, 2.0]), &opts).unwrap();
        let before = state.clone();
        assert!(update_q_beta_lognormal(&mut state, 0.0));
        assert!(update_q_lambda(&mut state, &opts, 0.0).unwrap());
        assert_eq!(before, state);
    }

    #[test]
    fn alpha_gamma_scalar_case() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 0.0, 1.0]);
        let mut state = init_state(&Design::from_dense(x, y), &SolverOptions::default()).unwrap();
        state.mean_beta = DVector::from_element(1, 1.5);
        state.cov_beta = DMatrix::from_element(1, 1, 0.25);
        state.mean_lambda = DVector::from_element(1, 0.7);
        update_q_alpha_gamma(&mut state);
        assert_eq!(state.a_alpha, 2.0);
        assert_relative_eq!(state.b_gamma, 0.5 * 0.7 * 2.5 * 6.0, max_relative = 1e-14);
    }

    #[test]
    fn orthogonal_lambda_update_has_no_coupling() {
        let opts = SolverOptions::default();
        let mut state = init_state(&identity_design(&[1.0, 0.5]), &opts).unwrap();
        update_q_beta_gaussian(&mut state, 1).unwrap();
        let b = state.second_moment();
        let expected = DVector::from_fn(2, |j, _| state.mean_gamma() * 0.5 * b[(j, j)]);
        update_q_lambda(&mut state, &opts, 1.0).unwrap();
        assert_relative_eq!(state.d, expected, max_relative = 1e-12);
    }

    #[test]
    fn scalar_imputation() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 9.0]);
        let mask = DMatrix::from_column_slice(2, 1, &[false, true]);
        let design = Design::from_dense(x, DVector::from_vec(vec![2.0, 6.0])).with_x_mask(mask);
        let mut state = init_state(&design, &SolverOptions::default()).unwrap();
        state.mean_beta = DVector::from_element(1, 2.0);
        state.cov_beta = DMatrix::zeros(1, 1);
        impute_missing(&mut state, &design, 1).unwrap();
        assert_relative_eq!(state.x[(1, 0)], 3.0, max_relative = 1e-6);
    }

    #[test]
    fn missing_y_imputed_at_mean() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 3.0]);
        let mut design = Design::from_dense(x, DVector::from_vec(vec![1.0, 0.0]));
        design.y_mask[1] = true;
        let mut state = init_state(&design, &SolverOptions::default()).unwrap();
        state.mean_beta = DVector::from_vec(vec![1.0, 1.0]);
        impute_missing(&mut state, &design, 1).unwrap();
        assert_eq!(state.y[1], 5.0);
    }
}
