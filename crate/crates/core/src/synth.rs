//! Synthetic multicollinear regression problems and support metrics.
//!
//! Latent factors `Z` (n×p_z, i.i.d. standard normal) are mapped to `p`
//! observed columns through a p×p_z matrix `Q` with orthonormal columns:
//! `X = Z Qᵀ`, so `X` has rank `p_z` and every column is a linear combination
//! of the factors.
//!
//! - absent: `Q = I`, `p_z = p`.
//! - partial: `Q` is the thin QR factor of an i.i.d. normal `W`; columns are
//!   correlated but no two are collinear. The true `β` is sparse in the
//!   observed coordinates.
//! - perfect: `W` assigns each observed column to one factor with a random
//!   sign, balanced so group sizes differ by at most one. Columns in a group
//!   are exact copies up to sign and scale. The true coefficients are
//!   `β = Q b` with `b` sparse over factors, so whole groups enter the
//!   support together.
//!
//! `Q` always has non-negative `R` diagonal in its QR factorisation.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_ard, fit_lasso, LassoOptions};
use crate::bmfs::{fit, SolverOptions};
use crate::case::{standardize, CaseInput, Design, Series};
use crate::error::{BalanceError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Collinearity {
    Absent,
    Partial,
    Perfect,
}

impl Collinearity {
    pub fn as_str(self) -> &'static str {
        match self {
            Collinearity::Absent => "absent",
            Collinearity::Partial => "partial",
            Collinearity::Perfect => "perfect",
        }
    }
}

impl std::str::FromStr for Collinearity {
    type Err = BalanceError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absent" => Ok(Collinearity::Absent),
            "partial" => Ok(Collinearity::Partial),
            "perfect" => Ok(Collinearity::Perfect),
            other => Err(BalanceError::Validation(format!("unknown collinearity kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n: usize,
    pub p: usize,
    pub p_z: usize,
    pub kind: Collinearity,
    pub noise_std: f64,
    pub nonzero_ratio: f64,
    pub missing_ratio: f64,
    /// Also drop `y` entries at `missing_ratio`.
    pub missing_in_y: bool,
    pub seed: u64,
}

impl SynthParams {
    /// Defaults: `p_z = p` for absent and `p / 2` otherwise.
    pub fn new(kind: Collinearity, n: usize, p: usize, noise_std: f64, nonzero_ratio: f64) -> Self {
        let p_z = if kind == Collinearity::Absent { p } else { (p / 2).max(1) };
        SynthParams { n, p, p_z, kind, noise_std, nonzero_ratio, missing_ratio: 0.0, missing_in_y: false, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_missing(mut self, ratio: f64) -> Self {
        self.missing_ratio = ratio;
        self
    }

    /// `max(1, round(p_z · nonzero_ratio))`.
    pub fn nonzero_count(&self) -> usize {
        ((self.p_z as f64 * self.nonzero_ratio).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BalanceError::Validation(m));
        if self.n < 2 || self.p == 0 || self.p_z == 0 {
            return bad("n must be at least 2 and p, p_z positive".into());
        }
        match self.kind {
            Collinearity::Absent if self.p_z != self.p => {
                return bad(format!("absent collinearity requires p_z = p, got p_z={} p={}", self.p_z, self.p))
            }
            Collinearity::Partial | Collinearity::Perfect if self.p_z >= self.p => {
                return bad(format!("{} collinearity requires p_z < p", self.kind.as_str()))
            }
            _ => {}
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad("noise_std must be finite and non-negative".into());
        }
        if !(self.nonzero_ratio > 0.0 && self.nonzero_ratio < 1.0) {
            return bad("nonzero_ratio must lie in (0, 1)".into());
        }
        if !(self.missing_ratio >= 0.0 && self.missing_ratio < 1.0) {
            return bad("missing_ratio must lie in [0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub beta_true: DVector<f64>,
    pub support_true: Vec<usize>,
    /// p×p_z with orthonormal columns.
    pub q: DMatrix<f64>,
    pub x_mask: DMatrix<bool>,
    pub y_mask: Vec<bool>,
}

impl SynthCase {
    /// Fully assembled design with masked cells zeroed.
    pub fn design(&self) -> Design {
        let mut d = Design::from_dense(self.x.clone(), self.y.clone()).with_x_mask(self.x_mask.clone());
        for (i, &m) in self.y_mask.iter().enumerate() {
            if m {
                d.y_mask[i] = true;
                d.y[i] = 0.0;
            }
        }
        d
    }
}

impl SynthCase {
    /// Shifts every true cause by `shift` of its own standard deviation,
    /// in the direction of its coefficient, over rows `start..=end`, and
    /// moves `y` by the implied amount.
    pub fn plant_alarm(&mut self, start: usize, end: usize, shift: f64) -> Result<()> {
        let n = self.x.nrows();
        if start == 0 || start > end || end >= n {
            return Err(BalanceError::Validation(format!("alarm window [{start}, {end}] invalid for n={n}")));
        }
        for &j in &self.support_true {
            let col = self.x.column(j);
            let mean = col.mean();
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            let delta = shift * sd * self.beta_true[j].signum();
            for i in start..=end {
                self.x[(i, j)] += delta;
                self.y[i] += self.beta_true[j] * delta;
            }
        }
        Ok(())
    }

    /// Column names used when a synthetic case is written out.
    pub fn column_name(j: usize) -> String {
        format!("x{j}")
    }

    /// Case with KPI `y`, candidates `x0, x1, ...`, timestamps `0..n` and
    /// masked cells missing.
    pub fn to_case_input(&self, alarm_start: usize, alarm_end: usize) -> Result<CaseInput> {
        let (n, p) = self.x.shape();
        let kpi = Series::new("y", (0..n).map(|i| (!self.y_mask[i]).then(|| self.y[i])).collect());
        let candidates = (0..p)
            .map(|j| {
                let values = (0..n).map(|i| (!self.x_mask[(i, j)]).then(|| self.x[(i, j)])).collect();
                Series::new(Self::column_name(j), values)
            })
            .collect();
        CaseInput::new((0..n as i64).collect(), vec![kpi], candidates, alarm_start, alarm_end)
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            beta_true: self.beta_true.iter().copied().collect(),
            support_true: self.support_true.clone(),
            support_names: self.support_true.iter().map(|&j| Self::column_name(j)).collect(),
        }
    }
}

/// Sidecar written next to a generated case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta_true: Vec<f64>,
    pub support_true: Vec<usize>,
    pub support_names: Vec<String>,
}

/// Default alarm window for generated cases: the last tenth of the rows,
/// at least one row.
pub fn default_alarm(n: usize) -> (usize, usize) {
    let len = (n / 10).max(1);
    (n - len, n - 1)
}

/// Deterministic seed for one (master, cell, trial) triple.
pub fn derive_seed(master: u64, cell: u64, trial: u64) -> u64 {
    let mut z = master
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(cell.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(trial.wrapping_mul(0x94D0_49BB_1331_11EB))
        .wrapping_add(0x2545_F491_4F6C_DD1D);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Orthonormal-column factor for the requested kind.
pub fn gen_orthogonal(kind: Collinearity, p: usize, p_z: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    if p_z > p {
        return Err(BalanceError::Validation(format!("p_z={p_z} exceeds p={p}")));
    }
    if kind == Collinearity::Absent {
        return Ok(DMatrix::identity(p, p));
    }
    if kind == Collinearity::Perfect {
        // Columns of the selection matrix are disjoint, hence already
        // orthogonal; its QR factor is the column-normalised matrix itself.
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(rng);
        let mut w = DMatrix::zeros(p, p_z);
        for (row, &slot) in order.iter().enumerate() {
            w[(row, slot % p_z)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        for mut col in w.column_iter_mut() {
            let norm = col.norm();
            col /= norm;
        }
        return Ok(w);
    }
    for _attempt in 0..16 {
        let qr = normal_matrix(p, p_z, rng).qr();
        let r = qr.r();
        if (0..p_z).any(|k| r[(k, k)].abs() < 1e-10) {
            continue;
        }
        let mut q = qr.q();
        for k in 0..p_z {
            if r[(k, k)] < 0.0 {
                q.column_mut(k).neg_mut();
            }
        }
        return Ok(q);
    }
    Err(BalanceError::Validation("could not draw a full-rank mixing matrix".into()))
}

fn signed_magnitude(rng: &mut impl Rng) -> f64 {
    let m: f64 = rng.random_range(0.5..=1.5);
    if rng.random::<bool>() {
        m
    } else {
        -m
    }
}

/// Draws one synthetic problem.
pub fn gen_case(params: &SynthParams) -> Result<SynthCase> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (n, p, p_z) = (params.n, params.p, params.p_z);
    let q = gen_orthogonal(params.kind, p, p_z, &mut rng)?;
    let k = params.nonzero_count();
    let beta_true = match params.kind {
        Collinearity::Partial => {
            let mut beta = DVector::zeros(p);
            for j in sample(&mut rng, p, k.min(p)).into_iter() {
                beta[j] = signed_magnitude(&mut rng);
            }
            beta
        }
        _ => {
            let mut b = DVector::zeros(p_z);
            for j in sample(&mut rng, p_z, k.min(p_z)).into_iter() {
                b[j] = signed_magnitude(&mut rng);
            }
            let mut beta = &q * b;
            beta.apply(|v| {
                if v.abs() < 1e-14 {
                    *v = 0.0
                }
            });
            beta
        }
    };
    let z = normal_matrix(n, p_z, &mut rng);
    let x = &z * q.transpose();
    let noise = DVector::from_fn(n, |_, _| params.noise_std * rng.sample::<f64, _>(StandardNormal));
    let y = &x * &beta_true + noise;
    let x_mask = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() < params.missing_ratio);
    let y_mask = (0..n)
        .map(|_| params.missing_in_y && rng.random::<f64>() < params.missing_ratio)
        .collect();
    let support_true = (0..p).filter(|&j| beta_true[j] != 0.0).collect();
    Ok(SynthCase { x, y, beta_true, support_true, q, x_mask, y_mask })
}

/// Support F1 and coefficient MSE.
pub fn support_metrics(beta_est: &[f64], beta_true: &[f64]) -> (f64, f64) {
    assert_eq!(beta_est.len(), beta_true.len());
    let mut tp = 0usize;
    let mut est = 0usize;
    let mut truth = 0usize;
    let mut sq = 0.0;
    for (&e, &t) in beta_est.iter().zip(beta_true) {
        let (ie, it) = (e != 0.0, t != 0.0);
        est += ie as usize;
        truth += it as usize;
        tp += (ie && it) as usize;
        sq += (e - t).powi(2);
    }
    let mse = if beta_est.is_empty() { 0.0 } else { sq / beta_est.len() as f64 };
    let f1 = match (est, truth) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ if tp == 0 => 0.0,
        _ => {
            let precision = tp as f64 / est as f64;
            let recall = tp as f64 / truth as f64;
            2.0 * precision * recall / (precision + recall)
        }
    };
    (f1, mse)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Bmfs,
    Ard,
    Lasso,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Bmfs, SolverKind::Ard, SolverKind::Lasso];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Bmfs => "bmfs",
            SolverKind::Ard => "ard",
            SolverKind::Lasso => "lasso",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = BalanceError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bmfs" => Ok(SolverKind::Bmfs),
            "ard" => Ok(SolverKind::Ard),
            "lasso" => Ok(SolverKind::Lasso),
            other => Err(BalanceError::Validation(format!("unknown solver '{other}'"))),
        }
    }
}

/// Estimated coefficients in original units.
pub fn solve_case(case: &SynthCase, solver: SolverKind, opts: &SolverOptions, lasso: &LassoOptions) -> Result<Vec<f64>> {
    let design = standardize(&case.design());
    match solver {
        SolverKind::Bmfs => Ok(fit(&design, opts)?.beta),
        SolverKind::Ard => Ok(fit_ard(&design, opts)?.beta),
        SolverKind::Lasso => Ok(fit_lasso(&design, lasso)?.beta),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub kind: Collinearity,
    pub n: usize,
    pub p: usize,
    pub noise_std: f64,
    pub nonzero_ratio: f64,
    pub missing_ratio: f64,
    pub solver: SolverKind,
    pub trials: usize,
    pub f1_mean: f64,
    pub mse_mean: f64,
    pub time_mean_s: f64,
    pub time_max_s: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub trials: usize,
    pub master_seed: u64,
    pub solver_opts: SolverOptions,
    pub lasso_opts: LassoOptions,
    /// When false timings are written as 0 so output is byte-stable.
    pub record_timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            trials: 20,
            master_seed: 0,
            solver_opts: SolverOptions::default(),
            lasso_opts: LassoOptions::default(),
            record_timing: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    f1: f64,
    mse: f64,
    secs: f64,
    failed: bool,
}

fn run_trial(params: &SynthParams, solvers: &[SolverKind], cfg: &BenchConfig) -> Vec<TrialOutcome> {
    let case = match gen_case(params) {
        Ok(c) => c,
        Err(_) => return vec![TrialOutcome { f1: 0.0, mse: f64::NAN, secs: 0.0, failed: true }; solvers.len()],
    };
    let truth: Vec<f64> = case.beta_true.iter().copied().collect();
    solvers
        .iter()
        .map(|&s| {
            let start = Instant::now();
            let est = solve_case(&case, s, &cfg.solver_opts, &cfg.lasso_opts);
            let secs = start.elapsed().as_secs_f64();
            match est {
                Ok(beta) => {
                    let (f1, mse) = support_metrics(&beta, &truth);
                    TrialOutcome { f1, mse, secs, failed: false }
                }
                Err(_) => TrialOutcome { f1: 0.0, mse: f64::NAN, secs, failed: true },
            }
        })
        .collect()
}

/// Runs every (cell, trial) pair and averages per (cell, solver).
///
/// Trial seeds come from [`derive_seed`], so results do not depend on the
/// number of worker threads. Failed trials count as F1 = 0 and are left out
/// of the MSE mean.
pub fn run_benchmark(grid: &[SynthParams], solvers: &[SolverKind], cfg: &BenchConfig) -> Vec<BenchRow> {
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..cfg.trials).map(move |t| (c, t))).collect();
    let outcomes: Vec<Vec<TrialOutcome>> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let params = grid[c].clone().with_seed(derive_seed(cfg.master_seed, c as u64, t as u64));
            run_trial(&params, solvers, cfg)
        })
        .collect();

    let mut rows = Vec::with_capacity(grid.len() * solvers.len());
    for (c, params) in grid.iter().enumerate() {
        let cell = &outcomes[c * cfg.trials..(c + 1) * cfg.trials];
        for (s, &solver) in solvers.iter().enumerate() {
            let trials: Vec<TrialOutcome> = cell.iter().map(|o| o[s]).collect();
            let ok: Vec<&TrialOutcome> = trials.iter().filter(|o| !o.failed).collect();
            let count = trials.len().max(1) as f64;
            rows.push(BenchRow {
                kind: params.kind,
                n: params.n,
                p: params.p,
                noise_std: params.noise_std,
                nonzero_ratio: params.nonzero_ratio,
                missing_ratio: params.missing_ratio,
                solver,
                trials: cfg.trials,
                f1_mean: trials.iter().map(|o| o.f1).sum::<f64>() / count,
                mse_mean: if ok.is_empty() { f64::NAN } else { ok.iter().map(|o| o.mse).sum::<f64>() / ok.len() as f64 },
                time_mean_s: if cfg.record_timing { trials.iter().map(|o| o.secs).sum::<f64>() / count } else { 0.0 },
                time_max_s: if cfg.record_timing { trials.iter().map(|o| o.secs).fold(0.0, f64::max) } else { 0.0 },
                failures: trials.len() - ok.len(),
            });
        }
    }
    rows
}

pub const CSV_HEADER: [&str; 13] = [
    "kind", "n", "p", "noise_std", "nonzero_ratio", "missing_ratio", "solver", "trials", "f1_mean", "mse_mean",
    "time_mean_s", "time_max_s", "failures",
];

pub fn write_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| BalanceError::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.kind.as_str().to_string(),
            r.n.to_string(),
            r.p.to_string(),
            r.noise_std.to_string(),
            r.nonzero_ratio.to_string(),
            r.missing_ratio.to_string(),
            r.solver.as_str().to_string(),
            r.trials.to_string(),
            format!("{:.6}", r.f1_mean),
            format!("{:.6e}", r.mse_mean),
            format!("{:.6}", r.time_mean_s),
            format!("{:.6}", r.time_max_s),
            r.failures.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Preset grids at desk scale. Table 1 varies kind and dimension; Tables 2
/// to 4 vary noise, sparsity and the missing ratio on partial designs with
/// `p = DESK_P`.
pub const DESK_P: usize = 200;

pub fn table_grid(table: u8) -> Result<Vec<SynthParams>> {
    let n = 100;
    let grid = match table {
        1 => {
            let mut g = Vec::new();
            for kind in [Collinearity::Absent, Collinearity::Partial, Collinearity::Perfect] {
                for p in [20, 50, 100, 200, 500, 1000] {
                    g.push(SynthParams::new(kind, n, p, 0.1, 0.005));
                }
            }
            g
        }
        2 => [0.01, 0.1, 1.0, 3.0]
            .iter()
            .map(|&s| SynthParams::new(Collinearity::Partial, n, DESK_P, s, 0.005))
            .collect(),
        3 => [0.002, 0.005, 0.01, 0.02, 0.05]
            .iter()
            .map(|&r| SynthParams::new(Collinearity::Partial, n, DESK_P, 0.1, r))
            .collect(),
        4 => [0.1, 0.2, 0.3, 0.4, 0.5]
            .iter()
            .map(|&m| SynthParams::new(Collinearity::Partial, n, DESK_P, 0.1, 0.005).with_missing(m))
            .collect(),
        other => return Err(BalanceError::Validation(format!("unknown table preset {other}"))),
    };
    Ok(grid)
}
