//! Browser demo. Each export takes plain numbers or a JSON string and
//! returns JSON, so the page needs no bindings beyond strings.
//!
//! The `*_json` functions hold the logic and run natively in tests; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use balance::attribution::ScoreMode;
use balance::bmfs::moments::{lambda_stat, C3Form};
use balance::bmfs::threshold::{omega_threshold, shrinkage_weights, FixedMeanGmm, MIN_RANGE};
use balance::bmfs::{fit, fit_with_prior, Prior, SolverOptions};
use balance::case::{standardize, CaseInput};
use balance::merge::{MergeOptions, MergeStrategy};
use balance::pipeline::{analyze_case, AnalyzeOptions};
use balance::specfun::SpecFunConfig;
use balance::synth::{default_alarm, gen_case, support_metrics, Collinearity, SynthParams};
use balance::{BalanceError, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Upper bound on demo dimensions so a click stays interactive.
pub const MAX_DEMO_P: usize = 300;
pub const DENSITY_POINTS: usize = 201;

#[derive(Debug, Serialize)]
pub struct LambdaCurves {
    pub d: Vec<f64>,
    pub mean: Vec<f64>,
    pub half: Vec<f64>,
    pub c3_exact: Vec<f64>,
    pub c3_printed: Vec<f64>,
}

/// `⟨λ⟩`, `⟨λ½⟩` and both `c₃` forms at `points` log-spaced `d` values.
pub fn lambda_curves_json(d_lo: f64, d_hi: f64, points: usize) -> Result<String> {
    if !(d_lo > 0.0 && d_hi > d_lo) || !(2..=5000).contains(&points) {
        return Err(BalanceError::Validation("need 0 < d_lo < d_hi and 2 ≤ points ≤ 5000".into()));
    }
    let cfg = SpecFunConfig::default();
    let (a, b) = (d_lo.ln(), d_hi.ln());
    let mut out =
        LambdaCurves { d: vec![], mean: vec![], half: vec![], c3_exact: vec![], c3_printed: vec![] };
    for k in 0..points {
        let d = (a + (b - a) * k as f64 / (points - 1) as f64).exp();
        let exact = lambda_stat(d, C3Form::Exact, &cfg)?;
        let printed = lambda_stat(d, C3Form::Printed, &cfg)?;
        out.d.push(d);
        out.mean.push(exact.mean);
        out.half.push(exact.half);
        out.c3_exact.push(exact.c3);
        out.c3_printed.push(printed.c3);
    }
    Ok(serde_json::to_string(&out).expect("curves serialise"))
}

#[derive(Debug, Serialize)]
pub struct ThresholdDemo {
    pub prior: &'static str,
    pub omega: Vec<f64>,
    pub is_true_cause: Vec<bool>,
    pub omega_hat: f64,
    /// Mixture log-density on a grid over `[min ω, max ω]`; empty when the
    /// range is too narrow to fit.
    pub grid: Vec<f64>,
    pub log_density: Vec<f64>,
    pub f1: f64,
    pub iters: usize,
}

/// Draws a synthetic case, fits it and returns the shrinkage weights with
/// the fitted mixture.
pub fn threshold_demo_json(kind: &str, p: usize, noise: f64, seed: u64, ard: bool) -> Result<String> {
    let kind: Collinearity = kind.parse()?;
    if !(4..=MAX_DEMO_P).contains(&p) {
        return Err(BalanceError::Validation(format!("p must lie in [4, {MAX_DEMO_P}]")));
    }
    let params = SynthParams::new(kind, 100, p, noise, 0.005).with_seed(seed);
    let case = gen_case(&params)?;
    let design = standardize(&case.design());
    let opts = SolverOptions::default();
    let (prior, post) =
        if ard { ("ard", fit_with_prior(&design, &opts, Prior::Ard)?) } else { ("bmfs", fit(&design, &opts)?) };
    let lambda = nalgebra::DVector::from_vec(post.mean_lambda.clone());
    let omega: Vec<f64> = shrinkage_weights(&lambda).iter().copied().collect();
    let lo = omega.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = omega.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut grid, mut log_density) = (Vec::new(), Vec::new());
    if hi - lo >= MIN_RANGE {
        let gmm = FixedMeanGmm::fit(&omega);
        for k in 0..DENSITY_POINTS {
            let x = lo + (hi - lo) * k as f64 / (DENSITY_POINTS - 1) as f64;
            grid.push(x);
            log_density.push(gmm.log_density(x));
        }
    }
    let truth: Vec<f64> = case.beta_true.iter().copied().collect();
    let (f1, _) = support_metrics(&post.beta, &truth);
    let demo = ThresholdDemo {
        prior,
        omega_hat: omega_threshold(&omega),
        is_true_cause: truth.iter().map(|&b| b != 0.0).collect(),
        omega,
        grid,
        log_density,
        f1,
        iters: post.iters,
    };
    Ok(serde_json::to_string(&demo).expect("demo serialises"))
}

/// A partial-kind case JSON with one cause shifted inside the alarm window.
pub fn example_case_json(p: usize, seed: u64, shift: f64) -> Result<String> {
    if !(4..=MAX_DEMO_P).contains(&p) {
        return Err(BalanceError::Validation(format!("p must lie in [4, {MAX_DEMO_P}]")));
    }
    let mut case = gen_case(&SynthParams::new(Collinearity::Partial, 100, p, 0.1, 0.005).with_seed(seed))?;
    let (start, end) = default_alarm(100);
    case.plant_alarm(start, end, shift)?;
    Ok(case.to_case_input(start, end)?.to_json())
}

/// Full analysis of a case JSON; returns the report JSON.
pub fn analyze_json(case_json: &str, mode: &str, kappa: usize, merge: &str) -> Result<String> {
    let case = CaseInput::from_json_str(case_json)?;
    let opts = AnalyzeOptions {
        mode: mode.parse::<ScoreMode>()?,
        merge: MergeOptions { kappa, strategy: merge.parse::<MergeStrategy>()? },
        record_timing: false,
        ..AnalyzeOptions::default()
    };
    Ok(analyze_case(&case, &opts)?.to_json_pretty())
}

fn js(r: Result<String>) -> std::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn lambda_curves(d_lo: f64, d_hi: f64, points: usize) -> std::result::Result<String, JsValue> {
    js(lambda_curves_json(d_lo, d_hi, points))
}

#[wasm_bindgen]
pub fn threshold_demo(kind: &str, p: usize, noise: f64, seed: u32, ard: bool) -> std::result::Result<String, JsValue> {
    js(threshold_demo_json(kind, p, noise, seed as u64, ard))
}

#[wasm_bindgen]
pub fn example_case(p: usize, seed: u32, shift: f64) -> std::result::Result<String, JsValue> {
    js(example_case_json(p, seed as u64, shift))
}

#[wasm_bindgen]
pub fn analyze(case_json: &str, mode: &str, kappa: usize, merge: &str) -> std::result::Result<String, JsValue> {
    js(analyze_json(case_json, mode, kappa, merge))
}
