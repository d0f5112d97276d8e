//! Mean parameters of `q(λ; d) ∝ (λ+1)⁻¹ exp(−d(λ+1))`.
//!
//! Every quantity is written in terms of the two continued-fraction tails
//! `t₀(d)` and `t₋½(d)` so the same expressions hold on both sides of the
//! switch point:
//!
//! ```text
//! eᵈE₁(d)     = 1 / (d + 1 − t₀)
//! ⟨λ⟩         = (1 − t₀) / d
//! ⟨λ½⟩        = Γ(1.5) d^−½ (d + 1 − t₀) / (d + 1.5 − t₋½)
//! ⟨λ⟩d − 1    = −t₀
//! ⟨λ½⟩d − Γ(1.5)√d = Γ(1.5) √d (t₋½ − t₀ − ½) / (d + 1.5 − t₋½)
//! ```

use serde::{Deserialize, Serialize};

use crate::specfun::{inc_gamma_cf_tail_with, SpecFunConfig, SpecFunError, GAMMA_1_5};

/// Moments are clamped to this range.
pub const MOMENT_MIN: f64 = 1e-12;
pub const MOMENT_MAX: f64 = 1e12;

/// Denominators of the printed coupling coefficient below this are zeroed.
pub const C3_GUARD: f64 = 1e-12;

/// Which closed form to use for the coupling coefficient `c₃` in the `d`
/// update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum C3Form {
    /// `(⟨λ½⟩d − Γ(1.5)√d) / (⟨λ⟩d − 1)`, the regression slope
    /// `Cov(λ½, λ) / Var(λ)` under `q(λ; d)`.
    #[default]
    Exact,
    /// `(⟨λ½⟩d − Γ(1.5)√d) / (eᵈE₁(d) − d − 1)`. Changes sign for small `d`
    /// and is kept only for comparison.
    Printed,
}

/// Per-coordinate statistics of `q(λ; d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaStat {
    pub mean: f64,
    pub half: f64,
    pub c3: f64,
    /// `ln(eᵈ E₁(d))`.
    pub log_scaled_norm: f64,
}

pub fn lambda_stat(d: f64, form: C3Form, cfg: &SpecFunConfig) -> Result<LambdaStat, SpecFunError> {
    let t0 = inc_gamma_cf_tail_with(cfg, 0.0, d)?;
    let th = inc_gamma_cf_tail_with(cfg, -0.5, d)?;
    let inv_k = d + 1.0 - t0;
    let den_half = d + 1.5 - th;
    let sqrt_d = d.sqrt();
    let mean = ((1.0 - t0) / d).clamp(MOMENT_MIN, MOMENT_MAX);
    let half = (GAMMA_1_5 * inv_k / (sqrt_d * den_half)).clamp(MOMENT_MIN, MOMENT_MAX);
    let numer = GAMMA_1_5 * sqrt_d * (th - t0 - 0.5) / den_half;
    let c3 = match form {
        C3Form::Exact => numer / -t0,
        C3Form::Printed => {
            let den = 1.0 / inv_k - d - 1.0;
            if den.abs() < C3_GUARD {
                0.0
            } else {
                numer / den
            }
        }
    };
    Ok(LambdaStat { mean, half, c3, log_scaled_norm: -inv_k.ln() })
}

/// `(⟨λ⟩, ⟨λ½⟩)` for each entry of `d`.
pub fn lambda_moments(d: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SpecFunError> {
    lambda_moments_with(d, &SpecFunConfig::default())
}

pub fn lambda_moments_with(
    d: &[f64],
    cfg: &SpecFunConfig,
) -> Result<(Vec<f64>, Vec<f64>), SpecFunError> {
    let mut mean = Vec::with_capacity(d.len());
    let mut half = Vec::with_capacity(d.len());
    for &dj in d {
        let s = lambda_stat(dj, C3Form::Exact, cfg)?;
        mean.push(s.mean);
        half.push(s.half);
    }
    Ok((mean, half))
}

/// `c₃(d)` in the requested form.
pub fn c3_coefficient(d: f64, form: C3Form) -> Result<f64, SpecFunError> {
    Ok(lambda_stat(d, form, &SpecFunConfig::default())?.c3)
}
