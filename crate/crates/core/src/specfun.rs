//! Special functions for the local-shrinkage factor `q(λ)`.
//!
//! The variational family for each local precision is
//! `q(λ; d) ∝ (λ + 1)⁻¹ exp(−d(λ + 1))`, whose normaliser is `E₁(d)` and whose
//! moments are ratios of upper incomplete gamma functions at non-positive
//! orders. For large `d` both numerator and denominator underflow, so the
//! solver works with the exponentially scaled quantities `eᵈ E₁(d)` and
//! `eᵈ Γ(s, d)`, evaluated by continued fractions above
//! [`SpecFunConfig::cf_switch_threshold`].
//!
//! The continued fraction used throughout is
//!
//! ```text
//! eˣ Γ(s, x) = xˢ / (x + 1 − s − t_s(x)),
//! t_s(x)     = 1(1−s) / (x + 3 − s − 2(2−s) / (x + 5 − s − …))
//! ```
//!
//! and the tail `t_s` is exposed separately because the λ moments need
//! `1/(eᵈE₁(d)) − d − 1 = −t₀(d)` without cancellation.

use std::f64::consts::PI;

use thiserror::Error;

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Γ(1.5) = √π / 2.
pub const GAMMA_1_5: f64 = 0.886_226_925_452_758;

const FPMIN: f64 = 1e-300;
const EPS: f64 = 1e-16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecFunError {
    #[error("argument {0} outside the domain (must be > 0)")]
    Domain(f64),
    #[error("unsupported incomplete-gamma order {0} (expected a multiple of 0.5 in [-2, 2])")]
    UnsupportedOrder(f64),
}

/// Tuning for the continued-fraction paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecFunConfig {
    /// Arguments strictly above this use continued fractions for the
    /// scaled functions.
    pub cf_switch_threshold: f64,
    /// Hard cap on continued-fraction terms.
    pub cf_terms: usize,
    /// Relative convergence tolerance for series and continued fractions.
    pub quad_tolerance: f64,
}

impl Default for SpecFunConfig {
    fn default() -> Self {
        SpecFunConfig {
            cf_switch_threshold: 10.0,
            cf_terms: 2000,
            quad_tolerance: EPS,
        }
    }
}

impl SpecFunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.cf_switch_threshold > 0.0) {
            return Err("cf_switch_threshold must be > 0".into());
        }
        if self.cf_terms < 10 {
            return Err("cf_terms must be >= 10".into());
        }
        if !(self.quad_tolerance > 0.0) {
            return Err("quad_tolerance must be > 0".into());
        }
        Ok(())
    }
}

fn check_positive(x: f64) -> Result<(), SpecFunError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(SpecFunError::Domain(x))
    }
}

fn check_order(s: f64) -> Result<(), SpecFunError> {
    let twice = 2.0 * s;
    if (-4.0..=4.0).contains(&twice) && twice.fract() == 0.0 {
        Ok(())
    } else {
        Err(SpecFunError::UnsupportedOrder(s))
    }
}

/// Γ(s) for the half-integer orders handled here (s > 0).
fn gamma_half_integer(s: f64) -> f64 {
    // Γ(1) = 1, Γ(0.5) = √π, Γ(s + 1) = s Γ(s).
    let mut value = if s.fract() == 0.0 { 1.0 } else { PI.sqrt() };
    let mut k = if s.fract() == 0.0 { 1.0 } else { 0.5 };
    while k < s {
        value *= k;
        k += 1.0;
    }
    value
}

/// Modified Lentz evaluation of `a₁/(b₁ + a₂/(b₂ + …))`.
fn lentz<F>(cfg: &SpecFunConfig, mut term: F) -> f64
where
    F: FnMut(usize) -> (f64, f64),
{
    let mut f = FPMIN;
    let mut c = f;
    let mut d = 0.0;
    for k in 1..=cfg.cf_terms {
        let (a, b) = term(k);
        d = b + a * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + a / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < cfg.quad_tolerance {
            break;
        }
    }
    f
}

/// Continued-fraction tail `t_s(x)`; converges quickly once x ≳ 1.
fn cf_tail_raw(cfg: &SpecFunConfig, s: f64, x: f64) -> f64 {
    lentz(cfg, |k| {
        let kf = k as f64;
        let a = if k == 1 { 1.0 - s } else { -kf * (kf - s) };
        (a, x + 2.0 * kf + 1.0 - s)
    })
}

/// `eˣ Γ(s, x)` from the continued fraction.
fn cf_scaled(cfg: &SpecFunConfig, s: f64, x: f64) -> f64 {
    x.powf(s) / (x + 1.0 - s - cf_tail_raw(cfg, s, x))
}

/// Convergent power series for E₁, used for x < 1 where it loses no digits.
fn e1_series(cfg: &SpecFunConfig, x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..=cfg.cf_terms {
        let kf = k as f64;
        term *= -x / kf;
        let contrib = term / kf;
        sum += contrib;
        if contrib.abs() < cfg.quad_tolerance * sum.abs().max(FPMIN) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

/// Lower incomplete gamma γ(s, x) by its series, s > 0.
fn lower_series(cfg: &SpecFunConfig, s: f64, x: f64) -> f64 {
    let mut ap = s;
    let mut del = 1.0 / s;
    let mut sum = del;
    for _ in 0..cfg.cf_terms {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * cfg.quad_tolerance {
            break;
        }
    }
    sum * (-x + s * x.ln()).exp()
}

/// Exponential integral `E₁(x) = ∫ₓ^∞ e⁻ᵗ/t dt` with the default config.
pub fn exp_integral_e1(x: f64) -> Result<f64, SpecFunError> {
    exp_integral_e1_with(&SpecFunConfig::default(), x)
}

pub fn exp_integral_e1_with(cfg: &SpecFunConfig, x: f64) -> Result<f64, SpecFunError> {
    check_positive(x)?;
    if x < 1.0 {
        Ok(e1_series(cfg, x))
    } else {
        // The alternating series cancels badly past x ≈ 1, so the
        // continued fraction takes over here even below the switch point.
        Ok((-x).exp() * cf_scaled(cfg, 0.0, x))
    }
}

/// `eᵈ E₁(d)`, finite for every positive `d`.
pub fn e1_exp_product(d: f64) -> Result<f64, SpecFunError> {
    e1_exp_product_with(&SpecFunConfig::default(), d)
}

pub fn e1_exp_product_with(cfg: &SpecFunConfig, d: f64) -> Result<f64, SpecFunError> {
    check_positive(d)?;
    if d > cfg.cf_switch_threshold {
        Ok(cf_scaled(cfg, 0.0, d))
    } else {
        Ok(d.exp() * exp_integral_e1_with(cfg, d)?)
    }
}

/// Upper incomplete gamma `Γ(s, x)` for half-integer orders in [−2, 2].
///
/// s = 0 maps to E₁. Negative orders use `Γ(s, x) = (Γ(s+1, x) − xˢe⁻ˣ)/s`
/// up to the switch point and the continued fraction above it.
pub fn upper_inc_gamma(s: f64, x: f64) -> Result<f64, SpecFunError> {
    upper_inc_gamma_with(&SpecFunConfig::default(), s, x)
}

pub fn upper_inc_gamma_with(cfg: &SpecFunConfig, s: f64, x: f64) -> Result<f64, SpecFunError> {
    check_positive(x)?;
    check_order(s)?;
    if s == 0.0 {
        return exp_integral_e1_with(cfg, x);
    }
    if s > 0.0 {
        if x < s + 1.0 {
            return Ok(gamma_half_integer(s) - lower_series(cfg, s, x));
        }
        return Ok((-x).exp() * cf_scaled(cfg, s, x));
    }
    if x > cfg.cf_switch_threshold {
        return Ok((-x).exp() * cf_scaled(cfg, s, x));
    }
    let upper = upper_inc_gamma_with(cfg, s + 1.0, x)?;
    Ok((upper - (s * x.ln() - x).exp()) / s)
}

/// `eˣ Γ(s, x)`, finite where `Γ(s, x)` itself would underflow.
pub fn upper_inc_gamma_scaled(s: f64, x: f64) -> Result<f64, SpecFunError> {
    upper_inc_gamma_scaled_with(&SpecFunConfig::default(), s, x)
}

pub fn upper_inc_gamma_scaled_with(
    cfg: &SpecFunConfig,
    s: f64,
    x: f64,
) -> Result<f64, SpecFunError> {
    check_positive(x)?;
    check_order(s)?;
    if x > cfg.cf_switch_threshold {
        Ok(cf_scaled(cfg, s, x))
    } else {
        Ok(x.exp() * upper_inc_gamma_with(cfg, s, x)?)
    }
}

/// Continued-fraction tail `t_s(x) = x + 1 − s − xˢ / (eˣ Γ(s, x))`.
///
/// Above the switch point it is evaluated directly so no digits are lost to
/// the subtraction; below it the defining identity is used.
pub fn inc_gamma_cf_tail(s: f64, x: f64) -> Result<f64, SpecFunError> {
    inc_gamma_cf_tail_with(&SpecFunConfig::default(), s, x)
}

pub fn inc_gamma_cf_tail_with(cfg: &SpecFunConfig, s: f64, x: f64) -> Result<f64, SpecFunError> {
    check_positive(x)?;
    check_order(s)?;
    if x > cfg.cf_switch_threshold {
        Ok(cf_tail_raw(cfg, s, x))
    } else {
        let scaled = upper_inc_gamma_scaled_with(cfg, s, x)?;
        Ok(x + 1.0 - s - x.powf(s) / scaled)
    }
}
