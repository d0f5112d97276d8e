//! Soft thresholding of shrinkage weights by a two-component mixture.
//!
//! The component means are pinned to `min ω` and `max ω`; only weights and
//! variances are learned. The threshold is the density valley on a uniform
//! grid. The density is evaluated in the log domain because well-separated
//! clusters make the linear density underflow between them.

use nalgebra::DVector;

pub const GRID_POINTS: usize = 1001;
pub const EM_MAX_ITERS: usize = 200;
pub const EM_REL_TOL: f64 = 1e-8;
pub const VARIANCE_FLOOR: f64 = 1e-10;
/// Used when the mixture cannot be estimated.
pub const FALLBACK_THRESHOLD: f64 = 0.5;
pub const MIN_RANGE: f64 = 0.1;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Fitted two-component mixture with fixed means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedMeanGmm {
    pub means: [f64; 2],
    pub weights: [f64; 2],
    pub variances: [f64; 2],
    pub iters: usize,
}

fn log_component(x: f64, mean: f64, weight: f64, var: f64) -> f64 {
    weight.max(f64::MIN_POSITIVE).ln() - 0.5 * (LN_2PI + var.ln()) - (x - mean).powi(2) / (2.0 * var)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl FixedMeanGmm {
    /// Fits by EM starting from equal weights and the sample variance.
    pub fn fit(omega: &[f64]) -> Self {
        let lo = omega.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = omega.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = omega.len() as f64;
        let mean = omega.iter().sum::<f64>() / n;
        let init_var = (omega.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0))
            .max(VARIANCE_FLOOR);
        let mut gmm = FixedMeanGmm {
            means: [lo, hi],
            weights: [0.5, 0.5],
            variances: [init_var, init_var],
            iters: 0,
        };
        let mut prev_ll = f64::NEG_INFINITY;
        let mut resp = vec![[0.0; 2]; omega.len()];
        for it in 0..EM_MAX_ITERS {
            gmm.iters = it + 1;
            let mut ll = 0.0;
            for (r, &w) in resp.iter_mut().zip(omega) {
                let l0 = log_component(w, gmm.means[0], gmm.weights[0], gmm.variances[0]);
                let l1 = log_component(w, gmm.means[1], gmm.weights[1], gmm.variances[1]);
                let total = log_add_exp(l0, l1);
                ll += total;
                *r = [(l0 - total).exp(), (l1 - total).exp()];
            }
            for k in 0..2 {
                let nk: f64 = resp.iter().map(|r| r[k]).sum();
                gmm.weights[k] = nk / n;
                let ss: f64 = resp.iter().zip(omega).map(|(r, &w)| r[k] * (w - gmm.means[k]).powi(2)).sum();
                gmm.variances[k] = if nk > 0.0 { (ss / nk).max(VARIANCE_FLOOR) } else { VARIANCE_FLOOR };
            }
            if (ll - prev_ll).abs() < EM_REL_TOL * ll.abs() {
                break;
            }
            prev_ll = ll;
        }
        gmm
    }

    pub fn log_density(&self, x: f64) -> f64 {
        log_add_exp(
            log_component(x, self.means[0], self.weights[0], self.variances[0]),
            log_component(x, self.means[1], self.weights[1], self.variances[1]),
        )
    }

    /// Grid over `[min ω, max ω]` and the argmin of the density over its
    /// interior points. The endpoints are excluded so the threshold never
    /// coincides with an observed extreme value.
    pub fn valley(&self) -> f64 {
        let [lo, hi] = self.means;
        let step = (hi - lo) / (GRID_POINTS - 1) as f64;
        let mut best = (f64::INFINITY, lo + step);
        for k in 1..GRID_POINTS - 1 {
            let x = lo + step * k as f64;
            let ld = self.log_density(x);
            if ld < best.0 {
                best = (ld, x);
            }
        }
        best.1
    }
}

/// Threshold for a vector of shrinkage weights.
pub fn omega_threshold(omega: &[f64]) -> f64 {
    if omega.len() < 2 {
        return FALLBACK_THRESHOLD;
    }
    let lo = omega.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = omega.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < MIN_RANGE {
        return FALLBACK_THRESHOLD;
    }
    FixedMeanGmm::fit(omega).valley()
}

/// Zeroes `⟨β_j⟩` where `ω_j = ⟨λ_j⟩/(⟨λ_j⟩+1)` exceeds the fitted valley.
///
/// Returns the thresholded coefficients, the threshold and the support.
pub fn soft_threshold(mean_lambda: &DVector<f64>, mean_beta: &DVector<f64>) -> (DVector<f64>, f64, Vec<usize>) {
    assert_eq!(mean_lambda.len(), mean_beta.len());
    let omega: Vec<f64> = mean_lambda.iter().map(|&l| l / (l + 1.0)).collect();
    let omega_hat = omega_threshold(&omega);
    let support: Vec<usize> = (0..omega.len()).filter(|&j| omega[j] <= omega_hat).collect();
    let mut beta = DVector::zeros(mean_beta.len());
    for &j in &support {
        beta[j] = mean_beta[j];
    }
    (beta, omega_hat, support)
}

/// Shrinkage weights for a vector of `⟨λ⟩`.
pub fn shrinkage_weights(mean_lambda: &DVector<f64>) -> DVector<f64> {
    mean_lambda.map(|l| l / (l + 1.0))
}
