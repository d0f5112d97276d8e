//! Adaptive Gauss–Kronrod (7, 15) quadrature and the integrals it is used
//! to check. Shares nothing with the library's continued fractions.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for k in 0..7 {
        let pair = f(c - h * XGK[k]) + f(c + h * XGK[k]);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// `∫_a^b f` to relative tolerance `tol`, by bisection of the worst interval.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..5000 {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= tol * total.abs() {
            break;
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("non-empty");
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(&f, lo, mid)));
        parts.push((mid, hi, gk15(&f, mid, hi)));
    }
    parts.iter().map(|p| p.2 .0).sum()
}

const TOL: f64 = 1e-12;
/// `t = x e^v` maps `[x, ∞)` to `[0, ∞)` with a smooth integrand; the
/// range is cut where `e^{-(t-x)}` drops below `e^{-700}`.
fn log_range(x: f64) -> f64 {
    ((x + 700.0) / x).ln()
}

/// `eˣ Γ(s, x) = ∫_x^∞ t^{s-1} e^{-(t-x)} dt`.
pub fn scaled_upper_gamma(s: f64, x: f64) -> f64 {
    integrate(|v| {
        let t = x * v.exp();
        t.powf(s) * (-(t - x)).exp()
    }, 0.0, log_range(x), TOL)
}

pub fn upper_gamma(s: f64, x: f64) -> f64 {
    scaled_upper_gamma(s, x) * (-x).exp()
}

pub fn e1(x: f64) -> f64 {
    upper_gamma(0.0, x)
}

pub fn e1_exp(x: f64) -> f64 {
    scaled_upper_gamma(0.0, x)
}

/// `∫_0^∞ λ^a (λ+1)^{-1} e^{-dλ} dλ` with `λ = e^v`.
fn lambda_integral(a: f64, d: f64) -> f64 {
    let hi = (750.0 / d).ln();
    integrate(|v| {
        let l = v.exp();
        l.powf(a + 1.0) / (l + 1.0) * (-d * l).exp()
    }, -45.0, hi, TOL)
}

/// `(⟨λ⟩, ⟨λ½⟩)` under `q(λ) ∝ (λ+1)^{-1} e^{-dλ}`.
pub fn lambda_moments(d: f64) -> (f64, f64) {
    let z = lambda_integral(0.0, d);
    (lambda_integral(1.0, d) / z, lambda_integral(0.5, d) / z)
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}
