//! Planted two-cluster shrinkage-weight configurations and a brute-force
//! scan of the fitted mixture density.

use balance::bmfs::FixedMeanGmm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 1 to 10 signal weights on [0, 0.2] and 20 to 200 noise weights on
/// [0.7, 1], shuffled. The flag marks signal entries.
pub fn planted(seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7E57_0000 + seed);
    let signal = rng.random_range(1..=10);
    let noise = rng.random_range(20..=200);
    let mut items: Vec<(f64, bool)> = (0..signal).map(|_| (rng.random_range(0.0..0.2), true)).collect();
    items.extend((0..noise).map(|_| (rng.random_range(0.7..1.0), false)));
    for i in (1..items.len()).rev() {
        let k = rng.random_range(0..=i);
        items.swap(i, k);
    }
    items.into_iter().unzip()
}

/// True when every signal weight is at or below `hat` and every noise
/// weight above it.
pub fn separates(omega: &[f64], is_signal: &[bool], hat: f64) -> bool {
    omega.iter().zip(is_signal).all(|(&w, &s)| if s { w <= hat } else { w > hat })
}

/// Argmin of the fitted log-density over `points` interior points of
/// `[lo, hi]`.
pub fn brute_force_valley(gmm: &FixedMeanGmm, points: usize) -> f64 {
    let [lo, hi] = gmm.means;
    let step = (hi - lo) / (points - 1) as f64;
    (1..points - 1)
        .map(|k| lo + step * k as f64)
        .map(|x| (gmm.log_density(x), x))
        .fold((f64::INFINITY, lo), |best, cur| if cur.0 < best.0 { cur } else { best })
        .1
}
