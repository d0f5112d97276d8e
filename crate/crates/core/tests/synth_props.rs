use balance::baselines::LassoOptions;
use balance::bmfs::SolverOptions;
use balance::synth::*;
use nalgebra::{DMatrix, DVector};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const KINDS: [Collinearity; 3] = [Collinearity::Absent, Collinearity::Partial, Collinearity::Perfect];

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn column(x: &DMatrix<f64>, j: usize) -> Vec<f64> {
    x.column(j).iter().copied().collect()
}

/// Straightforward recount used as the metrics oracle.
fn naive_metrics(est: &[f64], truth: &[f64]) -> (f64, f64) {
    let s_est: Vec<usize> = (0..est.len()).filter(|&j| est[j] != 0.0).collect();
    let s_true: Vec<usize> = (0..truth.len()).filter(|&j| truth[j] != 0.0).collect();
    let tp = s_est.iter().filter(|j| s_true.contains(j)).count() as f64;
    let f1 = if s_est.is_empty() && s_true.is_empty() {
        1.0
    } else if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (s_est.len() + s_true.len()) as f64
    };
    let mse = est.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / est.len() as f64;
    (f1, mse)
}

#[test]
fn orthonormal_factor_for_every_kind() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in KINDS {
        for (p, pz) in [(5, 5), (20, 10), (50, 25), (9, 4)] {
            let pz = if kind == Collinearity::Absent { p } else { pz };
            let q = gen_orthogonal(kind, p, pz, &mut rng).unwrap();
            assert_eq!(q.shape(), (p, pz));
            assert!((q.tr_mul(&q) - DMatrix::identity(pz, pz)).amax() < 1e-10, "{kind:?} {p} {pz}");
        }
    }
}

#[test]
fn generation_is_deterministic() {
    for kind in KINDS {
        let params = SynthParams::new(kind, 50, 20, 0.1, 0.1).with_seed(42).with_missing(0.1);
        assert_eq!(gen_case(&params).unwrap(), gen_case(&params).unwrap());
        let other = gen_case(&params.clone().with_seed(43)).unwrap();
        assert_ne!(gen_case(&params).unwrap().x, other.x);
    }
}

#[test]
fn residual_matches_noise_level() {
    for kind in KINDS {
        for seed in 0..5 {
            let params = SynthParams::new(kind, 100, 40, 0.3, 0.05).with_seed(seed);
            let c = gen_case(&params).unwrap();
            let eps = &c.y - &c.x * &c.beta_true;
            let mean = eps.mean();
            let sd = (eps.map(|e| (e - mean).powi(2)).sum() / 99.0).sqrt();
            assert!((sd - 0.3).abs() <= 0.2 * 0.3, "{kind:?} seed {seed}: sd {sd}");
        }
    }
}

#[test]
fn noiseless_absent_case_is_exactly_recoverable() {
    let c = gen_case(&SynthParams::new(Collinearity::Absent, 60, 10, 0.0, 0.05).with_seed(3)).unwrap();
    assert_eq!(c.support_true.len(), 1);
    let ls = (c.x.transpose() * &c.x).cholesky().unwrap().solve(&(c.x.transpose() * &c.y));
    assert!((ls - &c.beta_true).amax() < 1e-10);
}

#[test]
fn correlation_structure_matches_kind() {
    let perfect = gen_case(&SynthParams::new(Collinearity::Perfect, 100, 20, 0.1, 0.1).with_seed(1)).unwrap();
    let mut found = false;
    for a in 0..20 {
        for b in a + 1..20 {
            found |= (corr(&column(&perfect.x, a), &column(&perfect.x, b)).abs() - 1.0).abs() < 1e-10;
        }
    }
    assert!(found, "perfect kind has no collinear pair");

    let partial = gen_case(&SynthParams::new(Collinearity::Partial, 100, 50, 0.1, 0.02).with_seed(1)).unwrap();
    let mut max = 0.0f64;
    for a in 0..50 {
        for b in a + 1..50 {
            let r = corr(&column(&partial.x, a), &column(&partial.x, b)).abs();
            assert!(r < 1.0 - 1e-8, "partial kind has a collinear pair");
            max = max.max(r);
        }
    }
    assert!(max > 0.3, "max correlation {max}");
}

#[test]
fn support_size_follows_nonzero_count() {
    // Partial draws its support in observed coordinates; perfect spreads each
    // factor over its whole column group.
    let params = SynthParams::new(Collinearity::Partial, 100, 200, 0.1, 0.02).with_seed(9);
    assert_eq!(gen_case(&params).unwrap().support_true.len(), params.nonzero_count());
    let params = SynthParams::new(Collinearity::Absent, 100, 200, 0.1, 0.02).with_seed(9);
    assert_eq!(gen_case(&params).unwrap().support_true.len(), params.nonzero_count());
    let params = SynthParams::new(Collinearity::Perfect, 100, 200, 0.1, 0.02).with_seed(9);
    let c = gen_case(&params).unwrap();
    assert_eq!(c.support_true.len(), params.nonzero_count() * 2);
    for &j in &c.support_true {
        assert!((0.5..=1.5).contains(&(c.beta_true[j].abs() * 2f64.sqrt())));
    }
    assert_eq!(SynthParams::new(Collinearity::Partial, 100, 20, 0.1, 0.005).nonzero_count(), 1);
}

#[test]
fn missing_mask_rate() {
    let c = gen_case(&SynthParams::new(Collinearity::Partial, 100, 200, 0.1, 0.005).with_missing(0.3).with_seed(2)).unwrap();
    let rate = c.x_mask.iter().filter(|&&m| m).count() as f64 / (100.0 * 200.0);
    assert!((rate - 0.3).abs() < 0.02, "rate {rate}");
    assert!(c.y_mask.iter().all(|&m| !m));
    let mut params = SynthParams::new(Collinearity::Partial, 100, 20, 0.1, 0.05).with_missing(0.3).with_seed(2);
    params.missing_in_y = true;
    assert!(gen_case(&params).unwrap().y_mask.iter().any(|&m| m));
}

#[test]
fn planted_alarm_shifts_causes_only() {
    let mut c = gen_case(&SynthParams::new(Collinearity::Partial, 100, 30, 0.1, 0.05).with_seed(4)).unwrap();
    let before = c.clone();
    let (s, e) = default_alarm(100);
    assert_eq!((s, e), (90, 99));
    c.plant_alarm(s, e, 3.0).unwrap();
    for j in 0..30 {
        let changed = (0..100).any(|i| c.x[(i, j)] != before.x[(i, j)]);
        assert_eq!(changed, c.support_true.contains(&j), "column {j}");
        assert!((0..s).all(|i| c.x[(i, j)] == before.x[(i, j)]));
    }
    let eps_before = &before.y - &before.x * &before.beta_true;
    let eps_after = &c.y - &c.x * &c.beta_true;
    assert!((eps_before - eps_after).amax() < 1e-12);
    let input = c.to_case_input(s, e).unwrap();
    assert_eq!(input.candidates.len(), 30);
    assert_eq!(input.candidates[7].name, "x7");
    assert_eq!(c.ground_truth().support_names.len(), c.support_true.len());
}

#[test]
fn preset_grids() {
    let t1 = table_grid(1).unwrap();
    assert_eq!(t1.len(), 18);
    assert!(t1.iter().all(|g| g.validate().is_ok()));
    for (t, len) in [(2, 4), (3, 5), (4, 5)] {
        let g = table_grid(t).unwrap();
        assert_eq!(g.len(), len);
        assert!(g.iter().all(|c| c.p == DESK_P && c.kind == Collinearity::Partial));
    }
    assert!(table_grid(5).is_err());
}

fn small_bench(threads: usize) -> Vec<u8> {
    let grid = vec![
        SynthParams::new(Collinearity::Partial, 40, 20, 0.1, 0.05),
        SynthParams::new(Collinearity::Perfect, 40, 20, 0.1, 0.05).with_missing(0.1),
    ];
    let cfg = BenchConfig { trials: 3, master_seed: 11, record_timing: false, ..BenchConfig::default() };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let rows = pool.install(|| run_benchmark(&grid, &SolverKind::ALL, &cfg));
    let mut out = Vec::new();
    write_csv(&rows, &mut out).unwrap();
    out
}

#[test]
fn benchmark_is_independent_of_thread_count() {
    let one = small_bench(1);
    assert_eq!(one, small_bench(4));
    assert_eq!(one, small_bench(1));
    let text = String::from_utf8(one).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(lines.count(), 6);
}

#[test]
fn failed_trials_are_recorded() {
    let mut bad = SynthParams::new(Collinearity::Absent, 40, 20, 0.1, 0.05);
    bad.p_z = 10;
    let cfg = BenchConfig { trials: 2, record_timing: false, ..BenchConfig::default() };
    let rows = run_benchmark(&[bad], &[SolverKind::Bmfs], &cfg);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].failures, 2);
    assert_eq!(rows[0].f1_mean, 0.0);
}

#[test]
fn solve_case_runs_every_solver() {
    let c = gen_case(&SynthParams::new(Collinearity::Absent, 60, 10, 0.01, 0.1).with_seed(8)).unwrap();
    for s in SolverKind::ALL {
        let beta = solve_case(&c, s, &SolverOptions::default(), &LassoOptions::default()).unwrap();
        assert_eq!(beta.len(), 10);
        let (f1, _) = support_metrics(&beta, c.beta_true.as_slice());
        assert!(f1 > 0.0, "{s:?}");
    }
}

#[test]
fn metrics_mse_example() {
    let truth = DVector::from_fn(10, |j, _| j as f64);
    let mut est = truth.clone();
    for j in 0..4 {
        est[j] += 0.1;
    }
    let (f1, mse) = support_metrics(est.as_slice(), truth.as_slice());
    assert!((mse - 0.004).abs() < 1e-15);
    // Entry 0 enters the estimated support only.
    assert!(f1 < 1.0);
    let (f1, mse) = support_metrics(truth.as_slice(), truth.as_slice());
    assert_eq!((f1, mse), (1.0, 0.0));
}

proptest! {
    #[test]
    fn metrics_match_naive_recount(pairs in vec((prop_oneof![Just(0.0), -2.0f64..2.0], prop_oneof![Just(0.0), -2.0f64..2.0]), 1..30)) {
        let (est, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (f1, mse) = support_metrics(&est, &truth);
        let (nf1, nmse) = naive_metrics(&est, &truth);
        prop_assert!((f1 - nf1).abs() < 1e-12);
        prop_assert!((mse - nmse).abs() < 1e-12);
    }

    #[test]
    fn derived_seeds_are_distinct(master in any::<u64>()) {
        let mut seen = std::collections::HashSet::new();
        for cell in 0..10 {
            for trial in 0..10 {
                prop_assert!(seen.insert(derive_seed(master, cell, trial)));
            }
        }
    }
}
