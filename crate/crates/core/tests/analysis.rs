mod common;

use std::collections::BTreeMap;

use evobudget::analysis::*;
use evobudget::geom::Task;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use common::analysis::*;

#[test]
fn noiseless_plant_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cells = grid(planted(-0.5, -0.3, -0.2, -0.08), 1, 0.0, &mut rng);
    let fit = fit_bilinear(&cells, &no_perm(), &mut rng).unwrap();
    for (got, want) in [(fit.beta0, -0.5), (fit.a, -0.3), (fit.b, -0.2), (fit.c, -0.08)] {
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
    assert!((fit.r2 - 1.0).abs() < 1e-10);
    assert_eq!(fit.n_cells, cells.len());
}

#[test]
fn ceiling_cells_are_excluded() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cells = grid(planted(-1.5, -0.3, -0.2, -0.08), 1, 0.0, &mut rng);
    let kept = cells.iter().filter(|c| c.mean() < 0.97).count();
    assert!(kept < cells.len() && kept >= MIN_CELLS);
    let fit = fit_bilinear(&cells, &no_perm(), &mut rng).unwrap();
    assert_eq!(fit.n_cells, kept);
    assert!((fit.c - -0.08).abs() < 1e-10);
}

#[test]
fn fit_ignores_cell_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut cells = grid(planted(-0.5, -0.3, -0.2, -0.08), 3, 0.02, &mut rng);
    let a = fit_bilinear(&cells, &no_perm(), &mut rng).unwrap();
    cells.reverse();
    cells.swap(3, 17);
    let b = fit_bilinear(&cells, &no_perm(), &mut rng).unwrap();
    assert_eq!(a, b);
}

#[test]
fn budget_only_surface_makes_m0_match_m1() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cells = grid(planted(-0.4, -0.25, -0.25, 0.0), 1, 0.0, &mut rng);
    let models = nested_model_compare(&cells, &no_perm()).unwrap();
    assert!((models[0].r2 - models[1].r2).abs() < 1e-10);
}

#[test]
fn m1_never_below_m0() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let cells = grid(planted(-0.5, -0.3, -0.2, -0.08), 3, 0.05, &mut rng);
        let Ok(models) = nested_model_compare(&cells, &no_perm()) else { continue };
        assert!(models[1].r2 >= models[0].r2 - 1e-12);
        for m in &models[2..] {
            assert!(m.r2 >= models[1].r2 - 1e-12);
        }
    }
}

#[test]
fn published_mmd_coefficients_predict_by_hand() {
    let fit = FitResult {
        beta0: -0.590,
        a: -0.208,
        b: -0.290,
        c: -0.106,
        r2: 0.916,
        p_c: None,
        p_c_t: 0.0,
        n_cells: 0,
        n_obs: 0,
    };
    assert!((fit.log_gap(16.0, 32.0) - -3.190322255544382).abs() < 1e-12);
    assert!((fit.fitness(16.0, 32.0) - 0.9588413947870232).abs() < 1e-12);
}

#[test]
fn rank_deficiency_names_the_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cells: Vec<SweepCell> = grid(planted(-0.5, -0.3, -0.2, -0.08), 1, 0.0, &mut rng)
        .into_iter()
        .filter(|c| c.t == 2)
        .collect();
    match fit_bilinear(&cells, &no_perm(), &mut rng) {
        Err(FitError::RankDeficient { axis }) => assert!(axis.contains('T'), "{axis}"),
        other => panic!("{other:?}"),
    }
    let one_budget: Vec<SweepCell> = grid(planted(-0.2, -0.1, -0.1, -0.01), 1, 0.0, &mut rng)
        .into_iter()
        .filter(|c| c.c == 512)
        .collect();
    match fit_bilinear(&one_budget, &no_perm(), &mut rng) {
        Err(FitError::RankDeficient { axis }) => assert!(axis.contains("single budget"), "{axis}"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        fit_bilinear(&one_budget[..3], &no_perm(), &mut rng),
        Err(FitError::TooFewCells { .. })
    ));
}

#[test]
fn per_seed_mode_recovers_noiseless_plant() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cells = grid(planted(-0.5, -0.3, -0.2, -0.08), 2, 0.0, &mut rng);
    let opts = FitOptions {
        response: Response::PerSeed,
        ..no_perm()
    };
    let fit = fit_bilinear(&cells, &opts, &mut rng).unwrap();
    assert!((fit.c - -0.08).abs() < 1e-10);
    assert_eq!(fit.n_obs, 2 * fit.n_cells);
}

#[test]
fn interaction_permutation_test_detects_planted_c() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cells = grid(planted(-0.5, -0.3, -0.2, -0.08), 5, 0.01, &mut rng);
    let opts = FitOptions {
        shuffles: 2_000,
        ..FitOptions::default()
    };
    let fit = fit_bilinear(&cells, &opts, &mut rng).unwrap();
    assert!(fit.p_c.unwrap() < 0.01);
    assert!(fit.p_c_t < 0.01);
    let flat = grid(planted(-0.5, -0.3, -0.2, 0.0), 5, 0.01, &mut rng);
    let fit = fit_bilinear(&flat, &opts, &mut rng).unwrap();
    assert!((0.0..=1.0).contains(&fit.p_c.unwrap()));
}

#[test]
fn symmetric_surface_optimum_is_root_budget() {
    for c in [16.0, 64.0, 512.0, 1000.0] {
        let opt = optimal_depth(&fit_of(-0.5, -0.2, -0.2, -0.05), c);
        assert!(opt.is_interior());
        assert_eq!(opt.depth(), f64::sqrt(c));
    }
}

#[test]
fn positive_interaction_returns_corner() {
    let opt = optimal_depth(&fit_of(-0.5, -0.4, -0.2, 0.03), 512.0);
    match opt {
        DepthOptimum::Corner { reason, t, .. } => {
            assert_eq!(reason, CornerReason::VertexIsMinimum);
            assert!(t == 1.0 || t == 512.0);
        }
        other => panic!("{other:?}"),
    }
    let opt = optimal_depth(&fit_of(-0.5, -0.4, -0.2, 0.0), 512.0);
    assert_eq!(opt.depth(), 512.0);
}

#[test]
fn vertex_matches_grid_search_and_first_order_condition() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let f = fit_of(
            rng.random_range(-1.0..0.5),
            rng.random_range(-0.6..0.0),
            rng.random_range(-0.6..0.0),
            rng.random_range(-0.15..-0.005),
        );
        let c: f64 = 2f64.powi(rng.random_range(3..=9));
        let log_c = c.ln();
        let steps = 20_000;
        let step = log_c / steps as f64;
        let best = (0..=steps)
            .map(|i| i as f64 * step)
            .min_by(|x, y| log_gap_on_budget(&f, log_c, *x).total_cmp(&log_gap_on_budget(&f, log_c, *y)))
            .unwrap();
        let opt = optimal_depth(&f, c);
        let got = opt.depth().ln();
        assert!((got - best).abs() <= step + 1e-12, "{got} vs {best}");
        if let DepthOptimum::Interior { log_t_star, .. } = opt {
            let h = 1e-5;
            let d = (log_gap_on_budget(&f, log_c, log_t_star + h) - log_gap_on_budget(&f, log_c, log_t_star - h)) / (2.0 * h);
            assert!(d.abs() < 1e-8, "{d}");
        }
    }
}

#[test]
fn plateau_width_identities() {
    let f = fit_of(-0.5, -0.2, -0.3, -0.106);
    assert_eq!(plateau_halfwidth(&f, 0.106), Plateau::Finite(1.0));
    let Plateau::Finite(w1) = plateau_halfwidth(&f, 0.01) else { panic!() };
    let Plateau::Finite(w4) = plateau_halfwidth(&f, 0.04) else { panic!() };
    assert!((w4 - 2.0 * w1).abs() < 1e-15);
    assert_eq!(plateau_halfwidth(&fit_of(0.0, 0.0, 0.0, 0.0), 0.1), Plateau::Infinite);

    let c = 512.0f64;
    for delta in [0.01, 0.05, 0.2] {
        let DepthOptimum::Interior { log_t_star, .. } = optimal_depth(&f, c) else { panic!() };
        let Plateau::Finite(w) = plateau_halfwidth(&f, delta) else { panic!() };
        let gap = |x: f64| log_gap_on_budget(&f, c.ln(), x).exp();
        for edge in [log_t_star - w, log_t_star + w] {
            assert!((gap(log_t_star) - (-delta).exp() * gap(edge)).abs() < 1e-10);
        }
    }
}

#[test]
fn envelope_single_depth_and_missing_best_of_n() {
    let cells = vec![SweepCell {
        model_id: "m".into(),
        task: Task::Heilbronn,
        c: 64,
        t: 8,
        n: 8,
        fitness: vec![0.2, 0.4],
    }];
    let env = compute_envelope(&cells);
    assert_eq!(env.len(), 1);
    assert!((env[0].v_max - 0.3).abs() < 1e-15);
    assert_eq!(env[0].pen_bon, None);
}

#[test]
fn envelope_argmax_follows_planted_vertex() {
    let f = fit_of(-0.3, -0.25, -0.15, -0.06);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cells = grid(|t, n| f.log_gap(t, n), 1, 0.0, &mut rng);
    for row in compute_envelope(&cells) {
        let vertex = optimal_depth(&f, row.c as f64).depth().log2();
        assert!((row.argmax_t as f64).log2().sub_abs(vertex) <= 1.0, "C={} T={}", row.c, row.argmax_t);
        assert!(row.pen_bon.unwrap() >= 0.0);
    }
}

trait SubAbs {
    fn sub_abs(self, o: f64) -> f64;
}
impl SubAbs for f64 {
    fn sub_abs(self, o: f64) -> f64 {
        (self - o).abs()
    }
}

#[test]
fn capability_gate_table_gains() {
    // (V_{T=1}, V_max, published gain)
    let rows = [
        (0.582, 0.615, 0.033),
        (0.738, 0.790, 0.052),
        (0.989, 0.999, 0.009),
        (0.926, 0.980, 0.054),
        (0.843, 0.843, 0.000),
        (0.716, 0.748, 0.031),
        (0.694, 0.906, 0.213),
        (0.944, 0.960, 0.016),
        (0.867, 0.981, 0.115),
        (0.673, 0.843, 0.170),
        (0.339, 0.672, 0.333),
        (0.047, 0.253, 0.206),
    ];
    for (i, (v1, vmax, gain)) in rows.into_iter().enumerate() {
        let cell = |t: u64, v: f64| SweepCell {
            model_id: "m".into(),
            task: Task::Heilbronn,
            c: 512,
            t,
            n: 512 / t,
            fitness: vec![v],
        };
        let env = compute_envelope(&[cell(1, v1), cell(8, vmax), cell(64, v1.min(vmax))]);
        let got = env[0].pen_bon.unwrap();
        // published values are rounded from unrounded cell means
        assert!((got - gain).abs() <= 0.0015, "row {i}: {got} vs {gain}");
        if i == 10 {
            assert!((got - 0.333).abs() < 1e-12);
        }
    }
}

#[test]
fn identical_fitness_gives_p_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data: BTreeMap<u64, Vec<f64>> = [1, 2, 4, 8].map(|t| (t, vec![0.5; 5])).into();
    let r = permutation_test_depth_gain(&data, 2_000, &mut rng).unwrap();
    assert_eq!(r.observed, 0.0);
    assert_eq!(r.p, 1.0);
}

#[test]
fn planted_depth_effect_is_significant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let normal = Normal::new(0.0, 0.1).unwrap();
    let mut data = BTreeMap::new();
    for t in [1u64, 2, 4, 8, 16, 32] {
        let shift = if t == 32 { 0.3 } else { 0.0 };
        data.insert(t, (0..10).map(|_| 0.4 + shift + normal.sample(&mut rng)).collect());
    }
    let r = permutation_test_depth_gain(&data, 20_000, &mut rng).unwrap();
    assert!(r.p < 0.01, "{r:?}");
}

#[test]
fn permutation_requires_best_of_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data: BTreeMap<u64, Vec<f64>> = [2, 4].map(|t| (t, vec![0.5])).into();
    assert_eq!(
        permutation_test_depth_gain(&data, 10, &mut rng),
        Err(PermutationError::MissingBestOfN)
    );
}

#[test]
fn iqm_fractional_weights() {
    assert_eq!(iqm(&[1.0, 2.0, 3.0, 4.0]), 2.5);
    assert_eq!(iqm(&[4.0, 3.0, 1.0, 2.0]), 2.5);
    // n = 5: weights 0.75, 1, 0.75 on the 2nd..4th order statistics
    assert!((iqm(&[20.0, 0.0, 6.0, 1.0, 5.0]) - (0.75 * 1.0 + 5.0 + 0.75 * 6.0) / 2.5).abs() < 1e-15);
    assert_eq!(iqm(&[7.0]), 7.0);
}

#[test]
fn constant_samples_have_zero_se() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = bootstrap_stats(&[vec![0.7; 10]], 1000, &mut rng).unwrap();
    assert_eq!(s.se, 0.0);
    assert_eq!(s.ci95.0, s.ci95.1);
    assert!((s.ci95.0 - 0.7).abs() < 1e-12);
    assert!(bootstrap_stats(&[vec![0.7]], 10, &mut rng).is_err());
    assert_eq!(
        bootstrap_stats(&[vec![0.1, 0.2], vec![]], 10, &mut rng),
        Err(BootstrapError::EmptyStratum(1))
    );
}

#[test]
fn two_point_bootstrap_converges_to_exact_distribution() {
    // Exact resampling distribution of the mean by enumerating all 2^n
    // label patterns weighted by their multinomial probability.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in [4usize, 7, 10] {
        let k = n / 3;
        let sample: Vec<f64> = (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect();
        let p = k as f64 / n as f64;
        let mut mean = 0.0;
        let mut second = 0.0;
        for mask in 0u32..(1 << n) {
            let ones = mask.count_ones() as i32;
            let w = p.powi(ones) * (1.0 - p).powi(n as i32 - ones);
            let m = ones as f64 / n as f64;
            mean += w * m;
            second += w * m * m;
        }
        let exact_se = (second - mean * mean).sqrt();
        let s = bootstrap_stats(&[sample], 200_000, &mut rng).unwrap();
        assert!((s.se - exact_se).abs() / exact_se < 0.01, "n={n}: {} vs {exact_se}", s.se);
    }
}

#[test]
fn stratified_resampling_keeps_stratum_means_apart() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // each stratum constant: stratified bootstrap has no variance at all
    let s = bootstrap_stats(&[vec![0.0; 5], vec![1.0; 5]], 500, &mut rng).unwrap();
    assert_eq!(s.se, 0.0);
    let pooled = bootstrap_stats(&[[vec![0.0; 5], vec![1.0; 5]].concat()], 500, &mut rng).unwrap();
    assert!(pooled.se > 0.1);
}

#[test]
fn threshold_trivial_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let c = curves(vec![vec![0.6, 0.7, 0.8]; 4]);
    let sets = resample_indices(4, Resampling::MonteCarlo(1000), &mut rng);
    let r = time_to_threshold_curves(&c, &[0.5, 0.95], 0.9, &sets);
    assert_eq!(r[0].generation, Some(1));
    assert_eq!(r[0].flops, Some(10.0));
    assert_eq!(r[1].generation, None);
    assert_eq!(r[1].generation_cell(), "---");
    assert_eq!(r[1].flops_cell(), "---");
}

#[test]
fn threshold_exhaustive_mode_equals_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let taus = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    for _ in 0..30 {
        let runs = rng.random_range(2..=5);
        let best = monotone_curves(&mut rng, runs, 20);
        let c = curves(best.clone());
        let sets = resample_indices(runs, Resampling::Exhaustive, &mut rng);
        let got = time_to_threshold_curves(&c, &taus, 0.9, &sets);
        for (r, &tau) in got.iter().zip(&taus) {
            assert_eq!(r.generation, exhaustive_oracle(&best, tau, 0.9), "tau {tau}");
        }
    }
}

#[test]
fn threshold_monotone_in_tau() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let best = monotone_curves(&mut rng, 10, 40);
        let c = curves(best);
        let sets = resample_indices(10, Resampling::MonteCarlo(500), &mut rng);
        let taus: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
        let r = time_to_threshold_curves(&c, &taus, 0.9, &sets);
        for w in r.windows(2) {
            match (w[0].generation, w[1].generation) {
                (Some(a), Some(b)) => assert!(a <= b),
                (None, Some(_)) => panic!("higher tau reached while lower did not"),
                _ => {}
            }
        }
    }
}
