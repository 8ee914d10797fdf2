use coarse_id_core::linalg::{op_norm, Mat};
use coarse_id_core::lti::{gramians, LinearSystem, NoiseSpec};
use coarse_id_core::rng::stream;
use coarse_id_core::sysid::*;
use coarse_id_core::systems::{laplacian_example, laplacian_example_noise, random_stable_system};
use coarse_id_core::Error;
use proptest::prelude::*;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[test]
fn zero_forcing_gives_zero_states() {
    let sys = laplacian_example();
    let data = simulate_rollouts(&sys, &NoiseSpec::new(0.0, 0.0).unwrap(), 5, 6, 1).unwrap();
    assert!(data.rollouts().iter().all(|r| r.states.iter().all(|&v| v == 0.0)));
}

#[test]
fn simulation_is_deterministic() {
    let sys = laplacian_example();
    let noise = laplacian_example_noise();
    let a = simulate_rollouts(&sys, &noise, 20, 6, 99).unwrap();
    let b = simulate_rollouts(&sys, &noise, 20, 6, 99).unwrap();
    assert_eq!(a, b);
    let c = simulate_rollouts(&sys, &noise, 20, 6, 100).unwrap();
    assert_ne!(a, c);
}

#[test]
fn recorded_noise_reproduces_dynamics() {
    let sys = LinearSystem::new(Mat::zeros(1, 1), Mat::identity(1, 1)).unwrap();
    let data = simulate_rollouts(&sys, &NoiseSpec::new(1.0, 0.0).unwrap(), 3, 5, 7).unwrap();
    for r in data.rollouts() {
        for t in 0..5 {
            assert_eq!(r.states[(0, t + 1)], r.inputs[(0, t)]);
        }
    }
    let sys = laplacian_example();
    let data = simulate_rollouts(&sys, &laplacian_example_noise(), 4, 6, 3).unwrap();
    for r in data.rollouts() {
        let w = r.noises.as_ref().unwrap();
        for t in 0..6 {
            let pred = sys.a() * r.states.column(t) + sys.b() * r.inputs.column(t) + w.column(t);
            assert!((pred - r.states.column(t + 1)).norm() < 1e-12);
        }
    }
}

#[test]
fn noiseless_fit_is_exact() {
    let sys = laplacian_example();
    let data = simulate_rollouts(&sys, &NoiseSpec::new(1.0, 0.0).unwrap(), 10, 6, 5).unwrap();
    for mode in [SampleMode::Full, SampleMode::LastSample] {
        let (a, b) = ls_estimate(&data, mode).unwrap();
        assert!(op_norm(&(a - sys.a())) < 1e-8);
        assert!(op_norm(&(b - sys.b())) < 1e-8);
    }
}

#[test]
fn underdetermined_design_is_rejected() {
    let sys = laplacian_example();
    let data = simulate_rollouts(&sys, &laplacian_example_noise(), 1, 5, 5).unwrap();
    assert!(matches!(ls_estimate(&data, SampleMode::Full), Err(Error::RankDeficient { .. })));
    assert!(matches!(ls_estimate(&data, SampleMode::LastSample), Err(Error::RankDeficient { .. })));
}

#[test]
fn estimation_error_shrinks_with_more_rollouts() {
    let sys = laplacian_example();
    let noise = laplacian_example_noise();
    let med = |n: usize| {
        median(
            (0..30)
                .map(|s| {
                    let data = simulate_rollouts(&sys, &noise, n, 6, 1000 + s).unwrap();
                    op_norm(&(ls_estimate(&data, SampleMode::Full).unwrap().0 - sys.a()))
                })
                .collect(),
        )
    };
    let errs: Vec<f64> = [10, 40, 160, 640].iter().map(|&n| med(n)).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn theory_bound_examples() {
    let unit = NoiseSpec::new(1.0, 1.0).unwrap();
    let (ea, eb) = theory_bound_independent(2.0, 3, 3, 200, 0.05, &unit).unwrap();
    assert!((eb - 8.705_916_032_351_585).abs() < 1e-9);
    assert!(ea < eb);
    let (ea, eb) = theory_bound_independent(1.0, 3, 3, 200, 0.05, &unit).unwrap();
    assert_eq!(ea, eb);
    match theory_bound_independent(1.0, 3, 3, 100, 0.05, &unit) {
        Err(Error::TooFewSamples { required, .. }) => assert!((required - 118.112_426_154_782_1).abs() < 1e-9),
        other => panic!("expected a sample-count error, got {other:?}"),
    }
}

#[test]
fn data_dependent_bound_examples() {
    // Σ z zᵀ = 100·I for n = p = 1.
    let z = Mat::from_row_slice(2, 2, &[10.0, 0.0, 0.0, 10.0]);
    let reg = RegressionMatrices { z, x_next: Mat::zeros(2, 1), mode: SampleMode::LastSample };
    let b = data_dependent_bound(&reg, 0.05, 1.0).unwrap();
    assert!((b.eps_a - 0.486_196_039_305_391).abs() < 1e-9);
    assert!((b.eps_b - 0.486_196_039_305_391).abs() < 1e-9);
    assert!((data_dependent_constant(1, 1, 0.05, 1.0) - 23.638_658_863_624_94).abs() < 1e-9);

    let singular =
        RegressionMatrices { z: Mat::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]), x_next: Mat::zeros(2, 1), mode: SampleMode::Full };
    let b = data_dependent_bound(&singular, 0.05, 1.0).unwrap();
    assert_eq!((b.eps_a, b.eps_b), (f64::INFINITY, f64::INFINITY));

    let b = data_dependent_bound(&reg, 0.05, 0.0).unwrap();
    assert_eq!((b.eps_a, b.eps_b), (0.0, 0.0));

    let short = RegressionMatrices { z: Mat::zeros(1, 2), x_next: Mat::zeros(1, 1), mode: SampleMode::Full };
    assert!(matches!(data_dependent_bound(&short, 0.05, 1.0), Err(Error::TooFewSamples { .. })));
}

#[test]
fn full_data_beats_last_sample_in_median() {
    let sys = laplacian_example();
    let noise = laplacian_example_noise();
    let (mut full, mut last) = (Vec::new(), Vec::new());
    for s in 0..50 {
        let data = simulate_rollouts(&sys, &noise, 40, 6, 5000 + s).unwrap();
        full.push(op_norm(&(ls_estimate(&data, SampleMode::Full).unwrap().0 - sys.a())));
        last.push(op_norm(&(ls_estimate(&data, SampleMode::LastSample).unwrap().0 - sys.a())));
    }
    assert!(median(full) <= median(last));
}

#[test]
fn theory_bound_covers_last_sample_error() {
    let sys = laplacian_example();
    let noise = laplacian_example_noise();
    let lambda_g = gramians(&sys, &noise, 6).unwrap().lambda_g;
    let (ea, _) = theory_bound_independent(lambda_g, 3, 3, 200, 0.05, &noise).unwrap();
    let covered = (0..200)
        .filter(|&s| {
            let data = simulate_rollouts(&sys, &noise, 200, 6, 9000 + s).unwrap();
            op_norm(&(ls_estimate(&data, SampleMode::LastSample).unwrap().0 - sys.a())) <= ea
        })
        .count();
    assert!(covered >= 190, "{covered} / 200");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noiseless_identifiability(seed in any::<u64>()) {
        let mut rng = stream(seed, 0);
        let (n, p) = (1 + (seed % 4) as usize, 1 + ((seed / 4) % 3) as usize);
        let sys = random_stable_system(&mut rng, n, p, 0.1, 1.2);
        let data = simulate_rollouts(&sys, &NoiseSpec::new(1.0, 0.0).unwrap(), 3 * (n + p), 4, seed).unwrap();
        match ls_estimate(&data, SampleMode::Full) {
            Ok((a, b)) => {
                prop_assert!(op_norm(&(a - sys.a())) < 1e-8);
                prop_assert!(op_norm(&(b - sys.b())) < 1e-8);
            }
            Err(Error::RankDeficient { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        }
    }

    #[test]
    fn theory_bound_monotonicity(n_samples in 200usize..5000, lambda_g in 0.1f64..10.0) {
        let noise = NoiseSpec::new(1.0, 1.0).unwrap();
        let (ea, eb) = theory_bound_independent(lambda_g, 3, 3, n_samples, 0.05, &noise).unwrap();
        let (ea_n, eb_n) = theory_bound_independent(lambda_g, 3, 3, n_samples + 10, 0.05, &noise).unwrap();
        prop_assert!(ea_n < ea && eb_n < eb);
        let (ea_g, _) = theory_bound_independent(lambda_g * 1.5, 3, 3, n_samples, 0.05, &noise).unwrap();
        prop_assert!(ea_g < ea);
        let (ea_p, eb_p) = theory_bound_independent(lambda_g, 3, 4, n_samples, 0.05, &noise).unwrap();
        prop_assert!(ea_p > ea && eb_p > eb);
    }
}
