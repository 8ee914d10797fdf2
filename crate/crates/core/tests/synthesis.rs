use coarse_id_core::linalg::{op_norm, Mat};
use coarse_id_core::lti::{dare_lqr, lqr_cost_closed_loop, spectral_radius, CostWeights, LinearSystem, StateFeedbackGain};
use coarse_id_core::rng::{gaussian_matrix, stream};
use coarse_id_core::synthesis::*;
use coarse_id_core::sysid::{ErrorSource, EstimateWithError};
use coarse_id_core::systems::{laplacian_example, laplacian_example_cost, random_cost, random_stable_system};
use coarse_id_core::Error;
use nalgebra::DVector;
use proptest::prelude::*;

fn scalar(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

fn unit_cost() -> CostWeights {
    CostWeights::new(scalar(1.0), scalar(1.0)).unwrap()
}

fn estimate(sys: &LinearSystem, ea: f64, eb: f64) -> EstimateWithError {
    EstimateWithError::new(sys.a().clone(), sys.b().clone(), ea, eb, ErrorSource::Oracle).unwrap()
}

/// `Φx(k+1) = ÂΦx(k) + B̂Φu(k)` with the given `Φu`, so the pair is achievable
/// up to the slack.
fn achievable(sys: &LinearSystem, phi_u: Vec<Mat>) -> FirResponse {
    let n = sys.n();
    let mut phi_x = vec![Mat::identity(n, n)];
    for k in 0..phi_u.len() {
        phi_x.push(sys.a() * &phi_x[k] + sys.b() * &phi_u[k]);
    }
    let v = -phi_x.pop().unwrap();
    FirResponse::new(phi_x, phi_u, v).unwrap()
}

#[test]
fn halpha_examples() {
    let one = FirResponse::new(vec![scalar(1.0)], vec![scalar(0.0)], scalar(0.0)).unwrap();
    assert!((halpha(&one, 0.1, 0.0, 0.5).unwrap() - 0.1 * 2f64.sqrt()).abs() < 1e-6);
    assert_eq!(halpha(&one, 0.0, 0.0, 0.5).unwrap(), 0.0);
    assert!(halpha(&one, 0.1, 0.1, 1.0).is_err());
    assert!(halpha(&one, 0.1, 0.1, 0.0).is_err());

    let sys = laplacian_example();
    let mut rng = stream(3, 0);
    let resp = achievable(&sys, (0..4).map(|_| gaussian_matrix(&mut rng, 3, 3, 0.1)).collect());
    let h1 = halpha(&resp, 0.1, 0.0, 0.5).unwrap();
    let h3 = halpha(&resp, 0.3, 0.0, 0.5).unwrap();
    assert!((h3 - 3.0 * h1).abs() <= 1e-6 * h3);
}

#[test]
fn certify_scalar_examples() {
    let est = EstimateWithError::new(scalar(0.5), scalar(1.0), 0.2, 0.0, ErrorSource::Oracle).unwrap();
    let k = Controller::Static(StateFeedbackGain::zeros(1, 1));
    let c = certify_and_bound(&est, &k, &unit_cost(), 0.5, 1.0).unwrap();
    let h = 0.2 * 2f64.sqrt() * 2.0;
    assert!((c.h_value - h).abs() < 1e-6, "{}", c.h_value);
    assert!(c.certified);
    assert!((c.nominal_cost - 4.0 / 3.0).abs() < 1e-10);
    // Cost scale: J = σ²‖Φ‖²_H₂ and the norm bound ‖Φ‖_H₂/(1-h) is squared.
    assert!((c.cost_upper_bound - (4.0 / 3.0) / ((1.0 - h) * (1.0 - h))).abs() < 1e-5);

    let exact = EstimateWithError::new(scalar(0.5), scalar(1.0), 0.0, 0.0, ErrorSource::Oracle).unwrap();
    let c = certify_and_bound(&exact, &k, &unit_cost(), 0.5, 1.0).unwrap();
    assert_eq!(c.h_value, 0.0);
    assert!((c.cost_upper_bound - c.nominal_cost).abs() < 1e-12);

    let wide = EstimateWithError::new(scalar(0.5), scalar(1.0), 0.5, 0.0, ErrorSource::Oracle).unwrap();
    let c = certify_and_bound(&wide, &k, &unit_cost(), 0.5, 1.0).unwrap();
    assert!((c.h_value - 2f64.sqrt()).abs() < 1e-6);
    assert!(!c.certified);
    assert_eq!(c.cost_upper_bound, f64::INFINITY);

    let unstable = EstimateWithError::new(scalar(1.5), scalar(1.0), 0.1, 0.0, ErrorSource::Oracle).unwrap();
    assert!(matches!(certify_and_bound(&unstable, &k, &unit_cost(), 0.5, 1.0), Err(Error::NotStabilizing(_))));
}

#[test]
fn cl_matches_riccati_without_uncertainty() {
    let sys = laplacian_example();
    let cost = laplacian_example_cost();
    let lqr = dare_lqr(&sys, &cost).unwrap();
    let r = cl_synthesis(&estimate(&sys, 0.0, 0.0), &cost, &GammaSearch::default()).unwrap();
    assert!(r.is_feasible());
    assert!((r.nominal_cost - lqr.j_per_sigma).abs() <= 1e-3 * lqr.j_per_sigma);
    assert!(r.robust_upper_bound >= lqr.j_per_sigma * (1.0 - 1e-6));
}

#[test]
fn cl_is_infeasible_for_huge_radius() {
    let sys = laplacian_example();
    let r = cl_synthesis(&estimate(&sys, 2.0, 0.0), &laplacian_example_cost(), &GammaSearch::default()).unwrap();
    assert_eq!(r.status, SynthesisStatus::Infeasible);
    assert!(r.controller.is_none());
}

#[test]
fn fir_single_tap_example() {
    let est = EstimateWithError::new(scalar(0.0), scalar(1.0), 0.0, 0.0, ErrorSource::Oracle).unwrap();
    let r = fir_synthesis(&est, &unit_cost(), 1, &GammaSearch::fixed(0.5)).unwrap();
    assert!(r.is_feasible());
    let Some(Controller::Fir(resp)) = &r.controller else { panic!("expected a response") };
    assert!(resp.phi_u()[0][(0, 0)].abs() < 1e-6);
    assert!(resp.v()[(0, 0)].abs() < 1e-6);
    assert!((r.nominal_cost - 1.0).abs() < 1e-6);
    assert!((r.robust_upper_bound - 4.0).abs() < 1e-5);
    assert!(fir_synthesis(&est, &unit_cost(), 0, &GammaSearch::fixed(0.5)).is_err());
}

#[test]
fn fir_matches_riccati_on_damped_system() {
    let mut rng = stream(17, 0);
    let sys = random_stable_system(&mut rng, 3, 2, 0.5, 0.7);
    let cost = random_cost(&mut rng, 3, 2);
    let lqr = dare_lqr(&sys, &cost).unwrap();
    let r = fir_synthesis(&estimate(&sys, 0.0, 0.0), &cost, 32, &GammaSearch::default()).unwrap();
    assert!(r.is_feasible());
    assert!((r.nominal_cost - lqr.j_per_sigma).abs() <= 1e-2 * lqr.j_per_sigma);
}

#[test]
fn fir_robust_example_is_certified() {
    let sys = laplacian_example();
    let cost = laplacian_example_cost();
    let est = estimate(&sys, 0.05, 0.05);
    let r = fir_synthesis(&est, &cost, 8, &GammaSearch::default()).unwrap();
    assert!(r.is_feasible());
    assert!(r.h_value < 1.0 && r.gamma_star < 1.0);
    let c = certify_and_bound(&est, r.controller.as_ref().unwrap(), &cost, r.alpha, 1.0).unwrap();
    assert!(c.certified);
    assert!(c.cost_upper_bound <= r.robust_upper_bound * (1.0 + 1e-6));
}

#[test]
fn realization_of_length_one_is_static() {
    let resp = FirResponse::new(vec![Mat::identity(2, 2)], vec![Mat::from_row_slice(1, 2, &[0.3, -0.2])], Mat::zeros(2, 2)).unwrap();
    let ctrl = realize_controller(&resp).unwrap();
    assert_eq!(ctrl.state_dim(), 0);
    let mut st = ctrl.start();
    let x = DVector::from_vec(vec![1.0, 2.0]);
    assert!((st.step(&x)[0] - (0.3 - 0.4)).abs() < 1e-15);
}

#[test]
fn zero_input_response_gives_zero_inputs() {
    let sys = laplacian_example();
    let resp = achievable(&sys, vec![Mat::zeros(3, 3); 5]);
    let ctrl = realize_controller(&resp).unwrap();
    let mut rng = stream(1, 1);
    let noises: Vec<DVector<f64>> = (0..12).map(|_| gaussian_matrix(&mut rng, 3, 1, 1.0).column(0).into_owned()).collect();
    let (_, us) = ctrl.simulate(&sys, &noises).unwrap();
    assert!(us.iter().all(|u| u.iter().all(|&v| v == 0.0)));
}

#[test]
fn realize_rejects_non_identity_first_block() {
    assert!(FirResponse::new(vec![scalar(2.0)], vec![scalar(0.0)], scalar(0.0)).is_err());
}

#[test]
fn static_gain_response_round_trips() {
    let sys = laplacian_example();
    let lqr = dare_lqr(&sys, &laplacian_example_cost()).unwrap();
    let resp = FirResponse::from_static_gain(&sys, &lqr.k, 200).unwrap();
    let cost = controller_cost(&sys, &Controller::Fir(resp.clone()), &laplacian_example_cost(), 1.0).unwrap();
    assert!((cost - lqr.j_per_sigma).abs() <= 1e-6 * lqr.j_per_sigma);
    assert!((resp.h2_squared(&laplacian_example_cost()) - lqr.j_per_sigma).abs() <= 1e-3 * lqr.j_per_sigma);
}

/// Weighted impulse-response energy of the realized closed loop on the
/// nominal model over `steps` steps.
fn simulated_h2(sys: &LinearSystem, cost: &CostWeights, ctrl: &RealizedController, steps: usize) -> f64 {
    let n = sys.n();
    let mut total = 0.0;
    for i in 0..n {
        // An impulse at w_0 reaches the state at t = 1.
        let mut noises = vec![DVector::zeros(n); steps + 1];
        noises[0][i] = 1.0;
        let (xs, us) = ctrl.simulate(sys, &noises).unwrap();
        total += xs[1..=steps].iter().map(|x| (x.transpose() * cost.q() * x)[(0, 0)]).sum::<f64>();
        total += us[1..=steps].iter().map(|u| (u.transpose() * cost.r() * u)[(0, 0)]).sum::<f64>();
    }
    total
}

#[test]
fn realized_fir_reproduces_objective_over_five_horizons() {
    // On a damped model the optimal slack is small, so the tail past L is
    // negligible; the first L steps match the objective exactly.
    let mut rng = stream(17, 0);
    let sys = random_stable_system(&mut rng, 3, 2, 0.5, 0.7);
    let cost = random_cost(&mut rng, 3, 2);
    let l = 12;
    let r = fir_synthesis(&estimate(&sys, 0.02, 0.02), &cost, l, &GammaSearch::default()).unwrap();
    let Some(Controller::Fir(resp)) = &r.controller else { panic!("infeasible") };
    let ctrl = realize_controller(resp).unwrap();
    let obj = resp.h2_squared(&cost);
    assert!((simulated_h2(&sys, &cost, &ctrl, l) - obj).abs() <= 1e-9 * obj);
    let sim = simulated_h2(&sys, &cost, &ctrl, 5 * l);
    assert!((sim - obj).abs() <= 1e-2 * obj, "simulated {sim} vs objective {obj}");
}

#[test]
fn upper_bound_holds_on_true_system() {
    let truth = laplacian_example();
    let cost = laplacian_example_cost();
    let mut rng = stream(5, 0);
    for trial in 0..5 {
        let da = gaussian_matrix(&mut rng, 3, 3, 1.0);
        let db = gaussian_matrix(&mut rng, 3, 3, 1.0);
        let a_hat = truth.a() + &da * (0.02 / op_norm(&da));
        let b_hat = truth.b() + &db * (0.03 / op_norm(&db));
        let est = EstimateWithError::oracle(&truth, a_hat, b_hat).unwrap();
        let r = cl_synthesis(&est, &cost, &GammaSearch::default()).unwrap();
        assert!(r.is_feasible(), "trial {trial}");
        let j = controller_cost(&truth, r.controller.as_ref().unwrap(), &cost, 1.0).unwrap();
        assert!(j <= r.robust_upper_bound, "trial {trial}: {j} > {}", r.robust_upper_bound);
    }
}

#[test]
fn bound_is_monotone_in_radii() {
    let sys = laplacian_example();
    let cost = laplacian_example_cost();
    let grid = [0.0, 0.01, 0.02, 0.04];
    let mut prev_row: Option<Vec<f64>> = None;
    for &ea in &grid {
        let row: Vec<f64> = grid
            .iter()
            .map(|&eb| cl_synthesis(&estimate(&sys, ea, eb), &cost, &GammaSearch::default()).unwrap().robust_upper_bound)
            .collect();
        assert!(row.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-3)), "{row:?}");
        if let Some(prev) = &prev_row {
            assert!(prev.iter().zip(&row).all(|(a, b)| *b >= a * (1.0 - 1e-3)), "{prev:?} {row:?}");
        }
        prev_row = Some(row);
    }
}

fn is_unimodal(values: &[f64], rel_tol: f64) -> bool {
    let finite: Vec<(usize, f64)> = values.iter().copied().enumerate().filter(|(_, v)| v.is_finite()).collect();
    let Some(&(imin, vmin)) = finite.iter().min_by(|a, b| a.1.total_cmp(&b.1)) else { return true };
    let slack = rel_tol * vmin.abs();
    // Infeasible points may only sit left of the feasible interval.
    let first = finite[0].0;
    if values[first..].iter().any(|v| !v.is_finite()) {
        return false;
    }
    values[first..=imin].windows(2).all(|w| w[1] <= w[0] + slack) && values[imin..].windows(2).all(|w| w[1] + slack >= w[0])
}

#[test]
fn inner_value_is_quasiconvex_in_gamma() {
    let sys = laplacian_example();
    let cost = laplacian_example_cost();
    let est = estimate(&sys, 0.05, 0.05);
    let gammas: Vec<f64> = (1..=20).map(|i| i as f64 / 21.0).collect();
    let cl: Vec<f64> = gammas.iter().map(|&g| cl_synthesis(&est, &cost, &GammaSearch::fixed(g)).unwrap().robust_upper_bound).collect();
    assert!(is_unimodal(&cl, 1e-6), "{cl:?}");
    let fir: Vec<f64> = gammas.iter().map(|&g| fir_synthesis(&est, &cost, 4, &GammaSearch::fixed(g)).unwrap().robust_upper_bound).collect();
    assert!(is_unimodal(&fir, 1e-6), "{fir:?}");
}

#[test]
fn suboptimality_calculator_examples() {
    let k = StateFeedbackGain::zeros(1, 1);
    assert!((suboptimality_calculator(0.1, 0.0, &k, 1.0, Horizon::Infinite).unwrap() - 0.5).abs() < 1e-12);
    assert!(matches!(suboptimality_calculator(0.25, 0.0, &k, 1.0, Horizon::Infinite), Err(Error::Margin { .. })));
    assert_eq!(suboptimality_calculator(0.0, 0.0, &k, 5.0, Horizon::Infinite).unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn realization_reproduces_convolution(seed in any::<u64>(), l in 1usize..7) {
        let mut rng = stream(seed, 0);
        let (n, p) = (1 + (seed % 3) as usize, 1 + ((seed / 3) % 3) as usize);
        let sys = random_stable_system(&mut rng, n, p, 0.1, 1.3);
        let resp = achievable(&sys, (0..l).map(|_| gaussian_matrix(&mut rng, p, n, 0.5)).collect());
        let ctrl = realize_controller(&resp).unwrap();
        let noises: Vec<DVector<f64>> = (0..l + 3).map(|_| gaussian_matrix(&mut rng, n, 1, 1.0).column(0).into_owned()).collect();
        let (xs, _) = ctrl.simulate(&sys, &noises).unwrap();
        for t in 0..=l {
            let mut conv = DVector::zeros(n);
            for k in 1..=t.min(l) {
                conv += &resp.phi_x()[k - 1] * &noises[t - k];
            }
            prop_assert!((&xs[t] - conv).norm() <= 1e-9 * (1.0 + xs[t].norm()), "t = {}", t);
        }
    }

    #[test]
    fn halpha_dominates_coefficients(seed in any::<u64>(), alpha in 0.05f64..0.95) {
        let mut rng = stream(seed, 1);
        let sys = random_stable_system(&mut rng, 2, 2, 0.1, 1.0);
        let resp = achievable(&sys, (0..3).map(|_| gaussian_matrix(&mut rng, 2, 2, 0.5)).collect());
        let (ea, eb) = (0.1, 0.2);
        let h = halpha(&resp, ea, eb, alpha).unwrap();
        for (px, pu) in resp.phi_x().iter().zip(resp.phi_u()) {
            let stacked = coarse_id_core::linalg::vstack(&[&(px * (ea / alpha.sqrt())), &(pu * (eb / (1.0 - alpha).sqrt()))]);
            prop_assert!(h >= op_norm(&stacked) * (1.0 - 1e-7));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn feasible_controllers_stabilize_the_truth(seed in any::<u64>()) {
        let mut rng = stream(seed, 2);
        let truth = random_stable_system(&mut rng, 2, 2, 0.3, 1.1);
        let cost = random_cost(&mut rng, 2, 2);
        let da = gaussian_matrix(&mut rng, 2, 2, 0.05);
        let db = gaussian_matrix(&mut rng, 2, 2, 0.05);
        let est = EstimateWithError::oracle(&truth, truth.a() + da, truth.b() + db).unwrap();
        let cl = cl_synthesis(&est, &cost, &GammaSearch::default()).unwrap();
        if let Some(Controller::Static(k)) = &cl.controller {
            prop_assert!(spectral_radius(&truth.closed_loop(k)).unwrap() < 1.0);
            prop_assert!(lqr_cost_closed_loop(&truth, k, &cost, 1.0).unwrap() <= cl.robust_upper_bound);
        }
        let fir = fir_synthesis(&est, &cost, 4, &GammaSearch::default()).unwrap();
        if let Some(Controller::Fir(resp)) = &fir.controller {
            let acl = realize_controller(resp).unwrap().closed_loop(&truth).unwrap();
            prop_assert!(spectral_radius(&acl).unwrap() < 1.0);
        }
    }
}
