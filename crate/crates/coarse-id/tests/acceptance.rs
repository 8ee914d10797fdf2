//! End-to-end acceptance criteria at desk scale (n = p = 3, T = 6).
//!
//! One test runs every criterion and prints a pass/fail line for each. Set
//! `ACCEPTANCE_ONLY=1,5` to run a subset while iterating; skipped criteria
//! make the test fail so a partial run is never mistaken for a green one.

use coarse_id::config::{ExperimentConfig, MethodSpec};
use coarse_id::experiment::{run_experiment, ExperimentResults};
use coarse_id_core::linalg::op_norm;
use coarse_id_core::lti::{dare_lqr, gramians, hinf_norm_lti, NoiseSpec, StateSpace};
use coarse_id_core::rng::stream;
use coarse_id_core::synthesis::{cl_synthesis, fir_synthesis, robustness_margin, GammaSearch};
use coarse_id_core::sysid::{
    data_dependent_bound, ls_estimate, ls_fit, simulate_rollouts, theory_bound_independent, ErrorSource, EstimateWithError,
    RegressionMatrices, SampleMode,
};
use coarse_id_core::systems::{laplacian_example, laplacian_example_cost, random_cost, random_stable_system};
use std::io::Write;
use std::time::Instant;

const SEED: u64 = 20_180_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        s[m / 2]
    } else if s[m / 2].is_infinite() {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}

fn unit_noise() -> NoiseSpec {
    NoiseSpec::new(1.0, 1.0).unwrap()
}

/// Zero radii: both programs reduce to LQR on the true system.
fn criterion_1() -> Outcome {
    let (mut worst_cl, mut worst_fir) = (0.0f64, 0.0f64);
    for i in 0..50 {
        let mut rng = stream(SEED, 100 + i);
        let sys = random_stable_system(&mut rng, 3, 3, 0.3, 0.9);
        let cost = random_cost(&mut rng, 3, 3);
        let j = dare_lqr(&sys, &cost).unwrap().j_per_sigma;
        let est = EstimateWithError::new(sys.a().clone(), sys.b().clone(), 0.0, 0.0, ErrorSource::Oracle).unwrap();
        let cl = cl_synthesis(&est, &cost, &GammaSearch::default()).unwrap();
        let fir = fir_synthesis(&est, &cost, 32, &GammaSearch::default()).unwrap();
        worst_cl = worst_cl.max((cl.robust_upper_bound - j).abs() / j);
        worst_fir = worst_fir.max((fir.robust_upper_bound - j).abs() / j);
    }
    outcome(
        worst_cl <= 1e-3 && worst_fir <= 1e-2,
        format!("worst relative gap: CL {worst_cl:.2e} (<= 1e-3), FIR32 {worst_fir:.2e} (<= 1e-2)"),
    )
}

/// Least-squares error decays like `N^(-1/2)`.
fn criterion_2() -> Outcome {
    let sys = laplacian_example();
    let grid = [20usize, 40, 80, 160, 320, 640];
    let mut pts = Vec::new();
    for &n in &grid {
        let errs: Vec<f64> = (0..50)
            .map(|t| {
                let data = simulate_rollouts(&sys, &unit_noise(), n, 6, SEED ^ ((n as u64) << 20) ^ t).unwrap();
                let (a, _) = ls_estimate(&data, SampleMode::Full).unwrap();
                op_norm(&(sys.a() - &a))
            })
            .collect();
        pts.push(((n as f64).ln(), median(&errs).ln()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    outcome((-0.7..=-0.3).contains(&slope), format!("log-log slope {slope:.3} in [-0.7, -0.3]"))
}

/// Coverage of the two analytic bounds for the last-sample estimator.
fn criterion_3() -> Outcome {
    let sys = laplacian_example();
    let noise = unit_noise();
    let (n_theory, n_data, delta) = (150usize, 100usize, 0.05);
    let lg = gramians(&sys, &noise, 6).unwrap().lambda_g;
    let (ea, eb) = theory_bound_independent(lg, 3, 3, n_theory, delta, &noise).unwrap();
    let (mut theory_ok, mut data_ok) = (0, 0);
    for t in 0..200 {
        let data = simulate_rollouts(&sys, &noise, n_theory, 6, SEED ^ 0x3000 ^ t).unwrap();
        let (a, b) = ls_estimate(&data, SampleMode::LastSample).unwrap();
        if op_norm(&(sys.a() - &a)) <= ea && op_norm(&(sys.b() - &b)) <= eb {
            theory_ok += 1;
        }
        let data = simulate_rollouts(&sys, &noise, n_data, 6, SEED ^ 0x4000 ^ t).unwrap();
        let reg = RegressionMatrices::from_data(&data, SampleMode::LastSample);
        let (a, b) = ls_fit(&reg).unwrap();
        let bd = data_dependent_bound(&reg, delta, 1.0).unwrap();
        if op_norm(&(sys.a() - &a)) <= bd.eps_a && op_norm(&(sys.b() - &b)) <= bd.eps_b {
            data_ok += 1;
        }
    }
    outcome(
        theory_ok >= 190 && data_ok >= 190,
        format!("coverage over 200 trials: theory {theory_ok}, data-dependent {data_ok} (each >= 190)"),
    )
}

/// Shared run on the example system: nominal, CL and CL with `γ = 0.999`,
/// bootstrap radii with `M = 200`, 100 trials per `N`.
fn shared_run() -> ExperimentResults {
    let methods = vec![MethodSpec::Nominal, MethodSpec::Cl { fixed_gamma: None }, MethodSpec::Cl { fixed_gamma: Some(0.999) }];
    let cfg = ExperimentConfig::laplacian(vec![40, 60, 80, 160], methods, 100, SEED, std::env::temp_dir());
    run_experiment(&cfg).unwrap()
}

fn criterion_4(res: &ExperimentResults) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [40usize, 60, 80, 160] {
        let rows: Vec<_> = res.estimation.iter().filter(|r| r.n_rollouts == n).collect();
        let ratio = median(&rows.iter().map(|r| r.eps_a / r.err_a).collect::<Vec<_>>());
        let cov = rows.iter().filter(|r| r.eps_a >= r.err_a && r.eps_b >= r.err_b).count() as f64 / rows.len() as f64;
        pass &= (1.0..=5.0).contains(&ratio) && cov >= 0.9 && rows.len() == 100;
        parts.push(format!("N={n}: ratio {ratio:.2}, coverage {cov:.2}"));
    }
    outcome(pass, format!("{} (ratio in [1, 5], coverage >= 0.90)", parts.join("; ")))
}

fn criterion_5(res: &ExperimentResults) -> Outcome {
    let robust: Vec<_> = res.rows.iter().filter(|r| r.method.starts_with("cl")).collect();
    let feasible: Vec<_> = robust.iter().filter(|r| r.status == "feasible").collect();
    let unstable = feasible.iter().filter(|r| r.stabilized != Some(true)).count();
    // A handful of truncated programs on top of the infinite-horizon ones.
    let cfg = ExperimentConfig::laplacian(
        vec![30, 80],
        vec![MethodSpec::Fir { horizon: 8, fixed_gamma: None }],
        10,
        SEED ^ 5,
        std::env::temp_dir(),
    );
    let fir = run_experiment(&cfg).unwrap();
    let fir_feasible: Vec<_> = fir.rows.iter().filter(|r| r.status == "feasible").collect();
    let fir_unstable = fir_feasible.iter().filter(|r| r.stabilized != Some(true)).count();
    let runs = robust.len() + fir.rows.len();
    let errors = res.errors.len() + fir.errors.len();
    outcome(
        unstable + fir_unstable == 0 && runs >= 200 && errors == 0,
        format!(
            "{runs} robust runs, {} feasible, {} unstabilized, {errors} errors",
            feasible.len() + fir_feasible.len(),
            unstable + fir_unstable
        ),
    )
}

fn criterion_6(res: &ExperimentResults) -> Outcome {
    let rows: Vec<_> = res.rows.iter().filter(|r| r.n_rollouts == 60 && r.method == "nominal").collect();
    let ok = rows.iter().filter(|r| r.stabilized == Some(true)).count();
    let freq = ok as f64 / rows.len() as f64;
    outcome(
        (0.5..=0.99).contains(&freq) && ok < rows.len(),
        format!("nominal stabilizes {ok}/{} at N=60 (frequency in [0.5, 0.99], at least one failure)", rows.len()),
    )
}

/// Suboptimality guarantee of the infinite-horizon program with exact radii,
/// on the scale of `J = ‖·‖_H₂`.
fn criterion_7() -> Outcome {
    let noise = unit_noise();
    let (mut accepted, mut tried, mut worst) = (0usize, 0u64, 0.0f64);
    let mut violations = 0;
    while accepted < 50 && tried < 400 {
        let mut rng = stream(SEED ^ 0x7000, tried);
        tried += 1;
        let sys = random_stable_system(&mut rng, 3, 3, 0.3, 0.8);
        let cost = random_cost(&mut rng, 3, 3);
        let data = simulate_rollouts(&sys, &noise, 400, 6, SEED ^ 0x7100 ^ tried).unwrap();
        let (a, b) = ls_estimate(&data, SampleMode::Full).unwrap();
        let est = EstimateWithError::oracle(&sys, a, b).unwrap();
        let lqr = dare_lqr(&sys, &cost).unwrap();
        let hinf = hinf_norm_lti(&StateSpace::resolvent(&sys.closed_loop(&lqr.k)).unwrap()).unwrap();
        let zeta = robustness_margin(est.eps_a, est.eps_b, &lqr.k, hinf).unwrap();
        if zeta >= 0.2 {
            continue;
        }
        accepted += 1;
        let r = cl_synthesis(&est, &cost, &GammaSearch::default()).unwrap();
        let ctrl = r.controller.expect("feasible for zeta < 1/5");
        let j = coarse_id_core::synthesis::controller_cost(&sys, &ctrl, &cost, 1.0).unwrap();
        let rel = (j / lqr.j_per_sigma).sqrt() - 1.0;
        worst = worst.max(rel / (5.0 * zeta));
        if rel > 5.0 * zeta {
            violations += 1;
        }
    }
    outcome(
        accepted == 50 && violations == 0,
        format!("{accepted} instances with zeta < 1/5 ({tried} drawn), {violations} violations, worst ratio to 5*zeta {worst:.3}"),
    )
}

/// Horizon insensitivity of the truncated program on the example system.
fn criterion_8() -> Outcome {
    let sys = laplacian_example();
    let cost = laplacian_example_cost();
    let est = EstimateWithError::new(sys.a().clone(), sys.b().clone(), 0.05, 0.05, ErrorSource::Oracle).unwrap();
    // The bound is flat near its minimizer; a coarser bracket keeps L = 64 affordable.
    let search = GammaSearch { tol: 1e-2, ..GammaSearch::default() };
    let b32 = fir_synthesis(&est, &cost, 32, &search).unwrap().robust_upper_bound;
    let b64 = fir_synthesis(&est, &cost, 64, &search).unwrap().robust_upper_bound;
    let rel = (b64 - b32).abs() / b32;
    outcome(rel <= 0.02, format!("bound L=32 {b32:.5}, L=64 {b64:.5}, relative change {rel:.4} (<= 0.02)"))
}

fn criterion_9(res: &ExperimentResults) -> Outcome {
    let at = |m: &str| median(&res.rows.iter().filter(|r| r.n_rollouts == 60 && r.method == m).map(|r| r.rel_subopt).collect::<Vec<_>>());
    let (fixed, opt) = (at("cl-fixed0.999"), at("cl"));
    outcome(fixed <= opt, format!("median suboptimality at N=60: fixed gamma {fixed:.3}, optimized {opt:.3}"))
}

/// The property suites of the core crate, run as a child cargo process.
fn criterion_10() -> Outcome {
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| String::from("cargo"));
    let out = std::process::Command::new(cargo)
        .args(["test", "-q", "-p", "coarse-id-core", "--tests"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .expect("spawning cargo");
    let text = String::from_utf8_lossy(&out.stdout);
    let passed: usize = text
        .lines()
        .filter_map(|l| l.strip_prefix("test result: ok. "))
        .filter_map(|l| l.split_whitespace().next()?.parse::<usize>().ok())
        .sum();
    outcome(out.status.success(), format!("core test suites: {passed} tests passed, exit {}", out.status))
}

#[test]
fn acceptance_criteria() {
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |k: u32| only.as_ref().map_or(true, |o| o.contains(&k));
    let mut results: Vec<(u32, Option<Outcome>, f64)> = Vec::new();
    let mut time = |k: u32, f: &dyn Fn() -> Outcome| {
        if wanted(k) {
            let t0 = Instant::now();
            let o = f();
            results.push((k, Some(o), t0.elapsed().as_secs_f64()));
        } else {
            results.push((k, None, 0.0));
        }
    };
    time(1, &criterion_1);
    time(2, &criterion_2);
    time(3, &criterion_3);
    let t0 = Instant::now();
    let shared = if [4, 5, 6, 9].iter().any(|&k| wanted(k)) { Some(shared_run()) } else { None };
    let shared_secs = t0.elapsed().as_secs_f64();
    let s = || shared.as_ref().unwrap();
    time(4, &|| criterion_4(s()));
    time(5, &|| criterion_5(s()));
    time(6, &|| criterion_6(s()));
    time(7, &criterion_7);
    time(8, &criterion_8);
    time(9, &|| criterion_9(s()));
    time(10, &criterion_10);

    // Written to the handle directly so the summary shows without --nocapture.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "shared experiment (criteria 4, 5, 6, 9): {shared_secs:.0}s");
    let mut all = true;
    for (k, o, secs) in &results {
        match o {
            Some(o) => {
                all &= o.pass;
                let _ = writeln!(out, "criterion {k:>2}: {}  {}  [{secs:.0}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            }
            None => {
                all = false;
                let _ = writeln!(out, "criterion {k:>2}: SKIP");
            }
        }
    }
    assert!(all, "acceptance criteria not all met");
}
