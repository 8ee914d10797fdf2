//! The estimate-then-synthesize protocol on a grid of rollout counts.

use crate::config::{EpsSource, ExperimentConfig, MethodSpec};
use crate::io::{fmt_f64, status_label, write_atomic};
use anyhow::{Context, Result};
use coarse_id_core::bootstrap::{bootstrap_errors, BootstrapConfig};
use coarse_id_core::linalg::op_norm;
use coarse_id_core::lti::{dare_lqr, gramians, lqr_cost_closed_loop, CostWeights, LinearSystem, NoiseSpec};
use coarse_id_core::rng::mix;
use coarse_id_core::synthesis::{cl_synthesis, controller_cost, fir_synthesis, GammaSearch};
use coarse_id_core::sysid::{
    data_dependent_bound, ls_estimate, ls_fit, simulate_rollouts, theory_bound_independent, ErrorSource, EstimateWithError,
    RegressionMatrices, RolloutData, SampleMode,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const RESULTS_FILE: &str = "results.csv";
pub const ESTIMATION_FILE: &str = "estimation.csv";

pub const RESULT_COLUMNS: [&str; 16] = [
    "run_id",
    "N",
    "T",
    "trial",
    "method",
    "eps_A_source",
    "eps_A",
    "eps_B",
    "status",
    "gamma",
    "alpha",
    "nominal_cost",
    "true_cost",
    "J_star",
    "rel_subopt",
    "stabilized",
];

/// One (N, trial, method) cell. Costs are at the configured noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    #[serde(rename = "N")]
    pub n_rollouts: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub trial: usize,
    pub method: String,
    #[serde(rename = "eps_A_source")]
    pub eps_source: String,
    #[serde(rename = "eps_A")]
    pub eps_a: f64,
    #[serde(rename = "eps_B")]
    pub eps_b: f64,
    /// `feasible`, `infeasible` or `error`.
    pub status: String,
    pub gamma: f64,
    pub alpha: f64,
    pub nominal_cost: f64,
    /// `inf` when the controller does not stabilize the true system, `nan`
    /// when there is no controller.
    pub true_cost: f64,
    #[serde(rename = "J_star")]
    pub j_star: f64,
    pub rel_subopt: f64,
    /// Empty when there is no controller.
    pub stabilized: Option<bool>,
}

/// Estimation errors and radii of one (N, trial) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationRow {
    pub run_id: String,
    #[serde(rename = "N")]
    pub n_rollouts: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub trial: usize,
    #[serde(rename = "err_A")]
    pub err_a: f64,
    #[serde(rename = "err_B")]
    pub err_b: f64,
    #[serde(rename = "eps_A_source")]
    pub eps_source: String,
    #[serde(rename = "eps_A")]
    pub eps_a: f64,
    #[serde(rename = "eps_B")]
    pub eps_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellError {
    pub n_rollouts: usize,
    pub trial: usize,
    pub method: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub estimation: Vec<EstimationRow>,
    pub errors: Vec<CellError>,
}

/// FNV-1a of the canonical config JSON: equal configs share a run id.
pub fn run_id(cfg: &ExperimentConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Seed of cell `(N, trial)`.
pub fn cell_seed(master: u64, n_rollouts: usize, trial: usize) -> u64 {
    mix(mix(master, n_rollouts as u64), trial as u64)
}

struct Context_<'a> {
    cfg: &'a ExperimentConfig,
    run_id: String,
    truth: LinearSystem,
    cost: CostWeights,
    noise: NoiseSpec,
    j_star: f64,
}

/// Runs every `(N, trial)` cell in parallel. Per-cell failures are recorded
/// as `error` rows and in `errors`; the run itself only fails on an invalid
/// configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let (truth, cost) = cfg.system.build()?;
    let noise = cfg.noise.spec()?;
    let sw2 = noise.sigma_w * noise.sigma_w;
    let j_star = dare_lqr(&truth, &cost).context("Riccati solution for the true system")?.j_per_sigma * sw2;
    let ctx = Context_ { cfg, run_id: run_id(cfg), truth, cost, noise, j_star };
    let cells: Vec<(usize, usize)> = cfg.rollouts.iter().flat_map(|&n| (0..cfg.trials).map(move |t| (n, t))).collect();
    let outputs: Vec<(Vec<ResultRow>, Option<EstimationRow>, Vec<CellError>)> =
        cells.par_iter().map(|&(n, trial)| run_cell(&ctx, n, trial)).collect();
    let mut res = ExperimentResults::default();
    for (rows, est, errs) in outputs {
        res.rows.extend(rows);
        res.estimation.extend(est);
        res.errors.extend(errs);
    }
    Ok(res)
}

/// Least-squares estimate of `data` with radii from `source`. The theory and
/// data-dependent bounds assume independent samples, so they pair with the
/// last-sample estimator; the others use every transition.
pub fn estimate_with_radii(
    data: &RolloutData,
    truth: &LinearSystem,
    source: EpsSource,
    delta: f64,
    bootstrap_trials: usize,
    seed: u64,
) -> Result<EstimateWithError> {
    let noise = data.noise;
    Ok(match source {
        EpsSource::Oracle => {
            let (a, b) = ls_estimate(data, SampleMode::Full)?;
            EstimateWithError::oracle(truth, a, b)?
        }
        EpsSource::Bootstrap => {
            let (a, b) = ls_estimate(data, SampleMode::Full)?;
            let out = bootstrap_errors(data, &a, &b, &BootstrapConfig::new(bootstrap_trials, delta, seed, noise)?)?;
            EstimateWithError::new(a, b, out.eps_a, out.eps_b, ErrorSource::Bootstrap)?
        }
        EpsSource::Theory => {
            let (a, b) = ls_estimate(data, SampleMode::LastSample)?;
            let lg = gramians(truth, &noise, data.horizon())?.lambda_g;
            let (ea, eb) = theory_bound_independent(lg, data.n(), data.p(), data.len(), delta, &noise)?;
            EstimateWithError::new(a, b, ea, eb, ErrorSource::TheoryIndependent)?
        }
        EpsSource::DataDependent => {
            let reg = RegressionMatrices::from_data(data, SampleMode::LastSample);
            let (a, b) = ls_fit(&reg)?;
            let bound = data_dependent_bound(&reg, delta, noise.sigma_w)?;
            anyhow::ensure!(bound.eps_a.is_finite() && bound.eps_b.is_finite(), "data-dependent bound is infinite: too few samples");
            EstimateWithError::new(a, b, bound.eps_a, bound.eps_b, ErrorSource::DataDependent)?
        }
    })
}

fn run_cell(ctx: &Context_<'_>, n_rollouts: usize, trial: usize) -> (Vec<ResultRow>, Option<EstimationRow>, Vec<CellError>) {
    let cfg = ctx.cfg;
    let seed = cell_seed(cfg.seed, n_rollouts, trial);
    let base = ResultRow {
        run_id: ctx.run_id.clone(),
        n_rollouts,
        horizon: cfg.horizon,
        trial,
        method: String::new(),
        eps_source: cfg.eps_source.label().to_string(),
        eps_a: f64::NAN,
        eps_b: f64::NAN,
        status: String::from("error"),
        gamma: f64::NAN,
        alpha: f64::NAN,
        nominal_cost: f64::NAN,
        true_cost: f64::NAN,
        j_star: ctx.j_star,
        rel_subopt: f64::NAN,
        stabilized: None,
    };
    let est = simulate_rollouts(&ctx.truth, &ctx.noise, n_rollouts, cfg.horizon, seed)
        .map_err(anyhow::Error::from)
        .and_then(|data| estimate_with_radii(&data, &ctx.truth, cfg.eps_source, cfg.bootstrap.delta, cfg.bootstrap.trials, mix(seed, 1)));
    let est = match est {
        Ok(e) => e,
        Err(e) => {
            let rows = cfg.methods.iter().map(|m| ResultRow { method: m.to_string(), ..base.clone() }).collect();
            let err = CellError { n_rollouts, trial, method: None, message: format!("{e:#}") };
            return (rows, None, vec![err]);
        }
    };
    let estimation = EstimationRow {
        run_id: ctx.run_id.clone(),
        n_rollouts,
        horizon: cfg.horizon,
        trial,
        err_a: op_norm(&(ctx.truth.a() - &est.a_hat)),
        err_b: op_norm(&(ctx.truth.b() - &est.b_hat)),
        eps_source: cfg.eps_source.label().to_string(),
        eps_a: est.eps_a,
        eps_b: est.eps_b,
    };
    let mut rows = Vec::with_capacity(cfg.methods.len());
    let mut errors = Vec::new();
    for m in &cfg.methods {
        let row = ResultRow { method: m.to_string(), eps_a: est.eps_a, eps_b: est.eps_b, ..base.clone() };
        match run_method(ctx, &est, *m, row.clone()) {
            Ok(r) => rows.push(r),
            Err(e) => {
                errors.push(CellError { n_rollouts, trial, method: Some(m.to_string()), message: format!("{e:#}") });
                rows.push(row);
            }
        }
    }
    (rows, Some(estimation), errors)
}

fn run_method(ctx: &Context_<'_>, est: &EstimateWithError, method: MethodSpec, mut row: ResultRow) -> Result<ResultRow> {
    let sw = ctx.noise.sigma_w;
    let sw2 = sw * sw;
    let controller = match method {
        MethodSpec::Nominal => {
            let lqr = dare_lqr(&est.nominal(), &ctx.cost)?;
            row.nominal_cost = lqr.j_per_sigma * sw2;
            row.true_cost = lqr_cost_closed_loop(&ctx.truth, &lqr.k, &ctx.cost, sw)?;
            row.status = String::from("feasible");
            None
        }
        MethodSpec::Cl { fixed_gamma } | MethodSpec::Fir { fixed_gamma, .. } => {
            let search = match fixed_gamma {
                Some(g) => GammaSearch::fixed(g),
                None => GammaSearch::default(),
            };
            let r = match method {
                MethodSpec::Fir { horizon, .. } => fir_synthesis(est, &ctx.cost, horizon, &search)?,
                _ => cl_synthesis(est, &ctx.cost, &search)?,
            };
            row.status = status_label(r.status).to_string();
            row.gamma = r.gamma_star;
            row.alpha = r.alpha;
            row.nominal_cost = r.nominal_cost * sw2;
            r.controller
        }
    };
    if let Some(c) = &controller {
        row.true_cost = controller_cost(&ctx.truth, c, &ctx.cost, sw)?;
    }
    if row.true_cost.is_nan() {
        return Ok(row);
    }
    row.stabilized = Some(row.true_cost.is_finite());
    row.rel_subopt = if row.true_cost.is_finite() { (row.true_cost - ctx.j_star) / ctx.j_star } else { f64::INFINITY };
    Ok(row)
}

fn result_record(r: &ResultRow) -> Vec<String> {
    vec![
        r.run_id.clone(),
        r.n_rollouts.to_string(),
        r.horizon.to_string(),
        r.trial.to_string(),
        r.method.clone(),
        r.eps_source.clone(),
        fmt_f64(r.eps_a),
        fmt_f64(r.eps_b),
        r.status.clone(),
        fmt_f64(r.gamma),
        fmt_f64(r.alpha),
        fmt_f64(r.nominal_cost),
        fmt_f64(r.true_cost),
        fmt_f64(r.j_star),
        fmt_f64(r.rel_subopt),
        r.stabilized.map_or(String::new(), |s| s.to_string()),
    ]
}

pub fn results_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        w.write_record(result_record(r))?;
    }
    Ok(w.into_inner()?)
}

pub fn estimation_csv(rows: &[EstimationRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["run_id", "N", "T", "trial", "err_A", "err_B", "eps_A_source", "eps_A", "eps_B"])?;
    for r in rows {
        w.write_record([
            r.run_id.clone(),
            r.n_rollouts.to_string(),
            r.horizon.to_string(),
            r.trial.to_string(),
            fmt_f64(r.err_a),
            fmt_f64(r.err_b),
            r.eps_source.clone(),
            fmt_f64(r.eps_a),
            fmt_f64(r.eps_b),
        ])?;
    }
    Ok(w.into_inner()?)
}

/// Writes `results.csv` and `estimation.csv` into `dir`; returns their paths.
pub fn write_results(dir: &Path, res: &ExperimentResults) -> Result<(PathBuf, PathBuf)> {
    let results = dir.join(RESULTS_FILE);
    let estimation = dir.join(ESTIMATION_FILE);
    write_atomic(&results, &results_csv(&res.rows)?)?;
    write_atomic(&estimation, &estimation_csv(&res.estimation)?)?;
    Ok((results, estimation))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    rd.deserialize().enumerate().map(|(i, r)| r.with_context(|| format!("{}: record {}", path.display(), i + 1))).collect()
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    read_csv(path)
}

pub fn read_estimation(path: &Path) -> Result<Vec<EstimationRow>> {
    read_csv(path)
}
