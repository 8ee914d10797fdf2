//! Parametric bootstrap for the error radii `ε_A`, `ε_B`.

use crate::linalg::{op_norm, Mat};
use crate::lti::{LinearSystem, NoiseSpec};
use crate::prelude::*;
use crate::rng::mix;
use crate::sysid::{estimate_noise, ls_fit, simulate_one, RegressionMatrices, RolloutData, SampleMode};
use crate::{Error, Result};

/// Extra attempts for a trial whose synthetic design is rank-deficient.
pub const MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    /// Number of synthetic trials `M`.
    pub trials: usize,
    /// The radii are the `100(1-δ)`-th percentiles.
    pub delta: f64,
    pub seed: u64,
    pub noise: NoiseSpec,
    /// Replace `noise` by residual-based estimates from the data.
    pub plug_in_noise: bool,
}

impl BootstrapConfig {
    pub fn new(trials: usize, delta: f64, seed: u64, noise: NoiseSpec) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InvalidArgument(String::from("bootstrap needs at least one trial")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { trials, delta, seed, noise, plug_in_noise: false })
    }
}

/// `‖Â - Ã‖₂` and `‖B̂ - B̃‖₂` for one synthetic trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapTrial {
    pub trial: usize,
    pub eps_a: f64,
    pub eps_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    pub eps_a: f64,
    pub eps_b: f64,
    pub trials: Vec<BootstrapTrial>,
}

/// 1-based nearest-rank index `⌈(1-δ)M⌉`.
pub fn nearest_rank_index(m: usize, delta: f64) -> usize {
    let raw = (1.0 - delta) * m as f64;
    // Guard against 0.95 * 2000 landing a hair above 1900.
    let idx = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
    idx.clamp(1, m)
}

/// Nearest-rank `100(1-δ)`-th percentile of `values`.
pub fn nearest_rank(values: &[f64], delta: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted[nearest_rank_index(sorted.len(), delta) - 1]
}

/// Re-simulates the data from `(Â, B̂)` with fresh inputs and noise, refits by
/// full-data least squares and reports percentiles of the deviations. Trial
/// `i` uses RNG stream `i`; a rank-deficient retry switches to a derived seed.
pub fn bootstrap_errors(data: &RolloutData, a_hat: &Mat, b_hat: &Mat, cfg: &BootstrapConfig) -> Result<BootstrapOutcome> {
    let nominal = LinearSystem::new(a_hat.clone(), b_hat.clone())?;
    if nominal.n() != data.n() || nominal.p() != data.p() {
        return Err(Error::Dimension(String::from("estimate does not match the data dimensions")));
    }
    if cfg.trials == 0 || !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(Error::InvalidArgument(String::from("bootstrap needs trials >= 1 and delta in (0, 1)")));
    }
    let noise =
        if cfg.plug_in_noise { estimate_noise(&RegressionMatrices::from_data(data, SampleMode::Full), a_hat, b_hat) } else { cfg.noise };
    let run = |i: usize| trial(data, &nominal, &noise, cfg.seed, i);
    #[cfg(feature = "parallel")]
    let trials: Vec<BootstrapTrial> = {
        use rayon::prelude::*;
        (0..cfg.trials).into_par_iter().map(run).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let trials: Vec<BootstrapTrial> = (0..cfg.trials).map(run).collect::<Result<Vec<_>>>()?;
    let ea: Vec<f64> = trials.iter().map(|t| t.eps_a).collect();
    let eb: Vec<f64> = trials.iter().map(|t| t.eps_b).collect();
    Ok(BootstrapOutcome { eps_a: nearest_rank(&ea, cfg.delta), eps_b: nearest_rank(&eb, cfg.delta), trials })
}

fn trial(data: &RolloutData, nominal: &LinearSystem, noise: &NoiseSpec, seed: u64, i: usize) -> Result<BootstrapTrial> {
    for attempt in 0..=MAX_RETRIES {
        let seed = if attempt == 0 { seed } else { mix(seed, attempt as u64) };
        let rollouts = data
            .rollouts()
            .iter()
            .enumerate()
            .map(|(l, r)| {
                let x0 = r.states.columns(0, 1).into_owned();
                // Streams are disjoint across (trial, rollout) pairs.
                let index = ((i as u64) << 32) | l as u64;
                simulate_one(nominal, noise, &x0, data.horizon(), seed, index)
            })
            .collect();
        let synthetic = RolloutData::new(data.n(), data.p(), data.horizon(), rollouts, seed, *noise)?;
        match ls_fit(&RegressionMatrices::from_data(&synthetic, SampleMode::Full)) {
            Ok((a_t, b_t)) => {
                return Ok(BootstrapTrial { trial: i, eps_a: op_norm(&(nominal.a() - a_t)), eps_b: op_norm(&(nominal.b() - b_t)) })
            }
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::BootstrapRank { trial: i, attempts: MAX_RETRIES + 1 })
}
