//! Rollout simulation, least-squares identification and error bounds.

use crate::linalg::{lambda_max, op_norm, sym, sym_eigenvalues, Mat};
use crate::lti::{LinearSystem, NoiseSpec};
use crate::prelude::*;
use crate::rng::{gaussian_matrix, stream};
use crate::{Error, Result};

/// One experiment of length `T` started at `x_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `n × (T+1)`, column `t` is `x_t`.
    pub states: Mat,
    /// `p × T`, column `t` is `u_t`.
    pub inputs: Mat,
    /// `n × T` process noise, when recorded.
    pub noises: Option<Mat>,
}

/// `N` independent rollouts of length `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutData {
    n: usize,
    p: usize,
    horizon: usize,
    rollouts: Vec<Rollout>,
    pub seed: u64,
    pub noise: NoiseSpec,
}

impl RolloutData {
    pub fn new(n: usize, p: usize, horizon: usize, rollouts: Vec<Rollout>, seed: u64, noise: NoiseSpec) -> Result<Self> {
        if horizon == 0 || rollouts.is_empty() {
            return Err(Error::InvalidArgument(String::from("need at least one rollout of length at least one")));
        }
        for (l, r) in rollouts.iter().enumerate() {
            let shapes_ok = r.states.shape() == (n, horizon + 1)
                && r.inputs.shape() == (p, horizon)
                && r.noises.as_ref().map_or(true, |w| w.shape() == (n, horizon));
            if !shapes_ok {
                return Err(Error::Dimension(format!("rollout {l} does not match n={n}, p={p}, T={horizon}")));
            }
            if r.states.column(0).iter().any(|&v| v != 0.0) {
                return Err(Error::InvalidArgument(format!("rollout {l} does not start at x_0 = 0")));
            }
            if !r.states.iter().chain(r.inputs.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite("rollout data"));
            }
        }
        Ok(Self { n, p, horizon, rollouts, seed, noise })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Rollout length `T`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of rollouts `N`.
    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn rollouts(&self) -> &[Rollout] {
        &self.rollouts
    }
}

/// Simulates one rollout from `x0` with its own RNG stream.
pub(crate) fn simulate_one(sys: &LinearSystem, noise: &NoiseSpec, x0: &Mat, horizon: usize, seed: u64, index: u64) -> Rollout {
    let (n, p) = (sys.n(), sys.p());
    let mut rng = stream(seed, index);
    let mut states = Mat::zeros(n, horizon + 1);
    let mut inputs = Mat::zeros(p, horizon);
    let mut noises = Mat::zeros(n, horizon);
    states.set_column(0, &x0.column(0));
    for t in 0..horizon {
        let u = gaussian_matrix(&mut rng, p, 1, noise.sigma_u);
        let w = gaussian_matrix(&mut rng, n, 1, noise.sigma_w);
        let next = sys.a() * states.column(t) + sys.b() * &u + &w;
        states.set_column(t + 1, &next.column(0));
        inputs.set_column(t, &u.column(0));
        noises.set_column(t, &w.column(0));
    }
    Rollout { states, inputs, noises: Some(noises) }
}

/// `N` rollouts of length `T` from `x_0 = 0` with Gaussian inputs and noise.
/// Rollout `ℓ` uses RNG stream `ℓ` of `seed`.
pub fn simulate_rollouts(sys: &LinearSystem, noise: &NoiseSpec, n_rollouts: usize, horizon: usize, seed: u64) -> Result<RolloutData> {
    if n_rollouts == 0 || horizon == 0 {
        return Err(Error::InvalidArgument(String::from("N and T must be at least 1")));
    }
    let x0 = Mat::zeros(sys.n(), 1);
    let one = |l: usize| simulate_one(sys, noise, &x0, horizon, seed, l as u64);
    #[cfg(feature = "parallel")]
    let rollouts: Vec<Rollout> = {
        use rayon::prelude::*;
        (0..n_rollouts).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rollouts: Vec<Rollout> = (0..n_rollouts).map(one).collect();
    RolloutData::new(sys.n(), sys.p(), horizon, rollouts, seed, *noise)
}

/// Which transitions enter the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Every transition of every rollout.
    Full,
    /// Only the final transition `(x_{T-1}, u_{T-1}) → x_T`, giving independent samples.
    LastSample,
}

/// Stacked regression `X_next ≈ Z Θ` with rows `z_t = [x_tᵀ u_tᵀ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionMatrices {
    pub z: Mat,
    pub x_next: Mat,
    pub mode: SampleMode,
}

impl RegressionMatrices {
    pub fn from_data(data: &RolloutData, mode: SampleMode) -> Self {
        let (n, p, t_len) = (data.n(), data.p(), data.horizon());
        let times: Vec<usize> = match mode {
            SampleMode::Full => (0..t_len).collect(),
            SampleMode::LastSample => vec![t_len - 1],
        };
        let rows = data.len() * times.len();
        let mut z = Mat::zeros(rows, n + p);
        let mut x_next = Mat::zeros(rows, n);
        let mut r = 0;
        for ro in data.rollouts() {
            for &t in &times {
                for i in 0..n {
                    z[(r, i)] = ro.states[(i, t)];
                    x_next[(r, i)] = ro.states[(i, t + 1)];
                }
                for j in 0..p {
                    z[(r, n + j)] = ro.inputs[(j, t)];
                }
                r += 1;
            }
        }
        Self { z, x_next, mode }
    }

    pub fn n(&self) -> usize {
        self.x_next.ncols()
    }

    pub fn p(&self) -> usize {
        self.z.ncols() - self.x_next.ncols()
    }

    pub fn rows(&self) -> usize {
        self.z.nrows()
    }
}

/// Relative singular-value threshold for the rank test.
pub const RANK_TOL: f64 = 1e-10;

/// Least-squares `(Â, B̂)` from a regression, via Householder QR and a rank
/// check on the triangular factor.
pub fn ls_fit(reg: &RegressionMatrices) -> Result<(Mat, Mat)> {
    let (n, cols) = (reg.n(), reg.z.ncols());
    let rows = reg.rows();
    if rows < cols {
        return Err(Error::RankDeficient { rank: rows, required: cols });
    }
    let qr = reg.z.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * smax && s > 0.0).count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, required: cols });
    }
    let mut qtx = reg.x_next.clone();
    qr.q_tr_mul(&mut qtx);
    let top = qtx.rows(0, cols).into_owned();
    let theta = r.solve_upper_triangular(&top).ok_or_else(|| Error::Numerical(String::from("singular triangular factor")))?;
    let a_hat = theta.rows(0, n).transpose();
    let b_hat = theta.rows(n, cols - n).transpose();
    Ok((a_hat, b_hat))
}

/// Least-squares estimate of `(A, B)` from rollouts.
pub fn ls_estimate(data: &RolloutData, mode: SampleMode) -> Result<(Mat, Mat)> {
    ls_fit(&RegressionMatrices::from_data(data, mode))
}

/// Where an error radius came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorSource {
    TheoryIndependent,
    DataDependent,
    Bootstrap,
    Oracle,
}

impl ErrorSource {
    pub fn label(self) -> &'static str {
        match self {
            ErrorSource::TheoryIndependent => "theory-independent",
            ErrorSource::DataDependent => "data-dependent",
            ErrorSource::Bootstrap => "bootstrap",
            ErrorSource::Oracle => "oracle",
        }
    }
}

/// Nominal model `(Â, B̂)` with radii `‖A - Â‖ ≤ ε_A`, `‖B - B̂‖ ≤ ε_B`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateWithError {
    pub a_hat: Mat,
    pub b_hat: Mat,
    pub eps_a: f64,
    pub eps_b: f64,
    pub source: ErrorSource,
}

impl EstimateWithError {
    pub fn new(a_hat: Mat, b_hat: Mat, eps_a: f64, eps_b: f64, source: ErrorSource) -> Result<Self> {
        LinearSystem::new(a_hat.clone(), b_hat.clone())?;
        for (v, name) in [(eps_a, "eps_A"), (eps_b, "eps_B")] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(Self { a_hat, b_hat, eps_a, eps_b, source })
    }

    /// Radii equal to the actual errors against a known system.
    pub fn oracle(truth: &LinearSystem, a_hat: Mat, b_hat: Mat) -> Result<Self> {
        let eps_a = op_norm(&(truth.a() - &a_hat));
        let eps_b = op_norm(&(truth.b() - &b_hat));
        Self::new(a_hat, b_hat, eps_a, eps_b, ErrorSource::Oracle)
    }

    pub fn nominal(&self) -> LinearSystem {
        LinearSystem::new(self.a_hat.clone(), self.b_hat.clone()).expect("validated at construction")
    }

    pub fn n(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn p(&self) -> usize {
        self.b_hat.ncols()
    }
}

/// Smallest `N` accepted by [`theory_bound_independent`]: `8(n+p) + 16·ln(4/δ)`.
pub fn theory_min_samples(n: usize, p: usize, delta: f64) -> f64 {
    8.0 * (n + p) as f64 + 16.0 * (4.0 / delta).ln()
}

/// High-probability radii for the last-sample estimator:
/// `ε_A = 16σ_w/√λ_G·√((n+2p)·ln(36/δ)/N)` and
/// `ε_B = 16σ_w/σ_u·√((n+2p)·ln(36/δ)/N)`.
pub fn theory_bound_independent(lambda_g: f64, n: usize, p: usize, n_samples: usize, delta: f64, noise: &NoiseSpec) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(lambda_g > 0.0) || !(noise.sigma_u > 0.0) {
        return Err(Error::InvalidArgument(String::from("lambda_G and sigma_u must be positive")));
    }
    let required = theory_min_samples(n, p, delta);
    if (n_samples as f64) < required {
        return Err(Error::TooFewSamples { got: n_samples, required });
    }
    let root = ((n + 2 * p) as f64 * (36.0 / delta).ln() / n_samples as f64).sqrt();
    let eps_a = 16.0 * noise.sigma_w / lambda_g.sqrt() * root;
    let eps_b = 16.0 * noise.sigma_w / noise.sigma_u * root;
    Ok((eps_a, eps_b))
}

/// Data-dependent confidence region for an estimate from independent samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DataDependentBound {
    /// `C(n,p,δ)·(Σ z zᵀ)⁻¹`, an upper bound on `[Δ_A Δ_B]ᵀ[Δ_A Δ_B]`.
    pub e_bound: Mat,
    pub eps_a: f64,
    pub eps_b: f64,
}

/// `C(n,p,δ) = σ_w²(√(n+p) + √n + √(2·ln(1/δ)))²`.
pub fn data_dependent_constant(n: usize, p: usize, delta: f64, sigma_w: f64) -> f64 {
    let s = ((n + p) as f64).sqrt() + (n as f64).sqrt() + (2.0 * (1.0 / delta).ln()).sqrt();
    sigma_w * sigma_w * s * s
}

/// Confidence region `C·(Σ z zᵀ)⁻¹`; the radii are square roots of the
/// largest eigenvalues of its `A` and `B` diagonal blocks. A singular Gram
/// matrix gives infinite radii.
pub fn data_dependent_bound(reg: &RegressionMatrices, delta: f64, sigma_w: f64) -> Result<DataDependentBound> {
    let (n, p) = (reg.n(), reg.p());
    if reg.rows() < n + p {
        return Err(Error::TooFewSamples { got: reg.rows(), required: (n + p) as f64 });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    let d = n + p;
    let c = data_dependent_constant(n, p, delta, sigma_w);
    if c == 0.0 {
        return Ok(DataDependentBound { e_bound: Mat::zeros(d, d), eps_a: 0.0, eps_b: 0.0 });
    }
    let gram = sym(&(reg.z.transpose() * &reg.z));
    let ev = sym_eigenvalues(&gram);
    let (lmin, lmax) = (ev[0], ev[d - 1]);
    if !(lmin > RANK_TOL * RANK_TOL * lmax) {
        return Ok(DataDependentBound { e_bound: Mat::from_element(d, d, f64::INFINITY), eps_a: f64::INFINITY, eps_b: f64::INFINITY });
    }
    let inv = gram.cholesky().ok_or(Error::NotPositiveDefinite("sample Gram matrix"))?.inverse();
    let e_bound = sym(&(inv * c));
    let eps_a = lambda_max(&e_bound.view((0, 0), (n, n)).into_owned()).max(0.0).sqrt();
    let eps_b = if p == 0 { 0.0 } else { lambda_max(&e_bound.view((n, n), (p, p)).into_owned()).max(0.0).sqrt() };
    Ok(DataDependentBound { e_bound, eps_a, eps_b })
}

/// Plug-in noise levels: `σ_w` from the least-squares residual variance and
/// `σ_u` from the recorded inputs.
pub fn estimate_noise(reg: &RegressionMatrices, a_hat: &Mat, b_hat: &Mat) -> NoiseSpec {
    let n = reg.n();
    let theta_t = crate::linalg::hstack(&[a_hat, b_hat]);
    let resid = &reg.x_next - &reg.z * theta_t.transpose();
    let dof = (reg.rows() as f64 - reg.z.ncols() as f64).max(1.0) * n as f64;
    let sigma_w = (resid.norm_squared() / dof).sqrt();
    let u = reg.z.columns(n, reg.p());
    let sigma_u = if u.is_empty() { 0.0 } else { (u.norm_squared() / u.len() as f64).sqrt() };
    NoiseSpec { sigma_u, sigma_w }
}
