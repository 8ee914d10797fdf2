//! Robust controller synthesis by system-level parameterization.
//!
//! Two convex programs are provided. [`cl_synthesis`] returns a static gain
//! from a common-Lyapunov relaxation. [`fir_synthesis`] returns a
//! finite-impulse-response system response realized as a dynamic
//! controller. Both minimize a bound on the worst-case cost over every
//! system within `(ε_A, ε_B)` of the estimate, searching the robustness
//! level `γ` by golden section.
//!
//! Costs in this module are per unit process-noise variance: multiply by
//! `σ_w²` for the cost of a particular noise level.

mod bounds;
mod certify;
mod cl;
mod fir;
mod realize;
mod search;

pub use bounds::{c_lqr, fir_horizon_bound, robustness_margin, sample_complexity_bound, suboptimality_calculator, Horizon};
pub use certify::{certify_and_bound, controller_cost, halpha, Certificate};
pub use cl::cl_synthesis;
pub use fir::fir_synthesis;
pub use realize::{realize_controller, ControllerState, RealizedController};
pub use search::GammaSearch;

use crate::linalg::{op_norm, Mat};
use crate::lti::{CostWeights, LinearSystem, StateFeedbackGain};
use crate::prelude::*;
use crate::{Error, Result};

/// Distance of a reported `α` from 0 and 1, used when a radius is zero and
/// `α` is immaterial.
const ALPHA_EDGE: f64 = 1e-9;

/// Truncated system response `Φx(1..L)`, `Φu(1..L)` and the slack `V` that
/// absorbs the truncated tail.
#[derive(Debug, Clone, PartialEq)]
pub struct FirResponse {
    phi_x: Vec<Mat>,
    phi_u: Vec<Mat>,
    v: Mat,
}

impl FirResponse {
    /// `phi_x[0]` must be the identity.
    pub fn new(phi_x: Vec<Mat>, phi_u: Vec<Mat>, v: Mat) -> Result<Self> {
        let l = phi_x.len();
        if l == 0 || phi_u.len() != l {
            return Err(Error::Dimension(format!("need L >= 1 blocks of each kind, got {} and {}", l, phi_u.len())));
        }
        let n = phi_x[0].nrows();
        let p = phi_u[0].nrows();
        for (k, (px, pu)) in phi_x.iter().zip(&phi_u).enumerate() {
            if px.shape() != (n, n) || pu.shape() != (p, n) {
                return Err(Error::Dimension(format!("response block {} has inconsistent shape", k + 1)));
            }
            if px.iter().chain(pu.iter()).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("system response"));
            }
        }
        if v.shape() != (n, n) || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Dimension(String::from("slack V must be a finite n x n matrix")));
        }
        let dev = (&phi_x[0] - Mat::identity(n, n)).abs().max();
        if dev > 1e-9 {
            return Err(Error::InvalidArgument(format!("Phi_x(1) must be the identity (deviation {dev:.3e})")));
        }
        Ok(Self { phi_x, phi_u, v })
    }

    /// First `L` coefficients of the response of `u = Kx` on `sys`, with
    /// `V = -(A+BK)^L` so that the truncated pair is exactly achievable.
    pub fn from_static_gain(sys: &LinearSystem, k: &StateFeedbackGain, horizon: usize) -> Result<Self> {
        k.check_dims(sys)?;
        if horizon == 0 {
            return Err(Error::InvalidArgument(String::from("horizon must be at least 1")));
        }
        let acl = sys.closed_loop(k);
        let n = sys.n();
        let mut phi_x = Vec::with_capacity(horizon);
        let mut cur = Mat::identity(n, n);
        for _ in 0..horizon {
            phi_x.push(cur.clone());
            cur = &acl * cur;
        }
        let phi_u = phi_x.iter().map(|px| k.matrix() * px).collect();
        Self::new(phi_x, phi_u, -cur)
    }

    pub fn horizon(&self) -> usize {
        self.phi_x.len()
    }

    pub fn n(&self) -> usize {
        self.phi_x[0].nrows()
    }

    pub fn p(&self) -> usize {
        self.phi_u[0].nrows()
    }

    /// `Φx(1), …, Φx(L)`.
    pub fn phi_x(&self) -> &[Mat] {
        &self.phi_x
    }

    /// `Φu(1), …, Φu(L)`.
    pub fn phi_u(&self) -> &[Mat] {
        &self.phi_u
    }

    pub fn v(&self) -> &Mat {
        &self.v
    }

    /// `Σ_k tr(Φx(k)ᵀQΦx(k)) + tr(Φu(k)ᵀRΦu(k))`, the squared weighted H₂ norm.
    pub fn h2_squared(&self, cost: &CostWeights) -> f64 {
        self.phi_x
            .iter()
            .zip(&self.phi_u)
            .map(|(px, pu)| (px.transpose() * cost.q() * px).trace() + (pu.transpose() * cost.r() * pu).trace())
            .sum()
    }

    pub fn v_norm(&self) -> f64 {
        op_norm(&self.v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    Static(StateFeedbackGain),
    Fir(FirResponse),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisStatus {
    Feasible,
    /// No `γ` in the search bracket admits a solution: the radii are too
    /// large for a robust guarantee.
    Infeasible,
}

/// Inner objective at one `γ`; `value` is `+∞` when infeasible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaEvaluation {
    pub gamma: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub status: SynthesisStatus,
    pub controller: Option<Controller>,
    pub gamma_star: f64,
    pub alpha: f64,
    /// Objective value: an upper bound on the cost of the controller on any
    /// system within the radii.
    pub robust_upper_bound: f64,
    /// Cost of the controller on the nominal model.
    pub nominal_cost: f64,
    /// Certified small-gain level, below 1 when feasible.
    pub h_value: f64,
    pub evaluations: Vec<GammaEvaluation>,
}

impl SynthesisResult {
    pub(crate) fn infeasible(evaluations: Vec<GammaEvaluation>) -> Self {
        Self {
            status: SynthesisStatus::Infeasible,
            controller: None,
            gamma_star: f64::NAN,
            alpha: f64::NAN,
            robust_upper_bound: f64::INFINITY,
            nominal_cost: f64::INFINITY,
            h_value: f64::NAN,
            evaluations,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == SynthesisStatus::Feasible
    }
}

/// Weights `(ε_A/√α, ε_B/√(1-α))`; a zero radius contributes zero whatever `α` is.
pub(crate) fn alpha_weights(eps_a: f64, eps_b: f64, alpha: f64) -> (f64, f64) {
    let wa = if eps_a == 0.0 { 0.0 } else { eps_a / alpha.sqrt() };
    let wb = if eps_b == 0.0 { 0.0 } else { eps_b / (1.0 - alpha).sqrt() };
    (wa, wb)
}

/// `α` from the split `a = ε_A²·s_x`, `b = ε_B²·s_u` of the robustness budget.
pub(crate) fn alpha_from_split(eps_a: f64, eps_b: f64, a: f64, b: f64) -> f64 {
    match (eps_a > 0.0, eps_b > 0.0) {
        (false, false) => 0.5,
        (true, false) => 1.0 - ALPHA_EDGE,
        (false, true) => ALPHA_EDGE,
        (true, true) => {
            let (a, b) = (a.max(0.0), b.max(0.0));
            if a + b > 0.0 {
                (a / (a + b)).clamp(ALPHA_EDGE, 1.0 - ALPHA_EDGE)
            } else {
                0.5
            }
        }
    }
}
