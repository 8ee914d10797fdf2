//! Small-gain certificates and cost bounds for synthesized controllers.

use super::realize::realize_controller;
use super::{alpha_weights, Controller, FirResponse};
use crate::linalg::{vstack, Mat};
use crate::lti::{hinf_norm_lti, lqr_cost_closed_loop, spectral_radius, CostWeights, LinearSystem, StateSpace, STABILITY_MARGIN};
use crate::prelude::*;
use crate::sysid::EstimateWithError;
use crate::{Error, Result};

/// `‖[ε_A/√α·Φx; ε_B/√(1-α)·Φu]‖_H∞` of a truncated response, evaluated on
/// its shift-register realization.
pub fn halpha(resp: &FirResponse, eps_a: f64, eps_b: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(eps_a >= 0.0 && eps_b >= 0.0) {
        return Err(Error::InvalidArgument(String::from("radii must be nonnegative")));
    }
    let (wa, wb) = alpha_weights(eps_a, eps_b, alpha);
    if wa == 0.0 && wb == 0.0 {
        return Ok(0.0);
    }
    let (n, p, l) = (resp.n(), resp.p(), resp.horizon());
    let dim = n * l;
    // State holds the last L inputs; output k-th coefficient reads slot k.
    let mut a = Mat::zeros(dim, dim);
    for k in 1..l {
        for i in 0..n {
            a[(k * n + i, (k - 1) * n + i)] = 1.0;
        }
    }
    let mut b = Mat::zeros(dim, n);
    b.view_mut((0, 0), (n, n)).copy_from(&Mat::identity(n, n));
    let mut c = Mat::zeros(n + p, dim);
    for k in 0..l {
        c.view_mut((0, k * n), (n, n)).copy_from(&(&resp.phi_x()[k] * wa));
        c.view_mut((n, k * n), (p, n)).copy_from(&(&resp.phi_u()[k] * wb));
    }
    let ss = StateSpace::new(a, b, c, Mat::zeros(n + p, n))?;
    hinf_norm_lti(&ss)
}

/// Same quantity for a static gain, whose response is `[I; K]·(zI - A - BK)⁻¹`.
fn static_h(sys: &LinearSystem, k: &Mat, eps_a: f64, eps_b: f64, alpha: f64) -> Result<f64> {
    let (wa, wb) = alpha_weights(eps_a, eps_b, alpha);
    if wa == 0.0 && wb == 0.0 {
        return Ok(0.0);
    }
    let n = sys.n();
    let acl = sys.a() + sys.b() * k;
    let c = vstack(&[&(Mat::identity(n, n) * wa), &(k * wb)]);
    let d = Mat::zeros(c.nrows(), n);
    hinf_norm_lti(&StateSpace::new(acl, Mat::identity(n, n), c, d)?)
}

/// Average cost of `controller` on `sys` driven by noise of standard
/// deviation `sigma_w`; `+∞` if the closed loop is unstable.
pub fn controller_cost(sys: &LinearSystem, controller: &Controller, cost: &CostWeights, sigma_w: f64) -> Result<f64> {
    match controller {
        Controller::Static(k) => lqr_cost_closed_loop(sys, k, cost, sigma_w),
        Controller::Fir(resp) => realize_controller(resp)?.cost(sys, cost, sigma_w),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    /// `h_value < 1`: the controller stabilizes every system in the radii.
    pub certified: bool,
    pub h_value: f64,
    /// Cost on the nominal model.
    pub nominal_cost: f64,
    /// `σ_w²·‖Φ‖²_H₂ / (1 - h)²`, a bound on the cost on any system within
    /// the radii; `+∞` when not certified.
    pub cost_upper_bound: f64,
}

/// Small-gain test of `controller` against the radii of `est`.
///
/// For a static gain `h = ‖[ε_A/√α·I; ε_B/√(1-α)·K]·R_{Â+B̂K}‖_H∞`; for a
/// truncated response `h = H_α(Φx, Φu) + ‖V‖₂`.
pub fn certify_and_bound(
    est: &EstimateWithError,
    controller: &Controller,
    cost: &CostWeights,
    alpha: f64,
    sigma_w: f64,
) -> Result<Certificate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let sys = est.nominal();
    cost.check_dims(&sys)?;
    let (h_value, phi_h2) = match controller {
        Controller::Static(k) => {
            k.check_dims(&sys)?;
            let rho = spectral_radius(&sys.closed_loop(k))?;
            if rho >= STABILITY_MARGIN {
                return Err(Error::NotStabilizing(rho));
            }
            let h = static_h(&sys, k.matrix(), est.eps_a, est.eps_b, alpha)?;
            (h, lqr_cost_closed_loop(&sys, k, cost, 1.0)?)
        }
        Controller::Fir(resp) => {
            if resp.n() != sys.n() || resp.p() != sys.p() {
                return Err(Error::Dimension(String::from("response does not match the model dimensions")));
            }
            let rho = spectral_radius(&realize_controller(resp)?.closed_loop(&sys)?)?;
            if rho >= STABILITY_MARGIN {
                return Err(Error::NotStabilizing(rho));
            }
            let h = halpha(resp, est.eps_a, est.eps_b, alpha)? + resp.v_norm();
            (h, resp.h2_squared(cost))
        }
    };
    let nominal_cost = controller_cost(&sys, controller, cost, sigma_w)?;
    let certified = h_value < 1.0;
    let cost_upper_bound = if certified { sigma_w * sigma_w * phi_h2 / ((1.0 - h_value) * (1.0 - h_value)) } else { f64::INFINITY };
    Ok(Certificate { certified, h_value, nominal_cost, cost_upper_bound })
}
