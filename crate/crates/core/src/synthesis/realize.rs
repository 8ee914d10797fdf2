//! State-space realization of a truncated system response.
//!
//! The controller reconstructs the disturbance `δ_t = x_t - Σ_{k≥2} Φx(k)·δ_{t-k+1}`
//! and applies `u_t = Σ_k Φu(k)·δ_{t-k+1}`. Its state is the window
//! `ξ_t = [δ_{t-1}; …; δ_{t-L+1}]`.

use super::FirResponse;
use crate::linalg::{hstack, Mat};
use crate::lti::{dlyap, is_stable, CostWeights, LinearSystem};
use crate::prelude::*;
use crate::{Error, Result};
use nalgebra::DVector;

/// `u_t = K_x·x_t + K_ξ·ξ_t`, `ξ_{t+1} = E₁x_t + (S - E₁C_x)·ξ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedController {
    pub k_x: Mat,
    pub k_xi: Mat,
    /// `[Φx(2) … Φx(L)]`.
    pub c_x: Mat,
    n: usize,
    p: usize,
    horizon: usize,
}

pub fn realize_controller(resp: &FirResponse) -> Result<RealizedController> {
    let (n, p, l) = (resp.n(), resp.p(), resp.horizon());
    let tail_x: Vec<&Mat> = resp.phi_x()[1..].iter().collect();
    let tail_u: Vec<&Mat> = resp.phi_u()[1..].iter().collect();
    let c_x = if l > 1 { hstack(&tail_x) } else { Mat::zeros(n, 0) };
    let k_x = resp.phi_u()[0].clone();
    let k_xi = if l > 1 { hstack(&tail_u) - &k_x * &c_x } else { Mat::zeros(p, 0) };
    Ok(RealizedController { k_x, k_xi, c_x, n, p, horizon: l })
}

impl RealizedController {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Dimension of `ξ`.
    pub fn state_dim(&self) -> usize {
        self.n * (self.horizon - 1)
    }

    fn check(&self, sys: &LinearSystem) -> Result<()> {
        if sys.n() != self.n || sys.p() != self.p {
            return Err(Error::Dimension(format!(
                "controller is for n={}, p={} but the system has n={}, p={}",
                self.n,
                self.p,
                sys.n(),
                sys.p()
            )));
        }
        Ok(())
    }

    /// `ξ_{t+1} = E₁x_t + F·ξ_t`; returns `F = S - E₁C_x`.
    fn xi_transition(&self) -> Mat {
        let (n, m) = (self.n, self.state_dim());
        let mut f = Mat::zeros(m, m);
        if m == 0 {
            return f;
        }
        for i in n..m {
            f[(i, i - n)] = 1.0;
        }
        let mut top = f.view_mut((0, 0), (n, m));
        top -= &self.c_x;
        f
    }

    /// Closed-loop matrix on `[x; ξ]`.
    pub fn closed_loop(&self, sys: &LinearSystem) -> Result<Mat> {
        self.check(sys)?;
        let (n, m) = (self.n, self.state_dim());
        let mut acl = Mat::zeros(n + m, n + m);
        acl.view_mut((0, 0), (n, n)).copy_from(&(sys.a() + sys.b() * &self.k_x));
        if m > 0 {
            acl.view_mut((0, n), (n, m)).copy_from(&(sys.b() * &self.k_xi));
            acl.view_mut((n, 0), (n, n)).copy_from(&Mat::identity(n, n));
            acl.view_mut((n, n), (m, m)).copy_from(&self.xi_transition());
        }
        Ok(acl)
    }

    /// Average cost on `sys` with noise standard deviation `sigma_w`; `+∞`
    /// if the closed loop is unstable.
    pub fn cost(&self, sys: &LinearSystem, cost: &CostWeights, sigma_w: f64) -> Result<f64> {
        cost.check_dims(sys)?;
        let acl = self.closed_loop(sys)?;
        if !is_stable(&acl)? {
            return Ok(f64::INFINITY);
        }
        let (n, m) = (self.n, self.state_dim());
        let mut w = Mat::zeros(n + m, n + m);
        w.view_mut((0, 0), (n, n)).fill_with_identity();
        let x = dlyap(&acl, &w)?;
        let k = hstack(&[&self.k_x, &self.k_xi]);
        let mut weight = k.transpose() * cost.r() * &k;
        let mut qblock = weight.view_mut((0, 0), (n, n));
        qblock += cost.q();
        Ok(sigma_w * sigma_w * (weight * x).trace())
    }

    /// Controller with `ξ = 0`.
    pub fn start(&self) -> ControllerState<'_> {
        ControllerState { ctrl: self, f: self.xi_transition(), xi: DVector::zeros(self.state_dim()) }
    }

    /// Runs `x_{t+1} = A x_t + B u_t + w_t` from `x_0 = 0`, returning the
    /// states `x_0..x_T` and inputs `u_0..u_{T-1}`.
    pub fn simulate(&self, sys: &LinearSystem, noises: &[DVector<f64>]) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        self.check(sys)?;
        if let Some(w) = noises.iter().find(|w| w.len() != self.n) {
            return Err(Error::Dimension(format!("noise has length {} but n = {}", w.len(), self.n)));
        }
        let mut state = self.start();
        let mut xs = Vec::with_capacity(noises.len() + 1);
        let mut us = Vec::with_capacity(noises.len());
        let mut x = DVector::zeros(self.n);
        for w in noises {
            let u = state.step(&x);
            let next = sys.a() * &x + sys.b() * &u + w;
            xs.push(core::mem::replace(&mut x, next));
            us.push(u);
        }
        xs.push(x);
        Ok((xs, us))
    }
}

/// Running controller; `step` consumes the current state and returns the input.
#[derive(Debug, Clone)]
pub struct ControllerState<'a> {
    ctrl: &'a RealizedController,
    f: Mat,
    xi: DVector<f64>,
}

impl ControllerState<'_> {
    pub fn step(&mut self, x: &DVector<f64>) -> DVector<f64> {
        let c = self.ctrl;
        let u = &c.k_x * x + &c.k_xi * &self.xi;
        if c.state_dim() > 0 {
            let mut next = &self.f * &self.xi;
            let mut head = next.rows_mut(0, c.n);
            head += x;
            self.xi = next;
        }
        u
    }

    pub fn xi(&self) -> &DVector<f64> {
        &self.xi
    }
}
