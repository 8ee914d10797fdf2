//! Truncated (FIR) system-response synthesis.
//!
//! For fixed `γ` the decision variables are `Φu(1..L)`; `Φx` follows from
//! `Φx(1) = I`, `Φx(k+1) = ÂΦx(k) + B̂Φu(k)` and the tail is the slack
//! `V = -(ÂΦx(L) + B̂Φu(L))`. The program is
//!
//! ```text
//! minimize   t
//! subject to t ≥ ‖(Q½Φx(1..L), R½Φu(1..L))‖_F
//!            ‖[ε_A/√α·Φx; ε_B/√(1-α)·Φu]‖_H∞ ≤ γ_H
//!            ‖V‖₂ ≤ γ_V,   γ_H + γ_V ≤ γ
//! ```
//!
//! The H∞ constraint is imposed through the trace parameterization of
//! nonnegative matrix trigonometric polynomials: with `H̃ = [G₁ … G_L]`,
//! `G_k = [Φx(k); Φu(k)]`, it holds iff some `Y` satisfies
//!
//! ```text
//! [[Y, H̃ᵀ], [H̃, diag(s_x I, s_u I)]] ⪰ 0,   Σ_r Y_{r+k, r} = γ_H·δ_k·I,
//! ε_A²·s_x + ε_B²·s_u = γ_H,
//! ```
//!
//! where `α = ε_A²·s_x/γ_H`. This is jointly affine in `α`, so `α` needs no
//! search of its own. The bound `(t/(1-γ))²` is minimized over `γ`.

use super::certify::certify_and_bound;
use super::search::{minimize_gamma, solve_inner, GammaSearch};
use super::{alpha_from_split, Controller, FirResponse, SynthesisResult, SynthesisStatus};
use crate::linalg::{psd_sqrt, Mat};
use crate::lti::CostWeights;
use crate::prelude::*;
use crate::sdp::{AffineMatrix, ConicProgram, LinExpr, PsdVar, Var};
use crate::sysid::EstimateWithError;
use crate::{Error, Result};

struct FirProgram {
    prog: ConicProgram,
    phi_x: Vec<AffineMatrix>,
    phi_u: Vec<AffineMatrix>,
    v: AffineMatrix,
    t: Var,
    /// `(ε_A²·s_x, ε_B²·s_u)` as expressions.
    split: Option<(LinExpr, LinExpr)>,
}

fn build(est: &EstimateWithError, cost: &CostWeights, horizon: usize, gamma: f64) -> Result<FirProgram> {
    let (n, p, l) = (est.n(), est.p(), horizon);
    let (ea, eb) = (est.eps_a, est.eps_b);
    let mut prog = ConicProgram::new();

    let phi_u: Vec<AffineMatrix> = (0..l).map(|_| prog.free_matrix(p, n)).collect();
    let mut phi_x = Vec::with_capacity(l);
    phi_x.push(AffineMatrix::from_constant(&Mat::identity(n, n)));
    for k in 0..l {
        let next = phi_x[k].left_mul(&est.a_hat).plus(&phi_u[k].left_mul(&est.b_hat));
        if k + 1 < l {
            phi_x.push(next);
        } else {
            phi_x.push(next.scaled(-1.0));
        }
    }
    let v = phi_x.pop().expect("tail block");

    // Nominal H₂ norm as a second-order cone.
    let t = prog.free();
    let q_half = psd_sqrt(cost.q());
    let r_half = psd_sqrt(cost.r());
    let mut soc = vec![LinExpr::from(t)];
    for k in 0..l {
        for (m, w) in [(&phi_x[k], &q_half), (&phi_u[k], &r_half)] {
            let wm = m.left_mul(w);
            for j in 0..wm.cols() {
                for i in 0..wm.rows() {
                    soc.push(wm.get(i, j).clone());
                }
            }
        }
    }
    prog.add_soc(soc);

    // ‖V‖₂ ≤ γ_V.
    let gamma_v = prog.free();
    let mut gi = AffineMatrix::zeros(n, n);
    for i in 0..n {
        gi.set(i, i, LinExpr::from(gamma_v));
    }
    let vt = v.transpose();
    prog.add_psd(&AffineMatrix::blocks(&[vec![Some(&gi), Some(&v)], vec![Some(&vt), Some(&gi)]], &[n, n], &[n, n]))?;

    let mut budget = LinExpr::from(gamma_v);
    let mut split = None;
    if ea > 0.0 || eb > 0.0 {
        let gamma_h = prog.free();
        budget += &LinExpr::from(gamma_h);
        let (rx, ru) = (if ea > 0.0 { n } else { 0 }, if eb > 0.0 { p } else { 0 });
        let dim = n * l + rx + ru;
        let xh = prog.psd(dim);
        let off = n * l;
        // Lower-left block equals H̃ restricted to the weighted rows.
        for k in 0..l {
            for c in 0..n {
                for i in 0..rx {
                    prog.add_eq(xh.entry(off + i, k * n + c), phi_x[k].get(i, c).clone());
                }
                for i in 0..ru {
                    prog.add_eq(xh.entry(off + rx + i, k * n + c), phi_u[k].get(i, c).clone());
                }
            }
        }
        // Lower-right block is diag(s_x I, s_u I).
        for i in 0..rx + ru {
            for j in 0..i {
                prog.add_eq(xh.entry(off + i, off + j), LinExpr::zero());
            }
        }
        let tie = |prog: &mut ConicProgram, xh: &PsdVar, first: usize, len: usize| {
            for i in 1..len {
                prog.add_eq(xh.entry(off + first + i, off + first + i), xh.entry(off + first, off + first));
            }
        };
        tie(&mut prog, &xh, 0, rx);
        tie(&mut prog, &xh, rx, ru);
        // Block-trace conditions on Y.
        for k in 0..l {
            for i in 0..n {
                let cols = if k == 0 { 0..i + 1 } else { 0..n };
                for j in cols {
                    let mut e = LinExpr::zero();
                    for r in 0..l - k {
                        e += &xh.entry((r + k) * n + i, r * n + j);
                    }
                    let rhs = if k == 0 && i == j { LinExpr::from(gamma_h) } else { LinExpr::zero() };
                    prog.add_eq(e, rhs);
                }
            }
        }
        let sx = if rx > 0 { xh.entry(off, off).scaled(ea * ea) } else { LinExpr::zero() };
        let su = if ru > 0 { xh.entry(off + rx, off + rx).scaled(eb * eb) } else { LinExpr::zero() };
        prog.add_eq(sx.clone() + su.clone(), LinExpr::from(gamma_h));
        split = Some((sx, su));
    }
    prog.add_le(budget, LinExpr::constant(gamma));
    prog.minimize(t.into());
    Ok(FirProgram { prog, phi_x, phi_u, v, t, split })
}

struct FirPoint {
    resp: FirResponse,
    alpha: f64,
    h_value: f64,
    nominal_cost: f64,
}

/// Robust truncated system response of length `horizon`, searching `γ` by
/// golden section. Costs are per unit noise variance.
pub fn fir_synthesis(est: &EstimateWithError, cost: &CostWeights, horizon: usize, search: &GammaSearch) -> Result<SynthesisResult> {
    if horizon == 0 {
        return Err(Error::InvalidArgument(String::from("horizon must be at least 1")));
    }
    let sys = est.nominal();
    cost.check_dims(&sys)?;
    let (ea, eb) = (est.eps_a, est.eps_b);
    if !(ea >= 0.0 && eb >= 0.0) {
        return Err(Error::InvalidArgument(format!("radii must be nonnegative, got ({ea}, {eb})")));
    }
    let outcome = minimize_gamma(search, |gamma| {
        let fp = build(est, cost, horizon, gamma)?;
        let Some(sol) = solve_inner(&fp.prog, gamma, &search.solver)? else {
            return Ok(None);
        };
        let phi_x = fp.phi_x.iter().map(|m| sol.matrix(m)).collect();
        let phi_u = fp.phi_u.iter().map(|m| sol.matrix(m)).collect();
        let resp = FirResponse::new(phi_x, phi_u, sol.matrix(&fp.v))?;
        let alpha = match &fp.split {
            Some((sx, su)) => alpha_from_split(ea, eb, sol.value(sx), sol.value(su)),
            None => alpha_from_split(ea, eb, 0.0, 0.0),
        };
        let controller = Controller::Fir(resp);
        let cert = match certify_and_bound(est, &controller, cost, alpha, 1.0) {
            Ok(c) => c,
            Err(Error::NotStabilizing(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        if !cert.certified {
            return Ok(None);
        }
        let t = sol.var(fp.t);
        let value = (t / (1.0 - gamma)) * (t / (1.0 - gamma));
        let Controller::Fir(resp) = controller else { unreachable!() };
        Ok(Some((value, FirPoint { resp, alpha, h_value: cert.h_value, nominal_cost: cert.nominal_cost })))
    })?;
    Ok(match outcome.best {
        None => SynthesisResult::infeasible(outcome.evaluations),
        Some((gamma, value, pt)) => SynthesisResult {
            status: SynthesisStatus::Feasible,
            controller: Some(Controller::Fir(pt.resp)),
            gamma_star: gamma,
            alpha: pt.alpha,
            robust_upper_bound: value,
            nominal_cost: pt.nominal_cost,
            h_value: pt.h_value,
            evaluations: outcome.evaluations,
        },
    })
}
