//! Static-gain synthesis by a common-Lyapunov relaxation.
//!
//! For fixed `γ` the program is, with `K = ZX⁻¹`,
//!
//! ```text
//! minimize   tr(Q W₁₁) + tr(R W₂₂)
//! subject to [[X, Xᵀ Zᵀ], [[X; Z], W]] ⪰ 0
//!            [[X - I,        ÂX + B̂Z, 0,      0          ],
//!             [(ÂX + B̂Z)ᵀ,  X,       ε_A X,  ε_B Zᵀ     ],
//!             [0,            ε_A X,   αγ²I,   0          ],
//!             [0,            ε_B Z,   0,      (1-α)γ²I   ]] ⪰ 0
//! ```
//!
//! and the reported bound is the optimal value divided by `(1 - γ)²`.

use super::certify::certify_and_bound;
use super::search::{minimize_gamma, solve_inner, GammaSearch};
use super::{Controller, SynthesisResult, SynthesisStatus, ALPHA_EDGE};
use crate::linalg::{lambda_min, solve, Mat};
use crate::lti::{CostWeights, StateFeedbackGain};
use crate::prelude::*;
use crate::sdp::{AffineMatrix, ConicProgram, LinExpr, Var};
use crate::sysid::EstimateWithError;
use crate::{Error, Result};

/// Smallest eigenvalue of `X` for which `K = ZX⁻¹` is extracted.
const X_MIN_EIG: f64 = 1e-8;

struct ClProgram {
    prog: ConicProgram,
    x: AffineMatrix,
    z: AffineMatrix,
    alpha: Option<Var>,
}

fn build(est: &EstimateWithError, cost: &CostWeights, gamma: f64) -> Result<ClProgram> {
    let (n, p) = (est.n(), est.p());
    let (ea, eb) = (est.eps_a, est.eps_b);
    let mut prog = ConicProgram::new();
    let x = prog.free_symmetric(n);
    let z = prog.free_matrix(p, n);
    let w = prog.free_symmetric(n + p);
    let alpha = (ea > 0.0 || eb > 0.0).then(|| prog.free());

    // W ⪰ [X; Z] X⁻¹ [X; Z]ᵀ.
    let xz = AffineMatrix::blocks(&[vec![Some(&x)], vec![Some(&z)]], &[n, p], &[n]);
    let xzt = xz.transpose();
    prog.add_psd(&AffineMatrix::blocks(&[vec![Some(&x), Some(&xzt)], vec![Some(&xz), Some(&w)]], &[n, n + p], &[n, n + p]))?;

    let eye = AffineMatrix::from_constant(&Mat::identity(n, n));
    let x_minus_i = x.plus(&eye.scaled(-1.0));
    let ax_bz = x.left_mul(&est.a_hat).plus(&z.left_mul(&est.b_hat));
    let ax_bz_t = ax_bz.transpose();
    let scaled_identity = |dim: usize, coef: LinExpr| {
        let mut m = AffineMatrix::zeros(dim, dim);
        for i in 0..dim {
            m.set(i, i, coef.clone());
        }
        m
    };
    let g2 = gamma * gamma;
    let ea_x = x.scaled(ea);
    let eb_z = z.scaled(eb);
    let eb_zt = eb_z.transpose();
    let (da, db) = match alpha {
        Some(a) => (scaled_identity(n, LinExpr::term(a, g2)), scaled_identity(p, LinExpr::constant(g2) - LinExpr::term(a, g2))),
        None => (AffineMatrix::zeros(n, n), AffineMatrix::zeros(p, p)),
    };
    let mut grid = vec![vec![Some(&x_minus_i), Some(&ax_bz)], vec![Some(&ax_bz_t), Some(&x)]];
    let mut sizes = vec![n, n];
    if ea > 0.0 {
        grid[0].push(None);
        grid[1].push(Some(&ea_x));
        grid.push(vec![None, Some(&ea_x), Some(&da)]);
        sizes.push(n);
    }
    if eb > 0.0 {
        grid[0].push(None);
        grid[1].push(Some(&eb_zt));
        for row in grid.iter_mut().skip(2) {
            row.push(None);
        }
        let mut last = vec![None, Some(&eb_z)];
        if ea > 0.0 {
            last.push(None);
        }
        last.push(Some(&db));
        grid.push(last);
        sizes.push(p);
    }
    prog.add_psd(&AffineMatrix::blocks(&grid, &sizes, &sizes))?;
    if let (Some(a), true) = (alpha, ea == 0.0 || eb == 0.0) {
        prog.add_ge(a.into(), LinExpr::zero());
        prog.add_le(a.into(), LinExpr::constant(1.0));
    }

    let mut obj = LinExpr::zero();
    for i in 0..n {
        for j in 0..n {
            obj.add_scaled(w.get(j, i), cost.q()[(i, j)]);
        }
    }
    for i in 0..p {
        for j in 0..p {
            obj.add_scaled(w.get(n + j, n + i), cost.r()[(i, j)]);
        }
    }
    prog.minimize(obj);
    Ok(ClProgram { prog, x, z, alpha })
}

struct ClPoint {
    k: StateFeedbackGain,
    alpha: f64,
    h_value: f64,
    nominal_cost: f64,
}

/// Robust static gain from the common-Lyapunov program, searching `γ` by
/// golden section. Costs are per unit noise variance.
pub fn cl_synthesis(est: &EstimateWithError, cost: &CostWeights, search: &GammaSearch) -> Result<SynthesisResult> {
    let sys = est.nominal();
    cost.check_dims(&sys)?;
    let (ea, eb) = (est.eps_a, est.eps_b);
    if !(ea >= 0.0 && eb >= 0.0) {
        return Err(Error::InvalidArgument(format!("radii must be nonnegative, got ({ea}, {eb})")));
    }
    let outcome = minimize_gamma(search, |gamma| {
        let cl = build(est, cost, gamma)?;
        let Some(sol) = solve_inner(&cl.prog, gamma, &search.solver)? else {
            return Ok(None);
        };
        let xm = sol.matrix(&cl.x);
        let lmin = lambda_min(&xm);
        if lmin <= X_MIN_EIG {
            return Err(Error::Solver { gamma, reason: format!("lambda_min(X) = {lmin:.3e} is too small to invert") });
        }
        let zm = sol.matrix(&cl.z);
        let k = StateFeedbackGain::new(solve(&xm.transpose(), &zm.transpose())?.transpose())?;
        let alpha = match (ea > 0.0, eb > 0.0) {
            (false, false) => 0.5,
            (true, false) => 1.0 - ALPHA_EDGE,
            (false, true) => ALPHA_EDGE,
            (true, true) => sol.var(cl.alpha.expect("alpha is declared")).clamp(ALPHA_EDGE, 1.0 - ALPHA_EDGE),
        };
        let cert = match certify_and_bound(est, &Controller::Static(k.clone()), cost, alpha, 1.0) {
            Ok(c) => c,
            Err(Error::NotStabilizing(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        if !cert.certified {
            return Ok(None);
        }
        let value = sol.objective / ((1.0 - gamma) * (1.0 - gamma));
        Ok(Some((value, ClPoint { k, alpha, h_value: cert.h_value, nominal_cost: cert.nominal_cost })))
    })?;
    Ok(match outcome.best {
        None => SynthesisResult::infeasible(outcome.evaluations),
        Some((gamma, value, pt)) => SynthesisResult {
            status: SynthesisStatus::Feasible,
            controller: Some(Controller::Static(pt.k)),
            gamma_star: gamma,
            alpha: pt.alpha,
            robust_upper_bound: value,
            nominal_cost: pt.nominal_cost,
            h_value: pt.h_value,
            evaluations: outcome.evaluations,
        },
    })
}
