use super::{dlyap, is_stable, CostWeights, LinearSystem, StateFeedbackGain};
use crate::linalg::{solve, spd_inverse, sym, Mat};
use crate::{Error, Result};

/// Stabilizing solution of the discrete algebraic Riccati equation.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    pub p: Mat,
    pub k: StateFeedbackGain,
    /// `tr(P)`, so the optimal average cost is `σ_w²·tr(P)`.
    pub j_per_sigma: f64,
}

const RESIDUAL_TOL: f64 = 1e-10;

/// Optimal infinite-horizon LQR gain with `u = Kx`,
/// `K = -(R + BᵀPB)⁻¹BᵀPA`.
pub fn dare_lqr(sys: &LinearSystem, cost: &CostWeights) -> Result<LqrSolution> {
    cost.check_dims(sys)?;
    let p = match doubling(sys, cost) {
        Some(p) => p,
        None => value_iteration(sys, cost)?,
    };
    let p = polish(sys, cost, p)?;
    let k = gain(sys, cost, &p)?;
    let acl = sys.closed_loop(&k);
    if !is_stable(&acl)? {
        return Err(Error::NotStabilizable("Riccati solution does not stabilize A + BK"));
    }
    let res = residual(sys, cost, &p)?;
    if res > 1e-8 * p.norm().max(1.0) {
        return Err(Error::NoConvergence("Riccati residual above 1e-8"));
    }
    let j_per_sigma = p.trace();
    Ok(LqrSolution { p, k, j_per_sigma })
}

fn gain(sys: &LinearSystem, cost: &CostWeights, p: &Mat) -> Result<StateFeedbackGain> {
    let (a, b) = (sys.a(), sys.b());
    let btp = b.transpose() * p;
    let s = cost.r() + &btp * b;
    let k = -solve(&sym(&s), &(&btp * a))?;
    StateFeedbackGain::new(k)
}

/// Frobenius norm of the Riccati residual.
pub(crate) fn residual(sys: &LinearSystem, cost: &CostWeights, p: &Mat) -> Result<f64> {
    let (a, b) = (sys.a(), sys.b());
    let atpb = a.transpose() * p * b;
    let s = cost.r() + b.transpose() * p * b;
    let rhs = cost.q() + a.transpose() * p * a - &atpb * solve(&sym(&s), &atpb.transpose())?;
    Ok((p - rhs).norm())
}

/// Structure-preserving doubling. Returns `None` when the iteration breaks
/// down so the caller can fall back to value iteration.
fn doubling(sys: &LinearSystem, cost: &CostWeights) -> Option<Mat> {
    let n = sys.n();
    let b = sys.b();
    let rinv = spd_inverse(cost.r(), "R").ok()?;
    let mut ak = sys.a().clone();
    let mut g = sym(&(b * rinv * b.transpose()));
    let mut h = cost.q().clone();
    let eye = Mat::identity(n, n);
    for _ in 0..100 {
        let w = &eye + &g * &h;
        let lu = w.lu();
        let w_a = lu.solve(&ak)?;
        let w_g = lu.solve(&g)?;
        let h_next = sym(&(&h + ak.transpose() * &h * &w_a));
        let g_next = sym(&(&g + &ak * w_g * ak.transpose()));
        let a_next = &ak * w_a;
        if !h_next.iter().all(|v| v.is_finite()) {
            return None;
        }
        let step = (&h_next - &h).norm();
        h = h_next;
        g = g_next;
        ak = a_next;
        if step <= RESIDUAL_TOL * 1e-4 * h.norm().max(1.0) {
            return Some(h);
        }
    }
    let res = residual(sys, cost, &h).ok()?;
    (res <= RESIDUAL_TOL * h.norm().max(1.0)).then_some(h)
}

fn value_iteration(sys: &LinearSystem, cost: &CostWeights) -> Result<Mat> {
    let (a, b) = (sys.a(), sys.b());
    let mut p = cost.q().clone();
    for _ in 0..200_000 {
        let atpb = a.transpose() * &p * b;
        let s = cost.r() + b.transpose() * &p * b;
        let next = sym(&(cost.q() + a.transpose() * &p * a - &atpb * solve(&sym(&s), &atpb.transpose())?));
        if !next.iter().all(|v| v.is_finite()) || next.norm() > 1e150 {
            return Err(Error::NotStabilizable("Riccati iterates diverge"));
        }
        let step = (&next - &p).norm();
        p = next;
        if step <= 1e-13 * p.norm().max(1.0) {
            return Ok(p);
        }
    }
    Err(Error::NoConvergence("Riccati value iteration hit its cap"))
}

/// A few Newton (Hewer) steps from a stabilizing gain.
fn polish(sys: &LinearSystem, cost: &CostWeights, mut p: Mat) -> Result<Mat> {
    let mut best = residual(sys, cost, &p)?;
    for _ in 0..3 {
        let k = gain(sys, cost, &p)?;
        let acl = sys.closed_loop(&k);
        if !is_stable(&acl)? {
            break;
        }
        let km = k.matrix();
        let w = cost.q() + km.transpose() * cost.r() * km;
        let Ok(next) = dlyap(&acl.transpose(), &w) else { break };
        let res = residual(sys, cost, &next)?;
        if res < best {
            best = res;
            p = next;
        } else {
            break;
        }
    }
    Ok(p)
}
