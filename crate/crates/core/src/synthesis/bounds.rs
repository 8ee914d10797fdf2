//! Closed-form suboptimality and horizon bounds.

use crate::linalg::op_norm;
use crate::lti::{DecayEnvelope, StateFeedbackGain};
use crate::prelude::*;
use crate::{Error, Result};

/// Which synthesis program a suboptimality bound refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Infinite,
    /// Truncated response of length `horizon`; `envelope` bounds
    /// `‖(A + BK⋆)^t‖ ≤ c·rho^t`.
    Fir {
        horizon: usize,
        envelope: DecayEnvelope,
    },
}

fn check_radii(eps_a: f64, eps_b: f64) -> Result<()> {
    if !(eps_a >= 0.0 && eps_b >= 0.0 && eps_a.is_finite() && eps_b.is_finite()) {
        return Err(Error::InvalidArgument(format!("radii must be finite and nonnegative, got ({eps_a}, {eps_b})")));
    }
    Ok(())
}

/// `ζ = (ε_A + ε_B‖K⋆‖₂)·‖R_{A+BK⋆}‖_H∞`.
pub fn robustness_margin(eps_a: f64, eps_b: f64, k_star: &StateFeedbackGain, resolvent_hinf: f64) -> Result<f64> {
    check_radii(eps_a, eps_b)?;
    if !(resolvent_hinf >= 0.0 && resolvent_hinf.is_finite()) {
        return Err(Error::InvalidArgument(format!("resolvent norm must be finite and nonnegative, got {resolvent_hinf}")));
    }
    Ok((eps_a + eps_b * op_norm(k_star.matrix())) * resolvent_hinf)
}

/// Bound on the relative cost suboptimality `(Ĵ - J⋆)/J⋆` of the robust
/// controller: `5ζ` for the infinite-horizon program, `10ζ` for the
/// truncated one. The preconditions of each bound are checked and a
/// violation is reported as [`Error::Margin`].
pub fn suboptimality_calculator(eps_a: f64, eps_b: f64, k_star: &StateFeedbackGain, resolvent_hinf: f64, which: Horizon) -> Result<f64> {
    let zeta = robustness_margin(eps_a, eps_b, k_star, resolvent_hinf)?;
    match which {
        Horizon::Infinite => {
            if zeta > 0.2 {
                return Err(Error::Margin { quantity: "zeta", value: zeta, limit: 0.2 });
            }
            Ok(5.0 * zeta)
        }
        Horizon::Fir { horizon, envelope } => {
            let DecayEnvelope { c, rho, .. } = envelope;
            let eps = eps_a + eps_b * op_norm(k_star.matrix());
            let limit = (1.0 - rho) / (10.0 * c);
            if eps > limit {
                return Err(Error::Margin { quantity: "eps_A + eps_B*|K*|", value: eps, limit });
            }
            if zeta > 0.1 {
                return Err(Error::Margin { quantity: "zeta", value: zeta, limit: 0.1 });
            }
            let needed = fir_horizon_bound(&envelope, zeta)?;
            if horizon < needed {
                return Err(Error::Margin { quantity: "horizon", value: horizon as f64, limit: needed as f64 });
            }
            Ok(10.0 * zeta)
        }
    }
}

/// Smallest truncation length `⌈4·ln(C/ζ)/(1-ρ)⌉` for the truncated
/// program's guarantee; zero once `ζ ≥ C`.
pub fn fir_horizon_bound(env: &DecayEnvelope, zeta: f64) -> Result<usize> {
    if !(zeta > 0.0) || !zeta.is_finite() {
        return Err(Error::InvalidArgument(format!("zeta must be positive and finite, got {zeta}")));
    }
    if !(env.c > 0.0 && env.rho > 0.0 && env.rho < 1.0) {
        return Err(Error::InvalidArgument(format!("envelope needs c > 0 and 0 < rho < 1, got c={}, rho={}", env.c, env.rho)));
    }
    if zeta >= env.c {
        return Ok(0);
    }
    Ok((4.0 * (env.c / zeta).ln() / (1.0 - env.rho)).ceil() as usize)
}

/// `C_LQR = C₀·σ_w·(1/√λ_G + ‖K⋆‖₂/σ_u)·‖R_{A+BK⋆}‖_H∞`.
pub fn c_lqr(c0: f64, sigma_w: f64, sigma_u: f64, lambda_g: f64, k_star: &StateFeedbackGain, resolvent_hinf: f64) -> Result<f64> {
    if !(lambda_g > 0.0 && sigma_u > 0.0 && sigma_w >= 0.0 && c0 > 0.0) {
        return Err(Error::InvalidArgument(String::from("need c0 > 0, sigma_u > 0, sigma_w >= 0 and lambda_G > 0")));
    }
    Ok(c0 * sigma_w * (1.0 / lambda_g.sqrt() + op_norm(k_star.matrix()) / sigma_u) * resolvent_hinf)
}

/// `C_LQR·√((n + p)·ln(1/δ)/N)`, the end-to-end relative suboptimality rate.
pub fn sample_complexity_bound(c_lqr: f64, n: usize, p: usize, delta: f64, n_rollouts: usize) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) || n_rollouts == 0 {
        return Err(Error::InvalidArgument(format!("need 0 < delta < 1 and N >= 1, got delta={delta}, N={n_rollouts}")));
    }
    Ok(c_lqr * ((n + p) as f64 * (1.0 / delta).ln() / n_rollouts as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    fn env(c: f64, rho: f64) -> DecayEnvelope {
        DecayEnvelope { c, rho, horizon: 100 }
    }

    #[test]
    fn horizon_bound_examples() {
        assert_eq!(fir_horizon_bound(&env(1.0, 0.5), 0.05).unwrap(), 24);
        assert_eq!(fir_horizon_bound(&env(1.0, 0.5), 1.0).unwrap(), 0);
        assert!(fir_horizon_bound(&env(1.0, 0.5), 0.0).is_err());
    }

    #[test]
    fn infinite_horizon_examples() {
        let k = StateFeedbackGain::zeros(1, 1);
        assert!((suboptimality_calculator(0.1, 0.0, &k, 1.0, Horizon::Infinite).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(suboptimality_calculator(0.25, 0.0, &k, 1.0, Horizon::Infinite), Err(Error::Margin { quantity: "zeta", .. })));
        assert_eq!(suboptimality_calculator(0.0, 0.0, &k, 3.0, Horizon::Infinite).unwrap(), 0.0);
    }

    #[test]
    fn fir_preconditions() {
        let k = StateFeedbackGain::new(Mat::from_element(1, 1, 2.0)).unwrap();
        let e = env(1.0, 0.5);
        // eps = 0.01 + 0.005·2 = 0.02 ≤ 0.05; ζ = 0.04.
        let need = fir_horizon_bound(&e, 0.04).unwrap();
        let b = suboptimality_calculator(0.01, 0.005, &k, 2.0, Horizon::Fir { horizon: need, envelope: e }).unwrap();
        assert!((b - 0.4).abs() < 1e-12);
        let short = suboptimality_calculator(0.01, 0.005, &k, 2.0, Horizon::Fir { horizon: need - 1, envelope: e });
        assert!(matches!(short, Err(Error::Margin { quantity: "horizon", .. })));
        let wide = suboptimality_calculator(0.06, 0.0, &k, 1.0, Horizon::Fir { horizon: 100, envelope: e });
        assert!(matches!(wide, Err(Error::Margin { .. })));
    }

    #[test]
    fn rate_scales_with_inverse_sqrt_n() {
        let a = sample_complexity_bound(2.0, 3, 3, 0.05, 100).unwrap();
        let b = sample_complexity_bound(2.0, 3, 3, 0.05, 400).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }
}
