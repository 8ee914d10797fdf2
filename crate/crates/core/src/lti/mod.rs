//! Linear time-invariant system numerics: Lyapunov and Riccati solvers,
//! closed-loop LQR cost, H∞ norms, Gramians and decay envelopes.

mod hinf;
mod riccati;

pub use hinf::{hinf_norm_lti, StateSpace};
pub use riccati::{dare_lqr, LqrSolution};

use crate::linalg::{eigenvalues, ensure_finite, ensure_square, is_symmetric, lambda_min, op_norm, sym, Mat};
use crate::prelude::*;
use crate::{Error, Result};

/// Spectral radius strictly below this counts as stable.
pub const STABILITY_MARGIN: f64 = 1.0 - 1e-8;

/// `x_{t+1} = A x_t + B u_t + w_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: Mat,
    b: Mat,
}

impl LinearSystem {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        let n = ensure_square(&a)?;
        if b.nrows() != n {
            return Err(Error::Dimension(format!("A is {n}x{n} but B has {} rows", b.nrows())));
        }
        ensure_finite(&a, "A")?;
        ensure_finite(&b, "B")?;
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    /// `A + B K`.
    pub fn closed_loop(&self, k: &StateFeedbackGain) -> Mat {
        &self.a + &self.b * k.matrix()
    }
}

/// Quadratic stage cost `xᵀQx + uᵀRu`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    q: Mat,
    r: Mat,
}

impl CostWeights {
    pub fn new(q: Mat, r: Mat) -> Result<Self> {
        ensure_square(&q)?;
        ensure_square(&r)?;
        ensure_finite(&q, "Q")?;
        ensure_finite(&r, "R")?;
        if !is_symmetric(&q, 1e-10) {
            return Err(Error::NotSymmetric("Q"));
        }
        if !is_symmetric(&r, 1e-10) {
            return Err(Error::NotSymmetric("R"));
        }
        let (q, r) = (sym(&q), sym(&r));
        if q.nrows() > 0 && lambda_min(&q) < -1e-10 * q.amax().max(1.0) {
            return Err(Error::NotPositiveSemidefinite("Q"));
        }
        if r.nrows() > 0 && lambda_min(&r) <= 1e-10 * r.amax().max(1.0) {
            return Err(Error::NotPositiveDefinite("R"));
        }
        Ok(Self { q, r })
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    pub fn check_dims(&self, sys: &LinearSystem) -> Result<()> {
        if self.q.nrows() != sys.n() || self.r.nrows() != sys.p() {
            return Err(Error::Dimension(format!(
                "weights are {}x{} / {}x{} but the system has n={}, p={}",
                self.q.nrows(),
                self.q.nrows(),
                self.r.nrows(),
                self.r.nrows(),
                sys.n(),
                sys.p()
            )));
        }
        Ok(())
    }
}

/// Standard deviations of the exploratory input and the process noise.
///
/// Zero is accepted so that noiseless runs can be simulated; the bounds that
/// divide by a deviation reject it themselves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_u: f64,
    pub sigma_w: f64,
}

impl NoiseSpec {
    pub fn new(sigma_u: f64, sigma_w: f64) -> Result<Self> {
        for (v, name) in [(sigma_u, "sigma_u"), (sigma_w, "sigma_w")] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(Self { sigma_u, sigma_w })
    }
}

/// Static state feedback `u = K x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFeedbackGain(Mat);

impl StateFeedbackGain {
    pub fn new(k: Mat) -> Result<Self> {
        ensure_finite(&k, "K")?;
        Ok(Self(k))
    }

    pub fn zeros(p: usize, n: usize) -> Self {
        Self(Mat::zeros(p, n))
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }

    pub fn check_dims(&self, sys: &LinearSystem) -> Result<()> {
        if self.0.nrows() != sys.p() || self.0.ncols() != sys.n() {
            return Err(Error::Dimension(format!(
                "K is {}x{} but the system needs {}x{}",
                self.0.nrows(),
                self.0.ncols(),
                sys.p(),
                sys.n()
            )));
        }
        Ok(())
    }
}

/// `‖M^t‖₂ ≤ c·rho^t`, verified by direct powers for `t ≤ horizon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayEnvelope {
    pub c: f64,
    pub rho: f64,
    pub horizon: usize,
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    let n = ensure_square(m)?;
    ensure_finite(m, "matrix")?;
    if n == 0 {
        return Ok(0.0);
    }
    Ok(eigenvalues(m)?.iter().map(|z| crate::linalg::cabs(*z)).fold(0.0, f64::max))
}

pub fn is_stable(m: &Mat) -> Result<bool> {
    Ok(spectral_radius(m)? < STABILITY_MARGIN)
}

fn require_stable(m: &Mat) -> Result<f64> {
    let rho = spectral_radius(m)?;
    if rho < STABILITY_MARGIN {
        Ok(rho)
    } else {
        Err(Error::Unstable(rho))
    }
}

/// Solves `X = M X Mᵀ + W` for stable `M`.
pub fn dlyap(m: &Mat, w: &Mat) -> Result<Mat> {
    let n = ensure_square(m)?;
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::Dimension(format!("W must be {n}x{n}")));
    }
    ensure_finite(w, "W")?;
    require_stable(m)?;
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let w = sym(w);
    let mut x = if n <= 12 { dlyap_kron(m, &w)? } else { dlyap_doubling(m, &w) };
    for _ in 0..4 {
        let resid = &w - (&x - m * &x * m.transpose());
        if resid.norm() <= 1e-11 * (1.0 + x.norm()) {
            break;
        }
        let dx = if n <= 12 { dlyap_kron(m, &resid)? } else { dlyap_doubling(m, &sym(&resid)) };
        x += dx;
        x = sym(&x);
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical(String::from("Lyapunov solution is not finite")));
    }
    Ok(x)
}

fn dlyap_kron(m: &Mat, w: &Mat) -> Result<Mat> {
    let n = m.nrows();
    let nn = n * n;
    // vec(M X Mᵀ) = (M ⊗ M) vec(X), column-major.
    let mut big = Mat::identity(nn, nn);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    big[(i + j * n, k + l * n)] -= m[(i, k)] * m[(j, l)];
                }
            }
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(w.as_slice());
    let sol = big.lu().solve(&rhs).ok_or_else(|| Error::Numerical(String::from("singular Lyapunov operator")))?;
    Ok(sym(&Mat::from_column_slice(n, n, sol.as_slice())))
}

fn dlyap_doubling(m: &Mat, w: &Mat) -> Mat {
    let mut x = w.clone();
    let mut mk = m.clone();
    for _ in 0..64 {
        let inc = &mk * &x * mk.transpose();
        x += &inc;
        if inc.norm() <= 1e-17 * x.norm() || mk.norm() < 1e-150 {
            break;
        }
        mk = &mk * &mk;
    }
    sym(&x)
}

/// Average LQR cost `σ_w²·tr((Q + KᵀRK) X)` with `X = dlyap(A+BK, I)`;
/// infinite when `A + BK` is not stable.
pub fn lqr_cost_closed_loop(sys: &LinearSystem, k: &StateFeedbackGain, cost: &CostWeights, sigma_w: f64) -> Result<f64> {
    k.check_dims(sys)?;
    cost.check_dims(sys)?;
    let acl = sys.closed_loop(k);
    if !is_stable(&acl)? {
        return Ok(f64::INFINITY);
    }
    let x = dlyap(&acl, &Mat::identity(sys.n(), sys.n()))?;
    let km = k.matrix();
    let weight = cost.q() + km.transpose() * cost.r() * km;
    Ok(sigma_w * sigma_w * (weight * x).trace())
}

/// Finite-horizon Gramians `Σ A^k B Bᵀ Aᵀ^k`, `Σ A^k Aᵀ^k` for `k < T` and
/// `λ_G = λ_min(σ_u² GG* + σ_w² FF*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gramians {
    pub input: Mat,
    pub noise: Mat,
    pub lambda_g: f64,
}

pub fn gramians(sys: &LinearSystem, noise: &NoiseSpec, horizon: usize) -> Result<Gramians> {
    if horizon == 0 {
        return Err(Error::InvalidArgument(String::from("horizon must be at least 1")));
    }
    let n = sys.n();
    let mut input = Mat::zeros(n, n);
    let mut noise_g = Mat::zeros(n, n);
    let mut ak = Mat::identity(n, n);
    let bbt = sys.b() * sys.b().transpose();
    for _ in 0..horizon {
        input += &ak * &bbt * ak.transpose();
        noise_g += &ak * ak.transpose();
        ak = sys.a() * ak;
    }
    let (su2, sw2) = (noise.sigma_u * noise.sigma_u, noise.sigma_w * noise.sigma_w);
    let lambda_g = lambda_min(&(&input * su2 + &noise_g * sw2));
    Ok(Gramians { input: sym(&input), noise: sym(&noise_g), lambda_g })
}

/// Envelope with `rho = (1 + ρ(M))/2` and `c = max_{t<t₀} ‖M^t‖/rho^t`,
/// where `t₀` is the first power with `‖M^{t₀}‖ ≤ rho^{t₀}`. By
/// submultiplicativity the bound then holds for every `t`, not only up to
/// `t₀`, which is reported as `horizon`.
pub fn decay_envelope(m: &Mat) -> Result<DecayEnvelope> {
    let n = ensure_square(m)?;
    let sr = require_stable(m)?;
    let rho = 0.5 * (1.0 + sr);
    let scaled = m / rho;
    let mut power = Mat::identity(n, n);
    let mut c: f64 = 1.0;
    let mut t = 0;
    loop {
        if t >= 1_000_000 {
            return Err(Error::NoConvergence("decay envelope horizon"));
        }
        power = &scaled * power;
        t += 1;
        let r = op_norm(&power);
        if r <= 1.0 {
            break;
        }
        c = c.max(r);
    }
    Ok(DecayEnvelope { c, rho, horizon: t })
}
