use super::require_stable;
use crate::linalg::{eigenvalues, ensure_finite, op_norm, solve, CMat, FrequencyResponse, Mat};
use crate::prelude::*;
use crate::{Error, Result};
use core::f64::consts::PI;
use nalgebra::Complex;

/// Realization `G(z) = C (zI - A)^{-1} B + D`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "inconsistent realization: A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        for (m, name) in [(&a, "A"), (&b, "B"), (&c, "C"), (&d, "D")] {
            ensure_finite(m, name)?;
        }
        Ok(Self { a, b, c, d })
    }

    /// The resolvent `(zI - M)^{-1}`.
    pub fn resolvent(m: &Mat) -> Result<Self> {
        let n = m.nrows();
        Self::new(m.clone(), Mat::identity(n, n), Mat::identity(n, n), Mat::zeros(n, n))
    }

    /// Frequency response at `z = e^{jθ}`.
    pub fn eval(&self, theta: f64) -> CMat {
        FrequencyResponse::new(&self.a, &self.b, &self.c, &self.d).eval(Complex::new(theta.cos(), theta.sin()))
    }
}

const GRID: usize = 512;
const REL_TOL: f64 = 1e-7;
const UNIT_CIRCLE_TOL: f64 = 1e-6;

/// `sup_θ σ_max(G(e^{jθ}))` for a stable realization.
///
/// A frequency grid (plus the pole angles) gives a lower bound; the bound is
/// then raised by level-set iterations until the test level `lo·(1+2·tol)`
/// has no unit-circle eigenvalues in the associated symplectic pencil, which
/// certifies it as an upper bound.
pub fn hinf_norm_lti(sys: &StateSpace) -> Result<f64> {
    let n = sys.a.nrows();
    if n == 0 {
        return Ok(op_norm(&sys.d));
    }
    require_stable(&sys.a)?;
    if sys.b.ncols() == 0 || sys.c.nrows() == 0 {
        return Ok(0.0);
    }
    let fr = FrequencyResponse::new(&sys.a, &sys.b, &sys.c, &sys.d);
    let mut thetas: Vec<f64> = (0..GRID).map(|k| PI * k as f64 / (GRID - 1) as f64).collect();
    thetas.extend(eigenvalues(&sys.a)?.iter().map(|z| z.im.atan2(z.re).abs()));
    let mut lo: f64 = 0.0;
    for &t in &thetas {
        lo = lo.max(fr.sigma_max(t));
    }
    let d_norm = op_norm(&sys.d);
    lo = lo.max(d_norm);
    if lo == 0.0 {
        return Ok(0.0);
    }
    for _ in 0..60 {
        let gamma = lo * (1.0 + 2.0 * REL_TOL);
        let crossings = unit_circle_angles(sys, gamma)?;
        if crossings.is_empty() {
            return Ok(gamma);
        }
        let mut probes: Vec<f64> = Vec::new();
        if crossings.len() == 1 {
            probes.push(crossings[0]);
        }
        for w in crossings.windows(2) {
            probes.push(0.5 * (w[0] + w[1]));
        }
        probes.extend(crossings.iter().copied());
        let best = probes.iter().map(|&t| fr.sigma_max(t)).fold(0.0, f64::max);
        if best <= lo * (1.0 + REL_TOL) {
            // Crossings without a measurable gain increase: a near-tangency
            // within tolerance of `lo`.
            return Ok(gamma);
        }
        lo = best;
    }
    Err(Error::NoConvergence("H-infinity level-set iteration"))
}

/// Angles in `[0, π]` where `γ` is a singular value of `G(e^{jθ})`.
fn unit_circle_angles(sys: &StateSpace, gamma: f64) -> Result<Vec<f64>> {
    let n = sys.a.nrows();
    let (a, b, c, d) = (&sys.a, &sys.b, &sys.c, &sys.d);
    let m = b.ncols();
    let r = Mat::identity(m, m) * (gamma * gamma) - d.transpose() * d;
    let rinv_dtc = solve(&r, &(d.transpose() * c))?;
    let rinv_bt = solve(&r, &b.transpose())?;
    let at = a + b * &rinv_dtc;
    let g = b * &rinv_bt;
    let h = c.transpose() * c + c.transpose() * d * &rinv_dtc;
    // z E v = F v with E = [[I, 0], [H, Ãᵀ]] and F = [[Ã, G], [0, I]].
    let mut e = Mat::zeros(2 * n, 2 * n);
    let mut f = Mat::zeros(2 * n, 2 * n);
    e.view_mut((0, 0), (n, n)).fill_with_identity();
    e.view_mut((n, 0), (n, n)).copy_from(&h);
    e.view_mut((n, n), (n, n)).copy_from(&at.transpose());
    f.view_mut((0, 0), (n, n)).copy_from(&at);
    f.view_mut((0, n), (n, n)).copy_from(&g);
    f.view_mut((n, n), (n, n)).fill_with_identity();
    // Eigenvalues ν of (F - μE)⁻¹E map back to z = μ + 1/ν.
    for mu in [1.7_f64, -2.3, 3.1] {
        let shifted = &f - &e * mu;
        let Some(nmat) = shifted.lu().solve(&e) else { continue };
        if !nmat.iter().all(|v| v.is_finite()) {
            continue;
        }
        let Ok(eig) = eigenvalues(&nmat) else { continue };
        let mut angles: Vec<f64> = Vec::new();
        for nu in &eig {
            if crate::linalg::cabs(*nu) < 1e-14 {
                continue;
            }
            let z = Complex::new(mu, 0.0) + Complex::new(1.0, 0.0) / nu;
            if (crate::linalg::cabs(z) - 1.0).abs() < UNIT_CIRCLE_TOL {
                angles.push(z.im.atan2(z.re).abs());
            }
        }
        angles.sort_by(|x, y| x.total_cmp(y));
        angles.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
        return Ok(angles);
    }
    Err(Error::Numerical(String::from("could not factor the shifted symplectic pencil")))
}
