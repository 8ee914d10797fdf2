//! Cone algebra: Jordan products, step lengths and Nesterov–Todd scalings.
//! Symmetric matrices are stored as `svec` (lower triangle, column-major,
//! off-diagonals scaled by √2) so that `svec(A)ᵀsvec(B) = tr(AB)`.

use super::{svec_index, svec_len, SQRT2};
use crate::linalg::{sym, Mat};
use crate::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// Nonnegative orthant of the given dimension.
    Lp(usize),
    /// `{(t, v): t ≥ ‖v‖}` of the given total dimension.
    Soc(usize),
    /// Positive semidefinite matrices of the given order.
    Psd(usize),
}

impl Cone {
    /// Length of the stored vector.
    pub fn len(&self) -> usize {
        match *self {
            Cone::Lp(d) | Cone::Soc(d) => d,
            Cone::Psd(m) => svec_len(m),
        }
    }

    /// Barrier degree.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::Lp(d) => d,
            Cone::Soc(_) => 1,
            Cone::Psd(m) => m,
        }
    }
}

pub fn smat(m: usize, v: &[f64]) -> Mat {
    let mut out = Mat::zeros(m, m);
    for j in 0..m {
        for i in j..m {
            let x = v[svec_index(m, i, j)];
            if i == j {
                out[(i, i)] = x;
            } else {
                out[(i, j)] = x / SQRT2;
                out[(j, i)] = x / SQRT2;
            }
        }
    }
    out
}

pub fn svec_into(a: &Mat, out: &mut [f64]) {
    let m = a.nrows();
    for j in 0..m {
        for i in j..m {
            out[svec_index(m, i, j)] = if i == j { a[(i, i)] } else { SQRT2 * 0.5 * (a[(i, j)] + a[(j, i)]) };
        }
    }
}

#[cfg(test)]
pub fn svec(a: &Mat) -> Vec<f64> {
    let mut out = vec![0.0; svec_len(a.nrows())];
    svec_into(a, &mut out);
    out
}

/// Identity element of the cone.
pub fn identity(cone: Cone, out: &mut [f64]) {
    out.fill(0.0);
    match cone {
        Cone::Lp(_) => out.fill(1.0),
        Cone::Soc(_) => out[0] = 1.0,
        Cone::Psd(m) => {
            for i in 0..m {
                out[svec_index(m, i, i)] = 1.0;
            }
        }
    }
}

/// Smallest "eigenvalue" in the Jordan-algebra sense.
pub fn min_eig(cone: Cone, x: &[f64]) -> f64 {
    match cone {
        Cone::Lp(_) => x.iter().copied().fold(f64::INFINITY, f64::min),
        Cone::Soc(_) => x[0] - norm(&x[1..]),
        Cone::Psd(m) => crate::linalg::lambda_min(&smat(m, x)),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jordan product `x ∘ y`.
pub fn jordan(cone: Cone, x: &[f64], y: &[f64], out: &mut [f64]) {
    match cone {
        Cone::Lp(_) => {
            for i in 0..x.len() {
                out[i] = x[i] * y[i];
            }
        }
        Cone::Soc(_) => {
            out[0] = dot(x, y);
            for i in 1..x.len() {
                out[i] = x[0] * y[i] + y[0] * x[i];
            }
        }
        Cone::Psd(m) => {
            let (a, b) = (smat(m, x), smat(m, y));
            let p = &a * &b;
            svec_into(&sym(&p), out);
        }
    }
}

/// Solves `λ ∘ x = y` for the scaled point `λ` (diagonal in the PSD case).
pub fn jordan_div(cone: Cone, lambda: &[f64], y: &[f64], out: &mut [f64]) {
    match cone {
        Cone::Lp(_) => {
            for i in 0..y.len() {
                out[i] = y[i] / lambda[i];
            }
        }
        Cone::Soc(_) => {
            let l0 = lambda[0];
            let l1 = &lambda[1..];
            let det = l0 * l0 - dot(l1, l1);
            let x0 = (l0 * y[0] - dot(l1, &y[1..])) / det;
            out[0] = x0;
            for i in 1..y.len() {
                out[i] = (y[i] - x0 * lambda[i]) / l0;
            }
        }
        Cone::Psd(m) => {
            for j in 0..m {
                let lj = lambda[svec_index(m, j, j)];
                for i in j..m {
                    let li = lambda[svec_index(m, i, i)];
                    let k = svec_index(m, i, j);
                    out[k] = 2.0 * y[k] / (li + lj);
                }
            }
        }
    }
}

/// Largest `α` with `λ + α·d` in the cone (`∞` if unbounded).
pub fn max_step(cone: Cone, lambda: &[f64], d: &[f64]) -> f64 {
    match cone {
        Cone::Lp(_) => {
            let mut a = f64::INFINITY;
            for i in 0..d.len() {
                if d[i] < 0.0 {
                    a = a.min(-lambda[i] / d[i]);
                }
            }
            a
        }
        Cone::Soc(_) => {
            // (λ0 + αd0)² − ‖λ1 + αd1‖² = qa α² + 2 qb α + qc.
            let qa = d[0] * d[0] - dot(&d[1..], &d[1..]);
            let qb = lambda[0] * d[0] - dot(&lambda[1..], &d[1..]);
            let qc = lambda[0] * lambda[0] - dot(&lambda[1..], &lambda[1..]);
            smallest_positive_root(qa, qb, qc)
        }
        Cone::Psd(m) => {
            // λ is diagonal: scale d by λ^{-1/2} on both sides.
            let dm = smat(m, d);
            let mut s = dm.clone();
            for i in 0..m {
                let li = lambda[svec_index(m, i, i)].sqrt();
                for j in 0..m {
                    let lj = lambda[svec_index(m, j, j)].sqrt();
                    s[(i, j)] = dm[(i, j)] / (li * lj);
                }
            }
            let mu = crate::linalg::lambda_min(&s);
            if mu < 0.0 {
                -1.0 / mu
            } else {
                f64::INFINITY
            }
        }
    }
}

fn smallest_positive_root(a: f64, b: f64, c: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let sq = disc.sqrt();
    let mut best = f64::INFINITY;
    if a == 0.0 {
        if b < 0.0 {
            best = -c / (2.0 * b);
        }
        return best;
    }
    let q = -(b + if b >= 0.0 { sq } else { -sq });
    for r in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
        if r > 0.0 && r < best {
            best = r;
        }
    }
    best
}

/// Nesterov–Todd scaling `W` of one block, with `W z = W⁻ᵀ s = λ`.
#[derive(Debug, Clone)]
pub enum Scaling {
    /// `W = diag(w)`.
    Lp { w: Vec<f64> },
    /// `W = β(2vvᵀ − J)` with `vᵀJv = 1`.
    Soc { beta: f64, v: Vec<f64> },
    /// `W(Z) = RᵀZR`.
    Psd { r: Mat, rinv: Mat },
}

impl Scaling {
    pub fn identity(cone: Cone) -> Self {
        match cone {
            Cone::Lp(d) => Scaling::Lp { w: vec![1.0; d] },
            Cone::Soc(d) => {
                let mut v = vec![0.0; d];
                v[0] = 1.0;
                Scaling::Soc { beta: 1.0, v }
            }
            Cone::Psd(m) => Scaling::Psd { r: Mat::identity(m, m), rinv: Mat::identity(m, m) },
        }
    }

    /// Scaling for interior `s`, `z`; also returns `λ`.
    pub fn compute(cone: Cone, s: &[f64], z: &[f64]) -> Option<(Self, Vec<f64>)> {
        match cone {
            Cone::Lp(_) => {
                let w: Vec<f64> = s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect();
                let lambda = s.iter().zip(z).map(|(a, b)| (a * b).sqrt()).collect();
                w.iter().all(|x| x.is_finite() && *x > 0.0).then_some((Scaling::Lp { w }, lambda))
            }
            Cone::Soc(d) => {
                let sn = (s[0] * s[0] - dot(&s[1..], &s[1..])).max(0.0).sqrt();
                let zn = (z[0] * z[0] - dot(&z[1..], &z[1..])).max(0.0).sqrt();
                if !(sn > 0.0 && zn > 0.0) {
                    return None;
                }
                let sb: Vec<f64> = s.iter().map(|x| x / sn).collect();
                let zb: Vec<f64> = z.iter().map(|x| x / zn).collect();
                let gamma = ((1.0 + dot(&sb, &zb)) / 2.0).sqrt();
                let mut w = vec![0.0; d];
                w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
                for i in 1..d {
                    w[i] = (sb[i] - zb[i]) / (2.0 * gamma);
                }
                // v = sqrt(w) in the Jordan algebra.
                let denom = (2.0 * (w[0] + 1.0)).sqrt();
                let mut v = w;
                v[0] += 1.0;
                for x in v.iter_mut() {
                    *x /= denom;
                }
                let beta = (sn / zn).sqrt();
                let sc = Scaling::Soc { beta, v };
                let mut lambda = vec![0.0; d];
                sc.apply_w(cone, z, &mut lambda);
                Some((sc, lambda))
            }
            Cone::Psd(m) => {
                let ls = smat(m, s).cholesky()?.l();
                let lz = smat(m, z).cholesky()?.l();
                let svd = (lz.transpose() * &ls).svd(false, true);
                let vt = svd.v_t?;
                let sig = svd.singular_values;
                if sig.iter().any(|x| !(*x > 0.0)) {
                    return None;
                }
                let mut r = ls * vt.transpose();
                for j in 0..m {
                    let f = 1.0 / sig[j].sqrt();
                    for i in 0..m {
                        r[(i, j)] *= f;
                    }
                }
                let rinv = r.clone().try_inverse()?;
                let mut lambda = vec![0.0; svec_len(m)];
                for i in 0..m {
                    lambda[svec_index(m, i, i)] = sig[i];
                }
                Some((Scaling::Psd { r, rinv }, lambda))
            }
        }
    }

    /// `out = W x`.
    pub fn apply_w(&self, cone: Cone, x: &[f64], out: &mut [f64]) {
        match (self, cone) {
            (Scaling::Lp { w }, _) => {
                for i in 0..x.len() {
                    out[i] = w[i] * x[i];
                }
            }
            (Scaling::Soc { beta, v }, _) => soc_apply(*beta, v, x, out, false),
            (Scaling::Psd { r, .. }, Cone::Psd(m)) => {
                let xm = smat(m, x);
                svec_into(&(r.transpose() * xm * r), out);
            }
            _ => unreachable!("scaling does not match its cone"),
        }
    }

    /// `out = Wᵀ x`.
    pub fn apply_wt(&self, cone: Cone, x: &[f64], out: &mut [f64]) {
        match (self, cone) {
            (Scaling::Psd { r, .. }, Cone::Psd(m)) => {
                let xm = smat(m, x);
                svec_into(&(r * xm * r.transpose()), out);
            }
            _ => self.apply_w(cone, x, out),
        }
    }

    /// `out = W⁻ᵀ x`.
    pub fn apply_winvt(&self, cone: Cone, x: &[f64], out: &mut [f64]) {
        match (self, cone) {
            (Scaling::Lp { w }, _) => {
                for i in 0..x.len() {
                    out[i] = x[i] / w[i];
                }
            }
            (Scaling::Soc { beta, v }, _) => soc_apply(*beta, v, x, out, true),
            (Scaling::Psd { rinv, .. }, Cone::Psd(m)) => {
                let xm = smat(m, x);
                svec_into(&(rinv * xm * rinv.transpose()), out);
            }
            _ => unreachable!("scaling does not match its cone"),
        }
    }

    /// `out = W⁻¹ x`.
    pub fn apply_winv(&self, cone: Cone, x: &[f64], out: &mut [f64]) {
        match (self, cone) {
            (Scaling::Psd { rinv, .. }, Cone::Psd(m)) => {
                let xm = smat(m, x);
                svec_into(&(rinv.transpose() * xm * rinv), out);
            }
            _ => self.apply_winvt(cone, x, out),
        }
    }
}

/// `β(2vvᵀ − J)x`, or its inverse `β⁻¹(2Jv vᵀJ − J)x`.
fn soc_apply(beta: f64, v: &[f64], x: &[f64], out: &mut [f64], inverse: bool) {
    if inverse {
        // Jv = (v0, -v1).
        let jv_x = v[0] * x[0] - dot(&v[1..], &x[1..]);
        out[0] = (2.0 * v[0] * jv_x - x[0]) / beta;
        for i in 1..x.len() {
            out[i] = (-2.0 * v[i] * jv_x + x[i]) / beta;
        }
    } else {
        let vx = dot(v, x);
        out[0] = beta * (2.0 * v[0] * vx - x[0]);
        for i in 1..x.len() {
            out[i] = beta * (2.0 * v[i] * vx + x[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_scaling(cone: Cone, s: &[f64], z: &[f64]) {
        let (w, lambda) = Scaling::compute(cone, s, z).unwrap();
        let n = s.len();
        let mut wz = vec![0.0; n];
        let mut wis = vec![0.0; n];
        w.apply_w(cone, z, &mut wz);
        w.apply_winvt(cone, s, &mut wis);
        for i in 0..n {
            assert!((wz[i] - lambda[i]).abs() < 1e-10, "Wz != λ");
            assert!((wis[i] - lambda[i]).abs() < 1e-10, "W^-T s != λ");
        }
        // Round trips.
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        w.apply_w(cone, &x, &mut a);
        w.apply_winv(cone, &a, &mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-10);
        }
        w.apply_wt(cone, &x, &mut a);
        w.apply_winvt(cone, &a, &mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-10);
        }
        // ⟨Wx, y⟩ = ⟨x, Wᵀy⟩.
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
        w.apply_w(cone, &x, &mut a);
        w.apply_wt(cone, &y, &mut b);
        assert!((dot(&a, &y) - dot(&x, &b)).abs() < 1e-10);
    }

    #[test]
    fn soc_scaling_identities() {
        check_scaling(Cone::Soc(4), &[3.0, 1.0, -0.5, 0.2], &[2.0, -0.3, 0.4, 1.1]);
    }

    #[test]
    fn psd_scaling_identities() {
        let s = svec(&Mat::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]));
        let z = svec(&Mat::from_row_slice(3, 3, &[1.0, -0.4, 0.0, -0.4, 2.0, 0.5, 0.0, 0.5, 3.0]));
        check_scaling(Cone::Psd(3), &s, &z);
    }

    #[test]
    fn lp_scaling_identities() {
        check_scaling(Cone::Lp(3), &[1.0, 2.0, 0.5], &[0.3, 4.0, 1.0]);
    }

    #[test]
    fn jordan_division_inverts_product() {
        let lam = [3.0, 1.0, -0.5];
        let x = [0.4, -1.0, 2.0];
        let mut p = [0.0; 3];
        let mut back = [0.0; 3];
        jordan(Cone::Soc(3), &lam, &x, &mut p);
        jordan_div(Cone::Soc(3), &lam, &p, &mut back);
        for i in 0..3 {
            assert!((back[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn soc_step_hits_boundary() {
        let lam = [2.0, 0.0];
        let d = [-1.0, 1.0];
        // (2 - a)^2 = a^2  =>  a = 1.
        assert!((max_step(Cone::Soc(2), &lam, &d) - 1.0).abs() < 1e-12);
    }
}
