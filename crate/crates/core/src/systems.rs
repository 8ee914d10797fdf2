//! Benchmark systems and random instance generators.

use crate::linalg::Mat;
use crate::lti::{spectral_radius, CostWeights, LinearSystem, NoiseSpec};
use crate::rng::gaussian_matrix;
use rand::Rng;

/// Marginally unstable graph Laplacian: three coupled nodes with
/// `A` tridiagonal (1.01 on the diagonal, 0.01 off it), `B = I`.
pub fn laplacian_example() -> LinearSystem {
    let a = Mat::from_row_slice(3, 3, &[1.01, 0.01, 0.0, 0.01, 1.01, 0.01, 0.0, 0.01, 1.01]);
    LinearSystem::new(a, Mat::identity(3, 3)).expect("constant data")
}

/// `Q = 1e-3·I`, `R = I`: inputs are expensive relative to state deviations.
pub fn laplacian_example_cost() -> CostWeights {
    CostWeights::new(Mat::identity(3, 3) * 1e-3, Mat::identity(3, 3)).expect("constant data")
}

pub fn laplacian_example_noise() -> NoiseSpec {
    NoiseSpec { sigma_u: 1.0, sigma_w: 1.0 }
}

/// Gaussian `(A, B)` with `A` rescaled to spectral radius `rho`.
pub fn random_system_with_radius<R: Rng>(rng: &mut R, n: usize, p: usize, rho: f64) -> LinearSystem {
    let mut a = gaussian_matrix(rng, n, n, 1.0);
    let sr = spectral_radius(&a).expect("finite square matrix");
    if sr > 0.0 {
        a *= rho / sr;
    }
    let b = gaussian_matrix(rng, n, p, 1.0);
    LinearSystem::new(a, b).expect("finite Gaussian draws")
}

/// Gaussian `(A, B)` with `A` stable, radius uniform in `[lo, hi]`.
pub fn random_stable_system<R: Rng>(rng: &mut R, n: usize, p: usize, lo: f64, hi: f64) -> LinearSystem {
    let rho = rng.gen_range(lo..=hi);
    random_system_with_radius(rng, n, p, rho)
}

/// Random positive definite weights `Q = GGᵀ/n + 0.1 I`, `R = HHᵀ/p + 0.1 I`.
pub fn random_cost<R: Rng>(rng: &mut R, n: usize, p: usize) -> CostWeights {
    let g = gaussian_matrix(rng, n, n, 1.0);
    let h = gaussian_matrix(rng, p, p, 1.0);
    let q = &g * g.transpose() / n as f64 + Mat::identity(n, n) * 0.1;
    let r = &h * h.transpose() / p as f64 + Mat::identity(p, p) * 0.1;
    CostWeights::new(crate::linalg::sym(&q), crate::linalg::sym(&r)).expect("positive definite by construction")
}
