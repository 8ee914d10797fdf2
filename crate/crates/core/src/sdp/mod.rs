//! Conic programs over nonnegative, second-order and semidefinite cones, and
//! a homogeneous self-dual interior-point solver for them.
//!
//! Programs are built from scalar variables. A variable is either free or an
//! entry of a cone-constrained block ([`PsdVar`], [`SocVar`], or a
//! nonnegative scalar). Constraints are linear equalities and affine cone
//! memberships `F(x) ∈ K`.

mod cone;
mod ipm;
mod sdpa;

pub use ipm::SolverOptions;
pub use sdpa::write_sdpa;

use crate::linalg::Mat;
use crate::prelude::*;
use crate::{Error, Result};
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

pub(crate) use cone::Cone;

const SQRT2: f64 = core::f64::consts::SQRT_2;

/// Handle to a scalar variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub(crate) usize);

/// `constant + Σ coef·var`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub(crate) terms: Vec<(usize, f64)>,
    pub(crate) constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn term(v: Var, coef: f64) -> Self {
        Self { terms: vec![(v.0, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: Var, coef: f64) {
        if coef != 0.0 {
            self.terms.push((v.0, coef));
        }
    }

    /// `self += scale·other`.
    pub fn add_scaled(&mut self, other: &LinExpr, scale: f64) {
        if scale == 0.0 {
            return;
        }
        self.constant += scale * other.constant;
        self.terms.extend(other.terms.iter().map(|&(v, c)| (v, scale * c)));
    }

    pub fn scaled(&self, s: f64) -> LinExpr {
        let mut out = LinExpr::zero();
        out.add_scaled(self, s);
        out
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    /// Merge duplicate variables and drop zero coefficients.
    pub fn compress(&mut self) {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(v, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }

    fn max_var(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }
}

impl From<Var> for LinExpr {
    fn from(v: Var) -> Self {
        LinExpr::term(v, 1.0)
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl AddAssign<&LinExpr> for LinExpr {
    fn add_assign(&mut self, rhs: &LinExpr) {
        self.add_scaled(rhs, 1.0);
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, 1.0);
        self
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, s: f64) -> LinExpr {
        self.scaled(s)
    }
}

/// Rectangular matrix of affine expressions, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<LinExpr>,
}

impl AffineMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![LinExpr::zero(); rows * cols] }
    }

    pub fn from_constant(m: &Mat) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                out.entries[i + j * m.nrows()].constant = m[(i, j)];
            }
        }
        out
    }

    /// Matrix whose entries are the given variables, column-major.
    pub fn from_vars(rows: usize, cols: usize, vars: &[Var]) -> Self {
        assert_eq!(vars.len(), rows * cols, "variable count must match the shape");
        Self { rows, cols, entries: vars.iter().map(|&v| LinExpr::from(v)).collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &LinExpr {
        &self.entries[i + j * self.rows]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut LinExpr {
        &mut self.entries[i + j * self.rows]
    }

    pub fn set(&mut self, i: usize, j: usize, e: LinExpr) {
        self.entries[i + j * self.rows] = e;
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.set(j, i, self.get(i, j).clone());
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|e| e.scaled(s)).collect() }
    }

    pub fn plus(&self, other: &AffineMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        let mut out = self.clone();
        for (a, b) in out.entries.iter_mut().zip(&other.entries) {
            *a += b;
        }
        out
    }

    /// `M · self` for a constant `M`.
    pub fn left_mul(&self, m: &Mat) -> Self {
        assert_eq!(m.ncols(), self.rows, "shape mismatch");
        let mut out = Self::zeros(m.nrows(), self.cols);
        for j in 0..self.cols {
            for k in 0..self.rows {
                let e = self.get(k, j);
                for i in 0..m.nrows() {
                    out.get_mut(i, j).add_scaled(e, m[(i, k)]);
                }
            }
        }
        out.compress();
        out
    }

    /// `self · M` for a constant `M`.
    pub fn right_mul(&self, m: &Mat) -> Self {
        self.transpose().left_mul(&m.transpose()).transpose()
    }

    pub fn compress(&mut self) {
        for e in &mut self.entries {
            e.compress();
        }
    }

    /// Assemble from a grid of blocks; `None` is a zero block. Block rows and
    /// columns must have consistent sizes.
    pub fn blocks(grid: &[Vec<Option<&AffineMatrix>>], row_sizes: &[usize], col_sizes: &[usize]) -> Self {
        let rows = row_sizes.iter().sum();
        let cols = col_sizes.iter().sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (bj, blk) in row.iter().enumerate() {
                if let Some(b) = blk {
                    assert_eq!((b.rows, b.cols), (row_sizes[bi], col_sizes[bj]), "block shape mismatch");
                    for j in 0..b.cols {
                        for i in 0..b.rows {
                            out.set(r0 + i, c0 + j, b.get(i, j).clone());
                        }
                    }
                }
                c0 += col_sizes[bj];
            }
            r0 += row_sizes[bi];
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(x))
    }
}

/// Symmetric matrix variable constrained to be positive semidefinite,
/// stored as the scaled lower-triangle vector `svec`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PsdVar {
    start: usize,
    dim: usize,
}

impl PsdVar {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The `(i, j)` entry as an expression.
    pub fn entry(&self, i: usize, j: usize) -> LinExpr {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let v = Var(self.start + svec_index(self.dim, i, j));
        LinExpr::term(v, if i == j { 1.0 } else { 1.0 / SQRT2 })
    }

    pub fn matrix(&self) -> AffineMatrix {
        let mut m = AffineMatrix::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            for i in 0..self.dim {
                m.set(i, j, self.entry(i, j));
            }
        }
        m
    }
}

/// Vector variable `(t, v)` constrained to `t ≥ ‖v‖₂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SocVar {
    start: usize,
    dim: usize,
}

impl SocVar {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, k: usize) -> Var {
        assert!(k < self.dim, "index out of range");
        Var(self.start + k)
    }
}

/// Position of `(i, j)`, `i ≥ j`, in the column-major lower triangle.
pub(crate) fn svec_index(dim: usize, i: usize, j: usize) -> usize {
    j * dim - j * (j + 1) / 2 + i
}

pub(crate) fn svec_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum VarKind {
    Free,
    Cone,
}

/// An affine cone membership `F(x) ∈ K`; PSD rows are in `svec` order.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AffineCone {
    pub cone: Cone,
    pub rows: Vec<LinExpr>,
}

/// Linear objective, linear equalities and cone memberships over scalar
/// variables; always minimized.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    pub(crate) kinds: Vec<VarKind>,
    /// Cone-variable blocks `(cone, first variable)`.
    pub(crate) var_cones: Vec<(Cone, usize)>,
    pub(crate) objective: LinExpr,
    pub(crate) equalities: Vec<LinExpr>,
    pub(crate) cones: Vec<AffineCone>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.kinds.len()
    }

    pub fn free(&mut self) -> Var {
        self.kinds.push(VarKind::Free);
        Var(self.kinds.len() - 1)
    }

    pub fn free_vec(&mut self, count: usize) -> Vec<Var> {
        (0..count).map(|_| self.free()).collect()
    }

    /// Free `rows × cols` matrix variable.
    pub fn free_matrix(&mut self, rows: usize, cols: usize) -> AffineMatrix {
        let vars = self.free_vec(rows * cols);
        AffineMatrix::from_vars(rows, cols, &vars)
    }

    /// Free symmetric `dim × dim` matrix variable.
    pub fn free_symmetric(&mut self, dim: usize) -> AffineMatrix {
        let mut m = AffineMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in j..dim {
                let v = LinExpr::from(self.free());
                m.set(i, j, v.clone());
                m.set(j, i, v);
            }
        }
        m
    }

    fn cone_block(&mut self, cone: Cone) -> usize {
        let start = self.kinds.len();
        self.kinds.extend(core::iter::repeat(VarKind::Cone).take(cone.len()));
        self.var_cones.push((cone, start));
        start
    }

    pub fn nonneg(&mut self) -> Var {
        Var(self.cone_block(Cone::Lp(1)))
    }

    pub fn psd(&mut self, dim: usize) -> PsdVar {
        PsdVar { start: self.cone_block(Cone::Psd(dim)), dim }
    }

    pub fn soc(&mut self, dim: usize) -> SocVar {
        assert!(dim >= 1, "a second-order cone needs at least the scalar part");
        SocVar { start: self.cone_block(Cone::Soc(dim)), dim }
    }

    pub fn minimize(&mut self, objective: LinExpr) {
        self.objective = objective;
    }

    /// `lhs = rhs`.
    pub fn add_eq(&mut self, lhs: LinExpr, rhs: LinExpr) {
        self.equalities.push(lhs - rhs);
    }

    /// `lhs ≤ rhs`.
    pub fn add_le(&mut self, lhs: LinExpr, rhs: LinExpr) {
        self.cones.push(AffineCone { cone: Cone::Lp(1), rows: vec![rhs - lhs] });
    }

    /// `lhs ≥ rhs`.
    pub fn add_ge(&mut self, lhs: LinExpr, rhs: LinExpr) {
        self.add_le(rhs, lhs);
    }

    /// `entries[0] ≥ ‖entries[1..]‖₂`.
    pub fn add_soc(&mut self, entries: Vec<LinExpr>) {
        assert!(!entries.is_empty(), "empty second-order cone");
        self.cones.push(AffineCone { cone: Cone::Soc(entries.len()), rows: entries });
    }

    /// `m ⪰ 0`; `m` must be square and symmetric.
    pub fn add_psd(&mut self, m: &AffineMatrix) -> Result<()> {
        if m.rows != m.cols {
            return Err(Error::Program(format!("PSD constraint must be square, got {}x{}", m.rows, m.cols)));
        }
        let d = m.rows;
        let mut rows = Vec::with_capacity(svec_len(d));
        for j in 0..d {
            for i in j..d {
                let mut lo = m.get(i, j).clone();
                if i != j {
                    let mut hi = m.get(j, i).clone();
                    lo.compress();
                    hi.compress();
                    if !expr_close(&lo, &hi) {
                        return Err(Error::Program(format!("PSD constraint is not symmetric at ({i}, {j})")));
                    }
                    lo = lo.scaled(SQRT2);
                }
                rows.push(lo);
            }
        }
        self.cones.push(AffineCone { cone: Cone::Psd(d), rows });
        Ok(())
    }

    pub(crate) fn check(&self) -> Result<()> {
        let n = self.kinds.len();
        let exprs = core::iter::once(&self.objective).chain(self.equalities.iter()).chain(self.cones.iter().flat_map(|c| c.rows.iter()));
        for e in exprs {
            if let Some(v) = e.max_var() {
                if v >= n {
                    return Err(Error::Program(format!("reference to undeclared variable {v}")));
                }
            }
            if !e.constant.is_finite() || e.terms.iter().any(|t| !t.1.is_finite()) {
                return Err(Error::Program(String::from("non-finite coefficient")));
            }
        }
        Ok(())
    }

    /// Solve with the built-in interior-point method.
    pub fn solve(&self, opts: &SolverOptions) -> Result<ConicSolution> {
        ipm::solve(self, opts)
    }

    /// Solve with default options and tolerance `tol`.
    pub fn solve_with_tol(&self, tol: f64) -> Result<ConicSolution> {
        self.solve(&SolverOptions { tol, ..SolverOptions::default() })
    }
}

fn expr_close(a: &LinExpr, b: &LinExpr) -> bool {
    let scale = a.terms.iter().chain(&b.terms).map(|t| t.1.abs()).fold(a.constant.abs().max(b.constant.abs()), f64::max);
    let tol = 1e-12 * scale.max(1.0);
    if (a.constant - b.constant).abs() > tol || a.terms.len() != b.terms.len() {
        return false;
    }
    a.terms.iter().zip(&b.terms).all(|(x, y)| x.0 == y.0 && (x.1 - y.1).abs() <= tol)
}

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// No feasible point; `certificate` holds an improving dual ray.
    Infeasible,
    /// Objective unbounded below; `certificate` holds an improving primal ray.
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// Relative primal infeasibility.
    pub primal: f64,
    /// Relative dual infeasibility.
    pub dual: f64,
    /// Complementarity `sᵀz`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Values of every declared variable.
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    /// Dual ray `(y, z)` when infeasible or primal ray `x` when unbounded.
    pub certificate: Option<Vec<f64>>,
}

impl ConicSolution {
    pub fn value(&self, e: &LinExpr) -> f64 {
        e.eval(&self.x)
    }

    pub fn var(&self, v: Var) -> f64 {
        self.x[v.0]
    }

    pub fn matrix(&self, m: &AffineMatrix) -> Mat {
        m.eval(&self.x)
    }

    pub fn psd(&self, v: &PsdVar) -> Mat {
        v.matrix().eval(&self.x)
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
