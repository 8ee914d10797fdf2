//! Primal-dual interior-point method on the homogeneous self-dual embedding
//! with Nesterov–Todd scaling and Mehrotra correction.
//!
//! Standard form, with `x = (x_f, x_k)`:
//!
//! ```text
//! minimize   cᵀx
//! subject to A x = b
//!            G x_f + s = h,   s ∈ K_G      (affine cones over free variables)
//!            x_k ∈ K_V                     (cone-variable blocks)
//! ```
//!
//! Newton systems are reduced to `[[H, A_fᵀ], [A_f, -M]]` where
//! `H = Gᵀ(WᵀW)⁻¹G` collects the affine cones and `M = A_k WᵀW A_kᵀ` the
//! cone-variable blocks, and factored once per iteration.

use super::cone::{identity, jordan, jordan_div, max_step, min_eig, Cone, Scaling};
use super::{svec_index, AffineCone, ConicProgram, ConicSolution, LinExpr, Residuals, SolveStatus, VarKind, SQRT2};
use crate::linalg::Mat;
use crate::prelude::*;
use crate::{Error, Result};
use faer::prelude::SpSolver;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Feasibility and gap tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the step to the cone boundary.
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, step_fraction: 0.99 }
    }
}

type Row = Vec<(usize, f64)>;

/// Program lowered to standard form.
pub(crate) struct Lowered {
    pub nf: usize,
    pub nk: usize,
    pub c: Vec<f64>,
    pub c0: f64,
    pub a: Vec<Row>,
    pub b: Vec<f64>,
    pub g: Vec<Row>,
    pub h: Vec<f64>,
    pub g_cones: Vec<Cone>,
    pub v_cones: Vec<Cone>,
    /// Internal position of each declared variable.
    pub map: Vec<usize>,
}

pub(crate) fn lower(prog: &ConicProgram) -> Lowered {
    let n = prog.kinds.len();
    // Free variables first, then cone blocks in declaration order.
    let mut free_pos = vec![usize::MAX; n];
    let mut cone_pos = vec![usize::MAX; n];
    let mut nf = 0;
    for (v, k) in prog.kinds.iter().enumerate() {
        if *k == VarKind::Free {
            free_pos[v] = nf;
            nf += 1;
        }
    }
    let mut v_cones = Vec::new();
    let mut nk = 0;
    for (cone, start) in &prog.var_cones {
        for k in 0..cone.len() {
            cone_pos[start + k] = nk + k;
        }
        nk += cone.len();
        v_cones.push(*cone);
    }
    // Affine cones may only touch free variables; cone variables appearing
    // there are replaced by free copies tied by an equality.
    let mut copies: Vec<(usize, usize)> = Vec::new();
    let mut copy_of = vec![usize::MAX; n];
    for ac in &prog.cones {
        for e in &ac.rows {
            for &(v, _) in &e.terms {
                if prog.kinds[v] == VarKind::Cone && copy_of[v] == usize::MAX {
                    copy_of[v] = nf + copies.len();
                    copies.push((v, nf + copies.len()));
                }
            }
        }
    }
    let nf_total = nf + copies.len();
    let pos = |v: usize| -> usize {
        match prog.kinds[v] {
            VarKind::Free => free_pos[v],
            VarKind::Cone => nf_total + cone_pos[v],
        }
    };
    let to_row = |e: &LinExpr, free_only: bool| -> Row {
        let mut e = e.clone();
        e.compress();
        e.terms.iter().map(|&(v, c)| if free_only && prog.kinds[v] == VarKind::Cone { (copy_of[v], c) } else { (pos(v), c) }).collect()
    };
    let mut c = vec![0.0; nf_total + nk];
    for (j, coef) in to_row(&prog.objective, false) {
        c[j] += coef;
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for e in &prog.equalities {
        a.push(to_row(e, false));
        b.push(-e.constant);
    }
    for &(v, copy) in &copies {
        a.push(vec![(copy, 1.0), (pos(v), -1.0)]);
        b.push(0.0);
    }
    let mut g = Vec::new();
    let mut h = Vec::new();
    let mut g_cones = Vec::new();
    for AffineCone { cone, rows } in &prog.cones {
        for e in rows {
            g.push(to_row(e, true).into_iter().map(|(j, c)| (j, -c)).collect());
            h.push(e.constant);
        }
        g_cones.push(*cone);
    }
    let map = (0..n).map(pos).collect();
    Lowered { nf: nf_total, nk, c, c0: prog.objective.constant, a, b, g, h, g_cones, v_cones, map }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

struct Problem<'a> {
    lp: &'a Lowered,
    /// Cones of the combined slack `(s_G, s_V)` with their offsets.
    cones: Vec<(Cone, usize)>,
    mg: usize,
    nx: usize,
    m: usize,
    /// Equality rows restricted to each cone-variable block, in local
    /// coordinates.
    v_rows: Vec<Vec<(usize, Row)>>,
    /// Dense free-variable part of `A`.
    a_f: Mat,
}

impl<'a> Problem<'a> {
    fn new(lp: &'a Lowered) -> Self {
        let mg = lp.h.len();
        let mut cones = Vec::new();
        let mut off = 0;
        for c in lp.g_cones.iter().chain(&lp.v_cones) {
            cones.push((*c, off));
            off += c.len();
        }
        let nx = lp.nf + lp.nk;
        let m = lp.a.len();
        let mut block_of = vec![(0usize, 0usize); lp.nk];
        let mut off = 0;
        for (bi, c) in lp.v_cones.iter().enumerate() {
            for k in 0..c.len() {
                block_of[off + k] = (bi, k);
            }
            off += c.len();
        }
        let mut v_rows: Vec<Vec<(usize, Row)>> = vec![Vec::new(); lp.v_cones.len()];
        let mut a_f = Mat::zeros(m, lp.nf);
        for (r, row) in lp.a.iter().enumerate() {
            let mut per_block: Vec<(usize, Row)> = Vec::new();
            for &(j, v) in row {
                if j < lp.nf {
                    a_f[(r, j)] += v;
                } else {
                    let (bi, k) = block_of[j - lp.nf];
                    match per_block.iter_mut().find(|e| e.0 == bi) {
                        Some(e) => e.1.push((k, v)),
                        None => per_block.push((bi, vec![(k, v)])),
                    }
                }
            }
            for (bi, entries) in per_block {
                v_rows[bi].push((r, entries));
            }
        }
        Self { lp, cones, mg, nx, m, v_rows, a_f }
    }

    fn nz(&self) -> usize {
        self.mg + self.lp.nk
    }

    fn a_mul(&self, x: &[f64], out: &mut [f64]) {
        for (r, row) in self.lp.a.iter().enumerate() {
            out[r] = row.iter().map(|&(j, v)| v * x[j]).sum();
        }
    }

    fn at_mul_add(&self, y: &[f64], out: &mut [f64]) {
        for (r, row) in self.lp.a.iter().enumerate() {
            for &(j, v) in row {
                out[j] += v * y[r];
            }
        }
    }

    /// `out = G_t x = (G x_f, -x_k)`.
    fn gt_mul(&self, x: &[f64], out: &mut [f64]) {
        for (r, row) in self.lp.g.iter().enumerate() {
            out[r] = row.iter().map(|&(j, v)| v * x[j]).sum();
        }
        for k in 0..self.lp.nk {
            out[self.mg + k] = -x[self.lp.nf + k];
        }
    }

    /// `out += G_tᵀ z`.
    fn gtt_mul_add(&self, z: &[f64], out: &mut [f64]) {
        for (r, row) in self.lp.g.iter().enumerate() {
            for &(j, v) in row {
                out[j] += v * z[r];
            }
        }
        for k in 0..self.lp.nk {
            out[self.lp.nf + k] -= z[self.mg + k];
        }
    }

    fn h_full(&self) -> Vec<f64> {
        let mut h = self.lp.h.clone();
        h.resize(self.nz(), 0.0);
        h
    }
}

/// Scalings of every block of the combined slack.
struct Scalings(Vec<Scaling>);

impl Scalings {
    fn apply(&self, pb: &Problem, x: &[f64], out: &mut [f64], op: fn(&Scaling, Cone, &[f64], &mut [f64])) {
        for (i, (cone, off)) in pb.cones.iter().enumerate() {
            let len = cone.len();
            op(&self.0[i], *cone, &x[*off..off + len], &mut out[*off..off + len]);
        }
    }

    fn w(&self, pb: &Problem, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply(pb, x, &mut out, Scaling::apply_w);
        out
    }

    fn wt(&self, pb: &Problem, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply(pb, x, &mut out, Scaling::apply_wt);
        out
    }

    fn winv(&self, pb: &Problem, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply(pb, x, &mut out, Scaling::apply_winv);
        out
    }

    fn winvt(&self, pb: &Problem, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply(pb, x, &mut out, Scaling::apply_winvt);
        out
    }

    /// `WᵀW x`.
    fn wtw(&self, pb: &Problem, x: &[f64]) -> Vec<f64> {
        self.wt(pb, &self.w(pb, x))
    }

    /// `(WᵀW)⁻¹ x`.
    fn wtw_inv(&self, pb: &Problem, x: &[f64]) -> Vec<f64> {
        self.winv(pb, &self.winvt(pb, x))
    }
}

/// Factorization of the reduced matrix `[[H, A_fᵀ], [A_f, -M]]`.
enum Factor {
    /// Cholesky of `H` and of the Schur complement `S = M + A_f H⁻¹ A_fᵀ`,
    /// the latter diagonally equilibrated as `D S D`.
    Schur { h: Option<faer::linalg::solvers::Cholesky<f64>>, s: Option<faer::linalg::solvers::Cholesky<f64>>, d: Vec<f64> },
    /// Partial-pivot LU of the equilibrated matrix `D K D`.
    Lu { lu: faer::linalg::solvers::PartialPivLu<f64>, d: Vec<f64> },
}

/// Factored reduced Newton system for one scaling.
struct Kkt<'p, 'a> {
    pb: &'p Problem<'a>,
    w: &'p Scalings,
    factor: Factor,
}

/// Relative accuracy below which a Schur-complement solve is accepted.
const SCHUR_ACCURACY: f64 = 1e-6;

impl<'p, 'a> Kkt<'p, 'a> {
    /// `H = Gᵀ(WᵀW)⁻¹G` over the free variables.
    fn build_h(pb: &Problem, w: &Scalings) -> Mat {
        let nf = pb.lp.nf;
        let mut hmat = Mat::zeros(nf, nf);
        for (bi, (cone, off)) in pb.cones.iter().enumerate().take(pb.lp.g_cones.len()) {
            let len = cone.len();
            let mut cols: Vec<usize> = pb.lp.g[*off..off + len].iter().flat_map(|r| r.iter().map(|e| e.0)).collect();
            cols.sort_unstable();
            cols.dedup();
            if cols.is_empty() {
                continue;
            }
            let mut dense = Mat::zeros(len, cols.len());
            for (r, row) in pb.lp.g[*off..off + len].iter().enumerate() {
                for &(j, v) in row {
                    let cj = cols.binary_search(&j).expect("column collected above");
                    dense[(r, cj)] += v;
                }
            }
            let mut scaled = faer::Mat::<f64>::zeros(len, cols.len());
            let mut out = vec![0.0; len];
            for cj in 0..cols.len() {
                let col: Vec<f64> = dense.column(cj).iter().copied().collect();
                w.0[bi].apply_winvt(*cone, &col, &mut out);
                for (r, v) in out.iter().enumerate() {
                    scaled[(r, cj)] = *v;
                }
            }
            let mut gram = faer::Mat::<f64>::zeros(cols.len(), cols.len());
            faer::linalg::matmul::matmul(gram.as_mut(), scaled.transpose(), scaled.as_ref(), None, 1.0, faer::Parallelism::None);
            for (a, &ca) in cols.iter().enumerate() {
                for (b, &cb) in cols.iter().enumerate() {
                    hmat[(ca, cb)] += gram[(a, b)];
                }
            }
        }
        hmat
    }

    /// `M = A_k WᵀW A_kᵀ` over the equality rows.
    fn build_m(pb: &Problem, w: &Scalings) -> Mat {
        let m = pb.m;
        let mut mmat = Mat::zeros(m, m);
        let ng = pb.lp.g_cones.len();
        for (vb, rows) in pb.v_rows.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let cone = pb.lp.v_cones[vb];
            let sc = &w.0[ng + vb];
            match (cone, sc) {
                (Cone::Psd(dim), Scaling::Psd { r, .. }) => psd_schur(dim, &(r * r.transpose()), rows, &mut mmat),
                _ => {
                    let len = cone.len();
                    let scaled: Vec<(usize, Vec<f64>)> = rows
                        .iter()
                        .map(|(row, entries)| {
                            let mut a = vec![0.0; len];
                            for &(k, v) in entries {
                                a[k] += v;
                            }
                            let mut out = vec![0.0; len];
                            sc.apply_w(cone, &a, &mut out);
                            (*row, out)
                        })
                        .collect();
                    for (i, (ri, wi)) in scaled.iter().enumerate() {
                        for (rj, wj) in scaled.iter().take(i + 1) {
                            let v = dot(wi, wj);
                            mmat[(*ri, *rj)] += v;
                            if ri != rj {
                                mmat[(*rj, *ri)] += v;
                            }
                        }
                    }
                }
            }
        }
        mmat
    }

    fn factor(pb: &'p Problem<'a>, w: &'p Scalings, prefer_schur: bool) -> Result<Self> {
        let hmat = Self::build_h(pb, w);
        let mmat = Self::build_m(pb, w);
        if hmat.iter().chain(mmat.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(String::from("non-finite Newton system")));
        }
        if prefer_schur {
            if let Some(factor) = Self::factor_schur(pb, &hmat, &mmat) {
                return Ok(Self { pb, w, factor });
            }
        }
        Ok(Self { pb, w, factor: Self::factor_lu(pb, &hmat, &mmat) })
    }

    fn factor_schur(pb: &Problem, hmat: &Mat, mmat: &Mat) -> Option<Factor> {
        use faer::Side;
        let (nf, m) = (pb.lp.nf, pb.m);
        let hscale = (0..nf).map(|i| hmat[(i, i)]).fold(0.0, f64::max).max(1.0);
        let h = if nf > 0 {
            let fh = faer::Mat::<f64>::from_fn(nf, nf, |i, j| hmat[(i, j)] + if i == j { 1e-13 * hscale } else { 0.0 });
            Some(fh.cholesky(Side::Lower).ok()?)
        } else {
            None
        };
        let mut s = faer::Mat::<f64>::from_fn(m, m, |i, j| mmat[(i, j)]);
        if let Some(hc) = &h {
            // S += (L⁻¹A_fᵀ)ᵀ(L⁻¹A_fᵀ).
            let mut v = faer::Mat::<f64>::from_fn(nf, m, |i, j| pb.a_f[(j, i)]);
            hc.compute_l().as_ref().solve_lower_triangular_in_place(v.as_mut());
            faer::linalg::matmul::matmul(s.as_mut(), v.transpose(), v.as_ref(), Some(1.0), 1.0, faer::Parallelism::None);
        }
        if m == 0 {
            return Some(Factor::Schur { h, s: None, d: Vec::new() });
        }
        let d: Vec<f64> = (0..m)
            .map(|i| {
                let v = s.read(i, i);
                if v > 0.0 {
                    1.0 / v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let se = faer::Mat::<f64>::from_fn(m, m, |i, j| s.read(i, j) * d[i] * d[j] + if i == j { 1e-13 } else { 0.0 });
        let sc = se.cholesky(Side::Lower).ok()?;
        Some(Factor::Schur { h, s: Some(sc), d })
    }

    fn factor_lu(pb: &Problem, hmat: &Mat, mmat: &Mat) -> Factor {
        let (nf, m) = (pb.lp.nf, pb.m);
        let dim = nf + m;
        let mut k = faer::Mat::<f64>::zeros(dim, dim);
        for j in 0..nf {
            for i in 0..nf {
                k[(i, j)] = hmat[(i, j)];
            }
        }
        for j in 0..m {
            for i in 0..m {
                k[(nf + i, nf + j)] = -mmat[(i, j)];
            }
        }
        for i in 0..m {
            for j in 0..nf {
                let v = pb.a_f[(i, j)];
                k[(nf + i, j)] = v;
                k[(j, nf + i)] = v;
            }
        }
        // Symmetric Ruiz equilibration: the blocks of H and M can differ by
        // many orders of magnitude near the boundary of the cones.
        let mut d = vec![1.0; dim];
        for _ in 0..8 {
            let mut worst: f64 = 0.0;
            let r: Vec<f64> = (0..dim)
                .map(|i| {
                    let mx = (0..dim).map(|j| k[(i, j)].abs()).fold(0.0, f64::max);
                    worst = worst.max((1.0 - mx).abs());
                    if mx > 0.0 {
                        1.0 / mx.sqrt()
                    } else {
                        1.0
                    }
                })
                .collect();
            for j in 0..dim {
                for i in 0..dim {
                    k[(i, j)] *= r[i] * r[j];
                }
            }
            for (di, ri) in d.iter_mut().zip(&r) {
                *di *= ri;
            }
            if worst < 0.1 {
                break;
            }
        }
        for i in 0..nf {
            k[(i, i)] += 1e-13;
        }
        for i in nf..dim {
            k[(i, i)] -= 1e-13;
        }
        Factor::Lu { lu: k.partial_piv_lu(), d }
    }

    /// Solves `[[H, A_fᵀ], [A_f, -M]] (u, v) = (r1, r2)`.
    fn reduced_core(&self, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nf, m) = (self.pb.lp.nf, self.pb.m);
        match &self.factor {
            Factor::Lu { lu, d } => {
                let mut sol = faer::Mat::<f64>::from_fn(nf + m, 1, |i, _| if i < nf { r1[i] } else { r2[i - nf] } * d[i]);
                lu.solve_in_place(sol.as_mut());
                ((0..nf).map(|i| sol[(i, 0)] * d[i]).collect(), (0..m).map(|i| sol[(nf + i, 0)] * d[nf + i]).collect())
            }
            Factor::Schur { h, s, d } => {
                let a_f = &self.pb.a_f;
                let hsolve = |v: &[f64]| -> Vec<f64> {
                    match h {
                        Some(hc) => {
                            let mut col = faer::Mat::<f64>::from_fn(nf, 1, |i, _| v[i]);
                            hc.solve_in_place(col.as_mut());
                            (0..nf).map(|i| col[(i, 0)]).collect()
                        }
                        None => Vec::new(),
                    }
                };
                let u0 = hsolve(r1);
                let mut rhs: Vec<f64> = r2.iter().map(|v| -v).collect();
                for i in 0..m {
                    for j in 0..nf {
                        rhs[i] += a_f[(i, j)] * u0[j];
                    }
                }
                let dy: Vec<f64> = match s {
                    Some(sc) => {
                        let mut col = faer::Mat::<f64>::from_fn(m, 1, |i, _| rhs[i] * d[i]);
                        sc.solve_in_place(col.as_mut());
                        (0..m).map(|i| col[(i, 0)] * d[i]).collect()
                    }
                    None => Vec::new(),
                };
                let mut r = r1.to_vec();
                for i in 0..m {
                    for j in 0..nf {
                        r[j] -= a_f[(i, j)] * dy[i];
                    }
                }
                (hsolve(&r), dy)
            }
        }
    }

    fn reduced_solve(&self, bx: &[f64], by: &[f64], bz: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let pb = self.pb;
        let (nf, nk, mg, m) = (pb.lp.nf, pb.lp.nk, pb.mg, pb.m);
        let w = self.w;
        // (WᵀW)⁻¹ on the affine-cone part of bz.
        let mut bz_g = bz.to_vec();
        for x in bz_g[mg..].iter_mut() {
            *x = 0.0;
        }
        let tg = w.wtw_inv(pb, &bz_g);
        let mut rhs = vec![0.0; nf + m];
        rhs[..nf].copy_from_slice(&bx[..nf]);
        for (r, row) in pb.lp.g.iter().enumerate() {
            for &(j, v) in row {
                rhs[j] += v * tg[r];
            }
        }
        // r2 = by + A_k bz_V − A_k (WᵀW)_V bx_k.
        let mut xk = vec![0.0; mg + nk];
        xk[mg..].copy_from_slice(&bx[nf..]);
        let wx = w.wtw(pb, &xk);
        let mut tmp = vec![0.0; nf + nk];
        for k in 0..nk {
            tmp[nf + k] = bz[mg + k] - wx[mg + k];
        }
        let mut ak = vec![0.0; m];
        pb.a_mul(&tmp, &mut ak);
        for i in 0..m {
            rhs[nf + i] = by[i] + ak[i];
        }
        let (dxf, dy) = self.reduced_core(&rhs[..nf], &rhs[nf..]);
        // dz_V = A_kᵀ dy − bx_k; dx_k = −bz_V − (WᵀW)_V dz_V.
        let mut aty = vec![0.0; nf + nk];
        pb.at_mul_add(&dy, &mut aty);
        let mut dz = vec![0.0; mg + nk];
        for k in 0..nk {
            dz[mg + k] = aty[nf + k] - bx[nf + k];
        }
        let wdz = w.wtw(pb, &{
            let mut v = vec![0.0; mg + nk];
            v[mg..].copy_from_slice(&dz[mg..]);
            v
        });
        let mut dx = vec![0.0; nf + nk];
        dx[..nf].copy_from_slice(&dxf);
        for k in 0..nk {
            dx[nf + k] = -bz[mg + k] - wdz[mg + k];
        }
        // dz_G = (WᵀW)⁻¹ (G dx_f − bz_G).
        let mut gdx = vec![0.0; mg + nk];
        for (r, row) in pb.lp.g.iter().enumerate() {
            gdx[r] = row.iter().map(|&(j, v)| v * dx[j]).sum::<f64>() - bz[r];
        }
        let dzg = w.wtw_inv(pb, &gdx);
        dz[..mg].copy_from_slice(&dzg[..mg]);
        (dx, dy, dz)
    }

    /// Full Newton operator, for iterative refinement.
    fn apply(&self, dx: &[f64], dy: &[f64], dz: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let pb = self.pb;
        let mut rx = vec![0.0; pb.nx];
        pb.at_mul_add(dy, &mut rx);
        pb.gtt_mul_add(dz, &mut rx);
        let mut ry = vec![0.0; pb.m];
        pb.a_mul(dx, &mut ry);
        let mut rz = vec![0.0; pb.nz()];
        pb.gt_mul(dx, &mut rz);
        let wz = self.w.wtw(pb, dz);
        axpy(-1.0, &wz, &mut rz);
        (rx, ry, rz)
    }

    /// Solves `[[0, Aᵀ, G_tᵀ], [A, 0, 0], [G_t, 0, -WᵀW]] (dx, dy, dz) = (bx, by, bz)`.
    fn solve(&self, bx: &[f64], by: &[f64], bz: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (dx, dy, dz, _) = self.solve_checked(bx, by, bz);
        (dx, dy, dz)
    }

    /// As [`Self::solve`], also returning the relative residual reached.
    fn solve_checked(&self, bx: &[f64], by: &[f64], bz: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let (mut dx, mut dy, mut dz) = self.reduced_solve(bx, by, bz);
        let mut rel = f64::INFINITY;
        for round in 0..8 {
            let (rx, ry, rz) = self.apply(&dx, &dy, &dz);
            let ex: Vec<f64> = bx.iter().zip(&rx).map(|(a, b)| a - b).collect();
            let ey: Vec<f64> = by.iter().zip(&ry).map(|(a, b)| a - b).collect();
            let ez: Vec<f64> = bz.iter().zip(&rz).map(|(a, b)| a - b).collect();
            let err = norm(&ex) + norm(&ey) + norm(&ez);
            let scale = norm(bx) + norm(by) + norm(bz);
            let r = if scale > 0.0 { err / scale } else { err };
            // Stop once converged or once refinement stagnates.
            if !(err > 1e-14 * scale) || (round > 0 && !(r < 0.5 * rel)) {
                rel = rel.min(r);
                break;
            }
            rel = r;
            let (cx, cy, cz) = self.reduced_solve(&ex, &ey, &ez);
            axpy(1.0, &cx, &mut dx);
            axpy(1.0, &cy, &mut dy);
            axpy(1.0, &cz, &mut dz);
        }
        (dx, dy, dz, rel)
    }
}

/// Adds `M_ab = tr(E_a T E_b T)` for every pair of equality rows touching a
/// PSD block, with `E_a = smat(a)`.
fn psd_schur(dim: usize, t: &Mat, rows: &[(usize, Row)], out: &mut Mat) {
    // Expand each row into full-matrix entries (i, j, value).
    let mut inv = vec![(0usize, 0usize); super::svec_len(dim)];
    for j in 0..dim {
        for i in j..dim {
            inv[svec_index(dim, i, j)] = (i, j);
        }
    }
    let expanded: Vec<Vec<(usize, usize, f64)>> = rows
        .iter()
        .map(|(_, entries)| {
            let mut e = Vec::with_capacity(2 * entries.len());
            for &(k, v) in entries {
                let (i, j) = inv[k];
                if i == j {
                    e.push((i, i, v));
                } else {
                    e.push((i, j, v / SQRT2));
                    e.push((j, i, v / SQRT2));
                }
            }
            e
        })
        .collect();
    let ts = t.as_slice();
    let tget = |r: usize, c: usize| ts[r + c * dim];
    let (heavy, light): (Vec<usize>, Vec<usize>) = (0..rows.len()).partition(|&a| expanded[a].len() > HEAVY_ROW);
    let mut put = |a: usize, b: usize, v: f64| {
        let (ra, rb) = (rows[a].0, rows[b].0);
        out[(ra, rb)] += v;
        if ra != rb {
            out[(rb, ra)] += v;
        }
    };
    // Rows with many entries: form S_b = T E_b T = T[:, I] diag(v) T[J, :]
    // by one matrix product and read every M_ab off it.
    let tf = faer::Mat::<f64>::from_fn(dim, dim, |i, j| tget(i, j));
    let mut sb = faer::Mat::<f64>::zeros(dim, dim);
    for (hi, &b) in heavy.iter().enumerate() {
        let eb = &expanded[b];
        let left = faer::Mat::<f64>::from_fn(dim, eb.len(), |r, c| tf.read(r, eb[c].0) * eb[c].2);
        let right = faer::Mat::<f64>::from_fn(eb.len(), dim, |r, c| tf.read(eb[r].1, c));
        faer::linalg::matmul::matmul(sb.as_mut(), left.as_ref(), right.as_ref(), None, 1.0, faer::Parallelism::None);
        let read = |a: usize| expanded[a].iter().map(|&(i, j, va)| va * sb.read(j, i)).sum::<f64>();
        for &a in heavy.iter().take(hi + 1) {
            put(a, b, read(a));
        }
        for &a in &light {
            put(a, b, read(a));
        }
    }
    for (li, &a) in light.iter().enumerate() {
        let ea = &expanded[a];
        for &b in light.iter().take(li + 1) {
            let eb = &expanded[b];
            let mut acc = 0.0;
            for &(i, j, va) in ea {
                let mut inner = 0.0;
                for &(k, l, vb) in eb {
                    inner += vb * tget(j, k) * tget(l, i);
                }
                acc += va * inner;
            }
            put(a, b, acc);
        }
    }
}

/// Rows of a PSD block with more expanded entries than this go through a
/// dense product in [`psd_schur`].
const HEAVY_ROW: usize = 16;

struct State {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

pub(crate) fn solve(prog: &ConicProgram, opts: &SolverOptions) -> Result<ConicSolution> {
    prog.check()?;
    let lp = lower(prog);
    let pb = Problem::new(&lp);
    let raw = run(&pb, opts)?;
    let x: Vec<f64> = lp.map.iter().map(|&i| raw.x[i]).collect();
    Ok(ConicSolution {
        status: raw.status,
        x,
        objective: raw.pcost + lp.c0,
        dual_objective: raw.dcost + lp.c0,
        residuals: raw.residuals,
        iterations: raw.iterations,
        certificate: raw.certificate,
    })
}

struct RawSolution {
    status: SolveStatus,
    x: Vec<f64>,
    pcost: f64,
    dcost: f64,
    residuals: Residuals,
    iterations: usize,
    certificate: Option<Vec<f64>>,
}

fn degree(pb: &Problem) -> f64 {
    pb.cones.iter().map(|(c, _)| c.degree()).sum::<usize>() as f64
}

fn push_interior(pb: &Problem, v: &mut [f64]) {
    let mut worst = f64::INFINITY;
    for (c, off) in &pb.cones {
        worst = worst.min(min_eig(*c, &v[*off..off + c.len()]));
    }
    if pb.cones.is_empty() {
        return;
    }
    let nrm = norm(v);
    if worst <= 1e-8 * nrm.max(1.0) {
        let shift = 1.0 - worst.min(0.0);
        let shift = if worst >= 0.0 { 1.0 } else { shift };
        for (c, off) in &pb.cones {
            let mut e = vec![0.0; c.len()];
            identity(*c, &mut e);
            axpy(shift, &e, &mut v[*off..off + c.len()]);
        }
    }
}

fn run(pb: &Problem, opts: &SolverOptions) -> Result<RawSolution> {
    let lp = pb.lp;
    let (nx, m, nz) = (pb.nx, pb.m, pb.nz());
    let h = pb.h_full();
    let c = &lp.c;
    let b = &lp.b;
    let tol = opts.tol;
    let deg = degree(pb);

    // Starting point from the identity scaling.
    let ident = Scalings(pb.cones.iter().map(|(c, _)| Scaling::identity(*c)).collect());
    let kkt0 = Kkt::factor(pb, &ident, false)?;
    let zeros_x = vec![0.0; nx];
    let zeros_y = vec![0.0; m];
    let zeros_z = vec![0.0; nz];
    let (x0, _, z0) = kkt0.solve(&zeros_x, b, &h);
    let mut s: Vec<f64> = z0.iter().map(|v| -v).collect();
    let negc: Vec<f64> = c.iter().map(|v| -v).collect();
    let (_, y0, mut z) = kkt0.solve(&negc, &zeros_y, &zeros_z);
    push_interior(pb, &mut s);
    push_interior(pb, &mut z);
    let mut st = State { x: x0, y: y0, z: core::mem::take(&mut z), s, tau: 1.0, kappa: 1.0 };

    let resx0 = norm(c).max(1.0);
    let resy0 = norm(b).max(1.0);
    let resz0 = norm(&h).max(1.0);
    let mut last = RawSolution {
        status: SolveStatus::NumericalFailure,
        x: vec![0.0; nx],
        pcost: f64::NAN,
        dcost: f64::NAN,
        residuals: Residuals::default(),
        iterations: 0,
        certificate: None,
    };

    let mut use_schur = true;
    for iter in 0..=opts.max_iter {
        // Residuals of the homogeneous embedding.
        let mut hrx = vec![0.0; nx];
        pb.at_mul_add(&st.y, &mut hrx);
        pb.gtt_mul_add(&st.z, &mut hrx);
        let mut hry = vec![0.0; m];
        pb.a_mul(&st.x, &mut hry);
        let mut hrz = vec![0.0; nz];
        pb.gt_mul(&st.x, &mut hrz);
        axpy(1.0, &st.s, &mut hrz);
        let mut rx = hrx.clone();
        axpy(st.tau, c, &mut rx);
        let mut ry = hry.clone();
        axpy(-st.tau, b, &mut ry);
        let mut rz = hrz.clone();
        axpy(-st.tau, &h, &mut rz);
        let cx = dot(c, &st.x);
        let by = dot(b, &st.y);
        let hz = dot(&h, &st.z);
        let rt = st.kappa + cx + by + hz;
        let gap = dot(&st.s, &st.z);
        let mu = (gap + st.tau * st.kappa) / (deg + 1.0);
        let pcost = cx / st.tau;
        let dcost = -(by + hz) / st.tau;
        let relgap = if pcost < 0.0 {
            gap / st.tau / st.tau / -pcost
        } else if dcost > 0.0 {
            gap / st.tau / st.tau / dcost
        } else {
            f64::INFINITY
        };
        let pres = (norm(&ry) / st.tau / resy0).max(norm(&rz) / st.tau / resz0);
        let dres = norm(&rx) / st.tau / resx0;
        let residuals = Residuals { primal: pres, dual: dres, gap: gap / st.tau / st.tau };
        let pinf = if hz + by < 0.0 { norm(&hrx) / resx0 / -(hz + by) } else { f64::INFINITY };
        let dinf = if cx < 0.0 { (norm(&hry) / resy0).max(norm(&hrz) / resz0) / -cx } else { f64::INFINITY };

        if pres <= tol && dres <= tol && (residuals.gap <= tol || relgap <= tol) {
            return Ok(RawSolution {
                status: SolveStatus::Optimal,
                x: st.x.iter().map(|v| v / st.tau).collect(),
                pcost,
                dcost,
                residuals,
                iterations: iter,
                certificate: None,
            });
        }
        if pinf <= tol {
            let scale = -(hz + by);
            let mut cert: Vec<f64> = st.y.iter().map(|v| v / scale).collect();
            cert.extend(st.z.iter().map(|v| v / scale));
            return Ok(RawSolution {
                status: SolveStatus::Infeasible,
                x: vec![f64::NAN; nx],
                pcost: f64::INFINITY,
                dcost: f64::INFINITY,
                residuals,
                iterations: iter,
                certificate: Some(cert),
            });
        }
        if dinf <= tol {
            let cert: Vec<f64> = st.x.iter().map(|v| v / -cx).collect();
            return Ok(RawSolution {
                status: SolveStatus::Unbounded,
                x: vec![f64::NAN; nx],
                pcost: f64::NEG_INFINITY,
                dcost: f64::NEG_INFINITY,
                residuals,
                iterations: iter,
                certificate: Some(cert),
            });
        }
        last = RawSolution {
            status: SolveStatus::NumericalFailure,
            x: st.x.iter().map(|v| v / st.tau).collect(),
            pcost,
            dcost,
            residuals,
            iterations: iter,
            certificate: None,
        };
        if iter == opts.max_iter {
            break;
        }

        // Scaling at the current point.
        let mut scs = Vec::with_capacity(pb.cones.len());
        let mut lambda = vec![0.0; nz];
        let mut ok = true;
        for (cone, off) in &pb.cones {
            let len = cone.len();
            match Scaling::compute(*cone, &st.s[*off..off + len], &st.z[*off..off + len]) {
                Some((sc, l)) => {
                    lambda[*off..off + len].copy_from_slice(&l);
                    scs.push(sc);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let w = Scalings(scs);
        let Ok(mut kkt) = Kkt::factor(pb, &w, use_schur) else { break };
        let (mut x1, mut y1, mut z1, acc) = kkt.solve_checked(&negc, b, &h);
        if use_schur && !(acc <= SCHUR_ACCURACY) {
            // The Schur complement has lost accuracy. Move to LU for good only
            // if it does markedly better.
            let Ok(k) = Kkt::factor(pb, &w, false) else { break };
            let (lx, ly, lz, lacc) = k.solve_checked(&negc, b, &h);
            if !(acc <= 10.0 * lacc) {
                use_schur = false;
                kkt = k;
                (x1, y1, z1) = (lx, ly, lz);
            }
        }
        let denom_base = dot(c, &x1) + dot(b, &y1) + dot(&h, &z1);

        let lambda_sq = jordan_all(pb, &lambda, &lambda);
        let mut e = vec![0.0; nz];
        for (cone, off) in &pb.cones {
            identity(*cone, &mut e[*off..off + cone.len()]);
        }

        let newton = |sigma: f64, corr: Option<(&[f64], f64)>| -> Step {
            let eta = sigma;
            // Complementarity targets.
            let mut rc: Vec<f64> = lambda_sq.iter().map(|v| -v).collect();
            axpy(sigma * mu, &e, &mut rc);
            let mut rk = -st.tau * st.kappa + sigma * mu;
            if let Some((ds_dz, dtk)) = corr {
                axpy(-1.0, ds_dz, &mut rc);
                rk -= dtk;
            }
            let lr = jordan_div_all(pb, &lambda, &rc);
            let wt_lr = w.wt(pb, &lr);
            let bx: Vec<f64> = rx.iter().map(|v| -(1.0 - eta) * v).collect();
            let byv: Vec<f64> = ry.iter().map(|v| -(1.0 - eta) * v).collect();
            let bz: Vec<f64> = rz.iter().zip(&wt_lr).map(|(v, q)| -(1.0 - eta) * v - q).collect();
            let (x0, y0, z0) = kkt.solve(&bx, &byv, &bz);
            let num = -(1.0 - eta) * rt - rk / st.tau - (dot(c, &x0) + dot(b, &y0) + dot(&h, &z0));
            let den = denom_base - st.kappa / st.tau;
            let dtau = num / den;
            let mut dx = x0;
            axpy(dtau, &x1, &mut dx);
            let mut dy = y0;
            axpy(dtau, &y1, &mut dy);
            let mut dz = z0;
            axpy(dtau, &z1, &mut dz);
            let dkappa = (rk - st.kappa * dtau) / st.tau;
            // ds = Wᵀ(λ⧵rc − W dz).
            let wdz = w.w(pb, &dz);
            let inner: Vec<f64> = lr.iter().zip(&wdz).map(|(a, b)| a - b).collect();
            let ds = w.wt(pb, &inner);
            let ds_t = w.winvt(pb, &ds);
            Step { dx, dy, dz, ds, dtau, dkappa, ds_scaled: ds_t, dz_scaled: wdz }
        };

        let step_len = |d: &Step| -> f64 {
            let mut a = f64::INFINITY;
            for (cone, off) in &pb.cones {
                let len = cone.len();
                let l = &lambda[*off..off + len];
                a = a.min(max_step(*cone, l, &d.ds_scaled[*off..off + len]));
                a = a.min(max_step(*cone, l, &d.dz_scaled[*off..off + len]));
            }
            if d.dtau < 0.0 {
                a = a.min(-st.tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-st.kappa / d.dkappa);
            }
            a
        };

        let pred = newton(0.0, None);
        let alpha_aff = step_len(&pred).min(1.0);
        let sigma = (1.0 - alpha_aff).max(0.0).powi(3).min(1.0);
        let ds_dz = jordan_all(pb, &pred.ds_scaled, &pred.dz_scaled);
        let corr = newton(sigma, Some((&ds_dz, pred.dtau * pred.dkappa)));
        let alpha = (opts.step_fraction * step_len(&corr)).min(1.0);
        if !(alpha > 1e-12) || !corr.dx.iter().all(|v| v.is_finite()) {
            break;
        }
        axpy(alpha, &corr.dx, &mut st.x);
        axpy(alpha, &corr.dy, &mut st.y);
        axpy(alpha, &corr.dz, &mut st.z);
        axpy(alpha, &corr.ds, &mut st.s);
        st.tau += alpha * corr.dtau;
        st.kappa += alpha * corr.dkappa;
        // Keep the embedding scale bounded.
        let scale = st.tau.max(st.kappa);
        if scale > 1e8 || scale < 1e-8 {
            for v in st.x.iter_mut().chain(st.y.iter_mut()).chain(st.z.iter_mut()).chain(st.s.iter_mut()) {
                *v /= scale;
            }
            st.tau /= scale;
            st.kappa /= scale;
        }
    }
    Ok(last)
}

struct Step {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
    ds_scaled: Vec<f64>,
    dz_scaled: Vec<f64>,
}

fn jordan_all(pb: &Problem, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for (cone, off) in &pb.cones {
        let len = cone.len();
        jordan(*cone, &a[*off..off + len], &b[*off..off + len], &mut out[*off..off + len]);
    }
    out
}

fn jordan_div_all(pb: &Problem, lambda: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    for (cone, off) in &pb.cones {
        let len = cone.len();
        jordan_div(*cone, &lambda[*off..off + len], &y[*off..off + len], &mut out[*off..off + len]);
    }
    out
}
