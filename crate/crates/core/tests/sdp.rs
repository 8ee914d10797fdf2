use coarse_id_core::linalg::{lambda_min, op_norm, Mat};
use coarse_id_core::sdp::{AffineMatrix, ConicProgram, LinExpr, SolveStatus, SolverOptions};

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn scalar_lower_bound() {
    let mut p = ConicProgram::new();
    let x = p.free();
    p.add_ge(x.into(), LinExpr::constant(1.0));
    p.minimize(x.into());
    let s = p.solve(&opts()).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.var(x) - 1.0).abs() < 1e-7, "{}", s.var(x));
}

#[test]
fn trace_constrained_psd_picks_smallest_eigenvector() {
    let c = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
    let mut p = ConicProgram::new();
    let x = p.psd(2);
    let mut obj = LinExpr::zero();
    let mut tr = LinExpr::zero();
    for i in 0..2 {
        tr += &x.entry(i, i);
        for j in 0..2 {
            obj += &x.entry(i, j).scaled(c[(i, j)]);
        }
    }
    p.add_eq(tr, LinExpr::constant(1.0));
    p.minimize(obj);
    let s = p.solve(&opts()).unwrap();
    assert!(s.is_optimal());
    let xm = s.psd(&x);
    assert!((xm[(0, 0)] - 1.0).abs() < 1e-6);
    assert!(xm[(1, 1)].abs() < 1e-6);
    assert!((s.objective - 1.0).abs() < 1e-7);
}

#[test]
fn contradictory_bounds_are_infeasible() {
    let mut p = ConicProgram::new();
    let x = p.free();
    p.add_ge(x.into(), LinExpr::constant(1.0));
    p.add_le(x.into(), LinExpr::constant(0.0));
    p.minimize(x.into());
    let s = p.solve(&opts()).unwrap();
    assert_eq!(s.status, SolveStatus::Infeasible);
    assert!(s.certificate.is_some());
}

#[test]
fn unbounded_objective_is_detected() {
    let mut p = ConicProgram::new();
    let x = p.free();
    p.add_le(x.into(), LinExpr::constant(0.0));
    p.minimize(x.into());
    let s = p.solve(&opts()).unwrap();
    assert_eq!(s.status, SolveStatus::Unbounded);
}

#[test]
fn soc_distance_to_line() {
    let mut p = ConicProgram::new();
    let t = p.free();
    let x = p.free();
    let y = p.free();
    p.add_eq(LinExpr::from(x) + LinExpr::from(y), LinExpr::constant(1.0));
    p.add_soc(vec![t.into(), LinExpr::from(x) - LinExpr::constant(3.0), LinExpr::from(y) - LinExpr::constant(4.0)]);
    p.minimize(t.into());
    let s = p.solve(&opts()).unwrap();
    assert!(s.is_optimal());
    assert!((s.objective - 6.0 / 2f64.sqrt()).abs() < 1e-7);
    assert!((s.var(x) - 0.0).abs() < 1e-6 && (s.var(y) - 1.0).abs() < 1e-6);
}

#[test]
fn soc_variable_block() {
    // min t  s.t. (t, v) ∈ SOC, v = (1, 2, 2)
    let mut p = ConicProgram::new();
    let q = p.soc(4);
    for (k, val) in [1.0, 2.0, 2.0].into_iter().enumerate() {
        p.add_eq(q.entry(k + 1).into(), LinExpr::constant(val));
    }
    p.minimize(q.entry(0).into());
    let s = p.solve(&opts()).unwrap();
    assert!(s.is_optimal());
    assert!((s.objective - 3.0).abs() < 1e-7);
}

#[test]
fn lmi_recovers_spectral_norm() {
    let m = Mat::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.3, 1.5, -1.0]);
    let mut p = ConicProgram::new();
    let g = p.free();
    let gi2 = AffineMatrix::from_constant(&Mat::identity(2, 2));
    let gi3 = AffineMatrix::from_constant(&Mat::identity(3, 3));
    let scale = |a: &AffineMatrix, n: usize| {
        let mut out = AffineMatrix::zeros(n, n);
        for i in 0..n {
            out.set(i, i, LinExpr::term(g, a.get(i, i).constant_part()));
        }
        out
    };
    let (d2, d3) = (scale(&gi2, 2), scale(&gi3, 3));
    let mc = AffineMatrix::from_constant(&m);
    let mt = mc.transpose();
    let lmi = AffineMatrix::blocks(&[vec![Some(&d2), Some(&mc)], vec![Some(&mt), Some(&d3)]], &[2, 3], &[2, 3]);
    p.add_psd(&lmi).unwrap();
    p.minimize(g.into());
    let s = p.solve(&opts()).unwrap();
    assert!(s.is_optimal());
    assert!((s.objective - op_norm(&m)).abs() < 1e-7);
    assert!(lambda_min(&s.matrix(&lmi)) >= -1e-7);
}

#[test]
fn mixed_cones_feasible_point() {
    // Random-ish SDP: min ⟨C, X⟩ s.t. ⟨A_i, X⟩ = b_i, X ⪰ 0, plus x ≥ 0 scalars.
    let c = Mat::from_row_slice(3, 3, &[2.0, 0.5, -0.3, 0.5, 1.0, 0.2, -0.3, 0.2, 3.0]);
    let a1 = Mat::identity(3, 3);
    let a2 = Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    let mut p = ConicProgram::new();
    let x = p.psd(3);
    let u = p.nonneg();
    let inner = |a: &Mat| {
        let mut e = LinExpr::zero();
        for i in 0..3 {
            for j in 0..3 {
                e += &x.entry(i, j).scaled(a[(i, j)]);
            }
        }
        e
    };
    p.add_eq(inner(&a1), LinExpr::constant(1.0));
    p.add_eq(inner(&a2) + LinExpr::from(u), LinExpr::constant(0.5));
    p.minimize(inner(&c) + LinExpr::term(u, 0.1));
    let s = p.solve(&opts()).unwrap();
    assert!(s.is_optimal(), "{:?}", s.status);
    assert!(lambda_min(&s.psd(&x)) >= -1e-7);
    assert!(s.var(u) >= -1e-8);
    // Weak duality holds up to tolerance.
    assert!(s.objective - s.dual_objective >= -1e-7);
    // Reference value from an independent conic solver.
    assert!((s.objective - 0.891_911_81).abs() < 2e-7, "{}", s.objective);
}

#[test]
fn sdpa_export_lists_blocks() {
    let mut p = ConicProgram::new();
    let x = p.psd(2);
    let t = p.free();
    p.add_eq(x.entry(0, 0) + x.entry(1, 1), LinExpr::constant(1.0));
    p.add_le(t.into(), LinExpr::constant(2.0));
    p.minimize(x.entry(0, 1) + LinExpr::from(t));
    let text = coarse_id_core::sdp::write_sdpa(&p);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "4");
    assert_eq!(lines[2], "2");
    assert_eq!(lines[3], "2 -3");
    // Every entry line has five fields and references a valid block.
    for l in &lines[5..] {
        let f: Vec<&str> = l.split_whitespace().collect();
        assert_eq!(f.len(), 5, "{l}");
        let blk: usize = f[1].parse().unwrap();
        assert!((1..=2).contains(&blk));
        let (i, j): (usize, usize) = (f[2].parse().unwrap(), f[3].parse().unwrap());
        assert!(i <= j);
    }
}
