//! Export to the SDPA sparse format for cross-checking with external solvers.
//!
//! Every declared variable becomes an SDPA variable and every constraint an
//! LMI block of `F(x) = Σ xᵢFᵢ − F₀ ⪰ 0`: equalities as pairs of diagonal
//! entries, second-order cones as arrow matrices.

use super::{svec_index, Cone, ConicProgram, LinExpr, Var, SQRT2};
use crate::prelude::*;
use core::fmt::Write;

type Entries = Vec<(usize, usize, LinExpr)>;

fn arrow(rows: &[LinExpr]) -> Entries {
    let mut out = Vec::new();
    for (k, e) in rows.iter().enumerate() {
        if k == 0 {
            for d in 0..rows.len() {
                out.push((d, d, e.clone()));
            }
        } else {
            out.push((0, k, e.clone()));
        }
    }
    out
}

fn psd_entries(dim: usize, rows: &[LinExpr]) -> Entries {
    let mut out = Vec::new();
    for j in 0..dim {
        for i in j..dim {
            let e = &rows[svec_index(dim, i, j)];
            out.push((j, i, if i == j { e.clone() } else { e.scaled(1.0 / SQRT2) }));
        }
    }
    out
}

/// Serializes `prog` in SDPA sparse format (`.dat-s`).
pub fn write_sdpa(prog: &ConicProgram) -> String {
    let mut diag: Vec<LinExpr> = Vec::new();
    let mut mats: Vec<(usize, Entries)> = Vec::new();
    for e in &prog.equalities {
        diag.push(e.clone());
        diag.push(e.scaled(-1.0));
    }
    let mut push_cone = |cone: Cone, rows: Vec<LinExpr>, diag: &mut Vec<LinExpr>| match cone {
        Cone::Lp(_) => diag.extend(rows),
        Cone::Soc(d) => mats.push((d, arrow(&rows))),
        Cone::Psd(m) => mats.push((m, psd_entries(m, &rows))),
    };
    for &(cone, start) in &prog.var_cones {
        let rows = (0..cone.len()).map(|k| LinExpr::term(Var(start + k), 1.0)).collect();
        push_cone(cone, rows, &mut diag);
    }
    for ac in &prog.cones {
        push_cone(ac.cone, ac.rows.clone(), &mut diag);
    }

    let m = prog.kinds.len();
    let mut out = String::new();
    let _ = writeln!(out, "\"objective constant {}\"", prog.objective.constant);
    let _ = writeln!(out, "{m}");
    let nblocks = mats.len() + usize::from(!diag.is_empty());
    let _ = writeln!(out, "{nblocks}");
    let mut sizes: Vec<String> = mats.iter().map(|(d, _)| format!("{d}")).collect();
    if !diag.is_empty() {
        sizes.push(format!("-{}", diag.len()));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let mut c = vec![0.0; m];
    for &(v, coef) in &prog.objective.terms {
        c[v] += coef;
    }
    let cs: Vec<String> = c.iter().map(|v| format!("{v}")).collect();
    let _ = writeln!(out, "{}", cs.join(" "));

    let mut emit = |block: usize, i: usize, j: usize, e: &LinExpr| {
        let mut e = e.clone();
        e.compress();
        if e.constant != 0.0 {
            let _ = writeln!(out, "0 {block} {} {} {}", i + 1, j + 1, -e.constant);
        }
        for &(v, coef) in &e.terms {
            let _ = writeln!(out, "{} {block} {} {} {}", v + 1, i + 1, j + 1, coef);
        }
    };
    for (b, (_, entries)) in mats.iter().enumerate() {
        for (i, j, e) in entries {
            emit(b + 1, *i, *j, e);
        }
    }
    if !diag.is_empty() {
        let b = mats.len() + 1;
        for (k, e) in diag.iter().enumerate() {
            emit(b, k, k, e);
        }
    }
    out
}
