//! Golden-section search over the robustness level `γ`.

use super::GammaEvaluation;
use crate::prelude::*;
use crate::sdp::{ConicProgram, ConicSolution, SolveStatus, SolverOptions};
use crate::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSearch {
    pub lower: f64,
    pub upper: f64,
    /// Width of the final bracket.
    pub tol: f64,
    /// Pin `γ` and minimize the nominal cost instead of the bound.
    pub fixed: Option<f64>,
    pub solver: SolverOptions,
}

impl Default for GammaSearch {
    fn default() -> Self {
        Self { lower: 0.0, upper: 1.0 - 1e-4, tol: 1e-3, fixed: None, solver: SolverOptions::default() }
    }
}

impl GammaSearch {
    pub fn fixed(gamma: f64) -> Self {
        Self { fixed: Some(gamma), ..Self::default() }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if let Some(g) = self.fixed {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::InvalidArgument(format!("fixed gamma must lie in (0, 1), got {g}")));
            }
        } else if !(self.lower >= 0.0 && self.lower < self.upper && self.upper < 1.0 && self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma bracket must satisfy 0 <= lower < upper < 1 with tol > 0, got [{}, {}] tol {}",
                self.lower, self.upper, self.tol
            )));
        }
        Ok(())
    }
}

/// Outcome of the search: every evaluation plus the best point.
pub(crate) struct SearchOutcome<T> {
    pub evaluations: Vec<GammaEvaluation>,
    pub best: Option<(f64, f64, T)>,
}

struct Tracker<T, F> {
    eval: F,
    evaluations: Vec<GammaEvaluation>,
    best: Option<(f64, f64, T)>,
    failure: Option<Error>,
}

impl<T, F: FnMut(f64) -> Result<Option<(f64, T)>>> Tracker<T, F> {
    fn at(&mut self, gamma: f64) -> f64 {
        if let Some(e) = self.evaluations.iter().find(|e| e.gamma == gamma) {
            return e.value;
        }
        let value = match (self.eval)(gamma) {
            Ok(Some((value, payload))) if value.is_finite() => {
                let better = match &self.best {
                    None => true,
                    Some((g, v, _)) => value < *v || (value == *v && gamma < *g),
                };
                if better {
                    self.best = Some((gamma, value, payload));
                }
                value
            }
            Ok(_) => f64::INFINITY,
            Err(e) => {
                // A numerical failure counts as infeasible here; it is only
                // reported if no feasible point turns up at all.
                self.failure.get_or_insert(e);
                f64::INFINITY
            }
        };
        self.evaluations.push(GammaEvaluation { gamma, value });
        value
    }
}

/// Solves the inner program at `gamma`: `None` when it is infeasible.
pub(crate) fn solve_inner(prog: &ConicProgram, gamma: f64, opts: &SolverOptions) -> Result<Option<ConicSolution>> {
    let sol = prog.solve(opts).map_err(|e| Error::Solver { gamma, reason: format!("{e}") })?;
    match sol.status {
        SolveStatus::Optimal => Ok(Some(sol)),
        SolveStatus::Infeasible => Ok(None),
        SolveStatus::Unbounded => Err(Error::Solver { gamma, reason: String::from("objective unbounded") }),
        SolveStatus::NumericalFailure => Err(Error::Solver {
            gamma,
            reason: format!(
                "no convergence after {} iterations (primal {:.1e}, dual {:.1e}, gap {:.1e})",
                sol.iterations, sol.residuals.primal, sol.residuals.dual, sol.residuals.gap
            ),
        }),
    }
}

/// Minimizes `eval` over `γ`. `eval` returns `None` for an infeasible `γ`.
/// The inner problem is feasible on an interval `[γ_min, 1)`, so when both
/// probes are infeasible the bracket moves right; finite ties move left.
pub(crate) fn minimize_gamma<T>(search: &GammaSearch, eval: impl FnMut(f64) -> Result<Option<(f64, T)>>) -> Result<SearchOutcome<T>> {
    search.validate()?;
    let mut tr = Tracker { eval, evaluations: Vec::new(), best: None, failure: None };
    if let Some(g) = search.fixed {
        tr.at(g);
    } else {
        let (mut a, mut b) = (search.lower, search.upper);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = tr.at(c);
        let mut fd = tr.at(d);
        while b - a > search.tol {
            let move_left = fc.is_finite() && fc <= fd;
            if move_left {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = tr.at(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = tr.at(d);
            }
        }
        if tr.best.is_none() {
            tr.at(search.upper);
        }
    }
    match (tr.best, tr.failure) {
        (None, Some(err)) => Err(err),
        (best, _) => Ok(SearchOutcome { evaluations: tr.evaluations, best }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_minimum_of_quasiconvex_function() {
        let s = GammaSearch::default();
        let out = minimize_gamma(&s, |g| Ok(Some(((g - 0.3) * (g - 0.3), ())))).unwrap();
        let (g, _, _) = out.best.unwrap();
        assert!((g - 0.3).abs() < 1e-3);
        assert!(out.evaluations.len() < 25);
    }

    #[test]
    fn infeasible_region_pushes_right() {
        let s = GammaSearch::default();
        let out = minimize_gamma(&s, |g| Ok(if g < 0.8 { None } else { Some((1.0 / (1.0 - g), ())) })).unwrap();
        let (g, _, _) = out.best.unwrap();
        assert!((0.8..0.802).contains(&g), "{g}");
    }

    #[test]
    fn everywhere_infeasible_returns_none() {
        let s = GammaSearch::default();
        let out = minimize_gamma::<()>(&s, |_| Ok(None)).unwrap();
        assert!(out.best.is_none());
        assert_eq!(out.evaluations.last().unwrap().gamma, s.upper);
    }

    #[test]
    fn failures_surface_only_without_feasible_points() {
        let s = GammaSearch::default();
        let err = minimize_gamma::<()>(&s, |g| Err(Error::Solver { gamma: g, reason: String::from("x") }));
        assert!(matches!(err, Err(Error::Solver { .. })));
        let ok =
            minimize_gamma(&s, |g| if g < 0.5 { Err(Error::Solver { gamma: g, reason: String::from("x") }) } else { Ok(Some((g, ()))) })
                .unwrap();
        assert!(ok.best.is_some());
    }

    #[test]
    fn fixed_mode_evaluates_once() {
        let out = minimize_gamma(&GammaSearch::fixed(0.999), |g| Ok(Some((g, ())))).unwrap();
        assert_eq!(out.evaluations.len(), 1);
        assert_eq!(out.best.unwrap().0, 0.999);
    }
}
