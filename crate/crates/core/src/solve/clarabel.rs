//! [`ConicSolver`] backed by the Clarabel interior-point solver.

use std::collections::BTreeMap;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT, SolverStatus, SupportedConeT,
    ZeroConeT,
};
// Links the system OpenBLAS/LAPACK used by Clarabel's PSD cone.
use openblas_src as _;

use super::{ConicSolver, SolveStatus};
use crate::lmi::problem::{AffineExpr, SdpProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarabelSolver {
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for ClarabelSolver {
    fn default() -> Self {
        Self {
            tol_gap: 1e-9,
            tol_feas: 1e-9,
            max_iter: 200,
            verbose: false,
        }
    }
}

/// Rows of `A x + s = b` accumulated as triplets; duplicate entries are summed.
#[derive(Default)]
struct Rows {
    entries: BTreeMap<(usize, usize), f64>,
    rhs: Vec<f64>,
}

impl Rows {
    /// Appends the row for `s = scale * expr(x)`, i.e. `A = -scale * coeffs`, `b = scale * constant`.
    fn push(&mut self, expr: &AffineExpr, scale: f64) {
        let row = self.rhs.len();
        for &(slot, coeff) in &expr.terms {
            *self.entries.entry((row, slot)).or_insert(0.0) -= scale * coeff;
        }
        self.rhs.push(scale * expr.constant);
    }
}

impl ConicSolver for ClarabelSolver {
    fn name(&self) -> &str {
        "clarabel"
    }

    fn solve(&self, problem: &SdpProblem) -> SolveStatus {
        let n = problem.num_slots();
        let mut rows = Rows::default();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        if !problem.eq_constraints.is_empty() {
            for c in &problem.eq_constraints {
                rows.push(&c.expr, 1.0);
            }
            cones.push(ZeroConeT(problem.eq_constraints.len()));
        }
        if !problem.nonneg_constraints.is_empty() {
            for c in &problem.nonneg_constraints {
                rows.push(&c.expr, 1.0);
            }
            cones.push(NonnegativeConeT(problem.nonneg_constraints.len()));
        }
        // PSD cones take the upper triangle column by column, off-diagonals scaled by sqrt(2).
        for c in &problem.psd_constraints {
            let k = c.expr.nrows();
            for j in 0..k {
                for i in 0..=j {
                    let upper = c.expr.get(i, j);
                    if i == j {
                        rows.push(upper, 1.0);
                    } else {
                        let sym = (upper + c.expr.get(j, i)).compact();
                        rows.push(&sym, std::f64::consts::FRAC_1_SQRT_2);
                    }
                }
            }
            cones.push(PSDTriangleConeT(k));
        }

        let m = rows.rhs.len();
        let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        for (&(r, c), &v) in &rows.entries {
            if v != 0.0 {
                ri.push(r);
                ci.push(c);
                vals.push(v);
            }
        }
        let a = CscMatrix::new_from_triplets(m, n, ri, ci, vals);
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(slot, coeff) in &problem.objective.terms {
            q[slot] -= coeff;
        }

        let settings = match DefaultSettingsBuilder::default()
            .verbose(self.verbose)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tol_gap)
            .tol_gap_rel(self.tol_gap)
            .tol_feas(self.tol_feas)
            .build()
        {
            Ok(s) => s,
            Err(e) => return SolveStatus::NumericalFailure(format!("settings: {e}")),
        };
        let mut solver = match DefaultSolver::new(&p, &q, &a, &rows.rhs, &cones, settings) {
            Ok(s) => s,
            Err(e) => return SolveStatus::NumericalFailure(format!("setup: {e}")),
        };
        solver.solve();
        let status = solver.solution.status;
        match status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let x = solver.solution.x.clone();
                let objective = problem.objective.eval(&x);
                SolveStatus::Optimal { x, objective }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            other => SolveStatus::NumericalFailure(format!("clarabel status {other:?}")),
        }
    }
}
