//! Positivity of a quadratic function on a half-space, and agreement of two quadratic
//! functions on the switching hyperplane, expressed as conic constraint fragments.
//!
//! Every point of the closed half-space `s (c^T x + f) >= 0` is `r0 + mu s c + Rhat t1 - Rhat t2`
//! with nonnegative coefficients. Lifting `q(x) = [x;1]^T Q [x;1]` through those generators
//! turns "`q > 0` on the half-space" into strict copositivity of `T^T Q T` over the
//! nonnegative orthant. Copositivity is certified here with the split `S + N`, `S` PSD
//! and `N` entrywise nonnegative, which is sufficient but not necessary.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg;
use crate::lmi::problem::{AffineExpr, MatExpr, SdpProblem, VarValue};
use crate::model::{Mode, SwitchGeometry};
use crate::solve::{ConicSolver, SolveStatus};

/// `q(x) = x^T P x + 2 b^T x + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    p: DMatrix<f64>,
    b: DVector<f64>,
    e: f64,
}

impl QuadraticForm {
    /// `p` is symmetrized.
    pub fn new(p: DMatrix<f64>, b: DVector<f64>, e: f64) -> Self {
        assert_eq!(p.shape(), (b.len(), b.len()), "P must be n x n with n = len(b)");
        Self { p: linalg::symmetrize(&p), b, e }
    }

    pub fn homogeneous(p: DMatrix<f64>) -> Self {
        let n = p.nrows();
        Self::new(p, DVector::zeros(n), 0.0)
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.p * x)) + 2.0 * self.b.dot(x) + self.e
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.p * x + &self.b) * 2.0
    }

    /// The `(n+1) x (n+1)` block `[[P, b], [b^T, e]]`.
    pub fn block(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut q = DMatrix::zeros(n + 1, n + 1);
        q.view_mut((0, 0), (n, n)).copy_from(&self.p);
        q.view_mut((0, n), (n, 1)).copy_from(&self.b);
        q.view_mut((n, 0), (1, n)).copy_from(&self.b.transpose());
        q[(n, n)] = self.e;
        q
    }

    /// Minimizer `-P^{-1} b`.
    pub fn center(&self) -> Result<DVector<f64>> {
        Ok(-linalg::inverse(&self.p)? * &self.b)
    }

    /// `1 - min q`: the squared radius of `{q <= 1}` in the `P` metric.
    pub fn level_radius_sq(&self) -> Result<f64> {
        let center = self.center()?;
        Ok(1.0 - self.eval(&center))
    }
}

/// `T^T [[P, b], [b^T, e]] T` with `T` the half-space lift for `side`.
pub fn halfspace_positivity_matrix(q: &QuadraticForm, geom: &SwitchGeometry, side: Mode) -> Result<DMatrix<f64>> {
    if q.n() != geom.n() {
        return Err(Error::DimensionMismatch(format!(
            "quadratic form has dimension {}, geometry {}",
            q.n(),
            geom.n()
        )));
    }
    let t = geom.halfspace_lift(side);
    Ok(linalg::symmetrize(&(t.transpose() * q.block() * t)))
}

/// Symbolic counterpart of [`halfspace_positivity_matrix`] for a block of affine expressions.
pub fn halfspace_positivity_expr(q_block: &MatExpr, geom: &SwitchGeometry, side: Mode) -> MatExpr {
    q_block.congruence(&geom.halfspace_lift(side))
}

/// The block `[[P, b], [b^T, e]]` of affine expressions.
pub fn form_block(p: &MatExpr, b: &MatExpr, e: &AffineExpr) -> MatExpr {
    MatExpr::blocks(&[
        vec![p.clone(), b.clone()],
        vec![b.transpose(), MatExpr::scalar(e.clone())],
    ])
}

/// Names of the variables introduced by one copositive relaxation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopositiveVars {
    pub psd_part: String,
    pub nonneg_part: String,
}

/// Declares `S` (PSD) and `N` (entrywise nonnegative) of the size of `target` and ties
/// them with `target = S + N`. Variables are named `{prefix}.S` and `{prefix}.N`.
pub fn copositive_relaxation_constraints(problem: &mut SdpProblem, prefix: &str, target: &MatExpr) -> CopositiveVars {
    let k = target.nrows();
    assert!(k >= 1 && target.ncols() == k, "copositive target must be square and nonempty");
    let vars = CopositiveVars {
        psd_part: format!("{prefix}.S"),
        nonneg_part: format!("{prefix}.N"),
    };
    let s = problem.symmetric_var(&vars.psd_part, k);
    let n = problem.symmetric_var(&vars.nonneg_part, k);
    problem.add_psd(format!("{prefix}: S psd"), s.clone());
    for i in 0..k {
        for j in i..k {
            problem.add_nonneg(format!("{prefix}: N[{i},{j}] >= 0"), n.get(i, j).clone());
            let tie = target.get(i, j).clone() - s.get(i, j).clone() - n.get(i, j).clone();
            problem.add_eq(format!("{prefix}: split[{i},{j}]"), tie);
        }
    }
    vars
}

/// A certificate `target = S + N` of (non-strict) copositivity.
#[derive(Debug, Clone, PartialEq)]
pub struct CopositiveCertificate {
    pub s: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub target: DMatrix<f64>,
}

/// Violations of the three defining properties of a split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitResidual {
    pub psd_deficit: f64,
    pub nonneg_deficit: f64,
    pub split_error: f64,
}

impl CopositiveCertificate {
    /// Reads `S` and `N` from a solved assignment.
    pub fn from_assignment(problem: &SdpProblem, vars: &CopositiveVars, x: &[f64], target: DMatrix<f64>) -> Option<Self> {
        match (problem.value_of(&vars.psd_part, x)?, problem.value_of(&vars.nonneg_part, x)?) {
            (VarValue::Symmetric(s), VarValue::Symmetric(n)) => Some(Self { s, n, target }),
            _ => None,
        }
    }

    pub fn residual(&self) -> SplitResidual {
        SplitResidual {
            psd_deficit: (-linalg::min_eig(&self.s)).max(0.0),
            nonneg_deficit: (-self.n.min()).max(0.0),
            split_error: (&self.target - &self.s - &self.n).norm(),
        }
    }

    pub fn is_valid(&self, tol: &Tolerances) -> bool {
        let r = self.residual();
        r.psd_deficit <= tol.psd && r.nonneg_deficit <= tol.entry && r.split_error <= tol.split
    }
}

/// Searches for an `S + N` split of a constant matrix.
pub fn find_copositive_certificate(m: &DMatrix<f64>, solver: &dyn ConicSolver) -> Result<Option<CopositiveCertificate>> {
    let target = linalg::symmetrize(m);
    let mut problem = SdpProblem::new();
    let vars = copositive_relaxation_constraints(&mut problem, "cop", &MatExpr::from_constant(&target));
    match solver.solve(&problem) {
        SolveStatus::Optimal { x, .. } => Ok(CopositiveCertificate::from_assignment(&problem, &vars, &x, target)),
        SolveStatus::Infeasible => Ok(None),
        SolveStatus::NumericalFailure(info) => Err(Error::Solver(info)),
    }
}

/// Minimum of `x^T M x` over `samples` random unit vectors of the nonnegative orthant.
///
/// Directions are uniform on the simplex (normalized exponentials), then rescaled to unit
/// Euclidean length.
pub fn verify_copositive_sampled<R: Rng + ?Sized>(m: &DMatrix<f64>, samples: usize, rng: &mut R) -> f64 {
    let k = m.nrows();
    assert!(k >= 1 && samples >= 1, "need a nonempty matrix and at least one sample");
    let mut best = f64::INFINITY;
    let mut x = DVector::zeros(k);
    for _ in 0..samples {
        for v in x.iter_mut() {
            *v = Exp1.sample(rng);
        }
        let norm = x.norm();
        if norm == 0.0 {
            continue;
        }
        x /= norm;
        best = best.min(x.dot(&(m * &x)));
    }
    best
}

/// Adds the equalities `T'^T dQ T' = 0` (upper triangle) with `T' = [r0, Rhat; 1, 0]`.
///
/// `delta` is the `(n+1) x (n+1)` block of `q1 - q2`. Using `Rhat` alone instead of
/// `[Rhat, -Rhat]` drops only sign-duplicated rows. Returns the number of equalities.
pub fn hyperplane_equality_constraints(problem: &mut SdpProblem, prefix: &str, geom: &SwitchGeometry, delta: &MatExpr) -> usize {
    let lifted = delta.congruence(&geom.hyperplane_lift());
    let k = lifted.nrows();
    let mut count = 0;
    for i in 0..k {
        for j in i..k {
            problem.add_eq(format!("{prefix}[{i},{j}]"), lifted.get(i, j).clone());
            count += 1;
        }
    }
    count
}

/// Numeric `T'^T dQ T'` for a constant difference block.
pub fn hyperplane_residual(geom: &SwitchGeometry, delta: &DMatrix<f64>) -> DMatrix<f64> {
    let t = geom.hyperplane_lift();
    t.transpose() * delta * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solve::ClarabelSolver;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn geom(c: &[f64], f: f64) -> SwitchGeometry {
        SwitchGeometry::new(&dv(c), f).unwrap()
    }

    #[test]
    fn unit_form_on_right_half_plane() {
        let q = QuadraticForm::homogeneous(DMatrix::identity(2, 2));
        let m = halfspace_positivity_matrix(&q, &geom(&[1.0, 0.0], 0.0), Mode::Pos).unwrap();
        // T = [0 1 0 0; 0 0 1 -1; 1 0 0 0]; columns c = e1, Rhat = e2, -Rhat = -e2.
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0, 1.0],
        );
        assert_eq!(m, expected);
    }

    #[test]
    fn constant_form_only_touches_r0_column() {
        let q = QuadraticForm::new(DMatrix::zeros(3, 3), DVector::zeros(3), 1.0);
        let m = halfspace_positivity_matrix(&q, &geom(&[0.3, -1.0, 2.0], 0.7), Mode::Neg).unwrap();
        let mut expected = DMatrix::zeros(6, 6);
        expected[(0, 0)] = 1.0;
        assert_eq!(m, expected);
    }

    #[test]
    fn squared_switching_function_vanishes_on_kernel_columns() {
        let c = dv(&[0.5, 2.0, -1.0]);
        let f = 0.4;
        let g = geom(c.as_slice(), f);
        let q = QuadraticForm::new(&c * c.transpose(), &c * f, f * f);
        let m = halfspace_positivity_matrix(&q, &g, Mode::Pos).unwrap();
        for k in 2..6 {
            assert!(m.row(k).amax() < 1e-14, "row {k} = {}", m.row(k));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let q = QuadraticForm::homogeneous(DMatrix::identity(3, 3));
        assert!(matches!(
            halfspace_positivity_matrix(&q, &geom(&[1.0, 0.0], 0.0), Mode::Pos),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn scalar_geometry_gives_two_by_two() {
        let q = QuadraticForm::new(DMatrix::from_element(1, 1, 2.0), dv(&[0.5]), 0.25);
        let m = halfspace_positivity_matrix(&q, &geom(&[1.0], -1.0), Mode::Pos).unwrap();
        assert_eq!(m.shape(), (2, 2));
        // m[0,0] = q(r0) with r0 = 1; m[1,1] = c^T P c.
        assert!((m[(0, 0)] - q.eval(&dv(&[1.0]))).abs() < 1e-14);
        assert!((m[(1, 1)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn relaxation_one_dimensional_is_sign_test() {
        let solver = ClarabelSolver::default();
        assert!(find_copositive_certificate(&DMatrix::from_element(1, 1, 0.3), &solver).unwrap().is_some());
        assert!(find_copositive_certificate(&DMatrix::from_element(1, 1, -0.3), &solver).unwrap().is_none());
    }

    #[test]
    fn relaxation_rejects_non_copositive() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 1.0]);
        let solver = ClarabelSolver::default();
        assert!(find_copositive_certificate(&m, &solver).unwrap().is_none());
    }

    #[test]
    fn relaxation_accepts_psd() {
        let m = DMatrix::from_element(2, 2, 1.0);
        let cert = find_copositive_certificate(&m, &ClarabelSolver::default()).unwrap().unwrap();
        assert!(cert.is_valid(&Tolerances::default()));
    }

    #[test]
    fn relaxation_accepts_nonnegative_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let cert = find_copositive_certificate(&m, &ClarabelSolver::default()).unwrap().unwrap();
        assert!(cert.is_valid(&Tolerances::default()));
    }

    #[test]
    fn sampled_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = verify_copositive_sampled(&DMatrix::identity(2, 2), 500, &mut rng);
        assert!((0.5 - 1e-12..=1.0 + 1e-12).contains(&v));
        assert_eq!(verify_copositive_sampled(&DMatrix::zeros(3, 3), 10, &mut rng), 0.0);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 1.0]);
        assert!(verify_copositive_sampled(&bad, 1000, &mut rng) < 0.0);
    }

    #[test]
    fn hyperplane_equalities_on_vertical_line() {
        // c = e1, f = 0: the hyperplane is span{e2}.
        let g = geom(&[1.0, 0.0], 0.0);
        let mut problem = SdpProblem::new();
        let dp = problem.symmetric_var("dP", 2);
        let db = problem.vector_var("db", 2);
        let de = problem.scalar_var("de");
        let count = hyperplane_equality_constraints(&mut problem, "eq", &g, &form_block(&dp, &db, &de));
        assert_eq!(count, 3);
        // Slots: dP = (p11, p12, p22), db = (b1, b2), de. The three rows pin de, b2, p22.
        let mut pinned: Vec<Vec<usize>> = problem.eq_constraints.iter().map(|c| c.expr.terms.iter().map(|t| t.0).collect()).collect();
        pinned.sort();
        assert_eq!(pinned, vec![vec![2], vec![4], vec![5]]);
    }

    #[test]
    fn hyperplane_equalities_accept_identical_and_squared_difference() {
        let c = dv(&[0.7, -0.2, 1.5]);
        let f = -0.3;
        let g = geom(c.as_slice(), f);
        assert!(hyperplane_residual(&g, &DMatrix::zeros(4, 4)).amax() == 0.0);
        let dq = QuadraticForm::new(&c * c.transpose(), &c * f, f * f).block();
        assert!(hyperplane_residual(&g, &dq).amax() < 1e-14);
    }
}
