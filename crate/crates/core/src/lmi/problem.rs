//! A small conic-program container: affine expressions over scalar decision slots, with
//! PSD, nonnegativity and equality constraints and a linear objective to maximize.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg;

/// Shape of a declared decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "size", rename_all = "snake_case")]
pub enum VarShape {
    Scalar,
    Vector(usize),
    /// Symmetric `n x n`, stored as its upper triangle in row-major order.
    Symmetric(usize),
}

impl VarShape {
    pub fn slots(self) -> usize {
        match self {
            VarShape::Scalar => 1,
            VarShape::Vector(n) => n,
            VarShape::Symmetric(n) => n * (n + 1) / 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    #[serde(flatten)]
    pub shape: VarShape,
    pub offset: usize,
}

/// `constant + sum coeff * x[slot]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineExpr {
    pub fn constant(value: f64) -> Self {
        Self { constant: value, terms: Vec::new() }
    }

    pub fn slot(index: usize) -> Self {
        Self { constant: 0.0, terms: vec![(index, 1.0)] }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Merges duplicate slots and drops zero coefficients.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (slot, coeff) in self.terms {
            match merged.last_mut() {
                Some(last) if last.0 == slot => last.1 += coeff,
                _ => merged.push((slot, coeff)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        self.terms = merged;
        self
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.1 == 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(i, c)| acc + c * x[i])
    }

    pub fn max_slot(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        self.constant += rhs.constant;
        self.terms.extend(rhs.terms);
        self
    }
}

impl Add<&AffineExpr> for &AffineExpr {
    type Output = AffineExpr;
    fn add(self, rhs: &AffineExpr) -> AffineExpr {
        self.clone() + rhs.clone()
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self * -1.0
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        self + (-rhs)
    }
}

impl Mul<f64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(mut self, k: f64) -> AffineExpr {
        self.constant *= k;
        for t in &mut self.terms {
            t.1 *= k;
        }
        self
    }
}

impl Mul<f64> for &AffineExpr {
    type Output = AffineExpr;
    fn mul(self, k: f64) -> AffineExpr {
        self.clone() * k
    }
}

/// Dense matrix of affine expressions (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr {
    rows: usize,
    cols: usize,
    data: Vec<AffineExpr>,
}

impl MatExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![AffineExpr::zero(); rows * cols] }
    }

    pub fn from_constant(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = AffineExpr::constant(m[(i, j)]);
            }
        }
        out
    }

    pub fn scalar(e: AffineExpr) -> Self {
        Self { rows: 1, cols: 1, data: vec![e] }
    }

    pub fn column(entries: Vec<AffineExpr>) -> Self {
        Self { rows: entries.len(), cols: 1, data: entries }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_constant(&DMatrix::identity(n, n))
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> &AffineExpr {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, e: AffineExpr) {
        self.data[i * self.cols + j] = e;
    }

    pub fn entries(&self) -> impl Iterator<Item = &AffineExpr> {
        self.data.iter()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).clone());
            }
        }
        out
    }

    fn zip(&self, rhs: &Self, k: f64) -> Self {
        assert_eq!(self.shape(), rhs.shape(), "matrix expression shapes differ");
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a.clone() + b * k).compact())
            .collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        self.zip(rhs, 1.0)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.zip(rhs, -1.0)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|e| e * k).collect(),
        }
    }

    /// Multiplies every entry by the affine scalar `e`; `self` must be constant.
    pub fn scale_by(&self, e: &AffineExpr) -> Self {
        let data = self
            .data
            .iter()
            .map(|a| {
                assert!(a.is_constant(), "scale_by would create a bilinear term");
                (e * a.constant).compact()
            })
            .collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    /// `self * m` for a constant matrix `m`.
    pub fn mul_const(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(self.cols, m.nrows(), "inner dimensions differ");
        let mut out = Self::zeros(self.rows, m.ncols());
        for i in 0..self.rows {
            for j in 0..m.ncols() {
                let mut acc = AffineExpr::zero();
                for k in 0..self.cols {
                    let w = m[(k, j)];
                    if w != 0.0 {
                        acc = acc + self.get(i, k) * w;
                    }
                }
                out.set(i, j, acc.compact());
            }
        }
        out
    }

    /// `m * self` for a constant matrix `m`.
    pub fn const_mul(m: &DMatrix<f64>, rhs: &Self) -> Self {
        rhs.transpose().mul_const(&m.transpose()).transpose()
    }

    /// `t^T self t`, the congruence used by every lifted condition.
    pub fn congruence(&self, t: &DMatrix<f64>) -> Self {
        Self::const_mul(&t.transpose(), &self.mul_const(t))
    }

    /// Assembles a block matrix; all blocks in a block-row share a height and all blocks
    /// in a block-column share a width.
    pub fn blocks(grid: &[Vec<MatExpr>]) -> Self {
        let heights: Vec<usize> = grid.iter().map(|row| row[0].rows).collect();
        let widths: Vec<usize> = grid[0].iter().map(|b| b.cols).collect();
        let mut out = Self::zeros(heights.iter().sum(), widths.iter().sum());
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            assert_eq!(row.len(), widths.len(), "ragged block grid");
            let mut c0 = 0;
            for (bj, block) in row.iter().enumerate() {
                assert_eq!(block.shape(), (heights[bi], widths[bj]), "block ({bi},{bj}) has the wrong shape");
                for i in 0..block.rows {
                    for j in 0..block.cols {
                        out.set(r0 + i, c0 + j, block.get(i, j).clone());
                    }
                }
                c0 += widths[bj];
            }
            r0 += heights[bi];
        }
        out
    }

    /// Trace as an affine scalar.
    pub fn trace(&self) -> AffineExpr {
        (0..self.rows.min(self.cols))
            .fold(AffineExpr::zero(), |acc, i| acc + self.get(i, i).clone())
            .compact()
    }

    /// Whether entry `(i, j)` and `(j, i)` are the same affine expression for all pairs.
    pub fn is_structurally_symmetric(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        (0..self.rows).all(|i| {
            (i + 1..self.cols).all(|j| self.get(i, j).clone().compact() == self.get(j, i).clone().compact())
        })
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(x))
    }

    pub fn max_slot(&self) -> Option<usize> {
        self.data.iter().filter_map(AffineExpr::max_slot).max()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdConstraint {
    pub name: String,
    pub expr: MatExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarConstraint {
    pub name: String,
    pub expr: AffineExpr,
}

/// A conic program: maximize `objective` subject to PSD, `>= 0` and `= 0` constraints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdpProblem {
    pub vars: Vec<VarDecl>,
    pub psd_constraints: Vec<PsdConstraint>,
    pub nonneg_constraints: Vec<ScalarConstraint>,
    pub eq_constraints: Vec<ScalarConstraint>,
    pub objective: AffineExpr,
    slots: usize,
}

/// Value of one decision variable.
#[derive(Debug, Clone, PartialEq)]
pub enum VarValue {
    Scalar(f64),
    Vector(DVector<f64>),
    Symmetric(DMatrix<f64>),
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Total number of scalar decision slots.
    pub fn num_slots(&self) -> usize {
        self.slots
    }

    fn declare(&mut self, name: &str, shape: VarShape) -> usize {
        assert!(self.var(name).is_none(), "variable `{name}` declared twice");
        let offset = self.slots;
        self.vars.push(VarDecl { name: name.to_string(), shape, offset });
        self.slots += shape.slots();
        offset
    }

    pub fn scalar_var(&mut self, name: &str) -> AffineExpr {
        AffineExpr::slot(self.declare(name, VarShape::Scalar))
    }

    /// An `n x 1` column of fresh slots.
    pub fn vector_var(&mut self, name: &str, n: usize) -> MatExpr {
        let offset = self.declare(name, VarShape::Vector(n));
        MatExpr::column((0..n).map(|i| AffineExpr::slot(offset + i)).collect())
    }

    pub fn symmetric_var(&mut self, name: &str, n: usize) -> MatExpr {
        let offset = self.declare(name, VarShape::Symmetric(n));
        let mut m = MatExpr::zeros(n, n);
        let mut k = offset;
        for i in 0..n {
            for j in i..n {
                m.set(i, j, AffineExpr::slot(k));
                m.set(j, i, AffineExpr::slot(k));
                k += 1;
            }
        }
        m
    }

    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn add_psd(&mut self, name: impl Into<String>, expr: MatExpr) {
        assert_eq!(expr.nrows(), expr.ncols(), "PSD constraint must be square");
        self.psd_constraints.push(PsdConstraint { name: name.into(), expr });
    }

    pub fn add_nonneg(&mut self, name: impl Into<String>, expr: AffineExpr) {
        self.nonneg_constraints.push(ScalarConstraint { name: name.into(), expr: expr.compact() });
    }

    pub fn add_eq(&mut self, name: impl Into<String>, expr: AffineExpr) {
        self.eq_constraints.push(ScalarConstraint { name: name.into(), expr: expr.compact() });
    }

    pub fn maximize(&mut self, objective: AffineExpr) {
        self.objective = objective.compact();
    }

    /// Every referenced slot belongs to a declared variable.
    pub fn references_are_declared(&self) -> bool {
        let max = self
            .psd_constraints
            .iter()
            .filter_map(|c| c.expr.max_slot())
            .chain(self.nonneg_constraints.iter().filter_map(|c| c.expr.max_slot()))
            .chain(self.eq_constraints.iter().filter_map(|c| c.expr.max_slot()))
            .chain(self.objective.max_slot())
            .max();
        max.is_none_or(|m| m < self.slots)
    }

    pub fn value_of(&self, name: &str, x: &[f64]) -> Option<VarValue> {
        let decl = self.var(name)?;
        let at = &x[decl.offset..decl.offset + decl.shape.slots()];
        Some(match decl.shape {
            VarShape::Scalar => VarValue::Scalar(at[0]),
            VarShape::Vector(n) => VarValue::Vector(DVector::from_column_slice(&at[..n])),
            VarShape::Symmetric(n) => {
                let mut m = DMatrix::zeros(n, n);
                let mut k = 0;
                for i in 0..n {
                    for j in i..n {
                        m[(i, j)] = at[k];
                        m[(j, i)] = at[k];
                        k += 1;
                    }
                }
                VarValue::Symmetric(m)
            }
        })
    }

    /// Writes a variable's value into an assignment vector.
    pub fn assign(&self, name: &str, value: &VarValue, x: &mut [f64]) {
        let decl = self.var(name).unwrap_or_else(|| panic!("unknown variable `{name}`"));
        let at = &mut x[decl.offset..decl.offset + decl.shape.slots()];
        match (decl.shape, value) {
            (VarShape::Scalar, VarValue::Scalar(v)) => at[0] = *v,
            (VarShape::Vector(n), VarValue::Vector(v)) if v.len() == n => at.copy_from_slice(v.as_slice()),
            (VarShape::Symmetric(n), VarValue::Symmetric(m)) if m.shape() == (n, n) => {
                let mut k = 0;
                for i in 0..n {
                    for j in i..n {
                        at[k] = 0.5 * (m[(i, j)] + m[(j, i)]);
                        k += 1;
                    }
                }
            }
            _ => panic!("value does not match the shape of `{name}`"),
        }
    }

    /// Violation of every constraint at `x`.
    pub fn residuals(&self, x: &[f64]) -> ResidualReport {
        let mut report = ResidualReport::default();
        for c in &self.psd_constraints {
            report.push_psd(&c.name, &c.expr.eval(x));
        }
        for c in &self.nonneg_constraints {
            report.push(&c.name, ResidualKind::Nonneg, (-c.expr.eval(x)).max(0.0));
        }
        for c in &self.eq_constraints {
            report.push(&c.name, ResidualKind::Equality, c.expr.eval(x).abs());
        }
        report
    }

    /// Self-describing dump: variables, then every constraint as a constant term plus one
    /// dense coefficient matrix per referenced slot.
    pub fn to_debug_json(&self) -> serde_json::Value {
        use serde_json::json;
        let scalar = |e: &AffineExpr| {
            json!({
                "constant": e.constant,
                "terms": e.terms.iter().map(|(s, c)| json!([s, c])).collect::<Vec<_>>(),
            })
        };
        let matrix = |m: &MatExpr| {
            let mut slots: Vec<usize> = m.entries().flat_map(|e| e.terms.iter().map(|t| t.0)).collect();
            slots.sort_unstable();
            slots.dedup();
            let coeff = |slot: Option<usize>| {
                DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
                    let e = m.get(i, j);
                    match slot {
                        None => e.constant,
                        Some(s) => e.terms.iter().filter(|t| t.0 == s).map(|t| t.1).sum(),
                    }
                })
            };
            json!({
                "size": m.nrows(),
                "constant": linalg::matrix_to_rows(&coeff(None)),
                "coefficients": slots
                    .iter()
                    .map(|&s| json!({"slot": s, "matrix": linalg::matrix_to_rows(&coeff(Some(s)))}))
                    .collect::<Vec<_>>(),
            })
        };
        json!({
            "sense": "maximize",
            "num_slots": self.slots,
            "variables": self.vars,
            "objective": scalar(&self.objective),
            "psd": self.psd_constraints.iter().map(|c| json!({"name": c.name, "expr": matrix(&c.expr)})).collect::<Vec<_>>(),
            "nonneg": self.nonneg_constraints.iter().map(|c| json!({"name": c.name, "expr": scalar(&c.expr)})).collect::<Vec<_>>(),
            "eq": self.eq_constraints.iter().map(|c| json!({"name": c.name, "expr": scalar(&c.expr)})).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// `max(0, -min eig)` of a matrix required PSD.
    PsdDeficit,
    /// `max |.|` over an equality.
    Equality,
    /// `max(0, -value)` over quantities required nonnegative.
    Nonneg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub name: String,
    pub kind: ResidualKind,
    pub value: f64,
}

/// Per-constraint violation magnitudes; zero means satisfied.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResidualReport {
    pub entries: Vec<Residual>,
}

impl ResidualReport {
    pub fn push(&mut self, name: &str, kind: ResidualKind, value: f64) {
        self.entries.push(Residual { name: name.to_string(), kind, value });
    }

    pub fn push_psd(&mut self, name: &str, m: &DMatrix<f64>) {
        self.push(name, ResidualKind::PsdDeficit, (-linalg::min_eig(m)).max(0.0));
    }

    pub fn worst(&self) -> Option<&Residual> {
        self.entries.iter().max_by(|a, b| a.value.total_cmp(&b.value))
    }

    pub fn max_violation(&self) -> f64 {
        self.worst().map_or(0.0, |r| r.value)
    }

    pub fn max_of(&self, kind: ResidualKind) -> f64 {
        self.entries.iter().filter(|r| r.kind == kind).fold(0.0, |acc, r| acc.max(r.value))
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|r| r.name == name).map(|r| r.value)
    }
}
