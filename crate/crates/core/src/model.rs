//! Bimodal piecewise affine systems and the geometry of their switching surface.
//!
//! A system switches between two affine vector fields,
//!
//! ```text
//! x' = A1 x + B w + d1   if c^T x + f <  0
//! x' = A2 x + B w + d2   if c^T x + f >= 0
//! ```
//!
//! with the disturbance confined to the ellipsoid `w^T Rw w <= 1`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg;

/// The tuple `(A1, A2, B, d1, d2, c, f, Rw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BimodalSystem {
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    b: DMatrix<f64>,
    d1: DVector<f64>,
    d2: DVector<f64>,
    c: DVector<f64>,
    f: f64,
    rw: DMatrix<f64>,
}

impl BimodalSystem {
    /// Validates shapes, `c != 0` and positive definiteness of `Rw` (which is symmetrized).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a1: DMatrix<f64>,
        a2: DMatrix<f64>,
        b: DMatrix<f64>,
        d1: DVector<f64>,
        d2: DVector<f64>,
        c: DVector<f64>,
        f: f64,
        rw: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a1.nrows();
        let m = b.ncols();
        let shape_err = |what: &str| Err(Error::DimensionMismatch(what.to_string()));
        if n == 0 {
            return shape_err("state dimension must be positive");
        }
        if a1.shape() != (n, n) || a2.shape() != (n, n) {
            return shape_err("A1 and A2 must both be n x n");
        }
        if b.nrows() != n || m == 0 {
            return shape_err("B must be n x m with m >= 1");
        }
        if d1.len() != n || d2.len() != n || c.len() != n {
            return shape_err("d1, d2 and c must have length n");
        }
        if rw.shape() != (m, m) {
            return shape_err("Rw must be m x m");
        }
        if !f.is_finite() || [&a1, &a2, &b, &rw].iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("system data must be finite".into()));
        }
        if c.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroNormal);
        }
        let rw = linalg::symmetrize(&rw);
        let min_eig = linalg::min_eig(&rw);
        if min_eig <= Tolerances::default().pd {
            return Err(Error::NotPositiveDefinite { min_eig });
        }
        Ok(Self { a1, a2, b, d1, d2, c, f, rw })
    }

    /// Closes the loop with `u = -K^T x` acting through `B`, i.e. `A_i <- A_i - B K^T`.
    /// `gain` is `n x m`.
    pub fn with_feedback(&self, gain: &DMatrix<f64>) -> Result<Self> {
        if gain.shape() != (self.n(), self.m()) {
            return Err(Error::DimensionMismatch("feedback gain K must be n x m".into()));
        }
        let bk = &self.b * gain.transpose();
        Ok(Self {
            a1: &self.a1 - &bk,
            a2: &self.a2 - &bk,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.a1.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }

    pub fn a2(&self) -> &DMatrix<f64> {
        &self.a2
    }

    /// State matrix of `mode` (1 or 2).
    pub fn a(&self, mode: Mode) -> &DMatrix<f64> {
        match mode {
            Mode::Neg => &self.a1,
            Mode::Pos => &self.a2,
        }
    }

    pub fn d(&self, mode: Mode) -> &DVector<f64> {
        match mode {
            Mode::Neg => &self.d1,
            Mode::Pos => &self.d2,
        }
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn d1(&self) -> &DVector<f64> {
        &self.d1
    }

    pub fn d2(&self) -> &DVector<f64> {
        &self.d2
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn rw(&self) -> &DMatrix<f64> {
        &self.rw
    }

    /// `c^T x + f`.
    pub fn switching_value(&self, x: &DVector<f64>) -> f64 {
        self.c.dot(x) + self.f
    }

    /// Mode active at `x`: `Neg` on `c^T x + f < 0`, `Pos` otherwise.
    pub fn mode_at(&self, x: &DVector<f64>) -> Mode {
        if self.switching_value(x) < 0.0 {
            Mode::Neg
        } else {
            Mode::Pos
        }
    }

    /// Right-hand side `A_i x + B w + d_i` for the mode active at `x`.
    pub fn vector_field(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.mode_field(self.mode_at(x), x, w)
    }

    pub fn mode_field(&self, mode: Mode, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.a(mode) * x + &self.b * w + self.d(mode)
    }

    pub fn has_affine_terms(&self) -> bool {
        self.f != 0.0 || self.d1.iter().chain(self.d2.iter()).any(|&v| v != 0.0)
    }

    /// Largest `max Re(lambda)` over the two modes.
    pub fn hurwitz_margins(&self) -> [f64; 2] {
        [hurwitz_check(&self.a1), hurwitz_check(&self.a2)]
    }

    /// Hard Hurwitz requirement used before estimating a set.
    pub fn require_hurwitz(&self, tol: &Tolerances) -> Result<()> {
        for (i, max_real_part) in self.hurwitz_margins().into_iter().enumerate() {
            if HurwitzStatus::classify(max_real_part, tol) == HurwitzStatus::NotHurwitz {
                return Err(Error::NotHurwitz { mode: i + 1, max_real_part });
            }
        }
        Ok(())
    }

    /// Hard continuity requirement; returns `h`.
    pub fn require_continuity(&self, tol: &Tolerances) -> Result<DVector<f64>> {
        match check_continuity(self, tol) {
            Continuity::Continuous { h } => Ok(h),
            Continuity::Violated { matrix_residual, offset_residual, .. } => Err(Error::NotContinuous {
                matrix_residual,
                offset_residual,
            }),
        }
    }
}

/// Index of the affine piece: `Neg` is mode 1 (`c^T x + f <= 0`), `Pos` is mode 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Neg,
    Pos,
}

impl Mode {
    pub const BOTH: [Mode; 2] = [Mode::Neg, Mode::Pos];

    /// 1 for `Neg`, 2 for `Pos`.
    pub fn index(self) -> usize {
        match self {
            Mode::Neg => 1,
            Mode::Pos => 2,
        }
    }

    /// `-1` for `Neg`, `+1` for `Pos`: the orientation of the half-space `s (c^T x + f) >= 0`.
    pub fn sign(self) -> f64 {
        match self {
            Mode::Neg => -1.0,
            Mode::Pos => 1.0,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Neg => f.write_str("neg"),
            Mode::Pos => f.write_str("pos"),
        }
    }
}

/// Result of the continuity test.
#[derive(Debug, Clone, PartialEq)]
pub enum Continuity {
    Continuous {
        h: DVector<f64>,
    },
    Violated {
        h: DVector<f64>,
        matrix_residual: f64,
        offset_residual: f64,
    },
}

/// Finds `h` with `A1 - A2 = h c^T` and `d1 - d2 = h f`.
///
/// The candidate is the least-squares `h = (A1 - A2) c / |c|^2`; it is accepted when
/// `|(A1 - A2) - h c^T|_F <= tol.cont (1 + |A1|_F)` and `|(d1 - d2) - h f| <= tol.cont`.
pub fn check_continuity(sys: &BimodalSystem, tol: &Tolerances) -> Continuity {
    let diff = sys.a1() - sys.a2();
    let c = sys.c();
    let h = &diff * c / c.norm_squared();
    let matrix_residual = (&diff - &h * c.transpose()).norm();
    let offset_residual = (sys.d1() - sys.d2() - &h * sys.f()).norm();
    if matrix_residual <= tol.cont * (1.0 + sys.a1().norm()) && offset_residual <= tol.cont {
        Continuity::Continuous { h }
    } else {
        Continuity::Violated { h, matrix_residual, offset_residual }
    }
}

/// Largest real part over the eigenvalues of a square matrix.
pub fn hurwitz_check(a: &DMatrix<f64>) -> f64 {
    assert!(a.is_square(), "hurwitz_check needs a square matrix");
    if a.is_empty() {
        return f64::NEG_INFINITY;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HurwitzStatus {
    Hurwitz,
    /// Hurwitz, but within the warning band of the imaginary axis.
    Marginal,
    NotHurwitz,
}

impl HurwitzStatus {
    pub fn classify(max_real_part: f64, tol: &Tolerances) -> Self {
        if max_real_part >= -tol.hurwitz {
            HurwitzStatus::NotHurwitz
        } else if max_real_part.abs() < tol.hurwitz_band {
            HurwitzStatus::Marginal
        } else {
            HurwitzStatus::Hurwitz
        }
    }
}

/// Which region contains the origin: the sign of `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OriginRegion {
    Neg,
    Zero,
    Pos,
}

impl OriginRegion {
    pub fn of_offset(f: f64) -> Self {
        if f < 0.0 {
            OriginRegion::Neg
        } else if f > 0.0 {
            OriginRegion::Pos
        } else {
            OriginRegion::Zero
        }
    }
}

/// Parameterization of the switching hyperplane `c^T x + f = 0`.
///
/// `rhat` spans `ker c^T` and `r0` is a point on the hyperplane. Internally the coordinate
/// with the largest `|c_i|` plays the role of the pivot; `rhat` and `r0` are stored in the
/// original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchGeometry {
    c: DVector<f64>,
    f: f64,
    rhat: DMatrix<f64>,
    r0: DVector<f64>,
    perm: Vec<usize>,
    origin_region: OriginRegion,
}

impl SwitchGeometry {
    pub fn new(c: &DVector<f64>, f: f64) -> Result<Self> {
        let n = c.len();
        let pivot = c
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .ok_or(Error::ZeroNormal)?;
        let cp = c[pivot];
        if cp == 0.0 {
            return Err(Error::ZeroNormal);
        }
        // perm[k] is the original index of permuted coordinate k; the pivot goes first.
        let mut perm = Vec::with_capacity(n);
        perm.push(pivot);
        perm.extend((0..n).filter(|&i| i != pivot));

        let mut rhat = DMatrix::zeros(n, n - 1);
        for (col, &j) in perm[1..].iter().enumerate() {
            rhat[(pivot, col)] = -c[j] / cp;
            rhat[(j, col)] = 1.0;
        }
        let mut r0 = DVector::zeros(n);
        r0[pivot] = -f / cp;

        Ok(Self {
            c: c.clone(),
            f,
            rhat,
            r0,
            perm,
            origin_region: OriginRegion::of_offset(f),
        })
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    /// `n x (n-1)` basis of `ker c^T`.
    pub fn rhat(&self) -> &DMatrix<f64> {
        &self.rhat
    }

    pub fn r0(&self) -> &DVector<f64> {
        &self.r0
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn origin_region(&self) -> OriginRegion {
        self.origin_region
    }

    /// `R = [Rhat, -Rhat]`.
    pub fn r(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut r = DMatrix::zeros(n, 2 * (n - 1));
        r.columns_mut(0, n - 1).copy_from(&self.rhat);
        r.columns_mut(n - 1, n - 1).copy_from(&(-&self.rhat));
        r
    }

    /// The `(n+1) x 2n` lift `[r0, s c, Rhat, -Rhat; 1, 0, 0, 0]` whose nonnegative
    /// combinations generate the homogenized half-space `s (c^T x + f) >= 0`.
    pub fn halfspace_lift(&self, side: Mode) -> DMatrix<f64> {
        let n = self.n();
        let mut t = DMatrix::zeros(n + 1, 2 * n);
        t.view_mut((0, 0), (n, 1)).copy_from(&self.r0);
        t[(n, 0)] = 1.0;
        t.view_mut((0, 1), (n, 1)).copy_from(&(&self.c * side.sign()));
        if n > 1 {
            t.view_mut((0, 2), (n, 2 * (n - 1))).copy_from(&self.r());
        }
        t
    }

    /// The reduced `(n+1) x n` lift `[r0, Rhat; 1, 0]` spanning the homogenized hyperplane.
    pub fn hyperplane_lift(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut t = DMatrix::zeros(n + 1, n);
        t.view_mut((0, 0), (n, 1)).copy_from(&self.r0);
        t[(n, 0)] = 1.0;
        t.view_mut((0, 1), (n, n - 1)).copy_from(&self.rhat);
        t
    }

    /// `c^T x + f`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.c.dot(x) + self.f
    }

    /// Euclidean distance from `x` to the switching hyperplane.
    pub fn distance(&self, x: &DVector<f64>) -> f64 {
        self.value(x).abs() / self.c.norm()
    }

    /// Writes `x` with `c^T x + f >= 0` as `r0 + mu c + Rhat theta1 - Rhat theta2` with
    /// all coefficients nonnegative. Returns `None` on the open negative side.
    pub fn decompose(&self, x: &DVector<f64>) -> Option<HalfspaceDecomposition> {
        let offset = x - &self.r0;
        let mu = self.c.dot(&offset) / self.c.norm_squared();
        if mu < 0.0 {
            return None;
        }
        let kernel_part = offset - &self.c * mu;
        let theta: Vec<f64> = self.perm[1..].iter().map(|&j| kernel_part[j]).collect();
        Some(HalfspaceDecomposition {
            mu,
            theta1: DVector::from_iterator(theta.len(), theta.iter().map(|t| t.max(0.0))),
            theta2: DVector::from_iterator(theta.len(), theta.iter().map(|t| (-t).max(0.0))),
        })
    }
}

/// Conic coordinates of a point of the closed positive half-space.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceDecomposition {
    pub mu: f64,
    pub theta1: DVector<f64>,
    pub theta2: DVector<f64>,
}

impl HalfspaceDecomposition {
    pub fn reconstruct(&self, geom: &SwitchGeometry) -> DVector<f64> {
        geom.r0() + geom.c() * self.mu + geom.rhat() * (&self.theta1 - &self.theta2)
    }
}

pub fn build_geometry(sys: &BimodalSystem) -> Result<SwitchGeometry> {
    SwitchGeometry::new(sys.c(), sys.f())
}

/// Whether a constant term of a Lyapunov piece is pinned to zero or optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConstTerm {
    FixedZero,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EtildeMode {
    pub e1: ConstTerm,
    pub e2: ConstTerm,
}

impl EtildeMode {
    pub fn get(&self, mode: Mode) -> ConstTerm {
        match mode {
            Mode::Neg => self.e1,
            Mode::Pos => self.e2,
        }
    }
}

/// The constant term of a piece may be free only when the origin lies strictly inside the
/// other piece's region, so that `V(0) = 0` still holds.
pub fn etilde_mode(geom: &SwitchGeometry) -> EtildeMode {
    match geom.origin_region() {
        OriginRegion::Zero => EtildeMode { e1: ConstTerm::FixedZero, e2: ConstTerm::FixedZero },
        OriginRegion::Pos => EtildeMode { e1: ConstTerm::Free, e2: ConstTerm::FixedZero },
        OriginRegion::Neg => EtildeMode { e1: ConstTerm::FixedZero, e2: ConstTerm::Free },
    }
}

/// On-disk form of a system: row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(rename = "A1")]
    pub a1: Vec<Vec<f64>>,
    #[serde(rename = "A2")]
    pub a2: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d2: Option<Vec<f64>>,
    pub c: Vec<f64>,
    pub f: f64,
    #[serde(rename = "Rw")]
    pub rw: Vec<Vec<f64>>,
    /// Optional state feedback `u = -K^T x` entering through `B`; `n x m` rows, or a plain
    /// `n`-vector when `m = 1`.
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Gain>,
    /// Free-form physical parameters kept for traceability. Not interpreted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<serde_json::Map<String, serde_json::Value>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl SystemFile {
    pub fn into_system(self) -> Result<BimodalSystem> {
        let n = self.c.len();
        let vector = |v: Option<Vec<f64>>| v.map_or_else(|| DVector::zeros(n), DVector::from_vec);
        let sys = BimodalSystem::new(
            linalg::matrix_from_rows(&self.a1)?,
            linalg::matrix_from_rows(&self.a2)?,
            linalg::matrix_from_rows(&self.b)?,
            vector(self.d1),
            vector(self.d2),
            DVector::from_vec(self.c),
            self.f,
            linalg::matrix_from_rows(&self.rw)?,
        )?;
        match self.k {
            None => Ok(sys),
            Some(Gain::Vector(k)) => sys.with_feedback(&DMatrix::from_column_slice(k.len(), 1, &k)),
            Some(Gain::Matrix(rows)) => sys.with_feedback(&linalg::matrix_from_rows(&rows)?),
        }
    }

    pub fn from_system(sys: &BimodalSystem) -> Self {
        Self {
            a1: linalg::matrix_to_rows(sys.a1()),
            a2: linalg::matrix_to_rows(sys.a2()),
            b: linalg::matrix_to_rows(sys.b()),
            d1: Some(linalg::vector_to_vec(sys.d1())),
            d2: Some(linalg::vector_to_vec(sys.d2())),
            c: linalg::vector_to_vec(sys.c()),
            f: sys.f(),
            rw: linalg::matrix_to_rows(sys.rw()),
            k: None,
            parameters: None,
        }
    }
}

impl BimodalSystem {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<SystemFile>(text)?.into_system()
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
