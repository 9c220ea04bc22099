//! Assembly of the reachable-set LMIs for a fixed decay rate `alpha`.
//!
//! Two problem families are built:
//!
//! * **piecewise**: quadratic pieces `(P1, b1, e1)` on `c^T x + f <= 0` and `(P2, b2, e2)` on
//!   `c^T x + f >= 0`, glued continuously on the switching hyperplane, each positive on its
//!   half-space, and each satisfying an S-procedure relaxed decrease LMI of size `n + m + 1`;
//! * **common**: a single `P` with the two classical `n + m` decrease LMIs.
//!
//! Both maximize the trace of the Lyapunov matrices.

pub mod problem;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::copositive::{self, CopositiveVars, QuadraticForm};
use crate::error::{Error, Result};
use crate::linalg::{self, he};
use crate::model::{etilde_mode, BimodalSystem, ConstTerm, EtildeMode, Mode, SwitchGeometry};
use crate::solve::Certificate;

pub use problem::{AffineExpr, MatExpr, Residual, ResidualKind, ResidualReport, SdpProblem, VarShape, VarValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateKind {
    Piecewise,
    Common,
}

impl std::fmt::Display for CertificateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CertificateKind::Piecewise => "piecewise",
            CertificateKind::Common => "common",
        })
    }
}

/// Knobs of the assembled problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmiOptions {
    /// Margin in `P_i >= eps_pd I`.
    pub eps_pd: f64,
    /// Objective weights on `trace(P1)` and `trace(P2)`.
    pub trace_weights: [f64; 2],
}

impl Default for LmiOptions {
    fn default() -> Self {
        Self {
            eps_pd: Tolerances::default().eps_pd,
            trace_weights: [1.0, 1.0],
        }
    }
}

impl LmiOptions {
    pub fn from_tolerances(tol: &Tolerances) -> Self {
        Self { eps_pd: tol.eps_pd, ..Self::default() }
    }
}

/// Names of the decision variables of the piecewise problem.
pub mod names {
    pub const P: [&str; 2] = ["P1", "P2"];
    pub const B: [&str; 2] = ["b1", "b2"];
    pub const E: [&str; 2] = ["e1", "e2"];
    pub const GAMMA: [&str; 2] = ["gamma1", "gamma2"];
    pub const SIGMA: [&str; 2] = ["sigma1", "sigma2"];
    pub const COPOSITIVE: [&str; 2] = ["cop1", "cop2"];
    pub const COMMON_P: &str = "P";
}

fn slot(mode: Mode) -> usize {
    mode.index() - 1
}

/// An assembled problem together with everything needed to read back a certificate.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub kind: CertificateKind,
    pub alpha: f64,
    pub sdp: SdpProblem,
    pub system: BimodalSystem,
    pub geometry: SwitchGeometry,
    pub etilde: EtildeMode,
    pub options: LmiOptions,
    pub copositive: Option<[CopositiveVars; 2]>,
    pub warnings: Vec<String>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// Lyapunov-piece decision variables as affine expressions.
struct PieceExprs {
    p: MatExpr,
    b: MatExpr,
    e: AffineExpr,
}

/// Builds the piecewise problem at a fixed `alpha`.
///
/// Constraints, for `i = 1, 2`:
/// * `P_i - eps_pd I` PSD;
/// * `q1 - q2` vanishes on the switching hyperplane (linear equalities);
/// * `q1` copositive-lifted on `c^T x + f <= 0`, `q2` on `c^T x + f >= 0` (S + N splits);
/// * `gamma_i, sigma_i >= 0` and the decrease LMI `-L_i(P_i, b_i, e_i, gamma_i, sigma_i)` PSD.
pub fn build_piecewise_with(
    sys: &BimodalSystem,
    geom: &SwitchGeometry,
    emode: EtildeMode,
    alpha: f64,
    options: &LmiOptions,
) -> Result<LmiProblem> {
    check_alpha(alpha)?;
    let n = sys.n();
    if geom.n() != n {
        return Err(Error::DimensionMismatch("geometry and system dimensions differ".into()));
    }
    let mut sdp = SdpProblem::new();

    let mut pieces = Vec::with_capacity(2);
    for mode in Mode::BOTH {
        let i = slot(mode);
        let p = sdp.symmetric_var(names::P[i], n);
        let b = sdp.vector_var(names::B[i], n);
        let e = match emode.get(mode) {
            ConstTerm::Free => sdp.scalar_var(names::E[i]),
            ConstTerm::FixedZero => AffineExpr::zero(),
        };
        pieces.push(PieceExprs { p, b, e });
    }
    let multipliers: Vec<(AffineExpr, AffineExpr)> = (0..2)
        .map(|i| (sdp.scalar_var(names::GAMMA[i]), sdp.scalar_var(names::SIGMA[i])))
        .collect();

    for mode in Mode::BOTH {
        let i = slot(mode);
        let piece = &pieces[i];
        sdp.add_psd(
            format!("{} - eps I psd", names::P[i]),
            piece.p.sub(&MatExpr::identity(n).scale(options.eps_pd)),
        );
    }

    let blocks: Vec<MatExpr> = pieces.iter().map(|pc| copositive::form_block(&pc.p, &pc.b, &pc.e)).collect();
    copositive::hyperplane_equality_constraints(&mut sdp, "hyperplane continuity", geom, &blocks[0].sub(&blocks[1]));

    let cop: Vec<CopositiveVars> = Mode::BOTH
        .iter()
        .map(|&mode| {
            let i = slot(mode);
            let target = copositive::halfspace_positivity_expr(&blocks[i], geom, mode);
            copositive::copositive_relaxation_constraints(&mut sdp, names::COPOSITIVE[i], &target)
        })
        .collect();

    for mode in Mode::BOTH {
        let i = slot(mode);
        let (gamma, sigma) = &multipliers[i];
        sdp.add_nonneg(format!("{} >= 0", names::GAMMA[i]), gamma.clone());
        sdp.add_nonneg(format!("{} >= 0", names::SIGMA[i]), sigma.clone());
        let block = decrease_block_expr(sys, mode, &pieces[i], alpha, gamma, sigma);
        sdp.add_psd(format!("decrease LMI mode {}", mode.index()), block.scale(-1.0));
    }

    let [w1, w2] = options.trace_weights;
    sdp.maximize(pieces[0].p.trace() * w1 + pieces[1].p.trace() * w2);

    let [cop1, cop2]: [CopositiveVars; 2] = cop.try_into().expect("two pieces");
    Ok(LmiProblem {
        kind: CertificateKind::Piecewise,
        alpha,
        sdp,
        system: sys.clone(),
        geometry: geom.clone(),
        etilde: emode,
        options: *options,
        copositive: Some([cop1, cop2]),
        warnings: Vec::new(),
    })
}

/// Convenience wrapper deriving geometry and constant-term modes from the system.
pub fn build_piecewise(sys: &BimodalSystem, alpha: f64, options: &LmiOptions) -> Result<LmiProblem> {
    let geom = SwitchGeometry::new(sys.c(), sys.f())?;
    let emode = etilde_mode(&geom);
    build_piecewise_with(sys, &geom, emode, alpha, options)
}

/// The `(n+m+1)` decrease block of one mode, written out row by row:
///
/// ```text
/// [ He(A^T P) + a P        *                 *                       ]
/// [ B^T P                  -(g + a) Rw       *                       ]
/// [ (P d + A^T b + a b + s sig c)^T   b^T B   a e + 2 b^T d + g + 2 s f sig ]
/// ```
///
/// with `s = -1` for mode 1 and `s = +1` for mode 2. It must be negative semidefinite.
fn decrease_block_expr(
    sys: &BimodalSystem,
    mode: Mode,
    piece: &PieceExprs,
    alpha: f64,
    gamma: &AffineExpr,
    sigma: &AffineExpr,
) -> MatExpr {
    let a = sys.a(mode);
    let d = DMatrix::from_column_slice(sys.n(), 1, sys.d(mode).as_slice());
    let c = DMatrix::from_column_slice(sys.n(), 1, sys.c().as_slice());
    let s = mode.sign();
    let p = &piece.p;
    let b = &piece.b;

    let atp = MatExpr::const_mul(&a.transpose(), p);
    let top_left = atp.add(&atp.transpose()).add(&p.scale(alpha));
    let btp = MatExpr::const_mul(&sys.b().transpose(), p);
    let rw = MatExpr::from_constant(sys.rw());
    let mid = rw.scale_by(gamma).add(&rw.scale(alpha)).scale(-1.0);
    let column = p
        .mul_const(&d)
        .add(&MatExpr::const_mul(&a.transpose(), b))
        .add(&b.scale(alpha))
        .add(&MatExpr::from_constant(&c).scale_by(sigma).scale(s));
    let btb = MatExpr::const_mul(&sys.b().transpose(), b);
    let btd = b.transpose().mul_const(&d).get(0, 0).clone();
    let corner = piece.e.clone() * alpha + btd * 2.0 + gamma.clone() + sigma.clone() * (2.0 * s * sys.f());

    MatExpr::blocks(&[
        vec![top_left, btp.transpose(), column.clone()],
        vec![btp, mid, btb.clone()],
        vec![column.transpose(), btb.transpose(), MatExpr::scalar(corner.compact())],
    ])
}

/// Builds the common-quadratic baseline at a fixed `alpha`.
///
/// It ignores `d1`, `d2` and `f`; a warning is recorded when any of them is nonzero.
pub fn build_common_lyapunov(sys: &BimodalSystem, alpha: f64, options: &LmiOptions) -> Result<LmiProblem> {
    check_alpha(alpha)?;
    let n = sys.n();
    let mut warnings = Vec::new();
    if sys.has_affine_terms() {
        let msg = "affine terms present: the common quadratic baseline ignores d1, d2 and f".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }
    let mut sdp = SdpProblem::new();
    let p = sdp.symmetric_var(names::COMMON_P, n);
    sdp.add_psd("P - eps I psd", p.sub(&MatExpr::identity(n).scale(options.eps_pd)));
    for mode in Mode::BOTH {
        let atp = MatExpr::const_mul(&sys.a(mode).transpose(), &p);
        let top_left = atp.add(&atp.transpose()).add(&p.scale(alpha));
        let pb = p.mul_const(sys.b());
        let block = MatExpr::blocks(&[
            vec![top_left, pb.clone()],
            vec![pb.transpose(), MatExpr::from_constant(&(sys.rw() * -alpha))],
        ]);
        sdp.add_psd(format!("decrease LMI mode {}", mode.index()), block.scale(-1.0));
    }
    sdp.maximize(p.trace() * (options.trace_weights[0] + options.trace_weights[1]) * 0.5);
    Ok(LmiProblem {
        kind: CertificateKind::Common,
        alpha,
        sdp,
        system: sys.clone(),
        geometry: SwitchGeometry::new(sys.c(), sys.f())?,
        etilde: EtildeMode { e1: ConstTerm::FixedZero, e2: ConstTerm::FixedZero },
        options: *options,
        copositive: None,
        warnings,
    })
}

/// `M_i` of one mode for a numeric piece (no S-procedure terms).
pub fn big_m(sys: &BimodalSystem, mode: Mode, piece: &QuadraticForm, alpha: f64) -> DMatrix<f64> {
    let (n, m) = (sys.n(), sys.m());
    let a = sys.a(mode);
    let d = sys.d(mode);
    let p = piece.p();
    let b = piece.b();
    let mut out = DMatrix::zeros(n + m + 1, n + m + 1);
    out.view_mut((0, 0), (n, n)).copy_from(&(he(&(a.transpose() * p)) + p * alpha));
    let btp = sys.b().transpose() * p;
    out.view_mut((n, 0), (m, n)).copy_from(&btp);
    out.view_mut((0, n), (n, m)).copy_from(&btp.transpose());
    out.view_mut((n, n), (m, m)).copy_from(&(sys.rw() * -alpha));
    let row = d.transpose() * p + b.transpose() * a + b.transpose() * alpha;
    out.view_mut((n + m, 0), (1, n)).copy_from(&row);
    out.view_mut((0, n + m), (n, 1)).copy_from(&row.transpose());
    let btb = b.transpose() * sys.b();
    out.view_mut((n + m, n), (1, m)).copy_from(&btb);
    out.view_mut((n, n + m), (m, 1)).copy_from(&btb.transpose());
    out[(n + m, n + m)] = alpha * piece.e() + 2.0 * b.dot(d);
    out
}

/// S-procedure term added to `M_i`: encodes `s (c^T x + f) >= 0` and `w^T Rw w <= 1`.
pub fn s_procedure_term(sys: &BimodalSystem, mode: Mode, gamma: f64, sigma: f64) -> DMatrix<f64> {
    let (n, m) = (sys.n(), sys.m());
    let s = mode.sign();
    let mut out = DMatrix::zeros(n + m + 1, n + m + 1);
    let sc = sys.c() * (s * sigma);
    out.view_mut((0, n + m), (n, 1)).copy_from(&sc);
    out.view_mut((n + m, 0), (1, n)).copy_from(&sc.transpose());
    out.view_mut((n, n), (m, m)).copy_from(&(sys.rw() * -gamma));
    out[(n + m, n + m)] = gamma + 2.0 * s * sys.f() * sigma;
    out
}

/// Dense decrease block `M_i + S_i`; required negative semidefinite.
pub fn mode_block(sys: &BimodalSystem, mode: Mode, piece: &QuadraticForm, alpha: f64, gamma: f64, sigma: f64) -> DMatrix<f64> {
    big_m(sys, mode, piece, alpha) + s_procedure_term(sys, mode, gamma, sigma)
}

/// Dense common-quadratic decrease block `[[He(A^T P) + a P, P B], [B^T P, -a Rw]]`.
pub fn common_block(sys: &BimodalSystem, mode: Mode, p: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    let (n, m) = (sys.n(), sys.m());
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(&(he(&(sys.a(mode).transpose() * p)) + p * alpha));
    let pb = p * sys.b();
    out.view_mut((0, n), (n, m)).copy_from(&pb);
    out.view_mut((n, 0), (m, n)).copy_from(&pb.transpose());
    out.view_mut((n, n), (m, m)).copy_from(&(sys.rw() * -alpha));
    out
}

/// Re-verifies a certificate from its raw matrices, independently of any solver.
pub fn residuals(sys: &BimodalSystem, cert: &Certificate, options: &LmiOptions) -> Result<ResidualReport> {
    let n = sys.n();
    if cert.pieces.iter().any(|q| q.n() != n) {
        return Err(Error::DimensionMismatch("certificate and system dimensions differ".into()));
    }
    let mut report = ResidualReport::default();
    let eps = DMatrix::identity(n, n) * options.eps_pd;
    match cert.kind {
        CertificateKind::Common => {
            let p = cert.pieces[0].p();
            report.push_psd("P - eps I psd", &(p - &eps));
            for mode in Mode::BOTH {
                let block = common_block(sys, mode, p, cert.alpha);
                report.push_psd(&format!("decrease LMI mode {}", mode.index()), &(-block));
            }
        }
        CertificateKind::Piecewise => {
            let geom = SwitchGeometry::new(sys.c(), sys.f())?;
            let emode = etilde_mode(&geom);
            for mode in Mode::BOTH {
                let i = slot(mode);
                report.push_psd(&format!("{} - eps I psd", names::P[i]), &(cert.pieces[i].p() - &eps));
                if emode.get(mode) == ConstTerm::FixedZero {
                    report.push(&format!("{} fixed at zero", names::E[i]), ResidualKind::Equality, cert.pieces[i].e().abs());
                }
            }
            let delta = cert.pieces[0].block() - cert.pieces[1].block();
            report.push(
                "hyperplane continuity",
                ResidualKind::Equality,
                linalg::max_abs(&copositive::hyperplane_residual(&geom, &delta)),
            );
            for mode in Mode::BOTH {
                let i = slot(mode);
                let target = copositive::halfspace_positivity_matrix(&cert.pieces[i], &geom, mode)?;
                let prefix = names::COPOSITIVE[i];
                let (s, nn) = match &cert.splits {
                    Some(splits) => (splits[i].s.clone(), splits[i].n.clone()),
                    None => diagonal_split(&target),
                };
                report.push_psd(&format!("{prefix}: S psd"), &s);
                report.push(&format!("{prefix}: N >= 0"), ResidualKind::Nonneg, (-nn.min()).max(0.0));
                report.push(&format!("{prefix}: split"), ResidualKind::Equality, linalg::max_abs(&(target - s - nn)));
            }
            for mode in Mode::BOTH {
                let i = slot(mode);
                report.push(&format!("{} >= 0", names::GAMMA[i]), ResidualKind::Nonneg, (-cert.gamma[i]).max(0.0));
                report.push(&format!("{} >= 0", names::SIGMA[i]), ResidualKind::Nonneg, (-cert.sigma[i]).max(0.0));
                let block = mode_block(sys, mode, &cert.pieces[i], cert.alpha, cert.gamma[i], cert.sigma[i]);
                report.push_psd(&format!("decrease LMI mode {}", mode.index()), &(-block));
            }
        }
    }
    Ok(report)
}

/// Fallback split when a certificate carries none: positive off-diagonal entries go to `N`.
fn diagonal_split(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let nn = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if i != j { m[(i, j)].max(0.0) } else { 0.0 });
    (m - &nn, nn)
}

/// Helper for tests and audits: the homogeneous form with matrix `p` on both pieces.
pub fn common_pieces(p: &DMatrix<f64>) -> [QuadraticForm; 2] {
    let q = QuadraticForm::new(p.clone(), DVector::zeros(p.nrows()), 0.0);
    [q.clone(), q]
}
