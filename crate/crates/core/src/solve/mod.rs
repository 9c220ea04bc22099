//! Conic solver contract, certificates, and the one-dimensional search over `alpha`.

pub mod clarabel;

use std::path::Path;

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::clarabel::ClarabelSolver;
use crate::config::Tolerances;
use crate::copositive::{self, CopositiveCertificate, QuadraticForm};
use crate::error::{Error, Result};
use crate::linalg::{self, matrix_from_rows, matrix_to_rows, vector_to_vec};
pub use crate::lmi::CertificateKind;
use crate::lmi::{self, names, AffineExpr, LmiOptions, LmiProblem, MatExpr, ResidualReport, SdpProblem, VarValue};
use crate::model::{BimodalSystem, Mode, SwitchGeometry};

/// Outcome of one conic solve.
#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    NumericalFailure(String),
}

/// A backend able to maximize a linear objective subject to the constraints of an [`SdpProblem`].
pub trait ConicSolver: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &SdpProblem) -> SolveStatus;
}

/// Backend named by `PWA_REACH_SOLVER`; Clarabel when unset.
pub fn solver_from_env() -> Result<Box<dyn ConicSolver>> {
    match std::env::var("PWA_REACH_SOLVER") {
        Err(_) => Ok(Box::new(ClarabelSolver::default())),
        Ok(name) => solver_by_name(&name),
    }
}

pub fn solver_by_name(name: &str) -> Result<Box<dyn ConicSolver>> {
    match name.trim().to_ascii_lowercase().as_str() {
        "" | "clarabel" => Ok(Box::new(ClarabelSolver::default())),
        other => Err(Error::UnknownBackend(other.to_string())),
    }
}

/// A solved (or loaded) Lyapunov certificate.
///
/// `pieces[0]` lives on `c^T x + f <= 0`, `pieces[1]` on `c^T x + f >= 0`. A common
/// certificate stores the same homogeneous form twice.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub alpha: f64,
    pub pieces: [QuadraticForm; 2],
    pub gamma: [f64; 2],
    pub sigma: [f64; 2],
    pub objective: f64,
    pub splits: Option<[CopositiveCertificate; 2]>,
    pub audit: ResidualReport,
}

impl Certificate {
    /// Certificate with zero multipliers, no splits and an empty audit.
    pub fn new(kind: CertificateKind, alpha: f64, pieces: [QuadraticForm; 2]) -> Self {
        let objective = match kind {
            CertificateKind::Common => pieces[0].p().trace(),
            CertificateKind::Piecewise => pieces[0].p().trace() + pieces[1].p().trace(),
        };
        Self {
            kind,
            alpha,
            pieces,
            gamma: [0.0; 2],
            sigma: [0.0; 2],
            objective,
            splits: None,
            audit: ResidualReport::default(),
        }
    }

    pub fn common(alpha: f64, p: DMatrix<f64>) -> Self {
        Self::new(CertificateKind::Common, alpha, lmi::common_pieces(&p))
    }

    pub fn n(&self) -> usize {
        self.pieces[0].n()
    }

    pub fn piece(&self, mode: Mode) -> &QuadraticForm {
        &self.pieces[mode.index() - 1]
    }

    pub fn p(&self, mode: Mode) -> &DMatrix<f64> {
        self.piece(mode).p()
    }

    /// Sum of traces of the distinct Lyapunov matrices.
    pub fn trace(&self) -> f64 {
        match self.kind {
            CertificateKind::Common => self.pieces[0].p().trace(),
            CertificateKind::Piecewise => self.pieces[0].p().trace() + self.pieces[1].p().trace(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CertificateFile = serde_json::from_str(text)?;
        file.into_certificate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CertificateFile::from_certificate(self)).expect("certificate serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// On-disk certificate: row-major nested arrays. A common certificate uses the key `P`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateFile {
    pub kind: CertificateKind,
    pub alpha: f64,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
    #[serde(rename = "P1", default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<Vec<Vec<f64>>>,
    #[serde(rename = "P2", default, skip_serializing_if = "Option::is_none")]
    pub p2: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<Vec<f64>>,
    #[serde(default)]
    pub e1: f64,
    #[serde(default)]
    pub e2: f64,
    #[serde(default)]
    pub gamma1: f64,
    #[serde(default)]
    pub gamma2: f64,
    #[serde(default)]
    pub sigma1: f64,
    #[serde(default)]
    pub sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<[SplitFile; 2]>,
    #[serde(default)]
    pub audit: ResidualReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitFile {
    #[serde(rename = "S")]
    pub s: Vec<Vec<f64>>,
    #[serde(rename = "N")]
    pub n: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
}

impl CertificateFile {
    pub fn into_certificate(self) -> Result<Certificate> {
        let missing = |k: &str| Error::InvalidArgument(format!("certificate is missing `{k}`"));
        let square = |rows: &Vec<Vec<f64>>, k: &str| -> Result<DMatrix<f64>> {
            let m = matrix_from_rows(rows)?;
            if m.nrows() != m.ncols() || m.nrows() == 0 {
                return Err(Error::DimensionMismatch(format!("`{k}` must be a nonempty square matrix")));
            }
            Ok(m)
        };
        let vector = |v: &Option<Vec<f64>>, n: usize, k: &str| -> Result<DVector<f64>> {
            match v {
                None => Ok(DVector::zeros(n)),
                Some(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
                Some(_) => Err(Error::DimensionMismatch(format!("`{k}` must have length n"))),
            }
        };
        let mut cert = match self.kind {
            CertificateKind::Common => {
                let p = square(self.p.as_ref().ok_or_else(|| missing("P"))?, "P")?;
                Certificate::common(self.alpha, p)
            }
            CertificateKind::Piecewise => {
                let p1 = square(self.p1.as_ref().ok_or_else(|| missing("P1"))?, "P1")?;
                let p2 = square(self.p2.as_ref().ok_or_else(|| missing("P2"))?, "P2")?;
                let n = p1.nrows();
                if p2.nrows() != n {
                    return Err(Error::DimensionMismatch("P1 and P2 differ in size".into()));
                }
                let q1 = QuadraticForm::new(p1, vector(&self.b1, n, "b1")?, self.e1);
                let q2 = QuadraticForm::new(p2, vector(&self.b2, n, "b2")?, self.e2);
                let mut cert = Certificate::new(CertificateKind::Piecewise, self.alpha, [q1, q2]);
                cert.gamma = [self.gamma1, self.gamma2];
                cert.sigma = [self.sigma1, self.sigma2];
                if let Some([s1, s2]) = &self.splits {
                    let read = |s: &SplitFile| -> Result<CopositiveCertificate> {
                        Ok(CopositiveCertificate {
                            s: matrix_from_rows(&s.s)?,
                            n: matrix_from_rows(&s.n)?,
                            target: matrix_from_rows(&s.target)?,
                        })
                    };
                    cert.splits = Some([read(s1)?, read(s2)?]);
                }
                cert
            }
        };
        if let Some(obj) = self.objective {
            cert.objective = obj;
        }
        cert.audit = self.audit;
        Ok(cert)
    }

    pub fn from_certificate(cert: &Certificate) -> Self {
        let [q1, q2] = &cert.pieces;
        let common = cert.kind == CertificateKind::Common;
        let some_if = |cond: bool, m: &DMatrix<f64>| cond.then(|| matrix_to_rows(m));
        Self {
            kind: cert.kind,
            alpha: cert.alpha,
            p: some_if(common, q1.p()),
            p1: some_if(!common, q1.p()),
            p2: some_if(!common, q2.p()),
            b1: (!common).then(|| vector_to_vec(q1.b())),
            b2: (!common).then(|| vector_to_vec(q2.b())),
            e1: q1.e(),
            e2: q2.e(),
            gamma1: cert.gamma[0],
            gamma2: cert.gamma[1],
            sigma1: cert.sigma[0],
            sigma2: cert.sigma[1],
            objective: Some(cert.objective),
            splits: cert.splits.as_ref().map(|sp| {
                sp.clone().map(|c| SplitFile {
                    s: matrix_to_rows(&c.s),
                    n: matrix_to_rows(&c.n),
                    target: matrix_to_rows(&c.target),
                })
            }),
            audit: cert.audit.clone(),
        }
    }
}

/// Snaps a multiplier that is negative only by solver noise back to zero.
fn clamp_multiplier(v: f64, tol: &Tolerances) -> f64 {
    if v < 0.0 && v >= -tol.solver {
        0.0
    } else {
        v
    }
}

fn scalar_value(sdp: &SdpProblem, name: &str, x: &[f64]) -> f64 {
    match sdp.value_of(name, x) {
        Some(VarValue::Scalar(v)) => v,
        _ => 0.0,
    }
}

fn symmetric_value(sdp: &SdpProblem, name: &str, x: &[f64]) -> Result<DMatrix<f64>> {
    match sdp.value_of(name, x) {
        Some(VarValue::Symmetric(m)) => Ok(linalg::symmetrize(&m)),
        _ => Err(Error::InvalidArgument(format!("assignment has no symmetric variable `{name}`"))),
    }
}

fn vector_value(sdp: &SdpProblem, name: &str, x: &[f64]) -> Result<DVector<f64>> {
    match sdp.value_of(name, x) {
        Some(VarValue::Vector(v)) => Ok(v),
        _ => Err(Error::InvalidArgument(format!("assignment has no vector variable `{name}`"))),
    }
}

/// Reads a certificate out of a solver assignment without auditing it.
fn read_certificate(problem: &LmiProblem, x: &[f64], tol: &Tolerances) -> Result<Certificate> {
    let sdp = &problem.sdp;
    let mut cert = match problem.kind {
        CertificateKind::Common => Certificate::common(problem.alpha, symmetric_value(sdp, names::COMMON_P, x)?),
        CertificateKind::Piecewise => {
            let mut pieces = Vec::with_capacity(2);
            for i in 0..2 {
                let p = symmetric_value(sdp, names::P[i], x)?;
                let b = vector_value(sdp, names::B[i], x)?;
                pieces.push(QuadraticForm::new(p, b, scalar_value(sdp, names::E[i], x)));
            }
            let pieces: [QuadraticForm; 2] = pieces.try_into().expect("two pieces");
            let mut cert = Certificate::new(CertificateKind::Piecewise, problem.alpha, pieces);
            for i in 0..2 {
                cert.gamma[i] = clamp_multiplier(scalar_value(sdp, names::GAMMA[i], x), tol);
                cert.sigma[i] = clamp_multiplier(scalar_value(sdp, names::SIGMA[i], x), tol);
            }
            if let Some(vars) = &problem.copositive {
                let mut splits = Vec::with_capacity(2);
                for (i, mode) in Mode::BOTH.into_iter().enumerate() {
                    let target = copositive::halfspace_positivity_matrix(&cert.pieces[i], &problem.geometry, mode)?;
                    let split = CopositiveCertificate::from_assignment(sdp, &vars[i], x, target)
                        .ok_or_else(|| Error::InvalidArgument("assignment has no copositive split".into()))?;
                    splits.push(split);
                }
                cert.splits = Some(splits.try_into().expect("two splits"));
            }
            cert
        }
    };
    cert.objective = sdp.objective.eval(x);
    Ok(cert)
}

/// Audits a certificate against `sys`, failing above `10 * tol.solver`.
pub fn audit_certificate(sys: &BimodalSystem, mut cert: Certificate, options: &LmiOptions, tol: &Tolerances) -> Result<Certificate> {
    let report = lmi::residuals(sys, &cert, options)?;
    if let Some(worst) = report.worst() {
        if worst.value > 10.0 * tol.solver {
            return Err(Error::AuditFailed {
                constraint: worst.name.clone(),
                worst: worst.value,
                report: report.clone(),
            });
        }
    }
    cert.audit = report;
    Ok(cert)
}

/// Builds a certificate from a solver assignment: symmetrizes, clamps multipliers, audits.
pub fn extract_certificate(problem: &LmiProblem, x: &[f64], tol: &Tolerances) -> Result<Certificate> {
    let cert = read_certificate(problem, x, tol)?;
    audit_certificate(&problem.system, cert, &problem.options, tol)
}

pub fn build_problem(sys: &BimodalSystem, kind: CertificateKind, alpha: f64, options: &LmiOptions) -> Result<LmiProblem> {
    match kind {
        CertificateKind::Piecewise => lmi::build_piecewise(sys, alpha, options),
        CertificateKind::Common => lmi::build_common_lyapunov(sys, alpha, options),
    }
}

/// `(A_i, B, d_i) / s`: the decrease blocks of the scaled system at `alpha / s` are those of
/// the original at `alpha` divided by `s`, with `gamma, sigma` divided by `s` and `P, b, e` unchanged.
fn rescaled(sys: &BimodalSystem, s: f64) -> Result<BimodalSystem> {
    BimodalSystem::new(
        sys.a1() / s,
        sys.a2() / s,
        sys.b() / s,
        sys.d1() / s,
        sys.d2() / s,
        sys.c().clone(),
        sys.f(),
        sys.rw().clone(),
    )
}

fn rescale_factor(sys: &BimodalSystem) -> f64 {
    linalg::max_abs(sys.a1()).max(linalg::max_abs(sys.a2())).max(linalg::max_abs(sys.b()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SampleStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
    AuditFailed,
}

/// One point of the objective-versus-alpha curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSample {
    pub alpha: f64,
    pub status: SampleStatus,
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<String>,
    #[serde(default)]
    pub rescaled: bool,
}

#[derive(Debug, Clone)]
pub struct AlphaSearchResult {
    pub kind: CertificateKind,
    pub best_alpha: f64,
    pub best_certificate: Certificate,
    pub trace_curve: Vec<AlphaSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub grid_points: usize,
    /// Smallest grid point as a fraction of `alpha_max`.
    pub lower_ratio: f64,
    pub refine_evals: usize,
    pub lmi: LmiOptions,
    pub tol: Tolerances,
    pub parallel: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            grid_points: 24,
            lower_ratio: 1e-3,
            refine_evals: 8,
            lmi: LmiOptions::default(),
            tol: Tolerances::default(),
            parallel: true,
        }
    }
}

impl SearchOptions {
    pub fn with_tolerances(tol: Tolerances) -> Self {
        Self { lmi: LmiOptions::from_tolerances(&tol), tol, ..Self::default() }
    }
}

/// `2 min_i(-max Re lambda(A_i))`.
pub fn alpha_max(sys: &BimodalSystem) -> f64 {
    let [m1, m2] = sys.hurwitz_margins();
    2.0 * (-m1).min(-m2)
}

/// `points` values spaced logarithmically over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let (l0, l1) = (lo.ln(), hi.ln());
            (0..points)
                .map(|k| (l0 + (l1 - l0) * k as f64 / (points - 1) as f64).exp())
                .collect()
        }
    }
}

fn solve_once(sys: &BimodalSystem, kind: CertificateKind, alpha: f64, opts: &SearchOptions, solver: &dyn ConicSolver) -> Result<std::result::Result<Certificate, SolveStatus>> {
    let problem = build_problem(sys, kind, alpha, &opts.lmi)?;
    match solver.solve(&problem.sdp) {
        SolveStatus::Optimal { x, .. } => Ok(Ok(read_certificate(&problem, &x, &opts.tol)?)),
        other => Ok(Err(other)),
    }
}

/// Solves at one `alpha`, retrying once on a rescaled system after a numerical failure.
pub fn evaluate_alpha(
    sys: &BimodalSystem,
    kind: CertificateKind,
    alpha: f64,
    opts: &SearchOptions,
    solver: &dyn ConicSolver,
) -> Result<(AlphaSample, Option<Certificate>)> {
    let mut sample = AlphaSample { alpha, status: SampleStatus::Infeasible, objective: None, info: None, rescaled: false };
    let mut outcome = solve_once(sys, kind, alpha, opts, solver)?;
    if let Err(SolveStatus::NumericalFailure(info)) = &outcome {
        let s = rescale_factor(sys);
        debug!("alpha {alpha}: {info}; retrying with the system scaled by 1/{s}");
        sample.rescaled = true;
        outcome = solve_once(&rescaled(sys, s)?, kind, alpha / s, opts, solver)?.map(|mut cert| {
            cert.alpha = alpha;
            for v in cert.gamma.iter_mut().chain(cert.sigma.iter_mut()) {
                *v *= s;
            }
            cert
        });
    }
    match outcome {
        Ok(cert) => match audit_certificate(sys, cert, &opts.lmi, &opts.tol) {
            Ok(cert) => {
                sample.status = SampleStatus::Optimal;
                sample.objective = Some(cert.objective);
                Ok((sample, Some(cert)))
            }
            Err(Error::AuditFailed { constraint, worst, .. }) => {
                sample.status = SampleStatus::AuditFailed;
                sample.info = Some(format!("{constraint}: {worst:e}"));
                Ok((sample, None))
            }
            Err(e) => Err(e),
        },
        Err(SolveStatus::Infeasible) => Ok((sample, None)),
        Err(SolveStatus::NumericalFailure(info)) => {
            sample.status = SampleStatus::NumericalFailure;
            sample.info = Some(info);
            Ok((sample, None))
        }
        Err(SolveStatus::Optimal { .. }) => unreachable!("optimal outcomes are certificates"),
    }
}

/// Solves at a single fixed `alpha`.
pub fn solve_at(sys: &BimodalSystem, kind: CertificateKind, alpha: f64, opts: &SearchOptions, solver: &dyn ConicSolver) -> Result<Certificate> {
    alpha_search(sys, kind, Some(&[alpha]), opts, solver).map(|r| r.best_certificate)
}

type Evaluated = (AlphaSample, Option<Certificate>);

fn evaluate_many(sys: &BimodalSystem, kind: CertificateKind, alphas: &[f64], opts: &SearchOptions, solver: &dyn ConicSolver) -> Result<Vec<Evaluated>> {
    if opts.parallel {
        alphas.par_iter().map(|&a| evaluate_alpha(sys, kind, a, opts, solver)).collect()
    } else {
        alphas.iter().map(|&a| evaluate_alpha(sys, kind, a, opts, solver)).collect()
    }
}

/// Index of the best optimal sample: largest objective, lowest alpha on ties.
fn best_index(samples: &[Evaluated]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (s, _)) in samples.iter().enumerate() {
        let Some(obj) = s.objective else { continue };
        best = match best {
            None => Some(i),
            Some(j) => {
                let (bo, ba) = (samples[j].0.objective.unwrap(), samples[j].0.alpha);
                if obj > bo || (obj == bo && s.alpha < ba) {
                    Some(i)
                } else {
                    Some(j)
                }
            }
        };
    }
    best
}

/// Searches `alpha` for the largest trace objective.
///
/// With `grid = None`, evaluates a logarithmic grid over `(0, alpha_max]` and refines around the
/// best point by golden-section search. A user grid is evaluated as given.
pub fn alpha_search(
    sys: &BimodalSystem,
    kind: CertificateKind,
    grid: Option<&[f64]>,
    opts: &SearchOptions,
    solver: &dyn ConicSolver,
) -> Result<AlphaSearchResult> {
    sys.require_continuity(&opts.tol)?;
    sys.require_hurwitz(&opts.tol)?;
    if kind == CertificateKind::Common && sys.has_affine_terms() {
        warn!("affine terms present: the common quadratic baseline ignores d1, d2 and f");
    }
    let mut evaluated = match grid {
        Some(g) => {
            if g.is_empty() {
                return Err(Error::InvalidArgument("empty alpha grid".into()));
            }
            if let Some(&bad) = g.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
                return Err(Error::InvalidAlpha(bad));
            }
            evaluate_many(sys, kind, g, opts, solver)?
        }
        None => {
            let hi = alpha_max(sys);
            let grid = log_grid(hi * opts.lower_ratio, hi, opts.grid_points);
            info!("{kind}: alpha grid over [{:.3e}, {:.3e}], {} points", grid[0], hi, grid.len());
            let mut evaluated = evaluate_many(sys, kind, &grid, opts, solver)?;
            if let Some(k) = best_index(&evaluated) {
                let lo = if k > 0 { grid[k - 1] } else { grid[k] * opts.lower_ratio.max(0.5) };
                let hi = if k + 1 < grid.len() { grid[k + 1] } else { grid[k] };
                let refined = golden_section(sys, kind, lo, hi, opts, solver)?;
                evaluated.extend(refined);
            }
            evaluated
        }
    };
    evaluated.sort_by(|a, b| a.0.alpha.total_cmp(&b.0.alpha));
    let Some(best) = best_index(&evaluated) else {
        return Err(Error::AllInfeasible(evaluated.into_iter().map(|(s, _)| s).collect()));
    };
    let best_certificate = evaluated[best].1.clone().expect("optimal samples carry certificates");
    let trace_curve = evaluated.into_iter().map(|(s, _)| s).collect();
    Ok(AlphaSearchResult {
        kind,
        best_alpha: best_certificate.alpha,
        best_certificate,
        trace_curve,
    })
}

/// Golden-section maximization of the objective over `[lo, hi]`; infeasible points count as `-inf`.
fn golden_section(sys: &BimodalSystem, kind: CertificateKind, mut lo: f64, mut hi: f64, opts: &SearchOptions, solver: &dyn ConicSolver) -> Result<Vec<Evaluated>> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut out: Vec<Evaluated> = Vec::new();
    if opts.refine_evals == 0 || hi.is_nan() || lo.is_nan() || hi <= lo {
        return Ok(out);
    }
    let eval = |a: f64, out: &mut Vec<Evaluated>| -> Result<f64> {
        let r = evaluate_alpha(sys, kind, a, opts, solver)?;
        let v = r.0.objective.unwrap_or(f64::NEG_INFINITY);
        out.push(r);
        Ok(v)
    };
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = eval(x1, &mut out)?;
    let mut f2 = if opts.refine_evals > 1 { eval(x2, &mut out)? } else { f64::NEG_INFINITY };
    while out.len() < opts.refine_evals {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = eval(x1, &mut out)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = eval(x2, &mut out)?;
        }
    }
    Ok(out)
}

/// Recovers `gamma`, `sigma` and copositive splits for a piecewise certificate whose
/// Lyapunov pieces are fixed (for instance printed to a few decimals).
///
/// Maximizes a common margin `t <= 0` with `-(M_i + S_i(gamma_i, sigma_i)) >= t I` and
/// `S_i >= t I`; at the optimum every residual of the returned certificate is at most `-t`.
pub fn recover_multipliers(sys: &BimodalSystem, cert: &Certificate, solver: &dyn ConicSolver) -> Result<Certificate> {
    if cert.kind != CertificateKind::Piecewise {
        return Ok(cert.clone());
    }
    let geom = SwitchGeometry::new(sys.c(), sys.f())?;
    let mut sdp = SdpProblem::new();
    let t = sdp.scalar_var("t");
    sdp.add_nonneg("t <= 0", -t.clone());
    let mut split_vars = Vec::new();
    for (i, mode) in Mode::BOTH.into_iter().enumerate() {
        let gamma = sdp.scalar_var(names::GAMMA[i]);
        let sigma = sdp.scalar_var(names::SIGMA[i]);
        sdp.add_nonneg(format!("{} >= 0", names::GAMMA[i]), gamma.clone());
        sdp.add_nonneg(format!("{} >= 0", names::SIGMA[i]), sigma.clone());
        let piece = &cert.pieces[i];
        let k = sys.n() + sys.m() + 1;
        let block = MatExpr::from_constant(&lmi::big_m(sys, mode, piece, cert.alpha))
            .add(&MatExpr::from_constant(&lmi::s_procedure_term(sys, mode, 1.0, 0.0)).scale_by(&gamma))
            .add(&MatExpr::from_constant(&lmi::s_procedure_term(sys, mode, 0.0, 1.0)).scale_by(&sigma));
        let margin = MatExpr::identity(k).scale_by(&t);
        sdp.add_psd(format!("decrease LMI mode {}", mode.index()), block.scale(-1.0).sub(&margin));

        let target = copositive::halfspace_positivity_matrix(piece, &geom, mode)?;
        let kk = target.nrows();
        let prefix = names::COPOSITIVE[i];
        let s = sdp.symmetric_var(&format!("{prefix}.S"), kk);
        let nn = sdp.symmetric_var(&format!("{prefix}.N"), kk);
        sdp.add_psd(format!("{prefix}: S psd"), s.sub(&MatExpr::identity(kk).scale_by(&t)));
        for r in 0..kk {
            for c in r..kk {
                sdp.add_nonneg(format!("{prefix}: N[{r},{c}] >= 0"), nn.get(r, c).clone());
                let split = s.get(r, c).clone() + nn.get(r, c).clone() - AffineExpr::constant(target[(r, c)]);
                sdp.add_eq(format!("{prefix}: split[{r},{c}]"), split.compact());
            }
        }
        split_vars.push((format!("{prefix}.N"), target));
    }
    sdp.maximize(t);
    let x = match solver.solve(&sdp) {
        SolveStatus::Optimal { x, .. } => x,
        SolveStatus::Infeasible => return Err(Error::Solver("multiplier recovery reported infeasible".into())),
        SolveStatus::NumericalFailure(info) => return Err(Error::Solver(info)),
    };
    let mut out = cert.clone();
    for i in 0..2 {
        out.gamma[i] = scalar_value(&sdp, names::GAMMA[i], &x).max(0.0);
        out.sigma[i] = scalar_value(&sdp, names::SIGMA[i], &x).max(0.0);
    }
    let mut splits = Vec::new();
    for (n_name, target) in split_vars {
        let n = symmetric_value(&sdp, &n_name, &x)?.map(|v| v.max(0.0));
        // Keep the split exact; solver noise lands in S.
        let s = &target - &n;
        splits.push(CopositiveCertificate { s: linalg::symmetrize(&s), n, target });
    }
    out.splits = Some(splits.try_into().expect("two splits"));
    out.audit = lmi::residuals(sys, &out, &LmiOptions { eps_pd: 0.0, ..LmiOptions::default() })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn scalar_system() -> BimodalSystem {
        BimodalSystem::from_json(r#"{"A1":[[-1]],"A2":[[-1]],"B":[[1]],"c":[1],"f":0,"Rw":[[1]]}"#).unwrap()
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-3, 2.0, 24);
        assert_eq!(g.len(), 24);
        assert!((g[0] - 1e-3).abs() < 1e-15 && (g[23] - 2.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn scalar_oracle_search() {
        let solver = ClarabelSolver::default();
        for kind in [CertificateKind::Common, CertificateKind::Piecewise] {
            let r = alpha_search(&scalar_system(), kind, None, &SearchOptions::default(), &solver).unwrap();
            // p(alpha) = alpha (2 - alpha)
            let p = r.best_certificate.p(Mode::Neg)[(0, 0)];
            assert!((r.best_alpha - 1.0).abs() < 0.05, "{kind}: alpha {}", r.best_alpha);
            assert!(p > 0.997 && p <= 1.0 + 1e-6, "{kind}: p {p}");
            assert_eq!(r.trace_curve.len(), 32);
        }
    }

    #[test]
    fn fixed_grid_is_used_verbatim() {
        let r = alpha_search(&bundled::example1(), CertificateKind::Piecewise, Some(&[0.4]), &SearchOptions::default(), &ClarabelSolver::default()).unwrap();
        assert_eq!(r.trace_curve.len(), 1);
        assert_eq!(r.best_alpha, 0.4);
    }

    #[test]
    fn non_hurwitz_fails_before_solving() {
        let sys = BimodalSystem::from_json(r#"{"A1":[[0.5]],"A2":[[0.5]],"B":[[1]],"c":[1],"f":0,"Rw":[[1]]}"#).unwrap();
        struct Panics;
        impl ConicSolver for Panics {
            fn name(&self) -> &str {
                "panics"
            }
            fn solve(&self, _: &SdpProblem) -> SolveStatus {
                panic!("solver must not be called")
            }
        }
        let err = alpha_search(&sys, CertificateKind::Piecewise, None, &SearchOptions::default(), &Panics).unwrap_err();
        assert!(matches!(err, Error::NotHurwitz { mode: 1, .. }));
    }

    #[test]
    fn above_alpha_max_is_infeasible() {
        let sys = bundled::example1();
        let a = 1.1 * alpha_max(&sys);
        let err = alpha_search(&sys, CertificateKind::Piecewise, Some(&[a]), &SearchOptions::default(), &ClarabelSolver::default()).unwrap_err();
        match err {
            Error::AllInfeasible(samples) => assert_eq!(samples[0].status, SampleStatus::Infeasible),
            other => panic!("{other:?}"),
        }
    }

    /// Reports a numerical failure on its first call, then defers to Clarabel.
    #[derive(Default)]
    struct FailsOnce(std::sync::atomic::AtomicBool);
    impl ConicSolver for FailsOnce {
        fn name(&self) -> &str {
            "fails-once"
        }
        fn solve(&self, p: &SdpProblem) -> SolveStatus {
            if !self.0.swap(true, std::sync::atomic::Ordering::SeqCst) {
                return SolveStatus::NumericalFailure("forced".into());
            }
            ClarabelSolver::default().solve(p)
        }
    }

    #[test]
    fn rescaled_retry_maps_back() {
        let sys = bundled::example1();
        let opts = SearchOptions { parallel: false, ..SearchOptions::default() };
        let direct = solve_at(&sys, CertificateKind::Piecewise, 0.4, &opts, &ClarabelSolver::default()).unwrap();
        let (sample, cert) = evaluate_alpha(&sys, CertificateKind::Piecewise, 0.4, &opts, &FailsOnce::default()).unwrap();
        assert!(sample.rescaled);
        let cert = cert.unwrap();
        assert_eq!(cert.alpha, 0.4);
        assert!(cert.audit.max_violation() <= 1e-5);
        assert!((cert.objective - direct.objective).abs() < 1e-3 * direct.objective);
    }

    #[test]
    fn clamps_tiny_negative_multipliers() {
        let tol = Tolerances::default();
        assert_eq!(clamp_multiplier(-1e-9, &tol), 0.0);
        assert_eq!(clamp_multiplier(-1e-3, &tol), -1e-3);
        assert_eq!(clamp_multiplier(0.25, &tol), 0.25);
    }

    #[test]
    fn extraction_symmetrizes() {
        let sys = bundled::example1();
        let problem = lmi::build_common_lyapunov(&sys, 0.4, &LmiOptions::default()).unwrap();
        let SolveStatus::Optimal { mut x, .. } = ClarabelSolver::default().solve(&problem.sdp) else { panic!() };
        let cert = extract_certificate(&problem, &x, &Tolerances::default()).unwrap();
        let p = cert.p(Mode::Neg).clone();
        assert_eq!(p, p.transpose());
        // Perturbing the stored assignment by 1e-13 keeps it auditable.
        x.iter_mut().for_each(|v| *v += 1e-13);
        assert!(extract_certificate(&problem, &x, &Tolerances::default()).is_ok());
    }

    #[test]
    fn certificate_json_roundtrip() {
        let r = solve_at(&bundled::example1(), CertificateKind::Piecewise, 0.4, &SearchOptions::default(), &ClarabelSolver::default()).unwrap();
        let back = Certificate::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let common = bundled::example2_printed_common();
        assert_eq!(common.kind, CertificateKind::Common);
        assert_eq!(Certificate::from_json(&common.to_json()).unwrap(), common);
    }

    #[test]
    fn printed_example2_certificates_audit() {
        let sys = bundled::example2();
        let opts = LmiOptions { eps_pd: 0.0, ..LmiOptions::default() };
        let common = bundled::example2_printed_common();
        // entries are rounded to four decimals
        assert!(lmi::residuals(&sys, &common, &opts).unwrap().max_violation() <= 5e-3);
        let printed = bundled::example2_printed_piecewise();
        assert!(lmi::residuals(&sys, &printed, &opts).unwrap().max_violation() > 1.0);
        let pw = recover_multipliers(&sys, &printed, &ClarabelSolver::default()).unwrap();
        assert!(lmi::residuals(&sys, &pw, &opts).unwrap().max_violation() <= 5e-3);
        assert_eq!(pw.pieces, printed.pieces);
        for mode in Mode::BOTH {
            assert!(linalg::min_eig(&(pw.p(mode) - common.p(Mode::Neg))) > 0.0);
        }
    }

    #[test]
    fn fresh_example2_dominates_in_trace() {
        let sys = bundled::example2();
        let solver = ClarabelSolver::default();
        let opts = SearchOptions::default();
        let pw = solve_at(&sys, CertificateKind::Piecewise, 0.1, &opts, &solver).unwrap();
        let cm = solve_at(&sys, CertificateKind::Common, 0.1, &opts, &solver).unwrap();
        assert!(pw.trace() >= 2.0 * cm.trace() - 1e-6);
        // the printed common P is near the common optimum
        assert!((cm.trace() - bundled::example2_printed_common().trace()).abs() < 0.01);
    }

    #[test]
    fn unknown_backend() {
        assert!(matches!(solver_by_name("mosek"), Err(Error::UnknownBackend(_))));
        assert_eq!(solver_by_name("Clarabel").unwrap().name(), "clarabel");
    }
}
