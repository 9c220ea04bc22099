//! Simulation under bounded disturbances and trajectory audits.
//!
//! The vector field is continuous across the switching hyperplane, so a fixed-step RK4 that
//! picks the mode inside every stage needs no event handling.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copositive::QuadraticForm;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{BimodalSystem, Mode};
use crate::reachset::PiecewiseEllipsoid;
use crate::solve::Certificate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbancePolicy {
    /// `w = Rw^{-1/2} u`, `u` uniform in the unit ball, redrawn every `hold_dt`.
    PiecewiseConstantRandom { seed: u64, hold_dt: f64 },
    Constant { w: Vec<f64> },
    /// Like the random policy but with `u` on the unit sphere.
    ExtremalRandomSign { seed: u64, hold_dt: f64 },
}

impl DisturbancePolicy {
    pub fn random(seed: u64, hold_dt: f64) -> Self {
        Self::PiecewiseConstantRandom { seed, hold_dt }
    }

    pub fn constant(w: &[f64]) -> Self {
        Self::Constant { w: w.to_vec() }
    }

    /// Same policy with the seed advanced by `index`; used to give every trajectory its own stream.
    pub fn for_trajectory(&self, index: u64) -> Self {
        match self {
            Self::PiecewiseConstantRandom { seed, hold_dt } => Self::PiecewiseConstantRandom { seed: seed.wrapping_add(index), hold_dt: *hold_dt },
            Self::ExtremalRandomSign { seed, hold_dt } => Self::ExtremalRandomSign { seed: seed.wrapping_add(index), hold_dt: *hold_dt },
            Self::Constant { .. } => self.clone(),
        }
    }

    fn seed(&self) -> u64 {
        match self {
            Self::PiecewiseConstantRandom { seed, .. } | Self::ExtremalRandomSign { seed, .. } => *seed,
            Self::Constant { .. } => 0,
        }
    }

    fn hold_dt(&self) -> Option<f64> {
        match self {
            Self::PiecewiseConstantRandom { hold_dt, .. } | Self::ExtremalRandomSign { hold_dt, .. } => Some(*hold_dt),
            Self::Constant { .. } => None,
        }
    }
}

/// One draw from `policy` for the disturbance set `{w^T Rw w <= 1}`.
///
/// `rw_inv_sqrt` is `Rw^{-1/2}`.
pub fn sample_disturbance<R: Rng + ?Sized>(policy: &DisturbancePolicy, rw_inv_sqrt: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let m = rw_inv_sqrt.nrows();
    let on_sphere = |rng: &mut R| loop {
        let g = DVector::from_fn(m, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
        let norm = g.norm();
        if norm > 0.0 {
            break g / norm;
        }
    };
    match policy {
        DisturbancePolicy::Constant { w } => DVector::from_column_slice(w),
        DisturbancePolicy::ExtremalRandomSign { .. } => rw_inv_sqrt * on_sphere(rng),
        DisturbancePolicy::PiecewiseConstantRandom { .. } => {
            let u = on_sphere(rng);
            let radius = rng.random::<f64>().powf(1.0 / m as f64);
            rw_inv_sqrt * (u * radius)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub t_end: f64,
    pub dt: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { t_end: 30.0, dt: 1e-3 }
    }
}

impl SimOptions {
    fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.t_end.is_nan() || self.t_end < self.dt {
            return Err(Error::InvalidArgument(format!("t_end = {} is shorter than dt = {}", self.t_end, self.dt)));
        }
        Ok((self.t_end / self.dt).round() as usize)
    }
}

/// Sampled solution. `w_values[k]` is the disturbance applied on `[times[k], times[k+1])` (the
/// last entry repeats), `mode_trace[k]` the region of `states[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub w_values: Vec<DVector<f64>>,
    pub mode_trace: Vec<Mode>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }
}

/// One accepted RK4 step.
#[derive(Debug, Clone)]
pub struct Step {
    pub t: f64,
    pub x: DVector<f64>,
    pub x_next: DVector<f64>,
    pub w: DVector<f64>,
}

/// Fixed-step integration driving a callback per step; nothing is stored.
pub fn integrate_with(
    sys: &BimodalSystem,
    x0: &DVector<f64>,
    policy: &DisturbancePolicy,
    opts: &SimOptions,
    mut on_step: impl FnMut(&Step),
) -> Result<()> {
    if x0.len() != sys.n() {
        return Err(Error::DimensionMismatch("x0 must have length n".into()));
    }
    let steps = opts.steps()?;
    let dt = opts.dt;
    let rw_inv_sqrt = linalg::inv_sqrt_spd(sys.rw())?;
    if let DisturbancePolicy::Constant { w } = policy {
        let w = DVector::from_column_slice(w);
        if w.len() != sys.m() {
            return Err(Error::DimensionMismatch("constant disturbance must have length m".into()));
        }
        if w.dot(&(sys.rw() * &w)) > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument("constant disturbance lies outside w^T Rw w <= 1".into()));
        }
    }
    let hold_steps = match policy.hold_dt() {
        Some(h) if h > 0.0 => ((h / dt).round() as usize).max(1),
        Some(h) => return Err(Error::InvalidArgument(format!("hold_dt must be positive, got {h}"))),
        None => usize::MAX,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed());
    let mut x = x0.clone();
    let mut w = sample_disturbance(policy, &rw_inv_sqrt, &mut rng);
    for k in 0..steps {
        if k > 0 && hold_steps != usize::MAX && k % hold_steps == 0 {
            w = sample_disturbance(policy, &rw_inv_sqrt, &mut rng);
        }
        let k1 = sys.vector_field(&x, &w);
        let k2 = sys.vector_field(&(&x + &k1 * (dt / 2.0)), &w);
        let k3 = sys.vector_field(&(&x + &k2 * (dt / 2.0)), &w);
        let k4 = sys.vector_field(&(&x + &k3 * dt), &w);
        let x_next = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let t_next = (k + 1) as f64 * dt;
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState(t_next));
        }
        let step = Step { t: k as f64 * dt, x, x_next, w: w.clone() };
        on_step(&step);
        x = step.x_next;
    }
    Ok(())
}

/// Integrates from `x0` and stores every step.
pub fn integrate(sys: &BimodalSystem, x0: &DVector<f64>, policy: &DisturbancePolicy, opts: &SimOptions) -> Result<Trajectory> {
    let cap = opts.steps()? + 1;
    let mut traj = Trajectory {
        times: Vec::with_capacity(cap),
        states: Vec::with_capacity(cap),
        w_values: Vec::with_capacity(cap),
        mode_trace: Vec::with_capacity(cap),
    };
    let mut last: Option<Step> = None;
    integrate_with(sys, x0, policy, opts, |s| {
        traj.times.push(s.t);
        traj.states.push(s.x.clone());
        traj.w_values.push(s.w.clone());
        traj.mode_trace.push(sys.mode_at(&s.x));
        last = Some(s.clone());
    })?;
    if let Some(s) = last {
        traj.times.push(s.t + opts.dt);
        traj.mode_trace.push(sys.mode_at(&s.x_next));
        traj.states.push(s.x_next);
        traj.w_values.push(s.w);
    }
    Ok(traj)
}

/// `count` trajectories from the origin, trajectory `k` seeded with `seed + k`.
pub fn simulate_many(sys: &BimodalSystem, policy: &DisturbancePolicy, count: usize, opts: &SimOptions) -> Result<Vec<Trajectory>> {
    let x0 = DVector::zeros(sys.n());
    (0..count)
        .into_par_iter()
        .map(|k| integrate(sys, &x0, &policy.for_trajectory(k as u64), opts))
        .collect()
}

/// Outcome of checking the decrease inequality `dV/dt + alpha V - alpha w^T Rw w <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub samples: u64,
    pub violations: u64,
    pub violation_fraction: f64,
    /// Largest signed left-hand side seen.
    pub worst_margin: f64,
}

impl Default for LyapunovReport {
    fn default() -> Self {
        Self { samples: 0, violations: 0, violation_fraction: 0.0, worst_margin: f64::NEG_INFINITY }
    }
}

impl LyapunovReport {
    pub fn merge(mut self, other: Self) -> Self {
        self.samples += other.samples;
        self.violations += other.violations;
        self.worst_margin = self.worst_margin.max(other.worst_margin);
        self.violation_fraction = if self.samples == 0 { 0.0 } else { self.violations as f64 / self.samples as f64 };
        self
    }

    fn record(&mut self, margin: f64, ok: bool) {
        self.samples += 1;
        self.violations += u64::from(!ok);
        self.worst_margin = self.worst_margin.max(margin);
        self.violation_fraction = self.violations as f64 / self.samples as f64;
    }
}

/// Fraction of states inside the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub samples: u64,
    pub inside: u64,
    pub inside_fraction: f64,
    /// Largest `q(x) - 1` of the active piece; `-inf` when nothing was checked.
    pub worst_excess: f64,
}

impl Default for ContainmentReport {
    fn default() -> Self {
        Self { samples: 0, inside: 0, inside_fraction: 1.0, worst_excess: f64::NEG_INFINITY }
    }
}

impl ContainmentReport {
    pub fn merge(mut self, other: Self) -> Self {
        self.samples += other.samples;
        self.inside += other.inside;
        self.worst_excess = self.worst_excess.max(other.worst_excess);
        self.inside_fraction = if self.samples == 0 { 1.0 } else { self.inside as f64 / self.samples as f64 };
        self
    }

    fn record(&mut self, set: &PiecewiseEllipsoid, x: &DVector<f64>, tol_mem: f64) {
        self.samples += 1;
        self.inside += u64::from(set.contains(x, tol_mem));
        self.worst_excess = self.worst_excess.max(set.value(x) - 1.0);
        self.inside_fraction = self.inside as f64 / self.samples as f64;
    }
}

/// Checks the decrease inequality of a certificate along trajectories.
#[derive(Debug, Clone)]
pub struct LyapunovChecker<'a> {
    sys: &'a BimodalSystem,
    cert: &'a Certificate,
    /// Relative tolerance: a point passes when the margin is at most `tol (1 + |V|)`.
    pub tol: f64,
    dt: f64,
}

impl<'a> LyapunovChecker<'a> {
    pub fn new(sys: &'a BimodalSystem, cert: &'a Certificate, tol: f64, dt: f64) -> Result<Self> {
        if cert.n() != sys.n() {
            return Err(Error::DimensionMismatch("certificate and system dimensions differ".into()));
        }
        Ok(Self { sys, cert, tol, dt })
    }

    /// `(margin, V)` of one piece at `x` under disturbance `w`.
    fn margin(&self, q: &QuadraticForm, x: &DVector<f64>, w: &DVector<f64>, xdot: &DVector<f64>) -> (f64, f64) {
        let v = q.eval(x);
        let a = self.cert.alpha;
        (q.gradient(x).dot(xdot) + a * v - a * w.dot(&(self.sys.rw() * w)), v)
    }

    /// Worst-case-accepted margin at `x`: near the hyperplane either piece may certify.
    pub fn check(&self, x: &DVector<f64>, w: &DVector<f64>) -> (f64, bool) {
        let xdot = self.sys.vector_field(x, w);
        let mode = self.sys.mode_at(x);
        let eval = |m: Mode| {
            let (margin, v) = self.margin(self.cert.piece(m), x, w, &xdot);
            (margin, margin <= self.tol * (1.0 + v.abs()))
        };
        let (margin, ok) = eval(mode);
        let dist = self.sys.switching_value(x).abs() / self.sys.c().norm();
        if !ok && dist <= self.dt * xdot.norm() {
            let other = match mode {
                Mode::Neg => Mode::Pos,
                Mode::Pos => Mode::Neg,
            };
            let (m2, ok2) = eval(other);
            if ok2 {
                return (m2, true);
            }
            return (margin.min(m2), false);
        }
        (margin, ok)
    }

    fn record_step(&self, report: &mut LyapunovReport, step: &Step) {
        let mid = (&step.x + &step.x_next) * 0.5;
        let (margin, ok) = self.check(&mid, &step.w);
        report.record(margin, ok);
    }
}

/// Decrease audit at every step midpoint of a stored trajectory.
pub fn lyapunov_audit(sys: &BimodalSystem, traj: &Trajectory, cert: &Certificate, tol: f64) -> Result<LyapunovReport> {
    let dt = traj.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let checker = LyapunovChecker::new(sys, cert, tol, dt)?;
    let mut report = LyapunovReport::default();
    for k in 0..traj.len().saturating_sub(1) {
        let step = Step {
            t: traj.times[k],
            x: traj.states[k].clone(),
            x_next: traj.states[k + 1].clone(),
            w: traj.w_values[k].clone(),
        };
        checker.record_step(&mut report, &step);
    }
    Ok(report)
}

pub fn containment_audit(trajs: &[Trajectory], set: &PiecewiseEllipsoid, tol_mem: f64) -> ContainmentReport {
    let mut report = ContainmentReport::default();
    for traj in trajs {
        for x in &traj.states {
            report.record(set, x, tol_mem);
        }
    }
    report
}

/// Combined audit of many trajectories without storing them; one report per set and per
/// certificate, in the order given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchAudit {
    pub trajectories: usize,
    pub containment: Vec<ContainmentReport>,
    pub lyapunov: Vec<LyapunovReport>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditTolerances {
    pub mem: f64,
    pub audit: f64,
}

impl Default for AuditTolerances {
    fn default() -> Self {
        Self { mem: 1e-9, audit: 1e-6 }
    }
}

/// Simulates `count` trajectories from the origin in parallel and audits them on the fly.
pub fn audit_batch(
    sys: &BimodalSystem,
    policy: &DisturbancePolicy,
    count: usize,
    opts: &SimOptions,
    sets: &[&PiecewiseEllipsoid],
    certs: &[&Certificate],
    tol: AuditTolerances,
) -> Result<BatchAudit> {
    let checkers = certs
        .iter()
        .map(|c| LyapunovChecker::new(sys, c, tol.audit, opts.dt))
        .collect::<Result<Vec<_>>>()?;
    let x0 = DVector::zeros(sys.n());
    let empty = || (vec![ContainmentReport::default(); sets.len()], vec![LyapunovReport::default(); certs.len()]);
    let per_traj = (0..count)
        .into_par_iter()
        .map(|k| -> Result<(Vec<ContainmentReport>, Vec<LyapunovReport>)> {
            let (mut cont, mut lyap) = empty();
            for (r, set) in cont.iter_mut().zip(sets) {
                r.record(set, &x0, tol.mem);
            }
            integrate_with(sys, &x0, &policy.for_trajectory(k as u64), opts, |step| {
                for (r, set) in cont.iter_mut().zip(sets) {
                    r.record(set, &step.x_next, tol.mem);
                }
                for (r, ch) in lyap.iter_mut().zip(&checkers) {
                    ch.record_step(r, step);
                }
            })?;
            Ok((cont, lyap))
        })
        .collect::<Result<Vec<_>>>()?;
    let (containment, lyapunov) = per_traj.into_iter().fold(empty(), |(c, l), (c2, l2)| {
        (
            c.into_iter().zip(c2).map(|(a, b)| a.merge(b)).collect(),
            l.into_iter().zip(l2).map(|(a, b)| a.merge(b)).collect(),
        )
    });
    Ok(BatchAudit { trajectories: count, containment, lyapunov })
}

/// Header of the trajectory CSV: `traj,t,x1..xn,w1..wm,mode`.
pub fn trajectory_csv_header(n: usize, m: usize) -> String {
    let mut out = String::from("traj,t");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    for i in 1..=m {
        let _ = write!(out, ",w{i}");
    }
    out.push_str(",mode\n");
    out
}

/// Appends every `every`-th sample of `traj` (and its last one); `mode` is 1 or 2.
pub fn append_trajectory_csv(out: &mut String, index: usize, traj: &Trajectory, every: usize) {
    let every = every.max(1);
    let last = traj.len().saturating_sub(1);
    for i in (0..traj.len()).filter(|&i| i % every == 0 || i == last) {
        let _ = write!(out, "{index},{}", traj.times[i]);
        for v in traj.states[i].iter().chain(traj.w_values[i].iter()) {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{}", traj.mode_trace[i].index());
    }
}

pub fn trajectories_to_csv(trajs: &[Trajectory], every: usize) -> String {
    let (n, m) = trajs
        .iter()
        .find(|t| !t.is_empty())
        .map_or((0, 0), |t| (t.states[0].len(), t.w_values[0].len()));
    let mut out = trajectory_csv_header(n, m);
    for (k, traj) in trajs.iter().enumerate() {
        append_trajectory_csv(&mut out, k, traj, every);
    }
    out
}
