//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Built without the libtest harness so the lines show up in plain `cargo test` output.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use pwa_reach::copositive::QuadraticForm;
use pwa_reach::lmi::{self, LmiOptions};
use pwa_reach::reachset::{self, PiecewiseEllipsoid};
use pwa_reach::sim::{self, AuditTolerances, DisturbancePolicy, SimOptions};
use pwa_reach::solve::{self, ConicSolver, SearchOptions};
use pwa_reach::{bundled, linalg, BimodalSystem, Certificate, CertificateKind, Mode, Tolerances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria whose failure is expected and explained in the README.
const KNOWN_UNATTAINABLE: &[&str] = &["5b"];

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

struct Run {
    outcomes: Vec<Outcome>,
}

impl Run {
    fn record(&mut self, id: &'static str, title: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict}  {id:<3} {title}: {detail}");
        self.outcomes.push(Outcome { id, pass, detail });
    }
}

fn scalar_system() -> BimodalSystem {
    BimodalSystem::from_json(r#"{"A1":[[-1]],"A2":[[-1]],"B":[[1]],"c":[1],"f":0,"Rw":[[1]]}"#).unwrap()
}

fn criterion1(run: &mut Run, solver: &dyn ConicSolver) {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [CertificateKind::Common, CertificateKind::Piecewise] {
        let r = solve::alpha_search(&scalar_system(), kind, None, &SearchOptions::default(), solver).unwrap();
        for mode in Mode::BOTH {
            let p = r.best_certificate.p(mode)[(0, 0)];
            let half_width = 1.0 / p.sqrt();
            // covers [-1, 1] and is at most 5% wider
            ok &= (0.95..=1.0 + 1e-9).contains(&p) && (1.0 - 1e-9..=1.05).contains(&half_width);
            parts.push(format!("{kind}/{mode:?} p={p:.5} hw={half_width:.5}"));
        }
        ok &= (0.8..=1.2).contains(&r.best_alpha);
        parts.push(format!("{kind} alpha={:.4}", r.best_alpha));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 5.0;
    run.record("1", "scalar oracle", ok, format!("{}; {secs:.2}s", parts.join(", ")));
}

fn union_box(sets: &[&PiecewiseEllipsoid]) -> (DVector<f64>, DVector<f64>) {
    let boxes: Vec<_> = sets.iter().map(|s| s.bounding_box().expect("bounded set")).collect();
    let lo = boxes.iter().map(|b| b.0.clone()).reduce(|a, b| a.inf(&b)).unwrap();
    let hi = boxes.iter().map(|b| b.1.clone()).reduce(|a, b| a.sup(&b)).unwrap();
    (lo, hi)
}

fn criterion2(run: &mut Run, solver: &dyn ConicSolver) {
    let start = Instant::now();
    let sys = bundled::example1();
    let opts = SearchOptions::default();
    let pw = solve::solve_at(&sys, CertificateKind::Piecewise, 0.4, &opts, solver).unwrap();
    let cm = solve::solve_at(&sys, CertificateKind::Common, 0.4, &opts, solver).unwrap();
    let pw_set = PiecewiseEllipsoid::from_certificate(&pw, &sys).unwrap();
    let cm_set = PiecewiseEllipsoid::from_certificate(&cm, &sys).unwrap();
    let batch = sim::audit_batch(
        &sys,
        &DisturbancePolicy::random(0, 1e-2),
        1000,
        &SimOptions { t_end: 30.0, dt: 1e-3 },
        &[&pw_set, &cm_set],
        &[],
        AuditTolerances::default(),
    )
    .unwrap();
    let (lo, hi) = union_box(&[&pw_set, &cm_set]);
    let area = |set: &PiecewiseEllipsoid| {
        reachset::mc_volume(|x| set.contains(x, 0.0), &lo, &hi, 100_000, &mut ChaCha8Rng::seed_from_u64(1))
    };
    let (a_pw, a_cm) = (area(&pw_set), area(&cm_set));
    let secs = start.elapsed().as_secs_f64();
    let inside = [batch.containment[0].inside_fraction, batch.containment[1].inside_fraction];
    let pass = inside == [1.0, 1.0] && a_pw <= a_cm && secs < 60.0;
    run.record(
        "2",
        "example 1 at alpha 0.4",
        pass,
        format!(
            "inside piecewise={} common={} over {} trajectories; area piecewise={a_pw:.3} common={a_cm:.3}; {secs:.1}s",
            inside[0], inside[1], batch.trajectories
        ),
    );
}

fn criterion3(run: &mut Run, solver: &dyn ConicSolver) {
    let sys = bundled::example2();
    let opts = LmiOptions { eps_pd: 0.0, ..LmiOptions::default() };
    let cm = bundled::example2_printed_common();
    let pw = solve::recover_multipliers(&sys, &bundled::example2_printed_piecewise(), solver).unwrap();
    let r_cm = lmi::residuals(&sys, &cm, &opts).unwrap().max_violation();
    let r_pw = lmi::residuals(&sys, &pw, &opts).unwrap().max_violation();
    let p = cm.p(Mode::Neg);
    let e1 = linalg::min_eig(&(pw.p(Mode::Neg) - p));
    let e2 = linalg::min_eig(&(pw.p(Mode::Pos) - p));
    let pass = r_cm <= 5e-3 && r_pw <= 5e-3 && e1 > 0.0 && e2 > 0.0;
    run.record(
        "3",
        "example 2 printed certificates",
        pass,
        format!(
            "deficit common={r_cm:.2e} piecewise={r_pw:.2e} (gamma={:.2e},{:.2e} sigma={:.2e},{:.2e}); min eig P1-P={e1:.3e} P2-P={e2:.3e}",
            pw.gamma[0], pw.gamma[1], pw.sigma[0], pw.sigma[1]
        ),
    );
}

fn criterion4(run: &mut Run, solver: &dyn ConicSolver) -> Certificate {
    let sys = bundled::example2();
    let opts = SearchOptions::default();
    let start = Instant::now();
    let pw = solve::solve_at(&sys, CertificateKind::Piecewise, 0.1, &opts, solver).unwrap();
    let cm = solve::solve_at(&sys, CertificateKind::Common, 0.1, &opts, solver).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (t1, t2, t) = (pw.p(Mode::Neg).trace(), pw.p(Mode::Pos).trace(), cm.trace());
    let pass = t1 + t2 >= 2.0 * t - 1e-6 && secs < 10.0;
    run.record(
        "4",
        "example 2 fresh solve at alpha 0.1",
        pass,
        format!("trace P1+P2={:.3} vs 2 trace P={:.3}; {secs:.2}s", t1 + t2, 2.0 * t),
    );
    pw
}

/// Divides the mode-1 piece by `factor`.
fn corrupt(cert: &Certificate, factor: f64) -> Certificate {
    let q = cert.piece(Mode::Neg);
    let scaled = QuadraticForm::new(q.p() / factor, q.b() / factor, q.e() / factor);
    let mut bad = Certificate::new(CertificateKind::Piecewise, cert.alpha, [scaled, cert.pieces[1].clone()]);
    bad.gamma = cert.gamma;
    bad.sigma = cert.sigma;
    bad
}

fn criterion5(run: &mut Run, solver: &dyn ConicSolver, example2_cert: Certificate) {
    let ex1 = bundled::example1();
    let ex1_cert = solve::solve_at(&ex1, CertificateKind::Piecewise, 0.4, &SearchOptions::default(), solver).unwrap();
    let tol = Tolerances::default();
    let mut fresh = Vec::new();
    let mut control = Vec::new();
    let mut amplified = Vec::new();
    for (name, sys, cert) in [("ex1", &ex1, ex1_cert), ("ex2", &bundled::example2(), example2_cert)] {
        let down = corrupt(&cert, 10.0);
        let up = corrupt(&cert, 0.1);
        let batch = sim::audit_batch(
            sys,
            &DisturbancePolicy::random(0, 1e-2),
            100,
            &SimOptions { t_end: 30.0, dt: 1e-3 },
            &[],
            &[&cert, &down, &up],
            AuditTolerances { mem: tol.mem, audit: tol.audit },
        )
        .unwrap();
        fresh.push((name, batch.lyapunov[0].violation_fraction));
        control.push((name, batch.lyapunov[1].violation_fraction));
        amplified.push((name, batch.lyapunov[2].violation_fraction));
    }
    let fmt = |v: &[(&str, f64)]| v.iter().map(|(n, f)| format!("{n}={f:.4}")).collect::<Vec<_>>().join(" ");
    run.record("5a", "decrease audit, fresh certificates", fresh.iter().all(|f| f.1 == 0.0), format!("violation_fraction {}", fmt(&fresh)));
    // Shrinking a piece only scales down both sides of its decrease inequality apart from
    // the disturbance term, so a pointwise audit cannot flag it. Scaling up does.
    run.record(
        "5b",
        "decrease audit, P1/10 control",
        control.iter().all(|f| f.1 > 0.0),
        format!("violation_fraction {} (P1*10 gives {})", fmt(&control), fmt(&amplified)),
    );
}

fn criterion6(run: &mut Run, solver: &dyn ConicSolver) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let worst_split = (0..200)
        .map(|_| {
            let k = rng.random_range(2..=8);
            common::split_orthant_minimum(&mut rng, k, 10_000)
        })
        .fold(f64::INFINITY, f64::min);
    let mut certified = 0;
    let mut worst_q = f64::INFINITY;
    let mut attempts = 0;
    while certified < 200 && attempts < 2000 {
        attempts += 1;
        let n = rng.random_range(1..=4);
        if let Some((q, _)) = common::halfspace_soundness(&mut rng, n, 10_000, solver) {
            certified += 1;
            worst_q = worst_q.min(q);
        }
    }
    run.record(
        "6a",
        "copositivity soundness",
        worst_split >= -1e-9 && certified == 200 && worst_q >= -1e-9,
        format!("orthant min over 200 splits={worst_split:.3e}; half-space min over {certified} solver certificates={worst_q:.3e}"),
    );

    let (mut residual, mut disagreement) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let (r, d) = common::hyperplane_pair(&mut rng, n, 10_000);
        residual = residual.max(r);
        disagreement = disagreement.max(d);
    }
    run.record(
        "6b",
        "hyperplane continuity",
        disagreement <= 1e-9,
        format!("max |q1-q2|/(1+|x|^2)={disagreement:.3e}, equality residual={residual:.3e}"),
    );

    let mut worst = 0.0f64;
    let mut nonneg = true;
    for n in 1..=6 {
        let (w, ok) = common::decomposition_residual(&mut rng, n, 1000);
        worst = worst.max(w);
        nonneg &= ok;
    }
    run.record("6c", "half-space decomposition", worst <= 1e-9 && nonneg, format!("max residual={worst:.3e}, coefficients nonnegative={nonneg}"));
}

fn criterion7(run: &mut Run) {
    let sys = scalar_system();
    let error = |dt: f64| {
        let traj = sim::integrate(&sys, &DVector::zeros(1), &DisturbancePolicy::constant(&[1.0]), &SimOptions { t_end: 1.0, dt }).unwrap();
        let exact = 1.0 - (-1.0f64).exp();
        (traj.final_state().unwrap()[0] - exact).abs()
    };
    let (e1, e2) = (error(0.1), error(0.05));
    let ratio = e1 / e2;
    run.record("7", "RK4 order", (12.0..=20.0).contains(&ratio), format!("error {e1:.3e} -> {e2:.3e}, ratio {ratio:.2}"));
}

fn criterion8(run: &mut Run) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut excess, mut shortfall) = (f64::NEG_INFINITY, 0.0f64);
    for _ in 0..50 {
        let (e, s) = common::projection_margins(&mut rng, 10_000);
        excess = excess.max(e);
        shortfall = shortfall.max(s);
    }
    run.record(
        "8",
        "projection oracle",
        excess <= 1e-9 && shortfall <= 1e-3,
        format!("max excess over level={excess:.3e}, max tightness gap={shortfall:.3e}"),
    );
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let solver = solve::solver_from_env().expect("solver backend");
    let solver = solver.as_ref();
    let mut run = Run { outcomes: Vec::new() };
    let start = Instant::now();
    criterion1(&mut run, solver);
    criterion2(&mut run, solver);
    criterion3(&mut run, solver);
    let ex2 = criterion4(&mut run, solver);
    criterion5(&mut run, solver, ex2);
    criterion6(&mut run, solver);
    criterion7(&mut run);
    criterion8(&mut run);

    let unexpected: Vec<&Outcome> = run.outcomes.iter().filter(|o| !o.pass && !KNOWN_UNATTAINABLE.contains(&o.id)).collect();
    let passed = run.outcomes.iter().filter(|o| o.pass).count();
    println!(
        "acceptance: {passed}/{} passed in {:.1}s; known unattainable: {}",
        run.outcomes.len(),
        start.elapsed().as_secs_f64(),
        KNOWN_UNATTAINABLE.join(", ")
    );
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        for o in unexpected {
            eprintln!("unexpected failure {}: {}", o.id, o.detail);
        }
        ExitCode::FAILURE
    }
}
