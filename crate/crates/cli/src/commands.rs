use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use nalgebra::DVector;
use pwa_reach::lmi::{self, LmiOptions};
use pwa_reach::model::{check_continuity, etilde_mode, Continuity, HurwitzStatus};
use pwa_reach::reachset::{self, PiecewiseEllipsoid, Point2, SvgPath};
use pwa_reach::sim::{self, AuditTolerances, DisturbancePolicy, SimOptions};
use pwa_reach::solve::{self, SearchOptions};
use pwa_reach::{bundled, BimodalSystem, Certificate, CertificateKind, Mode, SwitchGeometry, Tolerances};
use serde_json::{json, Value};

use crate::args::{CertArgs, Cli, Command, CommonArgs, PlotArgs, SimArgs};
use crate::output::{finite, write_file, write_json, Timings};

pub fn run(cli: &Cli) -> Result<()> {
    let common = cli.command.common();
    let tol = common.tol.tolerances();
    let sys = load_system(&common.system)?;
    std::fs::create_dir_all(&common.out_dir).with_context(|| format!("creating {}", common.out_dir.display()))?;
    if let Command::Check(_) = &cli.command {
        return check(&sys, &tol);
    }
    sys.require_continuity(&tol)?;
    match &cli.command {
        Command::Check(_) => unreachable!("handled above"),
        Command::Estimate { common, search, plot } => estimate(&sys, common, &tol, search.grid(), search.method.kinds(), plot),
        Command::Simulate { common, sim, every } => simulate(&sys, common, sim, *every),
        Command::Validate { common, certs, sim } => validate(&sys, common, &tol, certs, sim),
        Command::Plot { common, certs, plot, overlay, sim } => plot_sets(&sys, common, certs, plot, *overlay, sim),
        Command::Compare { common, piecewise, common_cert } => compare(&sys, common, &tol, piecewise.as_deref(), common_cert.as_deref()),
    }
}

fn load_system(source: &str) -> Result<BimodalSystem> {
    match source.strip_prefix("bundled:") {
        Some("example1") => Ok(bundled::example1()),
        Some("example2") => Ok(bundled::example2()),
        Some("example2-open-loop") => Ok(bundled::example2_open_loop()),
        Some(other) => bail!("unknown bundled system `{other}` (try example1, example2, example2-open-loop)"),
        None => BimodalSystem::load(source).with_context(|| format!("loading system {source}")),
    }
}

fn load_certificate(source: &str) -> Result<Certificate> {
    match source.strip_prefix("bundled:") {
        Some("example2-printed-common") => Ok(bundled::example2_printed_common()),
        Some("example2-printed-piecewise") => Ok(bundled::example2_printed_piecewise()),
        Some(other) => bail!("unknown bundled certificate `{other}` (try example2-printed-common, example2-printed-piecewise)"),
        None => Certificate::load(source).with_context(|| format!("loading certificate {source}")),
    }
}

/// Printed certificates carry no S-procedure multipliers; recover them before auditing.
fn with_multipliers(sys: &BimodalSystem, cert: Certificate) -> Result<Certificate> {
    if cert.kind != CertificateKind::Piecewise || cert.splits.is_some() {
        return Ok(cert);
    }
    info!("recovering multipliers for a certificate without splits");
    let solver = solve::solver_from_env()?;
    Ok(solve::recover_multipliers(sys, &cert, solver.as_ref())?)
}

fn certificate_name(kind: CertificateKind) -> String {
    format!("certificate_{kind}.json")
}

/// Explicit certificate paths, or the ones `estimate` wrote for the chosen method.
fn resolve_certificates(out_dir: &Path, certs: &CertArgs) -> Result<Vec<(String, Certificate)>> {
    let specs: Vec<String> = if certs.certificates.is_empty() {
        certs
            .method
            .kinds()
            .into_iter()
            .map(|k| out_dir.join(certificate_name(k)).display().to_string())
            .collect()
    } else {
        certs.certificates.clone()
    };
    specs.into_iter().map(|s| load_certificate(&s).map(|c| (s, c))).collect()
}

/// Merges `section` into OUT/audit.json so that several commands can share it.
fn update_audit(out_dir: &Path, section: &str, value: Value) -> Result<()> {
    let path = out_dir.join("audit.json");
    let mut doc = std::fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str::<Value>(&t).ok())
        .filter(Value::is_object)
        .unwrap_or_else(|| json!({}));
    doc[section] = value;
    write_json(out_dir, "audit.json", &doc)
}

fn check(sys: &BimodalSystem, tol: &Tolerances) -> Result<()> {
    let continuity = check_continuity(sys, tol);
    let geom = SwitchGeometry::new(sys.c(), sys.f())?;
    let emode = etilde_mode(&geom);
    let margins = sys.hurwitz_margins();
    let cont_json = match &continuity {
        Continuity::Continuous { h } => json!({ "continuous": true, "h": h.as_slice() }),
        Continuity::Violated { h, matrix_residual, offset_residual } => json!({
            "continuous": false,
            "h": h.as_slice(),
            "matrix_residual": matrix_residual,
            "offset_residual": offset_residual,
        }),
    };
    let summary = json!({
        "n": sys.n(),
        "m": sys.m(),
        "continuity": cont_json,
        "hurwitz": Mode::BOTH.iter().zip(margins).map(|(mode, max_re)| json!({
            "mode": mode.index(),
            "max_real_part": max_re,
            "status": HurwitzStatus::classify(max_re, tol),
        })).collect::<Vec<_>>(),
        "alpha_max": solve::alpha_max(sys),
        "origin_region": geom.origin_region(),
        "etilde": emode,
        "affine_terms": sys.has_affine_terms(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    sys.require_continuity(tol)?;
    Ok(())
}

fn estimate(
    sys: &BimodalSystem,
    common: &CommonArgs,
    tol: &Tolerances,
    grid: Option<Vec<f64>>,
    kinds: Vec<CertificateKind>,
    plot: &PlotArgs,
) -> Result<()> {
    let solver = solve::solver_from_env()?;
    let opts = SearchOptions::with_tolerances(*tol);
    let mut timings = Timings::default();
    let mut report = serde_json::Map::new();
    let mut certs = Vec::new();
    for kind in kinds {
        let result = timings.time(&format!("solve_{kind}"), || solve::alpha_search(sys, kind, grid.as_deref(), &opts, solver.as_ref()))?;
        let cert = result.best_certificate;
        cert.save(common.out_dir.join(certificate_name(kind)))?;
        timings.time(&format!("export_{kind}"), || export_set(sys, &cert, &common.out_dir, plot, &[]))?;
        println!(
            "{kind}: alpha = {:.6}, trace = {:.6}, worst residual = {:.3e}",
            result.best_alpha,
            cert.trace(),
            cert.audit.max_violation()
        );
        report.insert(
            kind.to_string(),
            json!({
                "best_alpha": result.best_alpha,
                "objective": cert.objective,
                "trace": cert.trace(),
                "max_residual": cert.audit.max_violation(),
                "trace_curve": result.trace_curve,
            }),
        );
        certs.push(cert);
    }
    if let [pw, cm] = certs.as_slice() {
        let dom = dominance_json(sys, pw, cm)?;
        println!("dominance: {dom}");
        report.insert("dominance".into(), dom);
    }
    report.insert("solver".into(), Value::from(solver.name()));
    report.insert("timings".into(), timings.into_value());
    update_audit(&common.out_dir, "estimate", Value::Object(report))
}

fn policy(sim: &SimArgs) -> (DisturbancePolicy, SimOptions) {
    (DisturbancePolicy::random(sim.seed, sim.hold_dt), SimOptions { t_end: sim.t_end, dt: sim.dt })
}

fn simulate(sys: &BimodalSystem, common: &CommonArgs, sim_args: &SimArgs, every: usize) -> Result<()> {
    let (policy, opts) = policy(sim_args);
    let x0 = DVector::zeros(sys.n());
    let mut csv = sim::trajectory_csv_header(sys.n(), sys.m());
    for k in 0..sim_args.trajectories {
        let traj = sim::integrate(sys, &x0, &policy.for_trajectory(k as u64), &opts)?;
        sim::append_trajectory_csv(&mut csv, k, &traj, every);
    }
    write_file(&common.out_dir, "trajectories.csv", &csv)?;
    println!("wrote {} trajectories to {}", sim_args.trajectories, common.out_dir.join("trajectories.csv").display());
    Ok(())
}

fn validate(sys: &BimodalSystem, common: &CommonArgs, tol: &Tolerances, certs: &CertArgs, sim_args: &SimArgs) -> Result<()> {
    let loaded = resolve_certificates(&common.out_dir, certs)?
        .into_iter()
        .map(|(p, c)| with_multipliers(sys, c).map(|c| (p, c)))
        .collect::<Result<Vec<_>>>()?;
    let mut timings = Timings::default();
    let options = LmiOptions::from_tolerances(tol);
    let residuals = loaded
        .iter()
        .map(|(_, c)| lmi::residuals(sys, c, &options))
        .collect::<pwa_reach::Result<Vec<_>>>()?;
    let sets = loaded
        .iter()
        .map(|(_, c)| PiecewiseEllipsoid::from_certificate(c, sys))
        .collect::<pwa_reach::Result<Vec<_>>>()?;
    let (policy, opts) = policy(sim_args);
    let set_refs: Vec<&PiecewiseEllipsoid> = sets.iter().collect();
    let cert_refs: Vec<&Certificate> = loaded.iter().map(|(_, c)| c).collect();
    let batch = timings.time("simulate_and_audit", || {
        sim::audit_batch(sys, &policy, sim_args.trajectories, &opts, &set_refs, &cert_refs, AuditTolerances { mem: tol.mem, audit: tol.audit })
    })?;
    let mut entries = Vec::new();
    for (k, (path, cert)) in loaded.iter().enumerate() {
        let (cont, lyap) = (&batch.containment[k], &batch.lyapunov[k]);
        println!(
            "{path}: inside_fraction = {}, violation_fraction = {}, worst residual = {:.3e}",
            cont.inside_fraction,
            lyap.violation_fraction,
            residuals[k].max_violation()
        );
        entries.push(json!({
            "certificate": path,
            "kind": cert.kind,
            "alpha": cert.alpha,
            "max_residual": residuals[k].max_violation(),
            "inside_fraction": cont.inside_fraction,
            "worst_excess": finite(cont.worst_excess),
            "states_checked": cont.samples,
            "violation_fraction": lyap.violation_fraction,
            "worst_margin": finite(lyap.worst_margin),
            "points_checked": lyap.samples,
        }));
    }
    update_audit(
        &common.out_dir,
        "validate",
        json!({
            "trajectories": sim_args.trajectories,
            "seed": sim_args.seed,
            "t_end": sim_args.t_end,
            "dt": sim_args.dt,
            "hold_dt": sim_args.hold_dt,
            "certificates": entries,
            "timings": timings.into_value(),
        }),
    )
}

fn projection(plot: &PlotArgs, n: usize) -> Result<Option<(usize, usize)>> {
    match plot.project.as_deref() {
        Some([i, j]) => {
            if *i == 0 || *j == 0 || *i > n || *j > n || i == j {
                bail!("--project needs two distinct coordinates in 1..={n}");
            }
            Ok(Some((i - 1, j - 1)))
        }
        Some(_) => bail!("--project takes exactly two coordinates"),
        None if n == 2 => Ok(None),
        None => Ok(Some((0, 1))),
    }
}

/// Writes `set_{kind}.csv` and `set_{kind}.svg`, optionally with trajectory overlays.
fn export_set(sys: &BimodalSystem, cert: &Certificate, out_dir: &Path, plot: &PlotArgs, overlays: &[Vec<Point2>]) -> Result<()> {
    let set = PiecewiseEllipsoid::from_certificate(cert, sys)?;
    let lines: Vec<(Mode, Vec<Point2>)> = match projection(plot, sys.n())? {
        None => Mode::BOTH
            .into_iter()
            .map(|m| set.boundary_polyline(m, plot.samples).map(|p| (m, p)))
            .collect::<pwa_reach::Result<Vec<_>>>()?
            .into_iter()
            .filter(|(_, p)| !p.is_empty())
            .collect(),
        Some(coords) => reachset::project_piecewise(&set, coords)?.polylines(plot.samples)?,
    };
    let name = cert.kind.to_string();
    let polylines: Vec<Vec<Point2>> = lines.iter().map(|(_, p)| p.clone()).collect();
    write_file(out_dir, &format!("set_{name}.csv"), &reachset::polylines_to_csv(&polylines))?;
    let mut paths: Vec<SvgPath> = overlays
        .iter()
        .map(|t| SvgPath::new(t.clone(), reachset::TRAJECTORY_COLOR, 0.5))
        .collect();
    for (mode, pts) in lines {
        let color = match (cert.kind, mode) {
            (CertificateKind::Common, _) => reachset::COMMON_COLOR,
            (_, Mode::Neg) => reachset::NEG_COLOR,
            (_, Mode::Pos) => reachset::POS_COLOR,
        };
        paths.push(SvgPath::new(pts, color, 2.0));
    }
    write_file(out_dir, &format!("set_{name}.svg"), &reachset::render_svg(&paths, 600.0))
}

fn plot_sets(sys: &BimodalSystem, common: &CommonArgs, certs: &CertArgs, plot: &PlotArgs, overlay: usize, sim_args: &SimArgs) -> Result<()> {
    let loaded = resolve_certificates(&common.out_dir, certs)?;
    let (i, j) = projection(plot, sys.n())?.unwrap_or((0, 1));
    let (policy, opts) = policy(sim_args);
    let mut overlays = Vec::with_capacity(overlay);
    for k in 0..overlay {
        let traj = sim::integrate(sys, &DVector::zeros(sys.n()), &policy.for_trajectory(k as u64), &opts)?;
        let stride = (traj.len() / 2000).max(1);
        overlays.push(traj.states.iter().step_by(stride).map(|x| [x[i], x[j]]).collect());
    }
    for (path, cert) in &loaded {
        export_set(sys, cert, &common.out_dir, plot, &overlays)?;
        info!("exported {path}");
        println!("{}: wrote set_{}.csv and set_{}.svg", path, cert.kind, cert.kind);
    }
    Ok(())
}

fn dominance_json(sys: &BimodalSystem, pw: &Certificate, cm: &Certificate) -> Result<Value> {
    if pw.kind != CertificateKind::Piecewise || cm.kind != CertificateKind::Common {
        bail!("compare needs a piecewise and a common certificate");
    }
    let set = PiecewiseEllipsoid::from_certificate(pw, sys)?;
    let dom = reachset::compare_dominance(&set, &cm.pieces[0])?;
    Ok(json!({
        "trace_p1": pw.p(Mode::Neg).trace(),
        "trace_p2": pw.p(Mode::Pos).trace(),
        "trace_piecewise": pw.trace(),
        "trace_common": cm.trace(),
        "min_eig_p1_minus_p": dom.min_eig_neg,
        "min_eig_p2_minus_p": dom.min_eig_pos,
        "subset_flag": dom.subset_flag,
        "sampled_inside_fraction": dom.sampled_inside_fraction,
    }))
}

fn compare(sys: &BimodalSystem, common: &CommonArgs, tol: &Tolerances, pw: Option<&str>, cm: Option<&str>) -> Result<()> {
    let default = |k| common.out_dir.join(certificate_name(k)).display().to_string();
    let pw_path = pw.map_or_else(|| default(CertificateKind::Piecewise), str::to_string);
    let cm_path = cm.map_or_else(|| default(CertificateKind::Common), str::to_string);
    let pw = with_multipliers(sys, load_certificate(&pw_path)?)?;
    let cm = load_certificate(&cm_path)?;
    if pw.n() != sys.n() || cm.n() != sys.n() {
        bail!(pwa_reach::Error::DimensionMismatch("certificates and system differ in dimension".into()));
    }
    let mut dom = dominance_json(sys, &pw, &cm)?;
    let options = LmiOptions::from_tolerances(tol);
    dom["max_residual_piecewise"] = finite(lmi::residuals(sys, &pw, &options)?.max_violation());
    dom["max_residual_common"] = finite(lmi::residuals(sys, &cm, &options)?.max_violation());
    dom["piecewise"] = Value::from(pw_path);
    dom["common"] = Value::from(cm_path);
    println!("{}", serde_json::to_string_pretty(&dom)?);
    update_audit(&common.out_dir, "compare", dom)
}
