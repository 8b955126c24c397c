//! Command execution and the run manifest.

use std::fs;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use sympidx::floer::{levels_csv, scheme_report};
use sympidx::flow::flow;
use sympidx::io::fmt_f64;
use sympidx::magnetic::{arc_length, length_bound, MagneticSystem};
use sympidx::orbit::{
    find_magnetic_orbit, growth_fit, growth_samples, monodromy, orbit_delta, period_bound_sweep, period_spread,
    sweep_csv, OrbitRecord,
};
use sympidx::path::{conley_zehnder, delta_tilde, linear_flow, sturm_compare, QuadHamiltonian, SympPath};
use sympidx::symp::eigenvalues;
use sympidx::{random, Error};

use crate::config::{
    validate, ExperimentConfig, FloerParams, GrowthParams, IndexParams, MagneticParams, Params, SturmParams,
    SweepParams,
};
use crate::output::{gnuplot, Outputs};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Numerical(#[from] Error),
    #[error("{failed} of {total} sweep rows failed, first with {first}")]
    Rows { failed: usize, total: usize, first: String },
}

impl RunError {
    pub fn name(&self) -> String {
        match self {
            RunError::Numerical(e) => e.name().to_string(),
            RunError::Rows { first, .. } => first.clone(),
        }
    }

    pub fn module(&self) -> &'static str {
        match self {
            RunError::Numerical(e) => e.module(),
            RunError::Rows { .. } => "orbit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ValidationError,
    NumericalFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::ValidationError => 2,
            Status::NumericalFailure => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub name: String,
    pub module: String,
    pub message: String,
}

/// What a run did: status, summary lines for the terminal and the files it
/// wrote.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub lines: Vec<String>,
    pub violations: Vec<String>,
    pub error: Option<ErrorInfo>,
    pub artifacts: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }
}

/// Validates and runs `config`, writing artifacts and `manifest.json` to its
/// output directory.
pub fn run(config: &ExperimentConfig) -> Outcome {
    let start = Instant::now();
    let violations = validate(config);
    let mut out = Outputs::new(&config.output_dir);
    let mut lines = Vec::new();
    let (status, error) = if !violations.is_empty() {
        (Status::ValidationError, None)
    } else {
        let params = config.params().expect("validated");
        let result = fs::create_dir_all(&config.output_dir)
            .map_err(|e| RunError::Numerical(e.into()))
            .and_then(|_| execute(&params, config.seed, &mut out, &mut lines));
        match result {
            Ok(()) => (Status::Ok, None),
            Err(e) => (
                Status::NumericalFailure,
                Some(ErrorInfo { name: e.name(), module: e.module().to_string(), message: e.to_string() }),
            ),
        }
    };
    let manifest = json!({
        "config": config,
        "versions": { "sympidx": sympidx::VERSION, "sympidx-cli": env!("CARGO_PKG_VERSION") },
        "threads": rayon::current_num_threads(),
        "wall_time_s": start.elapsed().as_secs_f64(),
        "status": status,
        "violations": violations,
        "error": error,
        "artifacts": out.files(),
    });
    // a validation failure may leave no usable directory; the manifest is best effort there
    let written = fs::create_dir_all(out.dir()).is_ok()
        && sympidx::io::atomic_write(
            &out.path("manifest.json"),
            format!("{}\n", serde_json::to_string_pretty(&manifest).expect("plain values")).as_bytes(),
        )
        .is_ok();
    if !written && status != Status::ValidationError {
        lines.push(format!("warning: could not write manifest to {}", out.dir().display()));
    }
    Outcome { status, lines, violations, error, artifacts: out.files().to_vec() }
}

fn execute(params: &Params, seed: u64, out: &mut Outputs, lines: &mut Vec<String>) -> Result<(), RunError> {
    match params {
        Params::Index(p) => index(p, out, lines),
        Params::Sturm(p) => sturm(p, out, lines),
        Params::Magnetic(p) => magnetic(p, seed, out, lines),
        Params::Growth(p) => growth(p, seed, out, lines),
        Params::FloerLevels(p) => floer_levels(p, out, lines),
        Params::Sweep(p) => sweep(p, seed, out, lines),
    }
}

fn seeded_angle(seed: u64) -> f64 {
    random::rng(seed).random_range(0.0..std::f64::consts::TAU)
}

fn system(src: &crate::config::SystemSource) -> Result<MagneticSystem, RunError> {
    let cfg = src.load().map_err(Error::InvalidParams)?;
    Ok(cfg.build()?)
}

fn winding_rows(path: &SympPath, trace: &[f64]) -> Vec<Vec<String>> {
    let base = trace[0];
    path.times()
        .iter()
        .zip(trace)
        .map(|(t, th)| vec![fmt_f64(*t), fmt_f64(*th), fmt_f64((th - base) / std::f64::consts::PI)])
        .collect()
}

fn index(p: &IndexParams, out: &mut Outputs, lines: &mut Vec<String>) -> Result<(), RunError> {
    let text = fs::read_to_string(&p.path).map_err(Error::from)?;
    let path = SympPath::from_json(&text)?;
    let report = delta_tilde(&path)?;
    out.csv("winding.csv", &["t", "theta", "delta"], &winding_rows(&path, &report.winding_trace))?;
    out.text(
        "winding.gp",
        &gnuplot("winding.csv", "winding of the polar circle map", "t", "delta", &[(1, 3)], "lines"),
    )?;
    lines.push(format!("delta_tilde = {}", fmt_f64(report.delta)));
    let mu = conley_zehnder(&path);
    match &mu {
        Ok(m) => lines.push(format!("mu_cz = {m}")),
        Err(e) => lines.push(format!("mu_cz unavailable: {e}")),
    }
    out.json(
        "index.json",
        &json!({
            "delta_tilde": report.delta,
            "mu_cz": mu.as_ref().ok(),
            "dim": path.dim(),
            "frames": path.len(),
        }),
    )?;
    mu?;
    Ok(())
}

fn sturm(p: &SturmParams, out: &mut Outputs, lines: &mut Vec<String>) -> Result<(), RunError> {
    let (s0, s1) = p.matrices().map_err(|v| Error::InvalidParams(v.join("; ")))?;
    let dim = s0.nrows();
    let h0 = QuadHamiltonian::constant(s0)?;
    let h1 = QuadHamiltonian::constant(s1)?;
    let rep = sturm_compare(&h0, &h1, p.t, p.steps)?;
    let mut rows = Vec::new();
    for (label, h) in [("H0", &h0), ("H1", &h1)] {
        let path = linear_flow(h, 0.0, p.t, p.steps)?;
        let trace = delta_tilde(&path)?.winding_trace;
        for mut row in winding_rows(&path, &trace) {
            row.insert(0, label.to_string());
            rows.push(row);
        }
    }
    out.csv("sturm_winding.csv", &["hamiltonian", "t", "theta", "delta"], &rows)?;
    out.csv(
        "sturm.csv",
        &["delta0", "delta1", "margin", "min_gap", "dim"],
        &[vec![fmt_f64(rep.delta0), fmt_f64(rep.delta1), fmt_f64(rep.margin), fmt_f64(rep.min_gap), dim.to_string()]],
    )?;
    let holds = rep.margin >= -(dim as f64);
    out.json(
        "sturm.json",
        &json!({
            "delta0": rep.delta0, "delta1": rep.delta1, "margin": rep.margin,
            "min_gap": rep.min_gap, "lower_bound": -(dim as f64), "holds": holds,
        }),
    )?;
    lines.push(format!("delta0 = {}", fmt_f64(rep.delta0)));
    lines.push(format!("delta1 = {}", fmt_f64(rep.delta1)));
    lines.push(format!("margin = {} (bound -{dim}, {})", fmt_f64(rep.margin), if holds { "holds" } else { "violated" }));
    Ok(())
}

fn orbit_lines(orbit: &OrbitRecord, lines: &mut Vec<String>) {
    lines.push(format!("T = {}", fmt_f64(orbit.period)));
    lines.push(format!("residual = {}", fmt_f64(orbit.residual)));
    lines.push(format!("contractible = {}", orbit.contractible));
}

fn magnetic(p: &MagneticParams, seed: u64, out: &mut Outputs, lines: &mut Vec<String>) -> Result<(), RunError> {
    let sys = system(&p.system)?;
    let theta = p.theta.unwrap_or_else(|| seeded_angle(seed));
    let orbit = find_magnetic_orbit(&sys, p.r, theta, p.max_iter)?;
    let span = orbit.period * p.periods as f64;
    let traj = flow(&sys, &orbit.state(), span, orbit.steps * p.periods, MagneticSystem::CONVENTION)?;
    traj.write_csv(&sys, &out.path("trajectory.csv"))?;
    out.register("trajectory.csv");
    out.text(
        "trajectory.gp",
        &gnuplot("trajectory.csv", "magnetic orbit", "q1", "q2", &[(2, 3)], "lines")
            .replace("plot ", "set size ratio -1\nplot "),
    )?;
    let m = monodromy(&sys, &orbit, MagneticSystem::CONVENTION)?;
    let eig = eigenvalues(m.matrix())?;
    let eig_rows: Vec<Vec<String>> =
        eig.iter().map(|z| vec![fmt_f64(z.re), fmt_f64(z.im), fmt_f64(z.norm())]).collect();
    out.csv("monodromy.csv", &["re", "im", "modulus"], &eig_rows)?;
    let length = arc_length(&sys, &traj.states);
    let bound = length_bound(&sys, p.r, span);
    out.json(
        "orbit.json",
        &json!({
            "orbit": orbit, "theta": theta, "arc_length": length, "length_bound": bound,
            "energy_drift": traj.energy_drift,
        }),
    )?;
    orbit_lines(&orbit, lines);
    lines.push(format!("arc length = {} (bound {})", fmt_f64(length), fmt_f64(bound)));
    Ok(())
}

fn growth(p: &GrowthParams, seed: u64, out: &mut Outputs, lines: &mut Vec<String>) -> Result<(), RunError> {
    let sys = system(&p.system)?;
    let theta = p.theta.unwrap_or_else(|| seeded_angle(seed));
    let orbit = find_magnetic_orbit(&sys, p.r, theta, p.max_iter)?;
    let deltas = orbit_delta(&sys, &orbit, p.k, MagneticSystem::CONVENTION)?;
    let fit = growth_fit(&growth_samples(&orbit, &deltas))?;
    let rows: Vec<Vec<String>> = deltas
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let jt = (i + 1) as f64 * orbit.period;
            vec![(i + 1).to_string(), fmt_f64(jt), fmt_f64(*d), fmt_f64(d.abs()), fmt_f64(fit.a * jt - fit.c)]
        })
        .collect();
    out.csv("growth.csv", &["j", "jT", "delta", "abs_delta", "lower_bound"], &rows)?;
    out.text(
        "growth.gp",
        &gnuplot("growth.csv", "index growth along iterates", "jT", "|delta|", &[(2, 4), (2, 5)], "linespoints"),
    )?;
    out.json(
        "growth.json",
        &json!({ "orbit": orbit, "theta": theta, "fit": fit, "bound_holds": fit.bound_holds() }),
    )?;
    orbit_lines(&orbit, lines);
    lines.push(format!(
        "fit a = {} c = {} r^2 = {} bound holds = {}",
        fmt_f64(fit.a),
        fmt_f64(fit.c),
        fmt_f64(fit.r_squared),
        fit.bound_holds()
    ));
    Ok(())
}

fn floer_levels(p: &FloerParams, out: &mut Outputs, lines: &mut Vec<String>) -> Result<(), RunError> {
    let report = scheme_report(&p.geometry(), p.lambda0, p.h)?;
    let s = &report.scheme;
    let (header, rows) = levels_csv(s, p.l_max.unwrap_or(u64::MAX));
    out.csv("levels.csv", &header, &rows)?;
    out.text(
        "levels.gp",
        &gnuplot("levels.csv", "action of the one-periodic orbits", "l", "action", &[(3, 5)], "points"),
    )?;
    out.json("scheme.json", &report)?;
    lines.push(format!(
        "C = {} a = {} b = {} k = {} n0 = {}",
        fmt_f64(s.c),
        fmt_f64(s.a),
        fmt_f64(s.b),
        s.k,
        s.n0
    ));
    lines.push(format!("verdicts = {:?} all = {}", report.verdicts.verdicts(), report.verdicts.all()));
    lines.push(format!("homotopy margin = {}", fmt_f64(report.homotopy_margin)));
    Ok(())
}

fn sweep(p: &SweepParams, seed: u64, out: &mut Outputs, lines: &mut Vec<String>) -> Result<(), RunError> {
    let sys = system(&p.system)?;
    let rows = period_bound_sweep(&sys, &p.r, seed, p.k)?;
    let (header, body) = sweep_csv(&rows, p.k);
    out.csv("sweep.csv", &header, &body)?;
    out.text("sweep.gp", &gnuplot("sweep.csv", "period against energy", "r", "T", &[(1, 2)], "linespoints"))?;
    for row in &rows {
        lines.push(format!(
            "r = {} T = {} {}",
            fmt_f64(row.r),
            fmt_f64(row.period),
            row.error.as_deref().unwrap_or("ok")
        ));
    }
    if let Some(s) = period_spread(&rows) {
        lines.push(format!("period spread = {}", fmt_f64(s)));
    }
    let failed: Vec<_> = rows.iter().filter(|r| !r.ok()).collect();
    if let Some(first) = failed.first() {
        return Err(RunError::Rows {
            failed: failed.len(),
            total: rows.len(),
            first: first.error.clone().unwrap_or_else(|| "NoConvergence".into()),
        });
    }
    Ok(())
}

