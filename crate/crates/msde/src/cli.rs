//! The `msde` command line.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use msde_core::ldp::{estimate_event, fit_eps, laplace_estimates, ldp_slope, FitModel, McSetup};
use msde_core::monotone_ops::verify_operator_properties;
use msde_core::sim::{check_solution_properties, simulate, simulate_controlled, PropertyOptions};
use msde_core::skeleton::{evaluate_laplace_candidate, minimize_endpoint_rate, solve_skeleton};
use msde_core::{BrownianPath, Control, SolutionPath};
use serde_json::{json, Value};

use crate::config::{FitChoice, TiltChoice};
use crate::output::{estimate_json, num, rate_json, slope_json, ArtifactDir};
use crate::suite::{run_suite, CRITERIA};
use crate::{ExperimentConfig, HarnessError, RayonExecutor};

#[derive(Debug, Parser)]
#[command(name = "msde", version, about = "Multivalued SDE simulation, skeleton rates and LDP checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resolvent, projection and monotonicity checks on the configured operator.
    CheckOps(Common),
    /// Simulates paths and checks the solution properties of each.
    Simulate(Common),
    /// Solves the controlled skeleton for the configured control.
    Skeleton(Common),
    /// Minimizes the action over controls reaching `target` at time T.
    Rate(Common),
    /// Monte Carlo event probabilities and the eps -> 0 fit.
    VerifyLdp(Common),
    /// Laplace functionals and the variational candidate.
    Laplace(Common),
    /// The acceptance criteria.
    Suite(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON experiment config (optional for `suite`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Replaces the config seed.
    #[arg(long)]
    pub seed_override: Option<u64>,
}

/// What a run printed and whether its checks held.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub lines: Vec<String>,
    pub passed: bool,
    pub out_dir: PathBuf,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckOps(_) => "check-ops",
            Command::Simulate(_) => "simulate",
            Command::Skeleton(_) => "skeleton",
            Command::Rate(_) => "rate",
            Command::VerifyLdp(_) => "verify-ldp",
            Command::Laplace(_) => "laplace",
            Command::Suite(_) => "suite",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::CheckOps(c)
            | Command::Simulate(c)
            | Command::Skeleton(c)
            | Command::Rate(c)
            | Command::VerifyLdp(c)
            | Command::Laplace(c)
            | Command::Suite(c) => c,
        }
    }
}

struct Run {
    cfg: ExperimentConfig,
    bytes: Vec<u8>,
    out: ArtifactDir,
    exec: RayonExecutor,
    lines: Vec<String>,
}

/// Runs one subcommand. Artifacts and `manifest.json` are written even when
/// checks fail; errors mean no usable result.
pub fn run(cli: &Cli) -> Result<RunOutcome, HarnessError> {
    let common = cli.command.common();
    let exec = RayonExecutor::new(common.workers)?;
    let (cfg, bytes) = match (&common.config, &cli.command) {
        (Some(path), _) => {
            let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
            let text = std::str::from_utf8(&bytes).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            (Some(ExperimentConfig::from_json(text)?), bytes)
        }
        (None, Command::Suite(_)) => (None, Vec::new()),
        (None, _) => return Err(HarnessError::Config("--config is required".into())),
    };
    if let Command::Suite(_) = cli.command {
        let mut seed = cfg.as_ref().map_or(0, |c| c.seed);
        if let Some(s) = common.seed_override {
            seed = s;
        }
        let dir = out_dir(common, cfg.as_ref());
        let ids = cfg.as_ref().and_then(|c| c.options.criteria.clone());
        return suite(ArtifactDir::create(&dir)?, &bytes, seed, ids, &exec);
    }
    let mut cfg = cfg.expect("config present");
    if let Some(s) = common.seed_override {
        cfg.seed = s;
    }
    let out = ArtifactDir::create(out_dir(common, Some(&cfg)))?;
    let mut r = Run { cfg, bytes, out, exec, lines: Vec::new() };
    let passed = match cli.command {
        Command::CheckOps(_) => check_ops(&mut r)?,
        Command::Simulate(_) => simulate_paths(&mut r)?,
        Command::Skeleton(_) => skeleton(&mut r)?,
        Command::Rate(_) => rate(&mut r)?,
        Command::VerifyLdp(_) => verify_ldp(&mut r)?,
        Command::Laplace(_) => laplace(&mut r)?,
        Command::Suite(_) => unreachable!(),
    };
    r.out.write_manifest(cli.command.name(), &r.bytes, r.cfg.seed)?;
    Ok(RunOutcome { lines: r.lines, passed, out_dir: r.out.root().to_path_buf() })
}

fn out_dir(common: &Common, cfg: Option<&ExperimentConfig>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn check_ops(r: &mut Run) -> Result<bool, HarnessError> {
    let op = r.cfg.build_operator()?;
    let samples = r.cfg.options.samples.unwrap_or(10_000);
    let rep = verify_operator_properties(&op, samples, r.cfg.seed);
    let v = |v: Option<msde_core::monotone_ops::Violations>| {
        v.map(|v| json!({"checked": v.checked, "count": v.count, "worst": num(v.worst)}))
    };
    r.out.write_json(
        "check_ops.json",
        &json!({
            "operator": op.name(),
            "samples": samples,
            "idempotence": v(rep.idempotence),
            "nonexpansive": v(rep.nonexpansive),
            "variational": v(rep.variational),
            "firm_nonexpansive": v(Some(rep.firm_nonexpansive)),
            "monotone": {"comparisons": rep.monotone.comparisons, "min_inner": num(rep.monotone.min_inner), "passed": rep.monotone.passed},
            "resolvent_errors": rep.resolvent_errors,
            "passed": rep.passed,
        }),
    )?;
    r.lines.push(format!("check-ops {}: {samples} samples, passed = {}", op.name(), rep.passed));
    Ok(rep.passed)
}

fn simulate_paths(r: &mut Run) -> Result<bool, HarnessError> {
    let model = r.cfg.build_model()?;
    let op = r.cfg.build_operator()?;
    let grid = r.cfg.build_grid()?;
    let x0 = r.cfg.x0(&op);
    let eps = r.cfg.eps()?;
    let n = r.cfg.n_paths.unwrap_or(1);
    let write = r.cfg.options.write_paths.unwrap_or(n.min(10));
    let control = match &r.cfg.control {
        Some(c) => Some(r.cfg.build_control(Some(c), "control")?),
        None => None,
    };
    let probe_count = r.cfg.options.probe_count.unwrap_or(PropertyOptions::default().probe_count);
    let mut prev: Option<SolutionPath> = None;
    let mut reports = Vec::with_capacity(n);
    let mut passed = true;
    for i in 0..n {
        let noise = BrownianPath::generate(grid, model.noise_dim(), r.cfg.seed, i as u64);
        let path = match &control {
            Some(h) => simulate_controlled(&model, &op, &x0, eps, h, &noise)?,
            None => simulate(&model, &op, &x0, eps, &noise)?,
        };
        let opts = PropertyOptions { probe_count, rng_seed: r.cfg.seed.wrapping_add(i as u64), ..PropertyOptions::default() };
        let rep = check_solution_properties(&path, &op, prev.as_ref(), &opts)?;
        passed &= rep.passed;
        reports.push(json!({
            "path": i,
            "endpoint": path.endpoint(),
            "total_variation": path.final_total_variation(),
            "probe_slack": num(rep.probe_slack),
            "probe_tol": num(rep.probe_tol),
            "pair_slack": rep.pair_slack.map(num),
            "pair_tol": rep.pair_tol.map(num),
            "cepa_slack": num(rep.cepa_slack),
            "cepa_tol": num(rep.cepa_tol),
            "passed": rep.passed,
        }));
        if i < write {
            r.out.write_path_csv(&format!("path_{i:04}.csv"), &path)?;
        }
        prev = Some(path);
    }
    r.out.write_json(
        "properties.json",
        &json!({"model": model.name(), "operator": op.name(), "epsilon": eps, "n_paths": n, "passed": passed, "paths": reports}),
    )?;
    r.lines.push(format!("simulate: {n} paths at eps = {eps}, properties passed = {passed}"));
    Ok(passed)
}

fn skeleton(r: &mut Run) -> Result<bool, HarnessError> {
    let model = r.cfg.build_model()?;
    let op = r.cfg.build_operator()?;
    let grid = r.cfg.build_grid()?;
    let x0 = r.cfg.x0(&op);
    let h = match &r.cfg.control {
        Some(c) => r.cfg.build_control(Some(c), "control")?,
        None => Control::zeros(grid.horizon(), r.cfg.grid.intervals, model.noise_dim())?,
    };
    let path = solve_skeleton(&model, &op, &x0, &h, grid)?;
    r.out.write_path_csv("skeleton.csv", &path)?;
    r.out.write_json(
        "skeleton.json",
        &json!({
            "action_norm": h.action_norm(),
            "endpoint": path.endpoint(),
            "total_variation": path.final_total_variation(),
            "control": {"values": h.values(), "intervals": h.intervals(), "dim": h.dim()},
        }),
    )?;
    r.lines.push(format!("skeleton: action norm {:.6}, endpoint {:?}", h.action_norm(), path.endpoint()));
    Ok(true)
}

fn rate(r: &mut Run) -> Result<bool, HarnessError> {
    let model = r.cfg.build_model()?;
    let op = r.cfg.build_operator()?;
    let x0 = r.cfg.x0(&op);
    let target = r.cfg.target()?;
    let res = minimize_endpoint_rate(&model, &op, &x0, &target, r.cfg.grid.horizon, &r.cfg.rate_options())?;
    r.out.write_json("rate.json", &rate_json(&res))?;
    r.out.write_path_csv("rate_path.csv", &res.path)?;
    r.lines.push(format!(
        "rate: I = {:.6} (residual {:.2e}, {} iterations, converged = {})",
        res.value, res.residual, res.iterations, res.converged
    ));
    Ok(res.converged)
}

fn fit_model(c: FitChoice) -> FitModel {
    match c {
        FitChoice::Affine => FitModel::Affine,
        FitChoice::AffineLogCorrected => FitModel::AffineLogCorrected,
    }
}

fn verify_ldp(r: &mut Run) -> Result<bool, HarnessError> {
    let model = r.cfg.build_model()?;
    let op = r.cfg.build_operator()?;
    let grid = r.cfg.build_grid()?;
    let x0 = r.cfg.x0(&op);
    let event = r.cfg.build_event(&model, &op)?;
    let eps = r.cfg.eps_list()?;
    let target = event.reference_target(&x0);
    let reference = minimize_endpoint_rate(&model, &op, &x0, &target, grid.horizon(), &r.cfg.rate_options())?;
    let tilt = match r.cfg.options.tilt {
        TiltChoice::Optimal => Some(reference.control.clone()),
        TiltChoice::None => None,
        TiltChoice::Control => Some(r.cfg.build_control(r.cfg.control.as_ref(), "control")?),
    };
    let setup = McSetup { model: &model, op: &op, x0: &x0, grid, n_paths: r.cfg.n_paths()?, seed: r.cfg.seed };
    let estimates = estimate_event(&setup, &eps, &event, tilt.as_ref(), &r.exec)?;
    r.out.write_estimates_csv("estimates.csv", &estimates)?;
    let fit = ldp_slope(&estimates, fit_model(r.cfg.options.fit));
    let (fit_json, passed) = match &fit {
        Ok(f) => (slope_json(f), true),
        Err(e) => (json!({"error": e.to_string()}), false),
    };
    r.out.write_json(
        "report.json",
        &json!({
            "event": event.id,
            "tilted": tilt.is_some(),
            "reference_target": target,
            "reference_rate": rate_json(&reference),
            "estimates": estimates.iter().map(estimate_json).collect::<Vec<_>>(),
            "fit": fit_json,
        }),
    )?;
    for e in &estimates {
        r.lines.push(format!(
            "eps = {}: p = {:.4e} +- {:.1e}, -eps log p = {:.4}{}",
            e.epsilon,
            e.p_hat,
            e.stderr,
            e.neg_eps_log_p,
            if e.degenerate { " (degenerate)" } else { "" }
        ));
    }
    match fit {
        Ok(f) => r.lines.push(format!("intercept {:.4} vs reference rate {:.4}", f.intercept, reference.value)),
        Err(e) => r.lines.push(format!("fit failed: {e}")),
    }
    Ok(passed)
}

fn laplace(r: &mut Run) -> Result<bool, HarnessError> {
    let model = r.cfg.build_model()?;
    let op = r.cfg.build_operator()?;
    let grid = r.cfg.build_grid()?;
    let x0 = r.cfg.x0(&op);
    let g = r.cfg.build_functional()?;
    let eps = r.cfg.eps_list()?;
    let cand = evaluate_laplace_candidate(&model, &op, &x0, &g, grid.horizon(), &r.cfg.rate_options())?;
    let setup = McSetup { model: &model, op: &op, x0: &x0, grid, n_paths: r.cfg.n_paths()?, seed: r.cfg.seed };
    let est = laplace_estimates(&setup, &eps, &g, &r.exec)?;
    r.out.write_laplace_csv("laplace.csv", &est)?;
    let values: Vec<f64> = est.iter().map(|e| e.value).collect();
    let fit = if eps.len() >= 2 { fit_eps(&eps, &values, fit_model(r.cfg.options.fit)).ok() } else { None };
    let reference = -cand.value;
    r.out.write_json(
        "report.json",
        &json!({
            "candidate": {
                "value": num(cand.value),
                "functional": num(cand.functional_value),
                "action": num(cand.action),
                "iterations": cand.iterations,
                "converged": cand.converged,
                "control": cand.control.values(),
            },
            "reference": num(reference),
            "estimates": est.iter().map(|e| json!({"epsilon": e.epsilon, "value": num(e.value), "n_paths": e.n_paths})).collect::<Vec<_>>(),
            "fit": fit.as_ref().map(slope_json).unwrap_or(Value::Null),
        }),
    )?;
    for e in &est {
        r.lines.push(format!("eps = {}: eps log E exp(-g/eps) = {:.4}", e.epsilon, e.value));
    }
    if let Some(f) = &fit {
        r.lines.push(format!("intercept {:.4} vs -(g + I) = {reference:.4}", f.intercept));
    }
    Ok(cand.converged)
}

fn suite(
    mut out: ArtifactDir,
    bytes: &[u8],
    seed: u64,
    ids: Option<Vec<u32>>,
    exec: &RayonExecutor,
) -> Result<RunOutcome, HarnessError> {
    let ids = ids.unwrap_or_else(|| CRITERIA.iter().map(|c| c.0).collect());
    let outcomes = run_suite(&ids, seed, exec)?;
    let passed = outcomes.iter().all(|o| o.passed);
    let lines: Vec<String> = outcomes.iter().map(|o| o.line()).collect();
    out.write_json(
        "summary.json",
        &json!({"seed": seed, "passed": passed, "criteria": outcomes.iter().map(|o| o.to_json()).collect::<Vec<_>>()}),
    )?;
    out.write_manifest("suite", bytes, seed)?;
    Ok(RunOutcome { lines, passed, out_dir: out.root().to_path_buf() })
}
