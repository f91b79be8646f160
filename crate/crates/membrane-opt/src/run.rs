//! Subcommand orchestration: build the problem from a config, run it, emit
//! artifacts, and map failures onto exit codes.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver/optimizer/IO
//! failure, 4 theorem-check failure (sweeps and the oracle comparison).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use membrane_core::{
    alpha_stability, alpha_sweep_checks, alpha_sweep_point, brute_force_min, check_a1, check_a2,
    gamma_sweep_checks, gamma_sweep_point, maximize, minimize, minimize_shape, multistart,
    solve_state_with, validate_alpha_list, validate_gamma_list, AssumptionReport, Domain,
    OptimizationResult, ScalarField, SweepRecord,
};

use crate::config::{OutputFormat, RunConfig, StabilitySection};
use crate::io::{write_field_csv, write_field_pgm, write_mask_pgm, IoError};

/// Tolerances of the oracle comparison: energies must agree to this relative
/// gap, and any cells the two sets disagree on must tie at the cut.
const ORACLE_ENERGY_TOL: f64 = 1e-9;
const ORACLE_TIE_SLACK: f64 = 1e-9;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(membrane_core::Error),
    Io(IoError),
    CheckFailed(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Run(e) => write!(f, "run failed: {e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
            CliError::CheckFailed(msg) => write!(f, "theorem check failed: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<membrane_core::Error> for CliError {
    fn from(e: membrane_core::Error) -> Self {
        CliError::Run(e)
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) | CliError::Io(_) => 3,
            CliError::CheckFailed(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Solve,
    Check,
    Minimize,
    Maximize,
    Shape,
    SweepGamma,
    SweepAlpha,
    Oracle,
    Multistart,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Solve => "solve",
            Action::Check => "check",
            Action::Minimize => "minimize",
            Action::Maximize => "maximize",
            Action::Shape => "shape",
            Action::SweepGamma => "sweep-gamma",
            Action::SweepAlpha => "sweep-alpha",
            Action::Oracle => "oracle",
            Action::Multistart => "multistart",
        }
    }
}

struct Emitter {
    out_dir: PathBuf,
    csv: bool,
    pgm: bool,
    json: bool,
    manifest: BTreeMap<String, Value>,
    pgm_scales: BTreeMap<String, Value>,
    artifacts: Vec<String>,
}

impl Emitter {
    fn new(config: &RunConfig, out_dir: PathBuf) -> Self {
        Emitter {
            out_dir,
            csv: config.wants(OutputFormat::Csv),
            pgm: config.wants(OutputFormat::Pgm),
            json: config.wants(OutputFormat::Json),
            manifest: BTreeMap::new(),
            pgm_scales: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    fn set(&mut self, key: &str, value: Value) {
        self.manifest.insert(key.to_string(), value);
    }

    fn field(&mut self, name: &str, field: &ScalarField) -> Result<(), CliError> {
        if self.csv {
            let file = format!("{name}.csv");
            write_field_csv(&self.out_dir.join(&file), field)?;
            self.artifacts.push(file);
        }
        if self.pgm {
            let file = format!("{name}.pgm");
            let (lo, hi) = write_field_pgm(&self.out_dir.join(&file), field)?;
            self.pgm_scales
                .insert(file.clone(), json!({ "min": lo, "max": hi }));
            self.artifacts.push(file);
        }
        Ok(())
    }

    fn mask(&mut self, name: &str, domain: &Domain, cells: &[usize]) -> Result<(), CliError> {
        if self.pgm {
            let file = format!("{name}.pgm");
            write_mask_pgm(&self.out_dir.join(&file), domain, cells)?;
            self.artifacts.push(file);
        }
        Ok(())
    }

    fn text(&mut self, name: &str, contents: &str, when: bool) -> Result<(), CliError> {
        if when {
            std::fs::write(self.out_dir.join(name), contents)
                .map_err(|e| CliError::Io(IoError::Io(e)))?;
            self.artifacts.push(name.to_string());
        }
        Ok(())
    }

    fn finish(mut self) -> Result<(), CliError> {
        if !self.json {
            return Ok(());
        }
        self.manifest
            .insert("artifacts".into(), json!(self.artifacts));
        if !self.pgm_scales.is_empty() {
            self.manifest
                .insert("pgm_scales".into(), json!(self.pgm_scales));
        }
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(self.out_dir.join("manifest.json"), text + "\n")
            .map_err(|e| CliError::Io(IoError::Io(e)))?;
        Ok(())
    }
}

fn run_id(config: &RunConfig, action: Action, seed: Option<u64>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config).expect("config serializes"));
    hasher.update(action.name().as_bytes());
    hasher.update(seed.unwrap_or(u64::MAX).to_le_bytes());
    let digest = hasher.finalize();
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

fn report_value(report: &AssumptionReport) -> Value {
    json!({
        "holds": report.holds,
        "worst_violation": report.worst_violation,
        "violating_cells": report.violating_cells,
        "margin": report.margin,
        "checked_cells": report.checked_cells,
        "skipped_cells": report.skipped_cells,
        "tolerance": report.tolerance,
    })
}

fn record_value(record: &SweepRecord) -> Value {
    json!({
        "parameter": record.parameter,
        "psi": record.psi,
        "c_low": record.c_low,
        "c_high": record.c_high,
        "c_mid": record.c_mid,
        "gamma_effective": record.gamma_effective,
        "k": record.k,
        "set_cells": record.set_cells.len(),
    })
}

fn optimization_value(result: &OptimizationResult) -> Value {
    json!({
        "energy": result.energy(),
        "phi_history": result.phi_history,
        "comonotone_violations": result.comonotone_violations,
        "converged": result.converged,
        "snapped_back": result.snapped_back,
    })
}

fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from("parameter,k,gamma_effective,psi,c_low,c_high,c_mid,set_cells\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.parameter,
            r.k,
            r.gamma_effective,
            r.psi,
            r.c_low,
            r.c_high,
            r.c_mid,
            r.set_cells.len()
        ));
    }
    out
}

/// Warn (stderr + manifest) when the load misses the hypothesis that backs
/// the optimality characterization; the optimization itself still runs.
fn a1_advisory(
    f: &ScalarField,
    solver_tol: f64,
    emitter: &mut Emitter,
) -> Result<(), CliError> {
    let report = check_a1(f, solver_tol)?;
    if !report.holds {
        eprintln!(
            "warning: the load violates v_f <= f at {} cells (worst {:.3e}); \
             uniqueness/characterization guarantees lapse, proceeding anyway",
            report.violating_cells, report.worst_violation
        );
    }
    emitter.set("a1", report_value(&report));
    Ok(())
}

/// Cap for concurrent sweep points: MEMBRANE_OPT_THREADS, else the machine.
fn thread_cap(points: usize) -> usize {
    let configured = std::env::var("MEMBRANE_OPT_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1);
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    configured.unwrap_or(hw).min(points.max(1))
}

/// Evaluate one sweep point per parameter, possibly concurrently; results
/// come back in parameter order regardless of scheduling.
fn sweep_points<T: Send>(
    parameters: &[f64],
    point: impl Fn(f64) -> Result<T, membrane_core::Error> + Sync,
) -> Result<Vec<T>, CliError> {
    let n = parameters.len();
    let cap = thread_cap(n);
    if cap <= 1 || n <= 1 {
        return parameters
            .iter()
            .map(|&p| point(p).map_err(CliError::from))
            .collect();
    }
    let chunk = n.div_ceil(cap);
    let mut slots: Vec<Option<Result<T, membrane_core::Error>>> = Vec::new();
    slots.resize_with(n, || None);
    std::thread::scope(|scope| {
        for (slot_chunk, param_chunk) in slots.chunks_mut(chunk).zip(parameters.chunks(chunk)) {
            let point = &point;
            scope.spawn(move || {
                for (slot, &p) in slot_chunk.iter_mut().zip(param_chunk) {
                    *slot = Some(point(p));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every slot filled").map_err(CliError::from))
        .collect()
}

pub fn execute(
    action: Action,
    config_path: &Path,
    out_override: Option<PathBuf>,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out_dir = out_override.unwrap_or_else(|| config.output.dir.clone());
    std::fs::create_dir_all(&out_dir).map_err(|e| {
        CliError::Config(format!("cannot create output dir {}: {e}", out_dir.display()))
    })?;

    let domain = config.build_domain()?;
    let force = config.build_force(&domain, &base)?;
    let seed = seed_override.or(config.optimizer.seed);
    let opts = config.optimize_options(seed_override);

    let mut emitter = Emitter::new(&config, out_dir);
    emitter.set("run_id", json!(run_id(&config, action, seed)));
    emitter.set("subcommand", json!(action.name()));
    emitter.set(
        "config",
        serde_json::to_value(&config).expect("config serializes"),
    );
    emitter.set("seed", json!(seed));
    emitter.set(
        "domain",
        json!({
            "cells": domain.num_cells(),
            "spacing": domain.spacing(),
            "measure": domain.measure(),
            "grid": domain.grid_extent(),
        }),
    );

    let mut check_failure: Option<String> = None;

    match action {
        Action::Solve => {
            let g = config.build_plain_density(&domain, &base)?;
            let result = solve_state_with(&g, &force, config.solver.choice())?;
            println!(
                "energy = {} ({} iterations, residual {:.3e})",
                result.energy, result.iterations, result.residual_norm
            );
            emitter.set("energy", json!(result.energy));
            emitter.set("iterations", json!(result.iterations));
            emitter.set("residual_norm", json!(result.residual_norm));
            emitter.field("f", &force)?;
            emitter.field("g", &g)?;
            emitter.field("u", &result.u)?;
        }
        Action::Check => {
            let a1 = check_a1(&force, config.solver.tol)?;
            let a2 = check_a2(&force, false)?;
            println!(
                "A1 (v_f <= f): {} | A2 (f <= -lap f): {}",
                if a1.holds { "holds" } else { "fails" },
                if a2.holds { "holds" } else { "fails" },
            );
            emitter.set("a1", report_value(&a1));
            emitter.set("a2", report_value(&a2));
            emitter.field("f", &force)?;
        }
        Action::Minimize | Action::Maximize => {
            let gen = config.build_generator(&domain, &base)?;
            a1_advisory(&force, config.solver.tol, &mut emitter)?;
            let result = if action == Action::Minimize {
                minimize(&force, &gen, &opts)?
            } else {
                eprintln!(
                    "note: maximizers need not be unique; reporting the ascent's terminal arrangement"
                );
                maximize(&force, &gen, &opts)?
            };
            println!(
                "{}: energy = {} after {} accepted steps (violations {})",
                action.name(),
                result.energy(),
                result.phi_history.len() - 1,
                result.comonotone_violations
            );
            emitter.set("optimization", optimization_value(&result));
            emitter.field("f", &force)?;
            emitter.field("g_opt", &result.g_opt)?;
            emitter.field("u_opt", &result.u_opt)?;
        }
        Action::Shape => {
            let (alpha, beta, gamma) = config.two_material(&domain)?;
            a1_advisory(&force, config.solver.tol, &mut emitter)?;
            let shape = minimize_shape(&force, alpha, beta, gamma, &opts)?;
            println!(
                "psi = {} with |E| = {} cells (gamma_effective {}), c in [{}, {}]",
                shape.psi,
                shape.k,
                shape.gamma_effective,
                shape.threshold_low,
                shape.threshold_high
            );
            emitter.set("psi", json!(shape.psi));
            emitter.set(
                "c_bracket",
                json!({ "low": shape.threshold_low, "high": shape.threshold_high, "mid": shape.c }),
            );
            emitter.set("gamma_effective", json!(shape.gamma_effective));
            emitter.set("k", json!(shape.k));
            emitter.set("phi_history", json!(shape.phi_history));
            emitter.set("comonotone_violations", json!(shape.comonotone_violations));
            emitter.set("converged", json!(shape.converged));
            emitter.field("f", &force)?;
            emitter.field("g_opt", &shape.g)?;
            emitter.field("u_opt", &shape.u)?;
            emitter.mask("set_mask", &domain, &shape.set_cells)?;
        }
        Action::SweepGamma => {
            let sweep = config
                .sweep
                .as_ref()
                .ok_or_else(|| CliError::Config("sweep-gamma needs a sweep section".into()))?;
            let alpha = sweep
                .alpha
                .ok_or_else(|| CliError::Config("sweep.alpha is required".into()))?;
            let beta = sweep
                .beta
                .ok_or_else(|| CliError::Config("sweep.beta is required".into()))?;
            let gammas: Vec<f64> = match (&sweep.gammas, &sweep.gamma_fractions) {
                (Some(gs), None) => gs.clone(),
                (None, Some(fr)) => fr.iter().map(|f| f * domain.measure()).collect(),
                _ => {
                    return Err(CliError::Config(
                        "set exactly one of sweep.gammas / sweep.gamma_fractions".into(),
                    ))
                }
            };
            validate_gamma_list(&domain, &gammas)?;
            a1_advisory(&force, config.solver.tol, &mut emitter)?;
            let points =
                sweep_points(&gammas, |g| gamma_sweep_point(&force, alpha, beta, g, &opts))?;
            let (records, states): (Vec<_>, Vec<_>) = points.into_iter().unzip();
            let checks = gamma_sweep_checks(&domain, alpha, beta, &records, &states);
            for (i, record) in records.iter().enumerate() {
                emitter.mask(&format!("mask_{i:02}"), &domain, &record.set_cells)?;
            }
            emitter.text("sweep_gamma.csv", &sweep_csv(&records), emitter.csv)?;
            emitter.set("records", Value::Array(records.iter().map(record_value).collect()));
            emitter.set(
                "checks",
                json!({
                    "c_monotone": checks.c_monotone,
                    "nesting_ok": checks.nesting_ok,
                    "nesting_violation_cells": checks.nesting_violation_cells,
                    "cut_tie_cells": checks.cut_tie_cells,
                    "u_monotone": checks.u_monotone,
                    "psi_strictly_decreasing": checks.psi_strictly_decreasing,
                    "derivative_rel_errors": checks.derivative_rel_errors,
                }),
            );
            let named = [
                ("c monotone", checks.c_monotone),
                ("set nesting", checks.nesting_ok),
                ("u monotone", checks.u_monotone),
                ("psi strictly decreasing", checks.psi_strictly_decreasing),
            ];
            for (name, ok) in named {
                println!("check {name}: {}", if ok { "pass" } else { "FAIL" });
            }
            println!(
                "derivative relative errors: {:?}",
                checks.derivative_rel_errors
            );
            if let Some((name, _)) = named.iter().find(|(_, ok)| !ok) {
                check_failure = Some(format!("gamma sweep: {name}"));
            }
        }
        Action::SweepAlpha => {
            let sweep = config
                .sweep
                .as_ref()
                .ok_or_else(|| CliError::Config("sweep-alpha needs a sweep section".into()))?;
            let alphas = sweep
                .alphas
                .clone()
                .ok_or_else(|| CliError::Config("sweep.alphas is required".into()))?;
            let beta = sweep
                .beta
                .ok_or_else(|| CliError::Config("sweep.beta is required".into()))?;
            let gamma =
                crate::config::resolve_volume(sweep.gamma, sweep.gamma_fraction, &domain, "sweep")?;
            validate_alpha_list(&alphas, beta)?;
            a1_advisory(&force, config.solver.tol, &mut emitter)?;
            let points =
                sweep_points(&alphas, |a| alpha_sweep_point(&force, a, beta, gamma, &opts))?;
            let (records, states): (Vec<_>, Vec<_>) = points.into_iter().unzip();
            let checks = alpha_sweep_checks(&records, &states);
            emitter.text("sweep_alpha.csv", &sweep_csv(&records), emitter.csv)?;
            emitter.set("records", Value::Array(records.iter().map(record_value).collect()));
            let mut checks_json = serde_json::Map::new();
            checks_json.insert(
                "c_strictly_decreasing".into(),
                json!(checks.c_strictly_decreasing),
            );
            checks_json.insert("u_monotone".into(), json!(checks.u_monotone));
            let mut named = vec![
                ("c strictly decreasing", checks.c_strictly_decreasing),
                ("u monotone", checks.u_monotone),
            ];
            if let Some(StabilitySection { alpha, gaps }) = &sweep.stability {
                let stability = alpha_stability(&force, *alpha, gaps, beta, gamma, &opts)?;
                checks_json.insert(
                    "stability".into(),
                    json!({
                        "alpha": stability.alpha,
                        "gaps": stability.gaps,
                        "symdiff_areas": stability.symdiff_areas,
                        "symdiff_cells": stability.symdiff_cells,
                        "tie_cells": stability.tie_cells,
                        "essential_areas": stability.essential_areas,
                        "psi_diffs": stability.psi_diffs,
                        "symdiff_nonincreasing": stability.symdiff_nonincreasing,
                        "final_symdiff_cells": stability.final_symdiff_cells,
                    }),
                );
                named.push(("symdiff nonincreasing", stability.symdiff_nonincreasing));
            }
            emitter.set("checks", Value::Object(checks_json));
            for (name, ok) in &named {
                println!("check {name}: {}", if *ok { "pass" } else { "FAIL" });
            }
            if let Some((name, _)) = named.iter().find(|(_, ok)| !ok) {
                check_failure = Some(format!("alpha sweep: {name}"));
            }
        }
        Action::Oracle => {
            let (alpha, beta, gamma) = config.two_material(&domain)?;
            let k = config
                .oracle
                .as_ref()
                .and_then(|o| o.k)
                .unwrap_or_else(|| (gamma / domain.cell_measure()).round() as usize);
            let gamma_k = k as f64 * domain.cell_measure();
            let shape = minimize_shape(&force, alpha, beta, gamma_k, &opts)?;
            let oracle = brute_force_min(&force, alpha, beta, k)?;
            let rel_gap = (shape.psi - oracle.psi).abs() / oracle.psi.abs();
            // Set disagreements are tolerated only among cells tied with the
            // cut.
            let tie = ORACLE_TIE_SLACK * shape.u.max_value();
            let mismatched: Vec<usize> = shape
                .set_cells
                .iter()
                .filter(|c| !oracle.set_cells.contains(c))
                .chain(oracle.set_cells.iter().filter(|c| !shape.set_cells.contains(c)))
                .copied()
                .collect();
            let ties_only = mismatched.iter().all(|&c| {
                let u = shape.u.values()[c];
                u >= shape.threshold_low - tie && u <= shape.threshold_high + tie
            });
            let agree = rel_gap <= ORACLE_ENERGY_TOL && ties_only;
            println!(
                "solver psi = {}, oracle psi = {}, relative gap = {:.3e}, sets {}",
                shape.psi,
                oracle.psi,
                rel_gap,
                if agree { "agree" } else { "DISAGREE" }
            );
            emitter.set("solver_psi", json!(shape.psi));
            emitter.set("oracle_psi", json!(oracle.psi));
            emitter.set("relative_gap", json!(rel_gap));
            emitter.set("solver_set", json!(shape.set_cells));
            emitter.set("oracle_set", json!(oracle.set_cells));
            emitter.set("agree", json!(agree));
            emitter.mask("set_mask", &domain, &shape.set_cells)?;
            emitter.mask("oracle_mask", &domain, &oracle.set_cells)?;
            if !agree {
                check_failure = Some(format!(
                    "oracle disagreement: relative gap {rel_gap:.3e}, {} mismatched cells",
                    mismatched.len()
                ));
            }
        }
        Action::Multistart => {
            let runs = config
                .multistart
                .as_ref()
                .map(|m| m.runs)
                .ok_or_else(|| CliError::Config("multistart needs a multistart section".into()))?;
            let gen = config.build_generator(&domain, &base)?;
            a1_advisory(&force, config.solver.tol, &mut emitter)?;
            let report = multistart(&force, &gen, runs, &opts)?;
            println!(
                "phi spread = {:.3e} over {} runs (max L1 distance {:.3e})",
                report.phi_spread_rel, runs, report.max_l1_distance
            );
            emitter.set("phi_values", json!(report.phi_values));
            emitter.set("phi_spread_rel", json!(report.phi_spread_rel));
            emitter.set("max_l1_distance", json!(report.max_l1_distance));
            emitter.field("f", &force)?;
            emitter.field("g_opt", &report.results[0].g_opt)?;
        }
    }

    emitter.finish()?;
    match check_failure {
        Some(msg) => Err(CliError::CheckFailed(msg)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(
            CliError::Run(membrane_core::Error::InvalidForce).exit_code(),
            3
        );
        assert_eq!(CliError::CheckFailed("x".into()).exit_code(), 4);
    }
}
