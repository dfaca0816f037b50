//! Config-driven commands behind the `ibpg` binary.
//!
//! Each command returns a process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success, every gated diagnostic passed |
//! | 1 | a diagnostic failed |
//! | 2 | configuration or argument error |
//! | 3 | infeasible step-size / inertia parameters |
//! | 4 | non-finite value encountered |

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::diagnostics::{self, certification_pair, DiagnosticReport, FiniteLengthReport};
use crate::error::{Error, Result};
use crate::par::{map_slice, Execution};
use crate::problems::CompositeProblem;
use crate::solver::{write_trace_csv, ParameterSchedule, RunResult, Solver, TraceRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIAGNOSTIC: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InfeasibleParameters(_) => EXIT_INFEASIBLE,
        Error::Diverged { .. } => EXIT_DIVERGED,
        Error::TraceTooShort { .. } | Error::Inconclusive(_) => EXIT_DIAGNOSTIC,
        Error::DimensionMismatch { .. }
        | Error::Configuration(_)
        | Error::Unsupported(_)
        | Error::Io(_) => EXIT_CONFIG,
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(e)
}

struct Setup {
    cfg: ExperimentConfig,
    problem: CompositeProblem,
    out: PathBuf,
}

fn setup(config: &Path, ov: &Overrides) -> Result<Setup> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = ov.seed {
        cfg.instance.seed = seed;
    }
    let problem = cfg.build_problem()?;
    let out = ov.out.clone().unwrap_or_else(|| cfg.output_dir());
    fs::create_dir_all(&out)?;
    Ok(Setup { cfg, problem, out })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    write_trace_csv(records, BufWriter::new(File::create(path)?))
}

#[derive(Serialize)]
struct DiagnosticsFile<'a> {
    passed: bool,
    gated: &'a [DiagnosticReport],
    finite_length: Option<FiniteLengthReport>,
}

fn solve(s: &Setup, schedule: &ParameterSchedule) -> Result<RunResult> {
    let x0 = s.cfg.start_point(s.problem.dimension())?;
    Solver::new(&s.problem, schedule)?.run(x0, &s.cfg.stop_rule())
}

/// Runs one solve; writes `trace.csv`, `summary.json` and `diagnostics.json`.
pub fn cmd_run(config: &Path, ov: &Overrides) -> i32 {
    let s = match setup(config, ov) {
        Ok(s) => s,
        Err(e) => return report(&e),
    };
    match run_inner(&s) {
        Ok(code) => code,
        Err(Error::Diverged {
            iteration,
            what,
            trace,
        }) => {
            // Keep the finite prefix for inspection.
            let _ = write_trace(&s.out.join("trace.csv"), &trace);
            eprintln!("error: iteration diverged at k = {iteration}: {what} is not finite");
            EXIT_DIVERGED
        }
        Err(e) => report(&e),
    }
}

fn run_inner(s: &Setup) -> Result<i32> {
    let l = s.problem.smad_constant();
    let schedule = s.cfg.schedule(l, s.problem.kernel().sigma())?;
    let result = solve(s, &schedule)?;
    write_trace(&s.out.join("trace.csv"), &result.records)?;
    let summary = result.summary();
    write_json(&s.out.join("summary.json"), &summary)?;

    let gated = diagnostics::standard_checks(&result, &s.problem, &schedule)?;
    let finite_length = diagnostics::finite_length_report(&result.records).ok();
    let passed = gated.iter().all(|r| r.passed);
    write_json(
        &s.out.join("diagnostics.json"),
        &DiagnosticsFile {
            passed,
            gated: &gated,
            finite_length,
        },
    )?;

    println!(
        "{} iterations ({}), psi = {:.12e}, residual = {:.3e}, M = {:.6e}",
        summary.iterations,
        summary.termination_reason,
        summary.final_psi,
        summary.final_residual,
        summary.m
    );
    for r in gated.iter().filter(|r| !r.passed) {
        eprintln!(
            "diagnostic {} failed: worst slack {:e} at {:?} (tolerance {:e})",
            r.check_name, r.worst_slack, r.location, r.tolerance
        );
    }
    Ok(if passed { EXIT_OK } else { EXIT_DIAGNOSTIC })
}

#[derive(Serialize)]
struct SmadFile<'a> {
    #[serde(flatten)]
    report: &'a DiagnosticReport,
    declared_l: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_y: Option<Vec<f64>>,
}

/// Certifies the problem's smad constant by sampling; writes `smad_report.json`.
pub fn cmd_certify(config: &Path, ov: &Overrides) -> i32 {
    let s = match setup(config, ov) {
        Ok(s) => s,
        Err(e) => return report(&e),
    };
    match certify_inner(&s, ov) {
        Ok(code) => code,
        Err(e) => report(&e),
    }
}

fn certify_inner(s: &Setup, ov: &Overrides) -> Result<i32> {
    let c = &s.cfg.certify;
    let samples = ov.samples.unwrap_or(c.samples);
    let (f, h, l) = (
        s.problem.smooth(),
        s.problem.kernel(),
        s.problem.smad_constant(),
    );
    let rep = diagnostics::certify_smad(f, h, l, samples, c.radius, c.seed)?;
    let worst = (!rep.passed)
        .then_some(rep.location)
        .flatten()
        .map(|i| certification_pair(f.dimension(), c.radius, c.seed, i));
    if let Some((x, y)) = &worst {
        eprintln!(
            "smad certification failed for L = {l:e}: worst slack {:e} at sample {}",
            rep.worst_slack,
            rep.location.unwrap_or_default()
        );
        eprintln!("  x = {:?}", x.as_slice());
        eprintln!("  y = {:?}", y.as_slice());
    }
    let file = SmadFile {
        report: &rep,
        declared_l: l,
        worst_x: worst.as_ref().map(|(x, _)| x.as_slice().to_vec()),
        worst_y: worst.as_ref().map(|(_, y)| y.as_slice().to_vec()),
    };
    write_json(&s.out.join("smad_report.json"), &file)?;
    println!(
        "smad certification {}: L = {l:e}, empirical L = {:e}, worst slack = {:e}",
        if rep.passed { "passed" } else { "FAILED" },
        rep.extra.get("empirical_l").copied().unwrap_or(f64::NAN),
        rep.worst_slack
    );
    Ok(if rep.passed { EXIT_OK } else { EXIT_DIAGNOSTIC })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub iterations: Option<usize>,
    pub final_psi: Option<f64>,
    pub final_residual: Option<f64>,
    pub status: String,
}

/// Runs one trace per inertia value with shared instance and start; writes
/// `sweep.csv`, `sweep_table.txt` and `traces/beta_NN.csv` (rows sorted by β).
pub fn cmd_sweep(config: &Path, ov: &Overrides) -> i32 {
    let s = match setup(config, ov) {
        Ok(s) => s,
        Err(e) => return report(&e),
    };
    match sweep_inner(&s) {
        Ok(code) => code,
        Err(e) => report(&e),
    }
}

fn sweep_inner(s: &Setup) -> Result<i32> {
    let (l, sigma) = (s.problem.smad_constant(), s.problem.kernel().sigma());
    let mut betas = s.cfg.sweep_betas(l, sigma)?;
    if betas.iter().any(|b| !b.is_finite()) {
        return Err(Error::Configuration(
            "schedule: sweep values must be finite".into(),
        ));
    }
    betas.sort_by(f64::total_cmp);
    // Fail on a bad lambda rule up front rather than once per row.
    s.cfg.schedule_with_beta(l, sigma, Some(0.0))?;

    let outcomes = map_slice(Execution::default(), &betas, |&beta| {
        let schedule = s.cfg.schedule_with_beta(l, sigma, Some(beta))?;
        solve(s, &schedule)
    });

    let trace_dir = s.out.join("traces");
    fs::create_dir_all(&trace_dir)?;
    let mut rows = Vec::with_capacity(betas.len());
    let mut diverged = false;
    for (i, (beta, outcome)) in betas.iter().zip(outcomes).enumerate() {
        let path = trace_dir.join(format!("beta_{i:02}.csv"));
        let row = match outcome {
            Ok(res) => {
                write_trace(&path, &res.records)?;
                let sum = res.summary();
                SweepRow {
                    beta: *beta,
                    iterations: Some(sum.iterations),
                    final_psi: Some(sum.final_psi),
                    final_residual: Some(sum.final_residual),
                    status: sum.termination_reason.to_string(),
                }
            }
            Err(Error::InfeasibleParameters(msg)) => {
                eprintln!("beta = {beta:e}: infeasible: {msg}");
                empty_row(*beta, "infeasible")
            }
            Err(Error::Diverged {
                trace,
                iteration,
                what,
            }) => {
                write_trace(&path, &trace)?;
                eprintln!("beta = {beta:e}: diverged at k = {iteration} ({what})");
                diverged = true;
                empty_row(*beta, "diverged")
            }
            Err(e) => return Err(e),
        };
        rows.push(row);
    }

    let mut w = csv::Writer::from_path(s.out.join("sweep.csv"))
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    for r in &rows {
        w.serialize(r)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    w.flush()?;

    let table = sweep_table(&rows);
    fs::write(s.out.join("sweep_table.txt"), &table)?;
    print!("{table}");
    Ok(if diverged { EXIT_DIVERGED } else { EXIT_OK })
}

fn empty_row(beta: f64, status: &str) -> SweepRow {
    SweepRow {
        beta,
        iterations: None,
        final_psi: None,
        final_residual: None,
        status: status.into(),
    }
}

/// Fixed-width comparison table of sweep rows.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:>12}  {:>10}  {:>20}  {:>12}  {}\n",
        "beta", "iterations", "final_psi", "residual", "status"
    );
    for r in rows {
        let it = r.iterations.map_or("-".into(), |v| v.to_string());
        let psi = r.final_psi.map_or("-".into(), |v| format!("{v:.12e}"));
        let res = r.final_residual.map_or("-".into(), |v| format!("{v:.3e}"));
        s.push_str(&format!(
            "{:>12.6e}  {:>10}  {:>20}  {:>12}  {}\n",
            r.beta, it, psi, res, r.status
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Configuration("x".into())), EXIT_CONFIG);
        assert_eq!(
            exit_code(&Error::InfeasibleParameters("x".into())),
            EXIT_INFEASIBLE
        );
        let div = Error::Diverged {
            iteration: 1,
            what: "psi",
            trace: vec![],
        };
        assert_eq!(exit_code(&div), EXIT_DIVERGED);
    }

    #[test]
    fn table_marks_missing_values() {
        let rows = vec![empty_row(0.5, "infeasible")];
        let t = sweep_table(&rows);
        assert_eq!(t.lines().count(), 2);
        assert!(t.lines().nth(1).unwrap().ends_with("infeasible"));
    }
}
