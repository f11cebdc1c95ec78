//! Solve orchestration: manifest in, checkpoints and diagnostics out.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::diagnostics::{run_suite, DiagnosticsReport, SuiteInput};
use crate::error::{KmfgError, Result};
use crate::fp::gaussian_initial;
use crate::mfg::{epsilon_continuation, solve_mfg, MfgProblem, MfgSolution, MfgStatus};

use super::checkpoint::{write_field_csv, Checkpoint};
use super::manifest::{echo_manifest, RunManifest};

/// Levels used by the De Giorgi sequence in reports.
pub const DE_GIORGI_COUNT: usize = 6;

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub tag: String,
    pub epsilon: f64,
    pub status: MfgStatus,
    pub iterations: usize,
    pub final_residual: f64,
    pub hard_checks_ok: bool,
    pub failed_checks: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub reason: Option<String>,
    pub output_dir: PathBuf,
    pub levels: Vec<LevelSummary>,
}

fn write_residuals(path: &Path, history: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "iteration,residual")?;
    for (i, r) in history.iter().enumerate() {
        writeln!(w, "{},{r:.17e}", i + 1)?;
    }
    w.flush()?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| KmfgError::Format(e.to_string()))
}

/// Builds the coupled problem described by a manifest.
pub fn build_problem(m: &RunManifest) -> Result<MfgProblem> {
    let grid = m.phase_grid()?;
    let m0 = gaussian_initial(&grid, &m.initial.law())?;
    let mut prob = MfgProblem::new(m.hamiltonian.to_spec()?, m.coupling.to_spec(), m0);
    prob.hjb_operator = m.operator.hjb();
    prob.fp_operator = m.operator.fp();
    prob.hjb_scheme = m.operator.hjb_scheme;
    Ok(prob)
}

/// Solves, writes every artifact under the output directory and decides the
/// exit code: 0 only when every level converged and every hard check held.
pub fn run_manifest(m: &RunManifest, out: Option<&Path>) -> Result<RunOutcome> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&m.output_dir));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("manifest.json"), echo_manifest(m))?;
    let prob = build_problem(m)?;

    let (solutions, continuation): (Vec<MfgSolution>, _) = if m.mfg.epsilon_schedule.is_empty() {
        (vec![solve_mfg(&m.mfg, &prob)?], None)
    } else {
        let c = epsilon_continuation(&m.mfg, &prob)?;
        (c.solutions, Some(c.report))
    };

    let mut levels = Vec::new();
    for (i, sol) in solutions.iter().enumerate() {
        let tag = if continuation.is_some() { format!("eps{i}") } else { "final".to_string() };
        Checkpoint::from_spacetime(&sol.m).write(&dir.join(format!("m_{tag}.kmfg")))?;
        Checkpoint::from_spacetime(&sol.u).write(&dir.join(format!("u_{tag}.kmfg")))?;
        write_field_csv(&dir.join(format!("m_{tag}_terminal.csv")), sol.m.last())?;
        write_field_csv(&dir.join(format!("u_{tag}_initial.csv")), sol.u.first())?;
        write_residuals(&dir.join(format!("residuals_{tag}.csv")), &sol.residual_history)?;
        let report = run_suite(&SuiteInput {
            m: &sol.m,
            u: Some(&sol.u),
            h: Some(&sol.hamiltonian),
            coupling: Some(&prob.coupling),
            truncation_levels: &m.mfg.truncation_levels,
            de_giorgi_count: DE_GIORGI_COUNT,
        })?;
        report.write(&dir.join(format!("diagnostics_{tag}")))?;
        levels.push(LevelSummary {
            tag,
            epsilon: sol.epsilon,
            status: sol.status,
            iterations: sol.residual_history.len(),
            final_residual: sol.final_residual(),
            hard_checks_ok: report.hard_ok(),
            failed_checks: report.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect(),
        });
    }

    let aborted = continuation.as_ref().and_then(|c| c.aborted.clone());
    let reason = if let Some(a) = &aborted {
        Some(format!("continuation_aborted: {a}"))
    } else if levels.iter().any(|l| !l.hard_checks_ok) {
        Some("invariant_violation".to_string())
    } else if levels.iter().any(|l| l.status != MfgStatus::Converged) {
        Some("not_converged".to_string())
    } else {
        None
    };
    let outcome = RunOutcome {
        exit_code: if reason.is_some() { 1 } else { 0 },
        reason,
        output_dir: dir.clone(),
        levels,
    };
    let summary = json!({
        "outcome": outcome,
        "continuation": continuation,
    });
    std::fs::write(dir.join("summary.json"), to_json(&summary)?)?;
    Ok(outcome)
}

/// Runs the density part of the suite on a stored time series.
pub fn diagnose_checkpoint(path: &Path, horizon: f64, out: Option<&Path>) -> Result<DiagnosticsReport> {
    let m = Checkpoint::read(path)?.to_spacetime(horizon)?;
    let report = run_suite(&SuiteInput {
        m: &m,
        u: None,
        h: None,
        coupling: None,
        truncation_levels: &[2.0, 4.0, 8.0],
        de_giorgi_count: DE_GIORGI_COUNT,
    })?;
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}
