//! Re-check a finished run from its files.
//!
//! Checks with a verdict are algebraic identities, recorded-versus-recomputed
//! comparisons and the run-level bounds. Finite-difference identities on a
//! single grid have no meaningful absolute threshold; they are written with
//! `judged = false` and are judged by `converge` instead.

use std::fs;
use std::path::Path;

use serde::Serialize;

use mcmflow_core::diagnose::{self, ResidualReport};
use mcmflow_core::error::Error as CoreError;
use mcmflow_core::geometry::ContactAngle;
use mcmflow_core::snapshot::SnapshotData;

use crate::config::ProblemKind;
use crate::error::CliError;
use crate::runner::load_run;

#[derive(Debug, Clone, Serialize)]
pub struct VerifyLine {
    /// Snapshot or probe file the check ran on; `run` for run-level checks.
    pub scope: String,
    #[serde(flatten)]
    pub report: ResidualReport,
    pub judged: bool,
}

impl VerifyLine {
    fn judged(scope: &str, report: ResidualReport) -> Self {
        Self { scope: scope.into(), report, judged: true }
    }

    fn info(scope: &str, report: ResidualReport) -> Self {
        Self { scope: scope.into(), report, judged: false }
    }

    pub fn failed(&self) -> bool {
        self.judged && !self.report.pass
    }
}

fn core(scope: &str) -> impl Fn(CoreError) -> CliError + '_ {
    move |e| CliError::Solver(format!("{scope}: {e}"))
}

/// Run every check on `dir`, write `verify.jsonl` and return the lines.
pub fn verify_dir(dir: &Path) -> Result<Vec<VerifyLine>, CliError> {
    let (tf, probes) = load_run(dir)?;
    let cfg = &tf.config;
    let trace = &tf.trace;
    let angle = ContactAngle::new(cfg.beta).map_err(|e| CliError::Config(e.to_string()))?;
    let lens = cfg.kind != ProblemKind::Catenoid;
    let mut lines = Vec::new();
    let scopes: Vec<String> = trace.snapshot_index.iter().map(|m| format!("snap_{:06}", m.step)).collect();

    // Recorded curvature extremes against the stored fields come first: they
    // catch damaged files before any derived check runs on them.
    for ((snap, meta), scope) in trace.snapshots.iter().zip(&trace.snapshot_index).zip(&scopes) {
        let rep = diagnose::trace_identity(snap, meta).unwrap_or_else(|_| ResidualReport::new("trace_identity", f64::INFINITY, 0.0));
        lines.push(VerifyLine::judged(scope, rep));
    }

    for rep in diagnose::bounds_monitor(trace, angle).map_err(core("run"))? {
        lines.push(VerifyLine::judged("run", rep));
    }
    match diagnose::extinction_bound(trace, angle) {
        Ok(ext) => {
            let mut rep = ResidualReport::new("extinction_time", ext.t_measured - ext.t_star, 0.0);
            rep.pass = ext.pass;
            lines.push(VerifyLine::judged("run", rep));
        }
        Err(CoreError::NotApplicable(_)) => {}
        Err(e) => return Err(core("run")(e)),
    }
    if lens && trace.records.len() > 1 {
        let cont = diagnose::continuation_monitor(trace);
        lines.push(VerifyLine::info("run", ResidualReport::unjudged("continuation_growth", cont.growth)));
    }

    let p0 = trace.snapshots.first().and_then(|s| diagnose::support_function(s, cfg.origin).ok()).map(|f| f.p_bound);
    for (snap, scope) in trace.snapshots.iter().zip(&scopes) {
        for mut rep in diagnose::conformal_frame_check(snap).map_err(core(scope))? {
            if rep.id == "concave_sign" && !lens {
                continue;
            }
            rep.id = rep.id.replace(' ', "_");
            lines.push(VerifyLine::judged(scope, rep));
        }
        if let Ok(reps) = diagnose::check_boundary_identities(snap, angle) {
            lines.extend(reps.into_iter().map(|r| VerifyLine::info(scope, r)));
        }
        if lens {
            let origin = match snap.data {
                SnapshotData::Radial { .. } => [0.0, 0.0],
                SnapshotData::Planar { .. } => cfg.origin,
            };
            match diagnose::support_function(snap, origin) {
                Ok(f) => {
                    lines.push(VerifyLine::judged(scope, ResidualReport::new("support_positive", 0.0, 0.0)));
                    if let Some(p0) = p0 {
                        let pmax = f.p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let excess = (pmax - p0).max(0.0);
                        lines.push(VerifyLine::judged(scope, ResidualReport::new("support_bound", excess, 1e-3 * p0)));
                    }
                    lines.push(VerifyLine::info(scope, ResidualReport::unjudged("support_boundary_value", f.boundary_value_residual)));
                    lines.push(VerifyLine::info(scope, ResidualReport::unjudged("support_boundary_normal", f.boundary_normal_residual)));
                }
                Err(CoreError::OriginOutside { p_min }) => {
                    lines.push(VerifyLine::judged(scope, ResidualReport::new("support_positive", -p_min, 0.0)));
                }
                Err(e) => return Err(core(scope)(e)),
            }
        }
    }

    let mut a0 = diagnose::curvature_bound(&trace.snapshots).map_err(core("run"))?;
    for p in &probes {
        a0 = a0.max(diagnose::curvature_bound(&p.snapshots).map_err(core("run"))?);
    }
    for (i, p) in probes.iter().enumerate() {
        let scope = format!("probe_{i:02}");
        match diagnose::evolution_residuals(p) {
            Ok(reps) => lines.extend(reps.into_iter().map(|r| VerifyLine::info(&scope, r))),
            Err(CoreError::Unsupported(_)) => continue,
            Err(e) => return Err(core(&scope)(e)),
        }
        lines.push(VerifyLine::info(&scope, diagnose::subsolution_constant(p, a0).map_err(core(&scope))?));
    }

    let mut text = String::new();
    for l in &lines {
        text.push_str(&serde_json::to_string(l)?);
        text.push('\n');
    }
    fs::write(dir.join("verify.jsonl"), text)?;
    Ok(lines)
}

/// `verify_dir` turned into an exit status: the first failed check is named.
pub fn verify_command(dir: &Path) -> Result<Vec<VerifyLine>, CliError> {
    let lines = verify_dir(dir)?;
    if let Some(bad) = lines.iter().find(|l| l.failed()) {
        return Err(CliError::CheckFailed(format!(
            "{} on {} (residual {:e})",
            bad.report.id, bad.scope, bad.report.max_residual
        )));
    }
    Ok(lines)
}
