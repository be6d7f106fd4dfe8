//! Grid-refinement sweeps: the same configuration at spacings
//! `h, h/2, h/4, ...`, with observed orders of every residual at the probe
//! times. The explicit time step scales like `h^2`, so probe differences do
//! too.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use mcmflow_core::diagnose::{self, combine_levels_floored, fourth_difference_floor, ResidualReport};
use mcmflow_core::error::Error as CoreError;
use mcmflow_core::geometry::ContactAngle;
use mcmflow_core::radial::RadialState;
use mcmflow_core::snapshot::{Snapshot, SnapshotData};
use mcmflow_core::trace::{ExitReason, ProbeTriple, RunTrace};

use crate::config::{Config, ProblemKind};
use crate::error::CliError;
use crate::runner::{execute, write_run};

/// Smallest acceptable order per group of checks.
pub const BOUNDARY_ORDER: f64 = 1.0;
pub const EVOLUTION_ORDER: f64 = 1.8;
pub const VELOCITY_ORDER: f64 = 0.9;

/// One checked residual at one probe.
#[derive(Debug, Clone)]
pub struct ProbeCheck {
    pub required: f64,
    /// Built from fourth differences, so judged against their roundoff.
    pub fourth_order: bool,
    pub report: ResidualReport,
}

impl ProbeCheck {
    fn new(required: f64, report: ResidualReport) -> Self {
        Self { required, fourth_order: false, report }
    }
}

#[derive(Debug, Clone)]
pub struct OrderRow {
    pub quantity: String,
    pub required: f64,
    pub residuals: Vec<f64>,
    pub order: Option<f64>,
    pub pass: bool,
}

/// `|V_n + H / beta0|` at the contact line, where `V_n` is the velocity of
/// the contact circle along the inner normal (radial probes only).
pub fn boundary_velocity(p: &ProbeTriple, angle: ContactAngle) -> Result<f64, CoreError> {
    let s0 = RadialState::from_snapshot(&p.snapshots[0])?;
    let s2 = RadialState::from_snapshot(&p.snapshots[2])?;
    let dr = (s2.contact_radius() - s0.contact_radius()) / (p.snapshots[2].t - p.snapshots[0].t);
    let frame = diagnose::boundary_frame(&p.snapshots[1])?.nodes[0];
    let sign = if s0.grid.is_lens() { -1.0 } else { 1.0 };
    Ok((sign * dr + frame.mean_curvature / angle.beta0).abs())
}

/// Largest coordinate or height value in a snapshot.
fn field_scale(snap: &Snapshot) -> f64 {
    let fields: Vec<&[f64]> = match &snap.data {
        SnapshotData::Radial { phi, u, .. } => vec![phi, u],
        SnapshotData::Planar { phi1, phi2, u, .. } => vec![phi1, phi2, u],
    };
    fields.iter().flat_map(|f| f.iter()).fold(0.0, |m, x| m.max(x.abs()))
}

/// Every residual checked at one probe, with its required order.
pub fn probe_reports(p: &ProbeTriple, angle: ContactAngle, lens: bool, origin: [f64; 2]) -> Result<Vec<ProbeCheck>, CoreError> {
    let mid = &p.snapshots[1];
    let radial = RadialState::from_snapshot(mid).is_ok();
    let mut out = Vec::new();
    for r in diagnose::check_boundary_identities(mid, angle)? {
        out.push(ProbeCheck::new(BOUNDARY_ORDER, r));
    }
    if radial {
        for r in diagnose::evolution_residuals(p)? {
            out.push(ProbeCheck { required: EVOLUTION_ORDER, fourth_order: true, report: r });
        }
        out.push(ProbeCheck::new(VELOCITY_ORDER, ResidualReport::unjudged("boundary_velocity", boundary_velocity(p, angle)?)));
    }
    if lens {
        let origin = if radial { [0.0, 0.0] } else { origin };
        let f = diagnose::support_function(mid, origin)?;
        out.push(ProbeCheck::new(BOUNDARY_ORDER, ResidualReport::unjudged("support_boundary_value", f.boundary_value_residual)));
        out.push(ProbeCheck::new(BOUNDARY_ORDER, ResidualReport::unjudged("support_boundary_normal", f.boundary_normal_residual)));
    }
    Ok(out)
}

/// Combine per-level probe checks (coarse to fine) into order rows.
/// `floors[level][probe]` is the fourth-difference roundoff level.
pub fn order_rows(levels: &[Vec<Vec<ProbeCheck>>], floors: &[Vec<f64>], probe_times: &[f64]) -> Vec<OrderRow> {
    let mut rows = Vec::new();
    for (i, tp) in probe_times.iter().enumerate() {
        let Some(first) = levels.first().and_then(|l| l.get(i)) else { continue };
        for (k, check) in first.iter().enumerate() {
            let column: Vec<Vec<ResidualReport>> = levels.iter().map(|l| vec![l[i][k].report.clone()]).collect();
            let fl: Vec<f64> = if check.fourth_order { floors.iter().map(|f| f[i]).collect() } else { vec![0.0; levels.len()] };
            let rep = combine_levels_floored(&column, check.required, &fl).remove(0);
            rows.push(OrderRow {
                quantity: format!("{}@t={tp}", rep.id),
                required: check.required,
                residuals: levels.iter().map(|l| l[i][k].report.max_residual).collect(),
                order: rep.order,
                pass: rep.pass,
            });
        }
    }
    rows
}

pub fn write_orders(path: &Path, rows: &[OrderRow], spacings: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["quantity".to_string(), "required_order".into(), "order".into(), "pass".into()];
    header.extend(spacings.iter().map(|h| format!("residual_h={h}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.quantity.clone(),
            r.required.to_string(),
            r.order.map(|o| o.to_string()).unwrap_or_default(),
            r.pass.to_string(),
        ];
        rec.extend(r.residuals.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Run `levels` refinements of `cfg` concurrently under `root/<name>/`,
/// each in `level_<i>`, and write `orders.csv` next to them.
pub fn converge_command(cfg: &Config, levels: usize, root: &Path) -> Result<(PathBuf, Vec<OrderRow>), CliError> {
    if levels < 2 {
        return Err(CliError::Config(format!("converge needs at least 2 levels, got {levels}")));
    }
    let mut base = cfg.clone();
    if base.control.probe_times.is_empty() {
        base.control.probe_times = vec![0.5 * base.control.t_end];
    }
    let last = base.control.probe_times.iter().copied().fold(0.0, f64::max);
    base.control.t_end = base.control.t_end.min(last);
    base.plot = false;
    let dir = root.join(&cfg.name);
    fs::create_dir_all(&dir)?;
    let configs: Vec<Config> = (0..levels).map(|i| base.refined(1 << i)).collect();
    let traces: Vec<Result<RunTrace, CliError>> = configs
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let trace = execute(c)?;
            write_run(&dir.join(format!("level_{i}")), c, &trace)?;
            Ok(trace)
        })
        .collect();
    let angle = ContactAngle::new(cfg.beta).map_err(|e| CliError::Config(e.to_string()))?;
    let lens = cfg.kind != ProblemKind::Catenoid;
    let mut per_level = Vec::new();
    let mut floors = Vec::new();
    for (i, t) in traces.into_iter().enumerate() {
        let t = t?;
        if let ExitReason::Failed { error } = &t.exit {
            return Err(CliError::Solver(format!("level {i}: {error}")));
        }
        if t.probes.len() != base.control.probe_times.len() {
            return Err(CliError::Solver(format!("level {i} stopped before every probe time was reached")));
        }
        let reps = t
            .probes
            .iter()
            .map(|p| probe_reports(p, angle, lens, cfg.origin))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Solver(format!("level {i}: {e}")))?;
        floors.push(t.probes.iter().map(|p| fourth_difference_floor(field_scale(&p.snapshots[1]), configs[i].spacing())).collect());
        per_level.push(reps);
    }
    let rows = order_rows(&per_level, &floors, &base.control.probe_times);
    let spacings: Vec<f64> = configs.iter().map(Config::spacing).collect();
    write_orders(&dir.join("orders.csv"), &rows, &spacings)?;
    Ok((dir, rows))
}

pub fn summary(rows: &[OrderRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let order = r.order.map(|o| format!("{o:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:<40} order {:>7} (need {}) {}",
            r.quantity,
            order,
            r.required,
            if r.pass { "ok" } else { "FAIL" }
        );
    }
    s
}
