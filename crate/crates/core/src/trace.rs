//! Run traces and the time-stepping driver shared by both solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snapshot::Snapshot;

/// One row of the per-step series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub radius: f64,
    pub sup_v: f64,
    #[serde(rename = "H_min")]
    pub h_min: f64,
    #[serde(rename = "H_max")]
    pub h_max: f64,
    pub h_eig_max: f64,
    pub angle_res: f64,
    pub orth_res: f64,
    pub p_min: f64,
    pub cont_fn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ExitReason {
    #[serde(rename = "t_end")]
    EndTime,
    Extinction,
    MaxSteps,
    #[serde(rename = "error")]
    Failed { error: String },
}

/// States at `t - dt`, `t`, `t + dt`, used for centered time differences.
/// Each gap spans `PROBE_STEPS` equal solver steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTriple {
    pub t: f64,
    pub dt: f64,
    pub snapshots: [Snapshot; 3],
}

/// Extremes over every accepted step, including steps not written as rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub t_final: f64,
    pub initial_radius: f64,
    pub final_radius: f64,
    pub extinction_time: Option<f64>,
    pub sup_v_initial: f64,
    pub sup_v_max: f64,
    pub h_eig_max: f64,
    pub mean_curvature_sup_initial: f64,
    pub mean_curvature_sup_max: f64,
    pub p_min_initial: f64,
    pub p_min_final: f64,
    pub p_min_over_run: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<StepRecord>,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
    /// `(step, t, H_min, H_max)` for every stored snapshot.
    pub snapshot_index: Vec<SnapshotMeta>,
    #[serde(skip)]
    pub probes: Vec<ProbeTriple>,
    pub summary: RunSummary,
    pub exit: ExitReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub step: usize,
    pub t: f64,
    #[serde(rename = "H_min")]
    pub h_min: f64,
    #[serde(rename = "H_max")]
    pub h_max: f64,
}

/// Run-control parameters common to both solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunControl {
    pub t_end: f64,
    pub cfl_sigma: f64,
    pub max_steps: usize,
    pub snapshot_every: usize,
    pub record_every: usize,
    /// Stop once the contact radius falls below this fraction of its initial
    /// value.
    pub extinction_radius: f64,
    pub probe_times: Vec<f64>,
    pub min_dt: f64,
}

impl Default for RunControl {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            cfl_sigma: 0.4,
            max_steps: 50_000_000,
            snapshot_every: 0,
            record_every: 1,
            extinction_radius: 1e-3,
            probe_times: Vec::new(),
            min_dt: 1e-14,
        }
    }
}

/// Interface the driver needs from a solver state.
pub(crate) trait Evolver {
    fn time(&self) -> f64;
    fn cfl_dt(&self, sigma: f64) -> Result<f64>;
    fn advance(&mut self, dt: f64) -> Result<()>;
    fn record(&self, dt: f64) -> Result<StepRecord>;
    fn snapshot(&self, step: usize) -> Snapshot;
    fn check_mesh(&self) -> Result<()>;
    /// Current contact radius.
    fn radius(&self) -> f64;
}

struct Monitor {
    records: Vec<StepRecord>,
    summary: RunSummary,
}

impl Monitor {
    fn new(first: StepRecord) -> Self {
        let summary = RunSummary {
            steps: 0,
            t_final: first.t,
            initial_radius: first.radius,
            final_radius: first.radius,
            extinction_time: None,
            sup_v_initial: first.sup_v,
            sup_v_max: first.sup_v,
            h_eig_max: first.h_eig_max,
            mean_curvature_sup_initial: first.h_max,
            mean_curvature_sup_max: first.h_max,
            p_min_initial: first.p_min,
            p_min_final: first.p_min,
            p_min_over_run: first.p_min,
        };
        Self { records: vec![first], summary }
    }

    fn observe(&mut self, rec: StepRecord, keep: bool) {
        let s = &mut self.summary;
        s.steps += 1;
        s.t_final = rec.t;
        s.final_radius = rec.radius;
        s.sup_v_max = s.sup_v_max.max(rec.sup_v);
        s.h_eig_max = s.h_eig_max.max(rec.h_eig_max);
        s.mean_curvature_sup_max = s.mean_curvature_sup_max.max(rec.h_max);
        s.p_min_final = rec.p_min;
        s.p_min_over_run = s.p_min_over_run.min(rec.p_min);
        if keep {
            self.records.push(rec);
        }
    }
}

/// Fewest solver steps between the states of a probe triple.
pub const PROBE_STEPS: usize = 8;
/// Probe gaps span about `PROBE_GAP * sqrt(dt)`. Curvature carries roundoff
/// of order `eps / h^2` and explicit steps scale like `h^2`, so a gap of a
/// few steps would let the centered difference blow that up like `h^-4`; a
/// gap proportional to `h` keeps the truncation error at `O(h^2)`.
pub const PROBE_GAP: f64 = 0.2;

/// Steps per probe gap for a step of size `dt`.
pub fn probe_steps(dt: f64) -> usize {
    ((PROBE_GAP / dt.sqrt()).ceil() as usize).max(PROBE_STEPS)
}

fn meta(snap: &Snapshot, rec: &StepRecord) -> SnapshotMeta {
    SnapshotMeta { step: snap.step, t: snap.t, h_min: rec.h_min, h_max: rec.h_max }
}

/// Advance `state` until the end time, extinction, a step limit or an error.
/// Solver failures end the run with `ExitReason::Failed` and keep everything
/// recorded so far.
pub(crate) fn drive<E: Evolver>(state: &mut E, ctl: &RunControl) -> Result<RunTrace> {
    if !(ctl.cfl_sigma > 0.0) || !(ctl.t_end >= 0.0) {
        return Err(Error::Unsupported("cfl_sigma must be positive and t_end non-negative".into()));
    }
    let first = state.record(0.0)?;
    let r0 = first.radius;
    let mut mon = Monitor::new(first);
    let mut snapshots = vec![state.snapshot(0)];
    let mut index = vec![meta(&snapshots[0], &first)];
    let mut probes = Vec::new();
    let mut pending: Vec<f64> = ctl.probe_times.iter().copied().filter(|&t| t > state.time()).collect();
    pending.sort_by(|a, b| a.total_cmp(b));
    pending.reverse();

    let mut step = 0usize;
    let mut last = first;
    let exit = loop {
        let t = state.time();
        if t >= ctl.t_end {
            break ExitReason::EndTime;
        }
        if state.radius() < ctl.extinction_radius * r0 {
            mon.summary.extinction_time = Some(t);
            break ExitReason::Extinction;
        }
        if step >= ctl.max_steps {
            break ExitReason::MaxSteps;
        }
        let outcome = (|| -> Result<Vec<f64>> {
            let cfl = state.cfl_dt(ctl.cfl_sigma)?;
            if !(cfl >= ctl.min_dt) {
                return Err(Error::StepUnderflow { dt: cfl, t });
            }
            let dt = cfl.min(ctl.t_end - t);
            if let Some(&tp) = pending.last() {
                let steps = probe_steps(dt);
                let k = steps as f64;
                if t + (1.0 + 0.98 * k) * dt >= tp && tp <= ctl.t_end {
                    // Land exactly on tp - k dc, then take 2k equal steps.
                    let dc = 0.98 * dt.min((tp - t) / k);
                    let mut plan = vec![tp - k * dc - t];
                    plan.extend(std::iter::repeat_n(dc, 2 * steps));
                    return Ok(plan);
                }
            }
            Ok(vec![dt])
        })();
        let plan = match outcome {
            Ok(p) => p,
            Err(e) => break ExitReason::Failed { error: e.to_string() },
        };
        let probing = plan.len() > 1;
        let mut triple = Vec::new();
        let mut failed = None;
        for (i, &dt) in plan.iter().enumerate() {
            if probing && i == 1 {
                triple.push(state.snapshot(step));
            }
            if dt > 0.0 {
                if let Err(e) = state.advance(dt).and_then(|_| state.check_mesh()) {
                    failed = Some(e);
                    break;
                }
                step += 1;
                let rec = match state.record(dt) {
                    Ok(r) => r,
                    Err(e) => {
                        failed = Some(e);
                        break;
                    }
                };
                let keep = ctl.record_every <= 1 || step.is_multiple_of(ctl.record_every);
                mon.observe(rec, keep);
                last = rec;
                if ctl.snapshot_every > 0 && step.is_multiple_of(ctl.snapshot_every) {
                    let s = state.snapshot(step);
                    index.push(meta(&s, &rec));
                    snapshots.push(s);
                }
            }
            if probing && i >= 1 && i % ((plan.len() - 1) / 2) == 0 {
                triple.push(state.snapshot(step));
            }
        }
        if let Some(e) = failed {
            break ExitReason::Failed { error: e.to_string() };
        }
        if probing {
            let tp = pending.pop().unwrap_or(f64::NAN);
            let gap = triple.get(1).zip(triple.first()).map_or(f64::NAN, |(m, a)| m.t - a.t);
            if let Ok(arr) = <[Snapshot; 3]>::try_from(triple) {
                probes.push(ProbeTriple { t: tp, dt: gap, snapshots: arr });
            }
        }
    };

    if mon.records.last().map(|r| r.t) != Some(last.t) {
        mon.records.push(last);
    }
    if snapshots.last().map(|s| s.step) != Some(step) {
        let s = state.snapshot(step);
        index.push(meta(&s, &last));
        snapshots.push(s);
    }
    Ok(RunTrace { records: mon.records, snapshots, snapshot_index: index, probes, summary: mon.summary, exit })
}
