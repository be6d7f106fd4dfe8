//! Seed construction, solver dispatch and the run directory layout.
//!
//! A run directory holds `series.csv`, `trace.json`, one `snap_NNNNNN.json`
//! per stored state (numbered by step), one `probe_NN.json` per probe time
//! and, when plotting is enabled, `profile_NNNNNN.svg`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mcmflow_core::error::Error as CoreError;
use mcmflow_core::geometry::ContactAngle;
use mcmflow_core::grid::PolarGrid;
use mcmflow_core::planar::{self, PlanarConfig, PlanarState};
use mcmflow_core::radial::{self, OuterBc, RadialConfig, RadialState};
use mcmflow_core::seed::{self, build_diffeo, lens_profile, required_jet, Cutoff};
use mcmflow_core::snapshot::Snapshot;
use mcmflow_core::trace::{ExitReason, ProbeTriple, RunTrace};

use crate::config::{Config, ProblemKind, SeedMap};
use crate::error::CliError;

/// Environment variable naming the directory that receives run directories.
pub const OUT_ENV: &str = "MCMFLOW_OUT";

pub const SERIES_HEADER: [&str; 11] =
    ["t", "dt", "radius", "sup_v", "H_min", "H_max", "h_eig_max", "angle_res", "orth_res", "p_min", "cont_fn"];

pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

/// Contents of `trace.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceFile {
    pub config: Config,
    #[serde(flatten)]
    pub trace: RunTrace,
    /// Scalar results that only make sense for some problems.
    pub extras: BTreeMap<String, f64>,
    pub probe_files: Vec<String>,
}

pub enum Seed {
    Radial(RadialState),
    Planar(PlanarState),
}

fn seed_error(e: CoreError) -> CliError {
    CliError::Config(format!("cannot build seed: {e}"))
}

pub fn build_seed(cfg: &Config) -> Result<Seed, CliError> {
    let cutoff = Cutoff { rho1: cfg.rho1, rho2: cfg.rho2 };
    match cfg.kind {
        ProblemKind::Catenoid => {
            let angle = ContactAngle::new(cfg.beta).map_err(seed_error)?;
            Ok(Seed::Radial(radial::catenoid_state(angle, cfg.n, cfg.r_outer).map_err(seed_error)?))
        }
        ProblemKind::Lens => {
            let prof = lens_profile(cfg.beta, cfg.radius).map_err(seed_error)?;
            let s = match cfg.seed_map {
                SeedMap::Identity => seed::radial_lens_seed_identity(&prof, cfg.n),
                _ => seed::radial_lens_seed(&prof, cfg.n, cutoff),
            };
            Ok(Seed::Radial(s.map_err(seed_error)?))
        }
        ProblemKind::Planar => {
            let prof = lens_profile(cfg.beta, cfg.radius).map_err(seed_error)?;
            let s = match cfg.seed_map {
                SeedMap::Embedding => {
                    let r = seed::radial_lens_seed(&prof, cfg.n_r, cutoff).map_err(seed_error)?;
                    planar::radial_embedding(&r, cfg.n_theta)
                }
                map => {
                    let h0 = match map {
                        SeedMap::Identity => 0.0,
                        _ => prof.boundary_mean_curvature(),
                    };
                    let jet = required_jet(&[h0], prof.angle, prof.radius);
                    let grid = PolarGrid::new(cfg.n_r, cfg.n_theta).map_err(seed_error)?;
                    build_diffeo(&jet, cutoff, prof.radius).and_then(|m| planar::planar_lens_seed(&prof, grid, &m))
                }
            };
            Ok(Seed::Planar(s.map_err(seed_error)?))
        }
    }
}

/// Build the seed and run the solver. Failures inside the time loop are
/// reported through the trace's exit reason, not as an error.
pub fn execute(cfg: &Config) -> Result<RunTrace, CliError> {
    let solver = |e: CoreError| CliError::Solver(e.to_string());
    match build_seed(cfg)? {
        Seed::Radial(s) => {
            let mut rc = RadialConfig::new(cfg.beta).map_err(seed_error)?;
            rc.outer_bc = if cfg.outer_bc == "vertical_wall" { OuterBc::VerticalWall } else { OuterBc::Pinned };
            rc.control = cfg.control.clone();
            rc.min_phi_r = cfg.min_phi_r;
            radial::run(&rc, s).map_err(solver)
        }
        Seed::Planar(s) => {
            let mut pc = PlanarConfig::new(cfg.beta).map_err(seed_error)?;
            pc.control = cfg.control.clone();
            pc.min_jacobian = cfg.min_jacobian;
            pc.pole_filter = cfg.pole_filter;
            pc.origin = cfg.origin;
            planar::run(&pc, s).map_err(solver)
        }
    }
}

pub fn snapshot_name(step: usize) -> String {
    format!("snap_{step:06}.json")
}

pub fn write_series(path: &Path, trace: &RunTrace) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SERIES_HEADER)?;
    for r in &trace.records {
        let vals = [r.t, r.dt, r.radius, r.sup_v, r.h_min, r.h_max, r.h_eig_max, r.angle_res, r.orth_res, r.p_min, r.cont_fn];
        w.write_record(vals.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Remove the files a previous run left in `dir`.
fn clear_run_dir(dir: &Path) -> Result<(), CliError> {
    if !dir.exists() {
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let ours = name == "series.csv"
            || name == "trace.json"
            || name == "verify.jsonl"
            || (name.starts_with("snap_") && name.ends_with(".json"))
            || (name.starts_with("probe_") && name.ends_with(".json"))
            || (name.starts_with("profile_") && name.ends_with(".svg"))
            || (name.starts_with("triple_") && name.ends_with(".tj"));
        if ours && path.is_file() {
            fs::remove_file(&path)?;
        }
    }
    Ok(())
}

pub fn extras(cfg: &Config, trace: &RunTrace) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    if cfg.kind == ProblemKind::Catenoid {
        if let (Some(last), Ok(angle)) = (trace.snapshots.last(), ContactAngle::new(cfg.beta)) {
            if let Ok(state) = RadialState::from_snapshot(last) {
                out.insert("catenoid_drift".into(), radial::catenoid_drift(&state, angle));
            }
        }
    }
    out
}

pub fn write_run(dir: &Path, cfg: &Config, trace: &RunTrace) -> Result<(), CliError> {
    clear_run_dir(dir)?;
    fs::create_dir_all(dir)?;
    write_series(&dir.join("series.csv"), trace)?;
    for snap in &trace.snapshots {
        fs::write(dir.join(snapshot_name(snap.step)), snap.to_json().map_err(|e| CliError::Io(e.to_string()))?)?;
    }
    let mut probe_files = Vec::new();
    for (i, p) in trace.probes.iter().enumerate() {
        let name = format!("probe_{i:02}.json");
        fs::write(dir.join(&name), serde_json::to_string(p)?)?;
        probe_files.push(name);
    }
    let file = TraceFile { config: cfg.clone(), trace: trace.clone(), extras: extras(cfg, trace), probe_files };
    fs::write(dir.join("trace.json"), serde_json::to_string_pretty(&file)?)?;
    if cfg.plot {
        crate::plot::plot_snapshots(dir, &trace.snapshots, false)?;
    }
    Ok(())
}

/// Run `cfg` into `root/<name>`. Returns the run directory and the trace; a
/// run that stopped early is a solver error, reported after the directory
/// has been written.
pub fn run_command(cfg: &Config, root: &Path) -> Result<(PathBuf, RunTrace), CliError> {
    let trace = execute(cfg)?;
    let dir = root.join(&cfg.name);
    write_run(&dir, cfg, &trace)?;
    match &trace.exit {
        ExitReason::EndTime | ExitReason::Extinction => Ok((dir, trace)),
        ExitReason::MaxSteps => Err(CliError::Solver(format!("step limit reached at t = {}", trace.summary.t_final))),
        ExitReason::Failed { error } => Err(CliError::Solver(error.clone())),
    }
}

/// Read a run directory back: the trace file with every stored snapshot
/// attached, plus the probe triples.
pub fn load_run(dir: &Path) -> Result<(TraceFile, Vec<ProbeTriple>), CliError> {
    let path = dir.join("trace.json");
    let text = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut tf: TraceFile = serde_json::from_str(&text)?;
    let mut snaps = Vec::new();
    for meta in &tf.trace.snapshot_index {
        snaps.push(load_snapshot(&dir.join(snapshot_name(meta.step)))?);
    }
    tf.trace.snapshots = snaps;
    let mut probes = Vec::new();
    for name in &tf.probe_files {
        let p = dir.join(name);
        let text = fs::read_to_string(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        probes.push(serde_json::from_str(&text)?);
    }
    Ok((tf, probes))
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Snapshot::from_json(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
