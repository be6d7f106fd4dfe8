//! Run configuration: flat `key = value` sections.
//!
//! ```text
//! [problem]
//! kind = lens
//! beta = 0.5
//! [grid]
//! n = 64
//! [run]
//! t_end = 1.0
//! ```
//!
//! Every key is optional except `problem.kind` and `problem.beta`; unknown
//! sections and keys are rejected.

use std::path::Path;

use ini::Ini;
use serde::{Deserialize, Serialize};

use mcmflow_core::trace::RunControl;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Radial lens over a disk.
    Lens,
    /// Radial exterior problem started from the catenoid.
    Catenoid,
    /// Lens on the polar grid.
    Planar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedMap {
    /// Reference map built from the required boundary jet.
    Compatible,
    /// `phi_0 = R0 x`.
    Identity,
    /// Planar only: the compatible radial seed copied onto every ray.
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub name: String,
    pub kind: ProblemKind,
    pub beta: f64,
    /// Initial contact radius of a lens.
    pub radius: f64,
    /// Outer radius of the exterior grid.
    pub r_outer: f64,
    pub outer_bc: String,
    pub n: usize,
    pub n_r: usize,
    pub n_theta: usize,
    pub seed_map: SeedMap,
    pub rho1: f64,
    pub rho2: f64,
    pub control: RunControl,
    pub min_phi_r: f64,
    pub min_jacobian: f64,
    pub pole_filter: bool,
    pub origin: [f64; 2],
    pub plot: bool,
}

impl Config {
    pub fn defaults(kind: ProblemKind, beta: f64) -> Self {
        Self {
            name: "run".into(),
            kind,
            beta,
            radius: 1.0,
            r_outer: 3.0,
            outer_bc: "pinned".into(),
            n: 64,
            n_r: 32,
            n_theta: 64,
            seed_map: SeedMap::Compatible,
            rho1: 0.05,
            rho2: 0.2,
            control: RunControl::default(),
            min_phi_r: 0.05,
            min_jacobian: 0.0025,
            pole_filter: true,
            origin: [0.0, 0.0],
            plot: false,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if cfg.name == "run" {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                cfg.name = stem.to_string();
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut entries = Vec::new();
        for (sec, props) in &ini {
            let sec = sec.unwrap_or("");
            for (k, v) in props.iter() {
                entries.push((sec.to_string(), k.to_string(), v.trim().to_string()));
            }
        }
        let find = |s: &str, k: &str| entries.iter().find(|e| e.0 == s && e.1 == k).map(|e| e.2.clone());
        let kind = match find("problem", "kind").as_deref() {
            Some("lens") => ProblemKind::Lens,
            Some("catenoid") => ProblemKind::Catenoid,
            Some("planar") => ProblemKind::Planar,
            Some(other) => return Err(CliError::Config(format!("problem.kind: unknown kind '{other}'"))),
            None => return Err(CliError::Config("problem.kind is required".into())),
        };
        let beta = parse_f64("problem", "beta", &find("problem", "beta").ok_or_else(|| {
            CliError::Config("problem.beta is required".into())
        })?)?;
        let mut cfg = Self::defaults(kind, beta);
        for (sec, key, val) in &entries {
            cfg.set(sec, key, val)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, sec: &str, key: &str, val: &str) -> Result<(), CliError> {
        let f = || parse_f64(sec, key, val);
        let u = || parse_usize(sec, key, val);
        let c = &mut self.control;
        match (sec, key) {
            ("problem", "kind") | ("problem", "beta") => {}
            ("problem", "radius") => self.radius = f()?,
            ("problem", "r_outer") => self.r_outer = f()?,
            ("problem", "outer_bc") => self.outer_bc = val.to_string(),
            ("grid", "n") => self.n = u()?,
            ("grid", "n_r") => self.n_r = u()?,
            ("grid", "n_theta") => self.n_theta = u()?,
            ("seed", "map") => {
                self.seed_map = match val {
                    "compatible" => SeedMap::Compatible,
                    "identity" => SeedMap::Identity,
                    "embedding" => SeedMap::Embedding,
                    _ => return Err(CliError::Config(format!("seed.map: unknown map '{val}'"))),
                }
            }
            ("seed", "rho1") => self.rho1 = f()?,
            ("seed", "rho2") => self.rho2 = f()?,
            ("run", "t_end") => c.t_end = f()?,
            ("run", "cfl_sigma") => c.cfl_sigma = f()?,
            ("run", "max_steps") => c.max_steps = u()?,
            ("run", "snapshot_every") => c.snapshot_every = u()?,
            ("run", "record_every") => c.record_every = u()?,
            ("run", "extinction_radius") => c.extinction_radius = f()?,
            ("run", "min_dt") => c.min_dt = f()?,
            ("run", "probe_times") => {
                c.probe_times = split_list(val).map(|s| parse_f64(sec, key, s)).collect::<Result<_, _>>()?
            }
            ("run", "min_phi_r") => self.min_phi_r = f()?,
            ("run", "min_jacobian") => self.min_jacobian = f()?,
            ("run", "pole_filter") => self.pole_filter = parse_bool(sec, key, val)?,
            ("output", "name") => self.name = val.to_string(),
            ("output", "plot") => self.plot = parse_bool(sec, key, val)?,
            ("output", "origin") => {
                let xs: Vec<f64> = split_list(val).map(|s| parse_f64(sec, key, s)).collect::<Result<_, _>>()?;
                self.origin = <[f64; 2]>::try_from(xs)
                    .map_err(|_| CliError::Config("output.origin: expected two numbers".into()))?;
            }
            _ if sec.is_empty() => return Err(CliError::Config(format!("key '{key}' outside any section"))),
            _ => return Err(CliError::Config(format!("unknown key {sec}.{key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(&format!("problem.beta = {} violates 0 < beta < 1", self.beta));
        }
        if !(self.radius > 0.0) {
            return bad("problem.radius must be positive");
        }
        if !(self.r_outer > 1.0) {
            return bad("problem.r_outer must exceed 1");
        }
        if !matches!(self.outer_bc.as_str(), "pinned" | "vertical_wall") {
            return bad("problem.outer_bc must be 'pinned' or 'vertical_wall'");
        }
        if self.n < 8 {
            return bad("grid.n must be at least 8");
        }
        if self.n_r < 8 || self.n_theta < 8 || !self.n_theta.is_multiple_of(2) {
            return bad("grid.n_r must be at least 8 and grid.n_theta an even number >= 8");
        }
        if !(0.0 < self.rho1 && self.rho1 < self.rho2 && self.rho2 < 1.0) {
            return bad("seed cutoff needs 0 < rho1 < rho2 < 1");
        }
        if self.seed_map == SeedMap::Embedding && self.kind != ProblemKind::Planar {
            return bad("seed.map = embedding needs problem.kind = planar");
        }
        let c = &self.control;
        if !(c.t_end >= 0.0) || !(c.cfl_sigma > 0.0 && c.cfl_sigma <= 1.0) {
            return bad("run.t_end must be >= 0 and run.cfl_sigma in (0, 1]");
        }
        if !(c.extinction_radius > 0.0 && c.extinction_radius < 1.0) {
            return bad("run.extinction_radius must lie in (0, 1)");
        }
        if c.probe_times.iter().any(|t| !(*t > 0.0)) {
            return bad("run.probe_times must be positive");
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return bad("output.name must be a plain file name");
        }
        Ok(())
    }

    /// Same problem with every grid dimension multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let mut c = self.clone();
        c.n *= factor;
        c.n_r *= factor;
        c.n_theta *= factor;
        c
    }

    /// Spacing of the reference grid (radial `h` or planar `dr`).
    pub fn spacing(&self) -> f64 {
        match self.kind {
            ProblemKind::Lens => 1.0 / (self.n as f64 - 0.5),
            ProblemKind::Catenoid => (self.r_outer - 1.0) / (self.n as f64 - 1.0),
            ProblemKind::Planar => 1.0 / (self.n_r as f64 - 0.5),
        }
    }
}

fn split_list(val: &str) -> impl Iterator<Item = &str> {
    val.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_f64(sec: &str, key: &str, val: &str) -> Result<f64, CliError> {
    val.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| CliError::Config(format!("{sec}.{key}: expected a finite number, got '{val}'")))
}

fn parse_usize(sec: &str, key: &str, val: &str) -> Result<usize, CliError> {
    val.parse::<usize>().map_err(|_| CliError::Config(format!("{sec}.{key}: expected a count, got '{val}'")))
}

fn parse_bool(sec: &str, key: &str, val: &str) -> Result<bool, CliError> {
    match val {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("{sec}.{key}: expected true or false, got '{val}'"))),
    }
}

pub const PRESETS: [&str; 4] = ["catenoid", "lens-extinct", "lens-prop125", "planar-symmetric"];

/// Text of a built-in configuration.
pub fn preset(name: &str) -> Option<&'static str> {
    Some(match name {
        "catenoid" => {
            "[problem]\nkind = catenoid\nbeta = 0.5\nr_outer = 3.0\nouter_bc = pinned\n\
             [grid]\nn = 200\n\
             [run]\nt_end = 1.0\nrecord_every = 100\nsnapshot_every = 20000\nprobe_times = 0.5\n\
             [output]\nname = catenoid\n"
        }
        "lens-extinct" => {
            "[problem]\nkind = lens\nbeta = 0.5\nradius = 1.0\n\
             [grid]\nn = 100\n\
             [run]\nt_end = 1.0\nrecord_every = 50\nsnapshot_every = 20000\nprobe_times = 0.1\n\
             [output]\nname = lens-extinct\n"
        }
        "lens-prop125" => {
            "[problem]\nkind = lens\nbeta = 0.6\nradius = 1.0\n\
             [grid]\nn = 100\n\
             [run]\nt_end = 1.0\nrecord_every = 50\nsnapshot_every = 20000\nprobe_times = 0.1\n\
             [output]\nname = lens-prop125\n"
        }
        "planar-symmetric" => {
            "[problem]\nkind = planar\nbeta = 0.5\nradius = 1.0\n\
             [grid]\nn_r = 24\nn_theta = 48\n\
             [seed]\nmap = compatible\n\
             [run]\nt_end = 0.05\nrecord_every = 10\nsnapshot_every = 200\nprobe_times = 0.025\n\
             [output]\nname = planar-symmetric\n"
        }
        _ => return None,
    })
}
