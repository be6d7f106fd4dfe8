//! SVG profile plots.
//!
//! Every panel is a `<g class="panel">` carrying its data window as
//! `data-x0/x1/y0/y1` and its pixel box as `data-px/py/pw/ph`, so point
//! coordinates can be mapped back to data values exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mcmflow_core::seed::reflect_triple_junction;
use mcmflow_core::snapshot::{Snapshot, SnapshotData};

use crate::error::CliError;
use crate::runner::load_run;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 40.0;
/// Angular resolution of the exported triple-junction mesh for radial runs.
const TRIPLE_N_THETA: usize = 64;
/// Plane sheet of the triple junction, relative to the contact radius.
const TRIPLE_OUTER: f64 = 1.5;

/// Affine map from a data window onto a pixel box (y pointing up in data).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub px: f64,
    pub py: f64,
    pub pw: f64,
    pub ph: f64,
}

impl Panel {
    fn fit(points: impl Iterator<Item = [f64; 2]>, px: f64, py: f64, pw: f64, ph: f64) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for [x, y] in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !(x1 > x0) {
            x1 = x0 + 1.0;
        }
        if !(y1 > y0) {
            y1 = y0 + 1.0;
        }
        Self { x0, x1, y0, y1, px, py, pw, ph }
    }

    pub fn to_px(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.px + (p[0] - self.x0) / (self.x1 - self.x0) * self.pw,
            self.py + self.ph - (p[1] - self.y0) / (self.y1 - self.y0) * self.ph,
        ]
    }

    pub fn from_px(&self, q: [f64; 2]) -> [f64; 2] {
        [
            self.x0 + (q[0] - self.px) / self.pw * (self.x1 - self.x0),
            self.y0 + (self.py + self.ph - q[1]) / self.ph * (self.y1 - self.y0),
        ]
    }

    fn open(&self, s: &mut String, id: &str) {
        let _ = writeln!(
            s,
            r#"<g class="panel" id="{id}" data-x0="{}" data-x1="{}" data-y0="{}" data-y1="{}" data-px="{}" data-py="{}" data-pw="{}" data-ph="{}">"#,
            self.x0, self.x1, self.y0, self.y1, self.px, self.py, self.pw, self.ph
        );
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#bbb"/>"##,
            self.px, self.py, self.pw, self.ph
        );
    }

    fn polyline(&self, s: &mut String, class: &str, pts: &[[f64; 2]], color: &str) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&p| {
                let q = self.to_px(p);
                format!("{:.3},{:.3}", q[0], q[1])
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
    }
}

fn header(s: &mut String, t: f64) {
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="24" font-family="monospace" font-size="14">t = {t}</text>"#);
}

/// Profile `(rho, w)` of a radial snapshot, ordered by `rho`.
fn radial_profile(phi: &[f64], u: &[f64]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = phi.iter().zip(u).map(|(&p, &w)| [p, w]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    pts
}

/// SVG document for one snapshot. With `triple`, a lens is drawn with its
/// mirror image and the plane outside the contact line.
pub fn render(snap: &Snapshot, triple: bool) -> String {
    let mut s = String::new();
    header(&mut s, snap.t);
    let full = [MARGIN, MARGIN, WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN];
    match &snap.data {
        SnapshotData::Radial { grid, u, phi } => {
            let prof = radial_profile(phi, u);
            if triple && grid.is_lens() {
                let r = phi[grid.contact_index()];
                let mirror: Vec<[f64; 2]> = prof.iter().map(|p| [p[0], -p[1]]).collect();
                let base = [[r, 0.0], [TRIPLE_OUTER * r, 0.0]];
                let all = prof.iter().chain(&mirror).chain(&base).copied();
                let panel = Panel::fit(all, full[0], full[1], full[2], full[3]);
                panel.open(&mut s, "profile");
                panel.polyline(&mut s, "profile", &prof, "#1f77b4");
                panel.polyline(&mut s, "mirror", &mirror, "#d62728");
                panel.polyline(&mut s, "baseline", &base, "#333");
            } else {
                let panel = Panel::fit(prof.iter().copied(), full[0], full[1], full[2], full[3]);
                panel.open(&mut s, "profile");
                panel.polyline(&mut s, "profile", &prof, "#1f77b4");
            }
            s.push_str("</g>\n");
        }
        SnapshotData::Planar { grid, phi1, phi2, u } => {
            let b = grid.boundary_ring();
            let mut curve: Vec<[f64; 2]> = (0..grid.n_theta).map(|k| [phi1[grid.idx(b, k)], phi2[grid.idx(b, k)]]).collect();
            curve.push(curve[0]);
            let half = (WIDTH - 3.0 * MARGIN) / 2.0;
            let side = half.min(HEIGHT - 2.0 * MARGIN);
            let top = Panel::fit(curve.iter().copied(), MARGIN, MARGIN, side, side);
            top.open(&mut s, "boundary");
            top.polyline(&mut s, "boundary", &curve, "#1f77b4");
            s.push_str("</g>\n");
            // Cross-section along the rays at angle 0 and pi, signed by ray.
            let mut section = Vec::new();
            for (k, sign) in [(grid.n_theta / 2, -1.0), (0, 1.0)] {
                for j in 0..grid.n_r {
                    let i = grid.idx(j, k);
                    section.push([sign * phi1[i].hypot(phi2[i]), u[i]]);
                }
            }
            section.sort_by(|a, b| a[0].total_cmp(&b[0]));
            let mut pts = section.clone();
            if triple {
                pts.extend(section.iter().map(|p| [p[0], -p[1]]));
            }
            let cross = Panel::fit(pts.iter().copied(), 2.0 * MARGIN + half, MARGIN, half, side);
            cross.open(&mut s, "section");
            cross.polyline(&mut s, "profile", &section, "#1f77b4");
            if triple {
                let mirror: Vec<[f64; 2]> = section.iter().map(|p| [p[0], -p[1]]).collect();
                cross.polyline(&mut s, "mirror", &mirror, "#d62728");
            }
            s.push_str("</g>\n");
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Write `profile_NNNNNN.svg` for every snapshot (and `triple_NNNNNN.tj`
/// meshes of lens snapshots when `triple` is set).
pub fn plot_snapshots(dir: &Path, snaps: &[Snapshot], triple: bool) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for snap in snaps {
        let path = dir.join(format!("profile_{:06}.svg", snap.step));
        fs::write(&path, render(snap, triple))?;
        written.push(path);
        let lens = match &snap.data {
            SnapshotData::Radial { grid, .. } => grid.is_lens(),
            SnapshotData::Planar { .. } => true,
        };
        if triple && lens {
            if let Ok(tj) = reflect_triple_junction(snap, TRIPLE_N_THETA, TRIPLE_OUTER) {
                let path = dir.join(format!("triple_{:06}.tj", snap.step));
                fs::write(&path, tj.to_text())?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

pub fn plot_command(dir: &Path, triple: bool) -> Result<Vec<PathBuf>, CliError> {
    let (tf, _) = load_run(dir)?;
    plot_snapshots(dir, &tf.trace.snapshots, triple)
}
