//! Checks of boundary identities, evolution equations and monotone bounds on
//! solver output.
//!
//! Boundary quantities are evaluated on the reconstructed graph `w` over the
//! moving domain: for radial snapshots `w` is known at the physical radii
//! `phi_j` and its normal jet comes from high-order one-sided stencils on
//! those nodes. The inner normal is `-e_rho` on a lens and `+e_rho` on an
//! exterior domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{graph_point, ContactAngle, GraphPoint};
use crate::grid::{fornberg_weights, radial_d1_d2, Parity, RadialGrid, RadialKind, Sym2};
use crate::radial::radial_graph_point;
use crate::snapshot::{Snapshot, SnapshotData};
use crate::trace::{ProbeTriple, RunTrace, SnapshotMeta};

/// Nodes used by one-sided boundary stencils.
pub const BOUNDARY_STENCIL: usize = 6;

/// Residuals at or below this level count as converged regardless of the
/// observed order.
pub const ROUNDOFF_FLOOR: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub id: String,
    pub max_residual: f64,
    /// Present only when the report combines two or more grid levels.
    pub order: Option<f64>,
    pub pass: bool,
}

impl ResidualReport {
    pub fn new(id: &str, max_residual: f64, tol: f64) -> Self {
        Self { id: id.into(), max_residual, order: None, pass: max_residual.abs() <= tol }
    }

    /// Report that carries a value but no verdict.
    pub fn unjudged(id: &str, max_residual: f64) -> Self {
        Self { id: id.into(), max_residual, order: None, pass: true }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

/// Combine per-level reports (coarse to fine, spacing halving) into one
/// report per id. The order is the smallest observed order over consecutive
/// pairs; a residual already at the roundoff floor on the finest level
/// passes regardless.
pub fn combine_levels(levels: &[Vec<ResidualReport>], min_order: f64) -> Vec<ResidualReport> {
    combine_levels_floored(levels, min_order, &vec![ROUNDOFF_FLOOR; levels.len()])
}

/// [`combine_levels`] with a noise floor per level. Pairs whose finer
/// residual is at or below its floor say nothing about the order and are
/// skipped; the report passes when the finest residual is at its floor.
pub fn combine_levels_floored(levels: &[Vec<ResidualReport>], min_order: f64, floors: &[f64]) -> Vec<ResidualReport> {
    let Some(first) = levels.first() else {
        return Vec::new();
    };
    first
        .iter()
        .map(|rep| {
            let series: Vec<f64> = levels
                .iter()
                .filter_map(|l| l.iter().find(|r| r.id == rep.id).map(|r| r.max_residual.abs()))
                .collect();
            let finest = series.last().copied().unwrap_or(f64::NAN);
            if series.len() < 2 || series.len() != levels.len() {
                return ResidualReport { id: rep.id.clone(), max_residual: finest, order: None, pass: false };
            }
            let floor = |i: usize| floors.get(i).copied().unwrap_or(ROUNDOFF_FLOOR).max(ROUNDOFF_FLOOR);
            let resolved: Vec<f64> = series
                .windows(2)
                .enumerate()
                .filter(|(i, w)| w[1] > floor(i + 1))
                .map(|(_, w)| (w[0] / w[1]).log2())
                .collect();
            let order = if resolved.is_empty() {
                series.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min)
            } else {
                resolved.iter().copied().fold(f64::INFINITY, f64::min)
            };
            let pass = finest <= floor(series.len() - 1) || (!resolved.is_empty() && order >= min_order);
            ResidualReport { id: rep.id.clone(), max_residual: finest, order: Some(order), pass }
        })
        .collect()
}

/// Roundoff level of a residual built from fourth differences of fields of
/// size `scale` on spacing `h`.
pub fn fourth_difference_floor(scale: f64, h: f64) -> f64 {
    32.0 * f64::EPSILON * scale.max(1.0) / h.powi(4)
}

// ---------------------------------------------------------------------------
// Boundary identities

/// Normal jet of a rotationally symmetric graph at its contact circle:
/// `w_rho`, `w_rhorho`, `w_rhorhorho` at radius `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialJet {
    pub rho: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    /// `d_n = sign * d_rho`: -1 on a lens, +1 on an exterior domain.
    pub sign: f64,
}

/// Boundary frame quantities at one contact node. `n` is the inner unit
/// normal of the domain and `tau` the unit tangent, both in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameNode {
    pub y: [f64; 2],
    pub n: [f64; 2],
    pub tau: [f64; 2],
    pub h_nn: f64,
    pub h_tt: f64,
    pub h_nt: f64,
    pub mean_curvature: f64,
    pub v: f64,
    /// `d_n` of `H`, `h_nn`, `h_tt` and `|h|^2_g`.
    pub dn_mean_curvature: f64,
    pub dn_h_nn: f64,
    pub dn_h_tt: f64,
    pub dn_h_norm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFrameFields {
    pub nodes: Vec<FrameNode>,
}

impl RadialJet {
    /// Frame quantities at the contact node, with the node placed on the
    /// positive x axis.
    pub fn frame(&self) -> FrameNode {
        let (rho, w1, w2, w3, s) = (self.rho, self.w1, self.w2, self.w3, self.sign);
        let v = (1.0 + w1 * w1).sqrt();
        let dv = w1 * w2 / v;
        let h_nn = w2 / v;
        let dh_nn = w3 / v - w2 * dv / (v * v);
        let h_tt = w1 / (rho * v);
        let dh_tt = w2 / (rho * v) - w1 / (rho * rho * v) - w1 * dv / (rho * v * v);
        let v2 = v * v;
        let mean = h_nn / v2 + h_tt;
        let dmean = dh_nn / v2 - 2.0 * h_nn * dv / (v2 * v) + dh_tt;
        let dnorm = 2.0 * h_nn * dh_nn / (v2 * v2) - 4.0 * h_nn * h_nn * dv / (v2 * v2 * v) + 2.0 * h_tt * dh_tt;
        FrameNode {
            y: [rho, 0.0],
            n: [s, 0.0],
            tau: [0.0, 1.0],
            h_nn,
            h_tt,
            h_nt: 0.0,
            mean_curvature: mean,
            v,
            dn_mean_curvature: s * dmean,
            dn_h_nn: s * dh_nn,
            dn_h_tt: s * dh_tt,
            dn_h_norm2: s * dnorm,
        }
    }
}

/// Identity ids in report order.
pub const BOUNDARY_IDS: [&str; 5] = ["h_split", "mean_curvature_neumann", "h_tt_neumann", "h_nn_neumann", "h_norm_neumann"];

/// The five boundary residuals at one node. The curvature components are
/// taken with respect to the Euclidean unit vectors `n` and `tau`, so that
/// `g^{nn} = beta^2` and `g^{tt} = 1` on the contact line.
pub fn boundary_residuals(f: &FrameNode, angle: ContactAngle) -> [f64; 5] {
    let (b, b0) = (angle.beta, angle.beta0);
    let b2 = b * b;
    let norm2 = b2 * b2 * f.h_nn * f.h_nn + f.h_tt * f.h_tt + 2.0 * b2 * f.h_nt * f.h_nt;
    let tr3 = b2 * b2 * b2 * f.h_nn.powi(3) + f.h_tt.powi(3) + 3.0 * b2 * f.h_nt * f.h_nt * (b2 * f.h_nn + f.h_tt);
    [
        f.h_nt,
        f.dn_mean_curvature - b2 / b0 * f.mean_curvature * f.h_nn,
        b0 * f.dn_h_tt + f.h_tt * f.h_tt - b2 * f.h_nn * f.h_tt,
        b0 * f.dn_h_nn - norm2 / b2 - 2.0 * b0 * b0 * f.h_nn * f.h_nn,
        0.5 * b0 * f.dn_h_norm2 - 2.0 * b2 * norm2 * f.h_nn + tr3,
    ]
}

/// Contact node index and the `BOUNDARY_STENCIL` nodes nearest to it.
fn boundary_stencil_nodes(grid: &RadialGrid) -> Result<Vec<usize>> {
    let m = BOUNDARY_STENCIL;
    let interior = match grid.kind {
        RadialKind::Lens => grid.n,
        RadialKind::Exterior { .. } => grid.n - 1,
    };
    if interior < m {
        return Err(Error::ReconstructionFailure(format!(
            "need {m} nodes along the normal line, grid has {}",
            grid.n
        )));
    }
    Ok(match grid.kind {
        RadialKind::Lens => (grid.n - m..grid.n).rev().collect(),
        RadialKind::Exterior { .. } => (0..m).collect(),
    })
}

/// Normal jet of the reconstructed graph `w(phi_j) = u_j` at the contact
/// node of a radial state.
pub fn radial_boundary_jet(grid: &RadialGrid, u: &[f64], phi: &[f64]) -> Result<RadialJet> {
    let nodes = boundary_stencil_nodes(grid)?;
    let xs: Vec<f64> = nodes.iter().map(|&j| phi[j]).collect();
    if xs.windows(2).any(|w| !((w[1] - w[0]).abs() > 0.0)) || xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::ReconstructionFailure("radial nodes are not strictly ordered".into()));
    }
    let x0 = xs[0];
    let wts = fornberg_weights(x0, &xs, 3);
    let d = |k: usize| -> f64 { nodes.iter().zip(&wts[k]).map(|(&j, c)| c * u[j]).sum() };
    let sign = if grid.is_lens() { -1.0 } else { 1.0 };
    Ok(RadialJet { rho: x0, w1: d(1), w2: d(2), w3: d(3), sign })
}

/// Jet of a closed-form profile `w` with derivatives supplied by the caller.
pub fn analytic_jet(rho: f64, w1: f64, w2: f64, w3: f64, lens: bool) -> RadialJet {
    RadialJet { rho, w1, w2, w3, sign: if lens { -1.0 } else { 1.0 } }
}

/// Normal jet at the contact circle of the catenoid meeting the unit circle
/// at angle `beta`.
pub fn catenoid_jet(angle: ContactAngle) -> RadialJet {
    let a = angle.beta0;
    let rho: f64 = 1.0;
    let q = rho * rho - a * a;
    let w1 = a / q.sqrt();
    let w2 = -a * rho / q.powf(1.5);
    let w3 = -a / q.powf(1.5) + 3.0 * a * rho * rho / q.powf(2.5);
    analytic_jet(rho, w1, w2, w3, false)
}

pub fn boundary_frame(snapshot: &Snapshot) -> Result<BoundaryFrameFields> {
    match &snapshot.data {
        SnapshotData::Radial { grid, u, phi } => {
            Ok(BoundaryFrameFields { nodes: vec![radial_boundary_jet(grid, u, phi)?.frame()] })
        }
        SnapshotData::Planar { .. } => crate::planar::boundary_frame(snapshot),
    }
}

/// Residuals of the boundary identities at `frame`, one report per identity
/// (maximum over the contact nodes). Reports are unjudged; use
/// [`combine_levels`] or an absolute tolerance to decide.
pub fn identity_reports(frame: &BoundaryFrameFields, angle: ContactAngle) -> Vec<ResidualReport> {
    let mut max = [0.0f64; 5];
    for node in &frame.nodes {
        let r = boundary_residuals(node, angle);
        for i in 0..5 {
            max[i] = max[i].max(r[i].abs());
        }
    }
    BOUNDARY_IDS.iter().zip(max).map(|(id, m)| ResidualReport::unjudged(id, m)).collect()
}

/// Boundary identities of a snapshot, judged against `tol`.
pub fn check_boundary_identities(snapshot: &Snapshot, angle: ContactAngle) -> Result<Vec<ResidualReport>> {
    let frame = boundary_frame(snapshot)?;
    Ok(identity_reports(&frame, angle))
}

// ---------------------------------------------------------------------------
// Evolution equations

/// `L[H]` and `L[|h|^2]` are checked twice: once with the tangential
/// `omega` terms included and once in the plain normal-flow form
/// `L[H] = |h|^2 H`, `L[|h|^2] = -2|grad h|^2 + 2|h|^4`.
pub const EVOLUTION_IDS: [&str; 7] = [
    "L[v]",
    "L[H]",
    "L[|h|^2]",
    "L[H]_normal_flow",
    "L[|h|^2]_normal_flow",
    "laplace_beltrami",
    "codazzi",
];

/// Distance from the boundary of the reference domain below which probe
/// nodes are excluded.
pub const PROBE_MARGIN: f64 = 0.1;

/// Graph fields of a radial state at every node, in the frame
/// `(e_rho, e_theta)` of the physical plane.
struct RadialFields {
    rho: Vec<f64>,
    phi_r: Vec<f64>,
    phi_rr: Vec<f64>,
    w1: Vec<f64>,
    v: Vec<f64>,
    h_rr: Vec<f64>,
    h_tt: Vec<f64>,
    mean: Vec<f64>,
    norm2: Vec<f64>,
}

fn radial_fields(grid: &RadialGrid, u: &[f64], phi: &[f64]) -> RadialFields {
    let (u_r, u_rr) = radial_d1_d2(grid, u, Parity::Even);
    let (phi_r, phi_rr) = radial_d1_d2(grid, phi, Parity::Odd);
    let mut f = RadialFields {
        rho: phi.to_vec(),
        phi_r: phi_r.clone(),
        phi_rr: phi_rr.clone(),
        w1: Vec::new(),
        v: Vec::new(),
        h_rr: Vec::new(),
        h_tt: Vec::new(),
        mean: Vec::new(),
        norm2: Vec::new(),
    };
    for j in 0..grid.n {
        let gp = radial_graph_point(phi[j], u_r[j], u_rr[j], phi_r[j], phi_rr[j]);
        f.w1.push(u_r[j] / phi_r[j]);
        f.v.push(gp.v);
        f.h_rr.push(gp.h.xx);
        f.h_tt.push(gp.h.yy);
        f.mean.push(gp.mean_curvature);
        f.norm2.push(gp.h_norm2());
    }
    f
}

impl RadialFields {
    /// `(f_rho, f_rhorho)` of a node field by the chain rule through `phi`.
    fn physical_derivs(&self, grid: &RadialGrid, q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (q_r, q_rr) = radial_d1_d2(grid, q, Parity::Even);
        let d1 = q_r.iter().zip(&self.phi_r).map(|(a, p)| a / p).collect();
        let d2 = (0..q.len())
            .map(|j| {
                let p = self.phi_r[j];
                (q_rr[j] * p - q_r[j] * self.phi_rr[j]) / (p * p * p)
            })
            .collect();
        (d1, d2)
    }

    /// Components `(nabla_rho h_rhorho, nabla_rho h_thth, nabla_th h_rhoth)`
    /// of the covariant derivative of `h` in the frame `(e_rho, e_theta)`,
    /// and `|nabla h|^2_g`, at every node. The norm takes the mixed terms
    /// from `nabla_rho h_thth` through Codazzi, since the third component
    /// divides by `rho` and is not resolved at the pole.
    fn grad_h(&self, grid: &RadialGrid) -> (Vec<[f64; 3]>, Vec<f64>) {
        let (hr1, _) = self.physical_derivs(grid, &self.h_rr);
        let (ht1, _) = self.physical_derivs(grid, &self.h_tt);
        let mut comps = Vec::with_capacity(grid.n);
        let mut norm = Vec::with_capacity(grid.n);
        for j in 0..grid.n {
            let (hr, ht, rho, v) = (self.h_rr[j], self.h_tt[j], self.rho[j], self.v[j]);
            let om = self.w1[j] / v;
            let v2 = v * v;
            let c = [hr1[j] - 2.0 * hr * hr * om, ht1[j], (hr - ht) / rho - ht * hr * om];
            norm.push(c[0] * c[0] / (v2 * v2 * v2) + 3.0 * c[1] * c[1] / v2);
            comps.push(c);
        }
        (comps, norm)
    }
}

fn probe_nodes(grid: &RadialGrid) -> Vec<usize> {
    (0..grid.n)
        .filter(|&j| {
            let r = grid.r(j);
            match grid.kind {
                RadialKind::Lens => 1.0 - r > PROBE_MARGIN,
                RadialKind::Exterior { r_outer } => r - 1.0 > PROBE_MARGIN && r_outer - r > PROBE_MARGIN,
            }
        })
        .collect()
}

/// `(phi, u)` of each state of a probe triple.
type Profiles<'a> = [(&'a [f64], &'a [f64]); 3];

fn radial_triple(triple: &ProbeTriple) -> Result<(RadialGrid, Profiles<'_>)> {
    let mut out = Vec::with_capacity(3);
    let mut grid0 = None;
    for s in &triple.snapshots {
        match &s.data {
            SnapshotData::Radial { grid, u, phi } => {
                if grid0.is_some_and(|g| g != *grid) {
                    return Err(Error::InconsistentSnapshots("grids differ".into()));
                }
                grid0 = Some(*grid);
                out.push((u.as_slice(), phi.as_slice()));
            }
            SnapshotData::Planar { .. } => {
                return Err(Error::Unsupported("evolution residuals need radial snapshots".into()))
            }
        }
    }
    let [a, b, c] = <[_; 3]>::try_from(out).map_err(|_| Error::InconsistentSnapshots("need three".into()))?;
    Ok((grid0.unwrap_or_else(|| unreachable!()), [a, b, c]))
}

/// Residual fields of the evolution equations for `f = v`, `H` and `|h|^2_g`
/// with `L = d_t - g^{ij} d_ij`, plus two purely spatial consistency checks
/// (divergence-form Laplace-Beltrami and the Codazzi relation). Time
/// derivatives are centered and taken at fixed points of the plane.
pub fn evolution_residuals(triple: &ProbeTriple) -> Result<Vec<ResidualReport>> {
    let s = &triple.snapshots;
    let (d0, d1) = (s[1].t - s[0].t, s[2].t - s[1].t);
    if !(d0 > 0.0) || (d0 - d1).abs() > 1e-9 * d0.max(d1) {
        return Err(Error::InconsistentSnapshots(format!("non-uniform time spacing {d0:e} vs {d1:e}")));
    }
    let (grid, states) = radial_triple(triple)?;
    let dt = 0.5 * (d0 + d1);
    let fm = radial_fields(&grid, states[0].0, states[0].1);
    let fc = radial_fields(&grid, states[1].0, states[1].1);
    let fp = radial_fields(&grid, states[2].0, states[2].1);

    let (v1, v2) = fc.physical_derivs(&grid, &fc.v);
    let (m1, m2) = fc.physical_derivs(&grid, &fc.mean);
    let (q1, q2) = fc.physical_derivs(&grid, &fc.norm2);
    let (nabla_h, grad_h2) = fc.grad_h(&grid);
    // rho f_rho / v for the divergence form of Laplace-Beltrami on f = v.
    let flux: Vec<f64> = (0..grid.n).map(|j| fc.rho[j] * v1[j] / fc.v[j]).collect();
    let (flux1, _) = fc.physical_derivs(&grid, &flux);

    let mut max = [0.0f64; 7];
    for j in probe_nodes(&grid) {
        let rho = fc.rho[j];
        let v = fc.v[j];
        let v2sq = v * v;
        let drho = (fp.rho[j] - fm.rho[j]) / (2.0 * dt);
        let dt_euler = |plus: f64, minus: f64, d1: f64| (plus - minus) / (2.0 * dt) - d1 * drho;
        let tr_d2 = |d1: f64, d2: f64| d2 / v2sq + d1 / rho;
        let hr = fc.h_rr[j];
        let mean = fc.mean[j];
        let norm2 = fc.norm2[j];
        let om = fc.w1[j] / v;
        let h_ww = hr * om * om;
        let h2_ww = hr * hr * om * om / v2sq;
        let h3_ww = hr * hr * hr * om * om / (v2sq * v2sq);

        let lv = dt_euler(fp.v[j], fm.v[j], v1[j]) - tr_d2(v1[j], v2[j]);
        let rv = lv - (-2.0 * v1[j] * v1[j] / (v2sq * v) - v * norm2);

        let lh = dt_euler(fp.mean[j], fm.mean[j], m1[j]) - tr_d2(m1[j], m2[j]);
        let rh = lh - (norm2 * mean + mean * h2_ww - mean * mean * h_ww);

        let [_, n_rtt, n_trt] = nabla_h[j];
        let grad2 = grad_h2[j];
        let lq = dt_euler(fp.norm2[j], fm.norm2[j], q1[j]) - tr_d2(q1[j], q2[j]);
        let rq = lq - (-2.0 * grad2 + 2.0 * norm2 * norm2 - 4.0 * mean * h3_ww - 2.0 * mean * norm2 * h_ww);

        let lb_div = flux1[j] / (rho * v);
        let lb = tr_d2(v1[j], v2[j]) - mean * fc.w1[j] * v1[j] / v;
        // Weighted by rho: both sides vanish at the pole like rho.
        let codazzi = rho * (n_rtt - n_trt);
        let rh_nf = lh - norm2 * mean;
        let rq_nf = lq - (-2.0 * grad2 + 2.0 * norm2 * norm2);

        for (m, r) in max.iter_mut().zip([rv, rh, rq, rh_nf, rq_nf, lb_div - lb, codazzi]) {
            *m = m.max(r.abs());
        }
    }
    Ok(EVOLUTION_IDS.iter().zip(max).map(|(id, m)| ResidualReport::unjudged(id, m)).collect())
}

/// Largest `(d_t - Delta) f` over the probe nodes for
/// `f = alpha |nabla h|^2 + |h|^2`, `alpha = min(1, 1 / (4 a0^2))`, where
/// `a0` bounds `|h|` over the run. A finite value is the constant `C` of the
/// subsolution inequality `(d_t - Delta) f <= C`.
pub fn subsolution_constant(triple: &ProbeTriple, a0: f64) -> Result<ResidualReport> {
    let s = &triple.snapshots;
    let (grid, states) = radial_triple(triple)?;
    let dt = 0.5 * (s[2].t - s[0].t);
    let alpha = 1.0f64.min(0.25 / (a0 * a0));
    let fields: Vec<RadialFields> = states.iter().map(|(u, phi)| radial_fields(&grid, u, phi)).collect();
    let f: Vec<Vec<f64>> = fields
        .iter()
        .map(|fl| {
            let (_, g2) = fl.grad_h(&grid);
            g2.iter().zip(&fl.norm2).map(|(g, q)| alpha * g + q).collect()
        })
        .collect();
    let fc = &fields[1];
    let (f1, f2) = fc.physical_derivs(&grid, &f[1]);
    let mut c = f64::NEG_INFINITY;
    for j in probe_nodes(&grid) {
        let v = fc.v[j];
        let drho = (fields[2].rho[j] - fields[0].rho[j]) / (2.0 * dt);
        let ft = (f[2][j] - f[0][j]) / (2.0 * dt) - f1[j] * drho;
        let lap = f2[j] / (v * v) + f1[j] / fc.rho[j] - fc.mean[j] * fc.w1[j] * f1[j] / v;
        c = c.max(ft - lap);
    }
    Ok(ResidualReport::unjudged("subsolution_constant", c))
}

/// Largest `|h|_g` over the stored snapshots.
pub fn curvature_bound(snaps: &[Snapshot]) -> Result<f64> {
    let mut a0 = 0.0f64;
    for snap in snaps {
        for (_, gp) in snapshot_graph_points(snap)? {
            a0 = a0.max(gp.h_norm2().sqrt());
        }
    }
    Ok(a0)
}

// ---------------------------------------------------------------------------
// Monotone bounds

/// Bounds over a whole run, each reported as a signed worst violation (a
/// positive `max_residual` means the bound was exceeded).
pub fn bounds_monitor(trace: &RunTrace, angle: ContactAngle) -> Result<Vec<ResidualReport>> {
    let s = &trace.summary;
    let mut out = Vec::new();
    let vbar = s.sup_v_initial.max(1.0 / angle.beta);
    let rel = s.sup_v_max / vbar - 1.0;
    out.push(ResidualReport { id: "gradient_bound".into(), max_residual: rel, order: None, pass: rel <= 1e-3 });
    let first = trace.records.first().ok_or_else(|| Error::NotApplicable("empty trace".into()))?;
    // Concavity, the height bounds and the argmax location are properties of
    // concave seeds only.
    let concave = first.h_eig_max <= 1e-12;
    if concave {
        out.push(ResidualReport {
            id: "concavity".into(),
            max_residual: s.h_eig_max,
            order: None,
            pass: s.h_eig_max <= 1e-6,
        });
    }
    let prop_regime = angle.beta > 1.0 / 3f64.sqrt()
        && s.sup_v_initial <= 3f64.sqrt() + 1e-12
        && first.h_eig_max <= 1e-12
        && first.h_max < 0.0;
    if prop_regime {
        let excess = s.mean_curvature_sup_max - s.mean_curvature_sup_initial;
        out.push(ResidualReport {
            id: "mean_curvature_bound".into(),
            max_residual: excess,
            order: None,
            pass: excess <= 1e-3,
        });
    }
    if concave && !trace.snapshots.is_empty() {
        let (w0, _) = height_range(&trace.snapshots[0]);
        let mut top = f64::NEG_INFINITY;
        let mut bottom = f64::INFINITY;
        for snap in &trace.snapshots {
            let (hi, lo) = height_range(snap);
            top = top.max(hi);
            bottom = bottom.min(lo);
        }
        out.push(ResidualReport::new("height_max", top - w0, 1e-8));
        out.push(ResidualReport::new("height_min", (-bottom).max(0.0), 1e-8));
        if let Some(rep) = parabolic_argmax(&trace.snapshots)? {
            out.push(rep);
        }
    }
    Ok(out)
}

fn height_range(snap: &Snapshot) -> (f64, f64) {
    let u = match &snap.data {
        SnapshotData::Radial { u, .. } | SnapshotData::Planar { u, .. } => u,
    };
    u.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(a, b), &x| (a.max(x), b.min(x)))
}

/// Where `f = |h|^2_g v^2` attains its maximum over the stored snapshots.
/// Passes when the maximiser is on the initial slice or within one cell of
/// the contact line.
fn parabolic_argmax(snaps: &[Snapshot]) -> Result<Option<ResidualReport>> {
    let mut best = (f64::NEG_INFINITY, 0usize, 0.0f64);
    for (i, snap) in snaps.iter().enumerate() {
        let (values, dist) = match &snap.data {
            SnapshotData::Radial { grid, u, phi } => {
                let f = radial_fields(grid, u, phi);
                let vals: Vec<f64> = (0..grid.n).map(|j| f.norm2[j] * f.v[j] * f.v[j]).collect();
                let c = grid.contact_index();
                let dist: Vec<f64> = (0..grid.n).map(|j| (grid.r(j) - grid.r(c)).abs() / grid.h).collect();
                (vals, dist)
            }
            SnapshotData::Planar { .. } => {
                let (vals, dist) = crate::planar::boundary_weighted_curvature(snap)?;
                (vals, dist)
            }
        };
        for (f, d) in values.iter().zip(&dist) {
            if *f > best.0 {
                best = (*f, i, *d);
            }
        }
    }
    if !best.0.is_finite() {
        return Ok(None);
    }
    let on_boundary = best.1 == 0 || best.2 <= 1.0 + 1e-9;
    Ok(Some(ResidualReport {
        id: "parabolic_argmax".into(),
        max_residual: if best.1 == 0 { 0.0 } else { best.2 },
        order: None,
        pass: on_boundary,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionReport {
    pub t_measured: f64,
    pub t_star: f64,
    pub mean_curvature_bound: f64,
    pub v_bar: f64,
    pub pass: bool,
}

/// `t* = 1 / (2 H0^2 c_n)` with `c_n = 1/n + (vbar^2 - 1)`, `n = 2`.
pub fn extinction_time_bound(h0: f64, v_bar: f64) -> f64 {
    let c_n = 0.5 + (v_bar * v_bar - 1.0);
    1.0 / (2.0 * h0 * h0 * c_n)
}

/// Compare the measured extinction time with the bound, using `H0 = max H`
/// and `vbar = max(sup v, 1/beta)` of the seed.
pub fn extinction_bound(trace: &RunTrace, angle: ContactAngle) -> Result<ExtinctionReport> {
    let t_measured = trace
        .summary
        .extinction_time
        .ok_or_else(|| Error::NotApplicable("run did not reach extinction".into()))?;
    let h0 = trace.summary.mean_curvature_sup_initial;
    if !(h0 < 0.0) {
        return Err(Error::NotApplicable(format!("seed needs H < 0, max H = {h0}")));
    }
    let v_bar = trace.summary.sup_v_initial.max(1.0 / angle.beta);
    let t_star = extinction_time_bound(h0, v_bar);
    Ok(ExtinctionReport { t_measured, t_star, mean_curvature_bound: h0, v_bar, pass: t_measured <= t_star })
}

// ---------------------------------------------------------------------------
// Support function

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportFunctionField {
    /// `p = <G - o, N>` at every node.
    pub p: Vec<f64>,
    pub p_min: f64,
    /// `max |G - o|`.
    pub p_bound: f64,
    /// `|p + beta0 (y - o) . n|` at the contact line.
    pub boundary_value_residual: f64,
    /// `|d_n p - (beta^2 / beta0) p h_nn|` at the contact line.
    pub boundary_normal_residual: f64,
}

/// Support function about `origin` (a point of the base plane). Fails with
/// `OriginOutside` if `p <= 0` somewhere.
pub fn support_function(snapshot: &Snapshot, origin: [f64; 2]) -> Result<SupportFunctionField> {
    let angle = ContactAngle::new(snapshot.beta)?;
    let field = match &snapshot.data {
        SnapshotData::Radial { grid, u, phi } => {
            if origin != [0.0, 0.0] {
                return Err(Error::Unsupported("radial support function is taken about the axis".into()));
            }
            radial_support(grid, u, phi, angle)?
        }
        SnapshotData::Planar { .. } => crate::planar::support_function(snapshot, origin, angle)?,
    };
    if !(field.p_min > 0.0) {
        return Err(Error::OriginOutside { p_min: field.p_min });
    }
    Ok(field)
}

fn radial_support(grid: &RadialGrid, u: &[f64], phi: &[f64], angle: ContactAngle) -> Result<SupportFunctionField> {
    let f = radial_fields(grid, u, phi);
    let p: Vec<f64> = (0..grid.n).map(|j| (u[j] - phi[j] * f.w1[j]) / f.v[j]).collect();
    let p_min = p.iter().copied().fold(f64::INFINITY, f64::min);
    let p_bound = (0..grid.n).map(|j| phi[j].hypot(u[j])).fold(0.0, f64::max);
    let jet = radial_boundary_jet(grid, u, phi)?;
    let c = grid.contact_index();
    // d_rho of p = (w - rho w_rho) / v from the boundary jet.
    let vb = jet.w1.hypot(1.0);
    let pb = (u[c] - jet.rho * jet.w1) / vb;
    let dn_p = jet.sign * (-jet.rho * jet.w2 / vb - pb * jet.w1 * jet.w2 / (vb * vb));
    let frame = jet.frame();
    let y_dot_n = phi[c] * jet.sign;
    let (b, b0) = (angle.beta, angle.beta0);
    Ok(SupportFunctionField {
        boundary_value_residual: (p[c] + b0 * y_dot_n).abs(),
        boundary_normal_residual: (dn_p - b * b / b0 * p[c] * frame.h_nn).abs(),
        p,
        p_min,
        p_bound,
    })
}

// ---------------------------------------------------------------------------
// Continuation functional and conformal frame

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationReport {
    pub t: Vec<f64>,
    pub value: Vec<f64>,
    /// Last value over first value.
    pub growth: f64,
    /// Non-decreasing over the final 10% of rows.
    pub monotone_tail: bool,
}

pub fn continuation_monitor(trace: &RunTrace) -> ContinuationReport {
    let t: Vec<f64> = trace.records.iter().map(|r| r.t).collect();
    let value: Vec<f64> = trace.records.iter().map(|r| r.cont_fn).collect();
    let growth = match (value.first(), value.last()) {
        (Some(a), Some(b)) if *a > 0.0 => b / a,
        _ => f64::NAN,
    };
    let tail = value.len() - value.len() / 10;
    let monotone_tail = value[tail.saturating_sub(1).min(value.len())..].windows(2).all(|w| w[1] >= w[0]);
    ContinuationReport { t, value, growth, monotone_tail }
}

/// Residuals of the pseudo-frame identities at one graph point:
/// `<omega, omega~>_g`, `|omega|^2_g - |Dw|^2`, `|omega~|^2_g - |Dw|^2`, and
/// the value of `h^2(omega, omega) - H h(omega, omega) + |omega|^2_g K`
/// where `K = det(g^{-1} h)`. Each residual is relative to the size of its
/// terms; the second value is `h^2(omega, omega) - H h(omega, omega)` on the
/// same relative scale.
pub fn conformal_frame_residuals(grad: [f64; 2], gp: &GraphPoint) -> ([f64; 4], f64) {
    let g = Sym2::new(1.0 + grad[0] * grad[0], grad[0] * grad[1], 1.0 + grad[1] * grad[1]);
    let om = gp.omega;
    let omt = [-grad[1], grad[0]];
    let dw2 = grad[0] * grad[0] + grad[1] * grad[1];
    let om2 = g.quad(om, om);
    let h_om = gp.h.apply(om);
    let ginv_h_om = gp.ginv.apply(h_om);
    let h2 = crate::geometry::dot2(h_om, ginv_h_om);
    let hww = gp.h.quad(om, om);
    let k = gp.h.det() * gp.ginv.det();
    let lhs = h2 - gp.mean_curvature * hww;
    let fs = 1.0 + dw2 * (1.0 + dw2);
    let cs = 1.0 + h2.abs() + (gp.mean_curvature * hww).abs();
    ([g.quad(om, omt) / fs, (om2 - dw2) / fs, (g.quad(omt, omt) - dw2) / fs, (lhs + om2 * k) / cs], lhs / cs)
}

/// Gradient and graph geometry at every node of a snapshot.
pub fn snapshot_graph_points(snapshot: &Snapshot) -> Result<Vec<([f64; 2], GraphPoint)>> {
    Ok(match &snapshot.data {
        SnapshotData::Radial { grid, u, phi } => {
            let (u_r, u_rr) = radial_d1_d2(grid, u, Parity::Even);
            let (phi_r, phi_rr) = radial_d1_d2(grid, phi, Parity::Odd);
            (0..grid.n)
                .map(|j| {
                    let gp = radial_graph_point(phi[j], u_r[j], u_rr[j], phi_r[j], phi_rr[j]);
                    ([u_r[j] / phi_r[j], 0.0], gp)
                })
                .collect()
        }
        SnapshotData::Planar { .. } => crate::planar::graph_points(snapshot)?
            .into_iter()
            .map(|(grad, hess)| (grad, graph_point(grad, hess)))
            .collect(),
    })
}

/// Recompute `H = g^{ij} h_ij` from a stored snapshot and compare its
/// extremes with the values recorded while the run was in progress.
pub fn trace_identity(snapshot: &Snapshot, meta: &SnapshotMeta) -> Result<ResidualReport> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut finite = true;
    for (_, gp) in snapshot_graph_points(snapshot)? {
        let h = gp.ginv.contract(&gp.h);
        finite &= h.is_finite();
        lo = lo.min(h);
        hi = hi.max(h);
    }
    let scale = 1.0f64.max(meta.h_min.abs()).max(meta.h_max.abs());
    let res = (lo - meta.h_min).abs().max((hi - meta.h_max).abs());
    // min/max skip NaN, so a corrupted field is caught separately.
    let res = if !finite || res.is_nan() { f64::INFINITY } else { res };
    Ok(ResidualReport::new("trace_identity", res, 1e-9 * scale))
}

/// Frame identities over every node and the largest value of
/// `h^2(omega, omega) - H h(omega, omega)`, which is non-positive on
/// concave states.
pub fn conformal_frame_check(snapshot: &Snapshot) -> Result<Vec<ResidualReport>> {
    let pts = snapshot_graph_points(snapshot)?;
    let mut max = [0.0f64; 4];
    let mut sign = f64::NEG_INFINITY;
    for (grad, gp) in &pts {
        let (r, lhs) = conformal_frame_residuals(*grad, gp);
        for i in 0..4 {
            max[i] = max[i].max(r[i].abs());
        }
        sign = sign.max(lhs);
    }
    let ids = ["frame_orthogonal", "frame_norm", "frame_norm_rotated", "determinant_identity"];
    let mut out: Vec<ResidualReport> = ids.iter().zip(max).map(|(id, m)| ResidualReport::new(id, m, 1e-10)).collect();
    out.push(ResidualReport::new("concave_sign", sign.max(0.0), 1e-10));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sphere_triple(n: usize, dt: f64) -> ProbeTriple {
        // Shrinking sphere of radius R(t), R^2 = 4 - 4t, written as a graph
        // over the unit disk.
        let grid = RadialGrid::lens(n).unwrap();
        let snap = |t: f64| {
            let r2 = 4.0 - 4.0 * t;
            let phi = grid.nodes();
            let u = phi.iter().map(|p| (r2 - p * p).sqrt()).collect();
            Snapshot { format: crate::snapshot::SNAPSHOT_FORMAT, step: 0, t, beta: 0.5, data: SnapshotData::Radial { grid, u, phi } }
        };
        let t = 0.1;
        ProbeTriple { t, dt, snapshots: [snap(t - dt), snap(t), snap(t + dt)] }
    }

    fn residual(reports: &[ResidualReport], id: &str) -> f64 {
        reports.iter().find(|r| r.id == id).unwrap().max_residual
    }

    #[test]
    fn shrinking_sphere_separates_evolution_forms() {
        let coarse = evolution_residuals(&sphere_triple(64, 1e-4)).unwrap();
        let fine = evolution_residuals(&sphere_triple(128, 0.25e-4)).unwrap();
        for id in ["L[v]", "L[H]_normal_flow", "L[|h|^2]_normal_flow", "laplace_beltrami", "codazzi"] {
            let (a, b) = (residual(&coarse, id), residual(&fine, id));
            assert!(b < 1e-3 && b < a / 3.0, "{id}: {a:e} -> {b:e}");
        }
        // The omega terms are -H |omega|^2 K and friends, which do not vanish
        // on a sphere away from the pole.
        for id in ["L[H]", "L[|h|^2]"] {
            assert!(residual(&fine, id) > 1e-2, "{id}");
        }
    }

    #[test]
    fn shrinking_sphere_subsolution_constant() {
        // nabla h = 0 and |h|^2 = 2 / R^2, so (d_t - Delta) f = 8 / R^4.
        let r2: f64 = 4.0 - 4.0 * 0.1;
        let exact = 8.0 / (r2 * r2);
        let err = |n: usize, dt: f64| {
            let tr = sphere_triple(n, dt);
            let a0 = curvature_bound(&tr.snapshots).unwrap();
            assert_relative_eq!(a0, (2.0f64 / (r2 - 4.0 * dt)).sqrt(), epsilon = 1e-4);
            (subsolution_constant(&tr, a0).unwrap().max_residual - exact).abs()
        };
        let (a, b, c) = (err(64, 1e-4), err(128, 0.25e-4), err(256, 0.0625e-4));
        assert!(a / b > 3.0 && c < 1e-4, "{a:e} {b:e} {c:e}");
    }

    #[test]
    fn catenoid_jet_satisfies_every_identity() {
        for beta in [0.3, 0.5, 0.8] {
            let a = ContactAngle::new(beta).unwrap();
            let f = catenoid_jet(a).frame();
            assert!(f.mean_curvature.abs() < 1e-12);
            for r in boundary_residuals(&f, a) {
                assert!(r.abs() < 1e-10, "beta {beta}: {r}");
            }
        }
    }

    #[test]
    fn fornberg_jet_of_sampled_polynomial_is_exact() {
        let g = RadialGrid::lens(20).unwrap();
        let phi = g.nodes();
        let u: Vec<f64> = phi.iter().map(|x| 1.0 - x * x + 0.3 * x.powi(3)).collect();
        let jet = radial_boundary_jet(&g, &u, &phi).unwrap();
        assert_relative_eq!(jet.w1, -2.0 + 0.9, epsilon = 1e-9);
        assert_relative_eq!(jet.w2, -2.0 + 1.8, epsilon = 1e-7);
        assert_relative_eq!(jet.w3, 1.8, epsilon = 1e-5);
        assert_eq!(jet.sign, -1.0);
    }

    #[test]
    fn extinction_bound_formula() {
        assert_relative_eq!(extinction_time_bound(-1.0, 2.0), 1.0 / 7.0, epsilon = 1e-15);
        assert_relative_eq!(extinction_time_bound(-2.0, 2.0), 0.25 / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn combine_levels_reports_smallest_order() {
        let lv = |e: f64| vec![ResidualReport::unjudged("x", e)];
        let out = combine_levels(&[lv(1.0), lv(0.25), lv(0.0625)], 1.8);
        assert_relative_eq!(out[0].order.unwrap(), 2.0, epsilon = 1e-12);
        assert!(out[0].pass);
        let out = combine_levels(&[lv(1.0), lv(0.9)], 1.0);
        assert!(!out[0].pass);
        let out = combine_levels(&[lv(1e-14), lv(2e-14)], 1.0);
        assert!(out[0].pass);
        // Noise growing under refinement is skipped once it sits below the floor.
        let out = combine_levels_floored(&[lv(1e-2), lv(2.5e-3), lv(1e-3)], 1.8, &[0.0, 0.0, 2e-3]);
        assert!(out[0].pass);
        assert_relative_eq!(out[0].order.unwrap(), 2.0, epsilon = 1e-12);
        let out = combine_levels_floored(&[lv(1e-2), lv(2.5e-3), lv(1e-3)], 1.8, &[0.0, 0.0, 1e-4]);
        assert!(!out[0].pass);
    }

    #[test]
    fn hemisphere_support_function_is_one() {
        // Unit hemisphere sampled on the radial lens grid (slope blows up at
        // the rim, so only interior nodes are compared).
        let g = RadialGrid::lens(40).unwrap();
        let phi: Vec<f64> = g.nodes().iter().map(|r| 0.8 * r).collect();
        let u: Vec<f64> = phi.iter().map(|x| (1.0 - x * x).sqrt()).collect();
        let f = radial_fields(&g, &u, &phi);
        for j in 0..g.n - 1 {
            let p = (u[j] - phi[j] * f.w1[j]) / f.v[j];
            assert!((p - 1.0).abs() < 1e-3, "{j} {p}");
        }
    }

    proptest! {
        #[test]
        fn conformal_frame_identities_hold_pointwise(
            g0 in -3.0f64..3.0, g1 in -3.0f64..3.0,
            a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0,
        ) {
            let gp = graph_point([g0, g1], Sym2::new(a, b, c));
            let (r, _) = conformal_frame_residuals([g0, g1], &gp);
            for x in r {
                prop_assert!(x.abs() < 1e-10 * (1.0 + g0 * g0 + g1 * g1).powi(3));
            }
        }

        #[test]
        fn concave_hessians_give_non_positive_determinant_term(
            g0 in -3.0f64..3.0, g1 in -3.0f64..3.0,
            l1 in 0.0f64..2.0, l2 in 0.0f64..2.0, t in 0.0f64..3.2,
        ) {
            let hess = Sym2::new(-l1, 0.0, -l2).rotate(t);
            let gp = graph_point([g0, g1], hess);
            let (_, lhs) = conformal_frame_residuals([g0, g1], &gp);
            prop_assert!(lhs <= 1e-10);
        }
    }
}
