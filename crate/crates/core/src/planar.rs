//! Two-dimensional split-gauge flow `F = [phi1, phi2, u]` over the unit disk.
//!
//! Interior nodes follow `F_t = g^{ab} D^2_{ab} F`, with all derivatives taken
//! in the local frame `(e_r, e_theta)` of the polar reference grid. The pole
//! is covered by ghost values taken across it. On interior rings close to
//! the pole the angular content of the update is truncated to `|m| <= 2j + 1`,
//! which keeps the explicit step proportional to `dr^2` instead of
//! `dr^2 dtheta^2`.
//!
//! On the boundary ring `u = 0`, the planar part of `F_r` is orthogonal to
//! `phi_theta`, and `N^3 = beta`. Given `u_r < 0` and `u_theta = 0` these fix
//! `phi_r = (beta |u_r| / beta0) nu`, with `nu` the outer unit normal of the
//! image of the boundary circle; the boundary values follow by inverting the
//! one-sided radial stencil and iterating over the ring.

use std::f64::consts::TAU;
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::diagnose::{BoundaryFrameFields, FrameNode, SupportFunctionField, BOUNDARY_STENCIL};
use crate::error::{Error, Result};
use crate::geometry::{graph_point, param_graph_h, param_metric, unit_normal, ContactAngle, GraphPoint, Vec3};
use crate::grid::{fornberg_weights, polar_derivs, PolarDerivs, PolarGrid, Sym2, ONE_SIDED_D1};
use crate::radial::RadialState;
use crate::seed::{Diffeo, LensProfile};
use crate::snapshot::{Snapshot, SnapshotData, SNAPSHOT_FORMAT};
use crate::trace::{drive, Evolver, RunControl, RunTrace, StepRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarConfig {
    pub angle: ContactAngle,
    pub control: RunControl,
    /// Abort once the smallest Jacobian of `phi`, relative to the squared
    /// mean boundary radius, drops below this value.
    pub min_jacobian: f64,
    /// Convergence tolerance of the boundary-ring iteration.
    pub bc_tol: f64,
    pub bc_max_sweeps: usize,
    /// Truncate angular modes near the pole.
    pub pole_filter: bool,
    /// Origin of the support function.
    pub origin: [f64; 2],
}

impl PlanarConfig {
    pub fn new(beta: f64) -> Result<Self> {
        Ok(Self {
            angle: ContactAngle::new(beta)?,
            control: RunControl::default(),
            min_jacobian: 0.0025,
            bc_tol: 1e-15,
            bc_max_sweeps: 500,
            pole_filter: true,
            origin: [0.0, 0.0],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarState {
    pub grid: PolarGrid,
    pub t: f64,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub u: Vec<f64>,
}

impl PlanarState {
    pub fn new(grid: PolarGrid, phi1: Vec<f64>, phi2: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if phi1.len() != n || phi2.len() != n || u.len() != n {
            return Err(Error::GridMismatch(format!("planar state needs {n} values per field")));
        }
        Ok(Self { grid, t: 0.0, phi1, phi2, u })
    }

    pub fn from_snapshot(snap: &Snapshot) -> Result<Self> {
        match &snap.data {
            SnapshotData::Planar { grid, phi1, phi2, u } => {
                let mut s = Self::new(*grid, phi1.clone(), phi2.clone(), u.clone())?;
                s.t = snap.t;
                Ok(s)
            }
            SnapshotData::Radial { .. } => Err(Error::Unsupported("expected a planar snapshot".into())),
        }
    }

    pub fn to_snapshot(&self, step: usize, beta: f64) -> Snapshot {
        Snapshot {
            format: SNAPSHOT_FORMAT,
            step,
            t: self.t,
            beta,
            data: SnapshotData::Planar {
                grid: self.grid,
                phi1: self.phi1.clone(),
                phi2: self.phi2.clone(),
                u: self.u.clone(),
            },
        }
    }

    fn fields(&self) -> [&[f64]; 3] {
        [&self.phi1, &self.phi2, &self.u]
    }

    /// Mean distance of the contact line from the origin.
    pub fn mean_radius(&self) -> f64 {
        let g = &self.grid;
        let b = g.boundary_ring();
        (0..g.n_theta).map(|k| self.phi1[g.idx(b, k)].hypot(self.phi2[g.idx(b, k)])).sum::<f64>() / g.n_theta as f64
    }

    /// Physical position of node `(j, k)`.
    pub fn position(&self, j: usize, k: usize) -> [f64; 2] {
        let i = self.grid.idx(j, k);
        [self.phi1[i], self.phi2[i]]
    }
}

/// Lift a lens-grid radial state onto the polar grid with the same rings.
pub fn radial_embedding(state: &RadialState, n_theta: usize) -> Result<PlanarState> {
    if !state.grid.is_lens() {
        return Err(Error::Unsupported("only lens states can be embedded".into()));
    }
    let grid = PolarGrid::new(state.grid.n, n_theta)?;
    let n = grid.len();
    let (mut p1, mut p2, mut u) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for j in 0..grid.n_r {
        for k in 0..n_theta {
            let (s, c) = grid.theta(k).sin_cos();
            let i = grid.idx(j, k);
            p1[i] = state.phi[j] * c;
            p2[i] = state.phi[j] * s;
            u[i] = state.u[j];
        }
    }
    let mut out = PlanarState::new(grid, p1, p2, u)?;
    out.t = state.t;
    Ok(out)
}

/// Planar seed `phi0 = map`, `u0 = w0 o phi0` sampled on `grid`.
pub fn planar_seed(grid: PolarGrid, map: &Diffeo, w0: impl Fn([f64; 2]) -> f64) -> Result<PlanarState> {
    let n = grid.len();
    let (mut p1, mut p2, mut u) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let b = grid.boundary_ring();
    for j in 0..grid.n_r {
        for k in 0..grid.n_theta {
            let y = map.eval(grid.point(j, k));
            let i = grid.idx(j, k);
            p1[i] = y[0];
            p2[i] = y[1];
            u[i] = if j == b { 0.0 } else { w0(y) };
        }
    }
    PlanarState::new(grid, p1, p2, u)
}

/// Compatible lens seed over the polar grid built from the paraboloid
/// profile and the rotationally symmetric reference map.
pub fn planar_lens_seed(profile: &LensProfile, grid: PolarGrid, map: &Diffeo) -> Result<PlanarState> {
    planar_seed(grid, map, |y| profile.w(y[0].hypot(y[1])))
}

// ---------------------------------------------------------------------------
// Local geometry

/// First and second derivatives of `F` at one node in the frame
/// `(e_r, e_theta)`.
#[derive(Debug, Clone, Copy)]
struct NodeJet {
    fr: Vec3,
    ft: Vec3,
    hess: [Sym2; 3],
}

fn node_jet(g: &PolarGrid, fields: [&[f64]; 3], j: usize, k: usize) -> NodeJet {
    let r = g.r(j);
    let mut jet = NodeJet { fr: [0.0; 3], ft: [0.0; 3], hess: [Sym2::default(); 3] };
    for c in 0..3 {
        let d = polar_derivs(g, fields[c], j, k);
        jet.fr[c] = d.r;
        jet.ft[c] = d.t / r;
        jet.hess[c] = d.frame_hessian(r);
    }
    jet
}

/// Rings in the radial stencil of `accurate_jet`.
const JET_RINGS: usize = 7;

/// `node_jet` with a `JET_RINGS`-point radial stencil and fourth-order
/// angular differences. The boundary diagnostics differentiate curvature
/// along the normal, which needs more than second-order curvature values.
fn accurate_jet(g: &PolarGrid, fields: [&[f64]; 3], j: usize, k: usize) -> NodeJet {
    let b = g.boundary_ring();
    let lo = j.saturating_sub(JET_RINGS / 2).min(b + 1 - JET_RINGS.min(b + 1));
    let rs: Vec<f64> = (lo..lo + JET_RINGS).map(|i| g.r(i)).collect();
    let w = fornberg_weights(g.r(j), &rs, 2);
    let dth = g.dtheta();
    let r = g.r(j);
    let ki = k as isize;
    let radial = |f: &[f64], kk: isize, m: usize| -> f64 {
        (0..JET_RINGS).map(|i| w[m][i] * g.at(f, (lo + i) as isize, kk)).sum()
    };
    let d1 = |h: &dyn Fn(isize) -> f64| (8.0 * (h(ki + 1) - h(ki - 1)) - (h(ki + 2) - h(ki - 2))) / (12.0 * dth);
    let mut jet = NodeJet { fr: [0.0; 3], ft: [0.0; 3], hess: [Sym2::default(); 3] };
    for c in 0..3 {
        let f = fields[c];
        let at = |kk: isize| g.at(f, j as isize, kk);
        let d = PolarDerivs {
            r: radial(f, ki, 1),
            t: d1(&at),
            rr: radial(f, ki, 2),
            rt: d1(&|kk| radial(f, kk, 1)),
            tt: (16.0 * (at(ki + 1) + at(ki - 1)) - (at(ki + 2) + at(ki - 2)) - 30.0 * at(ki)) / (12.0 * dth * dth),
        };
        jet.fr[c] = d.r;
        jet.ft[c] = d.t / r;
        jet.hess[c] = d.frame_hessian(r);
    }
    jet
}

impl NodeJet {
    fn dphi(&self) -> [[f64; 2]; 2] {
        [[self.fr[0], self.fr[1]], [self.ft[0], self.ft[1]]]
    }

    fn jacobian(&self) -> f64 {
        self.fr[0] * self.ft[1] - self.fr[1] * self.ft[0]
    }

    /// Graph gradient and Hessian in physical Cartesian coordinates.
    fn graph(&self) -> Option<([f64; 2], Sym2)> {
        let p = self.dphi();
        let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
        if !(det.abs() > 0.0) || !det.is_finite() {
            return None;
        }
        let du = [self.fr[2], self.ft[2]];
        let grad = [(p[1][1] * du[0] - p[0][1] * du[1]) / det, (-p[1][0] * du[0] + p[0][0] * du[1]) / det];
        let n = unit_normal(self.fr, self.ft);
        let a = Sym2::new(
            (0..3).map(|c| self.hess[c].xx * n[c]).sum(),
            (0..3).map(|c| self.hess[c].xy * n[c]).sum(),
            (0..3).map(|c| self.hess[c].yy * n[c]).sum(),
        );
        let h = param_graph_h(p, a)?;
        let v = (1.0 + grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
        Some((grad, Sym2::new(v * h.xx, v * h.xy, v * h.yy)))
    }
}

/// Graph gradient and Hessian at every node, in node order.
pub fn graph_points(snapshot: &Snapshot) -> Result<Vec<([f64; 2], Sym2)>> {
    let s = PlanarState::from_snapshot(snapshot)?;
    state_graph_points(&s)
}

fn state_graph_points(s: &PlanarState) -> Result<Vec<([f64; 2], Sym2)>> {
    let g = &s.grid;
    let mut out = Vec::with_capacity(g.len());
    for j in 0..g.n_r {
        for k in 0..g.n_theta {
            let jet = node_jet(g, s.fields(), j, k);
            out.push(jet.graph().ok_or(Error::DegenerateMetric { node: g.idx(j, k) })?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Solver

/// Angular mode truncation for the rings near the pole.
struct RingFilter {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl RingFilter {
    fn new(n_theta: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { fwd: planner.plan_fft_forward(n_theta), inv: planner.plan_fft_inverse(n_theta) }
    }

    /// Zero every mode with `|m| > keep` of `ring` in place.
    fn apply(&self, ring: &mut [f64], keep: usize) {
        let n = ring.len();
        let mut buf: Vec<Complex<f64>> = ring.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        for (m, c) in buf.iter_mut().enumerate() {
            let mm = m.min(n - m);
            if mm > keep {
                *c = Complex::new(0.0, 0.0);
            }
        }
        self.inv.process(&mut buf);
        let s = 1.0 / n as f64;
        for (x, c) in ring.iter_mut().zip(&buf) {
            *x = c.re * s;
        }
    }
}

/// Modes kept on ring `j`, or `None` when the ring is not filtered.
fn filter_keep(g: &PolarGrid, j: usize) -> Option<usize> {
    let keep = 2 * j + 1;
    (keep < g.n_theta / 2).then_some(keep)
}

/// Interior tendencies `g^{ab} D^2_{ab} F`; boundary rows are zero.
fn rhs(state: &PlanarState, filter: Option<&RingFilter>) -> Result<[Vec<f64>; 3]> {
    let g = &state.grid;
    let n = g.len();
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let fields = state.fields();
    for j in 0..g.boundary_ring() {
        for k in 0..g.n_theta {
            let jet = node_jet(g, fields, j, k);
            let i = g.idx(j, k);
            let m = param_metric(jet.fr, jet.ft);
            let ginv = m.inverse().filter(|_| m.det() > 0.0).ok_or(Error::DegenerateMetric { node: i })?;
            for c in 0..3 {
                out[c][i] = ginv.contract(&jet.hess[c]);
            }
        }
        if let (Some(f), Some(keep)) = (filter, filter_keep(g, j)) {
            for field in out.iter_mut() {
                f.apply(&mut field[g.idx(j, 0)..g.idx(j, 0) + g.n_theta], keep);
            }
        }
    }
    Ok(out)
}

/// Impose the contact-line conditions on the boundary ring. Returns the
/// number of sweeps used.
pub fn apply_bcs(state: &mut PlanarState, angle: ContactAngle, tol: f64, max_sweeps: usize) -> Result<usize> {
    let g = state.grid;
    let b = g.boundary_ring();
    let nt = g.n_theta;
    let w = ONE_SIDED_D1;
    let dth = g.dtheta();
    let ratio = angle.beta / angle.beta0;
    // Interior part of the one-sided radial stencil for each field.
    let interior = |f: &[f64], k: usize| -> f64 {
        w[1] * f[g.idx(b - 1, k)] + w[2] * f[g.idx(b - 2, k)] + w[3] * f[g.idx(b - 3, k)]
    };
    let c1: Vec<f64> = (0..nt).map(|k| interior(&state.phi1, k)).collect();
    let c2: Vec<f64> = (0..nt).map(|k| interior(&state.phi2, k)).collect();
    let cu: Vec<f64> = (0..nt).map(|k| interior(&state.u, k)).collect();
    let mut speed = vec![0.0; nt];
    for k in 0..nt {
        state.u[g.idx(b, k)] = 0.0;
        // u_r with u_b = 0.
        let u_r = cu[k] / g.dr;
        if !(u_r < 0.0) {
            return Err(Error::BcSolveFailure(format!("u_r = {u_r:e} >= 0 on the contact line")));
        }
        speed[k] = -ratio * u_r;
    }
    let mut x1: Vec<f64> = (0..nt).map(|k| state.phi1[g.idx(b, k)]).collect();
    let mut x2: Vec<f64> = (0..nt).map(|k| state.phi2[g.idx(b, k)]).collect();
    let scale = x1.iter().zip(&x2).map(|(a, c)| a.hypot(*c)).fold(0.0, f64::max).max(1e-300);
    for sweep in 1..=max_sweeps {
        let mut change = 0.0f64;
        let mut n1 = vec![0.0; nt];
        let mut n2 = vec![0.0; nt];
        for k in 0..nt {
            let (kp, km) = ((k + 1) % nt, (k + nt - 1) % nt);
            let t1 = (x1[kp] - x1[km]) / (2.0 * dth);
            let t2 = (x2[kp] - x2[km]) / (2.0 * dth);
            let tl = t1.hypot(t2);
            if !(tl > 0.0) {
                return Err(Error::BcSolveFailure(format!("degenerate boundary tangent at node {k}")));
            }
            // Outer normal of a counter-clockwise curve.
            let (nu1, nu2) = (t2 / tl, -t1 / tl);
            n1[k] = (g.dr * speed[k] * nu1 - c1[k]) / w[0];
            n2[k] = (g.dr * speed[k] * nu2 - c2[k]) / w[0];
            change = change.max((n1[k] - x1[k]).abs()).max((n2[k] - x2[k]).abs());
        }
        x1 = n1;
        x2 = n2;
        if !change.is_finite() {
            return Err(Error::BcSolveFailure("boundary iteration diverged".into()));
        }
        if change <= tol * scale {
            for k in 0..nt {
                state.phi1[g.idx(b, k)] = x1[k];
                state.phi2[g.idx(b, k)] = x2[k];
            }
            return Ok(sweep);
        }
    }
    Err(Error::NewtonFailure { residual: boundary_residuals(state, angle).0 })
}

/// `(max |N^3 - beta| plus max |u|, max |<phi_theta, phi_r>|)` on the
/// boundary ring.
pub fn boundary_residuals(state: &PlanarState, angle: ContactAngle) -> (f64, f64) {
    let g = &state.grid;
    let b = g.boundary_ring();
    let mut ang = 0.0f64;
    let mut orth = 0.0f64;
    for k in 0..g.n_theta {
        let jet = node_jet(g, state.fields(), b, k);
        let n = unit_normal(jet.fr, jet.ft);
        ang = ang.max((n[2] - angle.beta).abs()).max(state.u[g.idx(b, k)].abs());
        orth = orth.max((jet.fr[0] * jet.ft[0] + jet.fr[1] * jet.ft[1]).abs());
    }
    (ang, orth)
}

/// `sigma dr^2 min lambda_min(g) / 4` over interior nodes.
pub fn cfl_dt(state: &PlanarState, sigma: f64) -> Result<f64> {
    let g = &state.grid;
    let mut lam = f64::INFINITY;
    for j in 0..g.boundary_ring() {
        for k in 0..g.n_theta {
            let jet = node_jet(g, state.fields(), j, k);
            lam = lam.min(param_metric(jet.fr, jet.ft).eigenvalues()[0]);
        }
    }
    if !lam.is_finite() || !(lam > 0.0) {
        return Err(Error::NonFiniteState { t: state.t });
    }
    Ok(0.25 * sigma * g.dr * g.dr * lam)
}

fn step_with(state: &mut PlanarState, cfg: &PlanarConfig, filter: Option<&RingFilter>, dt: f64) -> Result<()> {
    let k1 = rhs(state, filter)?;
    let mut mid = state.clone();
    for c in 0..3 {
        let f = match c {
            0 => &mut mid.phi1,
            1 => &mut mid.phi2,
            _ => &mut mid.u,
        };
        for (x, d) in f.iter_mut().zip(&k1[c]) {
            *x += dt * d;
        }
    }
    mid.t += dt;
    apply_bcs(&mut mid, cfg.angle, cfg.bc_tol, cfg.bc_max_sweeps)?;
    let k2 = rhs(&mid, filter)?;
    for c in 0..3 {
        let f = match c {
            0 => &mut state.phi1,
            1 => &mut state.phi2,
            _ => &mut state.u,
        };
        for (i, x) in f.iter_mut().enumerate() {
            *x += 0.5 * dt * (k1[c][i] + k2[c][i]);
        }
    }
    state.t += dt;
    apply_bcs(state, cfg.angle, cfg.bc_tol, cfg.bc_max_sweeps)?;
    if state.fields().iter().any(|f| f.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFiniteState { t: state.t });
    }
    Ok(())
}

/// One Heun step of size `dt` with the boundary ring solved after each
/// stage.
pub fn step(state: &mut PlanarState, cfg: &PlanarConfig, dt: f64) -> Result<()> {
    let filter = cfg.pole_filter.then(|| RingFilter::new(state.grid.n_theta));
    step_with(state, cfg, filter.as_ref(), dt)
}

/// Smallest Jacobian of `phi` relative to the squared mean boundary radius.
pub fn relative_min_jacobian(state: &PlanarState) -> f64 {
    let g = &state.grid;
    let r = state.mean_radius();
    let mut m = f64::INFINITY;
    for j in 0..g.n_r {
        for k in 0..g.n_theta {
            m = m.min(node_jet(g, state.fields(), j, k).jacobian());
        }
    }
    m / (r * r)
}

/// Graph points with boundary tangent data for every boundary node.
fn boundary_data(state: &PlanarState) -> Result<Vec<(NodeJet, GraphPoint)>> {
    let g = &state.grid;
    let b = g.boundary_ring();
    (0..g.n_theta)
        .map(|k| {
            let jet = node_jet(g, state.fields(), b, k);
            let (grad, hess) = jet.graph().ok_or(Error::DegenerateMetric { node: g.idx(b, k) })?;
            Ok((jet, graph_point(grad, hess)))
        })
        .collect()
}

fn unit2(a: [f64; 2]) -> [f64; 2] {
    let l = a[0].hypot(a[1]);
    [a[0] / l, a[1] / l]
}

/// `sup over the contact line of |h|_g + |d_s h(tau, tau)|`.
fn continuation_value(state: &PlanarState) -> Result<f64> {
    let g = &state.grid;
    let data = boundary_data(state)?;
    let nt = g.n_theta;
    let htt: Vec<f64> = data
        .iter()
        .map(|(jet, gp)| {
            let tau = unit2([jet.ft[0], jet.ft[1]]);
            gp.h.quad(tau, tau)
        })
        .collect();
    let mut best = 0.0f64;
    for k in 0..nt {
        let (jet, gp) = &data[k];
        let ds = jet.ft[0].hypot(jet.ft[1]) * g.dtheta();
        let d = (htt[(k + 1) % nt] - htt[(k + nt - 1) % nt]) / (2.0 * ds);
        best = best.max(gp.h_norm2().sqrt() + d.abs());
    }
    Ok(best)
}

pub fn step_record(state: &PlanarState, angle: ContactAngle, origin: [f64; 2], dt: f64) -> Result<StepRecord> {
    let g = &state.grid;
    let pts = state_graph_points(state)?;
    let (angle_res, orth_res) = boundary_residuals(state, angle);
    let mut rec = StepRecord {
        t: state.t,
        dt,
        radius: state.mean_radius(),
        sup_v: f64::NEG_INFINITY,
        h_min: f64::INFINITY,
        h_max: f64::NEG_INFINITY,
        h_eig_max: f64::NEG_INFINITY,
        angle_res,
        orth_res,
        p_min: f64::INFINITY,
        cont_fn: continuation_value(state)?,
    };
    for (i, (grad, hess)) in pts.iter().enumerate() {
        let gp = graph_point(*grad, *hess);
        if !gp.mean_curvature.is_finite() {
            return Err(Error::DegenerateMetric { node: i });
        }
        rec.sup_v = rec.sup_v.max(gp.v);
        rec.h_min = rec.h_min.min(gp.mean_curvature);
        rec.h_max = rec.h_max.max(gp.mean_curvature);
        rec.h_eig_max = rec.h_eig_max.max(gp.h.eigenvalues()[1]);
        let y = [state.phi1[i] - origin[0], state.phi2[i] - origin[1]];
        let p = (state.u[i] - y[0] * grad[0] - y[1] * grad[1]) / gp.v;
        rec.p_min = rec.p_min.min(p);
    }
    let _ = g;
    Ok(rec)
}

struct PlanarRun<'a> {
    state: PlanarState,
    cfg: &'a PlanarConfig,
    filter: Option<RingFilter>,
}

impl Evolver for PlanarRun<'_> {
    fn time(&self) -> f64 {
        self.state.t
    }

    fn cfl_dt(&self, sigma: f64) -> Result<f64> {
        cfl_dt(&self.state, sigma)
    }

    fn advance(&mut self, dt: f64) -> Result<()> {
        step_with(&mut self.state, self.cfg, self.filter.as_ref(), dt)
    }

    fn record(&self, dt: f64) -> Result<StepRecord> {
        step_record(&self.state, self.cfg.angle, self.cfg.origin, dt)
    }

    fn snapshot(&self, step: usize) -> Snapshot {
        self.state.to_snapshot(step, self.cfg.angle.beta)
    }

    fn check_mesh(&self) -> Result<()> {
        let m = relative_min_jacobian(&self.state);
        if !(m >= self.cfg.min_jacobian) {
            return Err(Error::MeshDegeneracy(format!("relative min Jacobian = {m:.3e}")));
        }
        Ok(())
    }

    fn radius(&self) -> f64 {
        self.state.mean_radius()
    }
}

/// Run the planar solver from `seed` (boundary conditions are imposed on the
/// seed first).
pub fn run(cfg: &PlanarConfig, seed: PlanarState) -> Result<RunTrace> {
    let mut state = seed;
    apply_bcs(&mut state, cfg.angle, cfg.bc_tol, cfg.bc_max_sweeps)?;
    let filter = cfg.pole_filter.then(|| RingFilter::new(state.grid.n_theta));
    let mut runner = PlanarRun { state, cfg, filter };
    drive(&mut runner, &cfg.control)
}

// ---------------------------------------------------------------------------
// Reconstruction

/// Corners of the reference cell between rings `j, j + 1` (`j` may be the
/// ghost ring `-1`) and angles `k, k + 1`.
fn cell_corners(s: &PlanarState, j: isize, k: isize) -> [[f64; 3]; 4] {
    let g = &s.grid;
    let c = |jj: isize, kk: isize| [g.at(&s.phi1, jj, kk), g.at(&s.phi2, jj, kk), g.at(&s.u, jj, kk)];
    [c(j, k), c(j + 1, k), c(j, k + 1), c(j + 1, k + 1)]
}

/// Bilinear inverse of one cell by Newton's method: local coordinates
/// `(a, b)` with `y = sum corner * weight`.
fn cell_inverse(c: &[[f64; 3]; 4], y: [f64; 2]) -> Option<(f64, f64)> {
    let (mut a, mut b) = (0.5, 0.5);
    for _ in 0..30 {
        let wts = [(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b];
        let mut p = [0.0; 2];
        for i in 0..4 {
            p[0] += wts[i] * c[i][0];
            p[1] += wts[i] * c[i][1];
        }
        let da = [
            -(1.0 - b) * c[0][0] + (1.0 - b) * c[1][0] - b * c[2][0] + b * c[3][0],
            -(1.0 - b) * c[0][1] + (1.0 - b) * c[1][1] - b * c[2][1] + b * c[3][1],
        ];
        let db = [
            -(1.0 - a) * c[0][0] - a * c[1][0] + (1.0 - a) * c[2][0] + a * c[3][0],
            -(1.0 - a) * c[0][1] - a * c[1][1] + (1.0 - a) * c[2][1] + a * c[3][1],
        ];
        let det = da[0] * db[1] - da[1] * db[0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let (rx, ry) = (y[0] - p[0], y[1] - p[1]);
        let sa = (rx * db[1] - ry * db[0]) / det;
        let sb = (da[0] * ry - da[1] * rx) / det;
        a += sa;
        b += sb;
        if sa.abs() + sb.abs() < 1e-14 {
            break;
        }
    }
    (a.is_finite() && b.is_finite()).then_some((a, b))
}

/// Graph height `w(y) = u(phi^{-1}(y))` at physical points, by bilinear
/// inversion of the cell containing each point.
pub fn reconstruct_w(state: &PlanarState, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    let g = &state.grid;
    let nt = g.n_theta as isize;
    let b = g.boundary_ring() as isize;
    let radii: Vec<f64> = (0..g.n_r)
        .map(|j| (0..g.n_theta).map(|k| state.position(j, k)[0].hypot(state.position(j, k)[1])).sum::<f64>() / g.n_theta as f64)
        .collect();
    points
        .iter()
        .map(|&y| {
            let rho = y[0].hypot(y[1]);
            let th = y[1].atan2(y[0]).rem_euclid(TAU);
            let mut k = (th / g.dtheta()).floor() as isize;
            let mut j = radii.iter().take_while(|&&r| r <= rho).count() as isize - 1;
            for _ in 0..(4 * g.n_r + 4 * g.n_theta) {
                j = j.clamp(-1, b - 1);
                let c = cell_corners(state, j, k);
                let (a, bb) = cell_inverse(&c, y)
                    .ok_or_else(|| Error::ReconstructionFailure(format!("singular cell at ({j}, {k})")))?;
                let tol = 1e-9;
                let (mut moved, mut out_of_domain) = (false, false);
                if a < -tol && j > -1 {
                    j -= 1;
                    moved = true;
                } else if a > 1.0 + tol {
                    if j + 1 < b {
                        j += 1;
                        moved = true;
                    } else {
                        out_of_domain = true;
                    }
                }
                if bb < -tol {
                    k = (k - 1).rem_euclid(nt);
                    moved = true;
                } else if bb > 1.0 + tol {
                    k = (k + 1).rem_euclid(nt);
                    moved = true;
                }
                if out_of_domain && !moved {
                    return Err(Error::ReconstructionFailure(format!("point {y:?} lies outside D(t)")));
                }
                if !moved {
                    let wts = [(1.0 - a) * (1.0 - bb), a * (1.0 - bb), (1.0 - a) * bb, a * bb];
                    return Ok((0..4).map(|i| wts[i] * c[i][2]).sum());
                }
            }
            Err(Error::ReconstructionFailure(format!("cell walk did not settle for {y:?}")))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Diagnostics on planar snapshots

/// Derivative along the reference radius at the boundary ring of a field
/// given on the last `BOUNDARY_STENCIL` rings (outermost first).
fn ring_normal_derivative(g: &PolarGrid, vals: &[f64]) -> f64 {
    let b = g.boundary_ring();
    let xs: Vec<f64> = (0..vals.len()).map(|i| g.r(b - i)).collect();
    let w = fornberg_weights(xs[0], &xs, 1);
    w[1].iter().zip(vals).map(|(a, v)| a * v).sum()
}

/// Boundary frame quantities at every contact node. Normal derivatives are
/// taken along the reference radial lines, which meet the contact line
/// orthogonally, with the boundary frame held fixed along them.
pub fn boundary_frame(snapshot: &Snapshot) -> Result<BoundaryFrameFields> {
    let s = PlanarState::from_snapshot(snapshot)?;
    let g = s.grid;
    let b = g.boundary_ring();
    let m = BOUNDARY_STENCIL;
    if g.n_r < m + 1 {
        return Err(Error::ReconstructionFailure(format!("need {m} rings along the normal lines")));
    }
    let mut nodes = Vec::with_capacity(g.n_theta);
    for k in 0..g.n_theta {
        let jb = accurate_jet(&g, s.fields(), b, k);
        let nrm = jb.fr[0].hypot(jb.fr[1]);
        let n = [-jb.fr[0] / nrm, -jb.fr[1] / nrm];
        let tau = unit2([jb.ft[0], jb.ft[1]]);
        let mut q = [vec![], vec![], vec![], vec![]];
        let mut gb = None;
        for i in 0..m {
            let jet = accurate_jet(&g, s.fields(), b - i, k);
            let (grad, hess) = jet.graph().ok_or(Error::DegenerateMetric { node: g.idx(b - i, k) })?;
            let gp = graph_point(grad, hess);
            q[0].push(gp.mean_curvature);
            q[1].push(gp.h.quad(n, n));
            q[2].push(gp.h.quad(tau, tau));
            q[3].push(gp.h_norm2());
            if i == 0 {
                gb = Some(gp);
            }
        }
        let gp = gb.unwrap_or_else(|| unreachable!());
        let dn = |vals: &[f64]| -ring_normal_derivative(&g, vals) / nrm;
        nodes.push(FrameNode {
            y: s.position(b, k),
            n,
            tau,
            h_nn: q[1][0],
            h_tt: q[2][0],
            h_nt: gp.h.quad(n, tau),
            mean_curvature: q[0][0],
            v: gp.v,
            dn_mean_curvature: dn(&q[0]),
            dn_h_nn: dn(&q[1]),
            dn_h_tt: dn(&q[2]),
            dn_h_norm2: dn(&q[3]),
        });
    }
    Ok(BoundaryFrameFields { nodes })
}

/// `|h|^2_g v^2` at every node and each node's distance from the contact
/// line in reference cells.
pub fn boundary_weighted_curvature(snapshot: &Snapshot) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = PlanarState::from_snapshot(snapshot)?;
    let g = s.grid;
    let pts = state_graph_points(&s)?;
    let vals = pts
        .iter()
        .map(|(grad, hess)| {
            let gp = graph_point(*grad, *hess);
            gp.h_norm2() * gp.v * gp.v
        })
        .collect();
    let dist = (0..g.n_r).flat_map(|j| std::iter::repeat_n((g.boundary_ring() - j) as f64, g.n_theta)).collect();
    Ok((vals, dist))
}

pub fn support_function(snapshot: &Snapshot, origin: [f64; 2], angle: ContactAngle) -> Result<SupportFunctionField> {
    let s = PlanarState::from_snapshot(snapshot)?;
    let g = s.grid;
    let pts = state_graph_points(&s)?;
    let mut p = Vec::with_capacity(g.len());
    let mut p_bound = 0.0f64;
    for (i, (grad, _)) in pts.iter().enumerate() {
        let y = [s.phi1[i] - origin[0], s.phi2[i] - origin[1]];
        let v = (1.0 + grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
        p.push((s.u[i] - y[0] * grad[0] - y[1] * grad[1]) / v);
        p_bound = p_bound.max((y[0] * y[0] + y[1] * y[1] + s.u[i] * s.u[i]).sqrt());
    }
    let p_min = p.iter().copied().fold(f64::INFINITY, f64::min);
    let frame = boundary_frame(snapshot)?;
    let b = g.boundary_ring();
    let (b2, b0) = (angle.beta * angle.beta, angle.beta0);
    let mut value_res = 0.0f64;
    let mut normal_res = 0.0f64;
    for (k, node) in frame.nodes.iter().enumerate() {
        let jb = accurate_jet(&g, s.fields(), b, k);
        let nrm = jb.fr[0].hypot(jb.fr[1]);
        let vals = (0..BOUNDARY_STENCIL)
            .map(|i| {
                let (grad, _) = accurate_jet(&g, s.fields(), b - i, k).graph().ok_or(Error::DegenerateMetric { node: g.idx(b - i, k) })?;
                let ix = g.idx(b - i, k);
                let y = [s.phi1[ix] - origin[0], s.phi2[ix] - origin[1]];
                let v = (1.0 + grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
                Ok((s.u[ix] - y[0] * grad[0] - y[1] * grad[1]) / v)
            })
            .collect::<Result<Vec<f64>>>()?;
        let dn_p = -ring_normal_derivative(&g, &vals) / nrm;
        let y = [node.y[0] - origin[0], node.y[1] - origin[1]];
        let pb = vals[0];
        value_res = value_res.max((pb + b0 * (y[0] * node.n[0] + y[1] * node.n[1])).abs());
        normal_res = normal_res.max((dn_p - b2 / b0 * pb * node.h_nn).abs());
    }
    Ok(SupportFunctionField { p, p_min, p_bound, boundary_value_residual: value_res, boundary_normal_residual: normal_res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial;
    use crate::seed::{lens_profile, radial_lens_seed, Cutoff};

    fn lens_pair(n: usize, nt: usize) -> (RadialState, PlanarState) {
        let prof = lens_profile(0.5, 1.0).unwrap();
        let rs = radial_lens_seed(&prof, n, Cutoff::default()).unwrap();
        let ps = radial_embedding(&rs, nt).unwrap();
        (rs, ps)
    }

    #[test]
    fn embedding_is_rotationally_symmetric() {
        let (_, ps) = lens_pair(16, 32);
        let g = ps.grid;
        for j in 0..g.n_r {
            let r0 = ps.position(j, 0)[0].hypot(ps.position(j, 0)[1]);
            for k in 0..g.n_theta {
                let p = ps.position(j, k);
                assert!((p[0].hypot(p[1]) - r0).abs() < 1e-15);
                assert_eq!(ps.u[g.idx(j, k)], ps.u[g.idx(j, 0)]);
            }
        }
    }

    #[test]
    fn boundary_solve_matches_radial_conditions() {
        let (mut rs, mut ps) = lens_pair(20, 32);
        let a = ContactAngle::new(0.5).unwrap();
        radial::apply_bcs(&mut rs, a, radial::OuterBc::Pinned).unwrap();
        apply_bcs(&mut ps, a, 1e-15, 200).unwrap();
        let b = ps.grid.boundary_ring();
        for k in 0..ps.grid.n_theta {
            let p = ps.position(b, k);
            assert!((p[0].hypot(p[1]) - rs.phi[b]).abs() < 1e-13);
        }
        let (ang, orth) = boundary_residuals(&ps, a);
        assert!(ang < 1e-12 && orth < 1e-12, "{ang} {orth}");
    }

    #[test]
    fn one_planar_step_tracks_one_radial_step() {
        let a = ContactAngle::new(0.5).unwrap();
        let (mut rs, mut ps) = lens_pair(24, 48);
        radial::apply_bcs(&mut rs, a, radial::OuterBc::Pinned).unwrap();
        let cfg = PlanarConfig::new(0.5).unwrap();
        apply_bcs(&mut ps, a, cfg.bc_tol, cfg.bc_max_sweeps).unwrap();
        let dt = cfl_dt(&ps, 0.4).unwrap();
        radial::step(&mut rs, a, radial::OuterBc::Pinned, dt).unwrap();
        step(&mut ps, &cfg, dt).unwrap();
        let g = ps.grid;
        let mut diff = 0.0f64;
        for j in 0..g.n_r {
            for k in 0..g.n_theta {
                let p = ps.position(j, k);
                diff = diff.max((p[0].hypot(p[1]) - rs.phi[j]).abs()).max((ps.u[g.idx(j, k)] - rs.u[j]).abs());
            }
        }
        // Angular differences of cos/sin carry a relative error dtheta^2 / 12,
        // largest next to the pole where phi / r^2 is large.
        assert!(diff < 2e-5, "{diff}");
    }

    #[test]
    fn rotation_by_grid_shift_commutes_with_stepping() {
        let (_, ps) = lens_pair(12, 16);
        // Break the symmetry with a smooth bump.
        let mut s = ps.clone();
        let g = s.grid;
        for j in 0..g.n_r - 1 {
            for k in 0..g.n_theta {
                let y = s.position(j, k);
                s.u[g.idx(j, k)] += 0.02 * y[0] * (1.0 - g.r(j).powi(2));
            }
        }
        let shift = 3;
        let rotate = |st: &PlanarState| -> PlanarState {
            let mut out = st.clone();
            let (c, sn) = (g.theta(shift).cos(), g.theta(shift).sin());
            for j in 0..g.n_r {
                for k in 0..g.n_theta {
                    let src = g.idx(j, k);
                    let dst = g.idx(j, (k + shift) % g.n_theta);
                    out.phi1[dst] = c * st.phi1[src] - sn * st.phi2[src];
                    out.phi2[dst] = sn * st.phi1[src] + c * st.phi2[src];
                    out.u[dst] = st.u[src];
                }
            }
            out
        };
        let cfg = PlanarConfig::new(0.5).unwrap();
        let mut a = s.clone();
        apply_bcs(&mut a, cfg.angle, cfg.bc_tol, cfg.bc_max_sweeps).unwrap();
        let mut b = rotate(&a);
        let dt = cfl_dt(&a, 0.4).unwrap();
        step(&mut a, &cfg, dt).unwrap();
        step(&mut b, &cfg, dt).unwrap();
        let ra = rotate(&a);
        let d = ra.phi1.iter().zip(&b.phi1).chain(ra.u.iter().zip(&b.u)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn reconstruction_reproduces_nodes_and_radial_profile() {
        let (rs, ps) = lens_pair(24, 48);
        let g = ps.grid;
        let pts: Vec<[f64; 2]> = vec![ps.position(5, 7), ps.position(0, 3), ps.position(g.n_r - 1, 11)];
        let w = reconstruct_w(&ps, &pts).unwrap();
        assert!((w[0] - ps.u[g.idx(5, 7)]).abs() < 1e-12);
        assert!((w[1] - ps.u[g.idx(0, 3)]).abs() < 1e-12);
        assert!(w[2].abs() < 1e-12);
        let prof = lens_profile(0.5, 1.0).unwrap();
        let y = [0.31, -0.42];
        let w = reconstruct_w(&ps, &[y, [0.0, 0.0]]).unwrap();
        assert!((w[0] - prof.w(y[0].hypot(y[1]))).abs() < 2e-3);
        assert!((w[1] - prof.w(0.0)).abs() < 2e-3, "{} {}", w[1], rs.u[0]);
        assert!(reconstruct_w(&ps, &[[1.5, 0.0]]).is_err());
    }
}
