//! Rotationally symmetric flow in the split gauge `F = [phi(r) e_r, u(r)]`.
//!
//! With `S = phi_r^2 + u_r^2` the reduced system is
//!
//! ```text
//! u_t   = u_rr / S + r u_r / phi^2
//! phi_t = phi_rr / S + r phi_r / phi^2 - 1 / phi
//! ```
//!
//! obtained by tracing the reference Hessian of `F` against the inverse
//! induced metric `diag(1 / S, r^2 / phi^2)`. On the lens domain the pole is
//! handled by ghost nodes (`u` even, `phi` odd); the contact circle is the
//! last node. On the exterior domain the contact circle is the first node
//! and the outer node is pinned or carries a vertical-wall condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{graph_point, ContactAngle, GraphPoint};
use crate::grid::{radial_d1_d2, Parity, RadialGrid, RadialKind, Sym2, ONE_SIDED_D1};
use crate::snapshot::{Snapshot, SnapshotData, SNAPSHOT_FORMAT};
use crate::trace::{drive, Evolver, RunControl, RunTrace, StepRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterBc {
    /// `u` and `phi` held at their initial values.
    Pinned,
    /// `u_r = 0`, `phi` held.
    VerticalWall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialConfig {
    pub angle: ContactAngle,
    pub outer_bc: OuterBc,
    pub control: RunControl,
    /// Abort once `min phi_r`, relative to the mean stretch of the grid,
    /// drops below this value.
    pub min_phi_r: f64,
}

impl RadialConfig {
    pub fn new(beta: f64) -> Result<Self> {
        Ok(Self {
            angle: ContactAngle::new(beta)?,
            outer_bc: OuterBc::Pinned,
            control: RunControl::default(),
            min_phi_r: 0.05,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialState {
    pub grid: RadialGrid,
    pub t: f64,
    pub u: Vec<f64>,
    pub phi: Vec<f64>,
    /// Values held at the outer node of an exterior grid.
    pub outer: Option<(f64, f64)>,
}

impl RadialState {
    pub fn new(grid: RadialGrid, u: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if u.len() != grid.n || phi.len() != grid.n {
            return Err(Error::GridMismatch(format!(
                "radial state needs {} values, got u: {}, phi: {}",
                grid.n,
                u.len(),
                phi.len()
            )));
        }
        let outer = match grid.kind {
            RadialKind::Lens => None,
            RadialKind::Exterior { .. } => Some((u[grid.n - 1], phi[grid.n - 1])),
        };
        Ok(Self { grid, t: 0.0, u, phi, outer })
    }

    pub fn from_snapshot(snap: &Snapshot) -> Result<Self> {
        match &snap.data {
            SnapshotData::Radial { grid, u, phi } => {
                let mut s = Self::new(*grid, u.clone(), phi.clone())?;
                s.t = snap.t;
                Ok(s)
            }
            SnapshotData::Planar { .. } => {
                Err(Error::Unsupported("expected a radial snapshot".into()))
            }
        }
    }

    pub fn to_snapshot(&self, step: usize, beta: f64) -> Snapshot {
        Snapshot {
            format: SNAPSHOT_FORMAT,
            step,
            t: self.t,
            beta,
            data: SnapshotData::Radial { grid: self.grid, u: self.u.clone(), phi: self.phi.clone() },
        }
    }

    /// Radius of the contact circle.
    pub fn contact_radius(&self) -> f64 {
        self.phi[self.grid.contact_index()]
    }

    pub fn derivatives(&self) -> RadialDerivs {
        let (u_r, u_rr) = radial_d1_d2(&self.grid, &self.u, Parity::Even);
        let (phi_r, phi_rr) = radial_d1_d2(&self.grid, &self.phi, Parity::Odd);
        RadialDerivs { u_r, u_rr, phi_r, phi_rr }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialDerivs {
    pub u_r: Vec<f64>,
    pub u_rr: Vec<f64>,
    pub phi_r: Vec<f64>,
    pub phi_rr: Vec<f64>,
}

/// Mean curvature of the rotational surface `[phi e_r, u]` with upward
/// normal: `H = [phi_r u_rr - u_r phi_rr + S u_r / phi] / S^{3/2}`.
pub fn radial_mean_curvature(phi: f64, u_r: f64, u_rr: f64, phi_r: f64, phi_rr: f64) -> f64 {
    let s = phi_r * phi_r + u_r * u_r;
    (phi_r * u_rr - u_r * phi_rr + s * u_r / phi) / (s * s.sqrt())
}

/// Graph quantities of the profile at one node, in the frame `(e_r, e_theta)`
/// of the physical plane. `w_rho = u_r / phi_r` and
/// `w_rhorho = (u_rr phi_r - u_r phi_rr) / phi_r^3`.
pub fn radial_graph_point(phi: f64, u_r: f64, u_rr: f64, phi_r: f64, phi_rr: f64) -> GraphPoint {
    let w1 = u_r / phi_r;
    let w2 = (u_rr * phi_r - u_r * phi_rr) / (phi_r * phi_r * phi_r);
    graph_point([w1, 0.0], Sym2::new(w2, 0.0, w1 / phi))
}

/// Closed-form catenoid meeting the unit circle at angle `beta`:
/// `u(r) = beta0 (acosh(r / beta0) - acosh(1 / beta0))`.
pub fn catenoid(angle: ContactAngle, r: f64) -> f64 {
    let a = angle.beta0;
    a * ((r / a).acosh() - (1.0 / a).acosh())
}

/// Slope `u'(r) = beta0 / sqrt(r^2 - beta0^2)` of [`catenoid`].
pub fn catenoid_slope(angle: ContactAngle, r: f64) -> f64 {
    let a = angle.beta0;
    a / (r * r - a * a).sqrt()
}

/// Exterior state initialised on the catenoid with `phi = r`.
pub fn catenoid_state(angle: ContactAngle, n: usize, r_outer: f64) -> Result<RadialState> {
    let grid = RadialGrid::exterior(n, r_outer)?;
    let r = grid.nodes();
    let u = r.iter().map(|&x| catenoid(angle, x)).collect();
    RadialState::new(grid, u, r)
}

/// Right-hand side of the reduced system. Boundary rows are zero; they are
/// overwritten by [`apply_bcs`].
pub fn rhs(state: &RadialState) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = &state.grid;
    let d = state.derivatives();
    let mut du = vec![0.0; g.n];
    let mut dphi = vec![0.0; g.n];
    let (lo, hi) = interior_range(g);
    for j in lo..hi {
        let r = g.r(j);
        let p = state.phi[j];
        let s = d.phi_r[j] * d.phi_r[j] + d.u_r[j] * d.u_r[j];
        if !(s > 0.0) || !(p > 0.0) {
            return Err(Error::DegenerateMetric { node: j });
        }
        let p2 = p * p;
        du[j] = d.u_rr[j] / s + r * d.u_r[j] / p2;
        dphi[j] = d.phi_rr[j] / s + r * d.phi_r[j] / p2 - 1.0 / p;
    }
    Ok((du, dphi))
}

fn interior_range(g: &RadialGrid) -> (usize, usize) {
    match g.kind {
        RadialKind::Lens => (0, g.n - 1),
        RadialKind::Exterior { .. } => (1, g.n - 1),
    }
}

/// Solve `a x + b y = e`, `c x + d y = f`.
fn solve2(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Result<(f64, f64)> {
    let det = a * d - b * c;
    if !(det.abs() > 1e-300) || !det.is_finite() {
        return Err(Error::BcSolveFailure(format!("singular boundary system (det = {det:e})")));
    }
    Ok(((e * d - b * f) / det, (a * f - c * e) / det))
}

/// Impose the contact conditions `u = 0` and `N^3 = beta` (as the linear
/// relation `beta u_r -+ beta0 phi_r = 0` with the one-sided stencil of
/// [`ONE_SIDED_D1`]) and the outer condition on exterior grids.
pub fn apply_bcs(state: &mut RadialState, angle: ContactAngle, outer_bc: OuterBc) -> Result<()> {
    let g = state.grid;
    let h = g.h;
    let (beta, beta0) = (angle.beta, angle.beta0);
    let w = ONE_SIDED_D1;
    match g.kind {
        RadialKind::Lens => {
            let b = g.n - 1;
            // u_r = (w0 u_b + cu) / h with cu from the interior nodes; same for phi.
            let cu = w[1] * state.u[b - 1] + w[2] * state.u[b - 2] + w[3] * state.u[b - 3];
            let cp = w[1] * state.phi[b - 1] + w[2] * state.phi[b - 2] + w[3] * state.phi[b - 3];
            // Unknowns (u_b, phi_b): u_b = 0 and beta u_r + beta0 phi_r = 0.
            let (ub, pb) =
                solve2(1.0, 0.0, w[0] * beta, w[0] * beta0, 0.0, -(beta * cu + beta0 * cp))?;
            state.u[b] = ub;
            state.phi[b] = pb;
            let phi_r = (w[0] * pb + cp) / h;
            if !(phi_r > 0.0) || !(pb > 0.0) {
                return Err(Error::BcSolveFailure(format!("contact node folded (phi_r = {phi_r:e})")));
            }
        }
        RadialKind::Exterior { .. } => {
            // u_r = -(w0 u_0 + cu) / h; the inner normal is +e_r.
            let cu = w[1] * state.u[1] + w[2] * state.u[2] + w[3] * state.u[3];
            let cp = w[1] * state.phi[1] + w[2] * state.phi[2] + w[3] * state.phi[3];
            // beta u_r - beta0 phi_r = 0.
            let (u0, p0) =
                solve2(1.0, 0.0, w[0] * beta, -w[0] * beta0, 0.0, -(beta * cu - beta0 * cp))?;
            state.u[0] = u0;
            state.phi[0] = p0;
            let phi_r = -(w[0] * p0 + cp) / h;
            if !(phi_r > 0.0) || !(p0 > 0.0) {
                return Err(Error::BcSolveFailure(format!("contact node folded (phi_r = {phi_r:e})")));
            }
            let b = g.n - 1;
            let (u_out, phi_out) = state
                .outer
                .ok_or_else(|| Error::BcSolveFailure("exterior state without outer values".into()))?;
            state.phi[b] = phi_out;
            state.u[b] = match outer_bc {
                OuterBc::Pinned => u_out,
                OuterBc::VerticalWall => {
                    -(w[1] * state.u[b - 1] + w[2] * state.u[b - 2] + w[3] * state.u[b - 3]) / w[0]
                }
            };
        }
    }
    Ok(())
}

/// Stable explicit step: `sigma * h^2 * min(lambda_min(g)) / 2` over interior
/// nodes, where `lambda_min(g) = min(S, (phi / r)^2)`.
pub fn cfl_dt(state: &RadialState, sigma: f64) -> Result<f64> {
    let g = &state.grid;
    let d = state.derivatives();
    let (lo, hi) = interior_range(g);
    let mut lam = f64::INFINITY;
    for j in lo..hi {
        let s = d.phi_r[j] * d.phi_r[j] + d.u_r[j] * d.u_r[j];
        let q = state.phi[j] / g.r(j);
        lam = lam.min(s).min(q * q);
    }
    if !lam.is_finite() || !(lam > 0.0) {
        return Err(Error::NonFiniteState { t: state.t });
    }
    Ok(0.5 * sigma * g.h * g.h * lam)
}

/// One Heun step of size `dt`, with boundary conditions applied after each
/// stage.
pub fn step(state: &mut RadialState, angle: ContactAngle, outer_bc: OuterBc, dt: f64) -> Result<()> {
    let (k1u, k1p) = rhs(state)?;
    let mut mid = state.clone();
    for j in 0..mid.u.len() {
        mid.u[j] += dt * k1u[j];
        mid.phi[j] += dt * k1p[j];
    }
    mid.t += dt;
    apply_bcs(&mut mid, angle, outer_bc)?;
    let (k2u, k2p) = rhs(&mid)?;
    for j in 0..state.u.len() {
        state.u[j] += 0.5 * dt * (k1u[j] + k2u[j]);
        state.phi[j] += 0.5 * dt * (k1p[j] + k2p[j]);
    }
    state.t += dt;
    apply_bcs(state, angle, outer_bc)?;
    if state.u.iter().chain(&state.phi).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteState { t: state.t });
    }
    Ok(())
}

/// Per-node graph geometry with the solver's own stencils.
pub fn node_geometry(state: &RadialState) -> Vec<GraphPoint> {
    let d = state.derivatives();
    (0..state.grid.n)
        .map(|j| radial_graph_point(state.phi[j], d.u_r[j], d.u_rr[j], d.phi_r[j], d.phi_rr[j]))
        .collect()
}

/// Per-step monitor quantities. The support function is taken about the
/// origin `(0, 0, 0)`.
pub fn step_record(state: &RadialState, angle: ContactAngle, dt: f64) -> Result<StepRecord> {
    let g = &state.grid;
    let d = state.derivatives();
    let mut rec = StepRecord {
        t: state.t,
        dt,
        radius: state.contact_radius(),
        sup_v: f64::NEG_INFINITY,
        h_min: f64::INFINITY,
        h_max: f64::NEG_INFINITY,
        h_eig_max: f64::NEG_INFINITY,
        angle_res: 0.0,
        orth_res: 0.0,
        p_min: f64::INFINITY,
        cont_fn: 0.0,
    };
    for j in 0..g.n {
        let gp = radial_graph_point(state.phi[j], d.u_r[j], d.u_rr[j], d.phi_r[j], d.phi_rr[j]);
        if !gp.mean_curvature.is_finite() {
            return Err(Error::DegenerateMetric { node: j });
        }
        let hm = radial_mean_curvature(state.phi[j], d.u_r[j], d.u_rr[j], d.phi_r[j], d.phi_rr[j]);
        rec.sup_v = rec.sup_v.max(gp.v);
        rec.h_min = rec.h_min.min(hm);
        rec.h_max = rec.h_max.max(hm);
        rec.h_eig_max = rec.h_eig_max.max(gp.h.xx.max(gp.h.yy));
        let p = (state.u[j] - state.phi[j] * gp.omega[0] * gp.v) / gp.v;
        rec.p_min = rec.p_min.min(p);
    }
    let c = g.contact_index();
    let gp = radial_graph_point(state.phi[c], d.u_r[c], d.u_rr[c], d.phi_r[c], d.phi_rr[c]);
    rec.angle_res = (gp.normal[2] - angle.beta).abs().max(state.u[c].abs());
    rec.cont_fn = gp.h_norm2().sqrt();
    Ok(rec)
}

struct RadialRun<'a> {
    state: RadialState,
    cfg: &'a RadialConfig,
}

impl Evolver for RadialRun<'_> {
    fn time(&self) -> f64 {
        self.state.t
    }

    fn cfl_dt(&self, sigma: f64) -> Result<f64> {
        cfl_dt(&self.state, sigma)
    }

    fn advance(&mut self, dt: f64) -> Result<()> {
        step(&mut self.state, self.cfg.angle, self.cfg.outer_bc, dt)
    }

    fn record(&self, dt: f64) -> Result<StepRecord> {
        step_record(&self.state, self.cfg.angle, dt)
    }

    fn snapshot(&self, step: usize) -> Snapshot {
        self.state.to_snapshot(step, self.cfg.angle.beta)
    }

    fn check_mesh(&self) -> Result<()> {
        let g = &self.state.grid;
        let n = g.n;
        let stretch = match g.kind {
            RadialKind::Lens => self.state.phi[n - 1],
            RadialKind::Exterior { r_outer } => (self.state.phi[n - 1] - self.state.phi[0]) / (r_outer - 1.0),
        };
        let d = self.state.derivatives();
        let min = d.phi_r.iter().fold(f64::INFINITY, |a, &b| a.min(b)) / stretch;
        if !(min >= self.cfg.min_phi_r) {
            return Err(Error::MeshDegeneracy(format!("relative min phi_r = {min:.3e}")));
        }
        Ok(())
    }

    fn radius(&self) -> f64 {
        self.state.contact_radius()
    }
}

/// Run the radial solver from `seed` (boundary conditions are imposed on the
/// seed first).
pub fn run(cfg: &RadialConfig, seed: RadialState) -> Result<RunTrace> {
    let mut state = seed;
    if state.outer.is_none() && !state.grid.is_lens() {
        state.outer = Some((state.u[state.grid.n - 1], state.phi[state.grid.n - 1]));
    }
    apply_bcs(&mut state, cfg.angle, cfg.outer_bc)?;
    let mut runner = RadialRun { state, cfg };
    drive(&mut runner, &cfg.control)
}

/// `max_j |u_j - catenoid(phi_j)|`: distance of the profile from the
/// catenoid, insensitive to tangential motion of the nodes.
pub fn catenoid_drift(state: &RadialState, angle: ContactAngle) -> f64 {
    state
        .u
        .iter()
        .zip(&state.phi)
        .map(|(&u, &p)| (u - catenoid(angle, p)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn half() -> ContactAngle {
        ContactAngle::new(0.5).unwrap()
    }

    #[test]
    fn catenoid_closed_form_values() {
        let a = half();
        let s3 = 3f64.sqrt();
        assert_eq!(catenoid(a, 1.0), 0.0);
        assert_relative_eq!(catenoid_slope(a, 1.0), s3, epsilon = 1e-14);
        let expect = 0.5 * s3 * ((4.0 + 13f64.sqrt()).ln() - 3f64.ln());
        assert_relative_eq!(catenoid(a, 2.0), expect, epsilon = 1e-14);
        assert_relative_eq!(catenoid(a, 2.0), 0.805_63, epsilon = 1e-5);
    }

    #[test]
    fn catenoid_has_zero_mean_curvature() {
        let a = half();
        let r: f64 = 1.7;
        let ur = catenoid_slope(a, r);
        let b = a.beta0;
        let urr = -b * r / (r * r - b * b).powf(1.5);
        assert!(radial_mean_curvature(r, ur, urr, 1.0, 0.0).abs() < 1e-14);
    }

    #[test]
    fn mean_curvature_formula_matches_graph_route() {
        // Profile of a sphere of radius 2 reparametrized by phi = r + r^3 / 4.
        let r: f64 = 0.6;
        let phi = r + 0.25 * r.powi(3);
        let (phi_r, phi_rr) = (1.0 + 0.75 * r * r, 1.5 * r);
        let w = |x: f64| (4.0 - x * x).sqrt();
        let w1 = -phi / w(phi);
        let w2 = -4.0 / w(phi).powi(3);
        let (u_r, u_rr) = (w1 * phi_r, w2 * phi_r * phi_r + w1 * phi_rr);
        let h = radial_mean_curvature(phi, u_r, u_rr, phi_r, phi_rr);
        assert_relative_eq!(h, -1.0, epsilon = 1e-13);
        let gp = radial_graph_point(phi, u_r, u_rr, phi_r, phi_rr);
        assert_relative_eq!(gp.mean_curvature, -1.0, epsilon = 1e-13);
    }

    #[test]
    fn split_gauge_rates_move_the_surface_with_normal_speed_h() {
        // Sphere of radius 2 reparametrized by phi = r + r^3 / 4. The rate
        // (phi_t, u_t) must project onto the unit normal as H; a wrong
        // lower-order term in either equation shows up as an O(1) mismatch.
        let g = RadialGrid::lens(200).unwrap();
        let r = g.nodes();
        let phi: Vec<f64> = r.iter().map(|x| x + 0.25 * x.powi(3)).collect();
        let u: Vec<f64> = phi.iter().map(|p| (4.0 - p * p).sqrt()).collect();
        let s = RadialState::new(g, u, phi).unwrap();
        let (du, dphi) = rhs(&s).unwrap();
        let d = s.derivatives();
        let mut worst = 0.0f64;
        for j in 0..g.n - 1 {
            let norm = (d.phi_r[j] * d.phi_r[j] + d.u_r[j] * d.u_r[j]).sqrt();
            let speed = (d.phi_r[j] * du[j] - d.u_r[j] * dphi[j]) / norm;
            worst = worst.max((speed - -1.0).abs());
        }
        assert!(worst < 1e-3, "{worst:e}");
    }

    #[test]
    fn lens_bcs_impose_contact_angle_exactly() {
        let a = ContactAngle::new(0.6).unwrap();
        let g = RadialGrid::lens(30).unwrap();
        let r = g.nodes();
        let mut s =
            RadialState::new(g, r.iter().map(|x| 0.7 * (1.0 - x * x)).collect(), r.clone()).unwrap();
        apply_bcs(&mut s, a, OuterBc::Pinned).unwrap();
        let d = s.derivatives();
        let b = g.n - 1;
        assert_eq!(s.u[b], 0.0);
        let gp = radial_graph_point(s.phi[b], d.u_r[b], d.u_rr[b], d.phi_r[b], d.phi_rr[b]);
        assert_relative_eq!(gp.normal[2], 0.6, epsilon = 1e-13);
    }

    #[test]
    fn exterior_bcs_impose_contact_angle_and_pin_outer_node() {
        let a = half();
        let mut s = catenoid_state(a, 40, 3.0).unwrap();
        s.u[0] = 0.3;
        s.u[39] += 0.1;
        apply_bcs(&mut s, a, OuterBc::Pinned).unwrap();
        assert_eq!(s.u[0], 0.0);
        let d = s.derivatives();
        assert_relative_eq!(d.u_r[0] / d.phi_r[0], a.slope(), epsilon = 1e-12);
        assert_eq!(s.u[39], catenoid(a, 3.0));
        apply_bcs(&mut s, a, OuterBc::VerticalWall).unwrap();
        let d = s.derivatives();
        assert!(d.u_r[39].abs() < 1e-12);
    }

    #[test]
    fn catenoid_is_nearly_stationary_for_the_discrete_operator() {
        let a = half();
        let s = catenoid_state(a, 200, 3.0).unwrap();
        let (du, dphi) = rhs(&s).unwrap();
        let m = du.iter().chain(&dphi).fold(0.0f64, |x, y| x.max(y.abs()));
        assert!(m < 5e-3, "{m}");
    }

    #[test]
    fn heun_step_is_rotation_free_for_flat_disk() {
        // A flat disk with phi = r is stationary for the phi equation only up
        // to the contact condition, so just check the interior rate vanishes.
        let g = RadialGrid::lens(20).unwrap();
        let r = g.nodes();
        let s = RadialState::new(g, vec![0.0; 20], r).unwrap();
        let (du, dphi) = rhs(&s).unwrap();
        for j in 0..19 {
            assert!(du[j].abs() < 1e-12);
            assert!(dphi[j].abs() < 1e-9, "{j} {}", dphi[j]);
        }
    }
}
