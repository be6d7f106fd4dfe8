//! Initial data: concave lens profiles, compatible reference maps and the
//! reflected triple-junction surface.
//!
//! For the split gauge to start smoothly the reference map `phi_0` must agree
//! with the identity to first order on the unit circle and carry the normal
//! second-order jet `n . d^2 phi_0 (n, n) = -H_0 / (beta^2 beta0)`, where `n`
//! is the inner normal and `H_0` the boundary mean curvature of the seed
//! graph. The map is `phi_0(x) = x + zeta(rho) f(x) n(x)` with
//! `rho = 1 - |x|`, `f = rho^2 g / 2`, `g` the harmonic extension of the
//! required jet and `zeta` a quintic cutoff.

use std::f64::consts::TAU;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot3, norm3, ContactAngle, Vec3};
use crate::grid::{one_sided_d1, polar_outer_dr, Grid, PolarGrid, RadialGrid, ScalarField, Sym2};
use crate::radial::RadialState;
use crate::snapshot::{Snapshot, SnapshotData};

/// Rotationally symmetric concave seed `w(rho) = a (R0^2 - rho^2)` with
/// `a = beta0 / (2 beta R0)`, so that `w(R0) = 0` and `|w'(R0)| = beta0 / beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensProfile {
    pub angle: ContactAngle,
    pub radius: f64,
    pub a: f64,
}

pub fn lens_profile(beta: f64, radius: f64) -> Result<LensProfile> {
    let angle = ContactAngle::new(beta)?;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidSeed(format!("lens radius must be positive, got {radius}")));
    }
    Ok(LensProfile { angle, radius, a: angle.beta0 / (2.0 * angle.beta * radius) })
}

impl LensProfile {
    pub fn w(&self, rho: f64) -> f64 {
        self.a * (self.radius * self.radius - rho * rho)
    }

    pub fn w_rho(&self, rho: f64) -> f64 {
        -2.0 * self.a * rho
    }

    pub fn w_rhorho(&self) -> f64 {
        -2.0 * self.a
    }

    /// Gradient of `w` at a physical point.
    pub fn grad(&self, y: [f64; 2]) -> [f64; 2] {
        [-2.0 * self.a * y[0], -2.0 * self.a * y[1]]
    }

    pub fn hess(&self) -> Sym2 {
        Sym2::new(-2.0 * self.a, 0.0, -2.0 * self.a)
    }

    /// Mean curvature at radius `rho`.
    pub fn mean_curvature(&self, rho: f64) -> f64 {
        let w1 = self.w_rho(rho);
        let v = (1.0 + w1 * w1).sqrt();
        let w2 = self.w_rhorho();
        w2 / (v * v * v) + w1 / (rho * v)
    }

    /// Mean curvature on the contact circle.
    pub fn boundary_mean_curvature(&self) -> f64 {
        self.mean_curvature(self.radius)
    }
}

/// Quintic cutoff: 1 for `rho <= rho1`, 0 for `rho >= rho2`, `C^2` in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub rho1: f64,
    pub rho2: f64,
}

impl Default for Cutoff {
    fn default() -> Self {
        Self { rho1: 0.05, rho2: 0.2 }
    }
}

impl Cutoff {
    /// `(zeta, zeta', zeta'')` at `rho`.
    pub fn eval(&self, rho: f64) -> (f64, f64, f64) {
        if rho <= self.rho1 {
            return (1.0, 0.0, 0.0);
        }
        if rho >= self.rho2 {
            return (0.0, 0.0, 0.0);
        }
        let w = self.rho2 - self.rho1;
        let t = (rho - self.rho1) / w;
        let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
        let s1 = 30.0 * t * t * (1.0 - t) * (1.0 - t);
        let s2 = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
        (1.0 - s, -s1 / w, -s2 / (w * w))
    }
}

/// Required normal jet `n . d^2 phi_0 (n, n)` for a boundary mean curvature
/// sample, in the units of a unit reference disk mapped onto a disk of radius
/// `scale`.
pub fn required_jet(h0: &[f64], angle: ContactAngle, scale: f64) -> Vec<f64> {
    let c = scale / (angle.beta * angle.beta * angle.beta0);
    h0.iter().map(|&h| -h * c).collect()
}

/// Harmonic extension into the unit disk of a function sampled at uniformly
/// spaced angles on the unit circle, as a finite Fourier series
/// `g = a_0 + sum_m r^m (a_m cos m theta + b_m sin m theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicExtension {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

/// Values and polar derivatives of a function on the disk.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PolarJet {
    pub f: f64,
    pub r: f64,
    pub t: f64,
    pub rr: f64,
    pub rt: f64,
    pub tt: f64,
}

pub fn extend_boundary_function(samples: &[f64]) -> Result<HarmonicExtension> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::GridTooSmall("no boundary samples".into()));
    }
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let mut cos = vec![0.0; half + 1];
    let mut sin = vec![0.0; half + 1];
    let nf = n as f64;
    cos[0] = buf[0].re / nf;
    for m in 1..=half {
        if 2 * m == n {
            cos[m] = buf[m].re / nf;
        } else {
            cos[m] = 2.0 * buf[m].re / nf;
            sin[m] = -2.0 * buf[m].im / nf;
        }
    }
    Ok(HarmonicExtension { cos, sin })
}

impl HarmonicExtension {
    pub fn constant(c: f64) -> Self {
        Self { cos: vec![c], sin: vec![0.0] }
    }

    pub fn eval(&self, r: f64, theta: f64) -> PolarJet {
        let mut j = PolarJet { f: self.cos[0], ..Default::default() };
        for m in 1..self.cos.len() {
            let mf = m as f64;
            let (s, c) = (mf * theta).sin_cos();
            let rm = r.powi(m as i32);
            let rm1 = mf * r.powi(m as i32 - 1);
            let rm2 = if m >= 2 { mf * (mf - 1.0) * r.powi(m as i32 - 2) } else { 0.0 };
            let ang = self.cos[m] * c + self.sin[m] * s;
            let dang = mf * (-self.cos[m] * s + self.sin[m] * c);
            j.f += rm * ang;
            j.r += rm1 * ang;
            j.rr += rm2 * ang;
            j.t += rm * dang;
            j.rt += rm1 * dang;
            j.tt += -mf * mf * rm * ang;
        }
        j
    }

    /// The extension sampled on every node of a polar grid.
    pub fn sample(&self, grid: &PolarGrid) -> ScalarField {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.n_r {
            for k in 0..grid.n_theta {
                values.push(self.eval(grid.r(j), grid.theta(k)).f);
            }
        }
        ScalarField { grid: Grid::Polar(*grid), values }
    }
}

/// Compatible reference map of the unit disk onto a disk of radius `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diffeo {
    pub jet: HarmonicExtension,
    pub cutoff: Cutoff,
    pub scale: f64,
}

pub fn build_diffeo(jet: &[f64], cutoff: Cutoff, scale: f64) -> Result<Diffeo> {
    if !(cutoff.rho1 >= 0.0 && cutoff.rho2 > cutoff.rho1 && cutoff.rho2 < 1.0) {
        return Err(Error::InvalidSeed(format!("bad cutoff radii {cutoff:?}")));
    }
    let map = Diffeo { jet: extend_boundary_function(jet)?, cutoff, scale };
    let min_jacobian = map.min_jacobian(64, 128);
    if !(min_jacobian > 0.0) {
        return Err(Error::NotDiffeo { min_jacobian });
    }
    Ok(map)
}

impl Diffeo {
    /// Radial displacement `a = zeta(rho) rho^2 g / 2` and its polar
    /// derivatives, so that `phi = scale (r - a) e_r`.
    fn displacement(&self, r: f64, theta: f64) -> PolarJet {
        let rho = 1.0 - r;
        let (z, z1, z2) = self.cutoff.eval(rho);
        if z == 0.0 && z1 == 0.0 {
            return PolarJet::default();
        }
        let g = self.jet.eval(r, theta);
        // q(rho) = zeta rho^2 / 2 as a function of r: q_r = -q_rho.
        let q = 0.5 * z * rho * rho;
        let q_rho = z * rho + 0.5 * z1 * rho * rho;
        let q_rhorho = z + 2.0 * z1 * rho + 0.5 * z2 * rho * rho;
        let (q_r, q_rr) = (-q_rho, q_rhorho);
        PolarJet {
            f: q * g.f,
            r: q_r * g.f + q * g.r,
            t: q * g.t,
            rr: q_rr * g.f + 2.0 * q_r * g.r + q * g.rr,
            rt: q_r * g.t + q * g.rt,
            tt: q * g.tt,
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let theta = x[1].atan2(x[0]);
        let a = self.displacement(r, theta);
        let s = self.scale * (r - a.f) / r;
        [s * x[0], s * x[1]]
    }

    /// Jacobian determinant `scale^2 (1 - a_r)(r - a) / r`.
    pub fn jacobian(&self, x: [f64; 2]) -> f64 {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return self.scale * self.scale;
        }
        let a = self.displacement(r, x[1].atan2(x[0]));
        self.scale * self.scale * (1.0 - a.r) * (r - a.f) / r
    }

    /// Smallest Jacobian over an `n_r` by `n_theta` polar sample, divided by
    /// `scale^2`.
    pub fn min_jacobian(&self, n_r: usize, n_theta: usize) -> f64 {
        let mut m = f64::INFINITY;
        for j in 0..=n_r {
            let r = j as f64 / n_r as f64;
            for k in 0..n_theta {
                let t = TAU * k as f64 / n_theta as f64;
                m = m.min(self.jacobian([r * t.cos(), r * t.sin()]));
            }
        }
        m / (self.scale * self.scale)
    }

    /// Radial profile `phi(r) = scale (r - a(r))` of a rotationally symmetric
    /// map (constant jet).
    pub fn radial(&self, r: f64) -> f64 {
        self.scale * (r - self.displacement(r, 0.0).f)
    }

    /// Analytic normal jet `n . d^2 phi (n, n)` on the unit circle, in units
    /// of the unit disk.
    pub fn normal_jet(&self, theta: f64) -> f64 {
        // Along n = -e_r, n . phi = -(r - a); d^2/drho^2 of that is a_rr.
        self.displacement(1.0, theta).rr
    }
}

/// Jet errors of a sampled reference map along the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JetReport {
    /// `max |phi - scale x|` on the circle.
    pub value: f64,
    /// `max |D phi - scale I|` on the circle (one-sided radial stencil).
    pub first: f64,
    /// `max |n . d^2 phi (n, n) - scale h|` on the circle.
    pub second: f64,
    /// Smallest Jacobian determinant over all nodes, divided by `scale^2`.
    pub min_jacobian: f64,
}

/// Check the boundary jet of a map sampled on a polar grid against the
/// required normal jet `h` (one sample per boundary node).
pub fn verify_jet(
    map: impl Fn([f64; 2]) -> [f64; 2],
    h: &[f64],
    grid: &PolarGrid,
    scale: f64,
) -> Result<JetReport> {
    if h.len() != grid.n_theta {
        return Err(Error::GridMismatch(format!(
            "{} jet samples for {} boundary nodes",
            h.len(),
            grid.n_theta
        )));
    }
    let n = grid.len();
    let mut p1 = vec![0.0; n];
    let mut p2 = vec![0.0; n];
    for j in 0..grid.n_r {
        for k in 0..grid.n_theta {
            let p = map(grid.point(j, k));
            p1[grid.idx(j, k)] = p[0] / scale;
            p2[grid.idx(j, k)] = p[1] / scale;
        }
    }
    let b = grid.boundary_ring();
    let mut rep = JetReport { value: 0.0, first: 0.0, second: 0.0, min_jacobian: f64::INFINITY };
    for j in 0..grid.n_r {
        let r = grid.r(j);
        for k in 0..grid.n_theta {
            let (t, _) = (grid.theta(k), ());
            let d1 = crate::grid::polar_derivs(grid, &p1, j, k);
            let d2 = crate::grid::polar_derivs(grid, &p2, j, k);
            // Columns D_{e_r} phi and D_{e_theta} phi in Cartesian components.
            let cr = [d1.r, d2.r];
            let ct = [d1.t / r, d2.t / r];
            let jac = cr[0] * ct[1] - cr[1] * ct[0];
            rep.min_jacobian = rep.min_jacobian.min(jac);
            if j == b {
                let (s, c) = t.sin_cos();
                let x = grid.point(j, k);
                rep.value = rep.value.max((p1[grid.idx(j, k)] - x[0]).hypot(p2[grid.idx(j, k)] - x[1]));
                // D phi e_r should be e_r and D phi e_theta should be e_theta.
                let e1 = (cr[0] - c).abs().max((cr[1] - s).abs());
                let e2 = (ct[0] + s).abs().max((ct[1] - c).abs());
                rep.first = rep.first.max(e1.max(e2));
                let nn = -(c * d1.rr + s * d2.rr);
                rep.second = rep.second.max((nn - h[k]).abs());
            }
        }
    }
    Ok(rep)
}

/// Compatible radial lens seed on `n` nodes: `phi = R0 (r - a(r))` with the
/// constant required jet, `u = w(phi)`.
pub fn radial_lens_seed(profile: &LensProfile, n: usize, cutoff: Cutoff) -> Result<RadialState> {
    let grid = RadialGrid::lens(n)?;
    let h0 = profile.boundary_mean_curvature();
    let jet = required_jet(&[h0], profile.angle, profile.radius);
    let map = build_diffeo(&jet, cutoff, profile.radius)?;
    let phi: Vec<f64> = grid.nodes().iter().map(|&r| map.radial(r)).collect();
    if phi.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidSeed("reference map folds".into()));
    }
    let mut u: Vec<f64> = phi.iter().map(|&p| profile.w(p)).collect();
    u[n - 1] = 0.0;
    RadialState::new(grid, u, phi)
}

/// Radial lens seed with the identity reference map (not compatible; the
/// contact line starts with a kink in its velocity).
pub fn radial_lens_seed_identity(profile: &LensProfile, n: usize) -> Result<RadialState> {
    let grid = RadialGrid::lens(n)?;
    let phi: Vec<f64> = grid.nodes().iter().map(|&r| profile.radius * r).collect();
    let mut u: Vec<f64> = phi.iter().map(|&p| profile.w(p)).collect();
    u[n - 1] = 0.0;
    RadialState::new(grid, u, phi)
}

/// Surface made of the graph, its mirror image in the plane and the plane
/// outside the contact line, as a triangle mesh with shared junction nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleJunction {
    pub vertices: Vec<Vec3>,
    /// 0-based triangles.
    pub faces: Vec<[usize; 3]>,
    pub junction: Vec<usize>,
    /// Pairwise angles (degrees) between the three sheet conormals at every
    /// junction node: (graph, mirror), (graph, plane), (mirror, plane).
    pub angles: Vec<[f64; 3]>,
}

impl TripleJunction {
    pub fn to_text(&self) -> String {
        let mut s = String::from("mcm-tj v1\n");
        for v in &self.vertices {
            s.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
        }
        for f in &self.faces {
            s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        s
    }

    pub fn max_angle_deviation(&self, target_deg: [f64; 3]) -> f64 {
        self.angles
            .iter()
            .flat_map(|a| (0..3).map(move |i| (a[i] - target_deg[i]).abs()))
            .fold(0.0, f64::max)
    }
}

/// Rings of points `(x, y, z)` from the pole outwards, the last ring on the
/// contact line, plus the outward derivative `F_r` at each contact node.
struct SurfaceRings {
    rings: Vec<Vec<Vec3>>,
    dr_contact: Vec<Vec3>,
}

fn rings_from_snapshot(snap: &Snapshot, n_theta: usize) -> Result<SurfaceRings> {
    match &snap.data {
        SnapshotData::Radial { grid, u, phi } => {
            if !grid.is_lens() {
                return Err(Error::Unsupported("triple junction needs a lens snapshot".into()));
            }
            let n = grid.n;
            let h = grid.h;
            let ur = one_sided_d1(u, h, true);
            let pr = one_sided_d1(phi, h, true);
            let mut rings = Vec::with_capacity(n);
            for j in 0..n {
                rings.push(
                    (0..n_theta)
                        .map(|k| {
                            let t = TAU * k as f64 / n_theta as f64;
                            [phi[j] * t.cos(), phi[j] * t.sin(), u[j]]
                        })
                        .collect(),
                );
            }
            let dr_contact = (0..n_theta)
                .map(|k| {
                    let t = TAU * k as f64 / n_theta as f64;
                    [pr * t.cos(), pr * t.sin(), ur]
                })
                .collect();
            Ok(SurfaceRings { rings, dr_contact })
        }
        SnapshotData::Planar { grid, phi1, phi2, u } => {
            let mut rings = Vec::with_capacity(grid.n_r);
            for j in 0..grid.n_r {
                rings.push(
                    (0..grid.n_theta)
                        .map(|k| {
                            let i = grid.idx(j, k);
                            [phi1[i], phi2[i], u[i]]
                        })
                        .collect(),
                );
            }
            let d = |f: &[f64], k: usize| polar_outer_dr(grid, f, k as isize);
            let dr_contact = (0..grid.n_theta).map(|k| [d(phi1, k), d(phi2, k), d(u, k)]).collect();
            Ok(SurfaceRings { rings, dr_contact })
        }
    }
}

fn angle_deg(a: Vec3, b: Vec3) -> f64 {
    (dot3(a, b) / (norm3(a) * norm3(b))).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Build the reflected triple-junction surface of a lens snapshot. Radial
/// snapshots are swept over `n_theta` angles. The plane sheet extends to
/// `outer_scale` times the contact radius.
pub fn reflect_triple_junction(snap: &Snapshot, n_theta: usize, outer_scale: f64) -> Result<TripleJunction> {
    let sr = rings_from_snapshot(snap, n_theta)?;
    let nt = sr.rings[0].len();
    let nr = sr.rings.len();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();

    // Upper sheet: pole vertex, then rings.
    let pole_up = vertices.len();
    let z0 = sr.rings[0].iter().map(|p| p[2]).sum::<f64>() / nt as f64;
    vertices.push([0.0, 0.0, z0]);
    let mut up = Vec::with_capacity(nr);
    for ring in &sr.rings {
        let start = vertices.len();
        vertices.extend(ring.iter().copied());
        up.push(start);
    }
    let junction: Vec<usize> = (0..nt).map(|k| up[nr - 1] + k).collect();

    // Mirror sheet shares the junction ring.
    let pole_lo = vertices.len();
    vertices.push([0.0, 0.0, -z0]);
    let mut lo = Vec::with_capacity(nr);
    for ring in &sr.rings[..nr - 1] {
        let start = vertices.len();
        vertices.extend(ring.iter().map(|p| [p[0], p[1], -p[2]]));
        lo.push(start);
    }
    lo.push(up[nr - 1]);

    // Plane sheet: junction ring and a scaled outer ring.
    let outer = vertices.len();
    vertices.extend(sr.rings[nr - 1].iter().map(|p| [outer_scale * p[0], outer_scale * p[1], 0.0]));

    let fan = |faces: &mut Vec<[usize; 3]>, pole: usize, ring: usize, flip: bool| {
        for k in 0..nt {
            let (a, b) = (ring + k, ring + (k + 1) % nt);
            faces.push(if flip { [pole, b, a] } else { [pole, a, b] });
        }
    };
    let band = |faces: &mut Vec<[usize; 3]>, inner: usize, outer: usize, flip: bool| {
        for k in 0..nt {
            let k1 = (k + 1) % nt;
            let (a, b, c, d) = (inner + k, inner + k1, outer + k, outer + k1);
            if flip {
                faces.push([a, d, c]);
                faces.push([a, b, d]);
            } else {
                faces.push([a, c, d]);
                faces.push([a, d, b]);
            }
        }
    };
    fan(&mut faces, pole_up, up[0], false);
    fan(&mut faces, pole_lo, lo[0], true);
    for j in 0..nr - 1 {
        band(&mut faces, up[j], up[j + 1], false);
        band(&mut faces, lo[j], lo[j + 1], true);
    }
    band(&mut faces, up[nr - 1], outer, false);

    // Conormals at the contact line: into the graph (-F_r), into the mirror
    // image and outward along the plane.
    let angles = sr
        .dr_contact
        .iter()
        .map(|d| {
            let c_up = [-d[0], -d[1], -d[2]];
            let c_lo = [-d[0], -d[1], d[2]];
            let c_pl = [d[0], d[1], 0.0];
            [angle_deg(c_up, c_lo), angle_deg(c_up, c_pl), angle_deg(c_lo, c_pl)]
        })
        .collect();
    Ok(TripleJunction { vertices, faces, junction, angles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lens_profile_meets_plane_at_prescribed_angle() {
        let p = lens_profile(0.5, 1.0).unwrap();
        assert_eq!(p.w(1.0), 0.0);
        assert_relative_eq!(p.w_rho(1.0), -3f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(p.mean_curvature(1e-9), -2.0 * 3f64.sqrt(), epsilon = 1e-6);
        assert_relative_eq!(p.boundary_mean_curvature(), -5.0 * 3f64.sqrt() / 8.0, epsilon = 1e-14);
        assert!(lens_profile(0.5, 0.0).is_err());
        assert!(lens_profile(1.2, 1.0).is_err());
    }

    #[test]
    fn cutoff_is_c2() {
        let c = Cutoff::default();
        let (z, z1, z2) = c.eval(c.rho1 + 1e-12);
        assert_relative_eq!(z, 1.0, epsilon = 1e-9);
        assert!(z1.abs() < 1e-9 && z2.abs() < 1e-6);
        let (z, z1, z2) = c.eval(c.rho2 - 1e-12);
        assert!(z.abs() < 1e-9 && z1.abs() < 1e-9 && z2.abs() < 1e-6);
        let e = 1e-6;
        for &rho in &[0.07, 0.1, 0.15, 0.19] {
            let (a, a1, a2) = c.eval(rho);
            let (p, p1, _) = c.eval(rho + e);
            let (m, m1, _) = c.eval(rho - e);
            assert_relative_eq!((p - m) / (2.0 * e), a1, epsilon = 1e-6);
            assert_relative_eq!((p1 - m1) / (2.0 * e), a2, epsilon = 1e-4);
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn required_jet_of_unit_curvature() {
        let a = ContactAngle::new(0.5).unwrap();
        let h = required_jet(&[-1.0], a, 1.0);
        assert_relative_eq!(h[0], 8.0 / 3f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn harmonic_extension_of_cosine() {
        let n = 32;
        let samples: Vec<f64> = (0..n).map(|k| (3.0 * TAU * k as f64 / n as f64).cos()).collect();
        let ext = extend_boundary_function(&samples).unwrap();
        let j = ext.eval(0.5, 0.3);
        assert_relative_eq!(j.f, 0.125 * 0.9f64.cos(), epsilon = 1e-14);
        // Polar Laplacian vanishes.
        let (r, t) = (0.7, 1.1);
        let j = ext.eval(r, t);
        assert!((j.rr + j.r / r + j.tt / (r * r)).abs() < 1e-12);
    }

    #[test]
    fn diffeo_has_analytic_normal_jet() {
        let a = ContactAngle::new(0.5).unwrap();
        let h: Vec<f64> = (0..16).map(|k| 4.0 + (TAU * k as f64 / 16.0).sin()).collect();
        let d = build_diffeo(&h, Cutoff::default(), 1.0).unwrap();
        for (k, &hk) in h.iter().enumerate() {
            let t = TAU * k as f64 / 16.0;
            assert_relative_eq!(d.normal_jet(t), hk, epsilon = 1e-12);
            let x = [t.cos(), t.sin()];
            let p = d.eval(x);
            assert_relative_eq!(p[0], x[0], epsilon = 1e-15);
            assert_relative_eq!(p[1], x[1], epsilon = 1e-15);
        }
        let _ = a;
    }

    #[test]
    fn broken_map_shows_jet_error_of_size_h() {
        let a = ContactAngle::new(0.5).unwrap();
        let grid = PolarGrid::new(64, 32).unwrap();
        let h = required_jet(&vec![-1.0; 32], a, 1.0);
        let d = build_diffeo(&h, Cutoff::default(), 1.0).unwrap();
        let good = verify_jet(|x| d.eval(x), &h, &grid, 1.0).unwrap();
        assert!(good.second < 0.2, "{good:?}");
        // Doubling the displacement drops the factor 1/2 in f = rho^2 g / 2.
        let broken = verify_jet(
            |x| {
                let p = d.eval(x);
                [2.0 * p[0] - x[0], 2.0 * p[1] - x[1]]
            },
            &h,
            &grid,
            1.0,
        )
        .unwrap();
        assert!((broken.second - h[0]).abs() < 0.3 * h[0], "{broken:?}");
    }

    #[test]
    fn radial_seed_is_monotone_and_on_the_profile() {
        let p = lens_profile(0.5, 1.0).unwrap();
        let s = radial_lens_seed(&p, 64, Cutoff::default()).unwrap();
        assert_relative_eq!(s.phi[63], 1.0, epsilon = 1e-14);
        for j in 0..64 {
            assert_relative_eq!(s.u[j], p.w(s.phi[j]), epsilon = 1e-14);
        }
    }

    #[test]
    fn triple_junction_meets_at_120_degrees() {
        use crate::radial::{apply_bcs, OuterBc};
        let p = lens_profile(0.5, 1.0).unwrap();
        let mut s = radial_lens_seed(&p, 40, Cutoff::default()).unwrap();
        apply_bcs(&mut s, p.angle, OuterBc::Pinned).unwrap();
        let tj = reflect_triple_junction(&s.to_snapshot(0, 0.5), 24, 1.5).unwrap();
        assert!(tj.max_angle_deviation([120.0; 3]) < 1e-6);
        let text = tj.to_text();
        assert!(text.starts_with("mcm-tj v1\n"));
        let nv = text.lines().filter(|l| l.starts_with("v ")).count();
        for l in text.lines().filter(|l| l.starts_with("f ")) {
            for idx in l.split_whitespace().skip(1) {
                let i: usize = idx.parse().unwrap();
                assert!(i >= 1 && i <= nv);
            }
        }
    }
}
