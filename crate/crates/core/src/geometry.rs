//! Pointwise and field-level geometry of graphs and parametrized surfaces.
//!
//! A graph `y -> [y, w(y)]` has `v = sqrt(1 + |Dw|^2)`, inverse metric
//! `g^{ij} = delta_ij - w_i w_j / v^2`, second fundamental form
//! `h_ij = w_ij / v`, mean curvature `H = g^{ij} h_ij`, upward normal
//! `N = [-Dw, 1] / v` and tangential field `omega = Dw / v`.
//!
//! A parametrized surface `F = [phi, u]` over a two-dimensional reference
//! domain has `g_ij = <F_i, F_j>` and the normal `N = F_1 x F_2 / |F_1 x F_2|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{fd_gradient, fd_hessian, Grid, ScalarField, Sym2};

pub type Vec3 = [f64; 3];

/// Prescribed contact angle: `beta = <N, e_3>` on the contact line and
/// `beta0 = sqrt(1 - beta^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactAngle {
    pub beta: f64,
    pub beta0: f64,
}

impl ContactAngle {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidAngle(beta));
        }
        Ok(Self { beta, beta0: (1.0 - beta * beta).sqrt() })
    }

    /// Slope `d_n w` on the contact line, with `n` the inner normal.
    pub fn slope(&self) -> f64 {
        self.beta0 / self.beta
    }

    /// `v` on the contact line.
    pub fn boundary_v(&self) -> f64 {
        1.0 / self.beta
    }
}

#[inline]
pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `v = sqrt(1 + |p|^2)`.
#[inline]
pub fn graph_v(p: [f64; 2]) -> f64 {
    (1.0 + dot2(p, p)).sqrt()
}

/// Inverse metric of a graph with gradient `p`.
pub fn metric_inverse(p: [f64; 2]) -> Sym2 {
    let v2 = 1.0 + dot2(p, p);
    Sym2::new(1.0 - p[0] * p[0] / v2, -p[0] * p[1] / v2, 1.0 - p[1] * p[1] / v2)
}

/// Graph quantities at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphPoint {
    pub v: f64,
    pub ginv: Sym2,
    pub h: Sym2,
    pub mean_curvature: f64,
    pub normal: Vec3,
    pub omega: [f64; 2],
}

impl GraphPoint {
    /// Shape operator `S = g^{-1} h` as a row-major 2x2 matrix.
    pub fn shape_operator(&self) -> [[f64; 2]; 2] {
        let (a, h) = (self.ginv, self.h);
        [
            [a.xx * h.xx + a.xy * h.xy, a.xx * h.xy + a.xy * h.yy],
            [a.xy * h.xx + a.yy * h.xy, a.xy * h.xy + a.yy * h.yy],
        ]
    }

    /// Principal curvatures (eigenvalues of the shape operator), ascending.
    pub fn principal_curvatures(&self) -> [f64; 2] {
        let s = self.shape_operator();
        let tr = s[0][0] + s[1][1];
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        [0.5 * tr - disc, 0.5 * tr + disc]
    }

    /// `|h|_g^2 = g^{ik} g^{jl} h_ij h_kl`.
    pub fn h_norm2(&self) -> f64 {
        let s = self.shape_operator();
        s[0][0] * s[0][0] + s[0][1] * s[1][0] + s[1][0] * s[0][1] + s[1][1] * s[1][1]
    }
}

/// Graph geometry from the gradient and Euclidean Hessian of `w` expressed in
/// any orthonormal frame.
pub fn graph_point(grad: [f64; 2], hess: Sym2) -> GraphPoint {
    let v = graph_v(grad);
    let ginv = metric_inverse(grad);
    let h = Sym2::new(hess.xx / v, hess.xy / v, hess.yy / v);
    GraphPoint {
        v,
        ginv,
        h,
        mean_curvature: ginv.contract(&h),
        normal: [-grad[0] / v, -grad[1] / v, 1.0 / v],
        omega: [grad[0] / v, grad[1] / v],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphGeometry {
    pub grid: Grid,
    pub angle: ContactAngle,
    pub points: Vec<GraphPoint>,
}

impl GraphGeometry {
    pub fn mean_curvature(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_curvature).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.v).collect()
    }
}

/// Graph geometry of a sampled height function at every node.
pub fn graph_geometry(w: &ScalarField, angle: ContactAngle) -> Result<GraphGeometry> {
    let grad = fd_gradient(w)?;
    let hess = fd_hessian(w)?;
    let mut points = Vec::with_capacity(w.values.len());
    for (node, (g, h)) in grad.values.iter().zip(&hess.values).enumerate() {
        let p = graph_point(*g, *h);
        if !p.mean_curvature.is_finite() || !p.v.is_finite() {
            return Err(Error::DegenerateMetric { node });
        }
        points.push(p);
    }
    Ok(GraphGeometry { grid: w.grid, angle, points })
}

/// Induced metric `g_ij = <F_i, F_j>` of a parametrization with tangent
/// vectors `f1, f2`.
pub fn param_metric(f1: Vec3, f2: Vec3) -> Sym2 {
    Sym2::new(dot3(f1, f1), dot3(f1, f2), dot3(f2, f2))
}

/// Inverse of the induced metric, or `DegenerateMetric` when it is singular.
pub fn param_metric_inverse(f1: Vec3, f2: Vec3, node: usize) -> Result<Sym2> {
    let g = param_metric(f1, f2);
    let tol = 1e-14 * (g.xx * g.yy).max(f64::MIN_POSITIVE);
    if !(g.det() > tol) {
        return Err(Error::DegenerateMetric { node });
    }
    g.inverse().ok_or(Error::DegenerateMetric { node })
}

/// Unnormalized normal `N~ = [J(D phi, D u), J_phi]`. For two-dimensional
/// reference domains this is the cross product `F_1 x F_2`, whose last
/// component is `det D phi`.
pub fn vector_product(f1: Vec3, f2: Vec3) -> Vec3 {
    let jphi = f1[0] * f2[1] - f1[1] * f2[0];
    let j1 = f1[1] * f2[2] - f1[2] * f2[1];
    let j2 = f1[2] * f2[0] - f1[0] * f2[2];
    [j1, j2, jphi]
}

/// Unit normal `N = N~ / |N~|`.
pub fn unit_normal(f1: Vec3, f2: Vec3) -> Vec3 {
    let n = vector_product(f1, f2);
    let l = norm3(n);
    [n[0] / l, n[1] / l, n[2] / l]
}

/// `B = beta^2 |J|^2 - beta0^2 J_phi^2`, which vanishes exactly when
/// `N^3 = +-beta`.
pub fn angle_operator(f1: Vec3, f2: Vec3, angle: ContactAngle) -> f64 {
    let n = vector_product(f1, f2);
    angle.beta * angle.beta * (n[0] * n[0] + n[1] * n[1]) - angle.beta0 * angle.beta0 * n[2] * n[2]
}

/// Pointwise contact-angle residual `N^3 - beta`.
pub fn angle_residual(f1: Vec3, f2: Vec3, angle: ContactAngle) -> f64 {
    unit_normal(f1, f2)[2] - angle.beta
}

/// Orthogonality residual `<D_tau phi, D_n phi>` of the planar part of the
/// parametrization along the reference boundary.
pub fn orthogonality(dphi_tau: [f64; 2], dphi_n: [f64; 2]) -> f64 {
    dot2(dphi_tau, dphi_n)
}

/// Second fundamental form of the image graph in physical coordinates, from
/// the reference Jacobian `dphi` (row `i` is `D_i phi`) and the reference
/// form `a_ij = <F_ij, N>`: `h = (D phi)^{-T} a (D phi)^{-1}`, taking
/// `N^3 > 0`. The returned form is scaled so that it matches
/// `h_ij = w_ij / v` of the graph.
pub fn param_graph_h(dphi: [[f64; 2]; 2], a: Sym2) -> Option<Sym2> {
    let det = dphi[0][0] * dphi[1][1] - dphi[0][1] * dphi[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    // a = P h P^T with P[i][a] = d_i phi^a, so h = Q a Q^T with Q = P^{-1}.
    let q = [
        [dphi[1][1] / det, -dphi[0][1] / det],
        [-dphi[1][0] / det, dphi[0][0] / det],
    ];
    let am = [[a.xx, a.xy], [a.xy, a.yy]];
    let mut h = [[0.0; 2]; 2];
    for (ai, row) in h.iter_mut().enumerate() {
        for (bi, out) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += q[ai][i] * am[i][j] * q[bi][j];
                }
            }
            *out = s;
        }
    }
    Some(Sym2::new(h[0][0], 0.5 * (h[0][1] + h[1][0]), h[1][1]))
}
