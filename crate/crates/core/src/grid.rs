//! Structured grids, sampled fields and finite-difference stencils.
//!
//! Two grids are supported. The radial grid samples a rotationally symmetric
//! function along a ray; on the lens variant the nodes are offset by half a
//! cell so that the pole is never a node and the contact circle `r = 1` is the
//! last node. The polar grid is the same staggered layout swept over `n_theta`
//! angles. Tensor components are always reported in the local orthonormal
//! polar frame `(e_r, e_theta)` of the node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialKind {
    /// Disk `[0, 1]` with the pole handled by symmetry ghosts.
    Lens,
    /// Annulus `[1, r_outer]` with boundaries at both ends.
    Exterior { r_outer: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub kind: RadialKind,
    pub n: usize,
    pub h: f64,
    pub r0: f64,
}

impl RadialGrid {
    pub fn lens(n: usize) -> Result<Self> {
        if n < 5 {
            return Err(Error::GridTooSmall(format!("radial lens grid needs >= 5 nodes, got {n}")));
        }
        let h = 1.0 / (n as f64 - 0.5);
        Ok(Self { kind: RadialKind::Lens, n, h, r0: 0.5 * h })
    }

    pub fn exterior(n: usize, r_outer: f64) -> Result<Self> {
        if n < 5 {
            return Err(Error::GridTooSmall(format!("radial exterior grid needs >= 5 nodes, got {n}")));
        }
        if !(r_outer > 1.0) {
            return Err(Error::GridMismatch(format!("outer radius {r_outer} must exceed 1")));
        }
        let h = (r_outer - 1.0) / (n as f64 - 1.0);
        Ok(Self { kind: RadialKind::Exterior { r_outer }, n, h, r0: 1.0 })
    }

    #[inline]
    pub fn r(&self, j: usize) -> f64 {
        self.r0 + j as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.r(j)).collect()
    }

    /// Index of the node on the contact circle `r = 1`.
    pub fn contact_index(&self) -> usize {
        match self.kind {
            RadialKind::Lens => self.n - 1,
            RadialKind::Exterior { .. } => 0,
        }
    }

    pub fn is_lens(&self) -> bool {
        matches!(self.kind, RadialKind::Lens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub n_r: usize,
    pub n_theta: usize,
    pub dr: f64,
}

impl PolarGrid {
    pub fn new(n_r: usize, n_theta: usize) -> Result<Self> {
        if n_r < 5 {
            return Err(Error::GridTooSmall(format!("polar grid needs n_r >= 5, got {n_r}")));
        }
        if n_theta < 8 || !n_theta.is_multiple_of(2) {
            return Err(Error::GridTooSmall(format!(
                "polar grid needs an even n_theta >= 8, got {n_theta}"
            )));
        }
        Ok(Self { n_r, n_theta, dr: 1.0 / (n_r as f64 - 0.5) })
    }

    #[inline]
    pub fn r(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dr
    }

    #[inline]
    pub fn dtheta(&self) -> f64 {
        std::f64::consts::TAU / self.n_theta as f64
    }

    #[inline]
    pub fn theta(&self, k: usize) -> f64 {
        k as f64 * self.dtheta()
    }

    #[inline]
    pub fn idx(&self, j: usize, k: usize) -> usize {
        j * self.n_theta + k
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn boundary_ring(&self) -> usize {
        self.n_r - 1
    }

    /// Reference position of node `(j, k)`.
    pub fn point(&self, j: usize, k: usize) -> [f64; 2] {
        let (r, t) = (self.r(j), self.theta(k));
        [r * t.cos(), r * t.sin()]
    }

    /// Value at ring `j` (which may be the ghost ring `-1`) and angle index `k`
    /// (taken modulo `n_theta`). The ghost ring is the first ring seen from
    /// across the pole.
    #[inline]
    pub fn at(&self, values: &[f64], j: isize, k: isize) -> f64 {
        let n = self.n_theta as isize;
        let (jj, kk) = if j < 0 { (-j - 1, k + n / 2) } else { (j, k) };
        values[self.idx(jj as usize, kk.rem_euclid(n) as usize)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Grid {
    Radial(RadialGrid),
    Polar(PolarGrid),
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Radial(g) => g.n,
            Grid::Polar(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Symmetric 2x2 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { xx: 1.0, xy: 0.0, yy: 1.0 };

    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn inverse(&self) -> Option<Sym2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Sym2::new(self.yy / d, -self.xy / d, self.xx / d))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let m = 0.5 * (self.xx + self.yy);
        let d = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        [m - d, m + d]
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    pub fn quad(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let sb = self.apply(b);
        a[0] * sb[0] + a[1] * sb[1]
    }

    /// `sum_ij a_ij b_ij`.
    pub fn contract(&self, other: &Sym2) -> f64 {
        self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy
    }

    /// Rotate components from a frame at angle `theta` to the fixed frame.
    pub fn rotate(&self, theta: f64) -> Sym2 {
        let (s, c) = theta.sin_cos();
        let xx = c * c * self.xx - 2.0 * c * s * self.xy + s * s * self.yy;
        let yy = s * s * self.xx + 2.0 * c * s * self.xy + c * c * self.yy;
        let xy = c * s * (self.xx - self.yy) + (c * c - s * s) * self.xy;
        Sym2::new(xx, xy, yy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub grid: Grid,
    pub values: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorField {
    pub grid: Grid,
    pub values: Vec<Sym2>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = match grid {
            Grid::Radial(g) => (0..g.n).map(|j| f([g.r(j), 0.0])).collect(),
            Grid::Polar(g) => (0..g.n_r)
                .flat_map(|j| (0..g.n_theta).map(move |k| (j, k)))
                .map(|(j, k)| f(g.point(j, k)))
                .collect(),
        };
        Self { grid, values }
    }
}

/// Weights of the third-order one-sided first derivative: at the last node
/// `f'(x_b) ~ sum_i W[i] f_{b-i} / h`.
pub const ONE_SIDED_D1: [f64; 4] = [11.0 / 6.0, -3.0, 1.5, -1.0 / 3.0];

/// One-sided first derivative at the end of `f` (`at_end`) or at its start.
#[inline]
pub fn one_sided_d1(f: &[f64], h: f64, at_end: bool) -> f64 {
    let n = f.len();
    let w = ONE_SIDED_D1;
    if at_end {
        (w[0] * f[n - 1] + w[1] * f[n - 2] + w[2] * f[n - 3] + w[3] * f[n - 4]) / h
    } else {
        -(w[0] * f[0] + w[1] * f[1] + w[2] * f[2] + w[3] * f[3]) / h
    }
}

/// Symmetry of a radial quantity under `r -> -r`, used for the pole ghost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// First and second `r`-derivatives on a radial grid. Interior nodes use
/// centered stencils, boundary nodes one-sided stencils (third order for the
/// first derivative, second order for the second), and the
/// lens pole a ghost node mirrored with the given parity.
pub fn radial_d1_d2(grid: &RadialGrid, f: &[f64], parity: Parity) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n;
    let h = grid.h;
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    let ghost = match parity {
        Parity::Even => f[0],
        Parity::Odd => -f[0],
    };
    for j in 0..n {
        let left = if j > 0 {
            Some(f[j - 1])
        } else if grid.is_lens() {
            Some(ghost)
        } else {
            None
        };
        if j + 1 < n {
            if let Some(fl) = left {
                d1[j] = (f[j + 1] - fl) / (2.0 * h);
                d2[j] = (f[j + 1] - 2.0 * f[j] + fl) / (h * h);
            } else {
                d1[j] = one_sided_d1(f, h, false);
                d2[j] = (2.0 * f[j] - 5.0 * f[j + 1] + 4.0 * f[j + 2] - f[j + 3]) / (h * h);
            }
        } else {
            d1[j] = one_sided_d1(f, h, true);
            d2[j] = (2.0 * f[j] - 5.0 * f[j - 1] + 4.0 * f[j - 2] - f[j - 3]) / (h * h);
        }
    }
    (d1, d2)
}

/// Raw coordinate derivatives of a polar-grid field at one node.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolarDerivs {
    pub r: f64,
    pub t: f64,
    pub rr: f64,
    pub rt: f64,
    pub tt: f64,
}

impl PolarDerivs {
    /// Gradient in the local frame `(e_r, e_theta)`.
    pub fn frame_gradient(&self, r: f64) -> [f64; 2] {
        [self.r, self.t / r]
    }

    /// Euclidean Hessian in the local frame `(e_r, e_theta)`.
    pub fn frame_hessian(&self, r: f64) -> Sym2 {
        Sym2::new(self.rr, self.rt / r - self.t / (r * r), self.r / r + self.tt / (r * r))
    }
}

/// Radial one-sided derivative at the outer ring along angle `k`.
#[inline]
pub fn polar_outer_dr(g: &PolarGrid, f: &[f64], k: isize) -> f64 {
    let b = g.boundary_ring() as isize;
    let w = ONE_SIDED_D1;
    (w[0] * g.at(f, b, k) + w[1] * g.at(f, b - 1, k) + w[2] * g.at(f, b - 2, k) + w[3] * g.at(f, b - 3, k))
        / g.dr
}

pub fn polar_derivs(g: &PolarGrid, f: &[f64], j: usize, k: usize) -> PolarDerivs {
    let (ji, ki) = (j as isize, k as isize);
    let dr = g.dr;
    let dt = g.dtheta();
    let c = g.at(f, ji, ki);
    let t = (g.at(f, ji, ki + 1) - g.at(f, ji, ki - 1)) / (2.0 * dt);
    let tt = (g.at(f, ji, ki + 1) - 2.0 * c + g.at(f, ji, ki - 1)) / (dt * dt);
    if j + 1 < g.n_r {
        let r = (g.at(f, ji + 1, ki) - g.at(f, ji - 1, ki)) / (2.0 * dr);
        let rr = (g.at(f, ji + 1, ki) - 2.0 * c + g.at(f, ji - 1, ki)) / (dr * dr);
        let rt = (g.at(f, ji + 1, ki + 1) - g.at(f, ji + 1, ki - 1) - g.at(f, ji - 1, ki + 1)
            + g.at(f, ji - 1, ki - 1))
            / (4.0 * dr * dt);
        PolarDerivs { r, t, rr, rt, tt }
    } else {
        let r = polar_outer_dr(g, f, ki);
        let rr = (2.0 * c - 5.0 * g.at(f, ji - 1, ki) + 4.0 * g.at(f, ji - 2, ki)
            - g.at(f, ji - 3, ki))
            / (dr * dr);
        let rt = (polar_outer_dr(g, f, ki + 1) - polar_outer_dr(g, f, ki - 1)) / (2.0 * dt);
        PolarDerivs { r, t, rr, rt, tt }
    }
}

/// Gradient of a scalar field in the local polar frame of each node.
pub fn fd_gradient(field: &ScalarField) -> Result<VectorField> {
    check_len(field)?;
    let values = match field.grid {
        Grid::Radial(g) => {
            let (d1, _) = radial_d1_d2(&g, &field.values, Parity::Even);
            d1.into_iter().map(|d| [d, 0.0]).collect()
        }
        Grid::Polar(g) => (0..g.n_r)
            .flat_map(|j| (0..g.n_theta).map(move |k| (j, k)))
            .map(|(j, k)| polar_derivs(&g, &field.values, j, k).frame_gradient(g.r(j)))
            .collect(),
    };
    Ok(VectorField { grid: field.grid, values })
}

/// Euclidean Hessian of a scalar field in the local polar frame of each node.
pub fn fd_hessian(field: &ScalarField) -> Result<TensorField> {
    check_len(field)?;
    let values = match field.grid {
        Grid::Radial(g) => {
            let (d1, d2) = radial_d1_d2(&g, &field.values, Parity::Even);
            (0..g.n).map(|j| Sym2::new(d2[j], 0.0, d1[j] / g.r(j))).collect()
        }
        Grid::Polar(g) => (0..g.n_r)
            .flat_map(|j| (0..g.n_theta).map(move |k| (j, k)))
            .map(|(j, k)| polar_derivs(&g, &field.values, j, k).frame_hessian(g.r(j)))
            .collect(),
    };
    Ok(TensorField { grid: field.grid, values })
}

fn check_len(field: &ScalarField) -> Result<()> {
    if field.values.len() != field.grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} values for a grid of {} nodes",
            field.values.len(),
            field.grid.len()
        )));
    }
    Ok(())
}

/// Finite-difference weights for derivatives `0..=m` at `x0` from arbitrary
/// nodes `xs` (Fornberg's recursion). `w[d][i]` multiplies `f(xs[i])`.
pub fn fornberg_weights(x0: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    if n == 0 {
        return c;
    }
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Observed convergence orders `log2(e_k / e_{k+1})` for a halving sequence.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lens_grid_puts_contact_circle_on_last_node() {
        let g = RadialGrid::lens(40).unwrap();
        assert_relative_eq!(g.r(39), 1.0, epsilon = 1e-14);
        assert_relative_eq!(g.r(0), 0.5 * g.h, epsilon = 1e-15);
    }

    #[test]
    fn stencils_are_exact_on_quadratics() {
        let g = RadialGrid::exterior(9, 3.0).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|r| 2.0 * r * r - r + 0.5).collect();
        let (d1, d2) = radial_d1_d2(&g, &f, Parity::Even);
        for j in 0..g.n {
            assert_relative_eq!(d1[j], 4.0 * g.r(j) - 1.0, epsilon = 1e-11);
            assert_relative_eq!(d2[j], 4.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn one_sided_first_derivative_is_exact_on_cubics() {
        let h = 0.1;
        let f: Vec<f64> = (0..6).map(|i| (i as f64 * h).powi(3) - 2.0 * (i as f64 * h)).collect();
        assert_relative_eq!(one_sided_d1(&f, h, false), -2.0, epsilon = 1e-12);
        let x = 5.0 * h;
        assert_relative_eq!(one_sided_d1(&f, h, true), 3.0 * x * x - 2.0, epsilon = 1e-12);
    }

    #[test]
    fn pole_ghost_respects_parity() {
        let g = RadialGrid::lens(20).unwrap();
        let even: Vec<f64> = g.nodes().iter().map(|r| r * r).collect();
        let odd: Vec<f64> = g.nodes().iter().map(|r| r * r * r).collect();
        let (e1, e2) = radial_d1_d2(&g, &even, Parity::Even);
        let (o1, o2) = radial_d1_d2(&g, &odd, Parity::Odd);
        assert_relative_eq!(e1[0], 2.0 * g.r(0), epsilon = 1e-13);
        assert_relative_eq!(e2[0], 2.0, epsilon = 1e-10);
        let r = g.r(0);
        assert_relative_eq!(o1[0], 3.0 * r * r + g.h * g.h, epsilon = 1e-12);
        assert_relative_eq!(o2[0], 6.0 * r, epsilon = 1e-10);
    }

    #[test]
    fn fornberg_matches_known_stencils() {
        let w = fornberg_weights(0.0, &[0.0, 1.0, 2.0, 3.0], 1);
        for (a, b) in w[1].iter().zip([-11.0 / 6.0, 3.0, -1.5, 1.0 / 3.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-13);
        }
        let w = fornberg_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
    }

    proptest::proptest! {
        #[test]
        fn fornberg_is_exact_on_polynomials(
            x0 in -1.0f64..1.0,
            gaps in proptest::collection::vec(0.1f64..0.5, 6),
            c in proptest::collection::vec(-2.0f64..2.0, 5),
        ) {
            let mut xs = vec![-1.0];
            for g in &gaps[..5] {
                xs.push(xs.last().unwrap() + g);
            }
            let f = |x: f64| c.iter().rev().fold(0.0, |a, &k| a * x + k);
            let d3 = |x: f64| 6.0 * c[3] + 24.0 * c[4] * x;
            let w = fornberg_weights(x0, &xs, 3);
            let approx: f64 = w[3].iter().zip(&xs).map(|(a, &x)| a * f(x)).sum();
            proptest::prop_assert!((approx - d3(x0)).abs() < 1e-7 * (1.0 + d3(x0).abs()));
        }
    }

    #[test]
    fn wrong_length_is_grid_mismatch() {
        let g = Grid::Radial(RadialGrid::lens(10).unwrap());
        assert!(matches!(ScalarField::new(g, vec![0.0; 3]), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn polar_hessian_of_quadratic_is_constant() {
        let g = PolarGrid::new(12, 64).unwrap();
        let f = ScalarField::from_fn(Grid::Polar(g), |p| p[0] * p[0] + 3.0 * p[0] * p[1]);
        let hess = fd_hessian(&f).unwrap();
        for j in 0..g.n_r {
            for k in 0..g.n_theta {
                let hc = hess.values[g.idx(j, k)].rotate(g.theta(k));
                // Angular differences are not exact on quadratics.
                assert!((hc.xx - 2.0).abs() < 0.02, "{hc:?}");
                assert!((hc.xy - 3.0).abs() < 0.02, "{hc:?}");
                assert!(hc.yy.abs() < 0.02, "{hc:?}");
            }
        }
    }
}
