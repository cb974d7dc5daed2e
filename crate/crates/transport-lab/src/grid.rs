//! Uniform grids on the truncated box `[-L, L]^d` and the time interval `[0, T]`.
//!
//! All modules share these grids: the noise time grid, the flow lattice, the
//! evaluation grid for fields and mean fields, and the solver mesh. Grid nodes
//! are `x_i = -L + i * dx` with `dx = 2L / n`, so a grid with `n` cells has
//! `n + 1` nodes per axis. Two-dimensional values are stored row-major with
//! the x index fastest.

use serde::{Deserialize, Serialize};

/// Point in space; d=1 uses component 0 and keeps component 1 at zero.
pub type Point = [f64; 2];

pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

/// Axis-aligned box `[-half_width, half_width]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub dim: usize,
    pub half_width: f64,
}

impl BoxDomain {
    pub fn new(dim: usize, half_width: f64) -> Self {
        assert!(dim == 1 || dim == 2, "only d=1 and d=2 are supported");
        assert!(half_width > 0.0);
        BoxDomain { dim, half_width }
    }

    pub fn contains(&self, x: Point) -> bool {
        (0..self.dim).all(|a| x[a].abs() <= self.half_width)
    }

    /// The box shrunken by `margin` on every side.
    pub fn shrunken(&self, margin: f64) -> BoxDomain {
        BoxDomain::new(self.dim, (self.half_width - margin).max(1e-12))
    }
}

/// Uniform spatial grid with `n` cells per axis on a [`BoxDomain`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub domain: BoxDomain,
    pub n: usize,
}

impl SpaceGrid {
    pub fn new(domain: BoxDomain, n: usize) -> Self {
        assert!(n >= 2);
        SpaceGrid { domain, n }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.domain.half_width / self.n as f64
    }

    /// Nodes per axis.
    pub fn nodes_per_axis(&self) -> usize {
        self.n + 1
    }

    /// Total number of nodes (`(n+1)^d`).
    pub fn node_count(&self) -> usize {
        match self.dim() {
            1 => self.n + 1,
            _ => (self.n + 1) * (self.n + 1),
        }
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.domain.half_width + i as f64 * self.spacing()
    }

    /// Node position by flat index.
    pub fn node(&self, idx: usize) -> Point {
        match self.dim() {
            1 => [self.axis_coord(idx), 0.0],
            _ => {
                let m = self.nodes_per_axis();
                [self.axis_coord(idx % m), self.axis_coord(idx / m)]
            }
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.node_count()).map(move |i| self.node(i))
    }

    /// Trapezoid quadrature of nodal values over the whole box.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.node_count());
        let dx = self.spacing();
        match self.dim() {
            1 => {
                let mut s = 0.0;
                for (i, v) in values.iter().enumerate() {
                    let w = if i == 0 || i == self.n { 0.5 } else { 1.0 };
                    s += w * v;
                }
                s * dx
            }
            _ => {
                let m = self.nodes_per_axis();
                let mut s = 0.0;
                for j in 0..m {
                    let wj = if j == 0 || j == self.n { 0.5 } else { 1.0 };
                    for i in 0..m {
                        let wi = if i == 0 || i == self.n { 0.5 } else { 1.0 };
                        s += wi * wj * values[j * m + i];
                    }
                }
                s * dx * dx
            }
        }
    }

    /// Trapezoid quadrature restricted to nodes inside `[lo, hi]` per axis.
    /// Used for `L^1_loc` norms over a compact subset; the subset boundary is
    /// snapped to grid nodes.
    pub fn integrate_window(&self, values: &[f64], lo: f64, hi: f64) -> f64 {
        assert_eq!(values.len(), self.node_count());
        let dx = self.spacing();
        let i_lo = ((lo + self.domain.half_width) / dx).ceil().max(0.0) as usize;
        let i_hi = (((hi + self.domain.half_width) / dx).floor() as usize).min(self.n);
        if i_hi <= i_lo {
            return 0.0;
        }
        match self.dim() {
            1 => {
                let mut s = 0.0;
                for i in i_lo..=i_hi {
                    let w = if i == i_lo || i == i_hi { 0.5 } else { 1.0 };
                    s += w * values[i];
                }
                s * dx
            }
            _ => {
                let m = self.nodes_per_axis();
                let mut s = 0.0;
                for j in i_lo..=i_hi {
                    let wj = if j == i_lo || j == i_hi { 0.5 } else { 1.0 };
                    for i in i_lo..=i_hi {
                        let wi = if i == i_lo || i == i_hi { 0.5 } else { 1.0 };
                        s += wi * wj * values[j * m + i];
                    }
                }
                s * dx * dx
            }
        }
    }

    /// Midpoint sample points (cell centers). With even `n` the centers avoid
    /// the origin, which keeps quadrature of integrable singularities sane.
    pub fn cell_centers(&self) -> Vec<Point> {
        let dx = self.spacing();
        let c = |i: usize| -self.domain.half_width + (i as f64 + 0.5) * dx;
        match self.dim() {
            1 => (0..self.n).map(|i| [c(i), 0.0]).collect(),
            _ => {
                let mut out = Vec::with_capacity(self.n * self.n);
                for j in 0..self.n {
                    for i in 0..self.n {
                        out.push([c(i), c(j)]);
                    }
                }
                out
            }
        }
    }

    pub fn cell_volume(&self) -> f64 {
        let dx = self.spacing();
        if self.dim() == 1 {
            dx
        } else {
            dx * dx
        }
    }
}

/// Uniform time grid `0 = t_0 < ... < t_K = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Self {
        assert!(horizon > 0.0 && steps >= 1);
        TimeGrid { horizon, steps }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.time(k))
    }
}

/// Composite trapezoid rule for a callable on `[a, b]` with `n` panels.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 1);
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + i as f64 * h);
    }
    s * h
}

/// Composite Simpson rule (n is rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes_cover_box() {
        let g = SpaceGrid::new(BoxDomain::new(1, 3.0), 6);
        assert_eq!(g.node_count(), 7);
        assert_eq!(g.node(0)[0], -3.0);
        assert_eq!(g.node(6)[0], 3.0);
        assert!((g.spacing() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let g = SpaceGrid::new(BoxDomain::new(1, 2.0), 8);
        let vals: Vec<f64> = g.nodes().map(|x| 3.0 * x[0] + 1.0).collect();
        assert!((g.integrate(&vals) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_window_matches_full_box() {
        let g = SpaceGrid::new(BoxDomain::new(1, 2.0), 8);
        let vals: Vec<f64> = g.nodes().map(|x| x[0].cos()).collect();
        let full = g.integrate(&vals);
        let windowed = g.integrate_window(&vals, -2.0, 2.0);
        assert!((full - windowed).abs() < 1e-14);
    }

    #[test]
    fn grid_2d_integration() {
        let g = SpaceGrid::new(BoxDomain::new(2, 1.0), 64);
        let vals: Vec<f64> = g.nodes().map(|p| p[0] * p[0] + p[1]).collect();
        // integral of x^2 over [-1,1]^2 is 4/3; y integrates to zero.
        assert!((g.integrate(&vals) - 4.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn cell_centers_avoid_origin_for_even_n() {
        let g = SpaceGrid::new(BoxDomain::new(1, 2.0), 64);
        assert!(g
            .cell_centers()
            .iter()
            .all(|p| p[0].abs() > 1e-12));
    }

    #[test]
    fn simpson_beats_trapezoid_on_smooth_integrand() {
        let exact = 2.0_f64.sin() - (-1.0_f64).sin();
        let t = trapezoid(|x| x.cos(), -1.0, 2.0, 64);
        let s = simpson(|x| x.cos(), -1.0, 2.0, 64);
        assert!((s - exact).abs() < (t - exact).abs());
        assert!((s - exact).abs() < 1e-7);
    }

    #[test]
    fn time_grid_endpoints() {
        let tg = TimeGrid::new(1.0, 4);
        let ts: Vec<f64> = tg.times().collect();
        assert_eq!(ts.len(), 5);
        assert_eq!(ts[0], 0.0);
        assert_eq!(ts[4], 1.0);
        assert!((tg.dt() - 0.25).abs() < 1e-15);
    }
}
