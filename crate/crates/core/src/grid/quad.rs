//! Composite trapezoidal quadrature over the grid.

use crate::grid::{BoundaryTrace, Field, Grid, SpatialField};

/// Which boundary nodes a boundary integral runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMask {
    All,
    Gamma0,
}

/// Trapezoid weights for `len` nodes spaced `step` apart.
pub fn trapezoid_weights(len: usize, step: f64) -> Vec<f64> {
    (0..len)
        .map(|i| {
            if i == 0 || i + 1 == len {
                0.5 * step
            } else {
                step
            }
        })
        .collect()
}

pub(crate) fn space_weights(grid: &Grid) -> Vec<f64> {
    let shape = grid.shape();
    let steps = grid.steps();
    let wx = trapezoid_weights(shape[0], steps[0]);
    if grid.dim() == 1 {
        return wx;
    }
    let wy = trapezoid_weights(shape[1], steps[1]);
    let mut w = Vec::with_capacity(grid.nspace());
    for &b in &wy {
        w.extend(wx.iter().map(|&a| a * b));
    }
    w
}

pub(crate) fn time_weights(grid: &Grid) -> Vec<f64> {
    trapezoid_weights(grid.nt(), grid.tau())
}

/// ∫₀ᵀ∫_Ω f dx dt.
pub fn integrate_spacetime(f: &Field) -> f64 {
    let grid = f.grid();
    let ws = space_weights(grid);
    let wt = time_weights(grid);
    wt.iter()
        .enumerate()
        .map(|(level, &w)| w * dot(&ws, f.level(level)))
        .sum()
}

/// ∫_Ω f(·, t_level) dx.
pub fn integrate_space_at(f: &Field, level: usize) -> f64 {
    dot(&space_weights(f.grid()), f.level(level))
}

/// ∫_Ω f dx for a time-independent field.
pub fn integrate_space(f: &SpatialField) -> f64 {
    dot(&space_weights(f.grid()), f.values())
}

/// ∫₀ᵀ∫_{Σ} g dσ dt over the masked boundary nodes. In 1D the surface
/// measure is counting measure at the endpoints.
pub fn integrate_boundary_time(trace: &BoundaryTrace, tau: f64, mask: BoundaryMask) -> f64 {
    let nodes = trace.partition().nodes();
    let ws: Vec<f64> = nodes
        .iter()
        .map(|n| match mask {
            BoundaryMask::All => n.weight,
            BoundaryMask::Gamma0 if n.in_gamma0 => n.weight,
            BoundaryMask::Gamma0 => 0.0,
        })
        .collect();
    let wt = trapezoid_weights(trace.nt(), tau);
    wt.iter()
        .enumerate()
        .map(|(level, &w)| w * dot(&ws, trace.level(level)))
        .sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gamma0, DomainSpec};
    use crate::grid::normal_derivative;
    use std::f64::consts::PI;

    fn grid1(nx: usize) -> Grid {
        let d = DomainSpec::interval(0.0, 1.0, -0.1, 1.5).unwrap();
        Grid::build(&d, nx, 0.9).unwrap()
    }

    #[test]
    fn exact_on_constants_and_linears() {
        let g = grid1(11);
        let one = Field::from_fn(&g, |_, _| 1.0);
        assert!((integrate_spacetime(&one) - 1.5).abs() < 1e-14);
        let x = Field::from_fn(&g, |x, _| x[0]);
        for level in [0, 3, g.nt() - 1] {
            assert!((integrate_space_at(&x, level) - 0.5).abs() < 1e-15);
        }
        let lin = Field::from_fn(&g, |x, t| 2.0 * x[0] - t + 1.0);
        let exact = 1.5 * (1.0 + 1.0) - 1.5 * 1.5 / 2.0;
        assert!((integrate_spacetime(&lin) - exact).abs() < 1e-13);
    }

    #[test]
    fn spacetime_sine_converges() {
        let t = 1.5f64;
        let exact = (2.0 / PI) * (1.0 - (PI * t).cos()) / PI;
        let err = |nx| {
            let g = grid1(nx);
            let f = Field::from_fn(&g, |x, t| (PI * x[0]).sin() * (PI * t).sin());
            (integrate_spacetime(&f) - exact).abs()
        };
        let ratio = err(41) / err(81);
        assert!((3.4..=4.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn boundary_integral_counts_endpoints_in_1d() {
        let g = grid1(11);
        let part = gamma0(&g);
        let f = Field::from_fn(&g, |x, _| x[0]);
        let tr = normal_derivative(&f, &part);
        // derivative is -1 at x=0 and +1 at x=1
        let all = integrate_boundary_time(&tr, g.tau(), BoundaryMask::All);
        let gam = integrate_boundary_time(&tr, g.tau(), BoundaryMask::Gamma0);
        assert!(all.abs() < 1e-12);
        assert!((gam - 1.5).abs() < 1e-12);
    }

    #[test]
    fn boundary_integral_2d_perimeter() {
        let d = DomainSpec::rectangle([0.0, 0.0], [2.0, 1.0], [-0.1, 0.5], 1.0).unwrap();
        let g = Grid::build(&d, 21, 0.5).unwrap();
        let part = std::sync::Arc::new(gamma0(&g));
        let one = BoundaryTrace::from_fn(&g, part, |_, _| 1.0);
        let all = integrate_boundary_time(&one, g.tau(), BoundaryMask::All);
        assert!((all - 6.0).abs() < 1e-12);
        // right, bottom and top faces
        let gam = integrate_boundary_time(&one, g.tau(), BoundaryMask::Gamma0);
        assert!((gam - 5.0).abs() < 1e-12);
    }

    #[test]
    fn spatial_integral_2d() {
        let d = DomainSpec::rectangle([0.0, 0.0], [2.0, 1.0], [-0.1, -0.1], 1.0).unwrap();
        let g = Grid::build(&d, 21, 0.5).unwrap();
        let f = SpatialField::from_fn(&g, |x| x[0] + 3.0 * x[1]);
        assert!((integrate_space(&f) - (2.0 + 3.0)).abs() < 1e-13);
    }
}
