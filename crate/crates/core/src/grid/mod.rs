//! Uniform space–time grids and the discrete calculus built on them.

mod csv;
mod diff;
mod field;
pub(crate) mod quad;

use serde::{Deserialize, Serialize};

pub use self::csv::{read_field_csv, FieldTable};
pub use self::diff::{dt, dtt, grad, laplacian, normal_derivative};
pub use self::field::{BoundaryTrace, Field, SpatialField};
pub use self::quad::{
    integrate_boundary_time, integrate_space, integrate_space_at, integrate_spacetime,
    trapezoid_weights, BoundaryMask,
};

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, Point};

/// Largest admissible τ/h for the explicit scheme in `dim` dimensions.
pub fn cfl_bound(dim: usize) -> f64 {
    if dim == 1 {
        1.0
    } else {
        std::f64::consts::FRAC_1_SQRT_2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    domain: DomainSpec,
    /// Node counts per spatial axis; the second entry is 1 in 1D.
    shape: [usize; 2],
    steps: [f64; 2],
    nt: usize,
    tau: f64,
}

impl Grid {
    /// Grid with `nx` nodes along the first axis. In 2D the second axis gets
    /// the node count whose spacing is closest to the first one.
    pub fn build(domain: &DomainSpec, nx: usize, cfl_target: f64) -> Result<Grid> {
        let mut shape = [nx, 1];
        if domain.dim() == 2 {
            let hx = domain.length(0) / (nx.max(2) - 1) as f64;
            shape[1] = ((domain.length(1) / hx).round() as usize + 1).max(3);
        }
        Self::with_shape(domain, shape, cfl_target)
    }

    pub fn with_shape(domain: &DomainSpec, shape: [usize; 2], cfl_target: f64) -> Result<Grid> {
        let dim = domain.dim();
        let mut shape = shape;
        if dim == 1 {
            shape[1] = 1;
        }
        for &count in &shape[..dim] {
            if count < 3 {
                return Err(Error::param(
                    "nx",
                    format!("need at least 3 nodes per axis, got {count}"),
                ));
            }
        }
        let bound = cfl_bound(dim);
        if !(cfl_target > 0.0 && cfl_target <= bound) {
            return Err(Error::param(
                "cfl",
                format!("must lie in (0, {bound}] for n = {dim}, got {cfl_target}"),
            ));
        }
        let mut steps = [0.0; 2];
        for axis in 0..dim {
            steps[axis] = domain.length(axis) / (shape[axis] - 1) as f64;
        }
        let h = steps[..dim].iter().cloned().fold(f64::INFINITY, f64::min);
        let t_final = domain.t_final();
        // guard against T/(cfl h) landing a few ulps above an integer
        let intervals = ((t_final / (cfl_target * h)) - 1e-9).ceil().max(2.0) as usize;
        let tau = t_final / intervals as f64;
        Ok(Grid {
            domain: domain.clone(),
            shape,
            steps,
            nt: intervals + 1,
            tau,
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn steps(&self) -> [f64; 2] {
        self.steps
    }

    /// Smallest spatial step.
    pub fn h(&self) -> f64 {
        self.steps[..self.dim()]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn cfl(&self) -> f64 {
        self.tau / self.h()
    }

    /// Number of spatial nodes.
    pub fn nspace(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.nspace() * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, level: usize) -> f64 {
        if level + 1 == self.nt {
            self.domain.t_final()
        } else {
            level as f64 * self.tau
        }
    }

    /// (i, j) of a flat spatial index.
    pub fn unflatten(&self, index: usize) -> [usize; 2] {
        [index % self.shape[0], index / self.shape[0]]
    }

    pub fn position(&self, index: usize) -> Point {
        let ij = self.unflatten(index);
        let lower = self.domain.lower();
        let mut p = [0.0; 2];
        for axis in 0..self.dim() {
            p[axis] = if ij[axis] + 1 == self.shape[axis] {
                self.domain.upper()[axis]
            } else {
                lower[axis] + ij[axis] as f64 * self.steps[axis]
            };
        }
        p
    }

    pub fn is_boundary(&self, index: usize) -> bool {
        let ij = self.unflatten(index);
        (0..self.dim()).any(|a| ij[a] == 0 || ij[a] + 1 == self.shape[a])
    }

    /// Flat stride of a spatial axis.
    pub fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            1
        } else {
            self.shape[0]
        }
    }

    /// Same domain, `factor`-times finer spacing in space and time
    /// (nodes per axis go from N to factor·(N−1)+1).
    pub fn refined(&self, factor: usize) -> Result<Grid> {
        let mut shape = self.shape;
        for axis in 0..self.dim() {
            shape[axis] = factor * (shape[axis] - 1) + 1;
        }
        let mut grid =
            Grid::with_shape(&self.domain, shape, self.cfl().min(cfl_bound(self.dim())))?;
        let intervals = factor * (self.nt - 1);
        grid.nt = intervals + 1;
        grid.tau = self.domain.t_final() / intervals as f64;
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_grid_arithmetic() {
        let d = DomainSpec::interval(0.0, 1.0, -0.1, 1.5).unwrap();
        let g = Grid::build(&d, 101, 0.9).unwrap();
        assert!((g.h() - 0.01).abs() < 1e-15);
        assert!(g.tau() <= 0.009 + 1e-15);
        assert_eq!(g.nt() - 1, (1.5f64 / 0.009).ceil() as usize);
        assert!((g.tau() * (g.nt() - 1) as f64 - 1.5).abs() < 1e-12);
        assert_eq!(g.time(g.nt() - 1), 1.5);
    }

    #[test]
    fn build_grid_rejects_bad_input() {
        let d = DomainSpec::interval(0.0, 1.0, -0.1, 1.5).unwrap();
        assert!(Grid::build(&d, 2, 0.9).is_err());
        assert!(Grid::build(&d, 11, 1.01).is_err());
        assert!(Grid::build(&d, 11, 0.0).is_err());
        let sq = DomainSpec::rectangle([0.0, 0.0], [1.0, 1.0], [-0.1, -0.1], 2.0).unwrap();
        assert!(Grid::build(&sq, 11, 1.2).is_err());
        assert!(Grid::build(&sq, 11, 0.75).is_err());
        assert!(Grid::build(&sq, 11, 0.7).is_ok());
    }

    #[test]
    fn rectangle_shape_follows_aspect() {
        let d = DomainSpec::rectangle([0.0, 0.0], [2.0, 1.0], [-0.1, -0.1], 3.0).unwrap();
        let g = Grid::build(&d, 21, 0.5).unwrap();
        assert_eq!(g.shape(), [21, 11]);
        assert_eq!(g.position(g.nspace() - 1), [2.0, 1.0]);
    }

    #[test]
    fn refinement_halves_steps() {
        let d = DomainSpec::interval(0.0, 1.0, -0.1, 1.5).unwrap();
        let g = Grid::build(&d, 21, 0.5).unwrap();
        let f = g.refined(2).unwrap();
        assert_eq!(f.shape()[0], 41);
        assert!((f.tau() - 0.5 * g.tau()).abs() < 1e-15);
        assert!((f.h() - 0.5 * g.h()).abs() < 1e-15);
    }
}
