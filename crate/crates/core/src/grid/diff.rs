//! Second-order finite differences. Centered stencils in the interior,
//! one-sided second-order stencils at the ends of every axis (spatial
//! boundary, t = 0 and t = T).

use crate::geometry::BoundaryPartition;
use crate::grid::{BoundaryTrace, Field, Grid};

/// Which direction of the flat space–time array a stencil runs along.
#[derive(Clone, Copy)]
enum Axis {
    Space(usize),
    Time,
}

fn layout(grid: &Grid, axis: Axis) -> (usize, usize, f64) {
    match axis {
        Axis::Space(a) => (grid.shape()[a], grid.stride(a), grid.steps()[a]),
        Axis::Time => (grid.nt(), grid.nspace(), grid.tau()),
    }
}

/// Position of flat index `k` along an axis of length `len` and stride `stride`.
#[inline]
fn coord(k: usize, len: usize, stride: usize) -> usize {
    (k / stride) % len
}

fn first_along(f: &Field, axis: Axis) -> Field {
    let grid = f.grid();
    let (len, stride, step) = layout(grid, axis);
    let v = f.values();
    let inv = 1.0 / (2.0 * step);
    let out = (0..v.len())
        .map(|k| {
            let p = coord(k, len, stride);
            if p == 0 {
                (-3.0 * v[k] + 4.0 * v[k + stride] - v[k + 2 * stride]) * inv
            } else if p + 1 == len {
                (3.0 * v[k] - 4.0 * v[k - stride] + v[k - 2 * stride]) * inv
            } else {
                (v[k + stride] - v[k - stride]) * inv
            }
        })
        .collect();
    Field::from_shared(f.shared_grid(), out).with_log_offset(f.log_offset())
}

fn second_along(f: &Field, axis: Axis) -> Field {
    let grid = f.grid();
    let (len, stride, step) = layout(grid, axis);
    let v = f.values();
    let inv = 1.0 / (step * step);
    let out = (0..v.len())
        .map(|k| {
            let p = coord(k, len, stride);
            let s = stride;
            if p == 0 {
                if len >= 4 {
                    (2.0 * v[k] - 5.0 * v[k + s] + 4.0 * v[k + 2 * s] - v[k + 3 * s]) * inv
                } else {
                    (v[k] - 2.0 * v[k + s] + v[k + 2 * s]) * inv
                }
            } else if p + 1 == len {
                if len >= 4 {
                    (2.0 * v[k] - 5.0 * v[k - s] + 4.0 * v[k - 2 * s] - v[k - 3 * s]) * inv
                } else {
                    (v[k] - 2.0 * v[k - s] + v[k - 2 * s]) * inv
                }
            } else {
                (v[k + s] - 2.0 * v[k] + v[k - s]) * inv
            }
        })
        .collect();
    Field::from_shared(f.shared_grid(), out).with_log_offset(f.log_offset())
}

/// ∂ₜf.
pub fn dt(f: &Field) -> Field {
    first_along(f, Axis::Time)
}

/// ∂ₜ²f.
pub fn dtt(f: &Field) -> Field {
    second_along(f, Axis::Time)
}

/// ∇f, one field per spatial axis.
pub fn grad(f: &Field) -> Vec<Field> {
    (0..f.grid().dim())
        .map(|a| first_along(f, Axis::Space(a)))
        .collect()
}

/// Δf.
pub fn laplacian(f: &Field) -> Field {
    let dim = f.grid().dim();
    let mut acc = second_along(f, Axis::Space(0));
    for a in 1..dim {
        acc = acc.add(&second_along(f, Axis::Space(a)));
    }
    acc
}

/// Outward normal derivative ∂_ν f at every boundary node and time level,
/// by the one-sided three-point stencil along the normal.
pub fn normal_derivative(f: &Field, partition: &BoundaryPartition) -> BoundaryTrace {
    let grid = f.grid();
    let nt = grid.nt();
    let mut values = Vec::with_capacity(partition.len() * nt);
    for level in 0..nt {
        let slice = f.level(level);
        for node in partition.nodes() {
            let stride = grid.stride(node.axis) as isize;
            let h = grid.steps()[node.axis];
            let inward = -(node.sign as isize) * stride;
            let i0 = node.index as isize;
            let f0 = slice[i0 as usize];
            let f1 = slice[(i0 + inward) as usize];
            let f2 = slice[(i0 + 2 * inward) as usize];
            values.push((3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h));
        }
    }
    BoundaryTrace::from_raw(std::sync::Arc::new(partition.clone()), nt, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gamma0, DomainSpec};
    use std::f64::consts::PI;

    fn grid1(nx: usize) -> Grid {
        let d = DomainSpec::interval(0.0, 1.0, -0.1, 1.5).unwrap();
        Grid::build(&d, nx, 0.9).unwrap()
    }

    #[test]
    fn dtt_exact_on_quadratics_in_time() {
        let g = grid1(11);
        let f = Field::from_fn(&g, |_, t| t * t);
        assert!(dtt(&f).values().iter().all(|v| (v - 2.0).abs() < 1e-8));
    }

    #[test]
    fn laplacian_exact_on_quadratics_in_space() {
        let g = grid1(11);
        let f = Field::from_fn(&g, |x, _| x[0] * x[0]);
        assert!(laplacian(&f)
            .values()
            .iter()
            .all(|v| (v - 2.0).abs() < 1e-10));
        let d = DomainSpec::rectangle([0.0, 0.0], [1.0, 2.0], [-0.1, -0.1], 3.0).unwrap();
        let g2 = Grid::build(&d, 11, 0.5).unwrap();
        let f = Field::from_fn(&g2, |x, _| x[0] * x[0] + 3.0 * x[1] * x[1] - x[0] * x[1]);
        assert!(laplacian(&f)
            .values()
            .iter()
            .all(|v| (v - 8.0).abs() < 1e-9));
    }

    #[test]
    fn first_derivatives_exact_on_quadratics() {
        let g = grid1(11);
        let f = Field::from_fn(&g, |x, t| 3.0 * t * t - x[0] * x[0] + x[0] * t);
        let ft = dt(&f);
        let fx = &grad(&f)[0];
        for level in 0..g.nt() {
            let t = g.time(level);
            for i in 0..g.nspace() {
                let x = g.position(i)[0];
                assert!((ft.at(level, i) - (6.0 * t + x)).abs() < 1e-9);
                assert!((fx.at(level, i) - (-2.0 * x + t)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dtt_second_order_convergence() {
        let err = |nx| {
            let g = grid1(nx);
            let f = Field::from_fn(&g, |x, t| (PI * x[0]).sin() * (PI * t).sin());
            dtt(&f).zip_map(&f, |a, b| a + PI * PI * b).max_abs()
        };
        let ratio = err(41) / err(81);
        assert!((3.4..=4.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn normal_derivative_of_linear_and_constant() {
        let g = grid1(11);
        let part = gamma0(&g);
        let tr = normal_derivative(&Field::from_fn(&g, |x, _| x[0]), &part);
        for level in 0..g.nt() {
            assert!((tr.at(0, level) + 1.0).abs() < 1e-12);
            assert!((tr.at(1, level) - 1.0).abs() < 1e-12);
        }
        let tr = normal_derivative(&Field::from_fn(&g, |_, _| 4.2), &part);
        assert!(tr.values().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn normal_derivative_converges_at_second_order() {
        let err = |nx| {
            let g = grid1(nx);
            let part = gamma0(&g);
            let f = Field::from_fn(&g, |x, t| (PI * x[0]).sin() * (PI * t).cos());
            let tr = normal_derivative(&f, &part);
            (0..g.nt())
                .map(|l| (tr.at(1, l) + PI * (PI * g.time(l)).cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(41) / err(81);
        assert!((3.4..=4.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn operators_are_linear() {
        let g = grid1(9);
        let f = Field::from_fn(&g, |x, t| (3.0 * x[0]).exp() * t.cos());
        let h = Field::from_fn(&g, |x, t| x[0].powi(5) - t.powi(3));
        let combo = f.scale(2.5).add(&h.scale(-0.7));
        let lhs = laplacian(&combo);
        let rhs = laplacian(&f).scale(2.5).add(&laplacian(&h).scale(-0.7));
        assert!(lhs.sub(&rhs).max_abs() <= 1e-12 * lhs.max_abs().max(1.0));
    }
}
