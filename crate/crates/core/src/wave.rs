//! Explicit leapfrog solver for
//!
//! ```text
//! ∂ₜ²u − Δu + q(x)u = f     in Ω × (0, T)
//! u(·,0) = u0, ∂ₜu(·,0) = u1,  u = h on ∂Ω × (0, T).
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{gamma0, BoundaryPartition, DomainSpec};
use crate::grid::{
    dt, dtt, grad, integrate_space_at, integrate_spacetime, laplacian, trapezoid_weights,
    BoundaryTrace, Field, Grid, SpatialField,
};

/// Initial/boundary data for one forward solve.
#[derive(Debug, Clone)]
pub struct IbvpData {
    q: SpatialField,
    u0: SpatialField,
    u1: SpatialField,
    boundary: BoundaryTrace,
    source: Option<Field>,
    m: f64,
}

impl IbvpData {
    /// Checks `max|q| ≤ m` and that the Dirichlet data at t = 0 agrees with
    /// `u0` on the boundary.
    pub fn new(
        q: SpatialField,
        u0: SpatialField,
        u1: SpatialField,
        boundary: BoundaryTrace,
        source: Option<Field>,
        m: f64,
    ) -> Result<IbvpData> {
        let grid = q.grid();
        if u0.grid() != grid || u1.grid() != grid {
            return Err(Error::InvalidData(
                "q, u0 and u1 must share one grid".into(),
            ));
        }
        if boundary.nt() != grid.nt() {
            return Err(Error::InvalidData(
                "boundary data has the wrong number of time levels".into(),
            ));
        }
        if let Some(f) = &source {
            if f.grid() != grid {
                return Err(Error::InvalidData(
                    "source lives on a different grid".into(),
                ));
            }
        }
        let qmax = q.max_abs();
        if qmax > m {
            return Err(Error::InvalidData(format!(
                "potential exceeds its bound: max|q| = {qmax} > m = {m}"
            )));
        }
        let scale = 1.0 + u0.max_abs();
        for (k, node) in boundary.partition().nodes().iter().enumerate() {
            let gap = (boundary.at(k, 0) - u0.values()[node.index]).abs();
            if gap > 1e-10 * scale {
                return Err(Error::InvalidData(format!(
                    "boundary data at t=0 differs from u0 by {gap} at node {}",
                    node.index
                )));
            }
        }
        Ok(IbvpData {
            q,
            u0,
            u1,
            boundary,
            source,
            m,
        })
    }

    /// Homogeneous Dirichlet data; `u0` is expected to vanish on ∂Ω.
    pub fn dirichlet_zero(
        q: SpatialField,
        u0: SpatialField,
        u1: SpatialField,
        source: Option<Field>,
        m: f64,
    ) -> Result<IbvpData> {
        let part = Arc::new(gamma0(q.grid()));
        let boundary = BoundaryTrace::zeros(part, q.grid().nt());
        IbvpData::new(q, u0, u1, boundary, source, m)
    }

    pub fn grid(&self) -> &Grid {
        self.q.grid()
    }

    pub fn q(&self) -> &SpatialField {
        &self.q
    }

    pub fn u0(&self) -> &SpatialField {
        &self.u0
    }

    pub fn u1(&self) -> &SpatialField {
        &self.u1
    }

    pub fn boundary(&self) -> &BoundaryTrace {
        &self.boundary
    }

    pub fn source(&self) -> Option<&Field> {
        self.source.as_ref()
    }

    pub fn m(&self) -> f64 {
        self.m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub max_interior_residual: f64,
    /// E(tₙ) = ½∫(|∂ₜu|² + |∇u|² + q|u|²) dx at every time level.
    pub energy: Vec<f64>,
    pub cfl: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: Field,
    pub diagnostics: SolveDiagnostics,
}

/// Discrete Laplacian (3-point per axis) at the interior nodes of one level.
fn interior_laplacian(grid: &Grid, level: &[f64], interior: &[usize], out: &mut [f64]) {
    let dim = grid.dim();
    let steps = grid.steps();
    for (slot, &i) in out.iter_mut().zip(interior) {
        let mut acc = 0.0;
        for axis in 0..dim {
            let s = grid.stride(axis);
            acc += (level[i + s] - 2.0 * level[i] + level[i - s]) / (steps[axis] * steps[axis]);
        }
        *slot = acc;
    }
}

pub fn solve(data: &IbvpData) -> Result<SolveResult> {
    let grid = data.grid();
    let n = grid.nspace();
    let nt = grid.nt();
    let tau = grid.tau();
    let tau2 = tau * tau;
    let interior: Vec<usize> = (0..n).filter(|&i| !grid.is_boundary(i)).collect();
    let nodes = data.boundary.partition().nodes();
    let q = data.q.values();
    let source_at = |level: usize, i: usize| data.source.as_ref().map_or(0.0, |f| f.at(level, i));

    let mut values = vec![0.0; grid.len()];
    let mut lap = vec![0.0; interior.len()];

    values[..n].copy_from_slice(data.u0.values());
    for (k, node) in nodes.iter().enumerate() {
        values[node.index] = data.boundary.at(k, 0);
    }

    interior_laplacian(grid, &values[..n], &interior, &mut lap);
    for (j, &i) in interior.iter().enumerate() {
        let u0 = values[i];
        let accel = lap[j] - q[i] * u0 + source_at(0, i);
        values[n + i] = u0 + tau * data.u1.values()[i] + 0.5 * tau2 * accel;
    }
    for (k, node) in nodes.iter().enumerate() {
        values[n + node.index] = data.boundary.at(k, 1);
    }
    check_level(&values[n..2 * n], 1, grid)?;

    for level in 1..nt - 1 {
        let (past, future) = values.split_at_mut((level + 1) * n);
        let prev = &past[(level - 1) * n..level * n];
        let cur = &past[level * n..(level + 1) * n];
        let next = &mut future[..n];
        interior_laplacian(grid, cur, &interior, &mut lap);
        for (j, &i) in interior.iter().enumerate() {
            let accel = lap[j] - q[i] * cur[i] + source_at(level, i);
            next[i] = 2.0 * cur[i] - prev[i] + tau2 * accel;
        }
        for (k, node) in nodes.iter().enumerate() {
            next[node.index] = data.boundary.at(k, level + 1);
        }
        check_level(next, level + 1, grid)?;
    }

    let u = Field::from_values(grid, values)?;
    let res = residual(&u, &data.q, data.source.as_ref());
    let diagnostics = SolveDiagnostics {
        max_interior_residual: res.max_abs(),
        energy: energy(&u, &data.q),
        cfl: grid.cfl(),
    };
    Ok(SolveResult { u, diagnostics })
}

fn check_level(values: &[f64], level: usize, grid: &Grid) -> Result<()> {
    if values.iter().all(|v| v.is_finite() && v.abs() < 1e150) {
        Ok(())
    } else {
        Err(Error::Instability {
            level,
            time: grid.time(level),
        })
    }
}

/// `dtt(u) − laplacian(u) + q·u − f` at spatially interior nodes, zero on ∂Ω.
pub fn residual(u: &Field, q: &SpatialField, f: Option<&Field>) -> Field {
    let grid = u.grid();
    let op = dtt(u).sub(&laplacian(u)).add(&u.mul_spatial(q));
    let op = match f {
        Some(f) => op.sub(f),
        None => op,
    };
    op.map_indexed(|_, node, v| if grid.is_boundary(node) { 0.0 } else { v })
}

pub fn energy(u: &Field, q: &SpatialField) -> Vec<f64> {
    let ut = dt(u);
    let gu = grad(u);
    let density = u.map_indexed(|level, node, v| {
        let k = level * u.grid().nspace() + node;
        let grad_sq: f64 = gu.iter().map(|g| g.values()[k].powi(2)).sum();
        0.5 * (ut.values()[k].powi(2) + grad_sq + q.values()[node] * v * v)
    });
    (0..u.grid().nt())
        .map(|level| integrate_space_at(&density, level))
        .collect()
}

/// Discrete proxies for the hypotheses on the data:
/// ‖u‖ and ‖∂ₜu‖ in L²(0,T; L^∞(Ω)), and min |u(·,0)|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupNormReport {
    pub u_norm: f64,
    pub ut_norm: f64,
    /// sqrt(u_norm² + ut_norm²), the H¹(0,T; L^∞) proxy.
    pub h1_linf: f64,
    pub min_abs_u0: f64,
    pub m0_holds: bool,
}

pub fn sup_norm_checks(u: &Field) -> SupNormReport {
    let grid = u.grid();
    let wt = trapezoid_weights(grid.nt(), grid.tau());
    let linf_l2 = |f: &Field| {
        let sum: f64 = (0..grid.nt())
            .map(|l| {
                let m = f.level(l).iter().fold(0.0f64, |a, v| a.max(v.abs()));
                wt[l] * m * m
            })
            .sum();
        sum.sqrt()
    };
    let u_norm = linf_l2(u);
    let ut_norm = linf_l2(&dt(u));
    let min_abs_u0 = u.level(0).iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    SupNormReport {
        u_norm,
        ut_norm,
        h1_linf: u_norm.hypot(ut_norm),
        min_abs_u0,
        m0_holds: min_abs_u0 > 0.0,
    }
}

/// L²(Ω×(0,T)) norm of a field.
pub fn l2_norm(f: &Field) -> f64 {
    integrate_spacetime(&f.map(|v| v * v)).sqrt()
}

/// Manufactured solution u* = (1 + t²)·exp(x₁ + … + xₙ) with potential
/// q ≡ `q`; returns the matching data and u* sampled on the grid.
pub fn manufactured_problem(grid: &Grid, q: f64) -> Result<(IbvpData, Field)> {
    let dim = grid.dim() as f64;
    let sum = |x: &[f64; 2]| x[0] + x[1];
    let exact = Field::from_fn(grid, |x, t| (1.0 + t * t) * sum(x).exp());
    let forcing = Field::from_fn(grid, |x, t| {
        let e = sum(x).exp();
        2.0 * e - dim * (1.0 + t * t) * e + q * (1.0 + t * t) * e
    });
    let part: Arc<BoundaryPartition> = Arc::new(gamma0(grid));
    let boundary = BoundaryTrace::from_fn(grid, part, |x, t| (1.0 + t * t) * sum(x).exp());
    let data = IbvpData::new(
        SpatialField::constant(grid, q),
        SpatialField::from_fn(grid, |x| sum(x).exp()),
        SpatialField::zeros(grid),
        boundary,
        Some(forcing),
        q.abs(),
    )?;
    Ok((data, exact))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsRow {
    pub nx: usize,
    pub h: f64,
    pub tau: f64,
    pub l2_error: f64,
    pub max_residual: f64,
    /// Error of the previous (coarser) level divided by this one.
    pub ratio: Option<f64>,
}

/// Solver error against the manufactured solution on `levels` grids, each
/// with twice the resolution of the previous one.
pub fn mms_convergence(
    domain: &DomainSpec,
    nx: usize,
    cfl: f64,
    levels: usize,
) -> Result<Vec<MmsRow>> {
    let base = Grid::build(domain, nx, cfl)?;
    let mut rows: Vec<MmsRow> = Vec::with_capacity(levels);
    for level in 0..levels {
        let grid = if level == 0 {
            base.clone()
        } else {
            base.refined(1 << level)?
        };
        let (data, exact) = manufactured_problem(&grid, 1.0)?;
        let sol = solve(&data)?;
        let l2_error = l2_norm(&sol.u.sub(&exact));
        let ratio = rows.last().map(|prev| prev.l2_error / l2_error);
        rows.push(MmsRow {
            nx: grid.shape()[0],
            h: grid.h(),
            tau: grid.tau(),
            l2_error,
            max_residual: sol.diagnostics.max_interior_residual,
            ratio,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit(t: f64) -> DomainSpec {
        DomainSpec::interval(0.0, 1.0, -0.1, t).unwrap()
    }

    fn standing_wave(nx: usize) -> (Grid, SolveResult) {
        let g = Grid::build(&unit(1.5), nx, 0.9).unwrap();
        let data = IbvpData::dirichlet_zero(
            SpatialField::zeros(&g),
            SpatialField::from_fn(&g, |x| (PI * x[0]).sin()),
            SpatialField::zeros(&g),
            None,
            0.0,
        )
        .unwrap();
        (g.clone(), solve(&data).unwrap())
    }

    #[test]
    fn standing_wave_matches_separated_solution() {
        let err = |nx| {
            let (g, sol) = standing_wave(nx);
            let exact = Field::from_fn(&g, |x, t| (PI * x[0]).sin() * (PI * t).cos());
            sol.u.sub(&exact).max_abs()
        };
        let (e1, e2) = (err(51), err(101));
        assert!(e1 < 1e-3, "{e1}");
        assert!((3.4..=4.6).contains(&(e1 / e2)), "ratio {}", e1 / e2);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let g = Grid::build(&unit(1.5), 21, 0.9).unwrap();
        let data = IbvpData::dirichlet_zero(
            SpatialField::constant(&g, 0.3),
            SpatialField::zeros(&g),
            SpatialField::zeros(&g),
            None,
            1.0,
        )
        .unwrap();
        let sol = solve(&data).unwrap();
        assert!(sol.u.values().iter().all(|&v| v == 0.0));
        assert_eq!(residual(&sol.u, data.q(), None).max_abs(), 0.0);
    }

    #[test]
    fn energy_nearly_conserved() {
        let g = Grid::build(&unit(1.5), 101, 0.9).unwrap();
        let data = IbvpData::dirichlet_zero(
            SpatialField::from_fn(&g, |x| 0.5 + 0.5 * (3.0 * x[0]).sin()),
            SpatialField::from_fn(&g, |x| (PI * x[0]).sin() + 0.3 * (2.0 * PI * x[0]).sin()),
            SpatialField::from_fn(&g, |x| (3.0 * PI * x[0]).sin()),
            None,
            1.0,
        )
        .unwrap();
        let e = solve(&data).unwrap().diagnostics.energy;
        let drift = e.iter().map(|v| (v - e[0]).abs()).fold(0.0, f64::max);
        assert!(drift < 0.01 * e[0], "drift {drift} vs {}", e[0]);
    }

    #[test]
    fn unstable_step_is_reported() {
        // a strongly negative potential makes the explicit scheme blow up
        let g = Grid::build(&unit(1.5), 41, 0.9).unwrap();
        let data = IbvpData::dirichlet_zero(
            SpatialField::constant(&g, -1e9),
            SpatialField::from_fn(&g, |x| (PI * x[0]).sin()),
            SpatialField::zeros(&g),
            None,
            1e9,
        )
        .unwrap();
        match solve(&data) {
            Err(Error::Instability { level, .. }) => assert!(level > 0),
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn potential_bound_enforced() {
        let g = Grid::build(&unit(1.5), 11, 0.9).unwrap();
        let r = IbvpData::dirichlet_zero(
            SpatialField::constant(&g, 2.0),
            SpatialField::zeros(&g),
            SpatialField::zeros(&g),
            None,
            1.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn incompatible_boundary_rejected() {
        let g = Grid::build(&unit(1.5), 11, 0.9).unwrap();
        let r = IbvpData::dirichlet_zero(
            SpatialField::zeros(&g),
            SpatialField::constant(&g, 1.0),
            SpatialField::zeros(&g),
            None,
            1.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn sup_norm_of_constant() {
        let g = Grid::build(&unit(1.5), 11, 0.9).unwrap();
        let u = Field::from_fn(&g, |_, _| -3.0);
        let r = sup_norm_checks(&u);
        assert!((r.h1_linf - 3.0 * 1.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.ut_norm, 0.0);
        assert_eq!(r.min_abs_u0, 3.0);
        assert!(r.m0_holds);
    }

    #[test]
    fn sup_norm_m0_checks() {
        let g = Grid::build(&unit(1.5), 11, 0.9).unwrap();
        let u = Field::from_fn(&g, |x, _| 2.0 + (PI * x[0]).sin());
        assert!((sup_norm_checks(&u).min_abs_u0 - 2.0).abs() < 1e-15);
        let u = Field::from_fn(&g, |x, t| (PI * x[0]).sin() * (PI * t).cos());
        let r = sup_norm_checks(&u);
        assert!(r.min_abs_u0 < 1e-15);
        assert!(!r.m0_holds);
    }

    #[test]
    fn manufactured_solution_converges() {
        let rows = mms_convergence(&unit(1.5), 26, 0.9, 3).unwrap();
        for row in &rows[1..] {
            let r = row.ratio.unwrap();
            assert!((3.4..=4.6).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn manufactured_solution_2d() {
        let d = DomainSpec::rectangle([0.0, 0.0], [1.0, 1.0], [-0.1, -0.1], 1.0).unwrap();
        let rows = mms_convergence(&d, 11, 0.5, 2).unwrap();
        let r = rows[1].ratio.unwrap();
        assert!((3.4..=4.6).contains(&r), "ratio {r}");
    }
}
