//! Seeded families of admissible test functions: each member vanishes at
//! t = 0 and on ∂Ω by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::Point;
use crate::grid::{Field, Grid, SpatialField};
use crate::wave::{solve, IbvpData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberKind {
    /// `t·(1 + a t)·S(x)`.
    Linear,
    /// `sin(ωt)·S(x)`.
    Oscillating,
    /// Wave solution with `v(0) = 0`, `∂ₜv(0) = S(x)`.
    Solver,
}

#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub id: String,
    pub kind: MemberKind,
    pub v: Field,
    pub q: SpatialField,
}

/// Random sine series `S(x) = Σ c_{jk} sin(jπξ₁) sin(kπξ₂)`, modes up to 3.
#[derive(Debug, Clone)]
struct SineSeries {
    coeffs: Vec<(usize, usize, f64)>,
}

impl SineSeries {
    fn random(rng: &mut ChaCha8Rng, dim: usize) -> Self {
        let ky_max = if dim == 2 { 3 } else { 1 };
        let mut coeffs = Vec::new();
        for j in 1..=3 {
            for k in 1..=ky_max {
                coeffs.push((j, k, rng.gen_range(-1.0..1.0) / (j * k) as f64));
            }
        }
        // keep the leading mode away from zero
        coeffs[0].2 = 1.0;
        SineSeries { coeffs }
    }

    fn eval(&self, grid: &Grid, x: &Point) -> f64 {
        let d = grid.domain();
        let xi = |a: usize| (x[a] - d.lower()[a]) / d.length(a);
        let pi = std::f64::consts::PI;
        self.coeffs
            .iter()
            .map(|&(j, k, c)| {
                let mut v = c * (j as f64 * pi * xi(0)).sin();
                if d.dim() == 2 {
                    v *= (k as f64 * pi * xi(1)).sin();
                }
                v
            })
            .sum()
    }
}

/// `size` members cycling through the three kinds, reproducible from `seed`.
pub fn test_family(grid: &Grid, seed: u64, size: usize) -> Result<Vec<FamilyMember>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut members = Vec::with_capacity(size);
    for i in 0..size {
        let series = SineSeries::random(&mut rng, grid.dim());
        let kind = match i % 3 {
            0 => MemberKind::Linear,
            1 => MemberKind::Oscillating,
            _ => MemberKind::Solver,
        };
        let zero_q = SpatialField::zeros(grid);
        let (v, q) = match kind {
            MemberKind::Linear => {
                let a: f64 = rng.gen_range(0.0..1.0);
                let v = Field::from_fn(grid, |x, t| t * (1.0 + a * t) * series.eval(grid, x));
                (v, zero_q)
            }
            MemberKind::Oscillating => {
                let omega: f64 = rng.gen_range(0.5..3.0);
                let v = Field::from_fn(grid, |x, t| (omega * t).sin() * series.eval(grid, x));
                (v, zero_q)
            }
            MemberKind::Solver => {
                let q0: f64 = rng.gen_range(0.0..2.0);
                let q = SpatialField::from_fn(grid, |x| {
                    let xi = (x[0] - grid.domain().lower()[0]) / grid.domain().length(0);
                    q0 * (1.0 + xi)
                });
                let data = IbvpData::dirichlet_zero(
                    q.clone(),
                    SpatialField::zeros(grid),
                    SpatialField::from_fn(grid, |x| series.eval(grid, x)),
                    None,
                    2.0 * q0 + 1.0,
                )?;
                (solve(&data)?.u, q)
            }
        };
        members.push(FamilyMember {
            id: format!("case_{i:02}"),
            kind,
            v,
            q,
        });
    }
    Ok(members)
}

/// Smooth fields with no boundary or initial constraints:
/// `Σ a_k cos(k ξ₁ + b_k) · (c₀ + c₁t + sin(ωt))`, one per member.
pub fn smooth_fields(grid: &Grid, seed: u64, count: usize) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let modes: Vec<(f64, f64, f64)> = (1..=3)
                .map(|k| (rng.gen_range(-1.0..1.0), k as f64, rng.gen_range(0.0..6.3)))
                .collect();
            let (c0, c1, omega) = (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.5..3.0),
            );
            let ky: f64 = rng.gen_range(0.5..2.0);
            Field::from_fn(grid, |x, t| {
                let space: f64 = modes
                    .iter()
                    .map(|&(a, k, b)| a * (k * x[0] + b).cos())
                    .sum();
                let space = space * (ky * x[1]).cos();
                space * (c0 + c1 * t + (omega * t).sin())
            })
        })
        .collect()
}
