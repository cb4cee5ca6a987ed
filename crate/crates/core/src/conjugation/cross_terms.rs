//! The ten cross terms of `2∫∫P₁w·P₂w` and their integrated-by-parts forms.
//!
//! With `P₁ = a₁ + a₂ + a₃`, `a₁ = ∂ₜ²w`, `a₂ = −Δw`, `a₃ = s²λ²φ²Aw`, and
//! `P₂ = b₁ + b₂ + b₃ + b₄`, `b₁ = (α−1)sλφBw`, `b₂ = −sλ²φAw`,
//! `b₃ = −2sλφ(∂ₜψ∂ₜw − ∇ψ·∇w)`, `b₄ = −s^γ∂ₜw`, the terms are
//! `I₁…I₉ = ∫∫aᵢbⱼ` (row-major in i, j) and `I₁₀ = ∫∫P₁·b₄`.
//!
//! The expanded forms assume `w = 0` on ∂Ω. Time boundary terms are kept at
//! both ends, so they also hold when `w(·, 0) ≠ 0`; the estimate itself only
//! uses them with `w(·, 0) = 0`. In `I₁₀` the terminal terms
//! `−½s^γ∫|∇w|²(T)` and `−½s^{γ+2}λ²∫φ²A w²(T)` both carry a minus sign.

use rayon::prelude::*;
use serde::Serialize;

use super::{decompose_with, WeightGeometry};
use crate::error::{Error, Result};
use crate::geometry::{gamma0, BoundaryPartition, DomainSpec, WeightParams};
use crate::grid::quad::{space_weights, time_weights};
use crate::grid::{dt, dtt, grad, integrate_spacetime, laplacian, normal_derivative, Field, Grid};

const HYPOTHESIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossTermPair {
    pub k: usize,
    pub definition_value: f64,
    pub expanded_value: f64,
    /// |definition − expanded| / (1 + |definition|).
    pub discrepancy: f64,
}

impl CrossTermPair {
    fn new(k: usize, d: f64, e: f64) -> Self {
        CrossTermPair {
            k,
            definition_value: d,
            expanded_value: e,
            discrepancy: (d - e).abs() / (1.0 + d.abs()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossTermSum {
    /// ∫∫P₁P₂ from the assembled operators.
    pub definition_value: f64,
    /// Σₖ of the per-term definitions.
    pub termwise_value: f64,
    /// Σₖ of the expanded forms.
    pub expanded_value: f64,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossTermLevel {
    pub level: usize,
    pub nx: usize,
    pub h: f64,
    pub pairs: Vec<CrossTermPair>,
    pub sum: CrossTermSum,
}

/// `t²e^{−t} Πₐ sin(π(xₐ − lₐ)/Lₐ)`: vanishes at t = 0 and on ∂Ω.
pub fn crossterm_test_field(grid: &Grid) -> Field {
    let d = grid.domain().clone();
    Field::from_fn(grid, |x, t| {
        let mut v = t * t * (-t).exp();
        for a in 0..d.dim() {
            v *= (std::f64::consts::PI * (x[a] - d.lower()[a]) / d.length(a)).sin();
        }
        v
    })
}

struct Ctx<'a> {
    geo: &'a WeightGeometry,
    w: &'a Field,
    wt: Field,
    wtt: Field,
    gw: Vec<Field>,
    lw: Field,
    partition: BoundaryPartition,
    ws: Vec<f64>,
    wtime: Vec<f64>,
    n: usize,
}

impl<'a> Ctx<'a> {
    fn new(geo: &'a WeightGeometry, w: &'a Field) -> Ctx<'a> {
        let grid = w.grid();
        Ctx {
            geo,
            w,
            wt: dt(w),
            wtt: dtt(w),
            gw: grad(w),
            lw: laplacian(w),
            partition: gamma0(grid),
            ws: space_weights(grid),
            wtime: time_weights(grid),
            n: grid.nspace(),
        }
    }

    fn st(&self, f: impl Fn(&Pt) -> f64) -> f64 {
        let mut total = 0.0;
        for (level, &wl) in self.wtime.iter().enumerate() {
            let mut acc = 0.0;
            for (node, &wn) in self.ws.iter().enumerate() {
                acc += wn * f(&self.pt(level, node));
            }
            total += wl * acc;
        }
        total
    }

    fn at(&self, level: usize, f: &impl Fn(&Pt) -> f64) -> f64 {
        self.ws
            .iter()
            .enumerate()
            .map(|(node, &wn)| wn * f(&self.pt(level, node)))
            .sum()
    }

    /// `∫_Ω f(T) − ∫_Ω f(0)`.
    fn bracket(&self, f: impl Fn(&Pt) -> f64) -> f64 {
        self.at(self.wtime.len() - 1, &f) - self.at(0, &f)
    }

    fn pt(&self, level: usize, node: usize) -> Pt {
        let k = level * self.n + node;
        let g = self.geo;
        let gp = g.grad_psi(node);
        let mut gw2 = 0.0;
        let mut gpw = 0.0;
        for (a, f) in self.gw.iter().enumerate() {
            let v = f.values()[k];
            gw2 += v * v;
            gpw += gp[a] * v;
        }
        Pt {
            phi: g.phi()[k],
            pt: g.psi_t(level),
            n: g.grad_psi_sq(node),
            a: g.a(level, node),
            w: self.w.values()[k],
            wt: self.wt.values()[k],
            wtt: self.wtt.values()[k],
            lw: self.lw.values()[k],
            gw2,
            gpw,
        }
    }

    fn boundary_flux(&self) -> f64 {
        let dn = normal_derivative(self.w, &self.partition);
        let nodes = self.partition.nodes();
        let mut total = 0.0;
        for (level, &wl) in self.wtime.iter().enumerate() {
            let mut acc = 0.0;
            for (j, node) in nodes.iter().enumerate() {
                let gp = self.geo.grad_psi(node.index);
                let gpn = gp[0] * node.normal[0] + gp[1] * node.normal[1];
                let phi = self.geo.phi()[level * self.n + node.index];
                acc += node.weight * phi * dn.at(j, level).powi(2) * gpn;
            }
            total += wl * acc;
        }
        total
    }
}

/// Pointwise quantities at one grid node.
struct Pt {
    phi: f64,
    pt: f64,
    n: f64,
    a: f64,
    w: f64,
    wt: f64,
    wtt: f64,
    lw: f64,
    gw2: f64,
    gpw: f64,
}

struct Consts {
    s: f64,
    l: f64,
    alpha: f64,
    sg: f64,
    b: f64,
    ptt: f64,
    lp: f64,
    lap_n: f64,
}

impl Consts {
    fn new(geo: &WeightGeometry) -> Consts {
        let p = geo.params();
        Consts {
            s: p.s,
            l: p.lambda,
            alpha: p.alpha,
            sg: p.s.powf(p.gamma),
            b: geo.b(),
            ptt: geo.psi_tt(),
            lp: geo.lap_psi(),
            lap_n: 8.0 * geo.grid().dim() as f64,
        }
    }

    fn a_piece(&self, i: usize, p: &Pt) -> f64 {
        match i {
            1 => p.wtt,
            2 => -p.lw,
            _ => self.s * self.s * self.l * self.l * p.phi * p.phi * p.a * p.w,
        }
    }

    fn b_piece(&self, j: usize, p: &Pt) -> f64 {
        let (s, l) = (self.s, self.l);
        match j {
            1 => (self.alpha - 1.0) * s * l * p.phi * self.b * p.w,
            2 => -s * l * l * p.phi * p.a * p.w,
            3 => -2.0 * s * l * p.phi * (p.pt * p.wt - p.gpw),
            _ => -self.sg * p.wt,
        }
    }
}

fn definition(ctx: &Ctx, c: &Consts, k: usize) -> f64 {
    if k == 10 {
        return ctx.st(|p| (c.a_piece(1, p) + c.a_piece(2, p) + c.a_piece(3, p)) * c.b_piece(4, p));
    }
    let (i, j) = ((k - 1) / 3 + 1, (k - 1) % 3 + 1);
    ctx.st(|p| c.a_piece(i, p) * c.b_piece(j, p))
}

fn expanded(ctx: &Ctx, c: &Consts, k: usize) -> f64 {
    let (s, l, b, ptt, lp) = (c.s, c.l, c.b, c.ptt, c.lp);
    let c1 = (c.alpha - 1.0) * s * l * b;
    let s3 = s * s * s;
    match k {
        1 => {
            c1 * (ctx.bracket(|p| p.phi * p.w * p.wt - 0.5 * l * p.phi * p.pt * p.w * p.w)
                + ctx.st(|p| {
                    -p.phi * p.wt * p.wt + 0.5 * (l * ptt + l * l * p.pt * p.pt) * p.phi * p.w * p.w
                }))
        }
        2 => {
            ctx.bracket(|p| {
                let phi_a_t = l * p.phi * p.pt * p.a + 2.0 * p.phi * p.pt * ptt;
                -s * l * l * p.phi * p.a * p.w * p.wt + 0.5 * s * l * l * phi_a_t * p.w * p.w
            }) + ctx.st(|p| {
                let w2 = p.w * p.w;
                s * l * l * p.phi * p.a * p.wt * p.wt
                    - s * l * l * p.phi * ptt * ptt * w2
                    - 2.0 * s * l.powi(3) * p.phi * p.pt * p.pt * ptt * w2
                    - 0.5 * s * l.powi(3) * p.phi * ptt * p.a * w2
                    - 0.5 * s * l.powi(4) * p.phi * p.pt * p.pt * p.a * w2
            })
        }
        3 => {
            ctx.bracket(|p| {
                -s * l * p.phi * p.pt * p.wt * p.wt + 2.0 * s * l * p.phi * p.wt * p.gpw
            }) + ctx.st(|p| {
                let wt2 = p.wt * p.wt;
                s * l * p.phi * ptt * wt2
                    + s * l * l * p.phi * p.pt * p.pt * wt2
                    + s * l * p.phi * lp * wt2
                    + s * l * l * p.phi * p.n * wt2
                    - 2.0 * s * l * l * p.phi * p.pt * p.wt * p.gpw
            })
        }
        4 => c1 * ctx.st(|p| p.phi * p.gw2 - 0.5 * (l * lp + l * l * p.n) * p.phi * p.w * p.w),
        5 => ctx.st(|p| {
            let w2 = p.w * p.w;
            -s * l * l * p.phi * p.a * p.gw2 - 0.5 * s * l * l * p.phi * c.lap_n * w2
                + 0.5 * s * l.powi(3) * p.phi * lp * p.a * w2
                + 0.5 * s * l.powi(4) * p.phi * p.n * p.a * w2
                - s * l.powi(3) * p.phi * 4.0 * p.n * w2
        }),
        6 => {
            ctx.bracket(|p| -s * l * p.phi * p.pt * p.gw2)
                + ctx.st(|p| {
                    s * l * p.phi * b * p.gw2 + 2.0 * s * l * l * p.phi * p.gpw * p.gpw
                        - 2.0 * s * l * l * p.phi * p.pt * p.wt * p.gpw
                        + s * l * l * p.phi * p.a * p.gw2
                        + 4.0 * s * l * p.phi * p.gw2
                })
                - s * l * ctx.boundary_flux()
        }
        7 => (c.alpha - 1.0) * s3 * l.powi(3) * ctx.st(|p| p.phi.powi(3) * b * p.a * p.w * p.w),
        8 => -s3 * l.powi(4) * ctx.st(|p| p.phi.powi(3) * p.a * p.a * p.w * p.w),
        9 => {
            -s3 * l.powi(3) * ctx.bracket(|p| p.phi.powi(3) * p.a * p.pt * p.w * p.w)
                + ctx.st(|p| {
                    let f3 = p.phi.powi(3) * p.w * p.w;
                    s3 * l.powi(3) * f3 * (p.a * b + 2.0 * p.pt * p.pt * ptt + 4.0 * p.n)
                        + 3.0 * s3 * l.powi(4) * f3 * p.a * p.a
                })
        }
        _ => {
            let sg = c.sg;
            ctx.bracket(|p| {
                -0.5 * sg * p.wt * p.wt
                    - 0.5 * sg * p.gw2
                    - 0.5 * sg * s * s * l * l * p.phi * p.phi * p.a * p.w * p.w
            }) + 0.5
                * sg
                * s
                * s
                * l
                * l
                * ctx.st(|p| {
                    (2.0 * l * p.phi * p.phi * p.pt * p.a + 2.0 * p.phi * p.phi * p.pt * ptt)
                        * p.w
                        * p.w
                })
        }
    }
}

fn check_hypotheses(w: &Field) -> Result<()> {
    let grid = w.grid();
    let scale = w.max_abs();
    let tol = HYPOTHESIS_TOL * scale.max(f64::MIN_POSITIVE);
    let initial = w.level(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if initial > tol {
        return Err(Error::hypothesis(
            "initial_vanishing",
            format!("max |w(., 0)| = {initial:e} with max |w| = {scale:e}"),
        ));
    }
    let boundary: Vec<usize> = (0..grid.nspace())
        .filter(|&i| grid.is_boundary(i))
        .collect();
    let mut edge = 0.0f64;
    for level in 0..grid.nt() {
        let slice = w.level(level);
        for &i in &boundary {
            edge = edge.max(slice[i].abs());
        }
    }
    if edge > tol {
        return Err(Error::hypothesis(
            "boundary_vanishing",
            format!("max |w| on the lateral boundary = {edge:e}"),
        ));
    }
    Ok(())
}

/// Definition and expanded value of `I_k`, `k ∈ 1..=10`.
pub fn cross_term(k: usize, w: &Field, params: &WeightParams) -> Result<CrossTermPair> {
    if !(1..=10).contains(&k) {
        return Err(Error::param(
            "k",
            format!("cross term index {k} outside 1..=10"),
        ));
    }
    check_hypotheses(w)?;
    let geo = WeightGeometry::new(w.grid(), params);
    let ctx = Ctx::new(&geo, w);
    let c = Consts::new(&geo);
    Ok(CrossTermPair::new(
        k,
        definition(&ctx, &c, k),
        expanded(&ctx, &c, k),
    ))
}

/// All ten terms, evaluated in parallel and returned in order of k.
pub fn cross_terms(w: &Field, params: &WeightParams) -> Result<Vec<CrossTermPair>> {
    check_hypotheses(w)?;
    let geo = WeightGeometry::new(w.grid(), params);
    let ctx = Ctx::new(&geo, w);
    let c = Consts::new(&geo);
    Ok((1..=10usize)
        .into_par_iter()
        .map(|k| CrossTermPair::new(k, definition(&ctx, &c, k), expanded(&ctx, &c, k)))
        .collect())
}

/// ∫∫P₁P₂ three ways: assembled, summed termwise, and from the expansions.
pub fn cross_term_sum_check(w: &Field, params: &WeightParams) -> Result<CrossTermSum> {
    let pairs = cross_terms(w, params)?;
    let geo = WeightGeometry::new(w.grid(), params);
    let t = decompose_with(&geo, w);
    Ok(sum_from(&pairs, integrate_spacetime(&t.p1.mul(&t.p2))))
}

fn sum_from(pairs: &[CrossTermPair], direct: f64) -> CrossTermSum {
    let termwise: f64 = pairs.iter().map(|p| p.definition_value).sum();
    let expanded: f64 = pairs.iter().map(|p| p.expanded_value).sum();
    CrossTermSum {
        definition_value: direct,
        termwise_value: termwise,
        expanded_value: expanded,
        discrepancy: (direct - expanded).abs() / (1.0 + direct.abs()),
    }
}

/// Cross terms of `field(grid)` on `levels` successively halved grids
/// starting from `nx` nodes along the first axis.
pub fn cross_term_refinement(
    domain: &DomainSpec,
    params: &WeightParams,
    nx: usize,
    cfl: f64,
    levels: usize,
    field: impl Fn(&Grid) -> Field + Sync,
) -> Result<Vec<CrossTermLevel>> {
    let mut grid = Grid::build(domain, nx, cfl)?;
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        if level > 0 {
            grid = grid.refined(2)?;
        }
        let w = field(&grid);
        let pairs = cross_terms(&w, params)?;
        let geo = WeightGeometry::new(&grid, params);
        let t = decompose_with(&geo, &w);
        let sum = sum_from(&pairs, integrate_spacetime(&t.p1.mul(&t.p2)));
        out.push(CrossTermLevel {
            level,
            nx: grid.shape()[0],
            h: grid.h(),
            pairs,
            sum,
        });
    }
    Ok(out)
}
