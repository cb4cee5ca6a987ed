//! Twin experiments for the inverse potential problem.
//!
//! Two forward solves with potentials q₁, q₂ and identical data give
//! `z = u_{q₁} − u_{q₂}`, which satisfies
//!
//! ```text
//! ∂ₜ²z − Δz + q₁z = (q₂ − q₁)u_{q₂},   z(0) = ∂ₜz(0) = 0,   z = 0 on ∂Ω,
//! ```
//!
//! and `v = ∂ₜz` solves the same operator with source `(q₂ − q₁)∂ₜu_{q₂}`,
//! `v(0) = 0`, `∂ₜv(0) = (q₂ − q₁)u₀`. The harness measures
//! `‖q₁ − q₂‖_{L²(Ω)}` against `‖∂_ν∂ₜz‖_{L²(Γ₀×(0,T))}`. Their quotient
//! `c_emp` only witnesses a lower bound for the stability constant.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::conjugation::WeightGeometry;
use crate::error::{Error, Result};
use crate::geometry::{gamma0, Point, WeightParams};
use crate::grid::{
    cfl_bound, dt, dtt, integrate_boundary_time, integrate_space, integrate_spacetime, laplacian,
    normal_derivative, BoundaryMask, BoundaryTrace, Field, Grid, SpatialField,
};
use crate::wave::{l2_norm, solve, sup_norm_checks, IbvpData};

const ROMBERG_TOL: f64 = 1e-8;
const ROMBERG_MAX_LEVEL: usize = 26;
const ABSORPTION_TOL: f64 = 1e-3;

/// Shared data of a twin experiment plus the two potentials.
#[derive(Debug, Clone)]
pub struct TwinConfig {
    pub grid: Grid,
    pub u0: SpatialField,
    pub u1: SpatialField,
    pub boundary: BoundaryTrace,
    pub params: WeightParams,
    /// Bound on max|qᵢ|.
    pub m: f64,
    /// Required lower bound on |u₀|.
    pub m0: f64,
    /// Bound on the H¹(0,T; L^∞) proxy of u_{q₂}.
    pub big_m0: f64,
    pub q1: SpatialField,
    pub q2: SpatialField,
    /// s values for the k(s) table.
    pub k_s_grid: Vec<f64>,
}

impl TwinConfig {
    /// Dirichlet data equal to `u0` on ∂Ω at every time.
    #[allow(clippy::too_many_arguments)]
    pub fn with_static_boundary(
        grid: &Grid,
        u0: SpatialField,
        u1: SpatialField,
        params: WeightParams,
        m: f64,
        m0: f64,
        big_m0: f64,
        q1: SpatialField,
        q2: SpatialField,
    ) -> TwinConfig {
        let part = Arc::new(gamma0(grid));
        let boundary = BoundaryTrace::constant_in_time(part, &u0);
        TwinConfig {
            grid: grid.clone(),
            u0,
            u1,
            boundary,
            params,
            m,
            m0,
            big_m0,
            q1,
            q2,
            k_s_grid: Vec::new(),
        }
    }

    pub fn with_q2(&self, q2: SpatialField) -> TwinConfig {
        TwinConfig { q2, ..self.clone() }
    }

    fn data(&self, q: &SpatialField, source: Option<Field>) -> Result<IbvpData> {
        IbvpData::new(
            q.clone(),
            self.u0.clone(),
            self.u1.clone(),
            self.boundary.clone(),
            source,
            self.m,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub m0: f64,
    pub min_abs_u0: f64,
    pub m0_holds: bool,
    pub big_m0: f64,
    pub h1_linf_u2: f64,
    pub big_m0_holds: bool,
    pub m: f64,
    pub max_abs_q: f64,
    pub q_bound_holds: bool,
    pub cfl: f64,
    pub cfl_bound: f64,
    pub t_final: f64,
    pub t0: f64,
    pub t_exceeds_t0: bool,
    pub weights_valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KRow {
    pub s: f64,
    pub k_max: f64,
    /// Node where the maximum is attained.
    pub x_argmax: Point,
    /// k(s, x) is non-increasing in |x − x₀| over the grid.
    pub monotone_in_distance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub dq_norm: f64,
    pub trace_norm: f64,
    /// Same trace norm weighted by `e^{2s(φ − φ*)}`.
    pub weighted_trace_norm: f64,
    /// 2sφ*, the log of the factor removed from the weighted norm.
    pub weight_log_scale: f64,
    pub c_emp: Option<f64>,
    pub c_emp_weighted: Option<f64>,
    /// Max interior residual of the z-system.
    pub residual_z: f64,
    /// Max interior residual of the v-system applied to ∂ₜz.
    pub residual_v: f64,
    pub max_abs_z0: f64,
    /// max |∂ₜz(·, 0)|.
    pub max_abs_dtz0: f64,
    /// max |∂ₜ²z(·, 0) − (q₂ − q₁)u₀| over interior nodes.
    pub initial_velocity_gap: f64,
    /// ‖v_direct − ∂ₜz‖ / ‖∂ₜz‖ in L²(Ω×(0,T)).
    pub v_gap: f64,
    pub k_table: Vec<KRow>,
    pub hypotheses: HypothesisReport,
}

fn check_hypotheses(cfg: &TwinConfig) -> HypothesisReport {
    let domain = cfg.grid.domain();
    let min_abs_u0 = cfg.u0.min_abs();
    let max_abs_q = cfg.q1.max_abs().max(cfg.q2.max_abs());
    HypothesisReport {
        m0: cfg.m0,
        min_abs_u0,
        m0_holds: cfg.m0 > 0.0 && min_abs_u0 >= cfg.m0,
        big_m0: cfg.big_m0,
        h1_linf_u2: f64::NAN,
        big_m0_holds: false,
        m: cfg.m,
        max_abs_q,
        q_bound_holds: max_abs_q <= cfg.m,
        cfl: cfg.grid.cfl(),
        cfl_bound: cfl_bound(cfg.grid.dim()),
        t_final: domain.t_final(),
        t0: domain.t0(),
        t_exceeds_t0: domain.t_final() > domain.t0(),
        weights_valid: cfg.params.validate(domain).passed,
    }
}

fn require(ok: bool, name: &'static str, detail: String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::hypothesis(name, detail))
    }
}

/// Forward solves for q₁ and q₂, run concurrently.
pub fn solve_twin(cfg: &TwinConfig) -> Result<(Field, Field)> {
    let d1 = cfg.data(&cfg.q1, None)?;
    let d2 = cfg.data(&cfg.q2, None)?;
    let (a, b) = rayon::join(|| solve(&d1), || solve(&d2));
    Ok((a?.u, b?.u))
}

fn interior_max(f: &Field) -> f64 {
    let grid = f.grid();
    let mut m = 0.0f64;
    for l in 0..grid.nt() {
        for (i, v) in f.level(l).iter().enumerate() {
            if !grid.is_boundary(i) {
                m = m.max(v.abs());
            }
        }
    }
    m
}

/// L²(Γ₀ × (0,T)) norm of `∂_ν g` with pointwise weight `w`.
fn trace_norm(g: &Field, weight: Option<&Field>) -> f64 {
    let grid = g.grid();
    let part = gamma0(grid);
    let dn = normal_derivative(g, &part);
    let nodes = part.nodes();
    let sq = dn.map_indexed(|level, j, d| {
        let w = weight.map_or(1.0, |w| w.at(level, nodes[j].index));
        w * d * d
    });
    integrate_boundary_time(&sq, grid.tau(), BoundaryMask::Gamma0).sqrt()
}

pub fn run_twin(cfg: &TwinConfig) -> Result<StabilityReport> {
    let mut hyp = check_hypotheses(cfg);
    require(
        hyp.m0_holds,
        "m0",
        format!(
            "min |u0| = {} must be at least m0 = {} > 0",
            hyp.min_abs_u0, cfg.m0
        ),
    )?;
    require(
        hyp.q_bound_holds,
        "potential_bound",
        format!("max |q| = {} exceeds m = {}", hyp.max_abs_q, cfg.m),
    )?;
    require(
        hyp.cfl <= hyp.cfl_bound * (1.0 + 1e-12),
        "cfl",
        format!("cfl = {} exceeds {}", hyp.cfl, hyp.cfl_bound),
    )?;
    require(
        hyp.t_exceeds_t0,
        "t_exceeds_t0",
        format!("T = {} must exceed T0 = {}", hyp.t_final, hyp.t0),
    )?;
    require(
        hyp.weights_valid,
        "weights",
        "weight parameters fail validation".into(),
    )?;

    let grid = &cfg.grid;
    let (u1, u2) = solve_twin(cfg)?;
    hyp.h1_linf_u2 = sup_norm_checks(&u2).h1_linf;
    hyp.big_m0_holds = hyp.h1_linf_u2 <= cfg.big_m0;
    require(
        hyp.big_m0_holds,
        "big_m0",
        format!(
            "H1(0,T; Linf) proxy {} exceeds M0 = {}",
            hyp.h1_linf_u2, cfg.big_m0
        ),
    )?;

    let dq = cfg.q2.sub(&cfg.q1);
    let z = u1.sub(&u2);
    let zt = dt(&z);
    let u2t = dt(&u2);

    let rhs_z = u2.mul_spatial(&dq);
    let res_z = dtt(&z)
        .sub(&laplacian(&z))
        .add(&z.mul_spatial(&cfg.q1))
        .sub(&rhs_z);
    let rhs_v = u2t.mul_spatial(&dq);
    let res_v = dtt(&zt)
        .sub(&laplacian(&zt))
        .add(&zt.mul_spatial(&cfg.q1))
        .sub(&rhs_v);

    let ztt0 = dtt(&z);
    let target = dq.mul(&cfg.u0);
    let mut initial_velocity_gap = 0.0f64;
    for (i, (&a, &b)) in ztt0.level(0).iter().zip(target.values()).enumerate() {
        if !grid.is_boundary(i) {
            initial_velocity_gap = initial_velocity_gap.max((a - b).abs());
        }
    }

    let v_direct = solve_v_system(cfg, &u2t)?;
    let zt_norm = l2_norm(&zt);
    let v_gap = if zt_norm > 0.0 {
        l2_norm(&v_direct.sub(&zt)) / zt_norm
    } else {
        l2_norm(&v_direct)
    };

    let dq_norm = integrate_space(&dq.mul(&dq)).sqrt();
    let tn = trace_norm(&zt, None);
    let geo = WeightGeometry::new(grid, &cfg.params);
    let weight = geo.weight(2.0, geo.phi_max());
    let wtn = trace_norm(&zt, Some(&weight));
    let quotient = |t: f64| if t > 0.0 { Some(dq_norm / t) } else { None };

    let k_table = k_table(grid, &cfg.params, &cfg.k_s_grid);
    Ok(StabilityReport {
        dq_norm,
        trace_norm: tn,
        weighted_trace_norm: wtn,
        weight_log_scale: 2.0 * cfg.params.s * geo.phi_max(),
        c_emp: quotient(tn),
        c_emp_weighted: quotient(wtn),
        residual_z: interior_max(&res_z),
        residual_v: interior_max(&res_v),
        max_abs_z0: z.level(0).iter().fold(0.0f64, |m, v| m.max(v.abs())),
        max_abs_dtz0: zt.level(0).iter().fold(0.0f64, |m, v| m.max(v.abs())),
        initial_velocity_gap,
        v_gap,
        k_table,
        hypotheses: hyp,
    })
}

/// Direct solve of the v-system with source `(q₂ − q₁)·u2t`.
pub fn solve_v_system(cfg: &TwinConfig, u2t: &Field) -> Result<Field> {
    let dq = cfg.q2.sub(&cfg.q1);
    let data = IbvpData::dirichlet_zero(
        cfg.q1.clone(),
        SpatialField::zeros(&cfg.grid),
        dq.mul(&cfg.u0),
        Some(u2t.mul_spatial(&dq)),
        cfg.m,
    )?;
    Ok(solve(&data)?.u)
}

/// Romberg integration of `f` on `[a, b]` to relative tolerance `tol`.
fn romberg(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut prev: Vec<f64> = vec![0.5 * (b - a) * (f(a) + f(b))];
    let mut hits = 0;
    for level in 1..=ROMBERG_MAX_LEVEL {
        let n = 1usize << level;
        let h = (b - a) / n as f64;
        let mids: f64 = (0..n / 2).map(|i| f(a + (2 * i + 1) as f64 * h)).sum();
        let mut row = Vec::with_capacity(level + 1);
        row.push(0.5 * prev[0] + h * mids);
        let mut factor = 1.0;
        for j in 1..=level {
            factor *= 4.0;
            let r = row[j - 1] + (row[j - 1] - prev[j - 1]) / (factor - 1.0);
            row.push(r);
        }
        let (best, last) = (row[level], prev[level - 1]);
        if level >= 4 && (best - last).abs() <= tol * best.abs() {
            hits += 1;
            if hits >= 2 {
                return best;
            }
        } else {
            hits = 0;
        }
        prev = row;
    }
    prev[prev.len() - 1]
}

/// `k(s, x) = ∫₀ᵀ exp(−2s e^{λ(|x−x₀|²+β₀)}(1 − e^{−λβt²})) dt`.
pub fn k_kernel(
    s: f64,
    x: &Point,
    grid_domain: &crate::geometry::DomainSpec,
    params: &WeightParams,
) -> f64 {
    let c = (params.lambda * (grid_domain.dist_sq(x) + params.beta0)).exp();
    let lb = params.lambda * params.beta;
    let f = |t: f64| (-2.0 * s * c * (-(-lb * t * t).exp_m1())).exp();
    let t_final = grid_domain.t_final();
    // the integrand is negligible past the point where the exponent reaches −40
    let arg = 20.0 / (s * c);
    let cut = if arg < 1.0 {
        (-(1.0 - arg).ln() / lb).sqrt().min(t_final)
    } else {
        t_final
    };
    if cut < t_final {
        romberg(f, 0.0, cut, ROMBERG_TOL) + romberg(f, cut, t_final, ROMBERG_TOL)
    } else {
        romberg(f, 0.0, t_final, ROMBERG_TOL)
    }
}

/// `max_x k(s, x)` over the grid nodes.
pub fn k_max(s: f64, grid: &Grid, params: &WeightParams) -> KRow {
    let domain = grid.domain();
    let mut samples: Vec<(f64, f64, Point)> = (0..grid.nspace())
        .map(|i| {
            let x = grid.position(i);
            (domain.dist_sq(&x), k_kernel(s, &x, domain, params), x)
        })
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = samples
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9) || w[1].0 == w[0].0);
    let best = samples
        .iter()
        .fold(samples[0], |m, c| if c.1 > m.1 { *c } else { m });
    KRow {
        s,
        k_max: best.1,
        x_argmax: best.2,
        monotone_in_distance: monotone,
    }
}

pub fn k_table(grid: &Grid, params: &WeightParams, s_grid: &[f64]) -> Vec<KRow> {
    let mut rows: Vec<KRow> = s_grid.par_iter().map(|&s| k_max(s, grid, params)).collect();
    rows.sort_by(|a, b| a.s.total_cmp(&b.s));
    rows
}

/// True when `k_max` strictly decreases along the table.
pub fn strictly_decreasing(rows: &[KRow]) -> bool {
    rows.windows(2).all(|w| w[1].k_max < w[0].k_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbsorptionReport {
    pub s: f64,
    /// ∫∫e^{2s(φ − φ*)}|dq|².
    pub lhs: f64,
    /// ∫e^{2s(φ(·,0) − φ*)}|dq|².
    pub initial: f64,
    pub k_max: f64,
    /// lhs / initial, or 0 when both vanish.
    pub ratio: f64,
    pub holds: bool,
}

/// Checks `∫∫e^{2sφ}|dq|² ≤ k_max(s)·∫e^{2sφ(·,0)}|dq|²`.
pub fn absorption_check(dq: &SpatialField, params: &WeightParams, grid: &Grid) -> AbsorptionReport {
    let geo = WeightGeometry::new(grid, params);
    let weight = geo.weight(2.0, geo.phi_max());
    let dq2 = dq.mul(dq);
    let lhs = integrate_spacetime(&weight.mul_spatial(&dq2));
    let initial = integrate_space(&weight.slice_at(0).mul(&dq2));
    let k = k_max(params.s, grid, params).k_max;
    let ratio = if initial > 0.0 { lhs / initial } else { 0.0 };
    AbsorptionReport {
        s: params.s,
        lhs,
        initial,
        k_max: k,
        ratio,
        holds: lhs <= k * initial * (1.0 + ABSORPTION_TOL),
    }
}

/// Smallest s in `s_grid` from which `k_max(s)·m_hat < s^{1/2}/2` holds for
/// every larger grid value.
pub fn absorption_threshold(rows: &[KRow], m_hat: f64) -> Option<f64> {
    let mut out = None;
    for row in rows.iter().rev() {
        if row.k_max * m_hat < 0.5 * row.s.sqrt() {
            out = Some(row.s);
        } else {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub dq_norm: f64,
    pub trace_norm: f64,
    pub c_emp: Option<f64>,
}

/// Twin runs for `q₂ = q₁ + ε·shape`, one per ε, in parallel.
pub fn scaling_study(
    base: &TwinConfig,
    epsilons: &[f64],
    shape: &SpatialField,
) -> Result<Vec<ScalingRow>> {
    let mut cfg = base.clone();
    cfg.k_s_grid.clear();
    let mut rows = epsilons
        .par_iter()
        .map(|&eps| {
            let r = run_twin(&cfg.with_q2(cfg.q1.add(&shape.scale(eps))))?;
            Ok(ScalingRow {
                epsilon: eps,
                dq_norm: r.dq_norm,
                trace_norm: r.trace_norm,
                c_emp: r.c_emp,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    Ok(rows)
}

/// max c_emp / min c_emp over rows where it is defined.
pub fn c_emp_spread(rows: &[ScalingRow]) -> Option<f64> {
    let cs: Vec<f64> = rows.iter().filter_map(|r| r.c_emp).collect();
    if cs.is_empty() {
        return None;
    }
    let max = cs.iter().cloned().fold(f64::MIN, f64::max);
    let min = cs.iter().cloned().fold(f64::MAX, f64::min);
    Some(max / min)
}
