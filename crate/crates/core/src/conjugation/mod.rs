//! The conjugated wave operator `P w = e^{sφ}(∂ₜ² − Δ)(e^{−sφ} w)` and its
//! splitting `P = P₁ + P₂ + R₁ + R₂`:
//!
//! ```text
//! P₁w = ∂ₜ²w − Δw + s²λ²φ²A w
//! P₂w = (α−1)sλφB w − sλ²φA w − 2sλφ(∂ₜψ ∂ₜw − ∇ψ·∇w) − s^γ ∂ₜw
//! R₁w = −α sλφB w
//! R₂w = +s^γ ∂ₜw
//! ```
//!
//! with `A = |∂ₜψ|² − |∇ψ|²` and `B = ∂ₜ²ψ − Δψ`. The first-order term
//! `−s^γ∂ₜw` is added to P₂ and removed again through R₂, so that
//! `P − R₁ − R₂ = P₁ + P₂` holds pointwise.
//!
//! Fields passed in here are in offset units: `w = e^{s(φ − φ*)} v` with
//! φ* stored as the field's log offset.

mod cross_terms;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Point, WeightParams};
use crate::grid::{dt, dtt, grad, integrate_spacetime, laplacian, Field, Grid};

pub use self::cross_terms::{
    cross_term, cross_term_refinement, cross_term_sum_check, cross_terms, crossterm_test_field,
    CrossTermLevel, CrossTermPair, CrossTermSum,
};

/// φ and the closed-form ψ-derivatives sampled on a grid.
#[derive(Debug, Clone)]
pub struct WeightGeometry {
    grid: Arc<Grid>,
    params: WeightParams,
    phi: Vec<f64>,
    psi_t: Vec<f64>,
    grad_psi: Vec<Point>,
    phi_max: f64,
}

impl WeightGeometry {
    pub fn new(grid: &Grid, params: &WeightParams) -> WeightGeometry {
        let domain = grid.domain();
        let n = grid.nspace();
        let positions: Vec<Point> = (0..n).map(|i| grid.position(i)).collect();
        let mut phi = Vec::with_capacity(grid.len());
        for level in 0..grid.nt() {
            let t = grid.time(level);
            phi.extend(positions.iter().map(|x| params.phi(domain, x, t)));
        }
        let phi_max = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        WeightGeometry {
            grid: Arc::new(grid.clone()),
            params: *params,
            psi_t: (0..grid.nt()).map(|l| params.psi_t(grid.time(l))).collect(),
            grad_psi: positions
                .iter()
                .map(|x| params.grad_psi(domain, x))
                .collect(),
            phi,
            phi_max,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &WeightParams {
        &self.params
    }

    /// φ at flat index `level * nspace + node`.
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Grid maximum of φ, the default normalization offset.
    pub fn phi_max(&self) -> f64 {
        self.phi_max
    }

    pub fn psi_t(&self, level: usize) -> f64 {
        self.psi_t[level]
    }

    pub fn psi_tt(&self) -> f64 {
        self.params.psi_tt()
    }

    pub fn grad_psi(&self, node: usize) -> Point {
        self.grad_psi[node]
    }

    pub fn lap_psi(&self) -> f64 {
        self.params.lap_psi(self.grid.domain())
    }

    /// |∇ψ|².
    pub fn grad_psi_sq(&self, node: usize) -> f64 {
        let g = self.grad_psi[node];
        g[0] * g[0] + g[1] * g[1]
    }

    /// A = |∂ₜψ|² − |∇ψ|².
    pub fn a(&self, level: usize, node: usize) -> f64 {
        self.psi_t[level].powi(2) - self.grad_psi_sq(node)
    }

    /// B = ∂ₜ²ψ − Δψ.
    pub fn b(&self) -> f64 {
        self.params.box_psi(self.grid.domain())
    }

    /// exp(k·s(φ − offset)) on the grid.
    pub fn weight(&self, k: f64, offset: f64) -> Field {
        let s = self.params.s;
        let values = self
            .phi
            .iter()
            .map(|p| (k * s * (p - offset)).exp())
            .collect();
        Field::from_shared(Arc::clone(&self.grid), values).with_log_offset(offset)
    }
}

/// `w = e^{s(φ − φ*)} v` with φ* the grid maximum of φ.
pub fn conjugate(v: &Field, params: &WeightParams) -> Field {
    let geo = WeightGeometry::new(v.grid(), params);
    let offset = geo.phi_max();
    v.mul(&geo.weight(1.0, offset)).with_log_offset(offset)
}

/// Inverse of [`conjugate`] for a field carrying its log offset.
pub fn deconjugate(w: &Field, params: &WeightParams) -> Result<Field> {
    let geo = WeightGeometry::new(w.grid(), params);
    let v = w
        .mul(&geo.weight(-1.0, w.log_offset()))
        .with_log_offset(0.0);
    if !v.all_finite() {
        return Err(Error::Overflow {
            context: format!("e^(-s phi) w with s = {}", params.s),
        });
    }
    Ok(v)
}

/// `e^{sφ}(∂ₜ² − Δ)(e^{−sφ} w)` by differencing the de-conjugated field.
pub fn apply_p_direct(w: &Field, params: &WeightParams) -> Result<Field> {
    let geo = WeightGeometry::new(w.grid(), params);
    let offset = w.log_offset();
    let inner = w.mul(&geo.weight(-1.0, offset));
    if !inner.all_finite() {
        return Err(Error::Overflow {
            context: format!("e^(-s phi) w in apply_p_direct with s = {}", params.s),
        });
    }
    let wave = dtt(&inner).sub(&laplacian(&inner));
    let p = wave.mul(&geo.weight(1.0, offset)).with_log_offset(offset);
    if !p.all_finite() {
        return Err(Error::Overflow {
            context: "e^(s phi) applied in apply_p_direct".into(),
        });
    }
    Ok(p)
}

/// Every piece of the splitting, evaluated from one set of derivatives of w.
#[derive(Debug, Clone)]
pub struct DecompositionTerms {
    pub p_expanded: Field,
    pub p1: Field,
    pub p2: Field,
    pub r1: Field,
    pub r2: Field,
    /// Largest magnitude among the individual summands of `p_expanded`,
    /// the reference scale for roundoff.
    pub scale: f64,
}

pub fn decompose(w: &Field, params: &WeightParams) -> DecompositionTerms {
    let geo = WeightGeometry::new(w.grid(), params);
    decompose_with(&geo, w)
}

pub(crate) fn decompose_with(geo: &WeightGeometry, w: &Field) -> DecompositionTerms {
    let p = geo.params();
    let (s, lam, alpha) = (p.s, p.lambda, p.alpha);
    let sg = s.powf(p.gamma);
    let b = geo.b();
    let wt = dt(w);
    let wtt = dtt(w);
    let gw = grad(w);
    let lw = laplacian(w);
    let n = geo.grid().nspace();
    let len = w.values().len();

    let mut out = [
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
    ];
    let mut scale = 0.0f64;
    for k in 0..len {
        let (level, node) = (k / n, k % n);
        let phi = geo.phi[k];
        let a = geo.a(level, node);
        let gp = geo.grad_psi(node);
        let wv = w.values()[k];
        let wtv = wt.values()[k];
        let gdot: f64 = gw
            .iter()
            .enumerate()
            .map(|(ax, g)| gp[ax] * g.values()[k])
            .sum();
        let g = geo.psi_t(level) * wtv - gdot;

        let t_tt = wtt.values()[k];
        let t_lap = -lw.values()[k];
        let t_zero = s * s * lam * lam * phi * phi * a * wv;
        let t_first = -2.0 * s * lam * phi * g;
        let t_box = -s * lam * phi * b * wv;
        let t_a = -s * lam * lam * phi * a * wv;

        out[0][k] = t_tt + t_first + t_zero + t_lap + t_box + t_a;
        out[1][k] = t_tt + t_lap + t_zero;
        out[2][k] = (alpha - 1.0) * s * lam * phi * b * wv + t_a + t_first - sg * wtv;
        out[3][k] = -alpha * s * lam * phi * b * wv;
        out[4][k] = sg * wtv;
        for t in [t_tt, t_lap, t_zero, t_first, t_box, t_a, sg * wtv] {
            scale = scale.max(t.abs());
        }
    }
    let grid = w.shared_grid();
    let offset = w.log_offset();
    let [pe, p1, p2, r1, r2] = out;
    let mk = |v: Vec<f64>| Field::from_shared(Arc::clone(&grid), v).with_log_offset(offset);
    DecompositionTerms {
        p_expanded: mk(pe),
        p1: mk(p1),
        p2: mk(p2),
        r1: mk(r1),
        r2: mk(r2),
        scale,
    }
}

/// Closed-form expansion of the conjugated operator, with ∂ and Δ of w by
/// finite differences and the ψ-derivatives exact.
pub fn apply_p_expanded(w: &Field, params: &WeightParams) -> Field {
    decompose(w, params).p_expanded
}

pub fn p1(w: &Field, params: &WeightParams) -> Field {
    decompose(w, params).p1
}

pub fn p2(w: &Field, params: &WeightParams) -> Field {
    decompose(w, params).p2
}

pub fn r1(w: &Field, params: &WeightParams) -> Field {
    decompose(w, params).r1
}

pub fn r2(w: &Field, params: &WeightParams) -> Field {
    decompose(w, params).r2
}

/// max |P − (P₁ + P₂ + R₁ + R₂)| relative to the largest summand.
pub fn check_decomposition(w: &Field, params: &WeightParams) -> f64 {
    let t = decompose(w, params);
    let sum = t.p1.add(&t.p2).add(&t.r1).add(&t.r2);
    let gap = t.p_expanded.sub(&sum).max_abs();
    if t.scale == 0.0 {
        gap
    } else {
        gap / t.scale
    }
}

/// |∫|P₁|² + |P₂|² + 2∫P₁P₂ − ∫|P − R₁ − R₂|²| / (1 + ∫|P − R₁ − R₂|²).
pub fn sos_identity(w: &Field, params: &WeightParams) -> f64 {
    let t = decompose(w, params);
    let squares = integrate_spacetime(&t.p1.mul(&t.p1)) + integrate_spacetime(&t.p2.mul(&t.p2));
    let cross = 2.0 * integrate_spacetime(&t.p1.mul(&t.p2));
    let rest = t.p_expanded.sub(&t.r1).sub(&t.r2);
    let target = integrate_spacetime(&rest.mul(&rest));
    (squares + cross - target).abs() / (1.0 + target)
}

/// max |P_direct − P_expanded| over the grid.
pub fn direct_expanded_gap(w: &Field, params: &WeightParams) -> Result<f64> {
    let direct = apply_p_direct(w, params)?;
    Ok(direct.sub(&apply_p_expanded(w, params)).max_abs())
}
