//! Box domains, the exterior observation point, the observed part of the
//! boundary, and the Carleman weights
//!
//! ```text
//! ψ(x, t) = |x − x₀|² − β t² + β₀,      φ(x, t) = exp(λ ψ(x, t)).
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// A point of ℝⁿ for n ≤ 2; unused coordinates are zero.
pub type Point = [f64; 2];

/// Margin added on top of [`DomainSpec::min_beta0`] when β₀ is chosen automatically.
pub const BETA0_MARGIN: f64 = 0.1;

/// Default exponent of the auxiliary first-order term `s^γ ∂ₜw`.
pub const DEFAULT_GAMMA: f64 = 0.5;

/// An interval (n = 1) or a rectangle (n = 2), the exterior point `x0`
/// and the final time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    dim: usize,
    lower: Point,
    upper: Point,
    x0: Point,
    t_final: f64,
}

impl DomainSpec {
    pub fn new(dim: usize, lower: Point, upper: Point, x0: Point, t_final: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::param("dim", format!("must be 1 or 2, got {dim}")));
        }
        for axis in 0..dim {
            let (a, b) = (lower[axis], upper[axis]);
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::param(
                    "bounds",
                    format!("axis {axis}: need lower < upper, got [{a}, {b}]"),
                ));
            }
            if !x0[axis].is_finite() {
                return Err(Error::param("x0", "coordinates must be finite"));
            }
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::param(
                "t_final",
                format!("must be > 0, got {t_final}"),
            ));
        }
        let mut lower = lower;
        let mut upper = upper;
        let mut x0 = x0;
        for axis in dim..2 {
            lower[axis] = 0.0;
            upper[axis] = 0.0;
            x0[axis] = 0.0;
        }
        let domain = DomainSpec {
            dim,
            lower,
            upper,
            x0,
            t_final,
        };
        if domain.min_dist_sq() <= 0.0 {
            return Err(Error::param(
                "x0",
                format!(
                    "{:?} must lie strictly outside the closed domain",
                    &x0[..dim]
                ),
            ));
        }
        Ok(domain)
    }

    pub fn interval(a: f64, b: f64, x0: f64, t_final: f64) -> Result<Self> {
        Self::new(1, [a, 0.0], [b, 0.0], [x0, 0.0], t_final)
    }

    pub fn rectangle(lower: Point, upper: Point, x0: Point, t_final: f64) -> Result<Self> {
        Self::new(2, lower, upper, x0, t_final)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> Point {
        self.lower
    }

    pub fn upper(&self) -> Point {
        self.upper
    }

    pub fn x0(&self) -> Point {
        self.x0
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Same domain with a different final time.
    pub fn with_t_final(&self, t_final: f64) -> Result<Self> {
        Self::new(self.dim, self.lower, self.upper, self.x0, t_final)
    }

    /// Rigid translation of both the domain and `x0`.
    pub fn translated(&self, shift: Point) -> Result<Self> {
        let mv = |p: Point| [p[0] + shift[0], p[1] + shift[1]];
        Self::new(
            self.dim,
            mv(self.lower),
            mv(self.upper),
            mv(self.x0),
            self.t_final,
        )
    }

    /// |x − x₀|² over the active coordinates.
    pub fn dist_sq(&self, x: &Point) -> f64 {
        (0..self.dim).map(|a| (x[a] - self.x0[a]).powi(2)).sum()
    }

    /// min over the closed domain of |x − x₀|².
    pub fn min_dist_sq(&self) -> f64 {
        (0..self.dim)
            .map(|a| {
                let nearest = self.x0[a].clamp(self.lower[a], self.upper[a]);
                (nearest - self.x0[a]).powi(2)
            })
            .sum()
    }

    /// max over the closed domain of |x − x₀|², attained at a vertex.
    pub fn max_dist_sq(&self) -> f64 {
        (0..self.dim)
            .map(|a| {
                let lo = (self.lower[a] - self.x0[a]).abs();
                let hi = (self.upper[a] - self.x0[a]).abs();
                lo.max(hi).powi(2)
            })
            .sum()
    }

    /// T₀ = sup over Ω of |x − x₀|, computed from the geometry.
    pub fn t0(&self) -> f64 {
        self.max_dist_sq().sqrt()
    }

    /// Smallest β₀ with ψ ≥ 1 on Ω̄ × [0, T].
    pub fn min_beta0(&self, beta: f64) -> f64 {
        1.0 - self.min_dist_sq() + beta * self.t_final * self.t_final
    }

    /// Sides of the box, each with its outward unit normal.
    pub fn sides(&self) -> Vec<Side> {
        let mut sides = Vec::with_capacity(2 * self.dim);
        for axis in 0..self.dim {
            for (sign, coord) in [(-1.0, self.lower[axis]), (1.0, self.upper[axis])] {
                let mut normal = [0.0; 2];
                normal[axis] = sign;
                sides.push(Side {
                    axis,
                    sign,
                    coord,
                    normal,
                });
            }
        }
        sides
    }

    /// Whether `x` on the boundary with outward normal `normal` satisfies
    /// (x − x₀)·ν ≥ 0.
    pub fn observes(&self, x: &Point, normal: &Point) -> bool {
        let dot: f64 = (0..self.dim).map(|a| (x[a] - self.x0[a]) * normal[a]).sum();
        dot >= 0.0
    }
}

/// One face of the box: the hyperplane `x[axis] = coord`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Side {
    pub axis: usize,
    /// +1 on the upper face, −1 on the lower face.
    pub sign: f64,
    pub coord: f64,
    pub normal: Point,
}

/// The interval (2β/(β+n), 2/(β+n)) of admissible α.
pub fn alpha_window(beta: f64, dim: usize) -> (f64, f64) {
    let n = dim as f64;
    (2.0 * beta / (beta + n), 2.0 / (beta + n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub beta: f64,
    pub beta0: f64,
    pub lambda: f64,
    pub s: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl WeightParams {
    /// Parameters with β₀ = min_beta0 + margin, α at the centre of its window
    /// and γ = 1/2.
    pub fn for_domain(domain: &DomainSpec, beta: f64, lambda: f64, s: f64) -> Self {
        let (lo, hi) = alpha_window(beta, domain.dim());
        WeightParams {
            beta,
            beta0: domain.min_beta0(beta) + BETA0_MARGIN,
            lambda,
            s,
            alpha: 0.5 * (lo + hi),
            gamma: DEFAULT_GAMMA,
        }
    }

    pub fn with_s(self, s: f64) -> Self {
        WeightParams { s, ..self }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        WeightParams { lambda, ..self }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        WeightParams { alpha, ..self }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        WeightParams { gamma, ..self }
    }

    pub fn with_beta0(self, beta0: f64) -> Self {
        WeightParams { beta0, ..self }
    }

    /// ψ(x, t) = |x − x₀|² − βt² + β₀.
    pub fn psi(&self, domain: &DomainSpec, x: &Point, t: f64) -> f64 {
        domain.dist_sq(x) - self.beta * t * t + self.beta0
    }

    /// φ(x, t) = exp(λψ(x, t)).
    pub fn phi(&self, domain: &DomainSpec, x: &Point, t: f64) -> f64 {
        (self.lambda * self.psi(domain, x, t)).exp()
    }

    /// ∂ₜψ = −2βt.
    pub fn psi_t(&self, t: f64) -> f64 {
        -2.0 * self.beta * t
    }

    /// ∂ₜ²ψ = −2β.
    pub fn psi_tt(&self) -> f64 {
        -2.0 * self.beta
    }

    /// ∇ψ = 2(x − x₀).
    pub fn grad_psi(&self, domain: &DomainSpec, x: &Point) -> Point {
        let x0 = domain.x0();
        let mut g = [0.0; 2];
        for a in 0..domain.dim() {
            g[a] = 2.0 * (x[a] - x0[a]);
        }
        g
    }

    /// Δψ = 2n.
    pub fn lap_psi(&self, domain: &DomainSpec) -> f64 {
        2.0 * domain.dim() as f64
    }

    /// ∂ₜ²ψ − Δψ = −2β − 2n.
    pub fn box_psi(&self, domain: &DomainSpec) -> f64 {
        self.psi_tt() - self.lap_psi(domain)
    }

    pub fn validate(&self, domain: &DomainSpec) -> ValidationReport {
        let mut checks = Vec::new();
        let beta_ok = self.beta > 0.0 && self.beta < 1.0;
        checks.push(Check::new(
            "beta_window",
            beta_ok,
            format!("beta = {} must lie in (0, 1)", self.beta),
        ));
        let needed = domain.min_beta0(self.beta);
        checks.push(Check::new(
            "beta0_sufficient",
            self.beta0 >= needed - 1e-12,
            format!(
                "beta0 = {} needs >= {} so that psi >= 1",
                self.beta0, needed
            ),
        ));
        let (lo, hi) = alpha_window(self.beta, domain.dim());
        checks.push(Check::new(
            "alpha_window",
            self.alpha > lo && self.alpha < hi,
            format!("alpha = {} must lie in ({lo}, {hi})", self.alpha),
        ));
        let t0 = domain.t0();
        checks.push(Check::new(
            "t_exceeds_t0",
            domain.t_final() > t0,
            format!("T = {} must exceed T0 = {t0}", domain.t_final()),
        ));
        checks.push(Check::new(
            "x0_exterior",
            domain.min_dist_sq() > 0.0,
            format!("dist(x0, closure) = {}", domain.min_dist_sq().sqrt()),
        ));
        let positive = self.lambda >= 0.0 && self.s >= 0.0 && self.gamma >= 0.0;
        checks.push(Check::new(
            "nonnegative_scales",
            positive,
            format!(
                "lambda = {}, s = {}, gamma = {} must be >= 0",
                self.lambda, self.s, self.gamma
            ),
        ));
        let passed = checks.iter().all(|c| c.passed);
        ValidationReport { checks, passed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// A boundary grid node together with the face it sits on.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryNode {
    /// Flat spatial index into the grid.
    pub index: usize,
    pub position: Point,
    /// Axis of the outward normal.
    pub axis: usize,
    /// +1 if the normal points towards increasing `axis`.
    pub sign: f64,
    pub normal: Point,
    /// Which face of the box the node belongs to (index into `DomainSpec::sides`).
    pub side: usize,
    /// Surface quadrature weight along the face (1 in 1D).
    pub weight: f64,
    pub in_gamma0: bool,
}

/// Boundary nodes of a grid, face by face. In 2D the corners appear once
/// per face they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPartition {
    nodes: Vec<BoundaryNode>,
}

impl BoundaryPartition {
    pub fn nodes(&self) -> &[BoundaryNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn gamma0_nodes(&self) -> impl Iterator<Item = &BoundaryNode> {
        self.nodes.iter().filter(|n| n.in_gamma0)
    }

    /// Faces (indices into `DomainSpec::sides`) fully contained in Γ₀.
    pub fn gamma0_sides(&self) -> Vec<usize> {
        let mut sides: Vec<usize> = self.nodes.iter().map(|n| n.side).collect();
        sides.dedup();
        sides
            .into_iter()
            .filter(|&s| {
                self.nodes
                    .iter()
                    .filter(|n| n.side == s)
                    .all(|n| n.in_gamma0)
            })
            .collect()
    }
}

/// Γ₀ = {x ∈ ∂Ω : (x − x₀)·ν(x) ≥ 0}, evaluated node by node.
pub fn gamma0(grid: &Grid) -> BoundaryPartition {
    let domain = grid.domain();
    let shape = grid.shape();
    let steps = grid.steps();
    let mut nodes = Vec::new();
    for (side_idx, side) in domain.sides().into_iter().enumerate() {
        let axis = side.axis;
        let fixed = if side.sign > 0.0 { shape[axis] - 1 } else { 0 };
        if domain.dim() == 1 {
            let position = grid.position(fixed);
            nodes.push(BoundaryNode {
                index: fixed,
                position,
                axis,
                sign: side.sign,
                normal: side.normal,
                side: side_idx,
                weight: 1.0,
                in_gamma0: domain.observes(&position, &side.normal),
            });
            continue;
        }
        let tangent = 1 - axis;
        let count = shape[tangent];
        for k in 0..count {
            let mut ij = [0usize; 2];
            ij[axis] = fixed;
            ij[tangent] = k;
            let index = ij[0] + shape[0] * ij[1];
            let position = grid.position(index);
            let end = k == 0 || k + 1 == count;
            let weight = if end { 0.5 } else { 1.0 } * steps[tangent];
            nodes.push(BoundaryNode {
                index,
                position,
                axis,
                sign: side.sign,
                normal: side.normal,
                side: side_idx,
                weight,
                in_gamma0: domain.observes(&position, &side.normal),
            });
        }
    }
    BoundaryPartition { nodes }
}

/// ψ sampled on the space–time grid.
pub fn psi_field(grid: &Grid, params: &WeightParams) -> Field {
    let domain = grid.domain().clone();
    Field::from_fn(grid, |x, t| params.psi(&domain, x, t))
}

/// φ sampled on the space–time grid.
pub fn phi_field(grid: &Grid, params: &WeightParams) -> Field {
    let domain = grid.domain().clone();
    Field::from_fn(grid, |x, t| params.phi(&domain, x, t))
}

/// `exp(2s(φ − φ*))` on the grid. With `normalize` the offset φ* is the grid
/// maximum of φ (so the largest value is exactly 1); otherwise φ* = 0 and an
/// overflow is an error. φ* is recorded as the field's log offset.
pub fn weight_field(grid: &Grid, params: &WeightParams, normalize: bool) -> Result<Field> {
    let phi = phi_field(grid, params);
    let offset = if normalize { phi.max() } else { 0.0 };
    let s = params.s;
    let weight = phi.map(|p| (2.0 * s * (p - offset)).exp());
    if !weight.all_finite() {
        return Err(Error::Overflow {
            context: format!(
                "unnormalized weight exp(2s*phi) with s = {s}, max phi = {}",
                phi.max()
            ),
        });
    }
    Ok(weight.with_log_offset(offset))
}
