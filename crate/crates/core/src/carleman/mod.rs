//! Both sides of the weighted estimate
//!
//! ```text
//! s^{1/2}∫e^{2sφ(0)}|∂ₜv(0)|² + s∫∫e^{2sφ}(|∂ₜv|² + |∇v|²) + s³∫∫e^{2sφ}|v|²
//!   ≤ M ∫∫e^{2sφ}|∂ₜ²v − Δv + qv|² + M s∫∫_{Γ₀}e^{2sφ}|∂_νv|²
//!     + M s∫e^{2sφ(T)}(|∂ₜv(T)|² + |∇v(T)|²) + M s³∫e^{2sφ(T)}|v(T)|²
//! ```
//!
//! and of its variants without the t = T terms, together with an empirical
//! estimate of M and s₀ over a family of test functions.

pub mod family;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::conjugation::WeightGeometry;
use crate::error::{Error, Result};
use crate::geometry::{gamma0, WeightParams};
use crate::grid::{
    dt, dtt, grad, integrate_boundary_time, integrate_space_at, integrate_spacetime, laplacian,
    normal_derivative, BoundaryMask, Field, SpatialField,
};

pub use self::family::{smooth_fields, test_family, FamilyMember, MemberKind};

const INITIAL_TOL: f64 = 1e-8;
const UNDERFLOW_FLAG: f64 = 0.9;
const TAIL_FACTOR: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// All terms, including those at t = T.
    Full,
    /// No t = T terms on the right.
    Remark,
    /// Only the t = 0 term on the left, no t = T terms on the right.
    RemarkT0Only,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::Remark, Variant::RemarkT0Only];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Remark => "remark",
            Variant::RemarkT0Only => "remark_t0_only",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::param("variant", format!("unknown variant `{s}`")))
    }
}

/// The seven terms, each scaled by `e^{−log_scale}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarlemanSides {
    pub lhs_t0: f64,
    pub lhs_grad: f64,
    pub lhs_zero: f64,
    pub rhs_residual: f64,
    pub rhs_boundary: f64,
    pub rhs_t_energy: f64,
    pub rhs_t_zero: f64,
    pub log_scale: f64,
}

impl CarlemanSides {
    pub fn lhs(&self, variant: Variant) -> f64 {
        match variant {
            Variant::Full | Variant::Remark => self.lhs_t0 + self.lhs_grad + self.lhs_zero,
            Variant::RemarkT0Only => self.lhs_t0,
        }
    }

    pub fn rhs(&self, variant: Variant) -> f64 {
        let base = self.rhs_residual + self.rhs_boundary;
        match variant {
            Variant::Full => base + self.rhs_t_energy + self.rhs_t_zero,
            Variant::Remark | Variant::RemarkT0Only => base,
        }
    }

    /// LHS/RHS with M = 1; `None` when both sides vanish, infinite when only
    /// the right side does.
    pub fn ratio(&self, variant: Variant) -> Option<f64> {
        let (l, r) = (self.lhs(variant), self.rhs(variant));
        if r > 0.0 {
            Some(l / r)
        } else if l > 0.0 {
            Some(f64::INFINITY)
        } else {
            None
        }
    }

    pub fn terms(&self) -> [f64; 7] {
        [
            self.lhs_t0,
            self.lhs_grad,
            self.lhs_zero,
            self.rhs_residual,
            self.rhs_boundary,
            self.rhs_t_energy,
            self.rhs_t_zero,
        ]
    }

    /// Right-hand terms entering `variant`, by name.
    pub fn rhs_terms(&self, variant: Variant) -> Vec<(&'static str, f64)> {
        let mut terms = vec![
            ("residual", self.rhs_residual),
            ("boundary", self.rhs_boundary),
        ];
        if variant == Variant::Full {
            terms.push(("t_energy", self.rhs_t_energy));
            terms.push(("t_zero", self.rhs_t_zero));
        }
        terms
    }
}

fn check_hypotheses(v: &Field, params: &WeightParams, variant: Variant) -> Result<()> {
    let norm = v.max_abs();
    let initial = v.level(0).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if initial > INITIAL_TOL * norm {
        return Err(Error::hypothesis(
            "initial_vanishing",
            format!("max |v(., 0)| = {initial:e} exceeds 1e-8 * {norm:e}"),
        ));
    }
    let domain = v.grid().domain();
    if variant != Variant::Full && domain.t_final() <= domain.t0() {
        return Err(Error::hypothesis(
            "t_exceeds_t0",
            format!("T = {} must exceed T0 = {}", domain.t_final(), domain.t0()),
        ));
    }
    if params.s < 0.0 {
        return Err(Error::param("s", "must be nonnegative"));
    }
    Ok(())
}

/// All seven terms with the weight `e^{2s(φ − φ*)}`, φ* the grid maximum.
pub fn assemble(
    v: &Field,
    q: &SpatialField,
    params: &WeightParams,
    variant: Variant,
) -> Result<CarlemanSides> {
    check_hypotheses(v, params, variant)?;
    Ok(assemble_shifted(v, q, params, 0.0).0)
}

/// Terms with weight `exp(2s(φ − φ*) − shift)`, plus the fraction of nodes
/// where that weight underflows to zero.
fn assemble_shifted(
    v: &Field,
    q: &SpatialField,
    params: &WeightParams,
    shift: f64,
) -> (CarlemanSides, f64) {
    let grid = v.grid();
    let geo = WeightGeometry::new(grid, params);
    let s = params.s;
    let offset = geo.phi_max();
    let weight = v.map_indexed(|level, node, _| {
        let phi = geo.phi()[level * grid.nspace() + node];
        (2.0 * s * (phi - offset) - shift).exp()
    });
    let underflow =
        weight.values().iter().filter(|&&w| w == 0.0).count() as f64 / weight.values().len() as f64;

    let vt = dt(v);
    let gv = grad(v);
    let mut grad_sq = vt.mul(&vt);
    for g in &gv {
        grad_sq = grad_sq.add(&g.mul(g));
    }
    let residual = dtt(v).sub(&laplacian(v)).add(&v.mul_spatial(q));
    let last = grid.nt() - 1;

    let lhs_t0 = s.sqrt() * integrate_space_at(&weight.mul(&vt).mul(&vt), 0);
    let lhs_grad = s * integrate_spacetime(&weight.mul(&grad_sq));
    let lhs_zero = s.powi(3) * integrate_spacetime(&weight.mul(v).mul(v));
    let rhs_residual = integrate_spacetime(&weight.mul(&residual).mul(&residual));

    let part = gamma0(grid);
    let dn = normal_derivative(v, &part);
    let nodes = part.nodes();
    let flux = dn.map_indexed(|level, j, d| weight.at(level, nodes[j].index) * d * d);
    let rhs_boundary = s * integrate_boundary_time(&flux, grid.tau(), BoundaryMask::Gamma0);

    let rhs_t_energy = s * integrate_space_at(&weight.mul(&grad_sq), last);
    let rhs_t_zero = s.powi(3) * integrate_space_at(&weight.mul(v).mul(v), last);

    let sides = CarlemanSides {
        lhs_t0,
        lhs_grad,
        lhs_zero,
        rhs_residual,
        rhs_boundary,
        rhs_t_energy,
        rhs_t_zero,
        log_scale: 2.0 * s * offset + shift,
    };
    (sides, underflow)
}

/// Largest relative change of the `variant` ratio when the weight exponent
/// is shifted by c ∈ {1, 10}.
pub fn weight_normalization_invariance(
    v: &Field,
    q: &SpatialField,
    params: &WeightParams,
    variant: Variant,
) -> f64 {
    let base = assemble_shifted(v, q, params, 0.0).0.ratio(variant);
    let Some(r0) = base.filter(|r| r.is_finite()) else {
        return 0.0;
    };
    [1.0, 10.0]
        .iter()
        .map(|&c| {
            let r = assemble_shifted(v, q, params, c)
                .0
                .ratio(variant)
                .unwrap_or(0.0);
            (r - r0).abs() / r0.abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// `e^{2sφ(x,t)} / e^{2sφ(x,0)}` at one node.
pub fn weight_ratio_to_initial(
    params: &WeightParams,
    geo: &WeightGeometry,
    level: usize,
    node: usize,
) -> f64 {
    let n = geo.grid().nspace();
    let (p, p0) = (geo.phi()[level * n + node], geo.phi()[node]);
    (2.0 * params.s * (p - p0)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarlemanRow {
    pub case: String,
    pub s: f64,
    pub lambda: f64,
    pub variant: Variant,
    pub sides: CarlemanSides,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: Option<f64>,
    pub underflow_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSummary {
    pub case: String,
    pub s0: Option<f64>,
    pub max_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantSummary {
    /// Largest ratio over all cases and all s ≥ s₀; `None` when no case has data.
    pub m_hat: Option<f64>,
    pub s0: Option<f64>,
    pub cases: Vec<CaseSummary>,
    /// Fraction of rows in which each right-hand term is the largest.
    pub dominance: BTreeMap<String, f64>,
    /// Cases with a vanishing right side but a positive left side.
    pub counterexamples: Vec<String>,
    /// (case, s) rows where more than 90% of the weights underflow.
    pub underflow_rows: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarlemanReport {
    pub variant: Variant,
    pub rows: Vec<CarlemanRow>,
    pub summary: ConstantSummary,
}

impl CarlemanReport {
    /// Largest finite ratio among rows with `s ≥ s_min`, per case.
    pub fn max_ratio_from(&self, s_min: f64) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for row in self.rows.iter().filter(|r| r.s >= s_min) {
            if let Some(r) = row.ratio.filter(|r| r.is_finite()) {
                let e = out.entry(row.case.clone()).or_insert(r);
                *e = f64::max(*e, r);
            }
        }
        out
    }
}

/// Smallest index from which `ratios` is non-increasing or stays within
/// 1.05 of its last value.
fn threshold_index(ratios: &[f64]) -> usize {
    let n = ratios.len();
    let last = ratios[n - 1];
    let mut mono = n - 1;
    while mono > 0 && ratios[mono - 1] >= ratios[mono] {
        mono -= 1;
    }
    let mut tail = n - 1;
    while tail > 0 && ratios[tail - 1] <= TAIL_FACTOR * last {
        tail -= 1;
    }
    mono.min(tail)
}

/// Sweep every member over `s_grid` (λ from `base`) and summarize.
pub fn estimate_constant(
    family: &[FamilyMember],
    base: &WeightParams,
    s_grid: &[f64],
    variant: Variant,
) -> Result<CarlemanReport> {
    if family.is_empty() || s_grid.is_empty() {
        return Err(Error::param("family", "family and s-grid must be nonempty"));
    }
    for m in family {
        check_hypotheses(&m.v, base, variant)
            .map_err(|e| Error::InvalidData(format!("{}: {e}", m.id)))?;
    }
    let cells: Vec<(usize, f64)> = (0..family.len())
        .flat_map(|i| s_grid.iter().map(move |&s| (i, s)))
        .collect();
    let mut rows: Vec<CarlemanRow> = cells
        .par_iter()
        .map(|&(i, s)| {
            let m = &family[i];
            let params = base.with_s(s);
            let (sides, underflow) = assemble_shifted(&m.v, &m.q, &params, 0.0);
            CarlemanRow {
                case: m.id.clone(),
                s,
                lambda: params.lambda,
                variant,
                lhs: sides.lhs(variant),
                rhs: sides.rhs(variant),
                ratio: sides.ratio(variant),
                sides,
                underflow_fraction: underflow,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.case.cmp(&b.case).then(a.s.total_cmp(&b.s)));
    let summary = summarize(&rows, variant);
    Ok(CarlemanReport {
        variant,
        rows,
        summary,
    })
}

fn summarize(rows: &[CarlemanRow], variant: Variant) -> ConstantSummary {
    let mut by_case: BTreeMap<&str, Vec<&CarlemanRow>> = BTreeMap::new();
    for r in rows {
        by_case.entry(&r.case).or_default().push(r);
    }
    let mut counterexamples = Vec::new();
    let mut cases = Vec::new();
    let mut s0_global: Option<f64> = None;
    for (case, list) in &by_case {
        if list.iter().any(|r| r.ratio == Some(f64::INFINITY)) {
            counterexamples.push(case.to_string());
        }
        let data: Vec<(f64, f64)> = list
            .iter()
            .filter_map(|r| r.ratio.filter(|x| x.is_finite()).map(|x| (r.s, x)))
            .collect();
        let s0 = if data.is_empty() {
            None
        } else {
            let ratios: Vec<f64> = data.iter().map(|d| d.1).collect();
            Some(data[threshold_index(&ratios)].0)
        };
        if let Some(s) = s0 {
            s0_global = Some(s0_global.map_or(s, |g: f64| g.max(s)));
        }
        cases.push((case.to_string(), s0, data));
    }
    let mut m_hat: Option<f64> = None;
    let cases = cases
        .into_iter()
        .map(|(case, s0, data)| {
            let cut = s0_global.unwrap_or(f64::INFINITY);
            let max_ratio = data
                .iter()
                .filter(|d| d.0 >= cut)
                .map(|d| d.1)
                .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
            if let Some(x) = max_ratio {
                m_hat = Some(m_hat.map_or(x, |m| m.max(x)));
            }
            CaseSummary {
                case,
                s0,
                max_ratio,
            }
        })
        .collect();

    let mut dominance: BTreeMap<String, f64> = BTreeMap::new();
    let mut counted = 0usize;
    for r in rows.iter().filter(|r| r.rhs > 0.0) {
        let terms = r.sides.rhs_terms(variant);
        for (name, _) in &terms {
            dominance.entry(name.to_string()).or_insert(0.0);
        }
        let (name, _) = terms
            .iter()
            .fold(terms[0], |best, t| if t.1 > best.1 { *t } else { best });
        *dominance.get_mut(name).unwrap() += 1.0;
        counted += 1;
    }
    if counted > 0 {
        for v in dominance.values_mut() {
            *v /= counted as f64;
        }
    }
    let underflow_rows = rows
        .iter()
        .filter(|r| r.underflow_fraction > UNDERFLOW_FLAG)
        .map(|r| (r.case.clone(), r.s))
        .collect();
    ConstantSummary {
        m_hat,
        s0: s0_global,
        cases,
        dominance,
        counterexamples,
        underflow_rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use crate::grid::Grid;
    use crate::wave::{solve, IbvpData};
    use std::f64::consts::PI;

    fn setup(nx: usize) -> (Grid, WeightParams) {
        let d = DomainSpec::interval(0.0, 1.0, -0.1, 1.5).unwrap();
        let g = Grid::build(&d, nx, 0.9).unwrap();
        (g.clone(), WeightParams::for_domain(&d, 0.5, 0.5, 2.0))
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("partial".parse::<Variant>().is_err());
    }

    #[test]
    fn zero_field_gives_zero_terms() {
        let (g, p) = setup(11);
        let z = Field::zeros(&g);
        let q = SpatialField::zeros(&g);
        let sides = assemble(&z, &q, &p, Variant::Full).unwrap();
        assert!(sides.terms().iter().all(|&t| t == 0.0));
        assert_eq!(sides.ratio(Variant::Full), None);
        assert_eq!(
            weight_normalization_invariance(&z, &q, &p, Variant::Full),
            0.0
        );
    }

    #[test]
    fn initial_hypothesis_is_checked() {
        let (g, p) = setup(11);
        let v = Field::from_fn(&g, |x, t| (PI * x[0]).sin() * (1.0 + t));
        let err = assemble(&v, &SpatialField::zeros(&g), &p, Variant::Full).unwrap_err();
        assert!(matches!(
            err,
            Error::Hypothesis {
                name: "initial_vanishing",
                ..
            }
        ));
    }

    #[test]
    fn remark_needs_long_time() {
        let d = DomainSpec::interval(0.0, 1.0, -0.1, 1.0).unwrap();
        let g = Grid::build(&d, 11, 0.9).unwrap();
        let p = WeightParams::for_domain(&d, 0.5, 0.5, 2.0);
        let v = Field::from_fn(&g, |x, t| (PI * x[0]).sin() * t);
        let q = SpatialField::zeros(&g);
        assert!(assemble(&v, &q, &p, Variant::Full).is_ok());
        let err = assemble(&v, &q, &p, Variant::Remark).unwrap_err();
        assert!(matches!(
            err,
            Error::Hypothesis {
                name: "t_exceeds_t0",
                ..
            }
        ));
    }

    #[test]
    fn quadratic_homogeneity() {
        let (g, p) = setup(21);
        let v = Field::from_fn(&g, |x, t| (PI * x[0]).sin() * t * (1.0 + t));
        let q = SpatialField::from_fn(&g, |x| 1.0 + x[0]);
        let a = assemble(&v, &q, &p, Variant::Full).unwrap();
        let b = assemble(&v.scale(2.0), &q, &p, Variant::Full).unwrap();
        for (x, y) in a.terms().iter().zip(b.terms()) {
            assert!((4.0 * x - y).abs() <= 1e-13 * y.abs());
        }
    }

    #[test]
    fn remark_sides_are_subsets() {
        let (g, p) = setup(21);
        let v = Field::from_fn(&g, |x, t| (PI * x[0]).sin() * (2.0 * t).sin());
        let s = assemble(&v, &SpatialField::zeros(&g), &p, Variant::Full).unwrap();
        assert!(s.lhs(Variant::RemarkT0Only) <= s.lhs(Variant::Remark));
        assert!(s.lhs(Variant::Remark) <= s.lhs(Variant::Full));
        assert!(s.rhs(Variant::Remark) <= s.rhs(Variant::Full));
    }

    #[test]
    fn weights_decrease_in_s_away_from_t0() {
        let (g, p) = setup(11);
        for level in [1, g.nt() / 2, g.nt() - 1] {
            for node in [0, 5, 10] {
                let mut prev = f64::INFINITY;
                for s in [1.0, 2.0, 5.0, 10.0] {
                    let pp = p.with_s(s);
                    let geo = WeightGeometry::new(&g, &pp);
                    let r = weight_ratio_to_initial(&pp, &geo, level, node);
                    assert!(r < prev);
                    prev = r;
                }
            }
        }
    }

    #[test]
    fn normalization_invariance_is_roundoff() {
        let (g, p) = setup(21);
        let v = Field::from_fn(&g, |x, t| (PI * x[0]).sin() * t);
        let q = SpatialField::zeros(&g);
        for (s, lam) in [(1.0, 0.5), (10.0, 0.5), (50.0, 1.0)] {
            let pp = p.with_s(s).with_lambda(lam);
            assert!(weight_normalization_invariance(&v, &q, &pp, Variant::Full) <= 1e-10);
        }
    }

    #[test]
    fn wave_solution_bound_is_carried_by_boundary_and_terminal_terms() {
        let (g, p) = setup(81);
        let q = SpatialField::zeros(&g);
        let data = IbvpData::dirichlet_zero(
            q.clone(),
            SpatialField::zeros(&g),
            SpatialField::from_fn(&g, |x| (PI * x[0]).sin()),
            None,
            0.0,
        )
        .unwrap();
        let v = solve(&data).unwrap().u;
        let sides = assemble(&v, &q, &p, Variant::Full).unwrap();
        let carried = sides.rhs_boundary + sides.rhs_t_energy + sides.rhs_t_zero;
        assert!(sides.rhs_residual < 1e-3 * carried);
        assert!(sides.ratio(Variant::Full).unwrap().is_finite());
    }

    #[test]
    fn threshold_rules() {
        assert_eq!(threshold_index(&[1.0, 3.0, 2.0, 1.0]), 1);
        assert_eq!(threshold_index(&[5.0, 1.0, 1.02, 1.0]), 1);
        assert_eq!(threshold_index(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(threshold_index(&[2.0]), 0);
    }

    #[test]
    fn estimate_on_small_family() {
        let (g, p) = setup(21);
        let fam = test_family(&g, 11, 3).unwrap();
        let rep = estimate_constant(&fam, &p, &[1.0, 2.0, 5.0], Variant::Full).unwrap();
        assert_eq!(rep.rows.len(), 9);
        assert!(rep.summary.m_hat.unwrap().is_finite());
        assert!(rep.summary.counterexamples.is_empty());
        let total: f64 = rep.summary.dominance.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let zero = vec![FamilyMember {
            id: "zero".into(),
            kind: MemberKind::Linear,
            v: Field::zeros(&g),
            q: SpatialField::zeros(&g),
        }];
        let rep = estimate_constant(&zero, &p, &[1.0], Variant::Full).unwrap();
        assert_eq!(rep.summary.m_hat, None);
    }
}
