//! Experiment configuration: a TOML file with one table per stage.
//!
//! Analytic inputs are named presets with coefficient lists. Every field but
//! the domain has a default, so a minimal file is
//!
//! ```toml
//! [domain]
//! lower = [0.0]
//! upper = [1.0]
//! x0 = [-0.1]
//! t_final = 1.5
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::carleman::Variant;
use crate::error::{Error, Result};
use crate::geometry::{alpha_window, DomainSpec, Point, WeightParams};
use crate::grid::{cfl_bound, Grid, SpatialField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub weights: WeightsBlock,
    #[serde(default)]
    pub scenario: ScenarioBlock,
    #[serde(default)]
    pub decomp: DecompBlock,
    #[serde(default)]
    pub crossterms: CrossTermsBlock,
    #[serde(default)]
    pub carleman: CarlemanBlock,
    #[serde(default)]
    pub kdecay: KDecayBlock,
    #[serde(default)]
    pub run: RunBlock,
}

/// Ω = Π [lower_i, upper_i], one entry per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub x0: Vec<f64>,
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridBlock {
    pub nx: usize,
    pub cfl: f64,
    /// Number of grids in refinement studies, each twice as fine.
    pub levels: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock {
            nx: 101,
            cfl: 0.9,
            levels: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Beta0Repr", into = "Beta0Repr")]
pub enum Beta0 {
    /// Smallest admissible value plus a fixed margin.
    Auto,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Beta0Repr {
    Number(f64),
    Word(String),
}

impl TryFrom<Beta0Repr> for Beta0 {
    type Error = String;

    fn try_from(r: Beta0Repr) -> std::result::Result<Self, String> {
        match r {
            Beta0Repr::Number(x) => Ok(Beta0::Value(x)),
            Beta0Repr::Word(w) if w == "auto" => Ok(Beta0::Auto),
            Beta0Repr::Word(w) => Err(format!("beta0 must be a number or \"auto\", got \"{w}\"")),
        }
    }
}

impl From<Beta0> for Beta0Repr {
    fn from(b: Beta0) -> Self {
        match b {
            Beta0::Auto => Beta0Repr::Word("auto".into()),
            Beta0::Value(x) => Beta0Repr::Number(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsBlock {
    pub beta: f64,
    pub beta0: Beta0,
    pub lambda: Vec<f64>,
    pub s: Vec<f64>,
    pub gamma: f64,
    /// Centre of the admissible window when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl Default for WeightsBlock {
    fn default() -> Self {
        WeightsBlock {
            beta: 0.5,
            beta0: Beta0::Auto,
            lambda: vec![0.5],
            s: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
            gamma: 0.5,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetKind {
    /// `c₀`.
    Constant,
    /// `c₀ + Σ_{j≥1} c_j Π_i sin(jπξ_i)` with ξ the normalized coordinate.
    SineSeries,
    /// `a·exp(−|ξ − c|²/(2w²))` from `[a, c, w]`.
    Gaussian,
}

/// A named analytic function of x with its coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub preset: PresetKind,
    pub coeffs: Vec<f64>,
}

impl Preset {
    pub fn constant(c: f64) -> Self {
        Preset {
            preset: PresetKind::Constant,
            coeffs: vec![c],
        }
    }

    pub fn sine_series(coeffs: &[f64]) -> Self {
        Preset {
            preset: PresetKind::SineSeries,
            coeffs: coeffs.to_vec(),
        }
    }

    fn check(&self, path: &str) -> Result<()> {
        let ok = match self.preset {
            PresetKind::Constant => self.coeffs.len() == 1,
            PresetKind::SineSeries => !self.coeffs.is_empty(),
            PresetKind::Gaussian => self.coeffs.len() == 3 && self.coeffs[2] > 0.0,
        };
        if !ok {
            let need = match self.preset {
                PresetKind::Constant => "exactly one coefficient",
                PresetKind::SineSeries => "at least one coefficient",
                PresetKind::Gaussian => "[amplitude, centre, width] with width > 0",
            };
            return Err(Error::config(
                format!("{path}.coeffs"),
                format!("preset needs {need}"),
            ));
        }
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::config(
                format!("{path}.coeffs"),
                "coefficients must be finite",
            ));
        }
        Ok(())
    }

    pub fn eval(&self, domain: &DomainSpec, x: &Point) -> f64 {
        let dim = domain.dim();
        let xi: Vec<f64> = (0..dim)
            .map(|a| (x[a] - domain.lower()[a]) / domain.length(a))
            .collect();
        let c = &self.coeffs;
        match self.preset {
            PresetKind::Constant => c[0],
            PresetKind::SineSeries => {
                let mut v = c[0];
                for (j, cj) in c.iter().enumerate().skip(1) {
                    let prod: f64 = xi.iter().map(|&s| (j as f64 * PI * s).sin()).product();
                    v += cj * prod;
                }
                v
            }
            PresetKind::Gaussian => {
                let r2: f64 = xi.iter().map(|&s| (s - c[1]).powi(2)).sum();
                c[0] * (-r2 / (2.0 * c[2] * c[2])).exp()
            }
        }
    }

    pub fn sample(&self, grid: &Grid) -> SpatialField {
        let domain = grid.domain().clone();
        SpatialField::from_fn(grid, |x| self.eval(&domain, x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Dirichlet data equal to `u0` on ∂Ω for all t.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioBlock {
    pub u0: Preset,
    pub u1: Preset,
    pub q1: Preset,
    /// Direction of the perturbation `q₂ = q₁ + ε·shape`.
    pub shape: Preset,
    pub boundary: BoundaryKind,
    pub epsilon: f64,
    pub epsilons: Vec<f64>,
    pub m: f64,
    pub m0: f64,
    pub big_m0: f64,
    /// Carleman parameter used for the weighted trace norm.
    pub s: f64,
    /// s values at which the absorption step is checked.
    pub absorption_s: Vec<f64>,
}

impl Default for ScenarioBlock {
    fn default() -> Self {
        ScenarioBlock {
            u0: Preset::sine_series(&[2.0, 1.0]),
            u1: Preset::constant(0.0),
            q1: Preset::constant(0.0),
            shape: Preset::sine_series(&[0.0, 0.0, 1.0]),
            boundary: BoundaryKind::Static,
            epsilon: 0.01,
            epsilons: vec![1e-3, 1e-2, 1e-1],
            m: 1.0,
            m0: 2.0,
            big_m0: 100.0,
            s: 1.0,
            absorption_s: vec![1.0, 16.0, 256.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecompBlock {
    pub nx: usize,
    pub fields: usize,
    pub s: Vec<f64>,
    pub lambda: f64,
}

impl Default for DecompBlock {
    fn default() -> Self {
        DecompBlock {
            nx: 41,
            fields: 10,
            s: vec![1.0, 10.0, 50.0],
            lambda: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossTermsBlock {
    pub nx: usize,
    pub s: f64,
    pub lambda: f64,
    pub alpha: f64,
}

impl Default for CrossTermsBlock {
    fn default() -> Self {
        CrossTermsBlock {
            nx: 161,
            s: 1.3,
            lambda: 0.5,
            alpha: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarlemanBlock {
    pub family_size: usize,
    /// Smallest s entering the per-case maximum compared with the baseline.
    pub s_check_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_m_hat: Option<f64>,
    /// Allowed relative excess over the baseline.
    pub tolerance: f64,
}

impl Default for CarlemanBlock {
    fn default() -> Self {
        CarlemanBlock {
            family_size: 20,
            s_check_min: 10.0,
            baseline_m_hat: None,
            tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KDecayBlock {
    pub s: Vec<f64>,
    /// k_max at the largest s must fall below this fraction of T.
    pub threshold_fraction: f64,
}

impl Default for KDecayBlock {
    fn default() -> Self {
        KDecayBlock {
            s: (0..=14).map(|k| f64::powi(2.0, k)).collect(),
            threshold_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    pub seed: u64,
    pub out: String,
    pub variant: String,
}

impl Default for RunBlock {
    fn default() -> Self {
        RunBlock {
            seed: 20240601,
            out: "out".into(),
            variant: "full".into(),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn positive_list(path: &str, xs: &[f64], allow_zero: bool) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::config(path, "must not be empty"));
    }
    for x in xs {
        let ok = x.is_finite() && if allow_zero { *x >= 0.0 } else { *x > 0.0 };
        if !ok {
            let what = if allow_zero {
                "nonnegative"
            } else {
                "positive"
            };
            return Err(Error::config(
                path,
                format!("entries must be finite and {what}, got {x}"),
            ));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parse and validate.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn domain_spec(&self) -> Result<DomainSpec> {
        let d = &self.domain;
        let dim = d.lower.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::config("domain.lower", "must have 1 or 2 entries"));
        }
        for (name, v) in [("domain.upper", &d.upper), ("domain.x0", &d.x0)] {
            if v.len() != dim {
                return Err(Error::config(
                    name,
                    format!("must have {dim} entries like domain.lower"),
                ));
            }
        }
        let point = |v: &[f64]| -> Point { [v[0], v.get(1).copied().unwrap_or(0.0)] };
        DomainSpec::new(
            dim,
            point(&d.lower),
            point(&d.upper),
            point(&d.x0),
            d.t_final,
        )
        .map_err(|e| match e {
            Error::InvalidParameter { name, message } => {
                let field = match name {
                    "bounds" => "upper",
                    "t_final" => "t_final",
                    other => other,
                };
                Error::config(format!("domain.{field}"), message)
            }
            other => other,
        })
    }

    pub fn variant(&self) -> Result<Variant> {
        self.run.variant.parse().map_err(|_| {
            Error::config("run.variant", "must be one of full, remark, remark_t0_only")
        })
    }

    /// Weight parameters for the given (λ, s), with β₀ and α resolved.
    pub fn weight_params(&self, domain: &DomainSpec, lambda: f64, s: f64) -> WeightParams {
        let w = &self.weights;
        let mut p = WeightParams::for_domain(domain, w.beta, lambda, s).with_gamma(w.gamma);
        if let Beta0::Value(b) = w.beta0 {
            p = p.with_beta0(b);
        }
        if let Some(a) = w.alpha {
            p = p.with_alpha(a);
        }
        p
    }

    /// Base grid of the configuration.
    pub fn grid(&self) -> Result<Grid> {
        Grid::build(&self.domain_spec()?, self.grid.nx, self.grid.cfl)
    }

    pub fn validate(&self) -> Result<()> {
        let domain = self.domain_spec()?;
        let g = &self.grid;
        if g.nx < 3 {
            return Err(Error::config("grid.nx", "must be at least 3"));
        }
        let bound = cfl_bound(domain.dim());
        if !(g.cfl > 0.0 && g.cfl <= bound) {
            return Err(Error::config(
                "grid.cfl",
                format!("must lie in (0, {bound}]"),
            ));
        }
        if !(1..=6).contains(&g.levels) {
            return Err(Error::config("grid.levels", "must lie in 1..=6"));
        }

        let w = &self.weights;
        if !(w.beta > 0.0 && w.beta < 1.0) {
            return Err(Error::config(
                "weights.beta",
                format!("{} is outside the open window (0, 1)", w.beta),
            ));
        }
        if let Beta0::Value(b) = w.beta0 {
            let min = domain.min_beta0(w.beta);
            if !(b.is_finite() && b > min) {
                return Err(Error::config(
                    "weights.beta0",
                    format!("must exceed {min}, got {b}"),
                ));
            }
        }
        positive_list("weights.lambda", &w.lambda, false)?;
        positive_list("weights.s", &w.s, false)?;
        if !(w.gamma >= 0.0 && w.gamma.is_finite()) {
            return Err(Error::config(
                "weights.gamma",
                "must be finite and nonnegative",
            ));
        }
        if let Some(a) = w.alpha {
            let (lo, hi) = alpha_window(w.beta, domain.dim());
            if !(a > lo && a < hi) {
                return Err(Error::config(
                    "weights.alpha",
                    format!("must lie in ({lo}, {hi})"),
                ));
            }
        }

        let sc = &self.scenario;
        for (path, p) in [
            ("scenario.u0", &sc.u0),
            ("scenario.u1", &sc.u1),
            ("scenario.q1", &sc.q1),
            ("scenario.shape", &sc.shape),
        ] {
            p.check(path)?;
        }
        if !sc.epsilon.is_finite() {
            return Err(Error::config("scenario.epsilon", "must be finite"));
        }
        positive_list("scenario.epsilons", &sc.epsilons, false)?;
        for (path, x) in [
            ("scenario.m", sc.m),
            ("scenario.m0", sc.m0),
            ("scenario.big_m0", sc.big_m0),
        ] {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::config(path, "must be finite and positive"));
            }
        }
        positive_list("scenario.s", &[sc.s], false)?;
        positive_list("scenario.absorption_s", &sc.absorption_s, false)?;

        if self.decomp.nx < 5 {
            return Err(Error::config("decomp.nx", "must be at least 5"));
        }
        if self.decomp.fields == 0 {
            return Err(Error::config("decomp.fields", "must be positive"));
        }
        positive_list("decomp.s", &self.decomp.s, false)?;
        positive_list("decomp.lambda", &[self.decomp.lambda], false)?;

        let ct = &self.crossterms;
        if ct.nx < 5 {
            return Err(Error::config("crossterms.nx", "must be at least 5"));
        }
        positive_list("crossterms.s", &[ct.s], false)?;
        positive_list("crossterms.lambda", &[ct.lambda], false)?;
        if !ct.alpha.is_finite() {
            return Err(Error::config("crossterms.alpha", "must be finite"));
        }

        let c = &self.carleman;
        if c.family_size == 0 {
            return Err(Error::config("carleman.family_size", "must be positive"));
        }
        if !(c.tolerance >= 0.0) {
            return Err(Error::config("carleman.tolerance", "must be nonnegative"));
        }
        if let Some(m) = c.baseline_m_hat {
            positive_list("carleman.baseline_m_hat", &[m], false)?;
        }

        positive_list("kdecay.s", &self.kdecay.s, false)?;
        if !(self.kdecay.threshold_fraction > 0.0) {
            return Err(Error::config(
                "kdecay.threshold_fraction",
                "must be positive",
            ));
        }

        self.variant()?;
        if self.run.out.is_empty() {
            return Err(Error::config("run.out", "must not be empty"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[domain]\nlower = [0.0]\nupper = [1.0]\nx0 = [-0.1]\nt_final = 1.5\n";

    fn with(extra: &str) -> String {
        format!("{MINIMAL}{extra}")
    }

    fn config_path(text: &str) -> String {
        match ExperimentConfig::from_toml(text) {
            Err(Error::Config { path, .. }) => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.grid, GridBlock::default());
        assert_eq!(cfg.weights.beta0, Beta0::Auto);
        let d = cfg.domain_spec().unwrap();
        let p = cfg.weight_params(&d, 0.5, 1.0);
        assert!((p.beta0 - 2.215).abs() < 1e-12);
        assert_eq!(cfg.variant().unwrap(), Variant::Full);
    }

    #[test]
    fn beta_outside_window_names_field() {
        let err = ExperimentConfig::from_toml(&with("[weights]\nbeta = 1.5\n")).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("weights.beta") && msg.contains("(0, 1)"),
            "{msg}"
        );
    }

    #[test]
    fn field_paths_are_precise() {
        assert_eq!(config_path(&with("[grid]\ncfl = 1.2\n")), "grid.cfl");
        assert_eq!(
            config_path(&with("[weights]\nbeta0 = 1.0\n")),
            "weights.beta0"
        );
        assert_eq!(
            config_path(&with("[weights]\nlambda = []\n")),
            "weights.lambda"
        );
        assert_eq!(
            config_path(&with("[run]\nvariant = \"both\"\n")),
            "run.variant"
        );
        assert_eq!(
            config_path(&with(
                "[scenario.u0]\npreset = \"constant\"\ncoeffs = [1, 2]\n"
            )),
            "scenario.u0.coeffs"
        );
        let bad_x0 = "[domain]\nlower = [0.0]\nupper = [1.0]\nx0 = [0.5]\nt_final = 1.5\n";
        assert_eq!(config_path(bad_x0), "domain.x0");
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let text = with("[grid]\nnx = \"many\"\n");
        match ExperimentConfig::from_toml(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
        let unknown = with("[grid]\nnxx = 3\n");
        assert!(matches!(
            ExperimentConfig::from_toml(&unknown),
            Err(Error::Parse { line: 7, .. })
        ));
        let word = with("[weights]\nbeta0 = \"big\"\n");
        assert!(matches!(
            ExperimentConfig::from_toml(&word),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn round_trip_and_hash() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.weights.beta0 = Beta0::Value(3.0);
        cfg.weights.alpha = Some(0.8);
        cfg.carleman.baseline_m_hat = Some(0.01);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 64);
        let other = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn presets_evaluate() {
        let d = DomainSpec::interval(0.0, 2.0, -0.1, 1.5).unwrap();
        let p = Preset::sine_series(&[2.0, 1.0]);
        assert!((p.eval(&d, &[1.0, 0.0]) - 3.0).abs() < 1e-15);
        let g = Preset {
            preset: PresetKind::Gaussian,
            coeffs: vec![2.0, 0.5, 0.1],
        };
        assert_eq!(g.eval(&d, &[1.0, 0.0]), 2.0);
        assert_eq!(Preset::constant(4.0).eval(&d, &[0.3, 0.0]), 4.0);
    }

    #[test]
    fn shipped_reference_config_is_valid() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.run.seed, 20240601);
        assert_eq!(cfg.carleman.family_size, 20);
    }
}
