//! Batch orchestration: each subcommand computes its tables, checks its
//! invariants and writes CSV files plus a `summary.json`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::carleman::{
    estimate_constant, smooth_fields, test_family, weight_normalization_invariance, Variant,
};
use crate::config::{BoundaryKind, ExperimentConfig};
use crate::conjugation::{
    check_decomposition, cross_term_refinement, crossterm_test_field, direct_expanded_gap,
    sos_identity,
};
use crate::error::{Error, Result};
use crate::geometry::{phi_field, psi_field};
use crate::grid::{Grid, SpatialField};
use crate::report::{emit_reports, format_number, to_sorted_json, Cell, CsvTable};
use crate::stability::{
    absorption_check, c_emp_spread, k_table, run_twin, scaling_study, strictly_decreasing,
    TwinConfig,
};
use crate::wave::mms_convergence;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SUMMARY_FILE: &str = "summary.json";

const MMS_RATIO: (f64, f64) = (3.4, 4.6);
const DECOMP_TOL: f64 = 1e-10;
const SOS_TOL: f64 = 1e-12;
const ALGEBRAIC_TOL: f64 = 1e-10;
const REFINEMENT_FACTOR: f64 = 2.0;
const INVARIANCE_TOL: f64 = 1e-8;
const TWIN_ZERO_TOL: f64 = 1e-12;
const C_EMP_SPREAD: f64 = 3.0;
const MIN_ORDER: f64 = 1.9;
const V_GAP_TOL: f64 = 5e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Weights,
    Forward,
    Decomp,
    Crossterms,
    Carleman,
    Stability,
    Kdecay,
    All,
}

impl Subcommand {
    /// Every concrete stage in dependency order.
    pub const STAGES: [Subcommand; 7] = [
        Subcommand::Weights,
        Subcommand::Forward,
        Subcommand::Decomp,
        Subcommand::Crossterms,
        Subcommand::Carleman,
        Subcommand::Stability,
        Subcommand::Kdecay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Weights => "weights",
            Subcommand::Forward => "forward",
            Subcommand::Decomp => "decomp",
            Subcommand::Crossterms => "crossterms",
            Subcommand::Carleman => "carleman",
            Subcommand::Stability => "stability",
            Subcommand::Kdecay => "kdecay",
            Subcommand::All => "all",
        }
    }

    fn stages(self) -> Vec<Subcommand> {
        if self == Subcommand::All {
            Self::STAGES.to_vec()
        } else {
            vec![self]
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::STAGES
            .into_iter()
            .chain([Subcommand::All])
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::param("subcommand", format!("unknown subcommand `{s}`")))
    }
}

/// One named invariant checked during a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The stage aborted, e.g. on a violated hypothesis.
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct SectionSummary {
    pub status: Status,
    pub assertions: Vec<Assertion>,
    pub artifacts: Vec<PathBuf>,
    pub wall_time_s: f64,
    pub details: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub version: String,
    pub config_hash: String,
    pub subcommand: Subcommand,
    pub seed: u64,
    pub sections: BTreeMap<String, SectionSummary>,
    /// `<stage>.<assertion>` for every failed check.
    pub failures: Vec<String>,
    /// Every CSV file written, in stage order.
    pub artifacts: Vec<PathBuf>,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Default)]
struct Checks(Vec<Assertion>);

impl Checks {
    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.0.push(Assertion {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

struct StageOutput {
    tables: Vec<CsvTable>,
    checks: Checks,
    details: Value,
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format_number(x)
    } else {
        x.to_string()
    }
}

/// Run `cmd` with `cfg`, writing artifacts under `out_dir`.
pub fn run_subcommand(
    cmd: Subcommand,
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<RunSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let mut sections = BTreeMap::new();
    let mut failures = Vec::new();
    let mut artifacts = Vec::new();
    for stage in cmd.stages() {
        let t0 = Instant::now();
        let mut section = match run_stage(stage, cfg) {
            Ok(out) => {
                let paths = emit_reports(&out.tables, None, out_dir)?;
                let ok = out.checks.0.iter().all(|a| a.passed);
                SectionSummary {
                    status: if ok { Status::Pass } else { Status::Fail },
                    assertions: out.checks.0,
                    artifacts: paths,
                    wall_time_s: 0.0,
                    details: out.details,
                }
            }
            Err(e @ (Error::Io { .. } | Error::Config { .. } | Error::Parse { .. })) => {
                return Err(e)
            }
            Err(e) => SectionSummary {
                status: Status::Error,
                assertions: vec![Assertion {
                    name: error_name(&e),
                    passed: false,
                    detail: e.to_string(),
                }],
                artifacts: Vec::new(),
                wall_time_s: 0.0,
                details: Value::Null,
            },
        };
        section.wall_time_s = t0.elapsed().as_secs_f64();
        for a in section.assertions.iter().filter(|a| !a.passed) {
            failures.push(format!("{stage}.{}", a.name));
        }
        artifacts.extend(section.artifacts.iter().cloned());
        sections.insert(stage.name().to_string(), section);
    }
    let summary = RunSummary {
        version: VERSION.to_string(),
        config_hash: cfg.hash(),
        subcommand: cmd,
        seed: cfg.run.seed,
        sections,
        failures,
        artifacts,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let value = to_sorted_json(&summary);
    emit_reports(&[], Some((SUMMARY_FILE, &value)), out_dir)?;
    Ok(summary)
}

fn error_name(e: &Error) -> String {
    match e {
        Error::Hypothesis { name, .. } => format!("hypothesis.{name}"),
        Error::InvalidParameter { name, .. } => format!("parameter.{name}"),
        Error::Overflow { .. } => "overflow".into(),
        Error::Instability { .. } => "instability".into(),
        _ => "error".into(),
    }
}

fn run_stage(stage: Subcommand, cfg: &ExperimentConfig) -> Result<StageOutput> {
    match stage {
        Subcommand::Weights => weights_stage(cfg),
        Subcommand::Forward => forward_stage(cfg),
        Subcommand::Decomp => decomp_stage(cfg),
        Subcommand::Crossterms => crossterms_stage(cfg),
        Subcommand::Carleman => carleman_stage(cfg),
        Subcommand::Stability => stability_stage(cfg),
        Subcommand::Kdecay => kdecay_stage(cfg),
        Subcommand::All => unreachable!("expanded by stages()"),
    }
}

fn coordinate_header(dim: usize) -> Vec<&'static str> {
    if dim == 2 {
        vec!["x1", "x2"]
    } else {
        vec!["x1"]
    }
}

fn weights_stage(cfg: &ExperimentConfig) -> Result<StageOutput> {
    let grid = cfg.grid()?;
    let domain = grid.domain();
    let dim = grid.dim();
    let mut header = vec!["lambda", "t"];
    header.extend(coordinate_header(dim));
    header.extend(["psi", "phi"]);
    let mut table = CsvTable::new("weights", &header);
    let mut checks = Checks::default();
    let mut validations = Vec::new();
    for &lambda in &cfg.weights.lambda {
        let params = cfg.weight_params(domain, lambda, cfg.weights.s[0]);
        let report = params.validate(domain);
        for c in &report.checks {
            checks.check(
                format!("lambda={}.{}", num(lambda), c.name),
                c.passed,
                c.detail.clone(),
            );
        }
        validations.push(json!({ "lambda": lambda, "params": to_sorted_json(&params), "checks": to_sorted_json(&report.checks) }));
        let psi = psi_field(&grid, &params);
        let phi = phi_field(&grid, &params);
        for level in 0..grid.nt() {
            for node in 0..grid.nspace() {
                let x = grid.position(node);
                let mut row: Vec<Cell> = vec![lambda.into(), grid.time(level).into()];
                row.extend(x[..dim].iter().map(|&c| Cell::from(c)));
                row.push(psi.at(level, node).into());
                row.push(phi.at(level, node).into());
                table.push(row);
            }
        }
    }
    Ok(StageOutput {
        tables: vec![table],
        checks,
        details: json!({ "t0": domain.t0(), "validation": validations }),
    })
}

fn forward_stage(cfg: &ExperimentConfig) -> Result<StageOutput> {
    let domain = cfg.domain_spec()?;
    let rows = mms_convergence(&domain, cfg.grid.nx, cfg.grid.cfl, cfg.grid.levels.max(2))?;
    let mut table = CsvTable::new(
        "forward",
        &["nx", "h", "tau", "l2_error", "max_residual", "ratio"],
    );
    let mut checks = Checks::default();
    for r in &rows {
        table.push(vec![
            r.nx.into(),
            r.h.into(),
            r.tau.into(),
            r.l2_error.into(),
            r.max_residual.into(),
            r.ratio.into(),
        ]);
        if let Some(ratio) = r.ratio {
            checks.check(
                format!("mms_ratio_nx{}", r.nx),
                (MMS_RATIO.0..=MMS_RATIO.1).contains(&ratio),
                format!(
                    "error ratio {} against [{}, {}]",
                    num(ratio),
                    MMS_RATIO.0,
                    MMS_RATIO.1
                ),
            );
        }
    }
    Ok(StageOutput {
        tables: vec![table],
        checks,
        details: json!({ "manufactured_solution": "(1 + t^2) exp(x1 + x2), q = 1" }),
    })
}

fn refined_nx(nx: usize, level: usize) -> usize {
    (nx - 1) * (1 << level) + 1
}

struct DecompRow {
    level: usize,
    nx: usize,
    field: usize,
    s: f64,
    decomposition: f64,
    sos: f64,
    direct_gap: Option<f64>,
}

fn decomp_stage(cfg: &ExperimentConfig) -> Result<StageOutput> {
    let domain = cfg.domain_spec()?;
    let dc = &cfg.decomp;
    let mut cells = Vec::new();
    for level in 0..cfg.grid.levels {
        let grid = Grid::build(&domain, refined_nx(dc.nx, level), cfg.grid.cfl)?;
        let fields = smooth_fields(&grid, cfg.run.seed, dc.fields);
        for (i, f) in fields.into_iter().enumerate() {
            for &s in &dc.s {
                cells.push((level, grid.shape()[0], i, s, f.clone()));
            }
        }
    }
    let rows: Vec<DecompRow> = cells
        .par_iter()
        .map(|(level, nx, field, s, f)| {
            let params = cfg.weight_params(&domain, dc.lambda, *s);
            DecompRow {
                level: *level,
                nx: *nx,
                field: *field,
                s: *s,
                decomposition: check_decomposition(f, &params),
                sos: sos_identity(f, &params),
                direct_gap: direct_expanded_gap(f, &params).ok(),
            }
        })
        .collect();
    let mut table = CsvTable::new(
        "decomp",
        &[
            "level",
            "nx",
            "field",
            "s",
            "decomposition_residual",
            "sos_residual",
            "direct_gap",
        ],
    );
    let (mut worst_dec, mut worst_sos) = (0.0f64, 0.0f64);
    for r in &rows {
        worst_dec = worst_dec.max(r.decomposition);
        worst_sos = worst_sos.max(r.sos);
        table.push(vec![
            r.level.into(),
            r.nx.into(),
            r.field.into(),
            r.s.into(),
            r.decomposition.into(),
            r.sos.into(),
            r.direct_gap.into(),
        ]);
    }
    let mut checks = Checks::default();
    checks.check(
        "decomposition_identity",
        worst_dec <= DECOMP_TOL,
        format!(
            "max relative residual {} (tolerance {DECOMP_TOL:e})",
            num(worst_dec)
        ),
    );
    checks.check(
        "sum_of_squares_identity",
        worst_sos <= SOS_TOL,
        format!(
            "max relative residual {} (tolerance {SOS_TOL:e})",
            num(worst_sos)
        ),
    );
    Ok(StageOutput {
        tables: vec![table],
        checks,
        details: json!({ "max_decomposition_residual": worst_dec, "max_sos_residual": worst_sos }),
    })
}

fn crossterms_stage(cfg: &ExperimentConfig) -> Result<StageOutput> {
    let domain = cfg.domain_spec()?;
    let ct = &cfg.crossterms;
    let params = cfg
        .weight_params(&domain, ct.lambda, ct.s)
        .with_alpha(ct.alpha);
    let levels = cross_term_refinement(
        &domain,
        &params,
        ct.nx,
        cfg.grid.cfl,
        cfg.grid.levels,
        crossterm_test_field,
    )?;
    let mut table = CsvTable::new(
        "crossterms",
        &[
            "level",
            "nx",
            "h",
            "term",
            "definition",
            "expanded",
            "discrepancy",
        ],
    );
    let mut checks = Checks::default();
    for lv in &levels {
        for p in &lv.pairs {
            table.push(vec![
                lv.level.into(),
                lv.nx.into(),
                lv.h.into(),
                format!("I{}", p.k).into(),
                p.definition_value.into(),
                p.expanded_value.into(),
                p.discrepancy.into(),
            ]);
            if p.k == 7 || p.k == 8 {
                checks.check(
                    format!("I{}_algebraic_level{}", p.k, lv.level),
                    p.discrepancy <= ALGEBRAIC_TOL,
                    format!("discrepancy {}", num(p.discrepancy)),
                );
            }
        }
        table.push(vec![
            lv.level.into(),
            lv.nx.into(),
            lv.h.into(),
            "sum".into(),
            lv.sum.definition_value.into(),
            lv.sum.expanded_value.into(),
            lv.sum.discrepancy.into(),
        ]);
    }
    for pair in levels.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let mut refine = |name: String, coarse: f64, fine: f64| {
            let ratio = coarse / fine;
            checks.check(
                name,
                ratio >= REFINEMENT_FACTOR,
                format!(
                    "discrepancy {} -> {} (ratio {})",
                    num(coarse),
                    num(fine),
                    num(ratio)
                ),
            );
        };
        for k in [1, 2, 3, 4, 5, 6, 9, 10] {
            refine(
                format!("I{k}_refinement_level{}", b.level),
                a.pairs[k - 1].discrepancy,
                b.pairs[k - 1].discrepancy,
            );
        }
        refine(
            format!("sum_refinement_level{}", b.level),
            a.sum.discrepancy,
            b.sum.discrepancy,
        );
    }
    Ok(StageOutput {
        tables: vec![table],
        checks,
        details: json!({ "params": to_sorted_json(&params) }),
    })
}

fn carleman_stage(cfg: &ExperimentConfig) -> Result<StageOutput> {
    let grid = cfg.grid()?;
    let variant = cfg.variant()?;
    let family = test_family(&grid, cfg.run.seed, cfg.carleman.family_size)?;
    let mut table = CsvTable::new(
        "carleman",
        &[
            "case",
            "lambda",
            "s",
            "variant",
            "lhs_t0",
            "lhs_grad",
            "lhs_zero",
            "rhs_residual",
            "rhs_boundary",
            "rhs_t_energy",
            "rhs_t_zero",
            "log_scale",
            "lhs",
            "rhs",
            "ratio",
            "underflow_fraction",
        ],
    );
    let mut checks = Checks::default();
    let mut summaries = Vec::new();
    for (li, &lambda) in cfg.weights.lambda.iter().enumerate() {
        let base = cfg.weight_params(grid.domain(), lambda, 1.0);
        let report = estimate_constant(&family, &base, &cfg.weights.s, variant)?;
        for r in &report.rows {
            let mut row: Vec<Cell> = vec![
                r.case.as_str().into(),
                r.lambda.into(),
                r.s.into(),
                variant.name().into(),
            ];
            row.extend(r.sides.terms().iter().map(|&x| Cell::from(x)));
            row.extend([
                r.sides.log_scale.into(),
                r.lhs.into(),
                r.rhs.into(),
                r.ratio.into(),
                r.underflow_fraction.into(),
            ]);
            table.push(row);
        }
        let tag = format!("lambda={}", num(lambda));
        let bad: Vec<String> = report
            .rows
            .iter()
            .filter(|r| !r.ratio.is_some_and(f64::is_finite))
            .map(|r| format!("{}@s={}", r.case, num(r.s)))
            .collect();
        checks.check(
            format!("{tag}.ratios_finite"),
            bad.is_empty(),
            if bad.is_empty() {
                "all ratios finite".to_string()
            } else {
                bad.join(" ")
            },
        );

        let invariance = cells_invariance(&family, &base, &cfg.weights.s, variant);
        checks.check(
            format!("{tag}.normalization_invariance"),
            invariance <= INVARIANCE_TOL,
            format!(
                "max relative change {} (tolerance {INVARIANCE_TOL:e})",
                num(invariance)
            ),
        );

        let per_case = report.max_ratio_from(cfg.carleman.s_check_min);
        // the pinned constant refers to the first λ
        if let (0, Some(baseline)) = (li, cfg.carleman.baseline_m_hat) {
            let limit = baseline * (1.0 + cfg.carleman.tolerance);
            let worst = per_case.values().cloned().fold(0.0f64, f64::max);
            checks.check(
                format!("{tag}.baseline_m_hat"),
                worst <= limit,
                format!(
                    "largest per-case ratio {} against limit {}",
                    num(worst),
                    num(limit)
                ),
            );
        }
        summaries.push(json!({
            "lambda": lambda,
            "summary": to_sorted_json(&report.summary),
            "per_case_max_from_s_check_min": per_case,
            "normalization_invariance": invariance,
        }));
    }
    Ok(StageOutput {
        tables: vec![table],
        checks,
        details: json!({ "variant": variant.name(), "lambdas": summaries }),
    })
}

fn cells_invariance(
    family: &[crate::carleman::FamilyMember],
    base: &crate::geometry::WeightParams,
    s_grid: &[f64],
    variant: Variant,
) -> f64 {
    let cells: Vec<(usize, f64)> = (0..family.len())
        .flat_map(|i| s_grid.iter().map(move |&s| (i, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(i, s)| {
            weight_normalization_invariance(&family[i].v, &family[i].q, &base.with_s(s), variant)
        })
        .reduce(|| 0.0, f64::max)
}

/// Twin configuration of the scenario block on `grid`.
pub fn twin_config(cfg: &ExperimentConfig, grid: &Grid, epsilon: f64) -> TwinConfig {
    let sc = &cfg.scenario;
    let params = cfg.weight_params(grid.domain(), cfg.weights.lambda[0], sc.s);
    let q1 = sc.q1.sample(grid);
    let q2 = q1.add(&sc.shape.sample(grid).scale(epsilon));
    match sc.boundary {
        BoundaryKind::Static => TwinConfig::with_static_boundary(
            grid,
            sc.u0.sample(grid),
            sc.u1.sample(grid),
            params,
            sc.m,
            sc.m0,
            sc.big_m0,
            q1,
            q2,
        ),
    }
}

fn stability_stage(cfg: &ExperimentConfig) -> Result<StageOutput> {
    let grid = cfg.grid()?;
    let fine = grid.refined(2)?;
    let sc = &cfg.scenario;
    let base = twin_config(cfg, &grid, sc.epsilon);
    let ((report, fine_report), (same, rows)) = rayon::join(
        || {
            rayon::join(
                || run_twin(&base),
                || run_twin(&twin_config(cfg, &fine, sc.epsilon)),
            )
        },
        || {
            rayon::join(
                || run_twin(&base.with_q2(base.q1.clone())),
                || scaling_study(&base, &sc.epsilons, &sc.shape.sample(&grid)),
            )
        },
    );
    let (report, fine_report, same, rows) = (report?, fine_report?, same?, rows?);

    let mut checks = Checks::default();
    checks.check(
        "identical_potentials",
        same.dq_norm <= TWIN_ZERO_TOL && same.trace_norm <= TWIN_ZERO_TOL,
        format!(
            "dq_norm {} trace_norm {}",
            num(same.dq_norm),
            num(same.trace_norm)
        ),
    );
    let spread = c_emp_spread(&rows);
    checks.check(
        "c_emp_spread",
        spread.is_some_and(|s| s < C_EMP_SPREAD),
        format!(
            "max/min c_emp {} (limit {C_EMP_SPREAD})",
            spread.map_or("undefined".into(), num)
        ),
    );
    let order = (report.residual_z / fine_report.residual_z).log2();
    checks.check(
        "residual_z_order",
        order >= MIN_ORDER,
        format!(
            "residual {} -> {} (observed order {})",
            num(report.residual_z),
            num(fine_report.residual_z),
            num(order)
        ),
    );
    checks.check(
        "v_gap",
        report.v_gap <= V_GAP_TOL,
        format!(
            "relative L2 gap {} (tolerance {V_GAP_TOL:e})",
            num(report.v_gap)
        ),
    );
    let v_ratio = report.v_gap / fine_report.v_gap;
    checks.check(
        "v_gap_refinement",
        v_ratio >= REFINEMENT_FACTOR,
        format!(
            "gap {} -> {} (ratio {})",
            num(report.v_gap),
            num(fine_report.v_gap),
            num(v_ratio)
        ),
    );
    let dq: SpatialField = base.q2.sub(&base.q1);
    let mut absorption = Vec::new();
    for &s in &sc.absorption_s {
        let a = absorption_check(&dq, &base.params.with_s(s), &grid);
        checks.check(
            format!("absorption_s{}", num(s)),
            a.holds,
            format!(
                "weighted integral {} vs k_max * initial {}",
                num(a.lhs),
                num(a.k_max * a.initial)
            ),
        );
        absorption.push(a);
    }

    let mut table = CsvTable::new(
        "stability_scaling",
        &["epsilon", "dq_norm", "trace_norm", "c_emp"],
    );
    for r in &rows {
        table.push(vec![
            r.epsilon.into(),
            r.dq_norm.into(),
            r.trace_norm.into(),
            r.c_emp.into(),
        ]);
    }
    Ok(StageOutput {
        tables: vec![table],
        checks,
        details: json!({
            "report": to_sorted_json(&report),
            "refined": {
                "nx": fine.shape()[0],
                "residual_z": fine_report.residual_z,
                "v_gap": fine_report.v_gap,
            },
            "absorption": to_sorted_json(&absorption),
            "c_emp_spread": spread,
        }),
    })
}

fn kdecay_stage(cfg: &ExperimentConfig) -> Result<StageOutput> {
    let grid = cfg.grid()?;
    let domain = grid.domain();
    let dim = grid.dim();
    let params = cfg.weight_params(domain, cfg.weights.lambda[0], 1.0);
    let rows = k_table(&grid, &params, &cfg.kdecay.s);
    let mut header = vec!["s", "k_max"];
    let coords: Vec<String> = coordinate_header(dim)
        .iter()
        .map(|c| format!("argmax_{c}"))
        .collect();
    header.extend(coords.iter().map(String::as_str));
    header.push("monotone_in_distance");
    let mut table = CsvTable::new("kdecay", &header);
    for r in &rows {
        let mut row: Vec<Cell> = vec![r.s.into(), r.k_max.into()];
        row.extend(r.x_argmax[..dim].iter().map(|&c| Cell::from(c)));
        row.push(r.monotone_in_distance.to_string().into());
        table.push(row);
    }
    let mut checks = Checks::default();
    checks.check(
        "strictly_decreasing",
        strictly_decreasing(&rows),
        "k_max along increasing s",
    );
    if let Some(last) = rows.last() {
        let limit = cfg.kdecay.threshold_fraction * domain.t_final();
        checks.check(
            "k_max_below_threshold",
            last.k_max < limit,
            format!(
                "k_max({}) = {} against {}",
                num(last.s),
                num(last.k_max),
                num(limit)
            ),
        );
    }
    Ok(StageOutput {
        tables: vec![table],
        checks,
        details: json!({ "params": to_sorted_json(&params) }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::from_toml(
            "[domain]\nlower = [0.0]\nupper = [1.0]\nx0 = [-0.1]\nt_final = 1.5\n",
        )
        .unwrap();
        cfg.grid.nx = 21;
        cfg.grid.levels = 2;
        cfg.decomp.nx = 11;
        cfg.decomp.fields = 2;
        cfg.crossterms.nx = 21;
        cfg.carleman.family_size = 3;
        cfg.kdecay.s = vec![1.0, 4.0, 16.0];
        cfg
    }

    #[test]
    fn subcommand_names_round_trip() {
        for c in Subcommand::STAGES.into_iter().chain([Subcommand::All]) {
            assert_eq!(c.name().parse::<Subcommand>().unwrap(), c);
        }
        assert!("plot".parse::<Subcommand>().is_err());
    }

    #[test]
    fn kdecay_writes_table_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_subcommand(Subcommand::Kdecay, &small(), dir.path()).unwrap();
        assert_eq!(s.artifacts.len(), 1);
        let csv = std::fs::read_to_string(dir.path().join("kdecay.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("s,k_max,argmax_x1,monotone_in_distance\n"));
        let sec = &s.sections["kdecay"];
        assert!(sec
            .assertions
            .iter()
            .any(|a| a.name == "strictly_decreasing" && a.passed));
        assert!(dir.path().join(SUMMARY_FILE).exists());
    }

    #[test]
    fn hypothesis_failure_is_reported_not_raised() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.scenario.m0 = 5.0;
        let s = run_subcommand(Subcommand::Stability, &cfg, dir.path()).unwrap();
        assert!(!s.passed());
        assert_eq!(s.sections["stability"].status, Status::Error);
        assert_eq!(s.failures, vec!["stability.hypothesis.m0".to_string()]);
    }

    #[test]
    fn weights_dump_covers_grid() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let s = run_subcommand(Subcommand::Weights, &cfg, dir.path()).unwrap();
        assert!(s.passed(), "{:?}", s.failures);
        let grid = cfg.grid().unwrap();
        let csv = std::fs::read_to_string(dir.path().join("weights.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + grid.len());
    }
}
