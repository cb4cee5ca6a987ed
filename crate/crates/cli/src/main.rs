//! `carleman-lab <subcommand> --config <path>`
//!
//! Exit codes: 0 when every check passed, 1 when a check failed or a stage
//! aborted, 2 on configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use carleman_lab::config::ExperimentConfig;
use carleman_lab::run::{run_subcommand, RunSummary, Subcommand};
use carleman_lab::Error;
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Weights,
    Forward,
    Decomp,
    Crossterms,
    Carleman,
    Stability,
    Kdecay,
    All,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Weights => Subcommand::Weights,
            Command::Forward => Subcommand::Forward,
            Command::Decomp => Subcommand::Decomp,
            Command::Crossterms => Subcommand::Crossterms,
            Command::Carleman => Subcommand::Carleman,
            Command::Stability => Subcommand::Stability,
            Command::Kdecay => Subcommand::Kdecay,
            Command::All => Subcommand::All,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    Remark,
    RemarkT0Only,
}

impl VariantArg {
    fn name(self) -> &'static str {
        match self {
            VariantArg::Full => "full",
            VariantArg::Remark => "remark",
            VariantArg::RemarkT0Only => "remark_t0_only",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "carleman-lab",
    version,
    about = "Carleman estimate and stability experiments for the wave equation"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// Experiment configuration (TOML).
    #[arg(long, default_value = "configs/reference.toml")]
    config: PathBuf,

    /// Output directory; overrides the config and the environment.
    #[arg(long, env = "CARLEMAN_LAB_OUT")]
    out: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    /// Number of grids in refinement studies.
    #[arg(long)]
    levels: Option<usize>,

    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(levels) = cli.levels {
        cfg.grid.levels = levels;
    }
    if let Some(v) = cli.variant {
        cfg.run.variant = v.name().to_string();
    }
    if let Some(out) = &cli.out {
        cfg.run.out = out.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(summary: &RunSummary) {
    let order = Subcommand::STAGES.iter().map(|s| s.name());
    for (name, section) in order.filter_map(|n| summary.sections.get(n).map(|s| (n, s))) {
        let failed = section.assertions.iter().filter(|a| !a.passed).count();
        println!(
            "{name:<11} {:?} ({} checks, {failed} failed, {:.2} s)",
            section.status,
            section.assertions.len(),
            section.wall_time_s
        );
        for a in section.assertions.iter().filter(|a| !a.passed) {
            println!("  FAIL {}: {}", a.name, a.detail);
        }
    }
    for path in &summary.artifacts {
        println!("wrote {}", path.display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("carleman-lab: {e}");
            return ExitCode::from(2);
        }
    };
    let out = PathBuf::from(&cfg.run.out);
    match run_subcommand(cli.command.into(), &cfg, &out) {
        Ok(summary) => {
            report(&summary);
            if summary.passed() {
                ExitCode::SUCCESS
            } else {
                let failures = serde_json::json!({ "failures": summary.failures });
                eprintln!("{failures}");
                ExitCode::from(1)
            }
        }
        Err(e @ (Error::Config { .. } | Error::Parse { .. })) => {
            eprintln!("carleman-lab: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("carleman-lab: {e}");
            ExitCode::from(1)
        }
    }
}
