use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use paoi_cli::config::{Config, Overrides};
use paoi_cli::{analytic, simulate, sweep, validate, CliError, Run, EXIT_CONFIG, EXIT_OK, EXIT_VALIDATION};
use paoi_core::{ComputeFeed, ComputeFormula, PsiMode};

#[derive(Parser, Debug)]
#[command(name = "paoi", version, about = "Peak age-of-information analytics and simulation for RIS-assisted THz uplinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides `analysis.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Severity threshold z in seconds.
    #[arg(long, global = true)]
    z: Option<f64>,
    /// Severity ruin level a in seconds.
    #[arg(long = "ruin-level", global = true)]
    ruin_level: Option<f64>,
    #[arg(long = "psi-mode", global = true, value_enum)]
    psi_mode: Option<PsiArg>,
    #[arg(long = "avg-mode", global = true, value_enum)]
    avg_mode: Option<AvgArg>,
    #[arg(long, global = true, value_enum)]
    feed: Option<FeedArg>,
    #[arg(long, global = true)]
    replications: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Evaluate pdf/cdf/severity/average values on the configured grid.
    Analytic,
    /// Run the discrete-event simulator on the configured scenario.
    Simulate,
    /// Run the oracle suite and write a pass/fail report.
    Validate,
    /// Run the configured parameter sweep.
    Sweep,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum PsiArg {
    AsWritten,
    Survival,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum AvgArg {
    AsWritten,
    Corrected,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FeedArg {
    Tandem,
    Independent,
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = Config::load(path)?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        z: cli.z,
        ruin_level: cli.ruin_level,
        psi_mode: cli.psi_mode.map(|m| match m {
            PsiArg::AsWritten => PsiMode::AsWritten,
            PsiArg::Survival => PsiMode::Survival,
        }),
        avg_mode: cli.avg_mode.map(|m| match m {
            AvgArg::AsWritten => ComputeFormula::AsWritten,
            AvgArg::Corrected => ComputeFormula::Corrected,
        }),
        feed: cli.feed.map(|f| match f {
            FeedArg::Tandem => ComputeFeed::Tandem,
            FeedArg::Independent => ComputeFeed::IndependentPoisson,
        }),
        replications: cli.replications,
    })?;
    let command = match cli.command {
        Command::Analytic => "analytic",
        Command::Simulate => "simulate",
        Command::Validate => "validate",
        Command::Sweep => "sweep",
    };
    let run = Run {
        command,
        config: &cfg,
        config_path: Some(path),
        out: &cli.out,
    };
    match cli.command {
        Command::Analytic => analytic::cmd_analytic(&run)?,
        Command::Simulate => simulate::cmd_simulate(&run)?,
        Command::Sweep => sweep::cmd_sweep(&run)?,
        Command::Validate => {
            let report = validate::cmd_validate(&run)?;
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            eprintln!("{} checks, {failed} failed", report.checks.len());
            if failed > 0 {
                return Ok(EXIT_VALIDATION);
            }
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
