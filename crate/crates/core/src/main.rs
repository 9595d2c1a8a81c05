use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evocert::cli::report::{solution_table, write_atomic};
use evocert::cli::{
    cmd_check, cmd_example, cmd_solve, cmd_verify, CliError, ExampleVariant, LoadedConfig, RunReport, VerifyOptions,
};

#[derive(Parser)]
#[command(name = "evocert", version, about = "Certified space-time solves of non-autonomous evolutionary equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed; overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report.json (and solution.txt). Without it the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run hypothesis certificates only.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Certify and solve by time marching.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Solve even when hypotheses fail.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Check adjoint and resolvent identities.
    Verify {
        #[arg(long, required_unless_present = "suite")]
        config: Option<PathBuf>,
        /// Run the built-in seeded suite.
        #[arg(long)]
        suite: bool,
        /// Dimension for the counterexample search.
        #[arg(long)]
        dim: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Transport with rotational boundary coupling and a piecewise-constant coefficient.
    Example {
        #[arg(long, value_enum, default_value_t)]
        variant: ExampleVariant,
        #[command(flatten)]
        common: Common,
    },
}

fn emit(report: &RunReport, solution: Option<String>, out: Option<&Path>) -> Result<(), CliError> {
    let json = report.to_json()?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })?;
            write_atomic(&dir.join("report.json"), json.as_bytes())?;
            if let Some(table) = solution {
                write_atomic(&dir.join("solution.txt"), table.as_bytes())?;
            }
            print!("{}", report.summary());
        }
        None => {
            eprint!("{}", report.summary());
            println!("{json}");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let (report, solution, out) = match cli.command {
        Command::Check { config, common } => {
            let cfg = LoadedConfig::load(&config)?;
            (cmd_check(&cfg, common.seed)?, None, common.out)
        }
        Command::Solve { config, force, common } => {
            let cfg = LoadedConfig::load(&config)?;
            let res = cmd_solve(&cfg, common.seed, force)?;
            (res.report, res.solution.as_ref().map(solution_table), common.out)
        }
        Command::Verify { config, suite, dim, common } => {
            let cfg = config.as_deref().map(LoadedConfig::load).transpose()?;
            let opts = VerifyOptions { config: cfg.as_ref(), suite, seed: common.seed, dim };
            (cmd_verify(opts)?, None, common.out)
        }
        Command::Example { variant, common } => {
            let res = cmd_example(variant, common.seed)?;
            (res.report, res.solution.as_ref().map(solution_table), common.out)
        }
    };
    let report = report.stamped();
    emit(&report, solution, out.as_deref())?;
    Ok(report.passed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
