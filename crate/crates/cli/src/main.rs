use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fplay_cli::compare::compare_dirs;
use fplay_cli::config::RunConfig;
use fplay_cli::runner::{output_directory, run};
use fplay_cli::selftest::run_checks;
use fplay_cli::{CliError, EXIT_ERROR};
use fplay_core::Exec;

/// Environment variable naming the root for relative output directories.
const OUTPUT_ROOT_VAR: &str = "FPLAY_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "fplay", version, about = "Fictitious play for mean field games on the torus")]
struct Cli {
    /// Run every batch loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a TOML configuration. Exit 0 on convergence, 2 at the iteration limit, 1 on error.
    Run {
        config: PathBuf,
        /// Write outputs here instead of the configured directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print sup_t d1 between the final beliefs of two run directories.
    Compare { a: PathBuf, b: PathBuf },
    /// Check the solvers against brute-force oracles and refinement studies.
    Selftest,
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Run { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(|e| CliError::Io(format!("{}: {e}", config.display())))?;
            let cfg = RunConfig::from_toml(&text)?;
            let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from);
            let dir = output_directory(&cfg, out.as_deref(), root.as_deref());
            let report = run(&cfg, &text, &dir, exec)?;
            println!(
                "{:?} after {} iterations (a_n = {:.3e}); outputs in {}",
                report.primary.termination,
                report.primary.iterations,
                report.primary.a_final,
                dir.display()
            );
            Ok(report.exit_code)
        }
        Command::Compare { a, b } => {
            let cmp = compare_dirs(&a, &b)?;
            println!("{}", serde_json::to_string_pretty(&cmp).map_err(|e| CliError::Output(e.to_string()))?);
            Ok(0)
        }
        Command::Selftest => {
            let checks = run_checks(exec)?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) { 0 } else { EXIT_ERROR })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
