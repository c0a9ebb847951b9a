//! `escat`: elastic scattering coefficients from the command line.
//!
//! Exit codes: 0 success, 1 computation failure or failed verification,
//! 2 usage or configuration error, 3 resonance (ill-conditioned solve).

mod commands;
mod config;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use escat_core::EscatError;
use serde_json::json;

#[derive(Parser)]
#[command(name = "escat", version, about = "Elastic scattering coefficients, multistatic reconstruction and layered cloaks")]
struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scattering coefficient matrices.
    #[command(subcommand)]
    Esc(EscCommand),
    /// Multistatic response data.
    #[command(subcommand)]
    Msr(MsrCommand),
    /// Layered cloak design and analysis.
    #[command(subcommand)]
    Cloak(CloakCommand),
    /// Run invariant suites; exit 0 iff every check passes.
    Verify {
        #[arg(value_enum)]
        suites: Vec<verify::Suite>,
        /// Also write the checks as a JSON array here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<verify::Fault>,
    },
}

#[derive(Args)]
struct Io {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EscCommand {
    Compute {
        #[command(flatten)]
        io: Io,
        /// Truncation order K.
        #[arg(long = "K")]
        truncation: Option<usize>,
        #[arg(long)]
        nodes: Option<usize>,
    },
}

#[derive(Subcommand)]
enum MsrCommand {
    /// Write a dataset directory (header.json plus four block CSVs).
    Simulate {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "K")]
        truncation: Option<usize>,
        #[arg(long)]
        nodes: Option<usize>,
    },
    Reconstruct {
        #[command(flatten)]
        io: Io,
        #[arg(long = "K")]
        truncation: Option<usize>,
    },
    /// Singular values, condition estimate and maximal resolving order.
    Analyze {
        #[command(flatten)]
        io: Io,
        #[arg(long = "K")]
        truncation: Option<usize>,
    },
}

#[derive(Subcommand)]
enum CloakCommand {
    Design {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        seed: Option<u64>,
    },
    Evaluate {
        #[command(flatten)]
        io: Io,
    },
    Scaling {
        #[command(flatten)]
        io: Io,
    },
}

fn error_json(kind: &str, message: &str, code: u8, line: Option<usize>, column: Option<usize>) -> String {
    json!({ "error": { "kind": kind, "message": message, "exit_code": code, "line": line, "column": column } }).to_string()
}

fn classify(err: &anyhow::Error) -> (u8, String) {
    if let Some(c) = err.downcast_ref::<config::ConfigError>() {
        return (2, error_json("config", &c.to_string(), 2, c.line, c.column));
    }
    let message = format!("{err:#}");
    match err.chain().find_map(|e| e.downcast_ref::<EscatError>()) {
        Some(EscatError::Resonance { .. }) => (3, error_json("resonance", &message, 3, None, None)),
        Some(EscatError::InvalidInput(_)) => (2, error_json("invalid_input", &message, 2, None, None)),
        _ => (1, error_json("failure", &message, 1, None, None)),
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Esc(EscCommand::Compute { io, truncation, nodes }) => commands::esc_compute(&io.config, &io.out, truncation, nodes)?,
        Command::Msr(MsrCommand::Simulate { io, seed, truncation, nodes }) => {
            commands::msr_simulate(&io.config, &io.out, seed, truncation, nodes)?
        }
        Command::Msr(MsrCommand::Reconstruct { io, truncation }) => commands::msr_reconstruct(&io.config, &io.out, truncation)?,
        Command::Msr(MsrCommand::Analyze { io, truncation }) => commands::msr_analyze(&io.config, &io.out, truncation)?,
        Command::Cloak(CloakCommand::Design { io, seed }) => commands::cloak_design(&io.config, &io.out, seed)?,
        Command::Cloak(CloakCommand::Evaluate { io }) => commands::cloak_evaluate(&io.config, &io.out)?,
        Command::Cloak(CloakCommand::Scaling { io }) => commands::cloak_scaling(&io.config, &io.out)?,
        Command::Verify { suites, out, inject_fault } => {
            let checks = verify::run(&suites, inject_fault)?;
            for c in &checks {
                println!("{}", String::from_utf8(output::to_json(c)?)?.trim_end());
            }
            if let Some(path) = out {
                output::write_json(&path, &checks)?;
            }
            return Ok(checks.iter().all(|c| c.pass));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ESCAT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_json("usage", e.to_string().trim_end(), 2, None, None));
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            let (code, text) = classify(&err);
            eprintln!("{text}");
            ExitCode::from(code)
        }
    }
}
