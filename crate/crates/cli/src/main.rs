use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use vrcert_cli::{cmd_certify, cmd_compare, cmd_simulate, exit, CliError, Overrides};
use vrcert_core::PsiMode;

#[derive(Debug, Parser)]
#[command(name = "vrcert", version, about = "Virtual-resistance current control: simulate, certify, compare")]
struct Cli {
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Keep every n-th trajectory sample in the CSV.
    #[arg(long, global = true)]
    decimation: Option<usize>,
    /// Layout of the Psi matrix used for certification.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<PsiMode>,
    /// Seed for the random scenario and the certificate search.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write trajectory, metrics and manifest.
    Simulate { config: PathBuf },
    /// Search for and verify an ISS certificate.
    Certify { config: PathBuf },
    /// Run every config in a directory and tabulate the metrics.
    Compare { dir: PathBuf },
}

fn parse_mode(s: &str) -> Result<PsiMode, String> {
    s.parse().map_err(|e: vrcert_core::Error| e.to_string())
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    let ov = Overrides {
        out: cli.out,
        decimation: cli.decimation,
        mode: cli.mode,
        seed: cli.seed,
    };
    match cli.command {
        Command::Simulate { config } => {
            let o = cmd_simulate(&config, &ov)?;
            Ok(json!({ "name": o.name, "output": o.dir, "metrics": o.metrics, "checks": o.checks }))
        }
        Command::Certify { config } => {
            let o = cmd_certify(&config, &ov)?;
            for w in &o.doc.warnings {
                eprintln!("warning: {w}");
            }
            Ok(json!({
                "name": o.doc.name,
                "output": o.dir,
                "mode": o.doc.mode,
                "margins": o.doc.certificate.as_ref().and_then(|c| c.margins),
                "iss_gain": o.doc.iss_gain,
                "warnings": o.doc.warnings,
            }))
        }
        Command::Compare { dir } => {
            let o = cmd_compare(&dir, &ov)?;
            print!("{}", o.table);
            Ok(json!({ "output": o.dir, "rows": o.rows }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::from(exit::OK as u8)
        }
        Err(e) => {
            if let CliError::Infeasible { report: Some(r), .. } = &e {
                if let Some(ws) = r.get("warnings").and_then(|w| w.as_array()) {
                    for w in ws.iter().filter_map(|w| w.as_str()) {
                        eprintln!("warning: {w}");
                    }
                }
            }
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
