use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use qghaar::harness;
use qghaar::report::{sweep_csv, RunReport};
use qghaar::{par, Error, ModelParams};

#[derive(Parser)]
#[command(name = "qghaar", version, about = "Runs identity suites for the twisted group algebra model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one named suite and write a JSON report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        suite: String,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a suite for each value of one parameter and write a CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "algebra")]
        suite: String,
    },
}

/// Errors that map to exit code 2.
fn is_usage(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<Error>(),
        Some(Error::UnknownSuite(_) | Error::UnknownCheck(_) | Error::SweepParam(_) | Error::Config(_) | Error::Params(_))
    )
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_summary(rep: &RunReport) {
    for c in &rep.checks {
        eprintln!("{}", c.summary());
    }
    eprintln!(
        "suite {}: {} ({} checks, {:.1} s)",
        rep.suite,
        if rep.pass { "PASS" } else { "FAIL" },
        rep.checks.len(),
        rep.runtime_ms / 1e3
    );
}

fn run(cli: Cli) -> Result<bool> {
    par::init_pool();
    match cli.cmd {
        Cmd::Run { config, suite, out } => {
            let params = ModelParams::from_file(&config)?;
            let rep = harness::run_suite(&params, &suite)?;
            print_summary(&rep);
            let json = rep.to_json();
            match out {
                Some(path) => write_out(&path, &json)?,
                None => println!("{json}"),
            }
            Ok(rep.pass)
        }
        Cmd::Sweep { config, param, values, out, suite } => {
            let params = ModelParams::from_file(&config)?;
            let values: Vec<String> = values.into_iter().filter(|v| !v.trim().is_empty()).collect();
            let rows = harness::sweep(&params, &suite, &param, &values)?;
            for (v, rep) in &rows {
                eprintln!("{param}={v}: {}", if rep.pass { "PASS" } else { "FAIL" });
            }
            write_out(&out, &sweep_csv(&rows))?;
            Ok(rows.iter().all(|(_, r)| r.pass))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
