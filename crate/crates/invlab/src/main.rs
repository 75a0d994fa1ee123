use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use invlab::bundle::{BUNDLE_HASH, INDEX};
use invlab::config::Config;
use invlab::error::io_at;
use invlab::plan::plan_sweep;
use invlab::snapshot::inspect_header;
use invlab::sweep::{analyze_stored, run_sweep, ExecOptions, SweepOutcome};
use invlab::validate;
use invlab::{InvlabError, Result};

/// Viscosity sweeps for 2D incompressible flow with vanishing-viscosity
/// diagnostics.
#[derive(Debug, Parser)]
#[command(name = "invlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Sweep configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for snapshots and reports.
    #[arg(long, global = true, value_name = "DIR", default_value = "invlab-out")]
    out: PathBuf,

    /// Concurrent runs (defaults to the available cores).
    #[arg(long, global = true, value_name = "N", env = "INVLAB_WORKERS")]
    workers: Option<usize>,

    /// Reuse completed runs found in the output directory.
    #[arg(long, global = true)]
    resume: bool,

    /// Overrides `sweep.seed` (and seeds the `validate` fields).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the first run of the plan only.
    Run,
    /// Integrate every run of the plan and write the report bundle.
    Sweep,
    /// Rebuild the report bundle from stored snapshots.
    Analyze,
    /// Exact-solution and identity checks; exits nonzero on any failure.
    Validate,
    /// Print the header of a snapshot file without reading its payload.
    Inspect {
        /// Snapshot file.
        path: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("invlab: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Validate => Ok(run_validate(cli.seed.unwrap_or(0))),
        Command::Inspect { path } => inspect(path),
        Command::Run | Command::Sweep | Command::Analyze => {
            let plan = {
                let config = load_config(cli)?;
                let plan = plan_sweep(&config, cli.out.clone())?;
                if matches!(cli.command, Command::Run) {
                    plan.first_only()
                } else {
                    plan
                }
            };
            let workers = cli
                .workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
                .max(1);
            let outcome = match cli.command {
                Command::Analyze => analyze_stored(&plan, workers)?,
                _ => run_sweep(
                    &plan,
                    ExecOptions {
                        workers,
                        resume: cli.resume,
                    },
                )?,
            };
            report(&outcome, &cli.out);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| InvlabError::Invalid("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    let mut config = Config::parse(&text)?;
    if let Some(seed) = cli.seed {
        config.sweep.seed = seed;
    }
    Ok(config)
}

fn report(outcome: &SweepOutcome, out: &Path) {
    for r in &outcome.records {
        let detail = r.status.detail();
        let resumed = if r.resumed { " (resumed)" } else { "" };
        println!(
            "run {:<16} nu={:<8} {}x{} {}{}{}",
            r.run.id,
            r.run.nu,
            r.run.grid.nx,
            r.run.grid.ny,
            r.status.label(),
            resumed,
            if detail.is_empty() { String::new() } else { format!(": {detail}") }
        );
        if let Some(e) = &r.analysis_error {
            println!("  analysis failed: {e}");
        }
    }
    for v in &outcome.bundle.index.verdicts {
        println!(
            "verdict {:<28} {:<10} {}  {}",
            v.check,
            v.subject,
            if v.passed { "pass" } else { "fail" },
            v.detail
        );
    }
    println!("reports: {}", out.join(invlab::bundle::REPORTS).display());
    println!("index: {}", out.join(INDEX).display());
    println!("{BUNDLE_HASH}: {}", outcome.bundle.hash);
    if outcome.partial() {
        eprintln!("invlab: bundle is partial (some runs did not complete)");
    }
}

fn run_validate(seed: u64) -> ExitCode {
    let checks = validate::run_all(seed);
    for c in &checks {
        println!("{}", c.line());
    }
    let summary = validate::summarize(&checks);
    for (n, ok) in &summary {
        println!("criterion {n}: {}", if *ok { "PASS" } else { "FAIL" });
    }
    ExitCode::from(validate::exit_code(&checks))
}

fn inspect(path: &Path) -> Result<ExitCode> {
    let h = inspect_header(path)?;
    println!("file        {}", path.display());
    println!("grid kind   {:?}", h.kind);
    println!("nx x ny     {} x {}", h.nx, h.ny);
    println!("lx x ly     {} x {}", h.lx, h.ly);
    println!("nu          {}", h.nu);
    println!("t           {}", h.t);
    println!("fields      {}", h.field_count);
    match h.file_len() {
        Some(n) => println!("file bytes  {n} (expected)"),
        None => println!("file bytes  overflow"),
    }
    Ok(ExitCode::SUCCESS)
}
