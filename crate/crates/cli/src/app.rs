//! Command-line entry point.
//!
//! Exit codes: 0 on success, 2 for validation and usage errors, 3 for
//! numerical failures (including a failing comparison or a rerun that does
//! not reproduce its outputs), 4 for i/o errors.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::compare::{compare_tables, CompareError};
use crate::manifest::{Manifest, ManifestError};
use crate::runner::{execute, RunError};
use crate::scenario::{Kind, MethodChoice, Scenario, ScenarioError};
use crate::table::{Table, TableError};

/// Environment variable supplying the default worker count.
pub const WORKERS_ENV: &str = "NOISYCHAIN_WORKERS";

#[derive(Parser)]
#[command(
    name = "noisychain",
    version,
    about = "Bosonic chains with noisy couplings: moment equations, Monte Carlo \
             ensembles, and an exact small-system reference"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write one series file per method plus a manifest.
    Run(RunArgs),
    /// Reproduce a previous run from its manifest and verify the bytes.
    Rerun(RerunArgs),
    /// Compare two series files cell by cell.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario preset to start from.
    #[arg(long, value_enum, default_value = "two_mode")]
    scenario: Kind,
    /// Restrict to one method (default: every applicable method).
    #[arg(long, value_enum)]
    method: Option<MethodChoice>,
    /// Ensemble size for the Monte Carlo route.
    #[arg(long)]
    realizations: Option<u64>,
    /// Base seed for the ensemble.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: NOISYCHAIN_WORKERS, then 1).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// TOML configuration applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Suppress progress and summary output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct RerunArgs {
    /// Manifest written by a previous run.
    manifest: PathBuf,
    /// Directory for the reproduced files (default: `<manifest dir>/rerun`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; the reproduced bytes do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Suppress progress and summary output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// First series file.
    a: PathBuf,
    /// Second series file.
    b: PathBuf,
    /// Largest acceptable z score per cell.
    #[arg(long, default_value_t = 3.0)]
    max_z: f64,
    /// Fraction of cells that must stay within the z bound.
    #[arg(long, default_value_t = 0.95)]
    min_fraction: f64,
    /// Print only the verdict line.
    #[arg(long)]
    quiet: bool,
}

/// Parses the process arguments, runs the requested command, and returns the
/// process exit code.
pub fn run_cli() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.cmd {
        Command::Run(args) => do_run(args),
        Command::Rerun(args) => do_rerun(args),
        Command::Compare(args) => do_compare(args),
    };
    match outcome {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

type CmdResult = Result<i32, (i32, String)>;

fn fail(code: i32, msg: impl Into<String>) -> CmdResult {
    Err((code, msg.into()))
}

fn scenario_err(e: ScenarioError) -> (i32, String) {
    let code = match e {
        ScenarioError::Io(_) => 4,
        _ => 2,
    };
    (code, e.to_string())
}

fn run_err(e: RunError) -> (i32, String) {
    (e.exit_code(), e.to_string())
}

fn manifest_err(e: ManifestError) -> (i32, String) {
    let code = match e {
        ManifestError::Io { .. } => 4,
        ManifestError::Parse(_) => 2,
    };
    (code, e.to_string())
}

fn table_err(e: TableError) -> (i32, String) {
    let code = match e {
        TableError::Io { .. } => 4,
        TableError::Malformed { .. } => 2,
    };
    (code, e.to_string())
}

fn env_workers() -> Result<Option<usize>, (i32, String)> {
    match std::env::var(WORKERS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| (2, format!("{WORKERS_ENV} must be a positive integer, got {s:?}"))),
        Err(_) => Ok(None),
    }
}

fn do_run(args: RunArgs) -> CmdResult {
    let mut scn = Scenario::preset(args.scenario);
    if let Some(w) = env_workers()? {
        scn.workers = w;
    }
    if let Some(cfg) = &args.config {
        scn = scn.with_config(cfg).map_err(scenario_err)?;
    }
    if let Some(m) = args.method {
        scn.method = m;
    }
    if let Some(k) = args.realizations {
        scn.realizations = k;
    }
    if let Some(s) = args.seed {
        scn.seed = s;
    }
    if let Some(w) = args.workers {
        scn.workers = w;
    }
    scn.validate().map_err(scenario_err)?;

    let (manifest, paths) = execute(&scn, &args.out, args.quiet).map_err(run_err)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    if !args.quiet {
        println!(
            "{} scenario, {} modes, seed {}, {} realizations, {} worker(s)",
            manifest.scenario.kind.name(),
            manifest.scenario.n_modes,
            manifest.scenario.seed,
            manifest.scenario.realizations,
            manifest.scenario.workers,
        );
        for p in &paths {
            println!("wrote {}", p.display());
        }
        println!("done in {} ms", manifest.wall_ms);
    }
    Ok(0)
}

fn do_rerun(args: RerunArgs) -> CmdResult {
    let manifest = Manifest::load(&args.manifest).map_err(manifest_err)?;
    let base = args
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let out_dir = args.out.clone().unwrap_or_else(|| base.join("rerun"));

    let mut scn = manifest.scenario.clone();
    if let Some(w) = args.workers {
        scn.workers = w;
    }
    scn.validate().map_err(scenario_err)?;
    let (redone, _) = execute(&scn, &out_dir, args.quiet).map_err(run_err)?;

    let mut verified = 0usize;
    let mut missing = 0usize;
    let mut mismatched = Vec::new();
    for out in &redone.outputs {
        let original = base.join(&out.path);
        let reproduced = out_dir.join(&out.path);
        if !original.exists() {
            missing += 1;
            continue;
        }
        let a = std::fs::read(&original).map_err(|e| (4, format!("{}: {e}", original.display())))?;
        let b = std::fs::read(&reproduced)
            .map_err(|e| (4, format!("{}: {e}", reproduced.display())))?;
        if a == b {
            verified += 1;
        } else {
            mismatched.push(out.path.clone());
        }
    }
    if !args.quiet {
        println!(
            "reproduced {} output file(s) into {}",
            redone.outputs.len(),
            out_dir.display()
        );
        if missing > 0 {
            println!("{missing} original file(s) absent, nothing to verify against");
        }
        if verified > 0 {
            println!("{verified} file(s) identical to the original run");
        }
    }
    if mismatched.is_empty() {
        Ok(0)
    } else {
        fail(
            3,
            format!("reproduction differs from the original: {}", mismatched.join(", ")),
        )
    }
}

fn do_compare(args: CompareArgs) -> CmdResult {
    let a = Table::load(&args.a).map_err(table_err)?;
    let b = Table::load(&args.b).map_err(table_err)?;
    let outcome = compare_tables(&a, &b, args.max_z, args.min_fraction).map_err(|e| {
        let code = match e {
            CompareError::GridMismatch(_)
            | CompareError::ModeMismatch(..)
            | CompareError::NoSharedColumns => 2,
        };
        (code, e.to_string())
    })?;
    if !args.quiet {
        for col in &outcome.columns {
            println!(
                "{}: {}/{} within z <= {}, worst z = {:.3} at t = {:.6}",
                col.name, col.within, col.cells, outcome.max_z, col.worst_z, col.worst_time,
            );
        }
    }
    println!("{}", outcome.summary());
    if outcome.pass {
        Ok(0)
    } else {
        fail(3, "series disagree beyond the allowed tolerance")
    }
}
