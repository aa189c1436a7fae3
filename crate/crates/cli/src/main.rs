use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fluid_relay::config::{load_config, RunConfig, SolverOptions, SystemConfig};
use fluid_relay::experiments::{
    emit_csv, render_csv, render_summary_csv, render_table, run_single, run_sweep, summarize,
    SweepKind, SweepSpec,
};
use fluid_relay::selftest;

const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(name = "fluid-relay", version, about = "Max-min layout optimization for fluid-antenna relays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the SNR (dB) at fixed region size.
    SweepSnr(SweepArgs),
    /// Sweep the region size (wavelengths) at fixed SNR.
    SweepRegion(SweepArgs),
    /// Run every scheme on one trial and dump traces.
    Single(SingleArgs),
    /// Run the quick oracle checks.
    Selftest {
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct Common {
    /// Flat TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Monte Carlo seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Trials per grid point.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Comma-separated grid values, e.g. `--grid=-5,0,5`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    grid: Option<Vec<f64>>,
    /// Output CSV; sidecars go next to it. Without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional per-point summary CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Record wall-clock times instead of zeros (output is then not reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SingleArgs {
    #[command(flatten)]
    common: Common,
    /// Trial (random stream) index.
    #[arg(long, default_value_t = 0)]
    trial: u64,
    /// Directory for trace CSVs and the realization dump.
    #[arg(long, default_value = "single_run")]
    out: PathBuf,
}

fn load(common: &Common) -> Result<(SystemConfig, SolverOptions, u64)> {
    let RunConfig { system, solver, seed } = match &common.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig {
            system: SystemConfig::default(),
            solver: SolverOptions::default(),
            seed: None,
        },
    };
    Ok((system, solver, common.seed.or(seed).unwrap_or(DEFAULT_SEED)))
}

fn sweep(kind: SweepKind, args: SweepArgs) -> Result<()> {
    let (system, options, seed) = load(&args.common)?;
    let spec = SweepSpec {
        grid: args.grid.unwrap_or_else(|| kind.default_grid()),
        trials: args.trials,
        options,
        workers: args.workers,
        ..SweepSpec::new(kind, system, seed)
    };
    let result = run_sweep(&spec)?;
    let summary = summarize(&result.rows);
    match &args.out {
        Some(path) => {
            emit_csv(&result, path, args.timing)?;
            print!("{}", render_table(&summary, kind));
            eprintln!("wrote {}", path.display());
        }
        None => {
            print!("{}", render_csv(&result, args.timing));
            eprint!("{}", render_table(&summary, kind));
        }
    }
    if let Some(path) = &args.summary {
        fs::write(path, render_summary_csv(&summary)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn single(args: SingleArgs) -> Result<()> {
    let (system, options, seed) = load(&args.common)?;
    let run = run_single(&system, &options, seed, args.trial)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    run.realization.dump(args.out.join("realization.json"))?;
    println!("realization {}", run.realization.fingerprint());
    println!("{:<9} {:>12} {:>6} {:>7}", "scheme", "min_rate", "outer", "passes");
    for (scheme, r) in &run.runs {
        println!(
            "{:<9} {:>12.6} {:>6} {:>7}",
            scheme.as_str(),
            r.report.min_rate,
            r.trace.outer_iterations,
            r.trace.inner_passes
        );
        if r.trace.outer_iterations > 0 {
            let path = args.out.join(format!("trace_{}.csv", scheme.as_str()));
            fs::write(&path, r.trace.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}

fn run_selftest(seed: Option<u64>) -> Result<()> {
    let outcomes = selftest::run_all(seed.unwrap_or(DEFAULT_SEED));
    for c in &outcomes {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!("{failed} self-test check(s) failed");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::SweepSnr(args) => sweep(SweepKind::Snr, args),
        Command::SweepRegion(args) => sweep(SweepKind::Region, args),
        Command::Single(args) => single(args),
        Command::Selftest { seed } => run_selftest(seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
