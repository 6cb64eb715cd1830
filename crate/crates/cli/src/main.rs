//! `cepre` — constant-envelope precoding experiments from the command line.
//!
//! Subcommands: `sweep` runs a Monte-Carlo error-rate sweep and emits CSV,
//! `bench` times each precoder over antenna counts, `solve-one` runs a
//! single margin-solver instance (optionally tracing every iteration), and
//! `check` replays the fast numerical self-checks.
//!
//! Exit codes: 0 success, 1 runtime or check failure, 2 configuration or
//! usage error. Nothing is written to an output path until its full
//! contents exist in memory, so a failed run never leaves a partial CSV.

mod checks;
mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cepre_core::harness::{fmt_sig, BenchRecord};
use cepre_core::rng::{mix_seed, stream_rng};
use cepre_core::solver::StopReason;
use cepre_core::{
    csv_string, run_runtime_bench, run_sweep, solve, BerRecord, Channel, Error, Method,
    SolverConfig, SymbolBlock,
};

use config::{parse_method, CommonArgs, Manifest};

#[derive(Parser)]
#[command(
    name = "cepre",
    version,
    about = "Constant-envelope precoding: error-rate sweeps, runtime benches, single solves, and self-checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo symbol/bit error sweep over an SNR grid; emits CSV.
    Sweep(SweepArgs),
    /// Wall-clock runtime per transmission block over antenna counts.
    Bench(BenchArgs),
    /// Solve one instance with the margin solver and print the outcome.
    SolveOne(SolveOneArgs),
    /// Run the fast numerical self-checks.
    Check(CheckArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Transmit antennas.
    #[arg(long = "N")]
    antennas: Option<usize>,
    /// Output CSV path; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated antenna counts to bench.
    #[arg(long = "N", value_delimiter = ',', value_name = "N,...")]
    antennas: Option<Vec<usize>>,
    /// Also write the table as CSV here.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveOneArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Transmit antennas.
    #[arg(long = "N")]
    antennas: Option<usize>,
    /// Solver to run: pg or fpg. Defaults to the `accelerate` setting.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Load the channel from a CSV of re,im pairs instead of drawing one.
    #[arg(long, value_name = "PATH")]
    channel: Option<PathBuf>,
    /// Write the per-iteration trace CSV here.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Shrink instance counts so the suite finishes in a few seconds.
    #[arg(long)]
    quick: bool,
}

/// A failed invocation: what to tell the user and which code to exit with.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse(_) => Self::config(e.to_string()),
            _ => Self::runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    // Die quietly when stdout closes early (`cepre sweep | head`), like any
    // other pipeline-friendly tool, instead of panicking on a failed print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bench(args) => cmd_bench(args),
        Command::SolveOne(args) => cmd_solve_one(args),
        Command::Check(args) => cmd_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn resolve(common: &CommonArgs, antennas: Option<usize>) -> Result<Manifest, Failure> {
    let mut manifest = config::build(common)?;
    if let Some(n) = antennas {
        manifest.experiment.antennas = n;
    }
    Ok(manifest)
}

fn write_file(path: &PathBuf, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| Failure::runtime(format!("cannot write '{}': {e}", path.display())))
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let mut manifest = resolve(&args.common, args.antennas)?;
    if let Some(out) = &args.out {
        manifest.out = Some(out.clone());
    }
    manifest.experiment.validate().map_err(Failure::from)?;
    let records = run_sweep(&manifest.experiment)?;
    let csv = csv_string(&records);
    match &manifest.out {
        Some(path) => {
            write_file(path, &csv)?;
            print_sweep_table(&records);
            println!("wrote {} rows to {}", records.len(), path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn print_sweep_table(records: &[BerRecord]) {
    println!(
        "{:<8} {:>5} {:>4} {:>3} {:>7} {:>7}  {:>13} {:>15} {:>13} {:>10}",
        "method", "N", "K", "L", "snr_db", "trials", "avg_ber", "worst_user_ser", "ci_halfwidth",
        "mean_iters"
    );
    for r in records {
        println!(
            "{:<8} {:>5} {:>4} {:>3} {:>7} {:>7}  {:>13} {:>15} {:>13} {:>10}",
            r.method.name(),
            r.antennas,
            r.users,
            r.half_levels,
            fmt_sig(r.snr_db),
            r.trials,
            fmt_sig(r.avg_ber),
            fmt_sig(r.worst_user_ser),
            fmt_sig(r.ci_halfwidth),
            fmt_sig(r.mean_iters),
        );
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let mut manifest = resolve(&args.common, None)?;
    if let Some(out) = &args.out {
        manifest.out = Some(out.clone());
    }
    let sizes = args
        .antennas
        .clone()
        .unwrap_or_else(|| vec![manifest.experiment.antennas]);
    manifest.experiment.validate().map_err(Failure::from)?;
    let table = run_runtime_bench(&manifest.experiment, &sizes)?;
    print_bench_table(&table);
    if let Some(path) = &manifest.out {
        let mut csv = String::from("method,N,mean_runtime_s,median_iters\n");
        for row in &table {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                row.method.name(),
                row.antennas,
                fmt_sig(row.mean_runtime_s),
                fmt_sig(row.median_iters),
            ));
        }
        write_file(path, &csv)?;
        println!("wrote {} rows to {}", table.len(), path.display());
    }
    Ok(())
}

fn print_bench_table(table: &[BenchRecord]) {
    println!("{:<8} {:>6} {:>16} {:>14}", "method", "N", "mean_runtime_s", "median_iters");
    for row in table {
        println!(
            "{:<8} {:>6} {:>16} {:>14}",
            row.method.name(),
            row.antennas,
            fmt_sig(row.mean_runtime_s),
            fmt_sig(row.median_iters),
        );
    }
}

fn cmd_solve_one(args: &SolveOneArgs) -> Result<(), Failure> {
    let mut manifest = resolve(&args.common, args.antennas)?;
    let cfg = &mut manifest.experiment;

    let method = match args.method {
        Some(Method::Pg) => Method::Pg,
        Some(Method::Fpg) => Method::Fpg,
        Some(other) => {
            return Err(Failure::config(format!(
                "solve-one runs the margin solver only; got method '{other}' (expected pg or fpg)"
            )))
        }
        None if cfg.solver.accelerate => Method::Fpg,
        None => Method::Pg,
    };
    // Validation must reflect what actually runs: only the chosen solver,
    // so a wide channel (K > N) is fine unless the warm start needs rank.
    cfg.methods = vec![method];

    // The instance reproduces trial 0 of a sweep with the same seed.
    let trial_master = mix_seed(cfg.seed, 0);
    let h = match &args.channel {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| {
                Failure::config(format!("cannot read channel file '{}': {e}", path.display()))
            })?;
            let h = Channel::load_csv(file)?;
            cfg.users = h.users();
            cfg.antennas = h.antennas();
            h
        }
        None => {
            cfg.validate().map_err(Failure::from)?;
            let mut rng = stream_rng(trial_master, 0);
            cepre_core::channel::rayleigh_channel(cfg.users, cfg.antennas, &mut rng)?
        }
    };
    cfg.validate().map_err(Failure::from)?;

    let constellation = cepre_core::QamConstellation::new(cfg.half_levels)?;
    let mut sym_rng = stream_rng(trial_master, 1);
    let block = SymbolBlock::draw_uniform(&constellation, cfg.users, cfg.slots, &mut sym_rng)?;
    let solver_cfg = SolverConfig {
        accelerate: method == Method::Fpg,
        seed: mix_seed(trial_master, 2),
        record_trace: true,
        ..cfg.solver.clone()
    };
    let report = solve(&h, &block, cfg.power, &solver_cfg)?;

    println!("method       {}", method.name());
    println!("antennas     {}", cfg.antennas);
    println!("users        {}", cfg.users);
    println!("slots        {}", cfg.slots);
    println!("half_levels  {}", cfg.half_levels);
    println!("seed         {}", cfg.seed);
    println!("d            {}", fmt_sig(report.d));
    println!("iterations   {}", report.iterations);
    println!(
        "stop         {}",
        match report.stop {
            StopReason::Tolerance => "tolerance",
            StopReason::MaxIters => "max-iters",
        }
    );
    println!("f_exact      {}", fmt_sig(report.final_exact));
    println!("f_smooth     {}", fmt_sig(report.final_smooth));
    println!("backtracks   {}", report.total_backtracks);
    println!("wall_s       {}", fmt_sig(report.wall_seconds));

    if let Some(path) = &args.trace {
        let mut csv = String::from("iter,f_smooth,f_exact,gamma,backtracks\n");
        for row in &report.trace {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                row.iter,
                fmt_sig(row.f_smooth),
                fmt_sig(row.f_exact),
                fmt_sig(row.gamma),
                row.backtracks,
            ));
        }
        write_file(path, &csv)?;
        println!("trace        {} rows to {}", report.trace.len(), path.display());
    }
    Ok(())
}

fn cmd_check(args: &CheckArgs) -> Result<(), Failure> {
    let outcomes = checks::run_all(args.quick);
    for o in &outcomes {
        let status = if o.passed { "pass" } else { "FAIL" };
        println!("{:<16} {status}  ({})", o.name, o.detail);
    }
    if let Some(bad) = outcomes.iter().find(|o| !o.passed) {
        return Err(Failure::runtime(format!("check '{}' failed: {}", bad.name, bad.detail)));
    }
    println!("all checks passed");
    Ok(())
}
