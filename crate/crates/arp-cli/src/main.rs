//! Command-line harness for the objective-function-free regularized solver.
//!
//! Three subcommands: `solve` runs one configuration and prints a summary,
//! `sweep` runs a strictly decreasing `eps1` grid in parallel and prints the
//! iteration/oracle table with the fitted exponent, and `report` fits decay
//! rates from a stored JSON-lines trace.
//!
//! Exit codes: 0 converged, 1 usage or input error, 2 iteration budget
//! exhausted, 3 structured solver failure.  The sweep worker count honors the
//! `ARP_THREADS` environment variable.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use arp_core::driver::SolverSettings;
use arp_core::harness::{
    configure_threads, run_experiment, sweep_epsilon, ExperimentSpec, HarnessError, SweepRow,
};
use arp_core::rates::fit_rates;
use arp_core::subsolver::SubsolverKind;
use arp_core::trace::{RunTrace, TerminationReason};
use arp_core::update::StrategyKind;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_BUDGET: u8 = 2;
const EXIT_ABORTED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "arp",
    version,
    about = "Adaptive p-th order regularization without objective evaluations",
    long_about = "Runs an adaptive regularization method of order p whose control flow never \
consults the objective value: steps are accepted unconditionally and the \
regularization weight follows a fixed growth recurrence.  The order-p \
derivative tensor is approximated lazily, by finite differences, or by \
high-order PSB/DFP secant updates.  Set ARP_THREADS to bound sweep workers."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and print the run summary.
    Solve(SolveArgs),
    /// Run an eps1 grid in parallel and print the sweep table.
    Sweep(SweepArgs),
    /// Fit empirical decay rates from a stored JSON-lines trace.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Benchmark problem: quadratic, quartic, rosenbrock, or trigonometric.
    #[arg(long)]
    problem: String,
    /// Number of variables.
    #[arg(long)]
    dim: usize,
    /// Model order.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    p: u8,
    /// Tensor strategy: lazy, fd, psb-lazy, psb-fd, or dfp-fd.
    #[arg(long, default_value_t = StrategyKind::Lazy)]
    strategy: StrategyKind,
    /// Restart period (the tensor refreshes when k mod m = 0).
    #[arg(long, default_value_t = 5)]
    m: usize,
    /// First-order tolerance on the gradient norm.
    #[arg(long, default_value_t = 1e-5)]
    eps1: f64,
    /// Second-order tolerance on the curvature measure.
    #[arg(long, default_value_t = 1e-4)]
    eps2: f64,
    /// Initial regularization weight.
    #[arg(long, default_value_t = 1.0)]
    sigma0: f64,
    /// First-order certificate slack (> 1).
    #[arg(long, default_value_t = 2.0)]
    theta1: f64,
    /// Second-order certificate slack (> 1).
    #[arg(long, default_value_t = 2.0)]
    theta2: f64,
    /// Iteration budget.
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Recorded in the trace header for bookkeeping.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for JSON-lines traces and CSV summaries.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Inner minimization method: inner-descent or exact-secular (p = 2).
    #[arg(long, default_value = "inner-descent", value_parser = parse_subsolver)]
    subsolver: SubsolverKind,
    /// Cap on inner descent iterations per step.
    #[arg(long, default_value_t = 500)]
    inner_budget: usize,
    /// DFP guard lower bound mu (requires mu ||s||^2 <= |s'y|).
    #[arg(long, default_value_t = 1e-4)]
    dfp_mu: f64,
    /// DFP guard upper bound L (requires ||y|| <= L ||s||).
    #[arg(long, default_value_t = 1e4)]
    dfp_l: f64,
    /// Free parameter of the DFP weight construction.
    #[arg(long, default_value_t = 1.0)]
    dfp_sigma: f64,
    /// Minimum finite-difference stepsize.
    #[arg(long, default_value_t = 1e-8)]
    h_floor: f64,
    /// Skip exact-derivative audits and the exact-Hessian curvature column.
    #[arg(long)]
    no_audit: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated, strictly decreasing eps1 grid (at least 4 values).
    #[arg(long, value_delimiter = ',', required = true)]
    eps1_grid: Vec<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON-lines trace file written by `solve` or `sweep`.
    #[arg(long)]
    trace: PathBuf,
    /// Fraction of the trace (from the end) used by the fits.
    #[arg(long, default_value_t = 0.5)]
    fit_tail_fraction: f64,
}

fn parse_subsolver(s: &str) -> Result<SubsolverKind, String> {
    match s {
        "inner-descent" => Ok(SubsolverKind::InnerDescent),
        "exact-secular" => Ok(SubsolverKind::ExactSecular),
        other => Err(format!(
            "unknown subsolver `{other}` (expected inner-descent or exact-secular)"
        )),
    }
}

impl CommonArgs {
    fn spec(&self) -> ExperimentSpec {
        let mut settings = SolverSettings::new(self.p as usize, self.strategy);
        settings.strategy.m = self.m;
        settings.strategy.dfp_mu = self.dfp_mu;
        settings.strategy.dfp_l = self.dfp_l;
        settings.strategy.dfp_varsigma = self.dfp_sigma;
        settings.strategy.h_floor = self.h_floor;
        settings.subsolver.method = self.subsolver;
        settings.subsolver.inner_budget = self.inner_budget;
        settings.theta1 = self.theta1;
        settings.theta2 = self.theta2;
        settings.sigma0 = self.sigma0;
        settings.eps1 = self.eps1;
        settings.eps2 = self.eps2;
        settings.max_iters = self.max_iters;
        settings.seed = self.seed;
        settings.audit = !self.no_audit;
        let mut spec = ExperimentSpec::new(&self.problem, self.dim, settings);
        spec.out_dir = self.out.clone();
        spec
    }
}

fn exit_for_termination(termination: &TerminationReason) -> u8 {
    match termination {
        TerminationReason::Converged => EXIT_OK,
        TerminationReason::MaxIters => EXIT_BUDGET,
        TerminationReason::Aborted(_) => EXIT_ABORTED,
    }
}

fn solve(args: &SolveArgs) -> Result<u8> {
    let spec = args.common.spec();
    match run_experiment(&spec) {
        Ok(result) => {
            let trace = &result.outcome.trace;
            let fin = &trace.final_record;
            println!(
                "{} n={} p={} strategy={} m={}",
                trace.header.problem,
                trace.header.dim,
                trace.header.p,
                trace.header.strategy,
                trace.header.m
            );
            println!(
                "termination={} iterations={} wall={:.3}s",
                fin.termination.code(),
                fin.iterations,
                result.wall_seconds
            );
            println!(
                "grad_norm={:.6e} chi={:.6e} sigma_final={:.6e} min_grad_norm={:.6e}",
                fin.grad_norm, fin.chi, fin.sigma, fin.min_grad_norm
            );
            println!(
                "oracle calls: value={} order1={} order2={} order3={}",
                fin.oracle.value, fin.oracle.order1, fin.oracle.order2, fin.oracle.order3
            );
            if let Some(path) = &result.jsonl_path {
                println!("trace: {}", path.display());
            }
            if let Some(path) = &result.csv_path {
                println!("summary: {}", path.display());
            }
            Ok(exit_for_termination(&fin.termination))
        }
        Err(HarnessError::Driver(e)) => {
            let fin = &e.partial.final_record;
            eprintln!("solver failed: {}", e.kind);
            eprintln!(
                "partial trace: {} iterations, last grad_norm={:.6e}",
                fin.iterations, fin.grad_norm
            );
            Ok(EXIT_ABORTED)
        }
        Err(other) => Err(other.into()),
    }
}

fn sweep(args: &SweepArgs) -> Result<u8> {
    let mut spec = args.common.spec();
    spec.eps1_grid = args.eps1_grid.clone();
    let table = sweep_epsilon(&spec)?;
    print!("{}", table.render());
    let worst = table
        .rows
        .iter()
        .map(|r: &SweepRow| exit_for_termination(&r.termination))
        .max()
        .unwrap_or(EXIT_OK);
    Ok(worst)
}

fn report(args: &ReportArgs) -> Result<u8> {
    let file = File::open(&args.trace)
        .with_context(|| format!("opening trace {}", args.trace.display()))?;
    let trace = RunTrace::read_jsonl(BufReader::new(file))
        .with_context(|| format!("parsing trace {}", args.trace.display()))?;
    let report = fit_rates(&trace, trace.header.p, args.fit_tail_fraction)?;
    println!(
        "{} n={} p={} strategy={} iterations={} termination={}",
        trace.header.problem,
        trace.header.dim,
        trace.header.p,
        trace.header.strategy,
        trace.final_record.iterations,
        trace.final_record.termination.code()
    );
    println!(
        "tail: fraction={} records={}",
        report.tail_fraction, report.tail_len
    );
    println!(
        "running-min gradient:  slope={:+.4} (guarantee -{}/{})  sup k^(p/(p+1))-scaled={:.4e}  trend S={}",
        report.grad_slope,
        report.p,
        report.p + 1,
        report.grad_sup_statistic,
        report.grad_trend
    );
    println!(
        "running-min curvature: slope={:+.4} (guarantee -{}/{})  sup k^((p-1)/(p+1))-scaled={:.4e}  trend S={}",
        report.curvature_slope,
        report.p - 1,
        report.p + 1,
        report.curvature_sup_statistic,
        report.curvature_trend
    );
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("ARP_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                configure_threads(n);
            }
            _ => {
                eprintln!("ignoring ARP_THREADS={threads}: expected a positive integer");
            }
        }
    }

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful terminations; real
            // parse failures are usage errors.
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let outcome = match &cli.command {
        Command::Solve(args) => solve(args),
        Command::Sweep(args) => sweep(args),
        Command::Report(args) => report(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
