//! Experiment plumbing: named setups, trace persistence, and epsilon sweeps.
//!
//! A [`ExperimentSpec`] names a benchmark problem and carries the full solver
//! configuration.  [`run_experiment`] executes it from the problem's fixed
//! default start point and optionally persists the trace as JSON lines plus a
//! one-row CSV summary; the JSON-lines bytes depend only on the spec, so a
//! rerun with the same spec reproduces them exactly (wall time appears only
//! in the CSV).  [`sweep_epsilon`] fans a strictly decreasing `eps1` grid out
//! across worker threads and aggregates per-tolerance iteration and
//! oracle-call counts in grid order, fitting the empirical iteration/accuracy
//! exponent over the converged rows.
//!
//! Every finished run is cross-checked by [`ledger_from_trace`]: the oracle
//! counts reconstructed from the trace's structural flags (refresh cadence,
//! restart branches) must equal the counts the instrumented problem wrapper
//! recorded, with zero discrepancy.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::driver::{run, DriverError, RunOutcome, SolverSettings};
use crate::problems::{by_name, Problem, ProblemError};
use crate::rates::sweep_exponent;
use crate::trace::{OracleCounts, RunTrace, TerminationReason, TraceError};
use crate::update::{StrategyKind, UpdateBranch};

/// Set the global sweep worker-pool size.  Effective once per process;
/// returns `false` when a pool was already installed (the existing pool
/// keeps its size).
pub fn configure_threads(n: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .is_ok()
}

/// A named, fully configured run (or sweep) of the solver.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    /// Benchmark problem name, resolved through the problem registry.
    pub problem: String,
    pub dim: usize,
    /// Full solver configuration (order, strategy, tolerances, seed, ...).
    pub settings: SolverSettings,
    /// Strictly decreasing first-order tolerance grid for [`sweep_epsilon`].
    pub eps1_grid: Vec<f64>,
    /// When set, traces are written beneath this directory.
    pub out_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(problem: &str, dim: usize, settings: SolverSettings) -> Self {
        ExperimentSpec {
            problem: problem.to_string(),
            dim,
            settings,
            eps1_grid: Vec::new(),
            out_dir: None,
        }
    }

    /// File-name stem identifying this spec (problem, shape, strategy, seed).
    pub fn stem(&self) -> String {
        format!(
            "{}-n{}-p{}-{}-m{}-seed{}",
            self.problem,
            self.dim,
            self.settings.p,
            self.settings.strategy.kind,
            self.settings.strategy.m,
            self.settings.seed
        )
    }

    /// Build the problem and the effective settings: the strategy's Lipschitz
    /// estimate is taken from the problem's declared bound for order `p` when
    /// one is available.
    fn instantiate(&self) -> Result<(Box<dyn Problem>, SolverSettings), HarnessError> {
        let problem = by_name(&self.problem, self.dim)?;
        let mut settings = self.settings.clone();
        if let Some(bound) = problem.lipschitz(settings.p) {
            settings.strategy.l_hat = bound.value;
        }
        settings.validate();
        Ok((problem, settings))
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("problem construction failed")]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Driver(Box<DriverError>),
    #[error("trace serialization failed")]
    Trace(#[from] TraceError),
    #[error("writing {path}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("sweep grid needs at least 4 strictly decreasing positive tolerances")]
    BadGrid,
    #[error("oracle ledger mismatch: reconstruction {expected:?} != recorded {got:?}")]
    LedgerMismatch {
        expected: OracleCounts,
        got: OracleCounts,
    },
}

impl From<DriverError> for HarnessError {
    fn from(e: DriverError) -> Self {
        HarnessError::Driver(Box::new(e))
    }
}

/// A finished experiment with its timing and any files written.
#[derive(Debug)]
pub struct ExperimentResult {
    pub outcome: RunOutcome,
    pub wall_seconds: f64,
    pub jsonl_path: Option<PathBuf>,
    pub csv_path: Option<PathBuf>,
}

fn write_trace_files(
    trace: &RunTrace,
    dir: &Path,
    stem: &str,
    wall_seconds: f64,
) -> Result<(PathBuf, PathBuf), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let jsonl_path = dir.join(format!("{stem}.jsonl"));
    let mut bytes = Vec::new();
    trace.write_jsonl(&mut bytes)?;
    fs::write(&jsonl_path, &bytes).map_err(|source| HarnessError::Io {
        path: jsonl_path.clone(),
        source,
    })?;

    let csv_path = dir.join(format!("{stem}.csv"));
    let mut csv = fs::File::create(&csv_path).map_err(|source| HarnessError::Io {
        path: csv_path.clone(),
        source,
    })?;
    writeln!(csv, "{}", RunTrace::csv_header())
        .and_then(|_| writeln!(csv, "{}", trace.csv_row(wall_seconds)))
        .map_err(|source| HarnessError::Io {
            path: csv_path.clone(),
            source,
        })?;
    Ok((jsonl_path, csv_path))
}

/// Execute one spec from the problem's default start point.
///
/// On success the trace is persisted (when an output directory is set) and
/// the oracle-ledger reconstruction is verified against the recorded counts.
/// On a structured driver failure the partial trace is still written before
/// the error propagates, so failed runs leave inspectable artifacts.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    run_experiment_stem(spec, &spec.stem())
}

fn run_experiment_stem(
    spec: &ExperimentSpec,
    stem: &str,
) -> Result<ExperimentResult, HarnessError> {
    let (problem, settings) = spec.instantiate()?;
    let x0 = problem.default_start();
    let started = Instant::now();
    let outcome = match run(problem.as_ref(), &x0, &settings) {
        Ok(o) => o,
        Err(e) => {
            let wall = started.elapsed().as_secs_f64();
            if let Some(dir) = &spec.out_dir {
                // Best-effort persistence of the partial trace; the driver
                // error stays the reported failure either way.
                let _ = write_trace_files(&e.partial, dir, stem, wall);
            }
            return Err(e.into());
        }
    };
    let wall_seconds = started.elapsed().as_secs_f64();

    if let Some(expected) = ledger_from_trace(&outcome.trace) {
        let got = outcome.trace.final_record.oracle;
        if expected != got {
            return Err(HarnessError::LedgerMismatch { expected, got });
        }
    }

    let (jsonl_path, csv_path) = match &spec.out_dir {
        Some(dir) => {
            let (j, c) = write_trace_files(&outcome.trace, dir, stem, wall_seconds)?;
            (Some(j), Some(c))
        }
        None => (None, None),
    };
    Ok(ExperimentResult {
        outcome,
        wall_seconds,
        jsonl_path,
        csv_path,
    })
}

/// Recompute the oracle ledger from the trace's structural flags.
///
/// Finished runs admit an exact reconstruction: every visited iterate
/// (`iterations + 1` of them, counting the stopping iterate) refreshes each
/// derivative order in `1..p` once; every executed restart-by-differences
/// costs `dim + 1` extra order-`p-1` calls; every exact restart costs one
/// order-`p` call; secant and keep-constant branches cost nothing.  The
/// stopping iterate's tensor build is not an iteration record, so its branch
/// is reconstructed from the restart cadence and the strategy kind.  Returns
/// `None` for aborted traces, which may have stopped between those events.
pub fn ledger_from_trace(trace: &RunTrace) -> Option<OracleCounts> {
    if matches!(
        trace.final_record.termination,
        TerminationReason::Aborted(_)
    ) {
        return None;
    }
    let p = trace.header.p;
    let n = trace.header.dim as u64;
    let mut counts = OracleCounts::default();
    let mut add = |order: usize, calls: u64| match order {
        1 => counts.order1 += calls,
        2 => counts.order2 += calls,
        3 => counts.order3 += calls,
        _ => unreachable!("no oracle order beyond 3 is ever consumed"),
    };

    let visited = trace.final_record.iterations as u64 + 1;
    for order in 1..p {
        add(order, visited);
    }
    for row in &trace.iters {
        match row.branch {
            UpdateBranch::RestartExact => add(p, 1),
            UpdateBranch::RestartFd => add(p - 1, n + 1),
            _ => {}
        }
    }
    // The stopping iterate built a tensor too, outside the iteration records.
    if trace.final_record.iterations.is_multiple_of(trace.header.m) {
        match trace.header.strategy {
            StrategyKind::Lazy | StrategyKind::PsbLazy => add(p, 1),
            StrategyKind::Fd | StrategyKind::PsbFd | StrategyKind::DfpFd => add(p - 1, n + 1),
        }
    }
    Some(counts)
}

/// One row of a sweep table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub eps1: f64,
    pub termination: TerminationReason,
    pub iterations: usize,
    pub oracle: OracleCounts,
    /// Set when the run failed structurally; such rows carry the partial
    /// trace's counts and are excluded from the exponent fit.
    pub aborted: bool,
}

/// Aggregated sweep outcome, rows in grid order.
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Fitted exponent of `log iterations` against `log (1/eps1)` over the
    /// converged rows; `None` with fewer than two of them.
    pub fitted_exponent: Option<f64>,
}

impl SweepTable {
    /// Render as an aligned text table with the fit appended.
    pub fn render(&self) -> String {
        let mut out =
            String::from("eps1          iterations  value  order1  order2  order3  termination\n");
        for row in &self.rows {
            let flag = if row.aborted { " (aborted)" } else { "" };
            out.push_str(&format!(
                "{:<12.6e}  {:>10}  {:>5}  {:>6}  {:>6}  {:>6}  {}{}\n",
                row.eps1,
                row.iterations,
                row.oracle.value,
                row.oracle.order1,
                row.oracle.order2,
                row.oracle.order3,
                row.termination.code(),
                flag,
            ));
        }
        match self.fitted_exponent {
            Some(e) => out.push_str(&format!("fitted exponent (iterations vs 1/eps1): {e:.4}\n")),
            None => out.push_str("fitted exponent: not available (fewer than 2 converged rows)\n"),
        }
        out
    }
}

/// Run the spec once per grid tolerance, in parallel, and tabulate.
///
/// Runs are independent and fan out across the worker pool; aggregation
/// follows grid order regardless of completion order.  Structural failures
/// do not abort the sweep: the affected row is flagged and reported from the
/// partial trace.
pub fn sweep_epsilon(spec: &ExperimentSpec) -> Result<SweepTable, HarnessError> {
    let grid = &spec.eps1_grid;
    let ok = grid.len() >= 4
        && grid.iter().all(|&e| e > 0.0 && e.is_finite())
        && grid.windows(2).all(|w| w[1] < w[0]);
    if !ok {
        return Err(HarnessError::BadGrid);
    }
    // Fail fast on spec problems (unknown name, bad dimension) before
    // spawning workers.
    spec.instantiate()?;

    let rows: Vec<Result<SweepRow, HarnessError>> = grid
        .par_iter()
        .enumerate()
        .map(|(idx, &eps1)| {
            let mut sub = spec.clone();
            sub.settings.eps1 = eps1;
            let stem = format!("{}-sweep{idx}", sub.stem());
            match run_experiment_stem(&sub, &stem) {
                Ok(result) => {
                    let fin = &result.outcome.trace.final_record;
                    Ok(SweepRow {
                        eps1,
                        termination: fin.termination.clone(),
                        iterations: fin.iterations,
                        oracle: fin.oracle,
                        aborted: false,
                    })
                }
                Err(HarnessError::Driver(e)) => {
                    let fin = &e.partial.final_record;
                    Ok(SweepRow {
                        eps1,
                        termination: fin.termination.clone(),
                        iterations: fin.iterations,
                        oracle: fin.oracle,
                        aborted: true,
                    })
                }
                Err(other) => Err(other),
            }
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;

    let converged: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.termination == TerminationReason::Converged)
        .map(|r| (r.eps1, r.iterations.max(1) as f64))
        .collect();
    let fitted_exponent = if converged.len() >= 2 {
        Some(sweep_exponent(&converged))
    } else {
        None
    };
    Ok(SweepTable {
        rows,
        fitted_exponent,
    })
}
