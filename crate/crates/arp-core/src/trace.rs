//! Run traces: a JSON-lines record stream plus a one-row CSV summary.
//!
//! A trace is the evidence object for every empirical claim about a run: one
//! header record (configuration), one record per executed iteration, and one
//! final record (termination, final measures, oracle-call ledger).  The
//! JSON-lines form is byte-deterministic for a fixed configuration — wall
//! time deliberately lives only in the CSV summary so that repeated runs can
//! be compared with a plain byte diff.
//!
//! Objective values appear nowhere in a trace: the solver never evaluates
//! the objective, and the ledger's `value_calls` column makes that checkable
//! (it must read 0).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::update::{Condition1Audit, StrategyKind, UpdateBranch};

/// Version stamp carried by every trace header.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace I/O failed")]
    Io(#[from] std::io::Error),
    #[error("trace line is not valid JSON")]
    Json(#[from] serde_json::Error),
    #[error("unsupported trace schema version {found} (this build reads {TRACE_SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
    #[error("malformed trace: {what}")]
    Malformed { what: &'static str },
}

/// Run configuration, echoed at the top of every trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub problem: String,
    pub dim: usize,
    pub p: usize,
    pub strategy: StrategyKind,
    pub m: usize,
    pub sigma0: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub max_iters: usize,
    pub seed: u64,
}

/// One executed iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub k: usize,
    /// Gradient norm at the iterate.
    pub grad_norm: f64,
    /// Approximate negative-curvature measure used for stopping.
    pub chi: f64,
    /// Exact-Hessian negative-curvature audit, when enabled.
    pub beta: Option<f64>,
    /// Regularization weight in force for this iteration's model.
    pub sigma: f64,
    pub step_norm: f64,
    pub model_decrease: f64,
    pub decrease_ok: bool,
    pub theta1_ok: bool,
    pub theta2_ok: bool,
    /// Whether this iteration refreshed the tensor (k mod m = 0).
    pub restart: bool,
    pub branch: UpdateBranch,
    /// Finite-difference stepsize, on FD restart iterations.
    pub h: Option<f64>,
    pub h_floored: bool,
    /// Sum of the (p+1)-th powers of the buffered step norms before this
    /// iteration's step.
    pub xi: f64,
    /// Tensor-accuracy audit against the exact derivative, when enabled.
    pub audit: Option<Condition1Audit>,
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum TerminationReason {
    /// First iterate with gradient norm <= eps1 and curvature measure <= eps2.
    Converged,
    /// Iteration budget exhausted.
    MaxIters,
    /// Structured failure; the trace holds everything up to the failure.
    Aborted(String),
}

impl TerminationReason {
    /// Short code used in CSV summaries and exit-status mapping.
    pub fn code(&self) -> &'static str {
        match self {
            TerminationReason::Converged => "converged",
            TerminationReason::MaxIters => "max_iters",
            TerminationReason::Aborted(_) => "aborted",
        }
    }
}

/// Oracle-call ledger: how often each derivative order was evaluated on the
/// algorithm path.  `value` must always be 0 — the solver is
/// objective-function-free.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounts {
    pub value: u64,
    pub order1: u64,
    pub order2: u64,
    pub order3: u64,
}

/// Terminal summary record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    /// Number of executed iterations (equals the number of iter records).
    pub iterations: usize,
    pub termination: TerminationReason,
    /// Measures at the final iterate (the one the run stopped on).
    pub grad_norm: f64,
    pub chi: f64,
    pub beta: Option<f64>,
    pub sigma: f64,
    /// Running minimum of the gradient norm over all visited iterates.
    pub min_grad_norm: f64,
    pub oracle: OracleCounts,
}

#[derive(Debug, Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum RecordRef<'a> {
    Header(&'a TraceHeader),
    Iter(&'a IterRecord),
    Final(&'a FinalRecord),
}

#[derive(Debug, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(TraceHeader),
    Iter(IterRecord),
    Final(FinalRecord),
}

/// A complete run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub header: TraceHeader,
    pub iters: Vec<IterRecord>,
    pub final_record: FinalRecord,
}

impl RunTrace {
    /// Serialize as JSON lines: header, iterations in order, final record.
    pub fn write_jsonl(&self, w: &mut dyn Write) -> Result<(), TraceError> {
        let mut emit = |record: RecordRef<'_>| -> Result<(), TraceError> {
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n")?;
            Ok(())
        };
        emit(RecordRef::Header(&self.header))?;
        for iter in &self.iters {
            emit(RecordRef::Iter(iter))?;
        }
        emit(RecordRef::Final(&self.final_record))
    }

    /// Parse a JSON-lines trace, enforcing schema version and record order.
    pub fn read_jsonl(r: impl BufRead) -> Result<RunTrace, TraceError> {
        let mut header = None;
        let mut iters = Vec::new();
        let mut final_record = None;
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if final_record.is_some() {
                return Err(TraceError::Malformed {
                    what: "records after the final record",
                });
            }
            match serde_json::from_str::<Record>(&line)? {
                Record::Header(h) => {
                    if header.is_some() {
                        return Err(TraceError::Malformed {
                            what: "duplicate header record",
                        });
                    }
                    if h.schema_version != TRACE_SCHEMA_VERSION {
                        return Err(TraceError::SchemaVersion {
                            found: h.schema_version,
                        });
                    }
                    header = Some(h);
                }
                Record::Iter(record) => {
                    if header.is_none() {
                        return Err(TraceError::Malformed {
                            what: "iteration record before the header",
                        });
                    }
                    if record.k != iters.len() {
                        return Err(TraceError::Malformed {
                            what: "iteration records out of order",
                        });
                    }
                    iters.push(record);
                }
                Record::Final(f) => final_record = Some(f),
            }
        }
        Ok(RunTrace {
            header: header.ok_or(TraceError::Malformed {
                what: "missing header record",
            })?,
            iters,
            final_record: final_record.ok_or(TraceError::Malformed {
                what: "missing final record",
            })?,
        })
    }

    /// Running minimum of the gradient norm, including the final iterate.
    pub fn running_min_grad(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.iters.len() + 1);
        let mut best = f64::INFINITY;
        for record in &self.iters {
            best = best.min(record.grad_norm);
            out.push(best);
        }
        best = best.min(self.final_record.grad_norm);
        out.push(best);
        out
    }

    /// Column names of the CSV summary row.
    pub fn csv_header() -> &'static str {
        "problem,dim,p,strategy,m,eps1,eps2,seed,termination,iterations,grad_norm,chi,\
         sigma_final,min_grad_norm,value_calls,order1_calls,order2_calls,order3_calls,\
         wall_seconds"
    }

    /// One CSV summary row.  Wall time is supplied by the caller and appears
    /// only here, keeping the JSON-lines bytes reproducible.
    pub fn csv_row(&self, wall_seconds: f64) -> String {
        let h = &self.header;
        let f = &self.final_record;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            h.problem,
            h.dim,
            h.p,
            h.strategy,
            h.m,
            h.eps1,
            h.eps2,
            h.seed,
            f.termination.code(),
            f.iterations,
            f.grad_norm,
            f.chi,
            f.sigma,
            f.min_grad_norm,
            f.oracle.value,
            f.oracle.order1,
            f.oracle.order2,
            f.oracle.order3,
            wall_seconds,
        )
    }
}
