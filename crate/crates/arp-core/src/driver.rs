//! Outer iteration of the objective-function-free regularized method.
//!
//! Each iteration refreshes the exact derivatives of orders `1..p-1`, obtains
//! the order-`p` tensor approximation from the configured strategy, checks the
//! stopping measures, minimizes the regularized Taylor model, and accepts the
//! resulting step unconditionally.  The regularization weight follows the
//! literal recurrence `sigma_{k+1} = sigma_k + sigma_k ||s_k||^{p+1}`, so the
//! weight never decreases and no objective value is ever consulted: the driver
//! routes all algorithmic derivative evaluations through a counting wrapper
//! and asserts at the end of every run that the value-oracle count is zero.
//!
//! Runs produce a [`RunTrace`] whether they finish or fail; structured
//! failures carry the partial trace so that every run artifact is inspectable.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{check_step, lambda_min_sym, ModelError, ModelState};
use crate::problems::{CountingProblem, Problem, ProblemError};
use crate::subsolver::{minimize_model, SubsolverConfig, SubsolverError};
use crate::tensor::SymTensor;
use crate::trace::{
    FinalRecord, IterRecord, OracleCounts, RunTrace, TerminationReason, TraceHeader,
    TRACE_SCHEMA_VERSION,
};
use crate::update::{
    condition1_audit, tensor_p, HistoryBuffer, SecantData, StrategyConfig, StrategyKind,
    UpdateError,
};

/// Everything `run` needs besides the problem and the start point.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    /// Model order (2 or 3).
    pub p: usize,
    /// Tensor approximation strategy and its parameters.
    pub strategy: StrategyConfig,
    /// Inner model minimizer.
    pub subsolver: SubsolverConfig,
    /// First-order certificate slack (must exceed 1).
    pub theta1: f64,
    /// Second-order certificate slack (must exceed 1).
    pub theta2: f64,
    /// Initial regularization weight.
    pub sigma0: f64,
    /// First-order stopping tolerance on the gradient norm.
    pub eps1: f64,
    /// Second-order stopping tolerance on the curvature measure.
    pub eps2: f64,
    /// Iteration budget; the run stops with `MaxIters` when `k` reaches it.
    pub max_iters: usize,
    /// Record exact-derivative audits and the exact-Hessian curvature column.
    /// Diagnostics only: evaluated on the raw problem, outside the oracle
    /// ledger, and never consulted by the algorithm.
    pub audit: bool,
    /// Recorded in the trace header for experiment bookkeeping.  The driver
    /// itself is deterministic and does not consume randomness.
    pub seed: u64,
}

impl SolverSettings {
    /// Defaults for order `p` with the given strategy kind.
    pub fn new(p: usize, kind: StrategyKind) -> Self {
        SolverSettings {
            p,
            strategy: StrategyConfig::new(kind),
            subsolver: SubsolverConfig::default(),
            theta1: 2.0,
            theta2: 2.0,
            sigma0: 1.0,
            eps1: 1e-5,
            eps2: 1e-4,
            max_iters: 100_000,
            audit: true,
            seed: 0,
        }
    }

    /// Panics on out-of-range parameters; called on entry to [`run`].
    pub fn validate(&self) {
        assert!(
            self.p == 2 || self.p == 3,
            "model order must be 2 or 3 (got {})",
            self.p
        );
        assert!(
            self.theta1 > 1.0 && self.theta2 > 1.0,
            "theta parameters must exceed 1"
        );
        assert!(
            self.sigma0 > 0.0 && self.sigma0.is_finite(),
            "sigma0 must be positive and finite"
        );
        assert!(
            self.eps1 > 0.0 && self.eps2 > 0.0,
            "stopping tolerances must be positive"
        );
        self.strategy.validate();
        self.subsolver.validate();
    }
}

/// Second-order stopping measure `chi` and the exact-Hessian audit `beta`.
///
/// For `p = 2` the algorithm can only consult its own Hessian approximation,
/// so `chi = max(0, -lambda_min(T_k))` and `beta` (when requested) is the same
/// functional of the exact Hessian.  For `p >= 3` the exact Hessian is among
/// the refreshed derivatives, so `chi` uses it directly and `beta` coincides
/// with `chi`.
pub fn second_order_measure(
    p: usize,
    t_k: &SymTensor,
    exact_hess: Option<&SymTensor>,
) -> (f64, Option<f64>) {
    assert!(p >= 2, "model order must be at least 2");
    let neg_curvature = |m: &DMatrix<f64>| (-lambda_min_sym(m)).max(0.0);
    if p == 2 {
        let chi = neg_curvature(&t_k.as_matrix());
        (chi, exact_hess.map(|h| neg_curvature(&h.as_matrix())))
    } else {
        let h = exact_hess.expect("order >= 3 stopping requires the refreshed Hessian");
        let chi = neg_curvature(&h.as_matrix());
        (chi, Some(chi))
    }
}

/// Structured failure cause.
#[derive(Debug, Error)]
pub enum DriverErrorKind {
    #[error("derivative oracle failed at iteration {k}: {source}")]
    Oracle {
        k: usize,
        #[source]
        source: ProblemError,
    },
    #[error("non-finite derivative data at iteration {k}")]
    NonFiniteDerivative { k: usize },
    #[error("tensor update failed at iteration {k}: {source}")]
    Update {
        k: usize,
        #[source]
        source: UpdateError,
    },
    #[error("model assembly failed at iteration {k}: {source}")]
    Model {
        k: usize,
        #[source]
        source: ModelError,
    },
    #[error("subsolver failed at iteration {k}: {source}")]
    Subsolver {
        k: usize,
        #[source]
        source: SubsolverError,
    },
    #[error("driver re-validation rejected the subsolver step at iteration {k}")]
    CertificateMismatch { k: usize },
    #[error("iterate became non-finite after the step at iteration {k}")]
    NonFiniteIterate { k: usize },
}

/// A failed run: the cause plus everything recorded before the failure.
///
/// The partial trace ends with a final record whose termination is
/// [`TerminationReason::Aborted`] carrying the rendered cause, so failed runs
/// serialize and replay exactly like finished ones.
#[derive(Debug, Error)]
#[error("{kind}")]
pub struct DriverError {
    #[source]
    pub kind: DriverErrorKind,
    pub partial: RunTrace,
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: RunTrace,
    /// Iterate the run stopped on.
    pub x_final: DVector<f64>,
}

/// Stopping measures at the most recent refresh; kept so aborted runs can
/// report the last successfully measured iterate.
#[derive(Debug, Clone, Copy)]
struct Measured {
    grad_norm: f64,
    chi: f64,
    beta: Option<f64>,
}

fn oracle_counts(counting: &CountingProblem<'_>) -> OracleCounts {
    OracleCounts {
        value: counting.value_calls(),
        order1: counting.derivative_calls(1),
        order2: counting.derivative_calls(2),
        order3: counting.derivative_calls(3),
    }
}

fn abort(
    kind: DriverErrorKind,
    header: &TraceHeader,
    iters: &mut Vec<IterRecord>,
    sigma: f64,
    min_grad: f64,
    counting: &CountingProblem<'_>,
    last: Measured,
) -> DriverError {
    let final_record = FinalRecord {
        iterations: iters.len(),
        termination: TerminationReason::Aborted(kind.to_string()),
        grad_norm: last.grad_norm,
        chi: last.chi,
        beta: last.beta,
        sigma,
        min_grad_norm: if min_grad.is_finite() {
            min_grad
        } else {
            last.grad_norm
        },
        oracle: oracle_counts(counting),
    };
    DriverError {
        kind,
        partial: RunTrace {
            header: header.clone(),
            iters: std::mem::take(iters),
            final_record,
        },
    }
}

/// Run the method from `x0` until convergence, iteration exhaustion, or a
/// structured failure.
///
/// Per iteration: refresh the exact derivatives of orders `1..p-1`, form the
/// secant data from the previous iterate's stored derivatives (no extra
/// oracle calls), obtain `T_k` from the strategy, measure `(||g||, chi)`,
/// stop if both tolerances hold, otherwise minimize the regularized model,
/// re-validate the returned step against the three acceptance conditions, and
/// take the step unconditionally.  The objective value is never evaluated;
/// the final record's oracle ledger proves it (`value = 0`, asserted).
// The error variant deliberately carries the full partial trace so failed
// runs stay replayable; the cold path is worth the size.
#[allow(clippy::result_large_err)]
pub fn run(
    problem: &dyn Problem,
    x0: &DVector<f64>,
    settings: &SolverSettings,
) -> Result<RunOutcome, DriverError> {
    settings.validate();
    let n = problem.dim();
    assert_eq!(x0.len(), n, "start point dimension mismatch");
    let p = settings.p;
    let m = settings.strategy.m;
    let counting = CountingProblem::new(problem);

    let header = TraceHeader {
        schema_version: TRACE_SCHEMA_VERSION,
        problem: problem.name().to_string(),
        dim: n,
        p,
        strategy: settings.strategy.kind,
        m,
        sigma0: settings.sigma0,
        theta1: settings.theta1,
        theta2: settings.theta2,
        eps1: settings.eps1,
        eps2: settings.eps2,
        max_iters: settings.max_iters,
        seed: settings.seed,
    };

    let mut x = x0.clone();
    let mut sigma = settings.sigma0;
    let mut history = HistoryBuffer::new(m);
    let mut t_prev: Option<SymTensor> = None;
    let mut prev_step: Option<DVector<f64>> = None;
    let mut prev_grad: Option<DVector<f64>> = None;
    // Order-(p-1) derivative at the previous iterate, for the secant
    // right-hand side.
    let mut prev_high: Option<SymTensor> = None;
    let mut iters: Vec<IterRecord> = Vec::new();
    let mut min_grad = f64::INFINITY;
    let mut last = Measured {
        grad_norm: 0.0,
        chi: 0.0,
        beta: None,
    };

    let mut k = 0usize;
    let (termination, finish) = loop {
        // Refresh the exact derivatives of orders 1..=p-1 (one oracle call
        // each; these are the only per-iteration derivative costs outside
        // restarts).
        let mut derivs: Vec<SymTensor> = Vec::with_capacity(p - 1);
        for order in 1..p {
            match counting.derivative(&x, order) {
                Ok(t) => derivs.push(t),
                Err(source) => {
                    return Err(abort(
                        DriverErrorKind::Oracle { k, source },
                        &header,
                        &mut iters,
                        sigma,
                        min_grad,
                        &counting,
                        last,
                    ))
                }
            }
        }
        if derivs
            .iter()
            .any(|t| t.entries().iter().any(|v| !v.is_finite()))
        {
            return Err(abort(
                DriverErrorKind::NonFiniteDerivative { k },
                &header,
                &mut iters,
                sigma,
                min_grad,
                &counting,
                last,
            ));
        }
        let g = derivs[0].as_vector();
        let grad_norm = g.norm();

        // Secant data across the previous step, from derivatives already in
        // hand: y = D^{p-1}f(x_k) - D^{p-1}f(x_{k-1}).
        let secant = match (&prev_step, &prev_grad, &prev_high) {
            (Some(s), Some(pg), Some(ph)) => Some(SecantData {
                s_prev: s.clone(),
                y_tensor: derivs[p - 2]
                    .sub(ph)
                    .expect("stored derivative has matching shape"),
                y_vec: &g - pg,
            }),
            _ => None,
        };

        let (t_k, info) = match tensor_p(
            k,
            p,
            t_prev.as_ref(),
            secant.as_ref(),
            &history,
            &counting,
            &x,
            &settings.strategy,
        ) {
            Ok(pair) => pair,
            Err(source) => {
                return Err(abort(
                    DriverErrorKind::Update { k, source },
                    &header,
                    &mut iters,
                    sigma,
                    min_grad,
                    &counting,
                    last,
                ))
            }
        };

        // Stopping measures.  For p = 2 the exact-Hessian curvature column is
        // an audit on the raw problem, outside the oracle ledger.
        let (chi, beta) = if p >= 3 {
            second_order_measure(p, &t_k, Some(&derivs[1]))
        } else {
            let audit_hess = if settings.audit {
                match problem.derivative(&x, 2) {
                    Ok(h) => Some(h),
                    Err(source) => {
                        return Err(abort(
                            DriverErrorKind::Oracle { k, source },
                            &header,
                            &mut iters,
                            sigma,
                            min_grad,
                            &counting,
                            last,
                        ))
                    }
                }
            } else {
                None
            };
            second_order_measure(p, &t_k, audit_hess.as_ref())
        };
        min_grad = min_grad.min(grad_norm);
        last = Measured {
            grad_norm,
            chi,
            beta,
        };

        if grad_norm <= settings.eps1 && chi <= settings.eps2 {
            break (TerminationReason::Converged, last);
        }
        if k == settings.max_iters {
            break (TerminationReason::MaxIters, last);
        }

        // Tensor-accuracy audit against the exact derivative, before the
        // history rotates (its restart budget reads the buffered step norms).
        let audit_row = if settings.audit {
            match condition1_audit(&t_k, problem, &x, k, p, &history, &settings.strategy) {
                Ok(a) => Some(a),
                Err(source) => {
                    return Err(abort(
                        DriverErrorKind::Update { k, source },
                        &header,
                        &mut iters,
                        sigma,
                        min_grad,
                        &counting,
                        last,
                    ))
                }
            }
        } else {
            None
        };
        let xi = history.xi(p);

        // Assemble the model.  The objective value slot is pinned to zero:
        // the model is used only through differences and derivatives, so the
        // constant term is irrelevant and the true value is never requested.
        let high_for_next = derivs[p - 2].clone();
        let state = match ModelState::new(x.clone(), 0.0, derivs, t_k.clone(), sigma) {
            Ok(st) => st,
            Err(source) => {
                return Err(abort(
                    DriverErrorKind::Model { k, source },
                    &header,
                    &mut iters,
                    sigma,
                    min_grad,
                    &counting,
                    last,
                ))
            }
        };

        let (s, inner_cert) = match minimize_model(
            &state,
            settings.theta1,
            settings.theta2,
            &settings.subsolver,
        ) {
            Ok(pair) => pair,
            Err(source) => {
                return Err(abort(
                    DriverErrorKind::Subsolver { k, source },
                    &header,
                    &mut iters,
                    sigma,
                    min_grad,
                    &counting,
                    last,
                ))
            }
        };

        // Independent re-validation: recompute the three conditions from the
        // model directly and require agreement with the subsolver's claim.
        let cert = check_step(&state, &s, settings.theta1, settings.theta2);
        let agrees = cert.decrease_ok == inner_cert.decrease_ok
            && cert.theta1_ok == inner_cert.theta1_ok
            && cert.theta2_ok == inner_cert.theta2_ok;
        if !cert.all_ok() || !agrees {
            return Err(abort(
                DriverErrorKind::CertificateMismatch { k },
                &header,
                &mut iters,
                sigma,
                min_grad,
                &counting,
                last,
            ));
        }

        let step_norm = s.norm();
        iters.push(IterRecord {
            k,
            grad_norm,
            chi,
            beta,
            sigma,
            step_norm,
            model_decrease: cert.model_decrease,
            decrease_ok: cert.decrease_ok,
            theta1_ok: cert.theta1_ok,
            theta2_ok: cert.theta2_ok,
            restart: k.is_multiple_of(m),
            branch: info.branch,
            h: info.h,
            h_floored: info.h_floored,
            xi,
            audit: audit_row,
        });

        // Unconditional acceptance and the literal weight recurrence.
        x += &s;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(abort(
                DriverErrorKind::NonFiniteIterate { k },
                &header,
                &mut iters,
                sigma,
                min_grad,
                &counting,
                last,
            ));
        }
        sigma = sigma + sigma * step_norm.powi(p as i32 + 1);
        history.push(step_norm);
        t_prev = Some(t_k);
        prev_step = Some(s);
        prev_grad = Some(g);
        prev_high = Some(high_for_next);
        k += 1;
    };

    let oracle = oracle_counts(&counting);
    assert_eq!(
        oracle.value, 0,
        "objective-function-free contract violated: the value oracle was called"
    );
    let final_record = FinalRecord {
        iterations: k,
        termination,
        grad_norm: finish.grad_norm,
        chi: finish.chi,
        beta: finish.beta,
        sigma,
        min_grad_norm: min_grad.min(finish.grad_norm),
        oracle,
    };
    Ok(RunOutcome {
        trace: RunTrace {
            header,
            iters,
            final_record,
        },
        x_final: x,
    })
}
