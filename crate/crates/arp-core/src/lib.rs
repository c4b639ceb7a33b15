//! Objective-function-free adaptive regularization of order `p` with
//! approximate highest-order derivative tensors.
//!
//! The crate implements a regularized Taylor-model method for unconstrained
//! smooth minimization in which the objective value is never consulted by the
//! algorithm: steps are accepted unconditionally and the regularization weight
//! grows by the exact recurrence `sigma_{k+1} = sigma_k (1 + ||s_k||^{p+1})`.
//! The order-`p` derivative tensor is replaced by an approximation that is
//! either refreshed periodically (exactly or by finite differences) and kept
//! constant in between, or propagated by high-order secant updates of
//! PSB / DFP type.
//!
//! Module map:
//! - [`tensor`]: dense symmetric tensor algebra (contractions, weighted norms,
//!   symmetrization, norm estimates).
//! - [`problems`]: analytic benchmark objectives with derivative tensors of
//!   every order the solver consumes.
//! - [`model`]: the regularized Taylor model, its derivatives, and the step
//!   acceptance certificate.
//! - [`subsolver`]: inner minimization of the model (exact secular solve for
//!   `p = 2`, certified descent for general `p`).
//! - [`update`]: strategies producing the order-`p` tensor approximation
//!   (lazy / finite-difference restarts, PSB and DFP secant updates).
//! - [`driver`]: the outer iteration, stopping logic, and invariant checks.
//! - [`trace`]: serializable per-iteration records and run artifacts.
//! - [`rates`]: decay-rate fitting and trend statistics over traces.
//! - [`harness`]: named experiment setups, sweeps, and report generation.

pub mod driver;
pub mod harness;
pub mod model;
pub mod problems;
pub mod rates;
pub mod subsolver;
pub mod tensor;
pub mod trace;
pub mod update;
