//! The regularized inexact Taylor model and its step certificate.
//!
//! At an iterate `x` with exact derivatives `D^i f(x)` for `i = 1..p-1`, an
//! order-`p` approximation `T_k`, and weight `sigma > 0`, the model is
//!
//! ```text
//! taylor(s) = f(x) + sum_{i=1}^{p-1} D^i f(x)[s]^i / i!  +  T_k[s]^p / p!
//! m(s)      = taylor(s) + sigma ||s||^{p+1} / (p+1)!
//! ```
//!
//! A step `s` is certified by three conditions with parameters
//! `theta1, theta2 > 1`:
//!
//! ```text
//! m(s) <= m(0)
//! ||grad taylor(s)||                   <= theta1 sigma ||s||^p / p!
//! max(0, -lambda_min(hess taylor(s)))  <= theta2 sigma ||s||^{p-1} / (p-1)!
//! ```
//!
//! An exact local minimizer of `m` satisfies all three with `theta = 1`
//! (stationarity gives `||grad taylor(s)|| = sigma ||s||^p / p!` and
//! second-order optimality bounds the negative curvature), so any
//! `theta > 1` leaves slack for an approximate minimizer.
//!
//! The objective value `f(x)` enters only the reported model *values*; the
//! certificate's decrease test uses the difference `m(s) - m(0)`, in which
//! `f(x)` cancels, and is computed without it.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::tensor::SymTensor;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model order must be at least 2 (got {p})")]
    OrderTooSmall { p: usize },
    #[error("expected {expect} lower-order derivative tensors for order {p}, got {got}")]
    DerivativeCount { p: usize, expect: usize, got: usize },
    #[error("derivative at position {position} has order {got}, expected {expect}")]
    DerivativeOrder {
        position: usize,
        got: usize,
        expect: usize,
    },
    #[error("tensor dimension {got} does not match iterate dimension {dim}")]
    DimMismatch { dim: usize, got: usize },
    #[error("sigma must be positive and finite (got {sigma})")]
    BadSigma { sigma: f64 },
}

/// Exact factorial for the small orders used by the model.
pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Frozen data defining the model at one iterate.
#[derive(Debug, Clone)]
pub struct ModelState {
    x: DVector<f64>,
    /// Objective value at `x`.  Diagnostic only: never enters control flow.
    f_x: f64,
    /// Exact derivative tensors of orders `1..=p-1` (`derivs[i]` has order `i+1`).
    derivs: Vec<SymTensor>,
    /// Order-`p` approximation of the `p`-th derivative.
    t_k: SymTensor,
    sigma: f64,
    p: usize,
}

impl ModelState {
    pub fn new(
        x: DVector<f64>,
        f_x: f64,
        derivs: Vec<SymTensor>,
        t_k: SymTensor,
        sigma: f64,
    ) -> Result<Self, ModelError> {
        let p = t_k.order();
        if p < 2 {
            return Err(ModelError::OrderTooSmall { p });
        }
        if derivs.len() != p - 1 {
            return Err(ModelError::DerivativeCount {
                p,
                expect: p - 1,
                got: derivs.len(),
            });
        }
        let dim = x.len();
        for (i, d) in derivs.iter().enumerate() {
            if d.order() != i + 1 {
                return Err(ModelError::DerivativeOrder {
                    position: i,
                    got: d.order(),
                    expect: i + 1,
                });
            }
            if d.dim() != dim {
                return Err(ModelError::DimMismatch { dim, got: d.dim() });
            }
        }
        if t_k.dim() != dim {
            return Err(ModelError::DimMismatch {
                dim,
                got: t_k.dim(),
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ModelError::BadSigma { sigma });
        }
        Ok(ModelState {
            x,
            f_x,
            derivs,
            t_k,
            sigma,
            p,
        })
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn f_x(&self) -> f64 {
        self.f_x
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn gradient(&self) -> DVector<f64> {
        self.derivs[0].as_vector()
    }

    pub fn tensor(&self) -> &SymTensor {
        &self.t_k
    }

    pub fn derivs(&self) -> &[SymTensor] {
        &self.derivs
    }

    /// The `s`-dependent part of the Taylor expansion,
    /// `sum_i D^i f[s]^i / i! + T_k[s]^p / p!` (no `f(x)` term).
    fn taylor_tail(&self, s: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for (i, d) in self.derivs.iter().enumerate() {
            let order = i + 1;
            let term = if order == 1 {
                d.as_vector().dot(s)
            } else {
                d.eval(s).expect("validated dims")
            };
            acc += term / factorial(order);
        }
        acc + self.t_k.eval(s).expect("validated dims") / factorial(self.p)
    }

    /// Regularizer `sigma ||s||^{p+1} / (p+1)!`.
    fn regularizer(&self, s: &DVector<f64>) -> f64 {
        self.sigma * s.norm().powi(self.p as i32 + 1) / factorial(self.p + 1)
    }
}

/// Inexact Taylor value `taylor(s)`, including the objective value at `s = 0`.
pub fn taylor_value(state: &ModelState, s: &DVector<f64>) -> f64 {
    state.f_x + state.taylor_tail(s)
}

/// Model value `m(s) = taylor(s) + sigma ||s||^{p+1} / (p+1)!`.
pub fn model_value(state: &ModelState, s: &DVector<f64>) -> f64 {
    taylor_value(state, s) + state.regularizer(s)
}

/// Model decrease `m(s) - m(0)`, computed without the objective value.
pub fn model_decrease(state: &ModelState, s: &DVector<f64>) -> f64 {
    state.taylor_tail(s) + state.regularizer(s)
}

/// Gradient of the Taylor part:
/// `g + sum_{i=2}^{p-1} D^i f[s]^{i-1} / (i-1)! + T_k[s]^{p-1} / (p-1)!`.
pub fn taylor_grad(state: &ModelState, s: &DVector<f64>) -> DVector<f64> {
    let mut acc = state.gradient();
    for (i, d) in state.derivs.iter().enumerate().skip(1) {
        let order = i + 1;
        let contracted = d
            .contract(s, order - 1)
            .expect("validated dims")
            .as_vector();
        acc += contracted / factorial(order - 1);
    }
    let leading = state
        .t_k
        .contract(s, state.p - 1)
        .expect("validated dims")
        .as_vector();
    acc + leading / factorial(state.p - 1)
}

/// Hessian of the Taylor part:
/// `sum_{i=2}^{p-1} D^i f[s]^{i-2} / (i-2)! + T_k[s]^{p-2} / (p-2)!`.
pub fn taylor_hess(state: &ModelState, s: &DVector<f64>) -> DMatrix<f64> {
    let n = state.dim();
    let mut acc = DMatrix::zeros(n, n);
    for (i, d) in state.derivs.iter().enumerate().skip(1) {
        let order = i + 1;
        let slice = if order == 2 {
            d.as_matrix()
        } else {
            d.contract(s, order - 2)
                .expect("validated dims")
                .as_matrix()
        };
        acc += slice / factorial(order - 2);
    }
    let leading = if state.p == 2 {
        state.t_k.as_matrix()
    } else {
        state
            .t_k
            .contract(s, state.p - 2)
            .expect("validated dims")
            .as_matrix()
    };
    acc + leading / factorial(state.p - 2)
}

/// Gradient of the full model: `taylor_grad(s) + (sigma/p!) ||s||^{p-1} s`.
pub fn model_grad(state: &ModelState, s: &DVector<f64>) -> DVector<f64> {
    let norm = s.norm();
    let mut g = taylor_grad(state, s);
    if norm > 0.0 {
        let coeff = state.sigma * norm.powi(state.p as i32 - 1) / factorial(state.p);
        g += s * coeff;
    }
    g
}

/// Hessian of the full model:
/// `taylor_hess(s) + (sigma/p!) (||s||^{p-1} I + (p-1) ||s||^{p-3} s s')`.
///
/// Both regularizer terms vanish continuously as `s -> 0`, so the limit
/// `taylor_hess(0)` is used there.
pub fn model_hess(state: &ModelState, s: &DVector<f64>) -> DMatrix<f64> {
    let norm = s.norm();
    let mut h = taylor_hess(state, s);
    if norm > 0.0 {
        let n = state.dim();
        let coeff = state.sigma / factorial(state.p);
        let scal = coeff * norm.powi(state.p as i32 - 1);
        for i in 0..n {
            h[(i, i)] += scal;
        }
        let outer_coeff = coeff * (state.p as f64 - 1.0) * norm.powi(state.p as i32 - 3);
        h += s * s.transpose() * outer_coeff;
    }
    h
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn lambda_min_sym(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Outcome of evaluating the three step conditions at a candidate step.
#[derive(Debug, Clone)]
pub struct StepCertificate {
    /// The evaluated step.
    pub s: DVector<f64>,
    /// `m(s) - m(0)` (no objective value involved).
    pub model_decrease: f64,
    /// `||grad taylor(s)||`.
    pub grad_norm: f64,
    /// `lambda_min(hess taylor(s))`.
    pub lam_min_taylor: f64,
    pub decrease_ok: bool,
    pub theta1_ok: bool,
    pub theta2_ok: bool,
}

impl StepCertificate {
    pub fn all_ok(&self) -> bool {
        self.decrease_ok && self.theta1_ok && self.theta2_ok
    }
}

/// Evaluate the step conditions at `s` with parameters `theta1, theta2 > 1`.
///
/// At `s = 0` both right-hand sides are exactly zero, so the certificate
/// holds iff the gradient vanishes and the Taylor Hessian has no negative
/// curvature.
pub fn check_step(
    state: &ModelState,
    s: &DVector<f64>,
    theta1: f64,
    theta2: f64,
) -> StepCertificate {
    assert!(
        theta1 > 1.0 && theta2 > 1.0,
        "theta parameters must exceed 1"
    );
    let norm = s.norm();
    let decrease = model_decrease(state, s);
    let grad_norm = taylor_grad(state, s).norm();
    let lam_min = lambda_min_sym(&taylor_hess(state, s));
    let p = state.p;
    let theta1_bound = theta1 * state.sigma * norm.powi(p as i32) / factorial(p);
    let theta2_bound = theta2 * state.sigma * norm.powi(p as i32 - 1) / factorial(p - 1);
    StepCertificate {
        s: s.clone(),
        model_decrease: decrease,
        grad_norm,
        lam_min_taylor: lam_min,
        decrease_ok: decrease <= 0.0,
        theta1_ok: grad_norm <= theta1_bound,
        theta2_ok: (-lam_min).max(0.0) <= theta2_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Problem, Quadratic};
    use crate::tensor::{DenseTensor, SymTensor};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, order: usize, dim: usize) -> SymTensor {
        let mut t = DenseTensor::zeros(order, dim);
        for v in t.entries_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        SymTensor::sym_project(&t)
    }

    fn random_state(rng: &mut ChaCha8Rng, p: usize, dim: usize, sigma: f64) -> ModelState {
        let x = DVector::from_fn(dim, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let derivs = (1..p).map(|order| random_sym(rng, order, dim)).collect();
        let t_k = random_sym(rng, p, dim);
        ModelState::new(x, 0.7, derivs, t_k, sigma).unwrap()
    }

    fn p2_state(g: &[f64], b: &DMatrix<f64>, sigma: f64, f_x: f64) -> ModelState {
        let dim = g.len();
        ModelState::new(
            DVector::zeros(dim),
            f_x,
            vec![SymTensor::from_vector(&DVector::from_column_slice(g))],
            SymTensor::from_matrix(b).unwrap(),
            sigma,
        )
        .unwrap()
    }

    #[test]
    fn model_value_at_zero_is_objective_value() {
        let b = DMatrix::identity(2, 2);
        let state = p2_state(&[0.3, -0.2], &b, 1.5, 4.25);
        assert_eq!(model_value(&state, &DVector::zeros(2)), 4.25);
        assert_eq!(model_decrease(&state, &DVector::zeros(2)), 0.0);
    }

    #[test]
    fn model_value_matches_hand_computation() {
        // g = 0, B = I, sigma = 6, s = e1: f + 1/2! + 6/3! = f + 1.5.
        let b = DMatrix::identity(2, 2);
        let state = p2_state(&[0.0, 0.0], &b, 6.0, 2.0);
        let s = DVector::from_column_slice(&[1.0, 0.0]);
        assert_relative_eq!(model_value(&state, &s), 3.5, max_relative = 1e-15);
    }

    #[test]
    fn model_grad_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for &p in &[2usize, 3] {
            let state = random_state(&mut rng, p, 4, 2.3);
            let s = DVector::from_fn(4, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let g = model_grad(&state, &s);
            let h = 1e-5;
            for j in 0..4 {
                let mut sp = s.clone();
                let mut sm = s.clone();
                sp[j] += h;
                sm[j] -= h;
                let fd = (model_value(&state, &sp) - model_value(&state, &sm)) / (2.0 * h);
                assert!(
                    (fd - g[j]).abs() <= 1e-6 * (1.0 + g[j].abs()),
                    "p = {p}: FD {fd} vs gradient {} in coordinate {j}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn taylor_grad_matches_central_differences_of_taylor_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let state = random_state(&mut rng, 3, 3, 1.0);
        let s = DVector::from_column_slice(&[0.4, -0.3, 0.2]);
        let g = taylor_grad(&state, &s);
        let h = 1e-5;
        for j in 0..3 {
            let mut sp = s.clone();
            let mut sm = s.clone();
            sp[j] += h;
            sm[j] -= h;
            let fd = (taylor_value(&state, &sp) - taylor_value(&state, &sm)) / (2.0 * h);
            assert!(
                (fd - g[j]).abs() <= 1e-6 * (1.0 + g[j].abs()),
                "FD {fd} vs taylor gradient {} in coordinate {j}",
                g[j]
            );
        }
    }

    #[test]
    fn taylor_hess_matches_central_differences_of_taylor_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        for &p in &[2usize, 3] {
            let state = random_state(&mut rng, p, 3, 1.7);
            let s = DVector::from_column_slice(&[0.2, 0.5, -0.6]);
            let hess = taylor_hess(&state, &s);
            let h = 1e-5;
            for j in 0..3 {
                let mut sp = s.clone();
                let mut sm = s.clone();
                sp[j] += h;
                sm[j] -= h;
                let col = (taylor_grad(&state, &sp) - taylor_grad(&state, &sm)) / (2.0 * h);
                for i in 0..3 {
                    assert!(
                        (col[i] - hess[(i, j)]).abs() <= 1e-6 * (1.0 + hess[(i, j)].abs()),
                        "p = {p}: FD Hessian {} vs analytic {} at ({i},{j})",
                        col[i],
                        hess[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn taylor_grad_at_zero_is_gradient_and_p2_hess_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(109);
        let state = random_state(&mut rng, 2, 5, 3.0);
        let zero = DVector::zeros(5);
        assert_eq!(taylor_grad(&state, &zero), state.gradient());
        let s = DVector::from_fn(5, |_, _| rng.random::<f64>() - 0.5);
        assert_eq!(taylor_hess(&state, &s), state.tensor().as_matrix());
    }

    #[test]
    fn model_grad_vanishes_at_secular_root() {
        // g = (-1, 0), B = I, sigma = 2: along e1 stationarity reads
        // (1 + t) t = 1, i.e. t = (sqrt(5) - 1) / 2.
        let b = DMatrix::identity(2, 2);
        let state = p2_state(&[-1.0, 0.0], &b, 2.0, 0.0);
        let t = (5.0f64.sqrt() - 1.0) / 2.0;
        let s = DVector::from_column_slice(&[t, 0.0]);
        assert!(
            model_grad(&state, &s).norm() <= 1e-12,
            "residual {}",
            model_grad(&state, &s).norm()
        );
    }

    #[test]
    fn p2_taylor_equals_classical_expansion_on_quadratic() {
        let problem = Quadratic::second_difference(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(113);
        let x = DVector::from_fn(4, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let state = ModelState::new(
            x.clone(),
            problem.value(&x),
            vec![SymTensor::from_vector(&problem.gradient(&x).unwrap())],
            SymTensor::from_matrix(&problem.hessian(&x).unwrap()).unwrap(),
            1.0,
        )
        .unwrap();
        for _ in 0..5 {
            let s = DVector::from_fn(4, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let expect = problem.value(&(&x + &s));
            assert_relative_eq!(taylor_value(&state, &s), expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn check_step_at_zero_depends_on_stationarity() {
        let spd = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.5, 2.0]));
        let stationary = p2_state(&[0.0, 0.0], &spd, 1.0, 0.0);
        let cert = check_step(&stationary, &DVector::zeros(2), 2.0, 2.0);
        assert!(cert.all_ok(), "zero step at second-order point: {cert:?}");

        let nonstationary = p2_state(&[0.3, 0.0], &spd, 1.0, 0.0);
        let cert = check_step(&nonstationary, &DVector::zeros(2), 2.0, 2.0);
        assert!(!cert.theta1_ok, "nonzero gradient must fail at s = 0");
        assert!(cert.decrease_ok, "zero step never increases the model");
    }

    #[test]
    fn exact_minimizer_passes_certificate_on_scalar_problem() {
        // n = 1, g < 0 < b: the minimizer of g s + b s^2 / 2 + sigma s^3 / 6
        // over s > 0 solves g + b s + sigma s^2 / 2 = 0.
        let g = -0.8f64;
        let b = 1.3f64;
        let sigma = 2.5f64;
        let s_star = (-b + (b * b - 2.0 * sigma * g).sqrt()) / sigma;
        let state = p2_state(&[g], &DMatrix::from_element(1, 1, b), sigma, 0.0);
        let s = DVector::from_element(1, s_star);
        let cert = check_step(&state, &s, 1.01, 1.01);
        assert!(cert.all_ok(), "exact minimizer rejected: {cert:?}");
        assert!(cert.model_decrease < 0.0);
    }

    #[test]
    fn state_validation_rejects_malformed_input() {
        let g = SymTensor::from_vector(&DVector::zeros(2));
        let b = SymTensor::from_matrix(&DMatrix::identity(2, 2)).unwrap();
        // Missing Hessian for p = 3.
        let t3 = SymTensor::zeros(3, 2);
        let err = ModelState::new(DVector::zeros(2), 0.0, vec![g.clone()], t3, 1.0)
            .expect_err("must fail");
        assert!(matches!(err, ModelError::DerivativeCount { .. }));
        // Non-positive sigma.
        let err = ModelState::new(DVector::zeros(2), 0.0, vec![g], b, 0.0).expect_err("must fail");
        assert!(matches!(err, ModelError::BadSigma { .. }));
    }
}
