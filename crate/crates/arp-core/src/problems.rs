//! Benchmark objectives with analytic derivative tensors.
//!
//! Every problem provides exact derivative tensors for all orders the solver
//! and its audits consume (gradient through fourth order), a declared
//! Lipschitz modulus for each derivative order, a canonical starting point,
//! and a sampling box on which box-scoped moduli are valid.
//!
//! The corpus:
//! - `quadratic`: convex quadratic `f(x) = x'Ax/2 - b'x` with `A` the
//!   second-difference matrix; every derivative above the Hessian vanishes.
//! - `quartic`: separable double-well `sum_j (x_j^2 - 1)^2 + 0.1 x_j` with a
//!   tilt that breaks the well symmetry.
//! - `rosenbrock`: the chained valley `sum_j 100 (x_{j+1} - x_j^2)^2 +
//!   (1 - x_j)^2`.
//! - `trigonometric`: `sum_j cos(x_j) + 0.05 ||x||^2`, bounded below with
//!   unit-bounded high-order derivatives.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::tensor::{DenseTensor, SymTensor};

/// Highest derivative order the built-in problems expose.
pub const MAX_DERIVATIVE_ORDER: usize = 4;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem '{name}'; known problems: {known:?}")]
    UnknownProblem {
        name: String,
        known: Vec<&'static str>,
    },
    #[error("problem '{name}' does not support dimension {dim}: {reason}")]
    BadDimension {
        name: String,
        dim: usize,
        reason: String,
    },
    #[error("derivative order {order} unsupported (supported: 1..={max})")]
    UnsupportedOrder { order: usize, max: usize },
    #[error("point has length {got}, problem dimension is {dim}")]
    DimMismatch { dim: usize, got: usize },
    #[error(
        "quadratic matrix must be symmetric positive semidefinite (lambda_min = {lambda_min:.3e})"
    )]
    NotConvex { lambda_min: f64 },
    #[error("matrix is {rows}x{cols}, vector has length {len}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },
}

/// Scope on which a declared Lipschitz modulus is valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundScope {
    /// Valid on all of `R^n`.
    Global,
    /// Valid on the problem's [`Problem::sample_box`].
    Box,
}

/// A declared upper bound `L` with `||D^q f(x) - D^q f(y)|| <= L ||x - y||`
/// (2-norms) for the stated derivative order, on the stated scope.
///
/// The bound need not be tight: problems whose true modulus vanishes declare
/// a positive constant so that error budgets proportional to `L` stay
/// meaningful in floating point.
#[derive(Debug, Clone, Copy)]
pub struct LipschitzBound {
    pub value: f64,
    pub scope: BoundScope,
}

/// A smooth objective with derivative tensors of every supported order.
pub trait Problem {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Objective value.  The solver itself never consults this; it exists for
    /// reporting and for finite-difference consistency checks.
    fn value(&self, x: &DVector<f64>) -> f64;

    /// The order-`q` derivative tensor at `x`, `1 <= q <= MAX_DERIVATIVE_ORDER`.
    fn derivative(&self, x: &DVector<f64>, order: usize) -> Result<SymTensor, ProblemError>;

    /// Declared Lipschitz modulus of the order-`q` derivative, if any.
    fn lipschitz(&self, order: usize) -> Option<LipschitzBound>;

    /// Whether the objective is bounded below on `R^n`.
    fn bounded_below(&self) -> bool;

    /// Canonical starting point for experiments.
    fn default_start(&self) -> DVector<f64>;

    /// Componentwise box `[lo, hi]^n` used for sampling and box-scoped bounds.
    fn sample_box(&self) -> (f64, f64);

    /// Gradient as a vector (order-1 derivative).
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        Ok(self.derivative(x, 1)?.as_vector())
    }

    /// Hessian as a matrix (order-2 derivative).
    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, ProblemError> {
        Ok(self.derivative(x, 2)?.as_matrix())
    }
}

fn check_point(dim: usize, x: &DVector<f64>) -> Result<(), ProblemError> {
    if x.len() != dim {
        return Err(ProblemError::DimMismatch { dim, got: x.len() });
    }
    Ok(())
}

fn check_order(order: usize) -> Result<(), ProblemError> {
    if !(1..=MAX_DERIVATIVE_ORDER).contains(&order) {
        return Err(ProblemError::UnsupportedOrder {
            order,
            max: MAX_DERIVATIVE_ORDER,
        });
    }
    Ok(())
}

/// Diagonal derivative tensor `sum_j c_j e_j^{⊗q}`.
fn diagonal_tensor(order: usize, coeffs: &DVector<f64>) -> SymTensor {
    let n = coeffs.len();
    if order == 1 {
        return SymTensor::from_vector(coeffs);
    }
    let mut t = DenseTensor::zeros(order, n);
    let mut idx = vec![0usize; order];
    for j in 0..n {
        idx.iter_mut().for_each(|i| *i = j);
        t.set_entry(&idx, coeffs[j]);
    }
    SymTensor::from_dense(&t).expect("diagonal tensors are symmetric")
}

/// Convex quadratic `f(x) = x'Ax/2 - b'x` with symmetric PSD `A`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Quadratic {
    /// Requires `A` symmetric positive semidefinite.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, ProblemError> {
        if a.nrows() != a.ncols() || a.nrows() != b.len() {
            return Err(ProblemError::ShapeMismatch {
                rows: a.nrows(),
                cols: a.ncols(),
                len: b.len(),
            });
        }
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..a.nrows() {
            for j in (i + 1)..a.ncols() {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale.max(1.0) {
                    return Err(ProblemError::NotConvex {
                        lambda_min: f64::NAN,
                    });
                }
            }
        }
        let lambda_min = a
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if lambda_min < -1e-10 * scale.max(1.0) {
            return Err(ProblemError::NotConvex { lambda_min });
        }
        Ok(Quadratic { a, b })
    }

    /// The second-difference model instance: `A = tridiag(-1, 2, -1)`,
    /// `b = (1, ..., 1)`.
    pub fn second_difference(dim: usize) -> Result<Self, ProblemError> {
        if dim == 0 {
            return Err(ProblemError::BadDimension {
                name: "quadratic".into(),
                dim,
                reason: "dimension must be at least 1".into(),
            });
        }
        let a = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                2.0
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        });
        Quadratic::new(a, DVector::from_element(dim, 1.0))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl Problem for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.a * x).dot(x) - self.b.dot(x)
    }

    fn derivative(&self, x: &DVector<f64>, order: usize) -> Result<SymTensor, ProblemError> {
        check_order(order)?;
        check_point(self.dim(), x)?;
        match order {
            1 => Ok(SymTensor::from_vector(&(&self.a * x - &self.b))),
            2 => Ok(SymTensor::from_matrix(&self.a).expect("A validated symmetric")),
            _ => Ok(SymTensor::zeros(order, self.dim())),
        }
    }

    fn lipschitz(&self, order: usize) -> Option<LipschitzBound> {
        match order {
            1 => {
                let spectral = self
                    .a
                    .clone()
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .fold(0.0f64, |m, &l| m.max(l.abs()));
                Some(LipschitzBound {
                    value: spectral,
                    scope: BoundScope::Global,
                })
            }
            // Derivatives above the Hessian are constant (zero), so any
            // positive constant is a valid modulus; declaring 1.0 keeps
            // error budgets of the form L * h strictly positive.
            2 | 3 => Some(LipschitzBound {
                value: 1.0,
                scope: BoundScope::Global,
            }),
            _ => None,
        }
    }

    fn bounded_below(&self) -> bool {
        true
    }

    fn default_start(&self) -> DVector<f64> {
        DVector::zeros(self.dim())
    }

    fn sample_box(&self) -> (f64, f64) {
        (-5.0, 5.0)
    }
}

/// Tilted separable double well `f(x) = sum_j (x_j^2 - 1)^2 + 0.1 x_j`.
#[derive(Debug, Clone)]
pub struct SeparableQuartic {
    dim: usize,
}

impl SeparableQuartic {
    pub fn new(dim: usize) -> Result<Self, ProblemError> {
        if dim == 0 {
            return Err(ProblemError::BadDimension {
                name: "quartic".into(),
                dim,
                reason: "dimension must be at least 1".into(),
            });
        }
        Ok(SeparableQuartic { dim })
    }
}

impl Problem for SeparableQuartic {
    fn name(&self) -> &str {
        "quartic"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .map(|&t| {
                let w = t * t - 1.0;
                w * w + 0.1 * t
            })
            .sum()
    }

    fn derivative(&self, x: &DVector<f64>, order: usize) -> Result<SymTensor, ProblemError> {
        check_order(order)?;
        check_point(self.dim, x)?;
        let coeffs = DVector::from_fn(self.dim, |j, _| {
            let t = x[j];
            match order {
                1 => 4.0 * t * t * t - 4.0 * t + 0.1,
                2 => 12.0 * t * t - 4.0,
                3 => 24.0 * t,
                _ => 24.0,
            }
        });
        Ok(diagonal_tensor(order, &coeffs))
    }

    fn lipschitz(&self, order: usize) -> Option<LipschitzBound> {
        // phi''(t) = 12 t^2 - 4 has modulus 24 a on |t| <= a (here a = 3);
        // phi'''(t) = 24 t is globally 24-Lipschitz; phi'''' is constant.
        match order {
            1 => Some(LipschitzBound {
                value: 108.0, // sup |phi''| on the box: 12 * 9 - 4 = 104, rounded up
                scope: BoundScope::Box,
            }),
            2 => Some(LipschitzBound {
                value: 72.0,
                scope: BoundScope::Box,
            }),
            3 => Some(LipschitzBound {
                value: 24.0,
                scope: BoundScope::Global,
            }),
            _ => None,
        }
    }

    fn bounded_below(&self) -> bool {
        true
    }

    fn default_start(&self) -> DVector<f64> {
        DVector::from_element(self.dim, 2.0)
    }

    fn sample_box(&self) -> (f64, f64) {
        (-3.0, 3.0)
    }
}

/// Chained Rosenbrock valley
/// `f(x) = sum_{j=0}^{n-2} 100 (x_{j+1} - x_j^2)^2 + (1 - x_j)^2`.
#[derive(Debug, Clone)]
pub struct Rosenbrock {
    dim: usize,
}

impl Rosenbrock {
    pub fn new(dim: usize) -> Result<Self, ProblemError> {
        if dim < 2 {
            return Err(ProblemError::BadDimension {
                name: "rosenbrock".into(),
                dim,
                reason: "needs at least 2 variables".into(),
            });
        }
        Ok(Rosenbrock { dim })
    }
}

impl Problem for Rosenbrock {
    fn name(&self) -> &str {
        "rosenbrock"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (0..self.dim - 1)
            .map(|j| {
                let gap = x[j + 1] - x[j] * x[j];
                let off = 1.0 - x[j];
                100.0 * gap * gap + off * off
            })
            .sum()
    }

    fn derivative(&self, x: &DVector<f64>, order: usize) -> Result<SymTensor, ProblemError> {
        check_order(order)?;
        check_point(self.dim, x)?;
        let n = self.dim;
        match order {
            1 => {
                let mut g = DVector::zeros(n);
                for j in 0..n - 1 {
                    let gap = x[j + 1] - x[j] * x[j];
                    g[j] += -400.0 * x[j] * gap - 2.0 * (1.0 - x[j]);
                    g[j + 1] += 200.0 * gap;
                }
                Ok(SymTensor::from_vector(&g))
            }
            2 => {
                let mut h = DMatrix::zeros(n, n);
                for j in 0..n - 1 {
                    h[(j, j)] += 1200.0 * x[j] * x[j] - 400.0 * x[j + 1] + 2.0;
                    h[(j + 1, j + 1)] += 200.0;
                    h[(j, j + 1)] += -400.0 * x[j];
                    h[(j + 1, j)] += -400.0 * x[j];
                }
                Ok(SymTensor::from_matrix(&h).expect("Hessian built symmetric"))
            }
            3 => {
                let mut t = DenseTensor::zeros(3, n);
                for j in 0..n - 1 {
                    let d = t.entry(&[j, j, j]) + 2400.0 * x[j];
                    t.set_entry(&[j, j, j], d);
                    for idx in [[j, j, j + 1], [j, j + 1, j], [j + 1, j, j]] {
                        t.set_entry(&idx, -400.0);
                    }
                }
                Ok(SymTensor::from_dense(&t).expect("third derivative built symmetric"))
            }
            _ => {
                let mut t = DenseTensor::zeros(4, n);
                for j in 0..n - 1 {
                    t.set_entry(&[j, j, j, j], 2400.0);
                }
                Ok(SymTensor::from_dense(&t).expect("fourth derivative is diagonal"))
            }
        }
    }

    fn lipschitz(&self, order: usize) -> Option<LipschitzBound> {
        match order {
            // Row-sum bound for the Hessian difference on |x_j| <= 5:
            // 1200 * 2a + 400 + 800 with a = 5.
            2 => Some(LipschitzBound {
                value: 13200.0,
                scope: BoundScope::Box,
            }),
            // Third-derivative entries are affine with slope 2400 on the
            // diagonal and constant elsewhere.
            3 => Some(LipschitzBound {
                value: 2400.0,
                scope: BoundScope::Global,
            }),
            _ => None,
        }
    }

    fn bounded_below(&self) -> bool {
        true
    }

    fn default_start(&self) -> DVector<f64> {
        DVector::from_fn(self.dim, |j, _| if j % 2 == 0 { -1.2 } else { 1.0 })
    }

    fn sample_box(&self) -> (f64, f64) {
        (-5.0, 5.0)
    }
}

/// Regularized cosine sum `f(x) = sum_j cos(x_j) + 0.05 ||x||^2`.
#[derive(Debug, Clone)]
pub struct Trigonometric {
    dim: usize,
}

impl Trigonometric {
    pub fn new(dim: usize) -> Result<Self, ProblemError> {
        if dim == 0 {
            return Err(ProblemError::BadDimension {
                name: "trigonometric".into(),
                dim,
                reason: "dimension must be at least 1".into(),
            });
        }
        Ok(Trigonometric { dim })
    }
}

impl Problem for Trigonometric {
    fn name(&self) -> &str {
        "trigonometric"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        x.iter().map(|&t| t.cos() + 0.05 * t * t).sum()
    }

    fn derivative(&self, x: &DVector<f64>, order: usize) -> Result<SymTensor, ProblemError> {
        check_order(order)?;
        check_point(self.dim, x)?;
        let coeffs = DVector::from_fn(self.dim, |j, _| {
            let t = x[j];
            match order {
                1 => -t.sin() + 0.1 * t,
                2 => -t.cos() + 0.1,
                3 => t.sin(),
                _ => t.cos(),
            }
        });
        Ok(diagonal_tensor(order, &coeffs))
    }

    fn lipschitz(&self, order: usize) -> Option<LipschitzBound> {
        let value = match order {
            1 => 1.1,
            2 | 3 => 1.0,
            _ => return None,
        };
        Some(LipschitzBound {
            value,
            scope: BoundScope::Global,
        })
    }

    fn bounded_below(&self) -> bool {
        true
    }

    fn default_start(&self) -> DVector<f64> {
        DVector::from_element(self.dim, 1.0)
    }

    fn sample_box(&self) -> (f64, f64) {
        (-10.0, 10.0)
    }
}

/// Names accepted by [`by_name`].
pub fn known_problems() -> Vec<&'static str> {
    vec!["quadratic", "quartic", "rosenbrock", "trigonometric"]
}

/// Construct a corpus problem by name.
pub fn by_name(name: &str, dim: usize) -> Result<Box<dyn Problem>, ProblemError> {
    match name {
        "quadratic" => Ok(Box::new(Quadratic::second_difference(dim)?)),
        "quartic" => Ok(Box::new(SeparableQuartic::new(dim)?)),
        "rosenbrock" => Ok(Box::new(Rosenbrock::new(dim)?)),
        "trigonometric" => Ok(Box::new(Trigonometric::new(dim)?)),
        _ => Err(ProblemError::UnknownProblem {
            name: name.to_string(),
            known: known_problems(),
        }),
    }
}

/// First-order finite-difference consistency error of the order-`q`
/// derivative at `x`:
/// `max_j || (D^{q-1} f(x + h e_j) - D^{q-1} f(x)) / h - D^q f(x)[e_j] ||_F`
/// (with `D^0 f = f`).  Decays like `O(h)` when the order-`q+1` derivative is
/// nonzero, and to rounding level when `D^q f` is constant.
pub fn fd_check(
    problem: &dyn Problem,
    x: &DVector<f64>,
    order: usize,
    h: f64,
) -> Result<f64, ProblemError> {
    check_order(order)?;
    check_point(problem.dim(), x)?;
    assert!(h > 0.0 && h.is_finite(), "step size must be positive");
    let n = problem.dim();
    let deriv = problem.derivative(x, order)?;
    let mut worst = 0.0f64;
    for j in 0..n {
        let mut xp = x.clone();
        xp[j] += h;
        let err = if order == 1 {
            let fd = (problem.value(&xp) - problem.value(x)) / h;
            (fd - deriv.as_vector()[j]).abs()
        } else {
            let hi = problem.derivative(&xp, order - 1)?;
            let lo = problem.derivative(x, order - 1)?;
            let fd = hi.sub(&lo).expect("same shape").scale(1.0 / h);
            let e_j = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
            let slice = deriv.contract(&e_j, 1).expect("order >= 2");
            fd.sub(&slice).expect("same shape").frob_norm()
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Wrapper that counts oracle calls made through it.
///
/// The driver routes algorithmic derivative evaluations through this wrapper
/// while diagnostics use the inner problem directly, so the recorded ledger
/// reflects exactly what the method itself consumed.
pub struct CountingProblem<'a> {
    inner: &'a dyn Problem,
    value_calls: Cell<u64>,
    derivative_calls: [Cell<u64>; MAX_DERIVATIVE_ORDER],
}

impl<'a> CountingProblem<'a> {
    pub fn new(inner: &'a dyn Problem) -> Self {
        CountingProblem {
            inner,
            value_calls: Cell::new(0),
            derivative_calls: [const { Cell::new(0) }; MAX_DERIVATIVE_ORDER],
        }
    }

    pub fn value_calls(&self) -> u64 {
        self.value_calls.get()
    }

    /// Calls of `derivative` with the given order.
    pub fn derivative_calls(&self, order: usize) -> u64 {
        assert!((1..=MAX_DERIVATIVE_ORDER).contains(&order));
        self.derivative_calls[order - 1].get()
    }
}

impl Problem for CountingProblem<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.value_calls.set(self.value_calls.get() + 1);
        self.inner.value(x)
    }

    fn derivative(&self, x: &DVector<f64>, order: usize) -> Result<SymTensor, ProblemError> {
        if (1..=MAX_DERIVATIVE_ORDER).contains(&order) {
            let cell = &self.derivative_calls[order - 1];
            cell.set(cell.get() + 1);
        }
        self.inner.derivative(x, order)
    }

    fn lipschitz(&self, order: usize) -> Option<LipschitzBound> {
        self.inner.lipschitz(order)
    }

    fn bounded_below(&self) -> bool {
        self.inner.bounded_below()
    }

    fn default_start(&self) -> DVector<f64> {
        self.inner.default_start()
    }

    fn sample_box(&self) -> (f64, f64) {
        self.inner.sample_box()
    }
}

/// Wrapper that poisons objective values (returns NaN) while passing
/// derivatives through untouched.
///
/// Running the solver on a poisoned problem and obtaining a bit-identical
/// trajectory certifies that no control flow depends on objective values.
pub struct ValuePoisoned<'a> {
    inner: &'a dyn Problem,
}

impl<'a> ValuePoisoned<'a> {
    pub fn new(inner: &'a dyn Problem) -> Self {
        ValuePoisoned { inner }
    }
}

impl Problem for ValuePoisoned<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, _x: &DVector<f64>) -> f64 {
        f64::NAN
    }

    fn derivative(&self, x: &DVector<f64>, order: usize) -> Result<SymTensor, ProblemError> {
        self.inner.derivative(x, order)
    }

    fn lipschitz(&self, order: usize) -> Option<LipschitzBound> {
        self.inner.lipschitz(order)
    }

    fn bounded_below(&self) -> bool {
        self.inner.bounded_below()
    }

    fn default_start(&self) -> DVector<f64> {
        self.inner.default_start()
    }

    fn sample_box(&self) -> (f64, f64) {
        self.inner.sample_box()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_point(rng: &mut ChaCha8Rng, problem: &dyn Problem) -> DVector<f64> {
        let (lo, hi) = problem.sample_box();
        DVector::from_fn(problem.dim(), |_, _| lo + (hi - lo) * rng.random::<f64>())
    }

    fn corpus(dim: usize) -> Vec<Box<dyn Problem>> {
        known_problems()
            .iter()
            .map(|name| by_name(name, dim).unwrap())
            .collect()
    }

    #[test]
    fn registry_round_trips_and_rejects() {
        for name in known_problems() {
            let p = by_name(name, 4).unwrap();
            assert_eq!(p.name(), name);
            assert_eq!(p.dim(), 4);
        }
        assert!(matches!(
            by_name("nonexistent", 4)
                .err()
                .expect("unknown name must fail"),
            ProblemError::UnknownProblem { .. }
        ));
        assert!(matches!(
            by_name("rosenbrock", 1).err().expect("dim 1 must fail"),
            ProblemError::BadDimension { .. }
        ));
    }

    #[test]
    fn gradient_matches_central_difference_of_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for problem in corpus(4) {
            // Sample within a moderate range so value magnitudes stay tame.
            let x = sample_point(&mut rng, problem.as_ref()).map(|t| t * 0.3);
            let g = problem.gradient(&x).unwrap();
            let h = 1e-5;
            for j in 0..problem.dim() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (problem.value(&xp) - problem.value(&xm)) / (2.0 * h);
                let scale = 1.0 + g[j].abs();
                assert!(
                    (fd - g[j]).abs() <= 1e-5 * scale,
                    "{}: central difference {fd} vs gradient {} at coordinate {j}",
                    problem.name(),
                    g[j]
                );
            }
        }
    }

    #[test]
    fn derivative_tower_is_first_order_consistent() {
        // err(h) ~ C h when the next derivative varies; halving h should
        // roughly halve the error.  Where the next derivative is constant the
        // difference quotient is exact up to rounding.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for problem in corpus(3) {
            let x = sample_point(&mut rng, problem.as_ref()).map(|t| 0.2 * t + 0.4);
            for order in 2..=MAX_DERIVATIVE_ORDER {
                let h = 1e-4;
                let e1 = fd_check(problem.as_ref(), &x, order, h).unwrap();
                let e2 = fd_check(problem.as_ref(), &x, order, h / 2.0).unwrap();
                if e1 <= 1e-8 {
                    assert!(
                        e2 <= 1e-8,
                        "{} order {order}: exact quotient degraded ({e1:.2e} -> {e2:.2e})",
                        problem.name()
                    );
                } else {
                    let ratio = e1 / e2;
                    assert!(
                        (1.5..=2.6).contains(&ratio),
                        "{} order {order}: error ratio {ratio:.3} not first order \
                         (e1 = {e1:.3e}, e2 = {e2:.3e})",
                        problem.name()
                    );
                }
            }
        }
    }

    #[test]
    fn declared_lipschitz_bounds_hold_on_sampled_pairs() {
        // Frobenius norms exceed 2-norms by at most sqrt(n^q), so a declared
        // 2-norm modulus L implies a Frobenius modulus L * sqrt(n^q).
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for problem in corpus(4) {
            let n = problem.dim();
            for order in 2..=3 {
                let Some(bound) = problem.lipschitz(order) else {
                    continue;
                };
                let frob_factor = (n as f64).powi(order as i32).sqrt();
                for _ in 0..300 {
                    let x = sample_point(&mut rng, problem.as_ref());
                    let y = sample_point(&mut rng, problem.as_ref());
                    let dist = (&x - &y).norm();
                    if dist < 1e-10 {
                        continue;
                    }
                    let dx = problem.derivative(&x, order).unwrap();
                    let dy = problem.derivative(&y, order).unwrap();
                    let diff = dx.sub(&dy).unwrap().frob_norm();
                    assert!(
                        diff <= bound.value * frob_factor * dist * 1.000001 + 1e-12,
                        "{} order {order}: ||D^q f(x) - D^q f(y)||_F = {diff:.4e} exceeds \
                         {:.4e} * sqrt(n^q) * {dist:.4e}",
                        problem.name(),
                        bound.value
                    );
                }
            }
        }
    }

    #[test]
    fn quadratic_high_order_derivatives_vanish() {
        let p = Quadratic::second_difference(3).unwrap();
        let x = DVector::from_column_slice(&[0.3, -0.7, 1.1]);
        assert_eq!(p.derivative(&x, 3).unwrap().frob_norm(), 0.0);
        assert_eq!(p.derivative(&x, 4).unwrap().frob_norm(), 0.0);
    }

    #[test]
    fn derivative_order_bounds_are_enforced() {
        let p = Trigonometric::new(2).unwrap();
        let x = DVector::zeros(2);
        assert!(matches!(
            p.derivative(&x, 0).unwrap_err(),
            ProblemError::UnsupportedOrder { .. }
        ));
        assert!(matches!(
            p.derivative(&x, 5).unwrap_err(),
            ProblemError::UnsupportedOrder { .. }
        ));
        let bad = DVector::zeros(3);
        assert!(matches!(
            p.derivative(&bad, 1).unwrap_err(),
            ProblemError::DimMismatch { .. }
        ));
    }

    #[test]
    fn counting_wrapper_tallies_calls() {
        let p = SeparableQuartic::new(3).unwrap();
        let counting = CountingProblem::new(&p);
        let x = DVector::zeros(3);
        counting.value(&x);
        counting.derivative(&x, 1).unwrap();
        counting.derivative(&x, 1).unwrap();
        counting.derivative(&x, 2).unwrap();
        assert_eq!(counting.value_calls(), 1);
        assert_eq!(counting.derivative_calls(1), 2);
        assert_eq!(counting.derivative_calls(2), 1);
        assert_eq!(counting.derivative_calls(3), 0);
    }

    #[test]
    fn poisoned_wrapper_hides_values_but_not_derivatives() {
        let p = Rosenbrock::new(2).unwrap();
        let poisoned = ValuePoisoned::new(&p);
        let x = p.default_start();
        assert!(poisoned.value(&x).is_nan());
        let gp = poisoned.gradient(&x).unwrap();
        let g = p.gradient(&x).unwrap();
        assert_eq!(gp, g);
    }

    #[test]
    fn rosenbrock_minimum_is_at_ones() {
        let p = Rosenbrock::new(4).unwrap();
        let ones = DVector::from_element(4, 1.0);
        assert_eq!(p.value(&ones), 0.0);
        assert!(p.gradient(&ones).unwrap().norm() <= 1e-14);
        let eig = p.hessian(&ones).unwrap().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
    }
}
