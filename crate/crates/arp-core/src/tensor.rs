//! Dense symmetric tensor algebra.
//!
//! Tensors of order `q` over `R^n` are stored as dense row-major arrays of
//! `n^q` entries, indexed by multi-indices `(i_1, ..., i_q)` with `i_1`
//! slowest.  [`SymTensor`] guarantees exact entry-wise symmetry (every entry
//! equals the one at the sorted multi-index); [`DenseTensor`] carries
//! arbitrary entries and is the input to symmetrization.
//!
//! The operations mirror standard multilinear algebra:
//! - `P_sym(A)` averages entries over index permutations and is the Frobenius
//!   orthogonal projection onto symmetric tensors,
//! - `T[s]^j` contracts `j` slots with the same vector,
//! - `T[W]^q` applies a matrix `W` to every slot,
//!   `(T[W]^q)[j_1..j_q] = sum_i T[i_1..i_q] prod_l W[i_l, j_l]`,
//! - `||T||` is the 2-norm `max_{||u||=1} |T[u]^q|` (for symmetric tensors
//!   this equals the multilinear operator norm), estimated from below by a
//!   shifted symmetric power iteration and bracketed on small instances by a
//!   deterministic sphere grid.
//!
//! For a symmetric positive definite `W` the weighted norm is
//! `||T||_W = ||T[W]^q||`, and the two norms satisfy the sandwich
//! `lambda_min(W)^q ||T|| <= ||T||_W <= lambda_max(W)^q ||T||`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Relative tolerance at which entry-wise symmetry is accepted on input.
///
/// Constructors that promise symmetry compare each entry against the one at
/// the sorted multi-index, relative to the largest entry magnitude, and then
/// canonicalize so the stored data is *exactly* symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Errors from tensor construction and algebra.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("tensor order and dimension must be at least 1 (got order {order}, dim {dim})")]
    EmptyShape { order: usize, dim: usize },
    #[error("entry count {got} does not match dim^order = {expect} (dim {dim}, order {order})")]
    ShapeMismatch {
        dim: usize,
        order: usize,
        got: usize,
        expect: usize,
    },
    #[error(
        "entries are not symmetric: |T{idx:?} - T{rep:?}| = {diff:.3e} exceeds {tol:.3e} * scale"
    )]
    NotSymmetric {
        idx: Vec<usize>,
        rep: Vec<usize>,
        diff: f64,
        tol: f64,
    },
    #[error("vector length {got} does not match tensor dimension {dim}")]
    DimMismatch { dim: usize, got: usize },
    #[error("matrix is {rows}x{cols}, expected {dim}x{dim}")]
    MatrixShape {
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error(
        "cannot contract {times} slots of an order-{order} tensor; full contraction is eval()"
    )]
    ContractionDepth { times: usize, order: usize },
    #[error(
        "operand shapes differ: order {lhs_order} dim {lhs_dim} vs order {rhs_order} dim {rhs_dim}"
    )]
    OperandMismatch {
        lhs_order: usize,
        lhs_dim: usize,
        rhs_order: usize,
        rhs_dim: usize,
    },
    #[error("weight matrix is not positive definite (lambda_min = {lambda_min:.6e})")]
    NotPositiveDefinite { lambda_min: f64 },
    #[error("grid norm supports dim <= 3 and order <= 3 (got dim {dim}, order {order})")]
    GridUnsupported { dim: usize, order: usize },
    #[error("expected exactly {expect} slot vectors, got {got}")]
    SlotCount { expect: usize, got: usize },
}

fn flat_index(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

fn unflatten(mut flat: usize, dim: usize, order: usize, out: &mut [usize]) {
    for l in (0..order).rev() {
        out[l] = flat % dim;
        flat /= dim;
    }
}

fn checked_len(order: usize, dim: usize) -> usize {
    // Desk-scale guard: n^q stays far below usize range for the supported
    // orders; overflow here means a caller error, not a numeric edge case.
    dim.checked_pow(order as u32)
        .expect("tensor entry count overflows usize")
}

/// Contract the last slot with `s`: `out[i_1..i_{q-1}] = sum_k in[i_1..i_{q-1}, k] s_k`.
fn contract_last(data: &[f64], dim: usize, s: &DVector<f64>) -> Vec<f64> {
    let rows = data.len() / dim;
    let mut out = vec![0.0; rows];
    for (r, chunk) in data.chunks_exact(dim).enumerate() {
        let mut acc = 0.0;
        for (k, &v) in chunk.iter().enumerate() {
            acc += v * s[k];
        }
        out[r] = acc;
    }
    debug_assert_eq!(out.len(), rows);
    out
}

/// Apply `w` to the last slot: `out[.., j] = sum_i in[.., i] w[(i, j)]`.
fn apply_matrix_last(data: &[f64], dim: usize, w: &DMatrix<f64>) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for (r, chunk) in data.chunks_exact(dim).enumerate() {
        let base = r * dim;
        for j in 0..dim {
            let mut acc = 0.0;
            for (i, &v) in chunk.iter().enumerate() {
                acc += v * w[(i, j)];
            }
            out[base + j] = acc;
        }
    }
    out
}

/// Move the first axis to the last: `out[i_2..i_q, i_1] = in[i_1, i_2..i_q]`.
fn rotate_first_to_last(data: &[f64], dim: usize, order: usize) -> Vec<f64> {
    if order == 1 {
        return data.to_vec();
    }
    let rest = data.len() / dim;
    let mut out = vec![0.0; data.len()];
    for i1 in 0..dim {
        for r in 0..rest {
            out[r * dim + i1] = data[i1 * rest + r];
        }
    }
    out
}

/// Orbit-average the entries: the Frobenius orthogonal projection onto
/// symmetric tensors.  Every entry of an orbit receives the *same* floating
/// point value, so the output is exactly symmetric.
fn symmetrize(data: &[f64], dim: usize, order: usize) -> Vec<f64> {
    let mut acc = vec![0.0; data.len()];
    let mut count = vec![0u32; data.len()];
    let mut idx = vec![0usize; order];
    let mut sorted = vec![0usize; order];
    for (flat, &v) in data.iter().enumerate() {
        unflatten(flat, dim, order, &mut idx);
        sorted.copy_from_slice(&idx);
        sorted.sort_unstable();
        let rep = flat_index(&sorted, dim);
        acc[rep] += v;
        count[rep] += 1;
    }
    let mut out = vec![0.0; data.len()];
    for (flat, slot) in out.iter_mut().enumerate() {
        unflatten(flat, dim, order, &mut idx);
        sorted.copy_from_slice(&idx);
        sorted.sort_unstable();
        let rep = flat_index(&sorted, dim);
        *slot = acc[rep] / count[rep] as f64;
    }
    out
}

/// Largest deviation of an entry from its sorted-index representative,
/// together with the largest entry magnitude (the symmetry scale).
fn max_asymmetry(data: &[f64], dim: usize, order: usize) -> (f64, Vec<usize>, f64) {
    let mut worst = 0.0;
    let mut worst_idx = vec![0usize; order];
    let mut scale = 0.0f64;
    let mut idx = vec![0usize; order];
    let mut sorted = vec![0usize; order];
    for (flat, &v) in data.iter().enumerate() {
        scale = scale.max(v.abs());
        unflatten(flat, dim, order, &mut idx);
        sorted.copy_from_slice(&idx);
        sorted.sort_unstable();
        let rep = flat_index(&sorted, dim);
        let diff = (v - data[rep]).abs();
        if diff > worst {
            worst = diff;
            worst_idx.copy_from_slice(&idx);
        }
    }
    (worst, worst_idx, scale)
}

/// Dense tensor with arbitrary (possibly asymmetric) entries.
///
/// Used as the raw result of constructions that are only symmetric after
/// projection, e.g. column-wise finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(order: usize, dim: usize) -> Self {
        assert!(order >= 1 && dim >= 1, "tensor shape must be non-empty");
        DenseTensor {
            order,
            dim,
            data: vec![0.0; checked_len(order, dim)],
        }
    }

    pub fn from_entries(order: usize, dim: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if order < 1 || dim < 1 {
            return Err(TensorError::EmptyShape { order, dim });
        }
        let expect = checked_len(order, dim);
        if data.len() != expect {
            return Err(TensorError::ShapeMismatch {
                dim,
                order,
                got: data.len(),
                expect,
            });
        }
        Ok(DenseTensor { order, dim, data })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn entry(&self, idx: &[usize]) -> f64 {
        assert_eq!(idx.len(), self.order, "multi-index length mismatch");
        self.data[flat_index(idx, self.dim)]
    }

    pub fn set_entry(&mut self, idx: &[usize], value: f64) {
        assert_eq!(idx.len(), self.order, "multi-index length mismatch");
        let flat = flat_index(idx, self.dim);
        self.data[flat] = value;
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multilinear evaluation `T[u_1, ..., u_q]` with one vector per slot.
    pub fn apply_multi(&self, slots: &[&DVector<f64>]) -> Result<f64, TensorError> {
        if slots.len() != self.order {
            return Err(TensorError::SlotCount {
                expect: self.order,
                got: slots.len(),
            });
        }
        for u in slots {
            if u.len() != self.dim {
                return Err(TensorError::DimMismatch {
                    dim: self.dim,
                    got: u.len(),
                });
            }
        }
        let mut cur = self.data.clone();
        for u in slots.iter().rev() {
            cur = contract_last(&cur, self.dim, u);
        }
        debug_assert_eq!(cur.len(), 1);
        Ok(cur[0])
    }
}

/// Dense tensor with exactly symmetric entries.
///
/// Invariant: `entry(idx) == entry(sorted(idx))` bit-for-bit.  Constructors
/// taking external data accept asymmetry up to [`SYMMETRY_TOL`] (relative to
/// the largest entry magnitude) and canonicalize by orbit averaging;
/// operations that preserve symmetry exactly skip the check.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl SymTensor {
    pub fn zeros(order: usize, dim: usize) -> Self {
        assert!(order >= 1 && dim >= 1, "tensor shape must be non-empty");
        SymTensor {
            order,
            dim,
            data: vec![0.0; checked_len(order, dim)],
        }
    }

    /// Build from dense entries, verifying symmetry to [`SYMMETRY_TOL`].
    pub fn from_entries(order: usize, dim: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        let dense = DenseTensor::from_entries(order, dim, data)?;
        Self::from_dense(&dense)
    }

    /// Build from a dense tensor, verifying symmetry to [`SYMMETRY_TOL`].
    pub fn from_dense(t: &DenseTensor) -> Result<Self, TensorError> {
        let (worst, worst_idx, scale) = max_asymmetry(&t.data, t.dim, t.order);
        let tol = SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE);
        if worst > tol {
            let mut rep = worst_idx.clone();
            rep.sort_unstable();
            return Err(TensorError::NotSymmetric {
                idx: worst_idx,
                rep,
                diff: worst,
                tol: SYMMETRY_TOL,
            });
        }
        Ok(Self::sym_project(t))
    }

    /// Frobenius-orthogonal projection onto symmetric tensors
    /// (entry-wise orbit average); accepts arbitrary input.
    pub fn sym_project(t: &DenseTensor) -> Self {
        SymTensor {
            order: t.order,
            dim: t.dim,
            data: symmetrize(&t.data, t.dim, t.order),
        }
    }

    /// Order-1 tensor from a vector.
    pub fn from_vector(v: &DVector<f64>) -> Self {
        assert!(!v.is_empty(), "tensor shape must be non-empty");
        SymTensor {
            order: 1,
            dim: v.len(),
            data: v.iter().copied().collect(),
        }
    }

    /// Order-2 tensor from a symmetric matrix (checked to [`SYMMETRY_TOL`]).
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self, TensorError> {
        if m.nrows() != m.ncols() {
            return Err(TensorError::MatrixShape {
                rows: m.nrows(),
                cols: m.ncols(),
                dim: m.nrows(),
            });
        }
        let n = m.nrows();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = m[(i, j)];
            }
        }
        Self::from_entries(2, n, data)
    }

    /// Symmetric rank-one tensor `u ⊗ ... ⊗ u` of the given order.
    pub fn rank_one(u: &DVector<f64>, order: usize) -> Self {
        assert!(
            order >= 1 && !u.is_empty(),
            "tensor shape must be non-empty"
        );
        let dim = u.len();
        let mut data = vec![0.0; checked_len(order, dim)];
        let mut idx = vec![0usize; order];
        for (flat, slot) in data.iter_mut().enumerate() {
            unflatten(flat, dim, order, &mut idx);
            *slot = idx.iter().map(|&i| u[i]).product();
        }
        SymTensor { order, dim, data }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn entry(&self, idx: &[usize]) -> f64 {
        assert_eq!(idx.len(), self.order, "multi-index length mismatch");
        self.data[flat_index(idx, self.dim)]
    }

    /// View an order-1 tensor as a vector.  Panics on other orders.
    pub fn as_vector(&self) -> DVector<f64> {
        assert_eq!(self.order, 1, "as_vector requires an order-1 tensor");
        DVector::from_column_slice(&self.data)
    }

    /// View an order-2 tensor as a matrix.  Panics on other orders.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.order, 2, "as_matrix requires an order-2 tensor");
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.data[i * self.dim + j])
    }

    pub fn scale(&self, a: f64) -> Self {
        SymTensor {
            order: self.order,
            dim: self.dim,
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TensorError> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, TensorError> {
        if self.order != other.order || self.dim != other.dim {
            return Err(TensorError::OperandMismatch {
                lhs_order: self.order,
                lhs_dim: self.dim,
                rhs_order: other.order,
                rhs_dim: other.dim,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(SymTensor {
            order: self.order,
            dim: self.dim,
            data,
        })
    }

    /// Contract `times` slots with the same vector: `T[s]^times`, an
    /// order-`q - times` tensor.  Requires `1 <= times < q`; the scalar full
    /// contraction is [`SymTensor::eval`].
    pub fn contract(&self, s: &DVector<f64>, times: usize) -> Result<SymTensor, TensorError> {
        if times == 0 || times >= self.order {
            return Err(TensorError::ContractionDepth {
                times,
                order: self.order,
            });
        }
        if s.len() != self.dim {
            return Err(TensorError::DimMismatch {
                dim: self.dim,
                got: s.len(),
            });
        }
        let mut cur = self.data.clone();
        for _ in 0..times {
            cur = contract_last(&cur, self.dim, s);
        }
        // Contracting trailing slots of an exactly symmetric tensor leaves the
        // remaining indices exactly symmetric: entries at permuted indices are
        // sums over bit-identical summands in the same order.
        Ok(SymTensor {
            order: self.order - times,
            dim: self.dim,
            data: cur,
        })
    }

    /// Full contraction `T[s]^q`.
    pub fn eval(&self, s: &DVector<f64>) -> Result<f64, TensorError> {
        if s.len() != self.dim {
            return Err(TensorError::DimMismatch {
                dim: self.dim,
                got: s.len(),
            });
        }
        let mut cur = self.data.clone();
        for _ in 0..self.order {
            cur = contract_last(&cur, self.dim, s);
        }
        Ok(cur[0])
    }

    /// Multilinear evaluation `T[u_1, ..., u_q]`.
    pub fn apply_multi(&self, slots: &[&DVector<f64>]) -> Result<f64, TensorError> {
        if slots.len() != self.order {
            return Err(TensorError::SlotCount {
                expect: self.order,
                got: slots.len(),
            });
        }
        let mut cur = self.data.clone();
        for u in slots.iter().rev() {
            if u.len() != self.dim {
                return Err(TensorError::DimMismatch {
                    dim: self.dim,
                    got: u.len(),
                });
            }
            cur = contract_last(&cur, self.dim, u);
        }
        Ok(cur[0])
    }

    /// Apply `w` to every slot: `(T[W]^q)[j_1..j_q] = sum_i T[i] prod_l w[i_l, j_l]`.
    ///
    /// The result is re-symmetrized on write; with equal matrices in every
    /// slot the exact result is symmetric and only rounding is averaged out.
    pub fn apply_matrix(&self, w: &DMatrix<f64>) -> Result<SymTensor, TensorError> {
        if w.nrows() != self.dim || w.ncols() != self.dim {
            return Err(TensorError::MatrixShape {
                rows: w.nrows(),
                cols: w.ncols(),
                dim: self.dim,
            });
        }
        let mut cur = self.data.clone();
        for _ in 0..self.order {
            cur = apply_matrix_last(&cur, self.dim, w);
            cur = rotate_first_to_last(&cur, self.dim, self.order);
        }
        Ok(SymTensor {
            order: self.order,
            dim: self.dim,
            data: symmetrize(&cur, self.dim, self.order),
        })
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn frob_inner(&self, other: &Self) -> Result<f64, TensorError> {
        if self.order != other.order || self.dim != other.dim {
            return Err(TensorError::OperandMismatch {
                lhs_order: self.order,
                lhs_dim: self.dim,
                rhs_order: other.order,
                rhs_dim: other.dim,
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    /// Lower estimate of the 2-norm `max_{||u||=1} |T[u]^q|` by shifted
    /// symmetric power iteration over several deterministic and seeded random
    /// starts.  The returned value is `|T[witness]^q|` for the recorded unit
    /// witness, hence always a valid lower bound on the true norm.
    pub fn op_norm_lower(&self, cfg: &OpNormConfig) -> OpNormEstimate {
        let n = self.dim;
        if self.order == 1 {
            let v = self.as_vector();
            let norm = v.norm();
            let witness = if norm > 0.0 {
                &v / norm
            } else {
                DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 })
            };
            return OpNormEstimate {
                value: norm,
                witness,
            };
        }

        // Shift large enough to make the iteration monotone ascent on the
        // sphere: |T[u]^q| <= ||T||_F, so (q-1) ||T||_F dominates the largest
        // eigenvalue magnitude; the extra 1 keeps the zero tensor harmless.
        let alpha = self.order as f64 * self.frob_norm() + 1.0;

        let mut starts: Vec<DVector<f64>> = Vec::new();
        for i in 0..n.min(3) {
            starts.push(DVector::from_fn(n, |j, _| if j == i { 1.0 } else { 0.0 }));
        }
        starts.push(DVector::from_element(n, 1.0 / (n as f64).sqrt()));
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        while starts.len() < n.min(3) + 1 + cfg.restarts {
            let u = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let norm = u.norm();
            if norm > 1e-3 {
                starts.push(u / norm);
            }
        }

        let mut best_value = f64::NEG_INFINITY;
        let mut best_witness = starts[0].clone();
        for sign in [1.0f64, -1.0] {
            for start in &starts {
                let mut u = start.clone();
                let mut prev = f64::NAN;
                let mut stall = 0;
                for _ in 0..cfg.max_iters {
                    let grad = self
                        .contract(&u, self.order - 1)
                        .expect("contraction within order")
                        .as_vector();
                    let value = grad.dot(&u);
                    if value.abs() > best_value {
                        best_value = value.abs();
                        best_witness = u.clone();
                    }
                    if (value - prev).abs() <= cfg.tol * (1.0 + value.abs()) {
                        stall += 1;
                        if stall >= 3 {
                            break;
                        }
                    } else {
                        stall = 0;
                    }
                    prev = value;
                    let next = &grad * sign + &u * alpha;
                    let norm = next.norm();
                    if norm <= 1e-300 {
                        break;
                    }
                    u = next / norm;
                }
            }
        }

        // Re-evaluate at the witness so value and witness agree exactly.
        let value = self
            .eval(&best_witness)
            .expect("witness has tensor dim")
            .abs();
        OpNormEstimate {
            value,
            witness: best_witness,
        }
    }

    /// Deterministic sphere-grid lower bracket of the 2-norm for `dim <= 3`,
    /// `order <= 3`.
    ///
    /// Every grid value is a lower bound; the true norm exceeds the best grid
    /// value by at most the reported `slack = order * mesh * ||T||_F`, since
    /// the spherical gradient of `u -> T[u]^q` is bounded by `q ||T||` and any
    /// unit vector is within geodesic distance `mesh` of a grid point.
    pub fn op_norm_grid(&self, mesh: f64) -> Result<GridEstimate, TensorError> {
        if self.dim > 3 || self.order > 3 {
            return Err(TensorError::GridUnsupported {
                dim: self.dim,
                order: self.order,
            });
        }
        assert!(
            mesh > 0.0 && mesh.is_finite(),
            "mesh spacing must be positive"
        );
        let mut best = f64::NEG_INFINITY;
        let mut witness = vec![0.0; self.dim];
        let mut consider = |u: &[f64]| {
            let v = eval_small(&self.data, self.dim, self.order, u).abs();
            if v > best {
                best = v;
                witness.copy_from_slice(u);
            }
        };
        match self.dim {
            1 => {
                consider(&[1.0]);
                consider(&[-1.0]);
            }
            2 => {
                let steps = (std::f64::consts::TAU / mesh).ceil() as usize;
                let steps = steps.max(4);
                for k in 0..steps {
                    let theta = std::f64::consts::TAU * k as f64 / steps as f64;
                    consider(&[theta.cos(), theta.sin()]);
                }
            }
            3 => {
                let bands = (std::f64::consts::PI / mesh).ceil() as usize;
                let bands = bands.max(2);
                for i in 0..=bands {
                    let theta = std::f64::consts::PI * i as f64 / bands as f64;
                    let (sin_t, cos_t) = theta.sin_cos();
                    let ring = ((std::f64::consts::TAU * sin_t / mesh).ceil() as usize).max(1);
                    for j in 0..ring {
                        let phi = std::f64::consts::TAU * j as f64 / ring as f64;
                        consider(&[sin_t * phi.cos(), sin_t * phi.sin(), cos_t]);
                    }
                }
            }
            _ => unreachable!("guarded above"),
        }
        Ok(GridEstimate {
            value: best,
            witness: DVector::from_column_slice(&witness),
            mesh,
            slack: self.order as f64 * mesh * self.frob_norm(),
        })
    }

    /// Lower estimate of the weighted norm `||T||_W = ||T[W]^q||`.
    pub fn weighted_op_norm_lower(
        &self,
        w: &WeightMatrix,
        cfg: &OpNormConfig,
    ) -> Result<OpNormEstimate, TensorError> {
        Ok(self.apply_matrix(w.matrix())?.op_norm_lower(cfg))
    }

    /// Grid bracket of the weighted norm `||T||_W = ||T[W]^q||`.
    pub fn weighted_op_norm_grid(
        &self,
        w: &WeightMatrix,
        mesh: f64,
    ) -> Result<GridEstimate, TensorError> {
        self.apply_matrix(w.matrix())?.op_norm_grid(mesh)
    }
}

/// Direct evaluation of `T[u]^q` for tiny shapes without allocation.
fn eval_small(data: &[f64], dim: usize, order: usize, u: &[f64]) -> f64 {
    debug_assert!(dim <= 3 && order <= 3);
    match order {
        1 => (0..dim).map(|i| data[i] * u[i]).sum(),
        2 => {
            let mut acc = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    acc += data[i * dim + j] * u[i] * u[j];
                }
            }
            acc
        }
        3 => {
            let mut acc = 0.0;
            for i in 0..dim {
                let ui = u[i];
                for j in 0..dim {
                    let uij = ui * u[j];
                    let base = (i * dim + j) * dim;
                    for k in 0..dim {
                        acc += data[base + k] * uij * u[k];
                    }
                }
            }
            acc
        }
        _ => unreachable!("guarded by caller"),
    }
}

/// Configuration of the shifted power-iteration norm estimate.
#[derive(Debug, Clone)]
pub struct OpNormConfig {
    /// Number of seeded random starts in addition to the deterministic ones.
    pub restarts: usize,
    /// Iteration cap per start.
    pub max_iters: usize,
    /// Seed for the random starts.
    pub seed: u64,
    /// Relative stall tolerance that ends a start early.
    pub tol: f64,
}

impl Default for OpNormConfig {
    fn default() -> Self {
        OpNormConfig {
            restarts: 8,
            max_iters: 1000,
            seed: 0,
            tol: 1e-14,
        }
    }
}

/// A certified lower bound on a tensor 2-norm: `value = |T[witness]^q|` with
/// `||witness|| = 1`.
#[derive(Debug, Clone)]
pub struct OpNormEstimate {
    pub value: f64,
    pub witness: DVector<f64>,
}

/// A sphere-grid lower bracket: the true norm lies in `[value, value + slack]`.
#[derive(Debug, Clone)]
pub struct GridEstimate {
    pub value: f64,
    pub witness: DVector<f64>,
    pub mesh: f64,
    pub slack: f64,
}

/// Symmetric positive definite weight matrix with cached spectral bounds.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
    lambda_min: f64,
    lambda_max: f64,
}

impl WeightMatrix {
    /// Validate symmetry (to [`SYMMETRY_TOL`], then averaged exactly) and
    /// positive definiteness, caching the extreme eigenvalues.
    pub fn new(w: DMatrix<f64>) -> Result<Self, TensorError> {
        if w.nrows() != w.ncols() {
            return Err(TensorError::MatrixShape {
                rows: w.nrows(),
                cols: w.ncols(),
                dim: w.nrows(),
            });
        }
        let n = w.nrows();
        if n == 0 {
            return Err(TensorError::EmptyShape { order: 2, dim: 0 });
        }
        let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        let mut worst_ij = (0, 0);
        for i in 0..n {
            for j in (i + 1)..n {
                let diff = (w[(i, j)] - w[(j, i)]).abs();
                if diff > worst {
                    worst = diff;
                    worst_ij = (i, j);
                }
            }
        }
        if worst > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(TensorError::NotSymmetric {
                idx: vec![worst_ij.0, worst_ij.1],
                rep: vec![worst_ij.1, worst_ij.0],
                diff: worst,
                tol: SYMMETRY_TOL,
            });
        }
        let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (w[(i, j)] + w[(j, i)]));
        let eigen = sym.clone().symmetric_eigen();
        let lambda_min = eigen
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let lambda_max = eigen
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if lambda_min <= 0.0 || lambda_min.is_nan() {
            return Err(TensorError::NotPositiveDefinite { lambda_min });
        }
        Ok(WeightMatrix {
            w: sym,
            lambda_min,
            lambda_max,
        })
    }

    pub fn identity(n: usize) -> Self {
        WeightMatrix {
            w: DMatrix::identity(n, n),
            lambda_min: 1.0,
            lambda_max: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Condition number `lambda_max / lambda_min`.
    pub fn cond(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }

    /// `W^2`, the Gram matrix that drives weighted least-change updates.
    pub fn squared(&self) -> DMatrix<f64> {
        &self.w * &self.w
    }
}
