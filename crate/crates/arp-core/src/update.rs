//! Highest-order tensor approximation strategies.
//!
//! Each iteration the solver needs an order-`p` symmetric tensor `T_k`
//! standing in for the exact derivative tensor of the objective.  This module
//! provides the dispatch [`tensor_p`] over five strategies:
//!
//! | strategy   | restart (`k mod m = 0`)   | between restarts                  |
//! |------------|---------------------------|-----------------------------------|
//! | `Lazy`     | exact derivative          | keep constant                     |
//! | `Fd`       | finite differences        | keep constant                     |
//! | `PsbLazy`  | exact derivative          | PSB secant update (`W = I`)       |
//! | `PsbFd`    | finite differences        | PSB secant update (`W = I`)       |
//! | `DfpFd`    | finite differences        | guarded DFP secant update         |
//!
//! The secant updates share one engine, [`hosu_update`]: the least-change
//! symmetric correction in a weighted Frobenius norm subject to the
//! high-order secant equation `T[s_prev] = y_tensor`, solved as an
//! equality-constrained least-squares problem on the independent symmetric
//! components of the correction.  `W = I` recovers PSB; the constructive
//! weight of [`build_dfp_weight`] (an SPD `W` with `W^{-2} s = y`) recovers
//! DFP, with a guard falling back to keep-constant when the step/gradient
//! pair is unsuitable.
//!
//! [`condition1_audit`] measures, purely diagnostically, how far `T_k` is
//! from the exact derivative and compares restart iterations against the
//! accuracy budget `min(kappa_a * sum of recent step norms, kappa_b)`.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::{Problem, ProblemError};
use crate::tensor::{DenseTensor, OpNormConfig, SymTensor, TensorError, WeightMatrix};

/// Steps at or below this norm carry no usable secant information.
pub const DEGENERATE_STEP_TOL: f64 = 1e-14;

/// Relative threshold below which the residual of `y` against `span{s}` is
/// treated as zero when building the DFP weight.
const COLINEAR_TOL: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum UpdateError {
    #[error("step norm {norm:.3e} is too small to carry secant information")]
    DegenerateStep { norm: f64 },
    #[error(
        "DFP guard rejected the pair: |s'y| = {s_dot_y_abs:.3e} vs mu ||s||^2 = {mu_bound:.3e}, \
         ||y|| = {y_norm:.3e} vs L ||s|| = {l_bound:.3e}"
    )]
    GuardViolated {
        s_dot_y_abs: f64,
        mu_bound: f64,
        y_norm: f64,
        l_bound: f64,
    },
    #[error("derivative of order {order} returned a non-finite entry")]
    NonFiniteDerivative { order: usize },
    #[error("least-change system factorization broke down ({context})")]
    NumericalBreakdown { context: &'static str },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// The five tensor-approximation strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Lazy,
    Fd,
    PsbLazy,
    PsbFd,
    DfpFd,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Lazy,
        StrategyKind::Fd,
        StrategyKind::PsbLazy,
        StrategyKind::PsbFd,
        StrategyKind::DfpFd,
    ];

    /// Whether restarts use finite differences (otherwise the exact
    /// derivative).
    pub fn uses_fd_restart(self) -> bool {
        matches!(
            self,
            StrategyKind::Fd | StrategyKind::PsbFd | StrategyKind::DfpFd
        )
    }

    /// Whether iterations between restarts run a secant update (otherwise
    /// keep-constant).
    pub fn uses_secant(self) -> bool {
        matches!(
            self,
            StrategyKind::PsbLazy | StrategyKind::PsbFd | StrategyKind::DfpFd
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Lazy => "lazy",
            StrategyKind::Fd => "fd",
            StrategyKind::PsbLazy => "psb-lazy",
            StrategyKind::PsbFd => "psb-fd",
            StrategyKind::DfpFd => "dfp-fd",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown strategy `{s}` (expected one of lazy, fd, psb-lazy, psb-fd, dfp-fd)"
                )
            })
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Strategy selection plus the parameters governing restarts, the accuracy
/// budget, and the DFP guard.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Restart period: the tensor is refreshed whenever `k mod m = 0`.
    pub m: usize,
    /// Lipschitz estimate for the order-`p` derivative; feeds the
    /// finite-difference accuracy budget `kappa_a = kappa_b = l_hat / 2`.
    pub l_hat: f64,
    /// DFP guard lower bound: `mu ||s||^2 <= |s'y|`.
    pub dfp_mu: f64,
    /// DFP guard upper bound: `||y|| <= L ||s||`.
    pub dfp_l: f64,
    /// Free parameter of the DFP weight construction (written varsigma).
    pub dfp_varsigma: f64,
    /// Minimum finite-difference stepsize; activation is flagged in
    /// diagnostics.
    pub h_floor: f64,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            m: 5,
            l_hat: 1.0,
            dfp_mu: 1e-4,
            dfp_l: 1e4,
            dfp_varsigma: 1.0,
            h_floor: 1e-8,
        }
    }

    pub fn validate(&self) {
        assert!(self.m >= 1, "restart period must be at least 1");
        assert!(self.l_hat > 0.0, "Lipschitz estimate must be positive");
        assert!(
            self.dfp_mu > 0.0 && self.dfp_mu <= self.dfp_l,
            "DFP guard requires 0 < mu <= L"
        );
        assert!(self.dfp_varsigma > 0.0, "varsigma must be positive");
        assert!(self.h_floor > 0.0, "stepsize floor must be positive");
    }

    /// Slope of the restart accuracy budget in the accumulated step norms.
    pub fn kappa_a(&self) -> f64 {
        if self.kind.uses_fd_restart() {
            self.l_hat / 2.0
        } else {
            0.0
        }
    }

    /// Cap of the restart accuracy budget.
    pub fn kappa_b(&self) -> f64 {
        self.kappa_a()
    }

    /// Contraction constant of the between-restart residual recursion:
    /// 1 for keep-constant and PSB, `kappa_max^p` for the DFP weight.
    pub fn kappa_c(&self, p: usize) -> f64 {
        match self.kind {
            StrategyKind::DfpFd => {
                dfp_kappa_max(self.dfp_mu, self.dfp_l, self.dfp_varsigma).powi(p as i32)
            }
            _ => 1.0,
        }
    }
}

/// Condition-number bound guaranteed by the DFP weight construction:
/// `max[sqrt(1/mu), sqrt(L + (varsigma + L^2)/mu) *
///      sqrt(max[1/varsigma, 1, (varsigma + L^2)/(mu varsigma)])]`.
pub fn dfp_kappa_max(mu: f64, l: f64, varsigma: f64) -> f64 {
    let head = (varsigma + l * l) / mu;
    let first = (1.0 / mu).sqrt();
    let second = (l + head).sqrt() * (1.0 / varsigma).max(1.0).max(head / varsigma).sqrt();
    first.max(second)
}

/// Step and derivative differences feeding the secant updates.
#[derive(Debug, Clone)]
pub struct SecantData {
    /// Previous accepted step `s_{k-1}`.
    pub s_prev: DVector<f64>,
    /// Order-`p-1` derivative difference across that step; the secant
    /// constraint is `T[s_prev] = y_tensor`.
    pub y_tensor: SymTensor,
    /// Gradient difference across the step; consumed only by the DFP weight
    /// (for order 2 it coincides with `y_tensor`).
    pub y_vec: DVector<f64>,
}

/// Ring buffer of the last `2m - 1` step norms, most recent first, padded
/// with 1.0 for steps before the first iteration.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    buf: VecDeque<f64>,
}

impl HistoryBuffer {
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "restart period must be at least 1");
        HistoryBuffer {
            buf: std::iter::repeat_n(1.0, 2 * m - 1).collect(),
        }
    }

    /// Record `norm` as the most recent step norm, dropping the oldest.
    pub fn push(&mut self, norm: f64) {
        assert!(norm >= 0.0 && norm.is_finite(), "step norm must be finite");
        self.buf.pop_back();
        self.buf.push_front(norm);
    }

    /// Sum of the `count` most recent norms.
    pub fn sum_recent(&self, count: usize) -> f64 {
        assert!(count <= self.buf.len(), "window exceeds history length");
        self.buf.iter().take(count).sum()
    }

    /// `xi = sum over the whole buffer of norm^(p+1)` — the quantity whose
    /// boundedness drives the regularization weight analysis.
    pub fn xi(&self, p: usize) -> f64 {
        self.buf.iter().map(|v| v.powi(p as i32 + 1)).sum()
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn norms(&self) -> impl Iterator<Item = f64> + '_ {
        self.buf.iter().copied()
    }
}

/// Finite-difference stepsize plus whether the floor kicked in.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepSize {
    pub h: f64,
    pub floored: bool,
}

/// Restart stepsize `h = min(sum of the m most recent step norms, 1) /
/// sqrt(n)`, raised to `h_floor` when accumulated norms underflow it.
pub fn compute_h(history: &HistoryBuffer, m: usize, n: usize, h_floor: f64) -> StepSize {
    assert!(n >= 1);
    let raw = history.sum_recent(m).min(1.0) / (n as f64).sqrt();
    if raw < h_floor {
        StepSize {
            h: h_floor,
            floored: true,
        }
    } else {
        StepSize {
            h: raw,
            floored: false,
        }
    }
}

fn ensure_finite(t: &SymTensor, order: usize) -> Result<(), UpdateError> {
    if t.entries().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(UpdateError::NonFiniteDerivative { order })
    }
}

/// All index tuples of the given length over `0..dim`, in row-major order.
fn full_tuples(dim: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(dim.pow(order as u32));
    let mut idx = vec![0usize; order];
    loop {
        out.push(idx.clone());
        let mut slot = order;
        loop {
            if slot == 0 {
                return out;
            }
            slot -= 1;
            idx[slot] += 1;
            if idx[slot] < dim {
                break;
            }
            idx[slot] = 0;
        }
    }
}

/// Sorted (non-decreasing) index tuples of the given length over `0..dim` —
/// one representative per symmetry orbit — plus the lookup from tuple to
/// position.
fn sorted_tuples(dim: usize, order: usize) -> (Vec<Vec<usize>>, HashMap<Vec<usize>, usize>) {
    let mut reps = Vec::new();
    for t in full_tuples(dim, order) {
        if t.windows(2).all(|w| w[0] <= w[1]) {
            reps.push(t);
        }
    }
    let lookup = reps
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    (reps, lookup)
}

/// Order-`p` tensor by one-sided differences of the order-`p-1` derivative:
/// column `i` of the pre-symmetrization tensor is
/// `(D^{p-1} f(x + h e_i) - D^{p-1} f(x)) / h`, and the result is the
/// symmetric part.  Costs exactly `n + 1` order-`p-1` derivative
/// evaluations.
pub fn fd_restart(
    problem: &dyn Problem,
    x: &DVector<f64>,
    h: f64,
    p: usize,
) -> Result<SymTensor, UpdateError> {
    assert!(p >= 2, "tensor order must be at least 2");
    assert!(h > 0.0 && h.is_finite(), "stepsize must be positive");
    let n = x.len();
    let base = problem.derivative(x, p - 1)?;
    ensure_finite(&base, p - 1)?;

    let mut accum = DenseTensor::zeros(p, n);
    let mut idx = vec![0usize; p];
    for i in 0..n {
        let mut shifted = x.clone();
        shifted[i] += h;
        let bumped = problem.derivative(&shifted, p - 1)?;
        ensure_finite(&bumped, p - 1)?;
        for (beta_flat, beta) in full_tuples(n, p - 1).into_iter().enumerate() {
            let diff = (bumped.entries()[beta_flat] - base.entries()[beta_flat]) / h;
            idx[..p - 1].copy_from_slice(&beta);
            idx[p - 1] = i;
            accum.set_entry(&idx, diff);
        }
    }
    Ok(SymTensor::sym_project(&accum))
}

/// Least-change secant update: the symmetric tensor `T` minimizing
/// `||(T - T_prev)[W]^p||_F` subject to `T[s_prev] = y_tensor`.
///
/// The correction is parameterized by its independent symmetric components
/// (one unknown per sorted multi-index).  In those coordinates the objective
/// is a positive-definite quadratic form `d' G d` with
/// `G[b, b'] = sum over the orbits of b and b' of products of `W^2`
/// entries`, and the constraint is a full-rank linear system `A d = r` with
/// `r = y_tensor - T_prev[s_prev]`.  The minimizer
/// `d = G^{-1} A' (A G^{-1} A')^{-1} r` is computed by a Cholesky
/// factorization of `G` and a dense solve of the Schur complement.
pub fn hosu_update(
    t_prev: &SymTensor,
    secant: &SecantData,
    w: &WeightMatrix,
) -> Result<SymTensor, UpdateError> {
    let p = t_prev.order();
    let n = t_prev.dim();
    assert!(p >= 2, "tensor order must be at least 2");
    assert_eq!(secant.s_prev.len(), n, "step dimension mismatch");
    assert_eq!(
        secant.y_tensor.order(),
        p - 1,
        "secant tensor order mismatch"
    );
    assert_eq!(secant.y_tensor.dim(), n, "secant tensor dimension mismatch");
    assert_eq!(w.dim(), n, "weight dimension mismatch");

    let s = &secant.s_prev;
    let s_norm = s.norm();
    if s_norm <= DEGENERATE_STEP_TOL {
        return Err(UpdateError::DegenerateStep { norm: s_norm });
    }

    let predicted = t_prev.contract(s, 1)?;
    let resid = secant.y_tensor.sub(&predicted)?;
    if resid.frob_norm() == 0.0 {
        // The zero correction is optimal and keeps T_prev bit-for-bit.
        return Ok(t_prev.clone());
    }

    let (cols, col_of) = sorted_tuples(n, p);
    let (rows, _) = sorted_tuples(n, p - 1);
    let n_unknowns = cols.len();
    let n_constraints = rows.len();

    // Bucket id of every full tuple of order p.
    let full = full_tuples(n, p);
    let bucket: Vec<usize> = full
        .iter()
        .map(|t| {
            let mut key = t.clone();
            key.sort_unstable();
            col_of[&key]
        })
        .collect();

    // G[b, b'] = sum over full tuples (J, J') in the two orbits of
    // prod_l (W^2)[J_l, J'_l]; the orbit sums make d' G d the Frobenius
    // norm of the weighted correction with multiplicities included.
    let w2 = w.squared();
    let mut g = DMatrix::zeros(n_unknowns, n_unknowns);
    for (ja, ta) in full.iter().enumerate() {
        for (jb, tb) in full.iter().enumerate() {
            let mut prod = 1.0;
            for l in 0..p {
                prod *= w2[(ta[l], tb[l])];
            }
            g[(bucket[ja], bucket[jb])] += prod;
        }
    }

    // A[row, col] accumulates s_i into the bucket of (row tuple + i).
    let mut a = DMatrix::zeros(n_constraints, n_unknowns);
    let mut key = vec![0usize; p];
    for (row, beta) in rows.iter().enumerate() {
        for i in 0..n {
            key[..p - 1].copy_from_slice(beta);
            key[p - 1] = i;
            key.sort_unstable();
            a[(row, col_of[&key])] += s[i];
        }
    }

    let r = DVector::from_fn(n_constraints, |row, _| resid.entry(&rows[row]));

    let chol = g.cholesky().ok_or(UpdateError::NumericalBreakdown {
        context: "weighted Gram matrix not positive definite",
    })?;
    let x_mat = chol.solve(&a.transpose());
    let schur = &a * &x_mat;
    let multipliers = schur
        .lu()
        .solve(&r)
        .ok_or(UpdateError::NumericalBreakdown {
            context: "constraint Schur complement singular",
        })?;
    let d = x_mat * multipliers;

    let mut delta = DenseTensor::zeros(p, n);
    for (flat, &b) in bucket.iter().enumerate() {
        delta.entries_mut()[flat] = d[b];
    }
    let delta = SymTensor::from_dense(&delta)?;
    Ok(t_prev.add(&delta)?)
}

/// Guard for the DFP branch: the step/gradient-difference pair must satisfy
/// `mu ||s||^2 <= |s'y|` and `||y|| <= L ||s||`.
pub fn dfp_guard(s: &DVector<f64>, y: &DVector<f64>, mu: f64, l: f64) -> bool {
    let s_sq = s.norm_squared();
    mu * s_sq <= s.dot(y).abs() && y.norm() <= l * s.norm()
}

/// SPD weight for the DFP update together with its guaranteed condition
/// bound and whether the step was sign-flipped.
#[derive(Debug, Clone)]
pub struct DfpWeight {
    pub weight: WeightMatrix,
    /// Certified bound on the condition number of `weight`.
    pub kappa_bound: f64,
    /// True when `s'y < 0` and the construction used `-s` in place of `s`.
    pub flipped: bool,
}

/// Constructs an SPD matrix `W` with `W^{-2} s = y` (after aligning the sign
/// of `s` with `y`) and condition number at most
/// [`dfp_kappa_max`]`(mu, l, varsigma)`.
///
/// When `y` is colinear with `s`, `W` rescales the `s` direction only.
/// Otherwise `W^{-2}` acts as the 2x2 block `[[a, c], [c, b]]` on the plane
/// spanned by `s` and the orthogonal part of `y` — with `a = s'y / ||s||^2`,
/// `c = ||y_perp|| / ||s||`, `b = (varsigma + c^2) / a` — and as the
/// identity on the orthogonal complement; `W` is its inverse square root.
pub fn build_dfp_weight(
    s: &DVector<f64>,
    y: &DVector<f64>,
    mu: f64,
    l: f64,
    varsigma: f64,
) -> Result<DfpWeight, UpdateError> {
    assert!(mu > 0.0 && mu <= l, "DFP guard requires 0 < mu <= L");
    assert!(varsigma > 0.0, "varsigma must be positive");
    let s_norm = s.norm();
    if s_norm <= DEGENERATE_STEP_TOL {
        return Err(UpdateError::DegenerateStep { norm: s_norm });
    }
    if !dfp_guard(s, y, mu, l) {
        return Err(UpdateError::GuardViolated {
            s_dot_y_abs: s.dot(y).abs(),
            mu_bound: mu * s.norm_squared(),
            y_norm: y.norm(),
            l_bound: l * s_norm,
        });
    }

    let flipped = s.dot(y) < 0.0;
    let s_al = if flipped { -s } else { s.clone() };
    let sty = s_al.dot(y);
    let n = s.len();
    let v1 = &s_al / s_norm;
    let y_perp = y - &s_al * (sty / (s_norm * s_norm));
    let perp_norm = y_perp.norm();

    let w_mat = if perp_norm <= COLINEAR_TOL * y.norm() {
        // Colinear: stretch the s direction so W^{-2} s = (s'y/||s||^2) s = y.
        let d = s_norm / sty.sqrt();
        DMatrix::identity(n, n) + (&v1 * v1.transpose()) * (d - 1.0)
    } else {
        let v2 = &y_perp / perp_norm;
        let a = sty / (s_norm * s_norm);
        let c = perp_norm / s_norm;
        let b = (varsigma + c * c) / a;
        let inv_sq = DMatrix::identity(n, n)
            + (&v1 * v1.transpose()) * (a - 1.0)
            + (&v2 * v2.transpose()) * (b - 1.0)
            + (&v1 * v2.transpose() + &v2 * v1.transpose()) * c;
        // W = (W^{-2})^{-1/2} through the eigendecomposition; the 2x2 block
        // has determinant varsigma > 0, so all eigenvalues are positive.
        let eigen = inv_sq.symmetric_eigen();
        let mut scaled = eigen.eigenvectors.clone();
        for (j, &lam) in eigen.eigenvalues.iter().enumerate() {
            assert!(lam > 0.0, "DFP weight block lost positive definiteness");
            let factor = 1.0 / lam.sqrt();
            for i in 0..n {
                scaled[(i, j)] *= factor;
            }
        }
        let w = scaled * eigen.eigenvectors.transpose();
        (&w + w.transpose()) * 0.5
    };

    let weight = WeightMatrix::new(w_mat)?;
    Ok(DfpWeight {
        weight,
        kappa_bound: dfp_kappa_max(mu, l, varsigma),
        flipped,
    })
}

/// Which branch of the strategy dispatch produced `T_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateBranch {
    /// Restart with the exact order-`p` derivative.
    RestartExact,
    /// Restart by finite differences.
    RestartFd,
    /// Keep-constant between restarts.
    KeepConstant,
    /// PSB secant update (`W = I`).
    Psb,
    /// DFP secant update with the constructed weight.
    Dfp,
    /// DFP guard rejected the pair; kept the previous tensor.
    GuardFallback,
    /// Step too small for a secant update; kept the previous tensor.
    DegenerateFallback,
}

/// Diagnostics accompanying each tensor update.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorUpdateInfo {
    pub branch: UpdateBranch,
    /// Finite-difference stepsize (restart-by-differences only).
    pub h: Option<f64>,
    /// Whether the stepsize floor was active.
    pub h_floored: bool,
    /// Whether the DFP construction flipped the step sign.
    pub dfp_flipped: Option<bool>,
    /// Observed condition number of the DFP weight.
    pub weight_cond: Option<f64>,
    /// Certified condition bound of the DFP weight.
    pub kappa_bound: Option<f64>,
}

impl TensorUpdateInfo {
    fn plain(branch: UpdateBranch) -> Self {
        TensorUpdateInfo {
            branch,
            h: None,
            h_floored: false,
            dfp_flipped: None,
            weight_cond: None,
            kappa_bound: None,
        }
    }
}

/// Strategy dispatch producing `T_k`.
///
/// On restart iterations (`k mod m = 0`) the tensor is recomputed from the
/// problem — exactly or by finite differences with the stepsize from
/// [`compute_h`].  Between restarts the previous tensor is kept or corrected
/// by a secant update; the DFP branch falls back to keep-constant when its
/// guard rejects the pair or the step is degenerate.
#[allow(clippy::too_many_arguments)]
pub fn tensor_p(
    k: usize,
    p: usize,
    t_prev: Option<&SymTensor>,
    secant: Option<&SecantData>,
    history: &HistoryBuffer,
    problem: &dyn Problem,
    x: &DVector<f64>,
    cfg: &StrategyConfig,
) -> Result<(SymTensor, TensorUpdateInfo), UpdateError> {
    cfg.validate();
    let n = x.len();
    if k.is_multiple_of(cfg.m) {
        if cfg.kind.uses_fd_restart() {
            let step = compute_h(history, cfg.m, n, cfg.h_floor);
            let t = fd_restart(problem, x, step.h, p)?;
            let mut info = TensorUpdateInfo::plain(UpdateBranch::RestartFd);
            info.h = Some(step.h);
            info.h_floored = step.floored;
            return Ok((t, info));
        }
        let t = problem.derivative(x, p)?;
        ensure_finite(&t, p)?;
        return Ok((t, TensorUpdateInfo::plain(UpdateBranch::RestartExact)));
    }

    let t_prev = t_prev.expect("previous tensor required between restarts");
    if !cfg.kind.uses_secant() {
        return Ok((
            t_prev.clone(),
            TensorUpdateInfo::plain(UpdateBranch::KeepConstant),
        ));
    }
    let secant = secant.expect("secant data required between restarts");

    match cfg.kind {
        StrategyKind::PsbLazy | StrategyKind::PsbFd => {
            match hosu_update(t_prev, secant, &WeightMatrix::identity(n)) {
                Ok(t) => Ok((t, TensorUpdateInfo::plain(UpdateBranch::Psb))),
                Err(UpdateError::DegenerateStep { .. }) => Ok((
                    t_prev.clone(),
                    TensorUpdateInfo::plain(UpdateBranch::DegenerateFallback),
                )),
                Err(e) => Err(e),
            }
        }
        StrategyKind::DfpFd => {
            let built = build_dfp_weight(
                &secant.s_prev,
                &secant.y_vec,
                cfg.dfp_mu,
                cfg.dfp_l,
                cfg.dfp_varsigma,
            );
            let dfp = match built {
                Ok(dfp) => dfp,
                Err(UpdateError::GuardViolated { .. }) => {
                    return Ok((
                        t_prev.clone(),
                        TensorUpdateInfo::plain(UpdateBranch::GuardFallback),
                    ));
                }
                Err(UpdateError::DegenerateStep { .. }) => {
                    return Ok((
                        t_prev.clone(),
                        TensorUpdateInfo::plain(UpdateBranch::DegenerateFallback),
                    ));
                }
                Err(e) => return Err(e),
            };
            match hosu_update(t_prev, secant, &dfp.weight) {
                Ok(t) => {
                    let mut info = TensorUpdateInfo::plain(UpdateBranch::Dfp);
                    info.dfp_flipped = Some(dfp.flipped);
                    info.weight_cond = Some(dfp.weight.cond());
                    info.kappa_bound = Some(dfp.kappa_bound);
                    Ok((t, info))
                }
                Err(UpdateError::DegenerateStep { .. }) => Ok((
                    t_prev.clone(),
                    TensorUpdateInfo::plain(UpdateBranch::DegenerateFallback),
                )),
                Err(e) => Err(e),
            }
        }
        StrategyKind::Lazy | StrategyKind::Fd => unreachable!("handled above"),
    }
}

/// Diagnostic comparison of `T_k` against the exact derivative tensor.
///
/// Restart iterations also evaluate the accuracy budget
/// `min(kappa_a * sum of the m most recent step norms, kappa_b)`: the
/// estimated 2-norm residual (a certified lower bound) is checked against
/// the budget directly, the Frobenius residual against the budget times
/// `sqrt(n^p)`.  Purely observational — the run never branches on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition1Audit {
    pub restart: bool,
    /// Frobenius norm of `T_k` minus the exact derivative.
    pub frob_residual: f64,
    /// Power-iteration lower bound on the 2-norm of the same difference.
    pub two_norm_lower: f64,
    /// Restart accuracy budget in the 2-norm, when applicable.
    pub rhs_two_norm: Option<f64>,
    /// Restart accuracy budget in the Frobenius norm, when applicable.
    pub rhs_frob: Option<f64>,
    /// Whether both restart residuals sit within their budgets (1% slack).
    pub within_bound: Option<bool>,
    /// Residual contraction constant reported for the strategy.
    pub kappa_c: f64,
}

pub fn condition1_audit(
    t_k: &SymTensor,
    problem: &dyn Problem,
    x: &DVector<f64>,
    k: usize,
    p: usize,
    history: &HistoryBuffer,
    cfg: &StrategyConfig,
) -> Result<Condition1Audit, UpdateError> {
    let exact = problem.derivative(x, p)?;
    let resid = t_k.sub(&exact)?;
    let frob_residual = resid.frob_norm();
    let two_norm_lower = resid.op_norm_lower(&OpNormConfig::default()).value;
    let restart = k.is_multiple_of(cfg.m);
    if !restart {
        return Ok(Condition1Audit {
            restart,
            frob_residual,
            two_norm_lower,
            rhs_two_norm: None,
            rhs_frob: None,
            within_bound: None,
            kappa_c: cfg.kappa_c(p),
        });
    }
    let rhs_two = (cfg.kappa_a() * history.sum_recent(cfg.m)).min(cfg.kappa_b());
    let rhs_frob = rhs_two * (x.len() as f64).powi(p as i32).sqrt();
    let within = two_norm_lower <= rhs_two * 1.01 && frob_residual <= rhs_frob * 1.01;
    Ok(Condition1Audit {
        restart,
        frob_residual,
        two_norm_lower,
        rhs_two_norm: Some(rhs_two),
        rhs_frob: Some(rhs_frob),
        within_bound: Some(within),
        kappa_c: cfg.kappa_c(p),
    })
}
