//! Golub-Kahan bidiagonalization and the polynomial Krylov approximation
//! `ŷ_k = ‖b‖ P_k f◇(B_k) e₁`.

use nalgebra::{DMatrix, DVector};

use crate::error::{GmfError, Result};
use crate::functions::ScalarFunction;
use crate::operator::LinearOperator;
use crate::trace::{projected_gmf_cols, relative_errors, GramTracker, KrylovRun, RunOptions, StopReason};

/// α or β at or below `BREAKDOWN_TOL · ‖A‖` is treated as zero.
pub const BREAKDOWN_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkStatus {
    /// Column `k` added; `q_{k+1}` ready.
    Continue,
    /// Column `k` added and `β_k = 0`: `B_k` is the last bidiagonal.
    InvariantAfter,
    /// `α_k = 0`: no column added, `B_{k−1}` is already exact.
    InvariantBefore,
}

/// Running state of the bidiagonalization `A Q_k = P_k B_k`.
#[derive(Debug, Clone)]
pub struct BidiagonalState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Next right vector `q_{k+1}` (initially `q₁ = b/‖b‖`).
    pub q: DVector<f64>,
    /// Left vectors; the recurrence itself needs only the last one.
    pub p: Vec<DVector<f64>>,
    /// Right vectors, kept only when reorthogonalizing.
    pub q_basis: Vec<DVector<f64>>,
    pub reorth: bool,
    tol: f64,
    done: bool,
}

fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    // Classical Gram-Schmidt, twice.
    for _ in 0..2 {
        for u in basis {
            let c = u.dot(v);
            v.axpy(-c, u, 1.0);
        }
    }
}

impl BidiagonalState {
    pub fn new(op: &dyn LinearOperator, b: &DVector<f64>, reorth: bool) -> Result<Self> {
        if b.len() != op.ncols() {
            return Err(GmfError::DimensionMismatch { expected: op.ncols(), got: b.len() });
        }
        let nb = b.norm();
        if !(nb > 0.0) || !nb.is_finite() {
            return Err(GmfError::InvalidArgument("start vector must be nonzero and finite".into()));
        }
        Ok(BidiagonalState {
            alpha: Vec::new(),
            beta: Vec::new(),
            q: b / nb,
            p: Vec::new(),
            q_basis: Vec::new(),
            reorth,
            tol: BREAKDOWN_TOL * op.norm_estimate(),
            done: false,
        })
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Upper bidiagonal `B_k`.
    pub fn bidiagonal(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut b = DMatrix::zeros(k, k);
        for i in 0..k {
            b[(i, i)] = self.alpha[i];
            if i + 1 < k {
                b[(i, i + 1)] = self.beta[i];
            }
        }
        b
    }
}

/// One step of the short recurrence:
/// `r_k = A q_k − β_{k−1} p_{k−1}`, `α_k = ‖r_k‖`, `p_k = r_k/α_k`,
/// `s_k = Aᵀ p_k − α_k q_k`, `β_k = ‖s_k‖`, `q_{k+1} = s_k/β_k`.
pub fn gk_step(state: &mut BidiagonalState, op: &dyn LinearOperator) -> Result<GkStatus> {
    if state.done {
        return Err(GmfError::InvalidArgument("bidiagonalization already reached an invariant subspace".into()));
    }
    let qk = state.q.clone();
    let mut r = op.apply(&qk)?;
    if let (Some(pp), Some(bp)) = (state.p.last(), state.beta.last()) {
        r.axpy(-bp, pp, 1.0);
    }
    if state.reorth {
        orthogonalize(&mut r, &state.p);
    }
    let alpha = r.norm();
    if alpha <= state.tol {
        state.done = true;
        return Ok(GkStatus::InvariantBefore);
    }
    let pk = r / alpha;
    let mut s = op.apply_transpose(&pk)?;
    s.axpy(-alpha, &qk, 1.0);
    if state.reorth {
        state.q_basis.push(qk);
        orthogonalize(&mut s, &state.q_basis);
    }
    state.alpha.push(alpha);
    state.p.push(pk);
    let beta = s.norm();
    if beta <= state.tol {
        state.done = true;
        return Ok(GkStatus::InvariantAfter);
    }
    state.beta.push(beta);
    state.q = s / beta;
    Ok(GkStatus::Continue)
}

/// Polynomial Krylov approximations `ŷ_k`, `k = 1..k_max` (or until breakdown).
pub fn gk_approximate(
    f: &ScalarFunction,
    op: &dyn LinearOperator,
    b: &DVector<f64>,
    k_max: usize,
    reorth: bool,
    opts: &RunOptions,
) -> Result<KrylovRun> {
    let bnorm = b.norm();
    let mut state = BidiagonalState::new(op, b, reorth)?;
    let mut approximations = Vec::with_capacity(k_max);
    let mut drift = opts.track_drift.then(Vec::new);
    let mut gram = GramTracker::default();
    let mut stop = StopReason::Completed;
    for _ in 0..k_max {
        let status = gk_step(&mut state, op)?;
        if status == GkStatus::InvariantBefore {
            stop = StopReason::Invariant(state.k());
            break;
        }
        let y = projected_gmf_cols(f, &state.p, &state.bidiagonal(), bnorm)?;
        approximations.push(y);
        if let Some(d) = drift.as_mut() {
            gram.push(&state.p);
            d.push(gram.drift());
        }
        if status == GkStatus::InvariantAfter {
            stop = StopReason::Invariant(state.k());
            break;
        }
    }
    let errors = opts.reference.map(|r| relative_errors(&approximations, r));
    Ok(KrylovRun { approximations, errors, drift, stop })
}
