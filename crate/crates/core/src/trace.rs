//! Per-iteration output shared by all Krylov methods.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::functions::ScalarFunction;
use crate::reference::CompactSvd;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Reached the requested number of iterations.
    Completed,
    /// The Krylov space became invariant at this dimension; the last
    /// approximation is exact up to rounding.
    Invariant(usize),
}

/// Approximations `ŷ_k` for `k = 1, 2, …` with optional diagnostics.
#[derive(Debug, Clone)]
pub struct KrylovRun {
    pub approximations: Vec<DVector<f64>>,
    /// Relative errors against a supplied reference, one per `k`.
    pub errors: Option<Vec<f64>>,
    /// `‖I − P_kᵀP_k‖₂` per `k`, when measured.
    pub drift: Option<Vec<f64>>,
    pub stop: StopReason,
}

impl KrylovRun {
    pub fn len(&self) -> usize {
        self.approximations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.approximations.is_empty()
    }

    pub fn last(&self) -> Option<&DVector<f64>> {
        self.approximations.last()
    }
}

pub fn relative_errors(approx: &[DVector<f64>], reference: &DVector<f64>) -> Vec<f64> {
    let scale = reference.norm();
    approx
        .iter()
        .map(|y| {
            let d = (y - reference).norm();
            if scale > 0.0 {
                d / scale
            } else {
                d
            }
        })
        .collect()
}

/// `‖b‖ P f◇(B) e₁` for a square projected matrix `B` and basis `P` with at
/// least as many columns as `B`.
pub fn projected_gmf(f: &ScalarFunction, p: &DMatrix<f64>, b: &DMatrix<f64>, bnorm: f64) -> Result<DVector<f64>> {
    let k = b.ncols();
    let mut e1 = DVector::zeros(k);
    e1[0] = bnorm;
    let z = CompactSvd::new(b).apply_function_to(f, &e1)?;
    Ok(p.columns(0, k) * z)
}

/// Same as [`projected_gmf`] with the basis given as a list of columns.
pub fn projected_gmf_cols(f: &ScalarFunction, p: &[DVector<f64>], b: &DMatrix<f64>, bnorm: f64) -> Result<DVector<f64>> {
    let k = b.ncols();
    let mut e1 = DVector::zeros(k);
    e1[0] = bnorm;
    let z = CompactSvd::new(b).apply_function_to(f, &e1)?;
    let mut y = DVector::zeros(p[0].len());
    for (j, c) in z.iter().enumerate() {
        y.axpy(*c, &p[j], 1.0);
    }
    Ok(y)
}

/// Incrementally maintained `PᵀP` for orthogonality-drift measurements.
#[derive(Debug, Clone, Default)]
pub struct GramTracker {
    g: Vec<Vec<f64>>,
}

impl GramTracker {
    pub fn push(&mut self, cols: &[DVector<f64>]) {
        let k = cols.len();
        let new = &cols[k - 1];
        let row: Vec<f64> = cols.iter().map(|c| c.dot(new)).collect();
        for (i, r) in self.g.iter_mut().enumerate() {
            r.push(row[i]);
        }
        self.g.push(row);
    }

    /// `‖I − PᵀP‖₂`.
    pub fn drift(&self) -> f64 {
        let k = self.g.len();
        let m = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 - self.g[i][j] } else { -self.g[i][j] });
        m.symmetric_eigen().eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Optional inputs shared by the approximation drivers.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// Exact `f◇(A)b`, to record relative errors.
    pub reference: Option<&'a DVector<f64>>,
    /// Record `‖I − P_kᵀP_k‖₂` per iteration.
    pub track_drift: bool,
}
