//! `f◇(A) b = (A⁺)ᵀ f◇(Aᵀ) A b`: run the Krylov method on `Aᵀ` with start
//! vector `A b`, then map back with a least-squares solve against `Aᵀ`.
//! Useful for wide `A`, where `AᵀA` is singular.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{GmfError, Result};
use crate::functions::ScalarFunction;
use crate::golub_kahan::gk_approximate;
use crate::operator::{DenseOperator, LinearOperator};
use crate::poles::{polynomial_poles, PoleSequence};
use crate::rational_gk::rgk_run;
use crate::rational_krylov::rational_gmf_approximate;
use crate::reference::CompactSvd;
use crate::trace::{relative_errors, KrylovRun, RunOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KrylovMethod {
    #[serde(alias = "gk")]
    GolubKahan,
    RationalFull,
    RationalShort,
}

/// Runs one of the direct methods. `poles` is ignored by Golub-Kahan and
/// defaults to all-infinite for the rational ones; `reorth` only affects
/// Golub-Kahan.
pub fn run_method(
    method: KrylovMethod,
    f: &ScalarFunction,
    op: &dyn LinearOperator,
    b: &DVector<f64>,
    poles: Option<&PoleSequence>,
    k_max: usize,
    reorth: bool,
    opts: &RunOptions,
) -> Result<KrylovRun> {
    let fallback = polynomial_poles(1);
    let poles = poles.unwrap_or(&fallback);
    match method {
        KrylovMethod::GolubKahan => gk_approximate(f, op, b, k_max, reorth, opts),
        KrylovMethod::RationalFull => rational_gmf_approximate(f, op, b, poles, k_max, opts),
        KrylovMethod::RationalShort => Ok(rgk_run(f, op, b, poles, k_max, opts)?.run),
    }
}

/// Approximations of `f◇(A) b` through the transpose. The map `w ↦ (A⁺)ᵀ w`
/// is the minimum-norm least-squares solution of `Aᵀ y = w`, taken from one
/// compact SVD of `A` reused for every `k`.
pub fn gmf_via_transpose(
    f: &ScalarFunction,
    op: &dyn LinearOperator,
    b: &DVector<f64>,
    method: KrylovMethod,
    poles: Option<&PoleSequence>,
    k_max: usize,
    reorth: bool,
    opts: &RunOptions,
) -> Result<KrylovRun> {
    if b.len() != op.ncols() {
        return Err(GmfError::DimensionMismatch { expected: op.ncols(), got: b.len() });
    }
    if !(b.norm() > 0.0) {
        return Err(GmfError::InvalidArgument("start vector must be nonzero".into()));
    }
    let a = op
        .dense()
        .ok_or_else(|| GmfError::InvalidArgument("the transpose path needs a dense operator for its least-squares solve".into()))?;
    let svd = CompactSvd::new(a);
    let c = op.apply(b)?;
    if !(c.norm() > 0.0) {
        // b lies in the null space of A, so f◇(A) b = 0.
        return Err(GmfError::InvalidArgument("A b vanishes; the transpose path has no start vector".into()));
    }
    let at = DenseOperator::new(a.transpose());
    let inner = run_method(method, f, &at as &dyn LinearOperator, &c, poles, k_max, reorth, &RunOptions::default())?;
    // (A⁺)ᵀ = U Σ⁻¹ Vᵀ
    let approximations: Vec<DVector<f64>> = inner
        .approximations
        .iter()
        .map(|w| {
            let mut t = svd.v.tr_mul(w);
            for (ti, s) in t.iter_mut().zip(svd.sigma.iter()) {
                *ti /= s;
            }
            &svd.u * t
        })
        .collect();
    let errors = opts.reference.map(|r| relative_errors(&approximations, r));
    Ok(KrylovRun { approximations, errors, drift: if opts.track_drift { inner.drift } else { None }, stop: inner.stop })
}
