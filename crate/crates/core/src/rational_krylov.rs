//! Rational Arnoldi on `AᵀA` with full orthogonalization, and the projected
//! approximation `ŷ_k = ‖b‖ P_k f◇(B_k) e₁` with `A Q_k = P_k B_k` from one QR.

use nalgebra::{DMatrix, DVector};

use crate::error::{GmfError, Result};
use crate::functions::ScalarFunction;
use crate::operator::{LinearOperator, ShiftedGramSolver};
use crate::poles::{Pole, PoleSequence};
use crate::trace::{projected_gmf, relative_errors, GramTracker, KrylovRun, RunOptions, StopReason};

/// A new direction below this fraction of the candidate norm means the space is invariant.
pub const INVARIANCE_TOL: f64 = 1e-12;

/// `AᵀA Q K = Q H` with `Q` orthonormal, `K`, `H` of size `k × (k−1)`.
#[derive(Debug, Clone)]
pub struct RationalArnoldi {
    pub q: DMatrix<f64>,
    pub k_pencil: DMatrix<f64>,
    pub h_pencil: DMatrix<f64>,
    /// Poles used for columns 2..k.
    pub poles: Vec<Pole>,
    pub invariant: bool,
}

impl RationalArnoldi {
    pub fn dim(&self) -> usize {
        self.q.ncols()
    }

    /// `J = Qᵀ AᵀA Q`.
    pub fn projected_gram(&self, op: &dyn LinearOperator) -> Result<DMatrix<f64>> {
        let aq = apply_columns(op, &self.q)?;
        Ok(aq.tr_mul(&aq))
    }
}

/// Caches one shifted solver per distinct pole.
pub(crate) struct SolverCache<'a> {
    op: &'a dyn LinearOperator,
    solvers: Vec<(u64, Box<dyn ShiftedGramSolver + 'a>)>,
}

impl<'a> SolverCache<'a> {
    pub(crate) fn new(op: &'a dyn LinearOperator) -> Self {
        SolverCache { op, solvers: Vec::new() }
    }

    /// `(AᵀA − ξI)⁻¹ v`.
    pub(crate) fn solve(&mut self, xi: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        let key = (xi + 0.0).to_bits();
        if let Some((_, s)) = self.solvers.iter().find(|(k, _)| *k == key) {
            return s.solve(v);
        }
        let s = self.op.shifted_gram_solver(xi)?;
        let x = s.solve(v)?;
        self.solvers.push((key, s));
        Ok(x)
    }
}

/// The vector a pole turns `v` into before orthogonalization:
/// `∞ → AᵀA v`, `0 → (AᵀA)⁻¹ v`, otherwise `(AᵀA − ξI)⁻¹ AᵀA v`.
pub(crate) fn candidate(op: &dyn LinearOperator, cache: &mut SolverCache, pole: Pole, v: &DVector<f64>) -> Result<DVector<f64>> {
    match pole {
        Pole::Infinite => op.apply_gram(v),
        Pole::Finite(xi) if xi == 0.0 => cache.solve(0.0, v),
        Pole::Finite(xi) => {
            let mv = op.apply_gram(v)?;
            cache.solve(xi, &mv)
        }
    }
}

/// Builds `k` orthonormal basis vectors of the rational Krylov space on `AᵀA`.
/// Modified Gram-Schmidt with one full reorthogonalization pass.
pub fn rational_arnoldi(op: &dyn LinearOperator, b: &DVector<f64>, poles: &PoleSequence, k: usize) -> Result<RationalArnoldi> {
    let n = op.ncols();
    if b.len() != n {
        return Err(GmfError::DimensionMismatch { expected: n, got: b.len() });
    }
    let nb = b.norm();
    if !(nb > 0.0) {
        return Err(GmfError::InvalidArgument("start vector must be nonzero".into()));
    }
    let k = k.max(1).min(n);
    let mut cache = SolverCache::new(op);
    let mut basis: Vec<DVector<f64>> = vec![b / nb];
    let mut kp = DMatrix::zeros(k, k - 1);
    let mut hp = DMatrix::zeros(k, k - 1);
    let mut used = Vec::new();
    let mut invariant = false;
    for j in 0..k - 1 {
        let pole = poles.get(j);
        let mut w = candidate(op, &mut cache, pole, &basis[j])?;
        let w0 = w.norm();
        let mut c = DVector::zeros(j + 2);
        for _ in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let h = v.dot(&w);
                w.axpy(-h, v, 1.0);
                c[i] += h;
            }
        }
        let nw = w.norm();
        if !(nw > INVARIANCE_TOL * w0) {
            invariant = true;
            break;
        }
        c[j + 1] = nw;
        basis.push(w / nw);
        used.push(pole);
        // Pencil column from the orthogonalization coefficients.
        for i in 0..=j + 1 {
            let (kv, hv) = match pole {
                Pole::Infinite => (if i == j { 1.0 } else { 0.0 }, c[i]),
                Pole::Finite(xi) if xi == 0.0 => (c[i], if i == j { 1.0 } else { 0.0 }),
                Pole::Finite(xi) => (c[i] - if i == j { 1.0 } else { 0.0 }, xi * c[i]),
            };
            kp[(i, j)] = kv;
            hp[(i, j)] = hv;
        }
    }
    let dim = basis.len();
    Ok(RationalArnoldi {
        q: DMatrix::from_columns(&basis),
        k_pencil: kp.view((0, 0), (dim, dim - 1)).into_owned(),
        h_pencil: hp.view((0, 0), (dim, dim - 1)).into_owned(),
        poles: used,
        invariant,
    })
}

pub(crate) fn apply_columns(op: &dyn LinearOperator, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(op.nrows(), q.ncols());
    for j in 0..q.ncols() {
        let col = op.apply(&q.column(j).into_owned())?;
        out.set_column(j, &col);
    }
    Ok(out)
}

/// `A Q = P B` with `P` orthonormal and `B` upper triangular, `diag(B) ≥ 0`.
#[derive(Debug, Clone)]
pub struct GmfProjection {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Smallest diagonal entry of `B` fell below `1e−14‖A‖`: a null direction of `A`
    /// was captured by `Q`.
    pub rank_deficient: bool,
}

pub fn project(op: &dyn LinearOperator, q: &DMatrix<f64>) -> Result<GmfProjection> {
    let (m, k) = (op.nrows(), q.ncols());
    if q.nrows() != op.ncols() {
        return Err(GmfError::DimensionMismatch { expected: op.ncols(), got: q.nrows() });
    }
    if k > m {
        return Err(GmfError::InvalidArgument(format!("basis has {k} columns but A has only {m} rows")));
    }
    let aq = apply_columns(op, q)?;
    let qr = aq.qr();
    let mut p = qr.q();
    let mut r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            p.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    let tol = 1e-14 * op.norm_estimate();
    let rank_deficient = (0..k).any(|j| r[(j, j)] <= tol);
    Ok(GmfProjection { p, q: q.clone(), b: r, rank_deficient })
}

/// Rational Krylov approximations `ŷ_k`, `k = 1..k_max`, from one Arnoldi run
/// and one QR of `A Q_{k_max}`.
pub fn rational_gmf_approximate(
    f: &ScalarFunction,
    op: &dyn LinearOperator,
    b: &DVector<f64>,
    poles: &PoleSequence,
    k_max: usize,
    opts: &RunOptions,
) -> Result<KrylovRun> {
    let k_max = k_max.max(1).min(op.nrows());
    let arn = rational_arnoldi(op, b, poles, k_max)?;
    let proj = project(op, &arn.q)?;
    let bnorm = b.norm();
    let dim = arn.dim();
    let mut approximations = Vec::with_capacity(dim);
    let mut drift = opts.track_drift.then(Vec::new);
    let mut gram = GramTracker::default();
    let mut cols = Vec::new();
    for k in 1..=dim {
        let bk = proj.b.view((0, 0), (k, k)).into_owned();
        approximations.push(projected_gmf(f, &proj.p, &bk, bnorm)?);
        if let Some(d) = drift.as_mut() {
            cols.push(proj.p.column(k - 1).into_owned());
            gram.push(&cols);
            d.push(gram.drift());
        }
    }
    let errors = opts.reference.map(|r| relative_errors(&approximations, r));
    let stop = if arn.invariant { StopReason::Invariant(dim) } else { StopReason::Completed };
    Ok(KrylovRun { approximations, errors, drift, stop })
}
