//! Short-recurrence rational Golub-Kahan process.
//!
//! The right basis `Q_k` comes from a three-term rational Lanczos recurrence on
//! `AᵀA`. The left basis `P_k` and the upper triangular `B_k = P_kᵀ A Q_k` are
//! updated with a constant number of vectors per step: `B_k` is
//! quasiseparable, so each new column above the second superdiagonal is a
//! multiple of the previous one.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{GmfError, Result};
use crate::functions::ScalarFunction;
use crate::golub_kahan::BREAKDOWN_TOL;
use crate::operator::LinearOperator;
use crate::poles::{Pole, PoleSequence};
use crate::rational_krylov::{SolverCache, INVARIANCE_TOL};
use crate::trace::{projected_gmf_cols, relative_errors, GramTracker, KrylovRun, RunOptions, StopReason};

/// `|β_{k−2}|` at or below this multiple of `‖A‖` triggers the explicit fallback.
pub const VANISHED_BETA_TOL: f64 = 1e-13;

/// Upper triangular `B_k` stored by its diagonal `d`, first superdiagonal
/// `beta` and second superdiagonal `gamma`, plus the dense matrix the
/// recursion has produced so far.
#[derive(Debug, Clone, Default)]
pub struct QuasiseparableUpper {
    pub d: Vec<f64>,
    /// `beta[t] = B[t, t+1]`.
    pub beta: Vec<f64>,
    /// `gamma[t] = B[t, t+2]`.
    pub gamma: Vec<f64>,
    dense: Vec<DVector<f64>>,
}

impl QuasiseparableUpper {
    pub fn k(&self) -> usize {
        self.d.len()
    }

    /// Dense `k × k` matrix, built column by column during the run.
    pub fn dense(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut b = DMatrix::zeros(k, k);
        for (j, col) in self.dense.iter().enumerate() {
            b.view_mut((0, j), (col.len(), 1)).copy_from(col);
        }
        b
    }

    pub fn leading(&self, k: usize) -> DMatrix<f64> {
        self.dense().view((0, 0), (k, k)).into_owned()
    }

    fn push_column(&mut self, col: DVector<f64>) {
        let j = col.len() - 1;
        self.d.push(col[j]);
        if j >= 1 {
            self.beta.push(col[j - 1]);
        }
        if j >= 2 {
            self.gamma.push(col[j - 2]);
        }
        self.dense.push(col);
    }
}

/// Rebuilds the dense matrix from `(d, β, γ)` alone, through the column
/// recursion `B[i, j] = (γ_{j−2}/β_{j−2}) B[i, j−1]` for `i < j−2`.
pub fn reconstruct_dense(b: &QuasiseparableUpper) -> Result<DMatrix<f64>> {
    let k = b.k();
    if b.beta.len() != k.saturating_sub(1) || b.gamma.len() != k.saturating_sub(2) {
        return Err(GmfError::InvalidArgument("generator lengths do not match".into()));
    }
    let mut m = DMatrix::zeros(k, k);
    for j in 0..k {
        m[(j, j)] = b.d[j];
        if j >= 1 {
            m[(j - 1, j)] = b.beta[j - 1];
        }
        if j >= 2 {
            m[(j - 2, j)] = b.gamma[j - 2];
            if j >= 3 {
                let den = b.beta[j - 2];
                if den == 0.0 {
                    return Err(GmfError::InvalidArgument(format!("vanished beta at column {j}")));
                }
                let ratio = b.gamma[j - 2] / den;
                for i in 0..j - 2 {
                    m[(i, j)] = ratio * m[(i, j - 1)];
                }
            }
        }
    }
    Ok(m)
}

/// Inputs of one step: `q_k`, the two previous left vectors, the running
/// combination `x_{k−1}` and `β_{k−2}`.
#[derive(Debug, Clone, Copy)]
pub struct RgkStepInput<'a> {
    pub q: &'a DVector<f64>,
    pub p_prev1: Option<&'a DVector<f64>>,
    pub p_prev2: Option<&'a DVector<f64>>,
    pub x_prev: Option<&'a DVector<f64>>,
    pub beta_prev: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RgkStepOutput {
    /// `p_k`, absent when `d_k` is below the breakdown tolerance.
    pub p: Option<DVector<f64>>,
    pub d: f64,
    /// `β_{k−1}`, from step 2 on.
    pub beta: Option<f64>,
    /// `γ_{k−2}`, from step 3 on.
    pub gamma: Option<f64>,
    /// `x_k = [P_{k−1} 0] B_k e_k`.
    pub x: DVector<f64>,
}

#[derive(Debug, Clone)]
pub enum RgkStepResult {
    Regular(RgkStepOutput),
    /// `β_{k−2}` vanished; the caller must orthogonalize explicitly.
    VanishedBeta,
}

/// One step of the left-side update:
/// `w ← A q_k`, `β_{k−1} ← wᵀp_{k−1}`, `γ_{k−2} ← wᵀp_{k−2}`,
/// `x_k ← (γ_{k−2}/β_{k−2}) x_{k−1} + β_{k−1} p_{k−1}`, `w ← w − x_k`,
/// `d_k ← ‖w‖`, `p_k ← w/d_k`.
pub fn rgk_step(op: &dyn LinearOperator, input: RgkStepInput, beta_tol: f64, d_tol: f64) -> Result<RgkStepResult> {
    let mut w = op.apply(input.q)?;
    let (beta, gamma, x) = match (input.p_prev1, input.p_prev2) {
        (None, _) => (None, None, DVector::zeros(w.len())),
        (Some(p1), None) => {
            let beta = w.dot(p1);
            (Some(beta), None, p1 * beta)
        }
        (Some(p1), Some(p2)) => {
            let bp = input.beta_prev.ok_or_else(|| GmfError::InvalidArgument("missing beta_prev".into()))?;
            let xp = input.x_prev.ok_or_else(|| GmfError::InvalidArgument("missing x_prev".into()))?;
            if bp.abs() <= beta_tol {
                return Ok(RgkStepResult::VanishedBeta);
            }
            let beta = w.dot(p1);
            let gamma = w.dot(p2);
            let mut x = xp * (gamma / bp);
            x.axpy(beta, p1, 1.0);
            (Some(beta), Some(gamma), x)
        }
    };
    w -= &x;
    let d = w.norm();
    let p = (d > d_tol).then(|| w / d);
    Ok(RgkStepResult::Regular(RgkStepOutput { p, d, beta, gamma, x }))
}

/// Three-term rational Lanczos on `AᵀA`: keeps two basis vectors and the pole
/// that produced the older one.
pub struct ShortRationalLanczos<'a> {
    op: &'a dyn LinearOperator,
    cache: SolverCache<'a>,
    gram_norm: f64,
    v: DVector<f64>,
    v_prev: Option<DVector<f64>>,
    /// Pole that produced `v_prev` (`∞` for the start vector).
    pole_prev: Pole,
    /// Pole that produced `v`.
    pole_cur: Pole,
}

impl<'a> ShortRationalLanczos<'a> {
    pub fn new(op: &'a dyn LinearOperator, b: &DVector<f64>) -> Result<Self> {
        if b.len() != op.ncols() {
            return Err(GmfError::DimensionMismatch { expected: op.ncols(), got: b.len() });
        }
        let nb = b.norm();
        if !(nb > 0.0) {
            return Err(GmfError::InvalidArgument("start vector must be nonzero".into()));
        }
        let a = op.norm_estimate();
        Ok(ShortRationalLanczos {
            op,
            cache: SolverCache::new(op),
            gram_norm: a * a,
            v: b / nb,
            v_prev: None,
            pole_prev: Pole::Infinite,
            pole_cur: Pole::Infinite,
        })
    }

    pub fn current(&self) -> &DVector<f64> {
        &self.v
    }

    fn solve(&mut self, xi: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.cache.solve(xi, v)
    }

    /// Produces the next basis vector with pole `xi`. Returns `false` when
    /// the space is invariant.
    pub fn advance(&mut self, xi: Pole) -> Result<bool> {
        let vj = self.v.clone();
        // y0: the full-orthogonalization candidate; y1, y2: correction terms.
        let (y0, y1, y2, cand_is_y1) = match xi {
            Pole::Infinite => {
                let y0 = self.op.apply_gram(&vj)?;
                let y2 = match (&self.v_prev, self.pole_prev) {
                    (None, _) => None,
                    (Some(vp), Pole::Infinite) => Some(vp.clone()),
                    (Some(vp), Pole::Finite(xp)) => {
                        let mut u = self.op.apply_gram(vp)?;
                        u.axpy(xp, vp, -1.0);
                        Some(u)
                    }
                };
                (y0, vj.clone(), y2, false)
            }
            Pole::Finite(x) => {
                let y1 = self.solve(x, &vj)?;
                let y0 = if x.abs() > self.gram_norm {
                    // Avoid cancellation in v + ξ S v for far-away poles.
                    let mv = self.op.apply_gram(&vj)?;
                    self.solve(x, &mv)?
                } else {
                    let mut y0 = vj.clone();
                    y0.axpy(x, &y1, 1.0);
                    y0
                };
                let vp = self.v_prev.clone();
                let y2 = match (vp, self.pole_prev) {
                    (None, _) => None,
                    (Some(vp), Pole::Infinite) => Some(self.solve(x, &vp)?),
                    (Some(vp), Pole::Finite(xp)) if xp == x => Some(vp),
                    (Some(vp), Pole::Finite(xp)) => {
                        let mut s = self.solve(x, &vp)? * (xp - x);
                        s -= &vp;
                        Some(s)
                    }
                };
                (y0, y1, y2, x == 0.0)
            }
        };

        // Coefficients making y0 − c₁y1 − c₂y2 orthogonal to v_j and v_{j−1}.
        let mut x = y0.clone();
        let mut scale = y0.norm();
        match (&self.v_prev, &y2) {
            (Some(vp), Some(y2)) => {
                let g = Matrix2::new(vj.dot(&y1), vj.dot(y2), vp.dot(&y1), vp.dot(y2));
                let r = Vector2::new(vj.dot(&y0), vp.dot(&y0));
                let c = g.lu().solve(&r).or_else(|| g.svd(true, true).solve(&r, 1e-300).ok()).unwrap_or(Vector2::zeros());
                x.axpy(-c[0], &y1, 1.0);
                x.axpy(-c[1], y2, 1.0);
                scale = scale.max(c[0].abs() * y1.norm()).max(c[1].abs() * y2.norm());
            }
            _ => {
                let den = vj.dot(&y1);
                let c = if den != 0.0 { vj.dot(&y0) / den } else { 0.0 };
                x.axpy(-c, &y1, 1.0);
                scale = scale.max(c.abs() * y1.norm());
            }
        }
        // Local cleanup against the two vectors the recurrence knows about.
        let c = vj.dot(&x);
        x.axpy(-c, &vj, 1.0);
        if let Some(vp) = &self.v_prev {
            let c = vp.dot(&x);
            x.axpy(-c, vp, 1.0);
        }
        let nx = x.norm();
        if !(nx > INVARIANCE_TOL * scale) {
            return Ok(false);
        }
        x /= nx;
        // Same orientation as full orthogonalization of the candidate.
        let cand = if cand_is_y1 { &y1 } else { &y0 };
        if x.dot(cand) < 0.0 {
            x.neg_mut();
        }
        self.v_prev = Some(vj);
        self.pole_prev = self.pole_cur;
        self.pole_cur = xi;
        self.v = x;
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgkStatus {
    /// Column `k` added.
    Continue,
    /// No column added: the space is invariant and `B_{k−1}` is final.
    Invariant,
}

/// Driver for the short-recurrence process.
pub struct RationalGolubKahan<'a> {
    op: &'a dyn LinearOperator,
    lanczos: ShortRationalLanczos<'a>,
    poles: PoleSequence,
    pub b: QuasiseparableUpper,
    /// Left vectors, appended for the evaluation of `ŷ_k` only; the recurrence
    /// reads the last two.
    pub p: Vec<DVector<f64>>,
    x: DVector<f64>,
    beta_tol: f64,
    d_tol: f64,
    done: bool,
    /// Steps that needed explicit orthogonalization because a β vanished.
    pub fallbacks: usize,
}

impl<'a> RationalGolubKahan<'a> {
    pub fn new(op: &'a dyn LinearOperator, b: &DVector<f64>, poles: &PoleSequence) -> Result<Self> {
        let lanczos = ShortRationalLanczos::new(op, b)?;
        let an = op.norm_estimate();
        Ok(RationalGolubKahan {
            op,
            lanczos,
            poles: poles.clone(),
            b: QuasiseparableUpper::default(),
            p: Vec::new(),
            x: DVector::zeros(op.nrows()),
            beta_tol: VANISHED_BETA_TOL * an,
            d_tol: BREAKDOWN_TOL * an,
            done: false,
            fallbacks: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.b.k()
    }

    /// The right vector of the most recent step.
    pub fn q_current(&self) -> &DVector<f64> {
        self.lanczos.current()
    }

    pub fn step(&mut self) -> Result<RgkStatus> {
        if self.done {
            return Ok(RgkStatus::Invariant);
        }
        let k = self.k() + 1;
        if k > 1 {
            let pole = self.poles.get(k - 2);
            if !self.lanczos.advance(pole)? {
                self.done = true;
                return Ok(RgkStatus::Invariant);
            }
        }
        let q = self.lanczos.current().clone();
        let np = self.p.len();
        let input = RgkStepInput {
            q: &q,
            p_prev1: np.checked_sub(1).map(|i| &self.p[i]),
            p_prev2: np.checked_sub(2).map(|i| &self.p[i]),
            x_prev: Some(&self.x),
            beta_prev: np.checked_sub(2).map(|i| self.b.beta[i]),
        };
        let out = match rgk_step(self.op, input, self.beta_tol, self.d_tol)? {
            RgkStepResult::Regular(out) => {
                let mut col = DVector::zeros(k);
                col[k - 1] = out.d;
                if let Some(beta) = out.beta {
                    col[k - 2] = beta;
                }
                if let Some(gamma) = out.gamma {
                    col[k - 3] = gamma;
                    let ratio = gamma / self.b.beta[k - 3];
                    let prev = &self.b.dense[k - 2];
                    for i in 0..k - 3 {
                        col[i] = ratio * prev[i];
                    }
                }
                (out.p, col, out.x)
            }
            RgkStepResult::VanishedBeta => {
                self.fallbacks += 1;
                let mut w = self.op.apply(&q)?;
                let mut col = DVector::zeros(k);
                let mut x = DVector::zeros(w.len());
                for (i, pi) in self.p.iter().enumerate() {
                    col[i] = pi.dot(&w);
                    x.axpy(col[i], pi, 1.0);
                }
                w -= &x;
                let d = w.norm();
                col[k - 1] = d;
                ((d > self.d_tol).then(|| w / d), col, x)
            }
        };
        let (p, col, x) = out;
        let Some(p) = p else {
            self.done = true;
            return Ok(RgkStatus::Invariant);
        };
        self.b.push_column(col);
        self.p.push(p);
        self.x = x;
        Ok(RgkStatus::Continue)
    }
}

/// Result of [`rgk_run`].
#[derive(Debug, Clone)]
pub struct RgkRun {
    pub run: KrylovRun,
    pub b: QuasiseparableUpper,
    pub fallbacks: usize,
}

/// Short-recurrence approximations `ŷ_k = ‖b‖ P_k f◇(B_k) e₁`, `k = 1..k_max`.
pub fn rgk_run(
    f: &ScalarFunction,
    op: &dyn LinearOperator,
    b: &DVector<f64>,
    poles: &PoleSequence,
    k_max: usize,
    opts: &RunOptions,
) -> Result<RgkRun> {
    let bnorm = b.norm();
    let mut rgk = RationalGolubKahan::new(op, b, poles)?;
    let mut approximations = Vec::with_capacity(k_max);
    let mut drift = opts.track_drift.then(Vec::new);
    let mut gram = GramTracker::default();
    let mut stop = StopReason::Completed;
    for _ in 0..k_max {
        if rgk.step()? == RgkStatus::Invariant {
            stop = StopReason::Invariant(rgk.k());
            break;
        }
        approximations.push(projected_gmf_cols(f, &rgk.p, &rgk.b.dense(), bnorm)?);
        if let Some(d) = drift.as_mut() {
            gram.push(&rgk.p);
            d.push(gram.drift());
        }
    }
    let errors = opts.reference.map(|r| relative_errors(&approximations, r));
    Ok(RgkRun { run: KrylovRun { approximations, errors, drift, stop }, b: rgk.b, fallbacks: rgk.fallbacks })
}
