//! Linear operators, shifted Gram solves and reproducible test matrices.

use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::linalg::Cholesky;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GmfError, Result};

/// Required relative residual of every shifted Gram solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

/// Solver for `(AᵀA − ξI) x = v` at one fixed shift.
pub trait ShiftedGramSolver: Send + Sync {
    fn shift(&self) -> f64;
    fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>>;
}

/// Matrix-free view of `A ∈ ℝ^{m×n}`.
pub trait LinearOperator: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// `A v`, with `v ∈ ℝⁿ`.
    fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>>;

    /// `Aᵀ u`, with `u ∈ ℝᵐ`.
    fn apply_transpose(&self, u: &DVector<f64>) -> Result<DVector<f64>>;

    /// Dense payload, when the operator carries one.
    fn dense(&self) -> Option<&DMatrix<f64>> {
        None
    }

    /// `AᵀA v`.
    fn apply_gram(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.apply_transpose(&self.apply(v)?)
    }

    /// Estimate of ‖A‖₂ by power iteration on AᵀA from a fixed start vector.
    fn norm_estimate(&self) -> f64 {
        if let Some(a) = self.dense() {
            return dense_norm2(a);
        }
        power_norm(self, 60)
    }

    /// Solver for the shifted Gram system. The default is conjugate gradients,
    /// valid whenever `AᵀA − ξI` is definite.
    fn shifted_gram_solver(&self, xi: f64) -> Result<Box<dyn ShiftedGramSolver + '_>> {
        Ok(Box::new(CgGramSolver::new(self, xi)?))
    }
}

/// One-off solve of `(AᵀA − ξI) x = v`.
pub fn solve_shifted_gram(op: &dyn LinearOperator, xi: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
    op.shifted_gram_solver(xi)?.solve(v)
}

fn check_len(v: &DVector<f64>, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(GmfError::DimensionMismatch { expected, got: v.len() });
    }
    Ok(())
}

fn dense_norm2(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let (m, n) = a.shape();
    if m.min(n) <= 400 {
        return a.clone().svd(false, false).singular_values.max();
    }
    power_norm(&DenseOperator::new(a.clone()), 200)
}

fn power_norm<O: LinearOperator + ?Sized>(op: &O, iters: usize) -> f64 {
    let n = op.ncols();
    if n == 0 {
        return 0.0;
    }
    // Deterministic, non-degenerate start.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64) * 0.7548776662466927).fract());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = match op.apply_gram(&v) {
            Ok(w) => w,
            Err(_) => break,
        };
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        lambda = nw;
        v = w / nw;
    }
    lambda.sqrt()
}

/// Dense matrix operator.
#[derive(Clone, PartialEq)]
pub struct DenseOperator {
    a: DMatrix<f64>,
}

impl fmt::Debug for DenseOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseOperator({}x{})", self.a.nrows(), self.a.ncols())
    }
}

impl DenseOperator {
    pub fn new(a: DMatrix<f64>) -> Self {
        DenseOperator { a }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.a
    }

    pub fn transpose(&self) -> DenseOperator {
        DenseOperator::new(self.a.transpose())
    }
}

impl LinearOperator for DenseOperator {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }

    fn ncols(&self) -> usize {
        self.a.ncols()
    }

    fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(v, self.a.ncols())?;
        Ok(&self.a * v)
    }

    fn apply_transpose(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(u, self.a.nrows())?;
        Ok(self.a.tr_mul(u))
    }

    fn dense(&self) -> Option<&DMatrix<f64>> {
        Some(&self.a)
    }

    fn shifted_gram_solver(&self, xi: f64) -> Result<Box<dyn ShiftedGramSolver + '_>> {
        Ok(Box::new(DenseGramSolver::new(&self.a, xi)?))
    }
}

/// Operator given by a pair of closures. Carries no dense payload, so shifted
/// solves go through conjugate gradients.
pub struct FnOperator<F, G> {
    m: usize,
    n: usize,
    apply: F,
    apply_t: G,
}

impl<F, G> FnOperator<F, G>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(m: usize, n: usize, apply: F, apply_t: G) -> Self {
        FnOperator { m, n, apply, apply_t }
    }
}

impl<F, G> LinearOperator for FnOperator<F, G>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn nrows(&self) -> usize {
        self.m
    }

    fn ncols(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(v, self.n)?;
        Ok((self.apply)(v))
    }

    fn apply_transpose(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(u, self.m)?;
        Ok((self.apply_t)(u))
    }
}

/// `Aᵀ` as an operator, without copying.
pub struct Transposed<'a>(pub &'a dyn LinearOperator);

impl LinearOperator for Transposed<'_> {
    fn nrows(&self) -> usize {
        self.0.ncols()
    }

    fn ncols(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.0.apply_transpose(v)
    }

    fn apply_transpose(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.0.apply(u)
    }

    fn norm_estimate(&self) -> f64 {
        self.0.norm_estimate()
    }
}

/// Dense factorization of `AᵀA − ξI`: Cholesky when the matrix is definite,
/// LU otherwise. Every solution is residual-checked and refined.
pub struct DenseGramSolver {
    xi: f64,
    g: DMatrix<f64>,
    factor: GramFactor,
}

enum GramFactor {
    /// Cholesky of `sign · G`.
    Cholesky(Cholesky<f64, nalgebra::Dyn>, f64),
    Lu(nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// Reject factorizations whose pivot ratio says the shift sits on the spectrum.
const PIVOT_RATIO_TOL: f64 = 1e-15;

impl DenseGramSolver {
    pub fn new(a: &DMatrix<f64>, xi: f64) -> Result<Self> {
        if !xi.is_finite() {
            return Err(GmfError::InvalidArgument(format!("shift must be finite, got {xi}")));
        }
        let n = a.ncols();
        let mut g = a.tr_mul(a);
        for i in 0..n {
            g[(i, i)] -= xi;
        }
        let factor = Self::factor(&g).ok_or(GmfError::SingularShift { xi })?;
        Ok(DenseGramSolver { xi, g, factor })
    }

    fn factor(g: &DMatrix<f64>) -> Option<GramFactor> {
        for sign in [1.0, -1.0] {
            if let Some(ch) = Cholesky::new(g * sign) {
                let d = ch.l_dirty().diagonal();
                let (lo, hi) = (d.min(), d.max());
                if lo > 0.0 && (lo * lo) / (hi * hi) > PIVOT_RATIO_TOL {
                    return Some(GramFactor::Cholesky(ch, sign));
                }
                return None;
            }
        }
        let lu = g.clone().lu();
        let u = lu.u();
        let d = u.diagonal().abs();
        let (lo, hi) = (d.min(), d.max());
        if hi == 0.0 || lo / hi <= PIVOT_RATIO_TOL {
            return None;
        }
        Some(GramFactor::Lu(lu))
    }

    fn raw_solve(&self, v: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.factor {
            GramFactor::Cholesky(ch, sign) => Some(ch.solve(v) * *sign),
            GramFactor::Lu(lu) => lu.solve(v),
        }
    }
}

impl ShiftedGramSolver for DenseGramSolver {
    fn shift(&self) -> f64 {
        self.xi
    }

    fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(v, self.g.nrows())?;
        let vn = v.norm();
        if vn == 0.0 {
            return Ok(DVector::zeros(v.len()));
        }
        let mut x = self.raw_solve(v).ok_or(GmfError::SingularShift { xi: self.xi })?;
        let mut res = (v - &self.g * &x).norm();
        // Iterative refinement; two rounds are plenty for the conditions we accept.
        for _ in 0..2 {
            if res <= 1e-2 * SOLVE_RESIDUAL_TOL * vn {
                break;
            }
            let r = v - &self.g * &x;
            let dx = self.raw_solve(&r).ok_or(GmfError::SingularShift { xi: self.xi })?;
            let cand = &x + dx;
            let cres = (v - &self.g * &cand).norm();
            if cres < res {
                x = cand;
                res = cres;
            }
        }
        if !(res <= SOLVE_RESIDUAL_TOL * vn) {
            return Err(GmfError::SingularShift { xi: self.xi });
        }
        Ok(x)
    }
}

/// Conjugate gradients on `±(AᵀA − ξI)`.
pub struct CgGramSolver<'a, O: LinearOperator + ?Sized> {
    op: &'a O,
    xi: f64,
    sign: f64,
    max_iter: usize,
}

impl<'a, O: LinearOperator + ?Sized> CgGramSolver<'a, O> {
    pub fn new(op: &'a O, xi: f64) -> Result<Self> {
        if !xi.is_finite() {
            return Err(GmfError::InvalidArgument(format!("shift must be finite, got {xi}")));
        }
        let sign = if xi <= 0.0 {
            1.0
        } else {
            // Negative definite only beyond the top of the spectrum.
            let top = op.norm_estimate();
            if xi > 1.01 * top * top {
                -1.0
            } else {
                return Err(GmfError::SingularShift { xi });
            }
        };
        Ok(CgGramSolver { op, xi, sign, max_iter: 20 * op.ncols().max(10) })
    }

    fn apply_shifted(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let mut w = self.op.apply_gram(v)?;
        w.axpy(-self.xi, v, 1.0);
        Ok(w * self.sign)
    }
}

impl<O: LinearOperator + ?Sized> ShiftedGramSolver for CgGramSolver<'_, O> {
    fn shift(&self) -> f64 {
        self.xi
    }

    fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(v, self.op.ncols())?;
        let vn = v.norm();
        if vn == 0.0 {
            return Ok(DVector::zeros(v.len()));
        }
        let rhs = v * self.sign;
        let mut x = DVector::zeros(v.len());
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut rr = r.dot(&r);
        let target = 1e-2 * SOLVE_RESIDUAL_TOL * vn;
        let mut it = 0;
        while it < self.max_iter && rr.sqrt() > target {
            let ap = self.apply_shifted(&p)?;
            let pap = p.dot(&ap);
            if !(pap > 0.0) {
                return Err(GmfError::SingularShift { xi: self.xi });
            }
            let alpha = rr / pap;
            x.axpy(alpha, &p, 1.0);
            r.axpy(-alpha, &ap, 1.0);
            let rr_new = r.dot(&r);
            p = &r + &p * (rr_new / rr);
            rr = rr_new;
            it += 1;
        }
        // True residual, not the recursively updated one.
        let res = (&rhs - self.apply_shifted(&x)?).norm();
        if res > SOLVE_RESIDUAL_TOL * vn {
            return Err(GmfError::NoConvergence { residual: res / vn, iterations: it });
        }
        Ok(x)
    }
}

/// Deterministic 64-bit stream derivation from an experiment seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal vector from a seed.
pub fn random_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = rng_from_seed(seed);
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with diag(R) ≥ 0.
pub fn haar_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let z = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Chebyshev2,
    Logspace,
    Explicit,
}

/// Prescribed singular values, stored in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularProfile {
    pub kind: ProfileKind,
    pub values: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl SingularProfile {
    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(GmfError::InvalidArgument("singular values must be finite and nonnegative".into()));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(GmfError::InvalidArgument("singular values must be descending".into()));
        }
        let lo = values.last().copied().unwrap_or(0.0);
        let hi = values.first().copied().unwrap_or(0.0);
        Ok(SingularProfile { kind: ProfileKind::Explicit, values, lo, hi })
    }

    pub fn sigma_max(&self) -> f64 {
        self.hi
    }

    pub fn sigma_min(&self) -> f64 {
        self.lo
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Singular values on `[lo, hi]`, descending. `chebyshev2` maps
/// `cos(jπ/(count−1))` affinely; `logspace` is geometric.
pub fn singular_profile(kind: ProfileKind, count: usize, lo: f64, hi: f64) -> Result<SingularProfile> {
    if count == 0 {
        return Err(GmfError::InvalidArgument("profile needs at least one value".into()));
    }
    let bad = !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < 0.0 || (kind == ProfileKind::Logspace && lo <= 0.0);
    if bad {
        return Err(GmfError::InvalidInterval { lo, hi });
    }
    let values: Vec<f64> = match kind {
        ProfileKind::Chebyshev2 => (0..count)
            .map(|j| {
                if count == 1 {
                    return hi;
                }
                let x = (j as f64 * std::f64::consts::PI / (count - 1) as f64).cos();
                lo + (hi - lo) * (1.0 + x) / 2.0
            })
            .collect(),
        ProfileKind::Logspace => {
            let (a, b) = (hi.ln(), lo.ln());
            (0..count)
                .map(|j| {
                    if count == 1 {
                        return hi;
                    }
                    let t = j as f64 / (count - 1) as f64;
                    (a + (b - a) * t).exp()
                })
                .collect()
        }
        ProfileKind::Explicit => {
            return Err(GmfError::InvalidArgument("explicit profiles take a value list".into()));
        }
    };
    // Pin the endpoints exactly.
    let mut values = values;
    values[0] = hi;
    if count > 1 {
        values[count - 1] = lo;
    }
    Ok(SingularProfile { kind, values, lo, hi })
}

/// `A = U Σ Vᵀ` with Haar `U`, `V` drawn from streams derived from `seed`.
pub fn synthesize_test_matrix(m: usize, n: usize, profile: &SingularProfile, seed: u64) -> Result<DenseOperator> {
    let p = m.min(n);
    if profile.len() != p {
        return Err(GmfError::DimensionMismatch { expected: p, got: profile.len() });
    }
    let u = haar_orthogonal(m, derive_seed(seed, 1));
    let v = haar_orthogonal(n, derive_seed(seed, 2));
    let mut us = u.columns(0, p).into_owned();
    for (j, s) in profile.values.iter().enumerate() {
        us.column_mut(j).scale_mut(*s);
    }
    Ok(DenseOperator::new(us * v.columns(0, p).transpose()))
}

/// Reads a dense matrix: first line "m n", then m rows of n numbers.
pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    parse_matrix(&text, &path.display().to_string())
}

pub fn parse_matrix(text: &str, origin: &str) -> Result<DMatrix<f64>> {
    let perr = |line: usize, msg: String| GmfError::Parse { path: origin.to_string(), line, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty matrix file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| perr(hl + 1, format!("bad header: {e}")))?;
    if dims.len() != 2 {
        return Err(perr(hl + 1, "header must be \"m n\"".into()));
    }
    let (m, n) = (dims[0], dims[1]);
    let mut data = Vec::with_capacity(m * n);
    let mut rows = 0;
    for (ln, line) in lines {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| perr(ln + 1, format!("bad number: {e}")))?;
        if row.len() != n {
            return Err(perr(ln + 1, format!("expected {n} entries, found {}", row.len())));
        }
        data.extend(row);
        rows += 1;
    }
    if rows != m {
        return Err(perr(0, format!("expected {m} rows, found {rows}")));
    }
    Ok(DMatrix::from_row_slice(m, n, &data))
}

/// Reads whitespace-separated numbers as a vector.
pub fn load_vector(path: &Path) -> Result<DVector<f64>> {
    let text = fs::read_to_string(path)?;
    let origin = path.display().to_string();
    let mut vals = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        for tok in line.split_whitespace() {
            let v = tok.parse::<f64>().map_err(|e| GmfError::Parse {
                path: origin.clone(),
                line: ln + 1,
                msg: format!("bad number `{tok}`: {e}"),
            })?;
            vals.push(v);
        }
    }
    if vals.is_empty() {
        return Err(GmfError::Parse { path: origin, line: 0, msg: "empty vector file".into() });
    }
    Ok(DVector::from_vec(vals))
}

pub fn write_matrix(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let mut s = format!("{} {}\n", a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{:e}", a[(i, j)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}
