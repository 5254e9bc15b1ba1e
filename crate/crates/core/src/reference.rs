//! Dense SVD ground truth for `f◇(A)` and `f◇(A)·b`.

use nalgebra::{DMatrix, DVector};

use crate::error::{GmfError, Result};
use crate::functions::ScalarFunction;

/// Singular values at or below `RANK_TOL · σ₁` count as zero.
pub const RANK_TOL: f64 = 1e-13;

/// Compact SVD `A = U_r Σ_r V_rᵀ`, singular values descending.
#[derive(Debug, Clone)]
pub struct CompactSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl CompactSvd {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return CompactSvd { u: DMatrix::zeros(m, 0), sigma: DVector::zeros(0), v: DMatrix::zeros(n, 0) };
        }
        let svd = a.clone().svd(true, true);
        let s = svd.singular_values;
        let u = svd.u.expect("left vectors requested");
        let vt = svd.v_t.expect("right vectors requested");
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
        let smax = order.first().map(|&i| s[i]).unwrap_or(0.0);
        let keep: Vec<usize> = order.into_iter().filter(|&i| s[i] > RANK_TOL * smax && s[i] > 0.0).collect();
        let r = keep.len();
        let mut uu = DMatrix::zeros(m, r);
        let mut vv = DMatrix::zeros(n, r);
        let mut ss = DVector::zeros(r);
        for (c, &i) in keep.iter().enumerate() {
            uu.set_column(c, &u.column(i));
            vv.set_column(c, &vt.row(i).transpose());
            ss[c] = s[i];
        }
        CompactSvd { u: uu, sigma: ss, v: vv }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    fn f_sigma(&self, f: &ScalarFunction) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.rank());
        for (o, s) in out.iter_mut().zip(self.sigma.iter()) {
            *o = f.try_eval(*s)?;
        }
        Ok(out)
    }

    /// `U_r f(Σ_r) V_rᵀ`.
    pub fn apply_function(&self, f: &ScalarFunction) -> Result<DMatrix<f64>> {
        let fs = self.f_sigma(f)?;
        let mut uf = self.u.clone();
        for (j, v) in fs.iter().enumerate() {
            uf.column_mut(j).scale_mut(*v);
        }
        Ok(uf * self.v.transpose())
    }

    /// `U_r f(Σ_r) V_rᵀ b`.
    pub fn apply_function_to(&self, f: &ScalarFunction, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.v.nrows() {
            return Err(GmfError::DimensionMismatch { expected: self.v.nrows(), got: b.len() });
        }
        let fs = self.f_sigma(f)?;
        let c = self.v.tr_mul(b).component_mul(&fs);
        Ok(&self.u * c)
    }

    /// Moore-Penrose pseudo-inverse `V_r Σ_r⁻¹ U_rᵀ`.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let mut vs = self.v.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            vs.column_mut(j).scale_mut(1.0 / s);
        }
        vs * self.u.transpose()
    }
}

pub fn gmf_dense(f: &ScalarFunction, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    CompactSvd::new(a).apply_function(f)
}

pub fn gmf_apply_reference(f: &ScalarFunction, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    CompactSvd::new(a).apply_function_to(f, b)
}

#[derive(Debug, Clone)]
pub struct IdentityCheck {
    pub name: &'static str,
    /// `None` when the identity does not apply to this (f, A) pair.
    pub rel_error: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub tol: f64,
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violated(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }
}

fn rel_diff(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let scale = x.norm().max(y.norm());
    if scale == 0.0 {
        0.0
    } else {
        (x - y).norm() / scale
    }
}

/// Standard matrix function of a symmetric positive semidefinite matrix, with
/// eigenvalues at noise level mapped to `at_zero`.
fn spd_function(s: &DMatrix<f64>, g: impl Fn(f64) -> f64, at_zero: Option<f64>, zero_tol: f64) -> Option<DMatrix<f64>> {
    let eig = s.clone().symmetric_eigen();
    let mut vals = DVector::zeros(eig.eigenvalues.len());
    for (o, &l) in vals.iter_mut().zip(eig.eigenvalues.iter()) {
        *o = if l <= zero_tol { at_zero? } else { g(l) };
    }
    let mut q = eig.eigenvectors.clone();
    for (j, v) in vals.iter().enumerate() {
        q.column_mut(j).scale_mut(*v);
    }
    Some(q * eig.eigenvectors.transpose())
}

/// Verifies the structural identities of generalized matrix functions on a
/// small dense `A`, each to relative accuracy `1e−10`.
pub fn check_identities(f: &ScalarFunction, a: &DMatrix<f64>) -> Result<IdentityReport> {
    let tol = 1e-10;
    let svd = CompactSvd::new(a);
    let s1 = svd.sigma.get(0).copied().unwrap_or(0.0);
    let mut checks = Vec::new();
    let mut push = |name, e: Option<f64>| {
        let passed = e.map_or(true, |e| e <= tol);
        checks.push(IdentityCheck { name, rel_error: e, passed });
    };

    let ata = a.tr_mul(a);
    let aat = a * a.transpose();

    // Odd polynomial p(z) = z q(z²), q(w) = 1 + w/2 − w²/4, scaled so σ₁ = 1.
    let c = if s1 > 0.0 { 1.0 / s1 } else { 1.0 };
    let p = ScalarFunction::new("odd_poly", move |z| {
        let w = (c * z) * (c * z);
        z * (1.0 + 0.5 * w - 0.25 * w * w)
    }, Some(1.0));
    let q_of = |s: &DMatrix<f64>| {
        let w = s * (c * c);
        let id = DMatrix::identity(s.nrows(), s.ncols());
        &id + &w * 0.5 - &w * &w * 0.25
    };
    let pa = svd.apply_function(&p)?;
    let left = q_of(&aat) * a;
    let right = a * q_of(&ata);
    push("odd_polynomial_left", Some(rel_diff(&pa, &left)));
    push("odd_polynomial_right", Some(rel_diff(&pa, &right)));

    // Odd numerator over even denominator: z/(z²+c²) ◇ A = A (AᵀA + c²I)⁻¹.
    let shift = if s1 > 0.0 { s1 * s1 } else { 1.0 };
    let r = ScalarFunction::new("odd_rational", move |z| z / (z * z + shift), Some(1.0 / shift));
    let ra = svd.apply_function(&r)?;
    let mut sh = ata.clone();
    for i in 0..sh.nrows() {
        sh[(i, i)] += shift;
    }
    let rhs = sh.lu().try_inverse().map(|inv| a * inv);
    push("odd_rational", rhs.map(|m| rel_diff(&ra, &m)));

    let fa = svd.apply_function(f)?;

    // f◇(A) = A g(AᵀA) = g(AAᵀ) A, with g(z) = f(√z)/√z.
    let smin = svd.sigma.iter().copied().fold(f64::INFINITY, f64::min);
    let full_col_rank = svd.rank() == a.ncols() && smin > 1e-6 * s1;
    let full_row_rank = svd.rank() == a.nrows() && smin > 1e-6 * s1;
    let zero_tol = 1e-12 * s1 * s1;
    let g = |z: f64| f.eval_g(z).unwrap_or(f64::NAN);
    let g_right = if f.zero_limit_flag() || full_col_rank {
        spd_function(&ata, g, f.zero_limit(), zero_tol).map(|gm| rel_diff(&fa, &(a * gm)))
    } else {
        None
    };
    push("companion_right", g_right);
    let g_left = if f.zero_limit_flag() || full_row_rank {
        spd_function(&aat, g, f.zero_limit(), zero_tol).map(|gm| rel_diff(&fa, &(gm * a)))
    } else {
        None
    };
    push("companion_left", g_left);

    // f◇(A) = (A⁺)ᵀ f◇(Aᵀ) A.
    let at = a.transpose();
    let fat = gmf_dense(f, &at)?;
    let pinv_t = svd.pseudo_inverse().transpose();
    push("pseudo_inverse_transpose", Some(rel_diff(&fa, &(pinv_t * &fat * a))));

    // Aᵀ f◇(A) = f◇(Aᵀ) A.
    push("transpose_commutation", Some(rel_diff(&(at * &fa), &(fat * a))));

    Ok(IdentityReport { tol, checks })
}
