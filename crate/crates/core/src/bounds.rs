//! A-priori error bounds: the polynomial rate from Bernstein ellipses, the
//! shift-and-invert rate for a single repeated negative pole, and a discrete
//! least-squares stand-in for the best rational approximation error.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{GmfError, Result};
use crate::functions::ScalarFunction;
use crate::poles::{Pole, PoleSequence};

pub const ELLIPSE_SAMPLES: usize = 4096;
pub const RHO_GRID_SIZE: usize = 40;
pub const LS_GRID_SIZE: usize = 2000;

/// Image of the Bernstein ellipse `E_ρ` under the affine map `[−1, 1] → [lo, hi]`.
#[derive(Debug, Clone, Copy)]
pub struct EllipseSampler {
    pub rho: f64,
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
}

impl EllipseSampler {
    pub fn new(rho: f64, lo: f64, hi: f64, samples: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(GmfError::InvalidInterval { lo, hi });
        }
        if !(rho > 1.0) || samples < 4 {
            return Err(GmfError::InvalidArgument(format!("ellipse needs rho > 1 and at least 4 samples, got rho = {rho}")));
        }
        Ok(EllipseSampler { rho, lo, hi, samples })
    }

    pub fn foci(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn semi_axes(&self) -> (f64, f64) {
        let h = 0.5 * (self.hi - self.lo);
        (h * 0.5 * (self.rho + 1.0 / self.rho), h * 0.5 * (self.rho - 1.0 / self.rho))
    }

    pub fn points(&self) -> Vec<Complex64> {
        let c = 0.5 * (self.hi + self.lo);
        let h = 0.5 * (self.hi - self.lo);
        (0..self.samples)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / self.samples as f64;
                let u = Complex64::from_polar(self.rho, t);
                c + h * 0.5 * (u + 1.0 / u)
            })
            .collect()
    }
}

/// Per-iteration bound values (`values[k−1]` bounds the error at step `k`) and
/// the constants that went into them.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCurve {
    pub label: String,
    pub values: Vec<f64>,
    pub constants: BTreeMap<String, f64>,
}

impl BoundCurve {
    pub fn value(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.values.get(i).copied())
    }

    pub fn points(&self) -> Vec<(usize, f64)> {
        self.values.iter().enumerate().map(|(i, v)| (i + 1, *v)).collect()
    }
}

/// `C = M₁ + M₂ + (N₁ + N₂)/a` with `M₁ = max|f₁(√w)|`, `M₂ = max|f₂(−√w)|`,
/// `N₁ = max|f₁(√w)/√w|`, `N₂ = max|f₂(−√w)/√w|` over `w` on the ellipse with
/// foci `a²`, `b²`. Diverging samples give `+∞`.
pub fn chui_hasson_constant(
    f1: &dyn Fn(Complex64) -> Complex64,
    f2: &dyn Fn(Complex64) -> Complex64,
    a: f64,
    b: f64,
    rho: f64,
    samples: usize,
) -> Result<f64> {
    Ok(chui_hasson_parts(f1, f2, a, b, rho, samples)?.total)
}

#[derive(Debug, Clone, Copy)]
pub struct ChuiHassonParts {
    pub m1: f64,
    pub m2: f64,
    pub n1: f64,
    pub n2: f64,
    pub total: f64,
}

pub fn chui_hasson_parts(
    f1: &dyn Fn(Complex64) -> Complex64,
    f2: &dyn Fn(Complex64) -> Complex64,
    a: f64,
    b: f64,
    rho: f64,
    samples: usize,
) -> Result<ChuiHassonParts> {
    if !(a > 0.0 && a < b) {
        return Err(GmfError::InvalidInterval { lo: a, hi: b });
    }
    let rho_max = (b + a) / (b - a);
    if rho > rho_max * (1.0 + 1e-12) {
        return Err(GmfError::InvalidArgument(format!("rho = {rho} exceeds the admissible {rho_max}")));
    }
    let ell = EllipseSampler::new(rho, a * a, b * b, samples)?;
    let (mut m1, mut m2, mut n1, mut n2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let upd = |acc: &mut f64, v: f64| {
        *acc = if v.is_finite() { acc.max(v) } else { f64::INFINITY };
    };
    for w in ell.points() {
        let s = w.sqrt();
        let v1 = f1(s);
        let v2 = f2(-s);
        let sn = s.norm();
        upd(&mut m1, v1.norm());
        upd(&mut m2, v2.norm());
        upd(&mut n1, if sn > 0.0 { v1.norm() / sn } else { f64::INFINITY });
        upd(&mut n2, if sn > 0.0 { v2.norm() / sn } else { f64::INFINITY });
    }
    let total = m1 + m2 + (n1 + n2) / a;
    Ok(ChuiHassonParts { m1, m2, n1, n2, total })
}

/// Constant for the odd extension of `f`: `f₁` is the principal-branch
/// continuation and `f₂(z) = −f₁(−z)`.
pub fn odd_extension_constant(f: &ScalarFunction, a: f64, b: f64, rho: f64, samples: usize) -> Result<ChuiHassonParts> {
    let c = f
        .complex_eval()
        .ok_or_else(|| GmfError::ConstantUnavailable(format!("no complex evaluator for `{}`", f.name())))?;
    let f2 = |z: Complex64| -c(-z);
    chui_hasson_parts(&|z| c(z), &f2, a, b, rho, samples)
}

/// `RHO_GRID_SIZE` log-spaced values in `(1, ρ_max]`.
pub fn rho_grid(sigma_n: f64, sigma_1: f64, size: usize) -> Result<Vec<f64>> {
    if !(sigma_n > 0.0 && sigma_n < sigma_1) {
        return Err(GmfError::InvalidInterval { lo: sigma_n, hi: sigma_1 });
    }
    if size == 0 {
        return Err(GmfError::InvalidArgument("empty rho grid".into()));
    }
    let lmax = ((sigma_1 + sigma_n) / (sigma_1 - sigma_n)).ln();
    Ok((1..=size).map(|i| (lmax * i as f64 / size as f64).exp()).collect())
}

/// Polynomial-method bound `2C‖b‖ ρ/(ρ−1) ρ^{−k}`, minimized over `rho_grid`.
/// Without the constant the curve is the bare rate `ρ_max^{−k}`.
pub fn polynomial_bound_curve(
    f: &ScalarFunction,
    sigma_n: f64,
    sigma_1: f64,
    b_norm: f64,
    k_max: usize,
    rho_grid: &[f64],
    with_constant: bool,
) -> Result<BoundCurve> {
    if rho_grid.is_empty() {
        return Err(GmfError::InvalidArgument("empty rho grid".into()));
    }
    if !(sigma_n > 0.0 && sigma_n < sigma_1) {
        return Err(GmfError::InvalidInterval { lo: sigma_n, hi: sigma_1 });
    }
    let rho_max = rho_grid.iter().cloned().fold(f64::MIN, f64::max);
    let mut constants = BTreeMap::new();
    constants.insert("rho_max".to_string(), rho_max);
    if !with_constant {
        let values = (1..=k_max).map(|k| rho_max.powi(-(k as i32))).collect();
        return Ok(BoundCurve { label: "polynomial_rate".into(), values, constants });
    }
    let cs: Vec<ChuiHassonParts> = rho_grid
        .iter()
        .map(|&r| odd_extension_constant(f, sigma_n, sigma_1, r, ELLIPSE_SAMPLES))
        .collect::<Result<_>>()?;
    if cs.iter().all(|c| !c.total.is_finite()) {
        return Err(GmfError::ConstantUnavailable(format!("`{}` diverges on every sampled ellipse", f.name())));
    }
    let mut values = Vec::with_capacity(k_max);
    let mut best_rho_at_end = f64::NAN;
    for k in 1..=k_max {
        let mut best = f64::INFINITY;
        for (r, c) in rho_grid.iter().zip(&cs) {
            let v = 2.0 * c.total * b_norm * r / (r - 1.0) * r.powi(-(k as i32));
            if v < best {
                best = v;
                best_rho_at_end = *r;
            }
        }
        values.push(best);
    }
    constants.insert("rho_at_k_max".into(), best_rho_at_end);
    if let Some((_, c)) = rho_grid.iter().zip(&cs).find(|(r, _)| **r == best_rho_at_end) {
        constants.insert("C".into(), c.total);
        constants.insert("M1".into(), c.m1);
        constants.insert("M2".into(), c.m2);
        constants.insert("N1".into(), c.n1);
        constants.insert("N2".into(), c.n2);
    }
    Ok(BoundCurve { label: "polynomial".into(), values, constants })
}

fn check_si_args(sigma_min: f64, sigma_max: f64, xi: f64) -> Result<()> {
    if !(sigma_min > 0.0 && sigma_min <= sigma_max && sigma_max.is_finite()) {
        return Err(GmfError::InvalidInterval { lo: sigma_min, hi: sigma_max });
    }
    if !(xi < 0.0) || !xi.is_finite() {
        return Err(GmfError::InvalidArgument(format!("shift-and-invert pole must be negative and finite, got {xi}")));
    }
    Ok(())
}

/// The two candidate rates for a repeated pole `ξ < 0` on `[σ_min², σ_max²]`.
pub fn rho_branches(sigma_min: f64, sigma_max: f64, xi: f64) -> Result<(f64, f64)> {
    check_si_args(sigma_min, sigma_max, xi)?;
    let rmax = (sigma_max * sigma_max - xi).sqrt();
    let rmin = (sigma_min * sigma_min - xi).sqrt();
    let first = (rmax - rmin) / (rmax + rmin);
    let second = (sigma_max * rmin - sigma_min * rmax) / (sigma_max * rmin + sigma_min * rmax);
    Ok((first, second))
}

pub fn rho_of(sigma_min: f64, sigma_max: f64, xi: f64) -> Result<f64> {
    let (r1, r2) = rho_branches(sigma_min, sigma_max, xi)?;
    Ok(r1.max(r2.abs()))
}

/// `2M ρ^k / (1 − ρ)`.
pub fn si_style_bound(sigma_min: f64, sigma_max: f64, xi: f64, m: f64, k: usize) -> Result<f64> {
    if !(m >= 0.0) {
        return Err(GmfError::InvalidArgument(format!("M must be nonnegative, got {m}")));
    }
    let rho = rho_of(sigma_min, sigma_max, xi)?;
    Ok(2.0 * m * rho.powi(k as i32) / (1.0 - rho))
}

/// `2‖b‖ M √(σ_max/σ_min) exp(−2k √(σ_min/σ_max))`, valid at `ξ = −σ_min σ_max`.
pub fn si_closed_form(sigma_min: f64, sigma_max: f64, b_norm: f64, m: f64, k: usize) -> f64 {
    2.0 * b_norm * m * (sigma_max / sigma_min).sqrt() * (-2.0 * k as f64 * (sigma_min / sigma_max).sqrt()).exp()
}

/// `max |h|` on `[0, (−ξ)^{−1}]` for `h(z) = g(1/z + ξ)`, `g(w) = f(√w)/√w`,
/// sampled on a grid that is logarithmic towards `z = 0` (where `h(0) = g(∞)`)
/// and uniform elsewhere. Returns `+∞` when `g` is unbounded on the samples.
pub fn sample_h_max(f: &ScalarFunction, xi: f64, samples: usize) -> Result<f64> {
    if !(xi < 0.0) {
        return Err(GmfError::InvalidArgument(format!("shift-and-invert pole must be negative, got {xi}")));
    }
    let zmax = -1.0 / xi;
    let half = samples.max(4) / 2;
    let mut zs: Vec<f64> = (0..half).map(|i| zmax * 10f64.powf(-12.0 + 12.0 * i as f64 / half as f64)).collect();
    zs.extend((1..=half).map(|i| zmax * i as f64 / half as f64));
    let mut m = 0.0f64;
    for z in zs {
        // At z = zmax the argument is exactly w = 0.
        let w = if z == zmax { 0.0 } else { (1.0 / z + xi).max(0.0) };
        match f.eval_g(w) {
            Ok(v) => m = m.max(v.abs()),
            Err(_) => return Ok(f64::INFINITY),
        }
    }
    Ok(m)
}

/// Shift-and-invert bound curve `2‖b‖M ρ^k/(1−ρ)` for `k = 1..k_max`; at the
/// optimal pole the closed form is recorded alongside.
pub fn si_bound_curve(f: &ScalarFunction, sigma_min: f64, sigma_max: f64, xi: f64, b_norm: f64, k_max: usize) -> Result<BoundCurve> {
    let m = sample_h_max(f, xi, 4000)?;
    if !m.is_finite() {
        return Err(GmfError::ConstantUnavailable(format!("h is unbounded for `{}` at xi = {xi}", f.name())));
    }
    let rho = rho_of(sigma_min, sigma_max, xi)?;
    let values = (1..=k_max).map(|k| si_style_bound(sigma_min, sigma_max, xi, m, k).map(|v| b_norm * v)).collect::<Result<_>>()?;
    let mut constants = BTreeMap::new();
    constants.insert("M".into(), m);
    constants.insert("rho".into(), rho);
    constants.insert("xi".into(), xi);
    Ok(BoundCurve { label: "shift_invert".into(), values, constants })
}

/// Closed-form shift-and-invert curve at `ξ = −σ_min σ_max`.
pub fn si_closed_form_curve(f: &ScalarFunction, sigma_min: f64, sigma_max: f64, b_norm: f64, k_max: usize) -> Result<BoundCurve> {
    let xi = -sigma_min * sigma_max;
    let m = sample_h_max(f, xi, 4000)?;
    if !m.is_finite() {
        return Err(GmfError::ConstantUnavailable(format!("h is unbounded for `{}` at xi = {xi}", f.name())));
    }
    let values = (1..=k_max).map(|k| si_closed_form(sigma_min, sigma_max, b_norm, m, k)).collect();
    let mut constants = BTreeMap::new();
    constants.insert("M".into(), m);
    constants.insert("xi".into(), xi);
    constants.insert("rate".into(), -2.0 * (sigma_min / sigma_max).sqrt());
    Ok(BoundCurve { label: "shift_invert_closed_form".into(), values, constants })
}

/// Chebyshev points of the first kind on `[lo, hi]`.
pub fn chebyshev_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| 0.5 * (lo + hi) + 0.5 * (hi - lo) * (PI * (j as f64 + 0.5) / n as f64).cos()).collect()
}

/// Orthonormal basis of `{z s(z²)/q̃_{k−1}(z²) : deg s ≤ k−1}` on a grid,
/// grown one pole at a time by rational Arnoldi with the diagonal `diag(z²)`.
struct GridRationalBasis {
    w: Vec<f64>,
    q: Vec<DVector<f64>>,
}

impl GridRationalBasis {
    fn new(z: &[f64]) -> Self {
        let v = DVector::from_iterator(z.len(), z.iter().copied());
        let nrm = v.norm();
        GridRationalBasis { w: z.iter().map(|x| x * x).collect(), q: vec![v / nrm] }
    }

    fn extend(&mut self, pole: Pole) -> Result<()> {
        let last = self.q.last().expect("basis starts nonempty");
        let mut v = DVector::from_iterator(
            last.len(),
            last.iter().zip(&self.w).map(|(x, w)| match pole {
                Pole::Infinite => w * x,
                Pole::Finite(xi) => w * x / (w - xi),
            }),
        );
        for _ in 0..2 {
            for u in &self.q {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let nrm = v.norm();
        if !(nrm > 1e-14) || !nrm.is_finite() {
            return Err(GmfError::InvalidArgument("rational basis became degenerate on the grid".into()));
        }
        self.q.push(v / nrm);
        Ok(())
    }

    fn deviation(&self, fz: &DVector<f64>) -> f64 {
        let mut r = fz.clone();
        for _ in 0..2 {
            for u in &self.q {
                let c = u.dot(&r);
                r.axpy(-c, u, 1.0);
            }
        }
        r.amax()
    }
}

/// `2‖b‖ · max_z |f(z) − p(z)/q̃_{k−1}(z²)|` over Chebyshev points of
/// `[σ_n, σ_1]` for the discrete least-squares `p`. By oddness the symmetric
/// half of the grid carries the same residual.
pub fn quasi_optimal_rational_bound(
    f: &ScalarFunction,
    poles: &PoleSequence,
    sigma_n: f64,
    sigma_1: f64,
    b_norm: f64,
    k: usize,
    grid_size: usize,
) -> Result<f64> {
    Ok(quasi_optimal_rational_curve(f, poles, sigma_n, sigma_1, b_norm, k, grid_size)?.values[k - 1])
}

/// Curve version of [`quasi_optimal_rational_bound`], made nonincreasing by a
/// running minimum: the step-`k` space contains the step-`(k−1)` one.
pub fn quasi_optimal_rational_curve(
    f: &ScalarFunction,
    poles: &PoleSequence,
    sigma_n: f64,
    sigma_1: f64,
    b_norm: f64,
    k_max: usize,
    grid_size: usize,
) -> Result<BoundCurve> {
    if !(sigma_n > 0.0 && sigma_n <= sigma_1) {
        return Err(GmfError::InvalidInterval { lo: sigma_n, hi: sigma_1 });
    }
    if k_max == 0 || grid_size < 2 * k_max {
        return Err(GmfError::InvalidArgument(format!("grid of {grid_size} points cannot resolve k = {k_max}")));
    }
    let z = chebyshev_grid(sigma_n, sigma_1, grid_size);
    let fz = DVector::from_iterator(z.len(), z.iter().map(|&x| f.try_eval(x)).collect::<Result<Vec<_>>>()?);
    let mut basis = GridRationalBasis::new(&z);
    let mut values = Vec::with_capacity(k_max);
    let mut best = f64::INFINITY;
    for k in 1..=k_max {
        if k > 1 {
            // Once the grid resolves no further direction, the deviation is
            // already at rounding level.
            if basis.extend(poles.get(k - 2)).is_err() {
                values.push(best);
                continue;
            }
        }
        best = best.min(2.0 * b_norm * basis.deviation(&fz));
        values.push(best);
    }
    let mut constants = BTreeMap::new();
    constants.insert("grid_size".into(), grid_size as f64);
    Ok(BoundCurve { label: "quasi_optimal_rational".into(), values, constants })
}
