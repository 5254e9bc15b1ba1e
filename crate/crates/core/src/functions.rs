//! Scalar functions on the positive reals.
//!
//! Every function is implicitly extended as an odd function; negative
//! arguments are never evaluated.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{GmfError, Result};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type ComplexFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

#[derive(Clone)]
pub struct ScalarFunction {
    name: String,
    f: RealFn,
    g: Option<RealFn>,
    /// `lim_{z→0} f(z)/z`, when finite.
    zero_limit: Option<f64>,
    complex: Option<ComplexFn>,
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFunction")
            .field("name", &self.name)
            .field("zero_limit", &self.zero_limit)
            .field("complex", &self.complex.is_some())
            .finish()
    }
}

/// Names accepted by [`builtin`]. `odd_monomial` takes a suffix, as in `odd_monomial(3)`.
pub const BUILTIN_NAMES: &[&str] = &[
    "sqrt",
    "inv_quarter",
    "sqrt_log",
    "sinh",
    "sin",
    "z_log_z",
    "sqrt_log1p_sqrt",
    "identity",
    "odd_monomial(l)",
];

impl ScalarFunction {
    /// A custom function without companion shortcuts. `zero_limit` is the
    /// value of `lim f(z)/z` at 0 when it is finite.
    pub fn new<F>(name: impl Into<String>, f: F, zero_limit: Option<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ScalarFunction { name: name.into(), f: Arc::new(f), g: None, zero_limit, complex: None }
    }

    pub fn with_complex<C>(mut self, c: C) -> Self
    where
        C: Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    {
        self.complex = Some(Arc::new(c));
        self
    }

    fn with_g<G>(mut self, g: G) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.g = Some(Arc::new(g));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, z: f64) -> f64 {
        (self.f)(z)
    }

    /// Evaluates `f`, failing on non-finite output.
    pub fn try_eval(&self, z: f64) -> Result<f64> {
        let v = (self.f)(z);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(GmfError::FunctionUndefined { name: self.name.clone(), z })
        }
    }

    /// Whether `f(z)/z` has a finite limit at 0, so that the companion is
    /// defined there.
    pub fn zero_limit_flag(&self) -> bool {
        self.zero_limit.is_some()
    }

    pub fn zero_limit(&self) -> Option<f64> {
        self.zero_limit
    }

    /// Principal-branch evaluator on the complex plane, when one is known.
    pub fn complex_eval(&self) -> Option<&(dyn Fn(Complex64) -> Complex64 + Send + Sync)> {
        self.complex.as_deref()
    }

    /// `g(z) = f(√z)/√z`.
    pub fn eval_g(&self, z: f64) -> Result<f64> {
        if z == 0.0 {
            return self.zero_limit.ok_or(GmfError::FunctionUndefined { name: format!("g[{}]", self.name), z });
        }
        let v = match &self.g {
            Some(g) => g(z),
            None => {
                let s = z.sqrt();
                (self.f)(s) / s
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(GmfError::FunctionUndefined { name: format!("g[{}]", self.name), z })
        }
    }
}

/// The companion `g(z) = f(√z)/√z` as a function in its own right.
pub fn companion_g(f: &ScalarFunction) -> ScalarFunction {
    let inner = f.clone();
    let at_zero = f.zero_limit;
    let g = ScalarFunction::new(
        format!("g[{}]", f.name),
        move |z| if z == 0.0 { at_zero.unwrap_or(f64::NAN) } else { inner.eval_g(z).unwrap_or(f64::NAN) },
        None,
    );
    match f.complex.clone() {
        Some(c) => g.with_complex(move |z| {
            let s = z.sqrt();
            c(s) / s
        }),
        None => g,
    }
}

/// Looks up a built-in function by name.
pub fn builtin(name: &str) -> Result<ScalarFunction> {
    let name = name.trim();
    let f = match name {
        "sqrt" => ScalarFunction::new("sqrt", f64::sqrt, None)
            .with_g(|z| z.powf(-0.25))
            .with_complex(|z| z.sqrt()),
        "inv_quarter" => ScalarFunction::new("inv_quarter", |z| z.powf(-0.25), None)
            .with_g(|z| z.powf(-0.625))
            .with_complex(|z| z.powf(-0.25)),
        "sqrt_log" => ScalarFunction::new("sqrt_log", |z| z.sqrt() * z.ln(), None)
            .with_g(|z| 0.5 * z.ln() * z.powf(-0.25))
            .with_complex(|z| z.sqrt() * z.ln()),
        "sinh" => ScalarFunction::new("sinh", f64::sinh, Some(1.0)).with_complex(|z| z.sinh()),
        "sin" => ScalarFunction::new("sin", f64::sin, Some(1.0)).with_complex(|z| z.sin()),
        "z_log_z" => ScalarFunction::new("z_log_z", |z| z * z.ln(), Some(0.0))
            .with_g(|z| 0.5 * z.ln())
            .with_complex(|z| z * z.ln()),
        "sqrt_log1p_sqrt" => ScalarFunction::new("sqrt_log1p_sqrt", |z| z.sqrt() * z.sqrt().ln_1p(), Some(1.0))
            .with_g(|z| {
                let t = z.powf(0.25);
                t.ln_1p() / t
            })
            .with_complex(|z| z.sqrt() * (z.sqrt() + 1.0).ln()),
        "identity" => ScalarFunction::new("identity", |z| z, Some(1.0)).with_g(|_| 1.0).with_complex(|z| z),
        other => {
            let deg = parse_monomial(other).ok_or_else(|| GmfError::UnknownFunction(other.to_string()))?;
            return Ok(odd_monomial(deg));
        }
    };
    Ok(f)
}

fn parse_monomial(name: &str) -> Option<u32> {
    let rest = name.strip_prefix("odd_monomial")?;
    let rest = rest.trim_start_matches(['(', '_', ':']).trim_end_matches(')');
    rest.parse::<u32>().ok().filter(|l| *l >= 1)
}

/// `f(z) = z^{2ℓ−1}`.
pub fn odd_monomial(l: u32) -> ScalarFunction {
    assert!(l >= 1, "odd monomial index starts at 1");
    let d = 2 * l as i32 - 1;
    let limit = if l == 1 { 1.0 } else { 0.0 };
    ScalarFunction::new(format!("odd_monomial({l})"), move |z| z.powi(d), Some(limit))
        .with_g(move |z| z.powi(l as i32 - 1))
        .with_complex(move |z| z.powi(d))
}
