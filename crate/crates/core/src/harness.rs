//! Experiment driver: a JSON config names a test matrix, a function, a set of
//! Krylov curves, optional bound overlays and pairwise differences. Every
//! curve is written as a two-column `k value` trace next to a manifest.
//!
//! Errors are relative 2-norm errors against the SVD oracle. Bound overlays
//! are divided by `‖f◇(A)b‖` so that they share the scale of the errors,
//! except `polynomial_rate`, which is the bare `ρ^{−k}`.
//!
//! Pole inputs live on the `AᵀA` side: a finite pole is compared against
//! the squared singular values `[σ_min², σ_max²]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    polynomial_bound_curve, quasi_optimal_rational_curve, rho_grid, si_bound_curve, si_closed_form_curve, BoundCurve,
    LS_GRID_SIZE, RHO_GRID_SIZE,
};
use crate::error::{GmfError, Result};
use crate::functions::builtin;
use crate::operator::{
    derive_seed, load_matrix, load_vector, random_vector, singular_profile, synthesize_test_matrix, DenseOperator,
    LinearOperator, ProfileKind, SingularProfile,
};
use crate::poles::{extended_poles, load_user_poles, polynomial_poles, Pole, PoleKind, PoleSequence};
use crate::rectangular::{gmf_via_transpose, run_method, KrylovMethod};
use crate::reference::CompactSvd;
use crate::trace::{KrylovRun, RunOptions, StopReason};

/// Significant digits in trace files unless overridden by [`PRECISION_ENV`].
pub const DEFAULT_DIGITS: usize = 16;
pub const PRECISION_ENV: &str = "GMF_PRECISION";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub kind: ProfileKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

/// Either a synthetic `U Σ Vᵀ` matrix or a matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PoleSpec {
    Polynomial,
    Extended,
    /// Repeated pole; defaults to `−σ_min σ_max`.
    ShiftInvert {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xi: Option<f64>,
    },
    File {
        path: PathBuf,
    },
    List {
        poles: Vec<Pole>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMethod {
    Gk,
    RationalFull,
    RationalShort,
    TransposeTrick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub label: String,
    pub method: CurveMethod,
    /// Method run on `Aᵀ` by `transpose_trick`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<KrylovMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poles: Option<PoleSpec>,
    #[serde(default)]
    pub record_drift: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Bernstein-ellipse bound with its constant, minimized over ρ.
    Polynomial,
    /// Bare `ρ_max^{−k}`.
    PolynomialRate,
    /// Discrete least-squares rational approximation error; needs poles.
    QuasiOptimalRational,
    /// `2‖b‖M ρ^k/(1−ρ)` for a repeated negative pole.
    ShiftInvert,
    /// `2‖b‖M √(σ_max/σ_min) exp(−2k√(σ_min/σ_max))` at `ξ = −σ_min σ_max`.
    ShiftInvertClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub label: String,
    pub kind: BoundKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poles: Option<PoleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifferenceSpec {
    pub label: String,
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub matrix: MatrixSpec,
    /// Start vector file; Gaussian from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_file: Option<PathBuf>,
    pub function: String,
    pub k_max: usize,
    #[serde(default = "default_true")]
    pub reorth: bool,
    #[serde(default)]
    pub curves: Vec<CurveSpec>,
    #[serde(default)]
    pub bounds: Vec<BoundSpec>,
    #[serde(default)]
    pub differences: Vec<DifferenceSpec>,
    pub output_dir: PathBuf,
}

fn default_true() -> bool {
    true
}

fn valid_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.') && !s.starts_with('.')
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| GmfError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that does not need the matrix.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GmfError::Config(m));
        if self.k_max == 0 {
            return bad("k_max must be at least 1".into());
        }
        builtin(&self.function)?;
        let mx = &self.matrix;
        match (&mx.file, &mx.profile) {
            (Some(_), Some(_)) => return bad("matrix: give either `file` or `profile`, not both".into()),
            (None, None) => return bad("matrix: one of `file` or `profile` is required".into()),
            (None, Some(p)) => {
                let (m, n) = match (mx.m, mx.n) {
                    (Some(m), Some(n)) if m > 0 && n > 0 => (m, n),
                    _ => return bad("matrix: synthetic matrices need positive `m` and `n`".into()),
                };
                match p.kind {
                    ProfileKind::Explicit => match &p.values {
                        Some(v) if v.len() == m.min(n) => {}
                        Some(v) => return bad(format!("matrix.profile.values has {} entries, expected {}", v.len(), m.min(n))),
                        None => return bad("matrix.profile: explicit profiles need `values`".into()),
                    },
                    _ => match (p.lo, p.hi) {
                        (Some(lo), Some(hi)) if lo > 0.0 && lo <= hi && hi.is_finite() => {}
                        (Some(lo), Some(hi)) => return bad(format!("matrix.profile: interval [{lo}, {hi}] must satisfy 0 < lo <= hi")),
                        _ => return bad("matrix.profile: `lo` and `hi` are required".into()),
                    },
                }
            }
            (Some(_), None) => {
                if mx.m.is_some() || mx.n.is_some() {
                    return bad("matrix: `m`/`n` are taken from the file and must not be given".into());
                }
            }
        }
        let mut labels = BTreeSet::new();
        for c in &self.curves {
            if !valid_label(&c.label) {
                return bad(format!("curve label `{}` must be a nonempty file-name-safe token", c.label));
            }
            if !labels.insert(c.label.clone()) {
                return bad(format!("duplicate label `{}`", c.label));
            }
            let rational = match c.method {
                CurveMethod::RationalFull | CurveMethod::RationalShort => true,
                CurveMethod::TransposeTrick => {
                    matches!(c.inner, Some(KrylovMethod::RationalFull) | Some(KrylovMethod::RationalShort))
                }
                CurveMethod::Gk => false,
            };
            if rational && c.poles.is_none() {
                return bad(format!("curve `{}`: rational methods need `poles`", c.label));
            }
            if c.method != CurveMethod::TransposeTrick && c.inner.is_some() {
                return bad(format!("curve `{}`: `inner` only applies to transpose_trick", c.label));
            }
        }
        for b in &self.bounds {
            if !valid_label(&b.label) {
                return bad(format!("bound label `{}` must be a nonempty file-name-safe token", b.label));
            }
            if !labels.insert(b.label.clone()) {
                return bad(format!("duplicate label `{}`", b.label));
            }
            if b.kind == BoundKind::QuasiOptimalRational && b.poles.is_none() {
                return bad(format!("bound `{}`: quasi_optimal_rational needs `poles`", b.label));
            }
            if let Some(xi) = b.xi {
                if b.kind != BoundKind::ShiftInvert {
                    return bad(format!("bound `{}`: `xi` only applies to shift_invert", b.label));
                }
                if !(xi < 0.0) {
                    return bad(format!("bound `{}`: xi must be negative, got {xi}", b.label));
                }
            }
        }
        let curve_labels: BTreeSet<&str> = self.curves.iter().map(|c| c.label.as_str()).collect();
        for d in &self.differences {
            if !valid_label(&d.label) {
                return bad(format!("difference label `{}` must be a nonempty file-name-safe token", d.label));
            }
            if !labels.insert(d.label.clone()) {
                return bad(format!("duplicate label `{}`", d.label));
            }
            for side in [&d.a, &d.b] {
                if !curve_labels.contains(side.as_str()) {
                    return bad(format!("difference `{}` refers to unknown curve `{side}`", d.label));
                }
            }
        }
        Ok(())
    }
}

/// Loads a config file; relative paths inside it resolve against its directory.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, PathBuf)> {
    let text = fs::read_to_string(path)?;
    let cfg = ExperimentConfig::from_json(&text).map_err(|e| match e {
        GmfError::Config(m) => GmfError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// `v` in scientific notation with `digits` significant digits and an
/// exponent of at least two digits, e.g. `5.000000000000000e-01`.
pub fn format_sci(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), v);
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}

/// Digits from [`PRECISION_ENV`], clamped to `1..=17`.
pub fn output_digits() -> usize {
    std::env::var(PRECISION_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .map(|d| d.clamp(1, 17))
        .unwrap_or(DEFAULT_DIGITS)
}

pub fn render_dat(points: &[(usize, f64)], digits: usize) -> String {
    let mut out = String::new();
    for (k, v) in points {
        let _ = writeln!(out, "{k} {}", format_sci(*v, digits));
    }
    out
}

/// Writes `k value` lines with LF endings.
pub fn emit_dat(points: &[(usize, f64)], path: &Path) -> Result<()> {
    fs::write(path, render_dat(points, output_digits()))?;
    Ok(())
}

pub fn parse_dat(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let perr = |msg: &str| GmfError::Parse { path: "<dat>".into(), line: i + 1, msg: msg.into() };
        let mut it = line.split_whitespace();
        let k = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| perr("bad index"))?;
        let v = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| perr("bad value"))?;
        if it.next().is_some() {
            return Err(perr("trailing tokens"));
        }
        out.push((k, v));
    }
    Ok(out)
}

fn series(values: &[f64]) -> Vec<(usize, f64)> {
    values.iter().enumerate().map(|(i, v)| (i + 1, *v)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveSummary {
    pub label: String,
    pub iterations: usize,
    pub final_error: Option<f64>,
    /// Krylov dimension at which an invariant subspace was detected.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariant_at: Option<usize>,
    pub file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_file: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundSummary {
    pub label: String,
    pub file: String,
    pub constants: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DifferenceSummary {
    pub label: String,
    pub file: String,
    pub max_difference: f64,
}

/// Everything a run produced; serialized as the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub library_version: String,
    pub config: ExperimentConfig,
    pub m: usize,
    pub n: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub b_norm: f64,
    pub reference_norm: f64,
    pub curves: Vec<CurveSummary>,
    pub bounds: Vec<BoundSummary>,
    pub differences: Vec<DifferenceSummary>,
    #[serde(skip)]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub runs: BTreeMap<String, KrylovRun>,
    #[serde(skip)]
    pub bound_curves: BTreeMap<String, BoundCurve>,
}

/// The matrix, start vector and oracle of an experiment.
pub struct Problem {
    pub op: DenseOperator,
    pub b: DVector<f64>,
    pub svd: CompactSvd,
    pub reference: DVector<f64>,
}

impl Problem {
    pub fn sigma_max(&self) -> f64 {
        self.svd.sigma[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.svd.sigma[self.svd.sigma.len() - 1]
    }
}

pub fn build_problem(cfg: &ExperimentConfig, base: &Path) -> Result<Problem> {
    let f = builtin(&cfg.function)?;
    let op = match (&cfg.matrix.file, &cfg.matrix.profile) {
        (Some(file), _) => DenseOperator::new(load_matrix(&resolve(base, file))?),
        (None, Some(p)) => {
            let (m, n) = (cfg.matrix.m.unwrap_or(0), cfg.matrix.n.unwrap_or(0));
            let prof = match p.kind {
                ProfileKind::Explicit => SingularProfile::explicit(p.values.clone().unwrap_or_default())?,
                kind => singular_profile(kind, m.min(n), p.lo.unwrap_or(0.0), p.hi.unwrap_or(0.0))?,
            };
            synthesize_test_matrix(m, n, &prof, cfg.seed)?
        }
        (None, None) => return Err(GmfError::Config("matrix: one of `file` or `profile` is required".into())),
    };
    let b = match &cfg.b_file {
        Some(p) => load_vector(&resolve(base, p))?,
        None => random_vector(op.ncols(), derive_seed(cfg.seed, 3)),
    };
    if b.len() != op.ncols() {
        return Err(GmfError::DimensionMismatch { expected: op.ncols(), got: b.len() });
    }
    let svd = CompactSvd::new(op.matrix());
    if svd.rank() == 0 {
        return Err(GmfError::Config("matrix is zero".into()));
    }
    let reference = svd.apply_function_to(&f, &b)?;
    Ok(Problem { op, b, svd, reference })
}

/// Builds a pole sequence of length `k_max` and checks it against the
/// squared singular values.
pub fn resolve_poles(spec: &PoleSpec, base: &Path, k_max: usize, sigma_min: f64, sigma_max: f64) -> Result<PoleSequence> {
    let (lo2, hi2) = (sigma_min * sigma_min, sigma_max * sigma_max);
    let seq = match spec {
        PoleSpec::Polynomial => polynomial_poles(k_max),
        PoleSpec::Extended => extended_poles(k_max),
        PoleSpec::ShiftInvert { xi } => {
            let xi = xi.unwrap_or(-sigma_min * sigma_max);
            PoleSequence::new(vec![Pole::Finite(xi); k_max.max(1)], PoleKind::ShiftInvert)?
        }
        PoleSpec::File { path } => load_user_poles(&resolve(base, path), None)?,
        PoleSpec::List { poles } => PoleSequence::new(poles.clone(), PoleKind::Explicit)?,
    };
    seq.validate_against(lo2, hi2)?;
    Ok(seq)
}

fn curve_run(cfg: &ExperimentConfig, base: &Path, prob: &Problem, c: &CurveSpec) -> Result<KrylovRun> {
    let f = builtin(&cfg.function)?;
    let poles = c
        .poles
        .as_ref()
        .map(|p| resolve_poles(p, base, cfg.k_max, prob.sigma_min(), prob.sigma_max()))
        .transpose()?;
    let opts = RunOptions { reference: Some(&prob.reference), track_drift: c.record_drift };
    match c.method {
        CurveMethod::Gk => run_method(KrylovMethod::GolubKahan, &f, &prob.op, &prob.b, None, cfg.k_max, cfg.reorth, &opts),
        CurveMethod::RationalFull => {
            run_method(KrylovMethod::RationalFull, &f, &prob.op, &prob.b, poles.as_ref(), cfg.k_max, cfg.reorth, &opts)
        }
        CurveMethod::RationalShort => {
            run_method(KrylovMethod::RationalShort, &f, &prob.op, &prob.b, poles.as_ref(), cfg.k_max, cfg.reorth, &opts)
        }
        CurveMethod::TransposeTrick => gmf_via_transpose(
            &f,
            &prob.op as &dyn LinearOperator,
            &prob.b,
            c.inner.unwrap_or(KrylovMethod::GolubKahan),
            poles.as_ref(),
            cfg.k_max,
            cfg.reorth,
            &opts,
        ),
    }
}

fn bound_curve(cfg: &ExperimentConfig, base: &Path, prob: &Problem, b: &BoundSpec) -> Result<BoundCurve> {
    let f = builtin(&cfg.function)?;
    let (smin, smax) = (prob.sigma_min(), prob.sigma_max());
    let bn = prob.b.norm();
    let mut curve = match b.kind {
        BoundKind::Polynomial | BoundKind::PolynomialRate => {
            let grid = rho_grid(smin, smax, RHO_GRID_SIZE)?;
            polynomial_bound_curve(&f, smin, smax, bn, cfg.k_max, &grid, b.kind == BoundKind::Polynomial)?
        }
        BoundKind::QuasiOptimalRational => {
            let spec = b.poles.as_ref().ok_or_else(|| GmfError::Config(format!("bound `{}` needs poles", b.label)))?;
            let poles = resolve_poles(spec, base, cfg.k_max, smin, smax)?;
            quasi_optimal_rational_curve(&f, &poles, smin, smax, bn, cfg.k_max, LS_GRID_SIZE)?
        }
        BoundKind::ShiftInvert => si_bound_curve(&f, smin, smax, b.xi.unwrap_or(-smin * smax), bn, cfg.k_max)?,
        BoundKind::ShiftInvertClosedForm => si_closed_form_curve(&f, smin, smax, bn, cfg.k_max)?,
    };
    if b.kind != BoundKind::PolynomialRate {
        let scale = prob.reference.norm();
        if scale > 0.0 {
            for v in curve.values.iter_mut() {
                *v /= scale;
            }
        }
    }
    curve.label = b.label.clone();
    Ok(curve)
}

/// Which parts of a config to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Full,
    BoundsOnly,
}

/// Runs a config and writes its traces and manifest into the output directory.
pub fn run(cfg: &ExperimentConfig, base: &Path, mode: RunMode) -> Result<RunSummary> {
    cfg.validate()?;
    let prob = build_problem(cfg, base)?;
    let out_dir = resolve(base, &cfg.output_dir);
    fs::create_dir_all(&out_dir)?;
    let digits = output_digits();
    let write = |name: &str, pts: &[(usize, f64)]| -> Result<String> {
        fs::write(out_dir.join(name), render_dat(pts, digits))?;
        Ok(name.to_string())
    };

    let mut runs = BTreeMap::new();
    let mut curves = Vec::new();
    if mode == RunMode::Full {
        for c in &cfg.curves {
            let run = curve_run(cfg, base, &prob, c)?;
            let errs = run.errors.clone().unwrap_or_default();
            let file = write(&format!("{}.dat", c.label), &series(&errs))?;
            let drift_file = match (&run.drift, c.record_drift) {
                (Some(d), true) => Some(write(&format!("{}_drift.dat", c.label), &series(d))?),
                _ => None,
            };
            curves.push(CurveSummary {
                label: c.label.clone(),
                iterations: run.len(),
                final_error: errs.last().copied(),
                invariant_at: match run.stop {
                    StopReason::Invariant(k) => Some(k),
                    StopReason::Completed => None,
                },
                file,
                drift_file,
            });
            runs.insert(c.label.clone(), run);
        }
    }

    let mut bounds = Vec::new();
    let mut bound_curves = BTreeMap::new();
    for b in &cfg.bounds {
        let curve = bound_curve(cfg, base, &prob, b)?;
        let file = write(&format!("{}.dat", b.label), &curve.points())?;
        bounds.push(BoundSummary { label: b.label.clone(), file, constants: curve.constants.clone() });
        bound_curves.insert(b.label.clone(), curve);
    }

    let mut differences = Vec::new();
    if mode == RunMode::Full {
        let scale = prob.reference.norm().max(f64::MIN_POSITIVE);
        for d in &cfg.differences {
            let (ra, rb) = (&runs[&d.a], &runs[&d.b]);
            let diffs: Vec<f64> = ra
                .approximations
                .iter()
                .zip(&rb.approximations)
                .map(|(x, y)| (x - y).norm() / scale)
                .collect();
            let file = write(&format!("{}.dat", d.label), &series(&diffs))?;
            differences.push(DifferenceSummary {
                label: d.label.clone(),
                file,
                max_difference: diffs.iter().cloned().fold(0.0, f64::max),
            });
        }
    }

    let summary = RunSummary {
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        m: prob.op.nrows(),
        n: prob.op.ncols(),
        sigma_min: prob.sigma_min(),
        sigma_max: prob.sigma_max(),
        b_norm: prob.b.norm(),
        reference_norm: prob.reference.norm(),
        curves,
        bounds,
        differences,
        output_dir: out_dir.clone(),
        runs,
        bound_curves,
    };
    let mut manifest = serde_json::to_string_pretty(&summary)?;
    manifest.push('\n');
    fs::write(out_dir.join(MANIFEST_NAME), manifest)?;
    Ok(summary)
}

/// Loads and runs a config file.
pub fn run_file(path: &Path, mode: RunMode) -> Result<RunSummary> {
    let (cfg, base) = load_config(path)?;
    run(&cfg, &base, mode)
}

/// Least-squares slope of `ln e_k` against `k` over `k ∈ [k_lo, k_hi]`
/// (1-based, inclusive); nonpositive entries are skipped.
pub fn fitted_log_slope(errors: &[f64], k_lo: usize, k_hi: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = (k_lo..=k_hi.min(errors.len()))
        .filter_map(|k| {
            let e = errors[k - 1];
            (e > 0.0 && e.is_finite()).then(|| (k as f64, e.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_json(dir: &Path) -> String {
        format!(
            r#"{{
  "name": "t",
  "seed": 4,
  "matrix": {{"m": 30, "n": 30, "profile": {{"kind": "chebyshev2", "lo": 0.1, "hi": 10}}}},
  "function": "sqrt",
  "k_max": 12,
  "curves": [
    {{"label": "gk", "method": "gk", "record_drift": true}},
    {{"label": "si", "method": "rational_full", "poles": {{"kind": "shift_invert"}}}},
    {{"label": "si_short", "method": "rational_short", "poles": {{"kind": "shift_invert"}}}}
  ],
  "bounds": [{{"label": "rate", "kind": "polynomial_rate"}}],
  "differences": [{{"label": "short_vs_full", "a": "si_short", "b": "si"}}],
  "output_dir": "{}"
}}"#,
            dir.display()
        )
    }

    #[test]
    fn format_examples() {
        assert_eq!(format_sci(0.5, 16), "5.000000000000000e-01");
        assert_eq!(format_sci(1.25e-123, 3), "1.25e-123");
        assert_eq!(format_sci(-3.0e7, 2), "-3.0e+07");
        assert_eq!(format_sci(0.0, 4), "0.000e+00");
        assert_eq!(render_dat(&[], 16), "");
        assert_eq!(render_dat(&[(1, 0.5)], 16), "1 5.000000000000000e-01\n");
    }

    #[test]
    fn dat_round_trip() {
        let pts = vec![(1, 0.1), (2, 1.0 / 3.0), (3, 6.02e23), (7, 1e-300)];
        let back = parse_dat(&render_dat(&pts, 17)).unwrap();
        assert_eq!(back, pts);
    }

    #[test]
    fn validation_messages() {
        let dir = tempfile::tempdir().unwrap();
        let good = cfg_json(dir.path());
        assert!(ExperimentConfig::from_json(&good).is_ok());
        let cases = [
            (good.replace("\"k_max\": 12", "\"k_max\": 0"), "k_max"),
            (good.replace("\"sqrt\"", "\"cosh\""), "cosh"),
            (good.replace(", \"poles\": {\"kind\": \"shift_invert\"}}", "}"), "need `poles`"),
            (good.replace("\"a\": \"si_short\"", "\"a\": \"nope\""), "unknown curve"),
            (good.replace("\"lo\": 0.1", "\"lo\": -1"), "0 < lo"),
            (good.replace("\"label\": \"si\",", "\"label\": \"gk\","), "duplicate"),
            (good.replace("\"seed\": 4", "\"sed\": 4"), "unknown field"),
        ];
        for (text, needle) in cases {
            let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
            assert!(err.contains(needle), "{err} lacks {needle}");
        }
    }

    #[test]
    fn run_writes_traces_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_json(&cfg_json(dir.path())).unwrap();
        let s = run(&cfg, Path::new("."), RunMode::Full).unwrap();
        let names = ["gk.dat", "gk_drift.dat", "si.dat", "si_short.dat", "rate.dat", "short_vs_full.dat", MANIFEST_NAME];
        let first: Vec<Vec<u8>> = names.iter().map(|n| fs::read(dir.path().join(n)).unwrap()).collect();
        assert_eq!(s.curves.len(), 3);
        assert!(s.differences[0].max_difference < 1e-8);
        let gk = parse_dat(&String::from_utf8(first[0].clone()).unwrap()).unwrap();
        assert_eq!(gk.len(), 12);
        assert!(gk.iter().all(|(_, e)| *e >= 0.0));
        run(&cfg, Path::new("."), RunMode::Full).unwrap();
        for (n, bytes) in names.iter().zip(first) {
            assert_eq!(fs::read(dir.path().join(n)).unwrap(), bytes, "{n}");
        }
    }

    #[test]
    fn pole_in_spectrum_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let text = cfg_json(dir.path()).replace("{\"kind\": \"shift_invert\"}", "{\"kind\": \"list\", \"poles\": [4.0]}");
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert!(matches!(run(&cfg, Path::new("."), RunMode::Full), Err(GmfError::PoleInSpectrum { .. })));
    }

    #[test]
    fn slope_of_exact_exponential() {
        let e: Vec<f64> = (1..=40).map(|k| 3.0 * (-0.25 * k as f64).exp()).collect();
        assert!((fitted_log_slope(&e, 5, 30).unwrap() + 0.25).abs() < 1e-12);
        assert!(fitted_log_slope(&e, 5, 5).is_none());
    }
}
