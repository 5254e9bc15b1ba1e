//! Pole sequences for rational Krylov spaces built on `AᵀA`.
//!
//! Poles live on the Gram side: a finite pole must avoid the squared
//! singular-value interval `[σ_n², σ₁²]`.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GmfError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pole {
    Infinite,
    Finite(f64),
}

impl Pole {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Pole::Infinite)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Pole::Finite(x) if *x == 0.0)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Pole::Finite(x) => Some(*x),
            Pole::Infinite => None,
        }
    }

    pub fn parse(tok: &str) -> Option<Pole> {
        let t = tok.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "∞" => Some(Pole::Infinite),
            _ => t.parse::<f64>().ok().filter(|x| x.is_finite()).map(Pole::Finite),
        }
    }
}

impl fmt::Display for Pole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pole::Infinite => write!(f, "inf"),
            Pole::Finite(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Pole {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Pole::Infinite => s.serialize_str("inf"),
            Pole::Finite(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for Pole {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) if x.is_finite() => Ok(Pole::Finite(x)),
            Raw::Num(x) => Err(serde::de::Error::custom(format!("pole {x} is not finite; write \"inf\""))),
            Raw::Str(s) => Pole::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad pole `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleKind {
    Polynomial,
    Extended,
    ShiftInvert,
    UserFile,
    Explicit,
}

/// Ordered poles ξ₁, ξ₂, …. A sequence shorter than a run needs is
/// repeated cyclically.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleSequence {
    pub poles: Vec<Pole>,
    pub kind: PoleKind,
}

impl PoleSequence {
    pub fn new(poles: Vec<Pole>, kind: PoleKind) -> Result<Self> {
        if poles.is_empty() {
            return Err(GmfError::InvalidArgument("pole sequence is empty".into()));
        }
        Ok(PoleSequence { poles, kind })
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    /// The `j`-th pole (0-based), cycling when the list is exhausted.
    pub fn get(&self, j: usize) -> Pole {
        self.poles[j % self.poles.len()]
    }

    /// First `count` poles, cycling as needed.
    pub fn take(&self, count: usize) -> Vec<Pole> {
        (0..count).map(|j| self.get(j)).collect()
    }

    /// Rejects finite poles inside `[lo, hi]`, an interval of squared singular values.
    pub fn validate_against(&self, lo: f64, hi: f64) -> Result<()> {
        for p in &self.poles {
            if let Pole::Finite(x) = p {
                if *x >= lo && *x <= hi {
                    return Err(GmfError::PoleInSpectrum { pole: *x, lo, hi });
                }
            }
        }
        Ok(())
    }
}

pub fn polynomial_poles(k: usize) -> PoleSequence {
    PoleSequence { poles: vec![Pole::Infinite; k.max(1)], kind: PoleKind::Polynomial }
}

/// `(∞, 0, ∞, 0, …)` of length `k`.
pub fn extended_poles(k: usize) -> PoleSequence {
    let poles = (0..k.max(1)).map(|j| if j % 2 == 0 { Pole::Infinite } else { Pole::Finite(0.0) }).collect();
    PoleSequence { poles, kind: PoleKind::Extended }
}

/// The repeated shift-and-invert pole `ξ = −σ_min·σ_max`.
pub fn si_optimal_pole(sigma_min: f64, sigma_max: f64, k: usize) -> Result<PoleSequence> {
    if !(sigma_min > 0.0 && sigma_min <= sigma_max && sigma_max.is_finite()) {
        return Err(GmfError::InvalidInterval { lo: sigma_min, hi: sigma_max });
    }
    let xi = -sigma_min * sigma_max;
    Ok(PoleSequence { poles: vec![Pole::Finite(xi); k.max(1)], kind: PoleKind::ShiftInvert })
}

/// Parses one pole per line (`inf`, `0`, or a decimal). Blank lines and
/// `#` comments are skipped.
pub fn parse_poles(text: &str, origin: &str) -> Result<PoleSequence> {
    let mut poles = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let p = Pole::parse(body).ok_or_else(|| GmfError::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg: format!("expected `inf` or a number, found `{body}`"),
        })?;
        poles.push(p);
    }
    if poles.is_empty() {
        return Err(GmfError::Parse { path: origin.to_string(), line: 0, msg: "no poles in file".into() });
    }
    Ok(PoleSequence { poles, kind: PoleKind::UserFile })
}

/// Loads a pole file; when `interval` (squared singular values) is given,
/// poles inside it are rejected.
pub fn load_user_poles(path: &Path, interval: Option<(f64, f64)>) -> Result<PoleSequence> {
    let text = fs::read_to_string(path)?;
    let seq = parse_poles(&text, &path.display().to_string())?;
    if let Some((lo, hi)) = interval {
        seq.validate_against(lo, hi)?;
    }
    Ok(seq)
}
