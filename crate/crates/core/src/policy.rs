//! Score → difficulty policies.
//!
//! * `Linear { offset }`: round the score half-up to an integer `R` and issue
//!   an `R + offset` difficult puzzle. `policy1` uses offset 1, `policy2`
//!   offset 5.
//! * `ErrorRange { epsilon }` (`policy3`): with `d = ceil(score + 1)`, draw
//!   uniformly from `[ceil(d - epsilon), ceil(d + epsilon)]`, which absorbs
//!   a scorer error of up to `epsilon` in either direction.
//!
//! Every policy output is clamped to `[1, d_max]`. Difficulty 0 is only
//! reachable through an operator exemption.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reputation::ReputationScore;

/// Largest meaningful difficulty: every bit of a SHA-256 digest.
pub const MAX_DIGEST_BITS: u32 = 256;
pub const DEFAULT_D_MAX: u32 = 30;
pub const DEFAULT_EPSILON: f64 = 1.0;

/// Number of leading zero bits a solution digest must have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Difficulty(u32);

impl Difficulty {
    pub const ZERO: Difficulty = Difficulty(0);

    pub fn new(bits: u32) -> Option<Self> {
        (bits <= MAX_DIGEST_BITS).then_some(Self(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// Expected number of digest evaluations to solve: `2^d`.
    pub fn expected_attempts(self) -> f64 {
        2f64.powi(self.0 as i32)
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("linear offset must be at least 1")]
    ZeroOffset,
    #[error("epsilon must be a finite non-negative number, got {0}")]
    BadEpsilon(f64),
    #[error("d_max must lie in [1, {MAX_DIGEST_BITS}], got {0}")]
    BadDMax(u32),
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum PolicyKind {
    Linear { offset: u32 },
    ErrorRange { epsilon: f64 },
}

/// The rule in force plus the difficulty cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySpec {
    kind: PolicyKind,
    d_max: u32,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, d_max: u32) -> Result<Self, PolicyError> {
        if d_max == 0 || d_max > MAX_DIGEST_BITS {
            return Err(PolicyError::BadDMax(d_max));
        }
        match kind {
            PolicyKind::Linear { offset: 0 } => return Err(PolicyError::ZeroOffset),
            PolicyKind::ErrorRange { epsilon } if !(epsilon.is_finite() && epsilon >= 0.0) => {
                return Err(PolicyError::BadEpsilon(epsilon))
            }
            _ => {}
        }
        Ok(Self { kind, d_max })
    }

    pub fn linear(offset: u32) -> Result<Self, PolicyError> {
        Self::new(PolicyKind::Linear { offset }, DEFAULT_D_MAX)
    }

    pub fn error_range(epsilon: f64) -> Result<Self, PolicyError> {
        Self::new(PolicyKind::ErrorRange { epsilon }, DEFAULT_D_MAX)
    }

    /// Named presets: `policy1`, `policy2`, `policy3` (the latter with
    /// `epsilon`).
    pub fn preset(name: &str, epsilon: f64) -> Result<Self, PolicyError> {
        match name {
            "policy1" => Self::linear(1),
            "policy2" => Self::linear(5),
            "policy3" => Self::error_range(epsilon),
            other => Err(PolicyError::UnknownPolicy(other.to_string())),
        }
    }

    pub fn with_d_max(self, d_max: u32) -> Result<Self, PolicyError> {
        Self::new(self.kind, d_max)
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn d_max(&self) -> u32 {
        self.d_max
    }

    pub fn apply<R: Rng + ?Sized>(&self, score: ReputationScore, rng: &mut R) -> Difficulty {
        apply_policy(self, score, rng)
    }
}

fn clamp_to_range(d: i64, d_max: u32) -> Difficulty {
    Difficulty(d.clamp(1, i64::from(d_max.max(1))) as u32)
}

/// Linear mapping: `clamp(round_half_up(score) + offset, 1, d_max)`.
pub fn map_linear(score: ReputationScore, offset: u32, d_max: u32) -> Difficulty {
    let r = (score.value() + 0.5).floor() as i64;
    clamp_to_range(r + i64::from(offset), d_max)
}

/// Unclamped `[lo, hi]` interval the error-range policy draws from.
pub fn error_range_interval(score: ReputationScore, epsilon: f64) -> (i64, i64) {
    let centre = (score.value() + 1.0).ceil();
    let lo = (centre - epsilon).ceil() as i64;
    let hi = (centre + epsilon).ceil() as i64;
    (lo, hi)
}

/// Error-range mapping: a uniform draw from [`error_range_interval`],
/// clamped to `[1, d_max]`.
pub fn map_error_range<R: Rng + ?Sized>(
    score: ReputationScore,
    epsilon: f64,
    rng: &mut R,
    d_max: u32,
) -> Difficulty {
    let (lo, hi) = error_range_interval(score, epsilon.max(0.0));
    clamp_to_range(rng.gen_range(lo..=hi), d_max)
}

pub fn apply_policy<R: Rng + ?Sized>(
    spec: &PolicySpec,
    score: ReputationScore,
    rng: &mut R,
) -> Difficulty {
    match spec.kind {
        PolicyKind::Linear { offset } => map_linear(score, offset, spec.d_max),
        PolicyKind::ErrorRange { epsilon } => map_error_range(score, epsilon, rng, spec.d_max),
    }
}
