//! HTTP wire forms of challenges and solutions.
//!
//! A challenge travels as the JSON body of a 403 response:
//!
//! ```text
//! {"v":1,"alg":"sha256-lzb","seed":"<32 hex>","ts":<unix s>,"d":<bits>,"ttl":<s>}
//! ```
//!
//! and the solution comes back on the retried request as
//!
//! ```text
//! X-PoW: v=1;seed=<32 hex>;ts=<int>;d=<int>;nonce=<8 hex>
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::Difficulty;
use crate::puzzle::{PuzzleChallenge, PuzzleSolution, Seed, ALGORITHM};

pub const SOLUTION_HEADER: &str = "x-pow";
pub const REQUIRED_HEADER: &str = "x-pow-required";
pub const REJECT_HEADER: &str = "x-pow-reject";
pub const CLIENT_IP_HEADER: &str = "x-client-ip";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("challenge body: {0}")]
    Json(String),
    #[error("unsupported algorithm {0:?}")]
    Algorithm(String),
    #[error("solution header: expected field {expected:?} at position {position}")]
    Field { position: usize, expected: &'static str },
    #[error("solution header: bad value for {field}: {value:?}")]
    Value { field: &'static str, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeMessage {
    pub v: u32,
    pub alg: String,
    pub seed: String,
    pub ts: u64,
    pub d: u32,
    pub ttl: u64,
}

impl ChallengeMessage {
    pub fn from_challenge(c: &PuzzleChallenge) -> Self {
        Self {
            v: c.version,
            alg: ALGORITHM.to_string(),
            seed: c.seed.to_hex(),
            ts: c.issued_at,
            d: c.difficulty.bits(),
            ttl: c.ttl,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("challenge serializes")
    }

    pub fn parse(body: &[u8]) -> Result<Self, WireError> {
        let msg: Self = serde_json::from_slice(body).map_err(|e| WireError::Json(e.to_string()))?;
        if msg.alg != ALGORITHM {
            return Err(WireError::Algorithm(msg.alg));
        }
        msg.seed()?;
        msg.difficulty()?;
        Ok(msg)
    }

    pub fn seed(&self) -> Result<Seed, WireError> {
        self.seed.parse().map_err(|_| WireError::Value {
            field: "seed",
            value: self.seed.clone(),
        })
    }

    pub fn difficulty(&self) -> Result<Difficulty, WireError> {
        Difficulty::new(self.d).ok_or(WireError::Value {
            field: "d",
            value: self.d.to_string(),
        })
    }

    /// Rebuild the challenge as the client sees it, bound to `client_ip`.
    pub fn to_challenge(&self, client_ip: &str) -> Result<PuzzleChallenge, WireError> {
        Ok(PuzzleChallenge {
            version: self.v,
            seed: self.seed()?,
            issued_at: self.ts,
            difficulty: self.difficulty()?,
            ttl: self.ttl,
            client_ip: client_ip.to_string(),
        })
    }
}

/// Format the `X-PoW` header value for a solution.
pub fn format_solution_header(s: &PuzzleSolution) -> String {
    format!(
        "v={};seed={};ts={};d={};nonce={:08x}",
        s.version,
        s.seed.to_hex(),
        s.issued_at,
        s.difficulty.bits(),
        s.nonce
    )
}

fn decimal<T: std::str::FromStr>(field: &'static str, value: &str) -> Result<T, WireError> {
    let ok = !value.is_empty()
        && value.bytes().all(|b| b.is_ascii_digit())
        && (value == "0" || !value.starts_with('0'));
    ok.then(|| value.parse().ok())
        .flatten()
        .ok_or_else(|| WireError::Value {
            field,
            value: value.to_string(),
        })
}

/// Parse an `X-PoW` header value. Fields must appear in the fixed order.
pub fn parse_solution_header(value: &str) -> Result<PuzzleSolution, WireError> {
    const FIELDS: [&str; 5] = ["v", "seed", "ts", "d", "nonce"];
    let parts: Vec<&str> = value.trim().split(';').collect();
    if parts.len() != FIELDS.len() {
        return Err(WireError::Field {
            position: parts.len().min(FIELDS.len()),
            expected: FIELDS[parts.len().min(FIELDS.len() - 1)],
        });
    }
    let mut values = [""; 5];
    for (position, (part, name)) in parts.iter().zip(FIELDS).enumerate() {
        match part.split_once('=') {
            Some((key, v)) if key == name => values[position] = v,
            _ => {
                return Err(WireError::Field {
                    position,
                    expected: name,
                })
            }
        }
    }
    let [v, seed, ts, d, nonce] = values;

    let seed: Seed = seed.parse().map_err(|_| WireError::Value {
        field: "seed",
        value: seed.to_string(),
    })?;
    let difficulty = Difficulty::new(decimal("d", d)?).ok_or_else(|| WireError::Value {
        field: "d",
        value: d.to_string(),
    })?;
    let nonce_ok = nonce.len() == 8 && nonce.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
    let nonce = nonce_ok
        .then(|| u32::from_str_radix(nonce, 16).ok())
        .flatten()
        .ok_or_else(|| WireError::Value {
            field: "nonce",
            value: nonce.to_string(),
        })?;

    Ok(PuzzleSolution {
        version: decimal("v", v)?,
        seed,
        issued_at: decimal("ts", ts)?,
        difficulty,
        nonce,
    })
}
