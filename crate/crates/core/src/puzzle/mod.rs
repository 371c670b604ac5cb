//! Hashcash-style client puzzles.
//!
//! The solver hashes the ASCII preimage
//!
//! ```text
//! APW1:<issued_at>:<seed hex>:<difficulty>:<client ip>:<nonce as 8 hex>
//! ```
//!
//! with SHA-256, trying nonces 0, 1, 2, ... until the digest has at least
//! `difficulty` leading zero bits.

pub mod store;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ip;
use crate::policy::Difficulty;

/// Wire protocol version carried in challenges and solutions.
pub const WIRE_VERSION: u32 = 1;
/// Algorithm identifier advertised in challenges.
pub const ALGORITHM: &str = "sha256-lzb";
const PREIMAGE_TAG: &str = "APW1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PuzzleError {
    #[error("client address {0:?} is not in canonical form")]
    Malformed(String),
    #[error("no 32-bit nonce satisfies the puzzle")]
    NonceExhausted,
    #[error("gave up after {0} attempts")]
    BudgetExceeded(u64),
}

/// 16 server-chosen random bytes binding a challenge to one issuance.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Seed(pub [u8; 16]);

impl Seed {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        Seed(bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({})", self.to_hex())
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Seed {
    type Err = hex::FromHexError;

    /// Accepts exactly 32 lowercase hex characters.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(hex::FromHexError::InvalidHexCharacter {
                c: s.chars().find(char::is_ascii_uppercase).unwrap_or('?'),
                index: 0,
            });
        }
        let mut bytes = [0u8; 16];
        hex::decode_to_slice(s, &mut bytes)?;
        Ok(Seed(bytes))
    }
}

/// A puzzle as issued by the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PuzzleChallenge {
    pub version: u32,
    pub seed: Seed,
    pub issued_at: u64,
    pub difficulty: Difficulty,
    pub ttl: u64,
    pub client_ip: String,
}

/// A solved puzzle as presented back to the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PuzzleSolution {
    pub version: u32,
    pub seed: Seed,
    pub issued_at: u64,
    pub difficulty: Difficulty,
    pub nonce: u32,
}

impl PuzzleSolution {
    pub fn for_challenge(challenge: &PuzzleChallenge, nonce: u32) -> Self {
        Self {
            version: challenge.version,
            seed: challenge.seed,
            issued_at: challenge.issued_at,
            difficulty: challenge.difficulty,
            nonce,
        }
    }
}

/// Outcome of a successful search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solved {
    pub solution: PuzzleSolution,
    /// Digest evaluations performed: `nonce + 1`.
    pub attempts: u64,
}

/// Build the exact preimage bytes for one nonce.
pub fn preimage(
    issued_at: u64,
    seed: &Seed,
    difficulty: Difficulty,
    client_ip: &str,
    nonce: u32,
) -> Result<Vec<u8>, PuzzleError> {
    let mut buf = preimage_prefix(issued_at, seed, difficulty, client_ip)?;
    push_nonce(&mut buf, nonce);
    Ok(buf)
}

/// Everything up to and including the colon before the nonce.
fn preimage_prefix(
    issued_at: u64,
    seed: &Seed,
    difficulty: Difficulty,
    client_ip: &str,
) -> Result<Vec<u8>, PuzzleError> {
    if !ip::is_canonical(client_ip) {
        return Err(PuzzleError::Malformed(client_ip.to_string()));
    }
    Ok(format!("{PREIMAGE_TAG}:{issued_at}:{}:{difficulty}:{client_ip}:", seed.to_hex()).into_bytes())
}

fn push_nonce(buf: &mut Vec<u8>, nonce: u32) {
    let mut hex = [0u8; 8];
    // to_be_bytes keeps the most significant nibble first
    hex::encode_to_slice(nonce.to_be_bytes(), &mut hex).expect("8 hex chars for 4 bytes");
    buf.extend_from_slice(&hex);
}

pub fn digest(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Count zero bits from the most significant bit of byte 0.
pub fn leading_zero_bits(digest: &[u8; 32]) -> u32 {
    let mut bits = 0;
    for &byte in digest {
        if byte != 0 {
            return bits + byte.leading_zeros();
        }
        bits += 8;
    }
    bits
}

/// Check a solution with a single digest evaluation.
pub fn check_solution(solution: &PuzzleSolution, client_ip: &str) -> Result<bool, PuzzleError> {
    let bytes = preimage(
        solution.issued_at,
        &solution.seed,
        solution.difficulty,
        client_ip,
        solution.nonce,
    )?;
    Ok(leading_zero_bits(&digest(&bytes)) >= solution.difficulty.bits())
}

/// Search nonces sequentially from 0 for the first one meeting the difficulty.
pub fn solve(challenge: &PuzzleChallenge, client_ip: &str) -> Result<Solved, PuzzleError> {
    solve_within(challenge, client_ip, u64::MAX)
}

/// [`solve`] with an upper bound on digest evaluations.
pub fn solve_within(
    challenge: &PuzzleChallenge,
    client_ip: &str,
    max_attempts: u64,
) -> Result<Solved, PuzzleError> {
    let mut buf = preimage_prefix(
        challenge.issued_at,
        &challenge.seed,
        challenge.difficulty,
        client_ip,
    )?;
    let prefix_len = buf.len();
    let target = challenge.difficulty.bits();
    let mut hasher = Sha256::new();
    hasher.update(&buf);

    for nonce in 0..=u32::MAX {
        let attempts = u64::from(nonce) + 1;
        if attempts > max_attempts {
            return Err(PuzzleError::BudgetExceeded(max_attempts));
        }
        buf.truncate(prefix_len);
        push_nonce(&mut buf, nonce);
        let digest: [u8; 32] = hasher.clone().chain_update(&buf[prefix_len..]).finalize().into();
        if leading_zero_bits(&digest) >= target {
            return Ok(Solved {
                solution: PuzzleSolution::for_challenge(challenge, nonce),
                attempts,
            });
        }
    }
    Err(PuzzleError::NonceExhausted)
}
