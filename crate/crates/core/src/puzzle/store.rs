//! One-time seed store: issuance, verification and expiry.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;
use rand::RngCore;
use thiserror::Error;

use super::{check_solution, PuzzleChallenge, PuzzleSolution, Seed, WIRE_VERSION};
use crate::clock::Clock;
use crate::ip;
use crate::policy::{Difficulty, DEFAULT_D_MAX};

pub const DEFAULT_TTL_SECS: u64 = 120;
pub const DEFAULT_CAPACITY: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreConfig {
    pub ttl: u64,
    pub capacity: usize,
    pub d_max: u32,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            ttl: DEFAULT_TTL_SECS,
            capacity: DEFAULT_CAPACITY,
            d_max: DEFAULT_D_MAX,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IssueError {
    #[error("seed store is full")]
    StoreFull,
    #[error("difficulty {0} exceeds the configured maximum {1}")]
    DifficultyTooHigh(u32, u32),
    #[error("client address {0:?} is not in canonical form")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    UnknownSeed,
    Expired,
    Replayed,
    WrongClient,
    DifficultyMismatch,
    BadHash,
    Malformed,
}

impl RejectReason {
    pub const ALL: [RejectReason; 7] = [
        RejectReason::UnknownSeed,
        RejectReason::Expired,
        RejectReason::Replayed,
        RejectReason::WrongClient,
        RejectReason::DifficultyMismatch,
        RejectReason::BadHash,
        RejectReason::Malformed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::UnknownSeed => "UnknownSeed",
            RejectReason::Expired => "Expired",
            RejectReason::Replayed => "Replayed",
            RejectReason::WrongClient => "WrongClient",
            RejectReason::DifficultyMismatch => "DifficultyMismatch",
            RejectReason::BadHash => "BadHash",
            RejectReason::Malformed => "Malformed",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RejectReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown reject reason {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyOutcome {
    Accept,
    Reject(RejectReason),
}

impl VerifyOutcome {
    pub fn is_accept(self) -> bool {
        self == VerifyOutcome::Accept
    }
}

#[derive(Debug, Clone)]
struct Entry {
    expires_at: u64,
    difficulty: Difficulty,
    client_ip: String,
    consumed: bool,
}

/// Counters exposed for monitoring and tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StoreStats {
    pub issued: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub digest_evaluations: u64,
}

/// Issued seeds with their expiry and consumed flags.
///
/// All operations are safe to call concurrently. Each seed is accepted at
/// most once: the consumed flag is set in the same critical section that
/// decides the Accept.
#[derive(Debug)]
pub struct SeedStore {
    config: StoreConfig,
    entries: Mutex<HashMap<Seed, Entry>>,
    issued: AtomicU64,
    accepted: AtomicU64,
    rejected: AtomicU64,
    digests: AtomicU64,
}

impl SeedStore {
    pub fn new(config: StoreConfig) -> Self {
        Self {
            config,
            entries: Mutex::new(HashMap::new()),
            issued: AtomicU64::new(0),
            accepted: AtomicU64::new(0),
            rejected: AtomicU64::new(0),
            digests: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    /// Entries currently held, including expired ones not yet purged.
    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> StoreStats {
        StoreStats {
            issued: self.issued.load(Ordering::Relaxed),
            accepted: self.accepted.load(Ordering::Relaxed),
            rejected: self.rejected.load(Ordering::Relaxed),
            digest_evaluations: self.digests.load(Ordering::Relaxed),
        }
    }

    /// Issue a fresh challenge for `client_ip` and record it unconsumed.
    ///
    /// When the store is at capacity, expired entries are purged first; if
    /// it is still full the call fails with [`IssueError::StoreFull`].
    pub fn issue<R: RngCore + ?Sized>(
        &self,
        client_ip: &str,
        difficulty: Difficulty,
        clock: &dyn Clock,
        rng: &mut R,
    ) -> Result<PuzzleChallenge, IssueError> {
        if difficulty.bits() > self.config.d_max {
            return Err(IssueError::DifficultyTooHigh(difficulty.bits(), self.config.d_max));
        }
        if !ip::is_canonical(client_ip) {
            return Err(IssueError::Malformed(client_ip.to_string()));
        }
        let now = clock.now_unix();
        let mut entries = self.entries.lock();
        if entries.len() >= self.config.capacity {
            entries.retain(|_, e| !is_expired(e, now));
            if entries.len() >= self.config.capacity {
                return Err(IssueError::StoreFull);
            }
        }
        let seed = loop {
            let seed = Seed::random(rng);
            if !entries.contains_key(&seed) {
                break seed;
            }
        };
        entries.insert(
            seed,
            Entry {
                expires_at: now.saturating_add(self.config.ttl),
                difficulty,
                client_ip: client_ip.to_string(),
                consumed: false,
            },
        );
        drop(entries);
        self.issued.fetch_add(1, Ordering::Relaxed);
        Ok(PuzzleChallenge {
            version: WIRE_VERSION,
            seed,
            issued_at: now,
            difficulty,
            ttl: self.config.ttl,
            client_ip: client_ip.to_string(),
        })
    }

    /// Verify a presented solution.
    ///
    /// Checks run in a fixed order and the first failure decides the
    /// reason: well-formed, seed known, not expired, not consumed, difficulty
    /// matches, client matches, digest. Exactly one digest is evaluated, and
    /// only when every cheaper check has passed.
    pub fn verify(
        &self,
        solution: &PuzzleSolution,
        presented_ip: &str,
        clock: &dyn Clock,
    ) -> VerifyOutcome {
        let outcome = self.verify_inner(solution, presented_ip, clock.now_unix());
        match outcome {
            VerifyOutcome::Accept => self.accepted.fetch_add(1, Ordering::Relaxed),
            VerifyOutcome::Reject(_) => self.rejected.fetch_add(1, Ordering::Relaxed),
        };
        outcome
    }

    fn verify_inner(&self, solution: &PuzzleSolution, presented_ip: &str, now: u64) -> VerifyOutcome {
        use RejectReason::*;

        if solution.version != WIRE_VERSION || !ip::is_canonical(presented_ip) {
            return VerifyOutcome::Reject(Malformed);
        }
        {
            let entries = self.entries.lock();
            let Some(entry) = entries.get(&solution.seed) else {
                return VerifyOutcome::Reject(UnknownSeed);
            };
            if is_expired(entry, now) {
                return VerifyOutcome::Reject(Expired);
            }
            if entry.consumed {
                return VerifyOutcome::Reject(Replayed);
            }
            if entry.difficulty != solution.difficulty {
                return VerifyOutcome::Reject(DifficultyMismatch);
            }
            if entry.client_ip != presented_ip {
                return VerifyOutcome::Reject(WrongClient);
            }
        }

        self.digests.fetch_add(1, Ordering::Relaxed);
        match check_solution(solution, presented_ip) {
            Ok(true) => {}
            Ok(false) => return VerifyOutcome::Reject(BadHash),
            Err(_) => return VerifyOutcome::Reject(Malformed),
        }

        // Re-check under the lock: a concurrent verifier may have won the seed.
        let mut entries = self.entries.lock();
        match entries.get_mut(&solution.seed) {
            None => VerifyOutcome::Reject(Expired),
            Some(entry) if entry.consumed => VerifyOutcome::Reject(Replayed),
            Some(entry) => {
                entry.consumed = true;
                VerifyOutcome::Accept
            }
        }
    }

    /// Drop every entry whose lifetime has ended. Returns how many went.
    pub fn purge_expired(&self, clock: &dyn Clock) -> usize {
        let now = clock.now_unix();
        let mut entries = self.entries.lock();
        let before = entries.len();
        entries.retain(|_, e| !is_expired(e, now));
        before - entries.len()
    }

    #[cfg(test)]
    fn issued_at(&self, seed: &Seed) -> Option<u64> {
        self.entries.lock().get(seed).map(|e| e.expires_at - self.config.ttl)
    }
}

fn is_expired(entry: &Entry, now: u64) -> bool {
    now > entry.expires_at
}
