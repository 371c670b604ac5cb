//! Building blocks of an adaptive proof-of-work gate.
//!
//! A client's IP-derived features are scored against a corpus of known
//! malicious clients ([`reputation`]), the score is mapped to a puzzle
//! difficulty ([`policy`]), and the client must find a nonce whose SHA-256
//! digest has that many leading zero bits before it is served ([`puzzle`]).
//!
//! The HTTP gate, the solving client and the experiment runner live in the
//! `powgate` crate; everything they exchange is defined here.

pub mod clock;
pub mod config;
pub mod experiment;
pub mod features;
pub mod ip;
pub mod policy;
pub mod puzzle;
pub mod reputation;
pub mod stats;
pub mod wire;

pub use clock::{Clock, ManualClock, SystemClock};
pub use config::{ConfigError, GateConfig, Upstream};
pub use features::{FeatureError, FeatureTable, FeatureVector, MaliciousCorpus, ScoreTable};
pub use policy::{Difficulty, PolicyKind, PolicySpec};
pub use puzzle::store::{IssueError, RejectReason, SeedStore, StoreConfig, VerifyOutcome};
pub use puzzle::{PuzzleChallenge, PuzzleError, PuzzleSolution, Seed, Solved};
pub use reputation::{ReputationScore, Scorer, ScorerKind};
