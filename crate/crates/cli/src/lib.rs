//! Network side of the adaptive proof-of-work gate: the HTTP gate itself,
//! a solving client, and the reputation-score sweep used to measure how
//! latency grows with difficulty.

pub mod bench;
pub mod client;
pub mod gate;
mod http1;
mod upstream;

pub use powgate_core as core;
