//! Experiment records: per-exchange reports, per-cell summaries and the
//! results CSV.
//!
//! A cell is one (policy, score) pair swept by the bench; every cell runs
//! `trials` exchanges and is summarized by lower medians.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{PolicyError, PolicySpec, DEFAULT_EPSILON};
use crate::stats;

pub const CSV_HEADER: &str =
    "policy,score,median_total_ms,median_solve_ms,median_attempts,difficulty_mode";
pub const PRESETS: [&str; 3] = ["policy1", "policy2", "policy3"];
pub const DEFAULT_TRIALS: usize = 30;
/// Synthetic client for score `s` is `10.0.0.s`.
pub const FIXTURE_PREFIX: &str = "10.0.0.";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("no result rows to write")]
    NoRows,
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("score {0} outside [0, 10]")]
    ScoreOutOfRange(u8),
    #[error("bad score range {0:?}")]
    BadScores(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Client-side measurements of one two-round exchange.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExchangeReport {
    pub challenge_rtt_ms: f64,
    pub solve_ms: f64,
    pub attempts: u64,
    pub verify_rtt_ms: f64,
    pub total_ms: f64,
    pub difficulty: u32,
    pub outcome: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub policies: Vec<String>,
    pub scores: Vec<u8>,
    pub trials: usize,
    pub epsilon: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            policies: PRESETS.iter().map(|p| p.to_string()).collect(),
            scores: (0..=10).collect(),
            trials: DEFAULT_TRIALS,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.trials == 0 {
            return Err(ExperimentError::NoTrials);
        }
        if let Some(&s) = self.scores.iter().find(|&&s| s > 10) {
            return Err(ExperimentError::ScoreOutOfRange(s));
        }
        for p in &self.policies {
            self.policy(p)?;
        }
        Ok(())
    }

    pub fn policy(&self, name: &str) -> Result<PolicySpec, ExperimentError> {
        Ok(PolicySpec::preset(name, self.epsilon)?)
    }

    /// Score fixture CSV mapping `10.0.0.s` to `s` for every score in the sweep.
    pub fn score_fixture_csv(&self) -> String {
        self.scores
            .iter()
            .map(|s| format!("{}\n", fixture_row(*s)))
            .collect()
    }
}

pub fn fixture_ip(score: u8) -> String {
    format!("{FIXTURE_PREFIX}{score}")
}

fn fixture_row(score: u8) -> String {
    format!("{},{score}", fixture_ip(score))
}

/// Parse `a..b` (inclusive) or a comma-separated list of scores.
pub fn parse_scores(text: &str) -> Result<Vec<u8>, ExperimentError> {
    let bad = || ExperimentError::BadScores(text.to_string());
    let scores: Vec<u8> = if let Some((a, b)) = text.split_once("..") {
        let a: u8 = a.trim().parse().map_err(|_| bad())?;
        let b: u8 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if let Some(&s) = scores.iter().find(|&&s| s > 10) {
        return Err(ExperimentError::ScoreOutOfRange(s));
    }
    Ok(scores)
}

/// Summary of one (policy, score) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub policy: String,
    pub score: u8,
    pub median_total_ms: f64,
    pub median_solve_ms: f64,
    pub median_attempts: u64,
    pub difficulty_mode: u32,
}

impl ResultRow {
    /// Lower medians over `reports`; `None` when there are none.
    pub fn summarize(policy: &str, score: u8, reports: &[ExchangeReport]) -> Option<Self> {
        let col = |f: fn(&ExchangeReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
        Some(Self {
            policy: policy.to_string(),
            score,
            median_total_ms: stats::lower_median(&col(|r| r.total_ms))?,
            median_solve_ms: stats::lower_median(&col(|r| r.solve_ms))?,
            median_attempts: stats::lower_median(
                &reports.iter().map(|r| r.attempts).collect::<Vec<_>>(),
            )?,
            difficulty_mode: stats::mode(&reports.iter().map(|r| r.difficulty).collect::<Vec<_>>())?,
        })
    }
}

/// Attempt budget for one cell: three times the cell's expected total work.
///
/// Difficulties are only known as challenges arrive, so trials not yet run
/// are projected at the latest issued difficulty. For a fixed difficulty the
/// cap is `3 * trials * 2^d` from the first trial on; a sum of that many
/// geometric draws essentially never reaches three times its mean, while a
/// single draw exceeds `3 * 2^d` about 5% of the time.
#[derive(Debug, Clone, Copy)]
pub struct CellBudget {
    trials: usize,
    admitted: usize,
    expected: f64,
    used: u64,
}

impl CellBudget {
    pub const FACTOR: f64 = 3.0;

    pub fn new(trials: usize) -> Self {
        Self {
            trials,
            admitted: 0,
            expected: 0.0,
            used: 0,
        }
    }

    /// Register a newly issued challenge and return how many attempts its
    /// solve may use before the cell is declared failed.
    pub fn admit(&mut self, difficulty: u32) -> u64 {
        let work = 2f64.powi(difficulty as i32);
        self.admitted += 1;
        self.expected += work;
        let remaining = self.trials.saturating_sub(self.admitted) as f64;
        let cap = (Self::FACTOR * (self.expected + remaining * work)).min(u64::MAX as f64) as u64;
        cap.saturating_sub(self.used).max(1)
    }

    pub fn spend(&mut self, attempts: u64) {
        self.used = self.used.saturating_add(attempts);
    }

    pub fn used(&self) -> u64 {
        self.used
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<(), ExperimentError> {
    let mut out = csv_writer(w);
    out.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Write the results CSV. Refuses to create a file for an empty result set.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<(), ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::NoRows);
    }
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn parse_csv(bytes: &[u8]) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(bytes);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(ExperimentError::Csv(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected header {:?}", header.join(",")),
        ))));
    }
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}
