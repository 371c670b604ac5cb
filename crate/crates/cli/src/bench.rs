//! Reputation-score sweep: for every policy and score, run repeated
//! exchanges against a gate and summarize medians per cell.
//!
//! The synthetic client `10.0.0.s` is scored exactly `s` by a fixture table,
//! so the sweep does not depend on corpus geometry.

use std::sync::Arc;
use std::time::Duration;

use powgate_core::config::{GateConfig, ScorerSource, Upstream};
use powgate_core::experiment::{fixture_ip, CellBudget, ExperimentSpec, ResultRow};
use powgate_core::features::ScoreTable;
use powgate_core::puzzle::store::StoreConfig;
use powgate_core::reputation::{ReputationScore, Scorer};
use thiserror::Error;
use tokio::net::TcpListener;
use tracing::{info, warn};

use crate::client::{self, ClientError, ExchangeOptions};
use crate::gate::{self, GateState, RunningGate};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("gate unavailable: {0}")]
    GateUnavailable(String),
    #[error(transparent)]
    Experiment(#[from] powgate_core::experiment::ExperimentError),
    #[error("an external gate runs a single policy; got {0} policies")]
    ExternalGatePolicies(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GateTarget {
    /// Launch a test-mode gate per policy on a loopback port.
    InProcess,
    /// Base URL of an already-running test-mode gate.
    External(String),
}

impl GateTarget {
    pub fn parse(text: &str) -> Self {
        match text {
            "inprocess" => GateTarget::InProcess,
            url if url.contains("://") => GateTarget::External(url.to_string()),
            addr => GateTarget::External(format!("http://{addr}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub policy: String,
    pub score: u8,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

/// Gate configuration used for in-process runs of `policy`.
pub fn inprocess_config(spec: &ExperimentSpec, policy: &str) -> Result<GateConfig, BenchError> {
    let policy = spec.policy(policy)?;
    Ok(GateConfig {
        listen: "127.0.0.1:0".parse().expect("loopback literal"),
        scorer: ScorerSource::Fixture {
            score_table_path: "<in-memory>".into(),
        },
        unknown_client_score: ReputationScore::MAX,
        store: StoreConfig {
            d_max: policy.d_max(),
            ..StoreConfig::default()
        },
        policy,
        upstream: Upstream::Static("ok".into()),
        test_mode: true,
        exempt_ips: Default::default(),
    })
}

/// Fixture scorer mapping `10.0.0.s` to `s` for every score in the sweep.
pub fn fixture_scorer(spec: &ExperimentSpec) -> Scorer {
    let mut table = ScoreTable::default();
    for &s in &spec.scores {
        table.insert(&fixture_ip(s), ReputationScore::new(f64::from(s)).expect("scores validated"));
    }
    Scorer::fixture(table)
}

pub async fn launch_inprocess(config: GateConfig, scorer: Scorer) -> Result<RunningGate, BenchError> {
    let listener = TcpListener::bind(config.listen)
        .await
        .map_err(|e| BenchError::GateUnavailable(e.to_string()))?;
    gate::spawn(listener, Arc::new(GateState::new(config, scorer)))
        .map_err(|e| BenchError::GateUnavailable(e.to_string()))
}

pub async fn run_experiment(spec: &ExperimentSpec, target: &GateTarget) -> Result<ExperimentReport, BenchError> {
    spec.validate()?;
    let mut report = ExperimentReport::default();
    match target {
        GateTarget::External(url) => {
            if spec.policies.len() != 1 {
                return Err(BenchError::ExternalGatePolicies(spec.policies.len()));
            }
            run_policy(spec, &spec.policies[0], url, &mut report).await?;
        }
        GateTarget::InProcess => {
            for policy in &spec.policies {
                let gate = launch_inprocess(inprocess_config(spec, policy)?, fixture_scorer(spec)).await?;
                let result = run_policy(spec, policy, &gate.url(), &mut report).await;
                gate.shutdown();
                result?;
            }
        }
    }
    Ok(report)
}

async fn run_policy(
    spec: &ExperimentSpec,
    policy: &str,
    url: &str,
    report: &mut ExperimentReport,
) -> Result<(), BenchError> {
    for &score in &spec.scores {
        match run_cell(spec, score, url).await {
            Ok(reports) => {
                let row = ResultRow::summarize(policy, score, &reports).expect("trials >= 1");
                info!(
                    policy,
                    score,
                    d = row.difficulty_mode,
                    median_attempts = row.median_attempts,
                    median_total_ms = row.median_total_ms,
                    "cell done"
                );
                report.rows.push(row);
            }
            Err(CellError::Gate(e)) => return Err(BenchError::GateUnavailable(e)),
            Err(CellError::Failed(reason)) => {
                warn!(policy, score, %reason, "cell failed");
                report.failures.push(CellFailure {
                    policy: policy.to_string(),
                    score,
                    reason,
                });
            }
        }
    }
    Ok(())
}

enum CellError {
    Gate(String),
    Failed(String),
}

async fn run_cell(
    spec: &ExperimentSpec,
    score: u8,
    url: &str,
) -> Result<Vec<powgate_core::experiment::ExchangeReport>, CellError> {
    let options = ExchangeOptions {
        spoof_ip: Some(fixture_ip(score)),
        timeout: Duration::from_secs(30),
    };
    let mut budget = CellBudget::new(spec.trials);
    let mut reports = Vec::with_capacity(spec.trials);
    for trial in 0..spec.trials {
        let result = client::request_with_budget(url, &options, |d| budget.admit(d)).await;
        match result {
            Ok(r) if r.outcome == 200 => {
                budget.spend(r.attempts);
                reports.push(r);
            }
            Ok(r) => {
                return Err(CellError::Failed(format!(
                    "trial {trial}: gate answered {} after a solve",
                    r.outcome
                )))
            }
            Err(ClientError::SolveFailed { difficulty, attempts }) => {
                return Err(CellError::Failed(format!(
                    "trial {trial}: attempt budget exhausted at d={difficulty} after {attempts} attempts (cell total {})",
                    budget.used() + attempts
                )))
            }
            Err(ClientError::ConnectionFailed(e)) => return Err(CellError::Gate(e)),
            Err(e) => return Err(CellError::Failed(format!("trial {trial}: {e}"))),
        }
    }
    Ok(reports)
}
