use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use powgate::bench::{self, GateTarget};
use powgate::client::{self, ExchangeOptions};
use powgate::gate;
use powgate_core::config::{ConfigFile, GateConfig};
use powgate_core::experiment::{self, ExperimentSpec};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "powgate", version, about = "Adaptive proof-of-work HTTP gate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the gate in front of a static body or an origin server.
    Gate(Box<GateArgs>),
    /// Fetch a URL through a gate, solving its challenge.
    Client(ClientArgs),
    /// Sweep reputation scores under each policy and write a results CSV.
    Bench(BenchArgs),
}

/// Flags mirror the config file keys and take precedence over them.
#[derive(Args)]
struct GateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    /// "euclidean" or "fixture"
    #[arg(long)]
    scorer: Option<String>,
    /// "linear", "error-range", or a preset: policy1, policy2, policy3
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    offset: Option<u32>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    d_max: Option<u32>,
    #[arg(long)]
    ttl: Option<u64>,
    #[arg(long)]
    store_capacity: Option<usize>,
    /// "static" or an origin base URL (http://host:port)
    #[arg(long)]
    upstream: Option<String>,
    #[arg(long)]
    static_body: Option<String>,
    /// Honor X-Client-IP. Never enable in production.
    #[arg(long)]
    test_mode: bool,
    #[arg(long = "exempt-ip")]
    exempt_ips: Vec<String>,
    #[arg(long)]
    corpus_path: Option<PathBuf>,
    #[arg(long)]
    feature_table_path: Option<PathBuf>,
    #[arg(long)]
    score_table_path: Option<PathBuf>,
    #[arg(long)]
    unknown_client_score: Option<f64>,
}

impl GateArgs {
    fn into_config(self) -> anyhow::Result<GateConfig> {
        let base = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let overrides = ConfigFile {
            listen: self.listen,
            scorer: self.scorer,
            policy: self.policy,
            offset: self.offset,
            epsilon: self.epsilon,
            d_max: self.d_max,
            ttl: self.ttl,
            store_capacity: self.store_capacity,
            upstream: self.upstream,
            static_body: self.static_body,
            test_mode: self.test_mode.then_some(true),
            exempt_ips: (!self.exempt_ips.is_empty()).then_some(self.exempt_ips),
            corpus_path: self.corpus_path,
            feature_table_path: self.feature_table_path,
            score_table_path: self.score_table_path,
            unknown_client_score: self.unknown_client_score,
        };
        Ok(GateConfig::resolve(base.merge(overrides))?)
    }
}

#[derive(Args)]
struct ClientArgs {
    #[arg(long)]
    url: String,
    /// Claim this address via X-Client-IP (test-mode gates only).
    #[arg(long)]
    spoof_ip: Option<String>,
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "policy1,policy2,policy3", value_delimiter = ',')]
    policies: Vec<String>,
    #[arg(long, default_value_t = experiment::DEFAULT_TRIALS)]
    trials: usize,
    /// Inclusive range "0..10" or a list "0,5,10".
    #[arg(long, default_value = "0..10")]
    scores: String,
    #[arg(long, default_value_t = powgate_core::policy::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// "inprocess" or the address of a running test-mode gate.
    #[arg(long, default_value = "inprocess")]
    gate: String,
}

async fn run_client(args: ClientArgs) -> anyhow::Result<bool> {
    let options = Arc::new(ExchangeOptions {
        spoof_ip: args.spoof_ip,
        timeout: Duration::from_millis(args.timeout_ms),
    });
    let url: Arc<str> = args.url.into();
    let permits = Arc::new(tokio::sync::Semaphore::new(args.concurrency.max(1)));
    let mut tasks = Vec::with_capacity(args.repeat);
    for _ in 0..args.repeat {
        let (options, url, permits) = (options.clone(), url.clone(), permits.clone());
        tasks.push(tokio::spawn(async move {
            let _permit = permits.acquire_owned().await.expect("semaphore open");
            client::request_with_pow(&url, &options).await
        }));
    }
    let mut ok = true;
    for task in tasks {
        match task.await? {
            Ok(report) => {
                ok &= report.outcome == 200;
                println!("{}", serde_json::to_string(&report)?);
            }
            Err(err) => {
                ok = false;
                eprintln!("exchange failed: {err}");
            }
        }
    }
    Ok(ok)
}

async fn run_bench(args: BenchArgs) -> anyhow::Result<bool> {
    let spec = ExperimentSpec {
        policies: args.policies,
        scores: experiment::parse_scores(&args.scores)?,
        trials: args.trials,
        epsilon: args.epsilon,
    };
    let report = bench::run_experiment(&spec, &GateTarget::parse(&args.gate)).await?;
    for failure in &report.failures {
        eprintln!("cell {} score {} failed: {}", failure.policy, failure.score, failure.reason);
    }
    if report.rows.is_empty() {
        anyhow::bail!("no cell completed");
    }
    experiment::emit_csv(&report.rows, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {} rows to {}", report.rows.len(), args.out.display());
    Ok(report.failures.is_empty())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();

    let result = match Cli::parse().command {
        Command::Gate(args) => match args.into_config() {
            Ok(config) => gate::run(config).await.map(|_| true),
            Err(e) => Err(e),
        },
        Command::Client(args) => run_client(args).await,
        Command::Bench(args) => run_bench(args).await,
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
