//! Solving client: request, solve the challenge, retry with the solution.
//!
//! Both rounds go over one keep-alive connection. The client binds its
//! solution to the address the gate sees: the spoofed address when one is
//! given (test-mode gates only), otherwise the local end of the socket.

use std::time::{Duration, Instant};

use axum::http::{header, Request, StatusCode, Uri};
use bytes::Bytes;
use http_body_util::{BodyExt, Full};
use powgate_core::experiment::ExchangeReport;
use powgate_core::ip;
use powgate_core::puzzle::{self, PuzzleError};
use powgate_core::wire::{self, ChallengeMessage};
use thiserror::Error;

use crate::http1;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connection failed: {0}")]
    ConnectionFailed(String),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("solve failed after {attempts} attempts at difficulty {difficulty}")]
    SolveFailed { difficulty: u32, attempts: u64 },
}

#[derive(Debug, Clone)]
pub struct ExchangeOptions {
    pub spoof_ip: Option<String>,
    pub timeout: Duration,
}

impl Default for ExchangeOptions {
    fn default() -> Self {
        Self {
            spoof_ip: None,
            timeout: Duration::from_secs(30),
        }
    }
}

struct Target {
    authority: String,
    path: String,
}

fn parse_url(url: &str) -> Result<Target, ClientError> {
    let uri: Uri = url
        .parse()
        .map_err(|e| ClientError::ConnectionFailed(format!("bad url {url:?}: {e}")))?;
    if uri.scheme_str() != Some("http") {
        return Err(ClientError::ConnectionFailed(format!(
            "only http:// urls are supported, got {url:?}"
        )));
    }
    let authority = uri
        .authority()
        .ok_or_else(|| ClientError::ConnectionFailed(format!("no host in {url:?}")))?;
    let authority = if authority.port().is_some() {
        authority.to_string()
    } else {
        format!("{}:80", authority.host())
    };
    Ok(Target {
        authority,
        path: uri
            .path_and_query()
            .map(|p| p.as_str().to_string())
            .unwrap_or_else(|| "/".into()),
    })
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// One full exchange with no attempt budget.
pub async fn request_with_pow(url: &str, options: &ExchangeOptions) -> Result<ExchangeReport, ClientError> {
    request_with_budget(url, options, |_| u64::MAX).await
}

/// One full exchange. `budget` maps the issued difficulty to the most
/// digest evaluations the solve may spend.
pub async fn request_with_budget(
    url: &str,
    options: &ExchangeOptions,
    budget: impl FnOnce(u32) -> u64,
) -> Result<ExchangeReport, ClientError> {
    let target = parse_url(url)?;
    let spoof = match &options.spoof_ip {
        Some(raw) => Some(
            ip::canonicalize(raw)
                .ok_or_else(|| ClientError::ProtocolError(format!("bad spoof address {raw:?}")))?,
        ),
        None => None,
    };

    let started = Instant::now();
    let mut conn = tokio::time::timeout(options.timeout, http1::connect(&target.authority))
        .await
        .map_err(|_| ClientError::ConnectionFailed("connect timed out".into()))?
        .map_err(|e| ClientError::ConnectionFailed(e.to_string()))?;
    let client_ip = spoof
        .clone()
        .unwrap_or_else(|| conn.local_addr.ip().to_canonical().to_string());

    let (status, headers, body) = send(&mut conn, &target, spoof.as_deref(), None, options.timeout).await?;
    let challenge_rtt = started.elapsed();

    if status != StatusCode::FORBIDDEN || !headers.contains_key(wire::REQUIRED_HEADER) {
        // exempt clients are served on the first round
        return Ok(ExchangeReport {
            challenge_rtt_ms: ms(challenge_rtt),
            total_ms: ms(started.elapsed()),
            outcome: status.as_u16(),
            ..ExchangeReport::default()
        });
    }

    let message = ChallengeMessage::parse(&body).map_err(|e| ClientError::ProtocolError(e.to_string()))?;
    let challenge = message
        .to_challenge(&client_ip)
        .map_err(|e| ClientError::ProtocolError(e.to_string()))?;
    let difficulty = challenge.difficulty.bits();
    let max_attempts = budget(difficulty);

    let solve_started = Instant::now();
    let ip_for_solve = client_ip.clone();
    let solved = tokio::task::spawn_blocking(move || puzzle::solve_within(&challenge, &ip_for_solve, max_attempts))
        .await
        .map_err(|e| ClientError::ProtocolError(format!("solver task: {e}")))?;
    let solve_time = solve_started.elapsed();
    let solved = match solved {
        Ok(solved) => solved,
        Err(PuzzleError::BudgetExceeded(attempts)) => {
            return Err(ClientError::SolveFailed { difficulty, attempts })
        }
        Err(PuzzleError::NonceExhausted) => {
            return Err(ClientError::SolveFailed {
                difficulty,
                attempts: 1 << 32,
            })
        }
        Err(PuzzleError::Malformed(ip)) => {
            return Err(ClientError::ProtocolError(format!("cannot bind puzzle to {ip:?}")))
        }
    };

    let verify_started = Instant::now();
    let pow = wire::format_solution_header(&solved.solution);
    let (status, _, _) = send(&mut conn, &target, spoof.as_deref(), Some(&pow), options.timeout).await?;
    let verify_rtt = verify_started.elapsed();

    Ok(ExchangeReport {
        challenge_rtt_ms: ms(challenge_rtt),
        solve_ms: ms(solve_time),
        attempts: solved.attempts,
        verify_rtt_ms: ms(verify_rtt),
        total_ms: ms(started.elapsed()),
        difficulty,
        outcome: status.as_u16(),
    })
}

async fn send(
    conn: &mut http1::Connection,
    target: &Target,
    spoof: Option<&str>,
    pow: Option<&str>,
    timeout: Duration,
) -> Result<(StatusCode, axum::http::HeaderMap, Bytes), ClientError> {
    let mut builder = Request::get(target.path.as_str()).header(header::HOST, target.authority.as_str());
    if let Some(ip) = spoof {
        builder = builder.header(wire::CLIENT_IP_HEADER, ip);
    }
    if let Some(pow) = pow {
        builder = builder.header(wire::SOLUTION_HEADER, pow);
    }
    let request = builder
        .body(Full::new(Bytes::new()))
        .map_err(|e| ClientError::ProtocolError(e.to_string()))?;

    let exchange = async {
        conn.sender
            .ready()
            .await
            .map_err(|e| ClientError::ConnectionFailed(e.to_string()))?;
        let response = conn
            .sender
            .send_request(request)
            .await
            .map_err(|e| ClientError::ConnectionFailed(e.to_string()))?;
        let (parts, body) = response.into_parts();
        let body = body
            .collect()
            .await
            .map_err(|e| ClientError::ConnectionFailed(e.to_string()))?
            .to_bytes();
        Ok((parts.status, parts.headers, body))
    };
    tokio::time::timeout(timeout, exchange)
        .await
        .map_err(|_| ClientError::ConnectionFailed("request timed out".into()))?
}
