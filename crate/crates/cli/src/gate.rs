//! The HTTP gate.
//!
//! Every request without an `X-PoW` header is scored, assigned a difficulty
//! by the configured policy and answered with a 403 challenge. A retried
//! request carrying a solution is verified against the presenting address;
//! on Accept the protected resource is served, otherwise a fresh challenge
//! goes back with an `X-PoW-Reject` reason.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::extract::{ConnectInfo, State};
use axum::http::{header, HeaderMap, HeaderValue, Request, Response, StatusCode};
use axum::routing::get;
use axum::Router;
use parking_lot::Mutex;
use powgate_core::clock::{Clock, SystemClock};
use powgate_core::config::{GateConfig, Upstream};
use powgate_core::ip;
use powgate_core::puzzle::store::{IssueError, RejectReason, SeedStore, VerifyOutcome};
use powgate_core::puzzle::Seed;
use powgate_core::reputation::Scorer;
use powgate_core::wire::{self, ChallengeMessage};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tracing::{debug, info, warn};

use crate::upstream;

/// Largest request body relayed to the origin.
const MAX_BODY_BYTES: usize = 8 << 20;

/// What happened to a request, recorded in order when test mode is on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditEvent {
    Challenged { ip: String, seed: Seed, difficulty: u32 },
    Accepted { ip: String, seed: Seed },
    Rejected { ip: String, seed: Seed, reason: RejectReason },
    /// Resource bytes went out. `seed` is `None` only for exempt clients.
    Served { ip: String, seed: Option<Seed>, status: u16 },
}

#[derive(Debug, Default)]
pub struct AuditLog {
    events: Mutex<Vec<AuditEvent>>,
}

impl AuditLog {
    fn record(&self, event: AuditEvent) {
        self.events.lock().push(event);
    }

    pub fn events(&self) -> Vec<AuditEvent> {
        self.events.lock().clone()
    }

    /// Every served response must follow an Accept for the same seed, and
    /// each Accept may back at most one response. Exempt clients are the
    /// only exception. Returns the offending events.
    pub fn violations(&self, exempt: &dyn Fn(&str) -> bool) -> Vec<AuditEvent> {
        let mut unspent = std::collections::HashSet::new();
        let mut bad = Vec::new();
        for event in self.events.lock().iter() {
            match event {
                AuditEvent::Accepted { seed, .. } => {
                    if !unspent.insert(*seed) {
                        bad.push(event.clone());
                    }
                }
                AuditEvent::Served { seed: Some(seed), .. } => {
                    if !unspent.remove(seed) {
                        bad.push(event.clone());
                    }
                }
                AuditEvent::Served { ip, seed: None, .. } if !exempt(ip) => bad.push(event.clone()),
                _ => {}
            }
        }
        bad
    }
}

/// Shared state behind every request handler.
pub struct GateState {
    config: GateConfig,
    scorer: Scorer,
    store: SeedStore,
    clock: Arc<dyn Clock>,
    audit: Option<AuditLog>,
}

impl GateState {
    pub fn new(config: GateConfig, scorer: Scorer) -> Self {
        Self::with_clock(config, scorer, Arc::new(SystemClock))
    }

    pub fn with_clock(config: GateConfig, scorer: Scorer, clock: Arc<dyn Clock>) -> Self {
        let audit = config.test_mode.then(AuditLog::default);
        Self {
            store: SeedStore::new(config.store),
            config,
            scorer,
            clock,
            audit,
        }
    }

    pub fn config(&self) -> &GateConfig {
        &self.config
    }

    pub fn store(&self) -> &SeedStore {
        &self.store
    }

    pub fn audit(&self) -> Option<&AuditLog> {
        self.audit.as_ref()
    }

    fn record(&self, event: AuditEvent) {
        if let Some(audit) = &self.audit {
            audit.record(event);
        }
    }

    pub fn is_exempt(&self, ip: &str) -> bool {
        self.config.exempt_ips.contains(ip)
    }
}

#[derive(Debug, PartialEq, Eq)]
pub struct MalformedClientIp(pub String);

/// The transport peer, or `X-Client-IP` when test mode is on.
pub fn resolve_client_ip(
    peer: SocketAddr,
    headers: &HeaderMap,
    config: &GateConfig,
) -> Result<String, MalformedClientIp> {
    if config.test_mode {
        if let Some(value) = headers.get(wire::CLIENT_IP_HEADER) {
            let text = value.to_str().unwrap_or_default();
            return ip::canonicalize(text).ok_or_else(|| MalformedClientIp(text.to_string()));
        }
    }
    Ok(peer.ip().to_canonical().to_string())
}

pub fn router(state: Arc<GateState>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .fallback(handle)
        .with_state(state)
}

async fn handle(
    State(state): State<Arc<GateState>>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    request: Request<Body>,
) -> Response<Body> {
    handle_request(&state, peer, request).await
}

/// Gate one request from `peer`.
pub async fn handle_request(state: &GateState, peer: SocketAddr, request: Request<Body>) -> Response<Body> {
    let client_ip = match resolve_client_ip(peer, request.headers(), &state.config) {
        Ok(ip) => ip,
        Err(MalformedClientIp(raw)) => {
            return plain(StatusCode::BAD_REQUEST, format!("malformed client address {raw:?}\n"))
        }
    };

    if state.is_exempt(&client_ip) {
        let response = serve_protected(request, &state.config).await;
        state.record(AuditEvent::Served {
            ip: client_ip,
            seed: None,
            status: response.status().as_u16(),
        });
        return response;
    }

    let Some(header) = request.headers().get(wire::SOLUTION_HEADER) else {
        return challenge(state, &client_ip, None);
    };
    let solution = match header.to_str().map_err(|e| e.to_string()).and_then(|v| {
        wire::parse_solution_header(v).map_err(|e| e.to_string())
    }) {
        Ok(solution) => solution,
        Err(err) => return plain(StatusCode::BAD_REQUEST, format!("bad {} header: {err}\n", wire::SOLUTION_HEADER)),
    };

    match state.store.verify(&solution, &client_ip, &*state.clock) {
        VerifyOutcome::Accept => {
            debug!(ip = %client_ip, seed = %solution.seed, "solution accepted");
            state.record(AuditEvent::Accepted {
                ip: client_ip.clone(),
                seed: solution.seed,
            });
            let response = serve_protected(request, &state.config).await;
            state.record(AuditEvent::Served {
                ip: client_ip,
                seed: Some(solution.seed),
                status: response.status().as_u16(),
            });
            response
        }
        VerifyOutcome::Reject(reason) => {
            debug!(ip = %client_ip, seed = %solution.seed, %reason, "solution rejected");
            state.record(AuditEvent::Rejected {
                ip: client_ip.clone(),
                seed: solution.seed,
                reason,
            });
            challenge(state, &client_ip, Some(reason))
        }
    }
}

/// Score the client, pick a difficulty and issue a challenge.
fn challenge(state: &GateState, client_ip: &str, reason: Option<RejectReason>) -> Response<Body> {
    let score = state.scorer.score_client(client_ip);
    let mut rng = rand::thread_rng();
    let difficulty = state.config.policy.apply(score, &mut rng);
    let issued = state.store.issue(client_ip, difficulty, &*state.clock, &mut rng);
    let challenge = match issued {
        Ok(c) => c,
        Err(IssueError::StoreFull) => {
            warn!("seed store full, shedding load");
            return plain(StatusCode::SERVICE_UNAVAILABLE, "busy\n".into());
        }
        Err(err) => {
            // policy output is clamped to d_max and the address is canonical
            warn!(%err, "cannot issue challenge");
            return plain(StatusCode::INTERNAL_SERVER_ERROR, format!("{err}\n"));
        }
    };
    debug!(ip = %client_ip, %score, d = difficulty.bits(), "challenge issued");
    state.record(AuditEvent::Challenged {
        ip: client_ip.to_string(),
        seed: challenge.seed,
        difficulty: difficulty.bits(),
    });

    let mut response = Response::new(Body::from(ChallengeMessage::from_challenge(&challenge).to_json()));
    *response.status_mut() = StatusCode::FORBIDDEN;
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    headers.insert(wire::REQUIRED_HEADER, HeaderValue::from_static("1"));
    if let Some(reason) = reason {
        headers.insert(wire::REJECT_HEADER, HeaderValue::from_static(reason.as_str()));
    }
    response
}

/// Produce the protected resource for a request whose solution was accepted.
pub async fn serve_protected(request: Request<Body>, config: &GateConfig) -> Response<Body> {
    match &config.upstream {
        Upstream::Static(body) => plain(StatusCode::OK, body.clone()),
        Upstream::Forward(origin) => {
            let (parts, body) = request.into_parts();
            let body = match axum::body::to_bytes(body, MAX_BODY_BYTES).await {
                Ok(bytes) => bytes,
                Err(_) => return plain(StatusCode::PAYLOAD_TOO_LARGE, "request body too large\n".into()),
            };
            match upstream::forward(origin, parts, body).await {
                Ok(response) => response,
                Err(err) => {
                    warn!(%origin, %err, "origin unreachable");
                    plain(StatusCode::BAD_GATEWAY, "origin unreachable\n".into())
                }
            }
        }
    }
}

fn plain(status: StatusCode, body: String) -> Response<Body> {
    let mut response = Response::new(Body::from(body));
    *response.status_mut() = status;
    response
        .headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("text/plain; charset=utf-8"));
    response
}

/// A gate serving on a bound socket.
pub struct RunningGate {
    pub addr: SocketAddr,
    pub state: Arc<GateState>,
    server: JoinHandle<()>,
    purger: JoinHandle<()>,
}

impl RunningGate {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(self) {
        self.server.abort();
        self.purger.abort();
    }
}

/// Serve `state` on `listener` until the returned handle is shut down.
pub fn spawn(listener: TcpListener, state: Arc<GateState>) -> std::io::Result<RunningGate> {
    let addr = listener.local_addr()?;
    let app = router(state.clone()).into_make_service_with_connect_info::<SocketAddr>();
    let server = tokio::spawn(async move {
        if let Err(err) = axum::serve(listener, app).await {
            warn!(%err, "gate server stopped");
        }
    });
    let purger = tokio::spawn(purge_loop(state.clone()));
    info!(%addr, "gate listening");
    Ok(RunningGate {
        addr,
        state,
        server,
        purger,
    })
}

async fn purge_loop(state: Arc<GateState>) {
    let period = Duration::from_secs(state.config.store.ttl.clamp(1, 60));
    let mut ticker = tokio::time::interval(period);
    loop {
        ticker.tick().await;
        let removed = state.store.purge_expired(&*state.clock);
        if removed > 0 {
            debug!(removed, "purged expired seeds");
        }
    }
}

/// Bind the configured address and serve until ctrl-c.
pub async fn run(config: GateConfig) -> anyhow::Result<()> {
    let scorer = config.build_scorer()?;
    let listener = TcpListener::bind(config.listen).await?;
    let gate = spawn(listener, Arc::new(GateState::new(config, scorer)))?;
    tokio::signal::ctrl_c().await?;
    info!("shutting down");
    gate.shutdown();
    Ok::<(), anyhow::Error>(())
}
