use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, HeaderValue, Request, Response, StatusCode};
use http_body_util::BodyExt;
use powgate::gate::{self, AuditEvent, GateState, MalformedClientIp};
use powgate_core::clock::ManualClock;
use powgate_core::config::{ConfigFile, GateConfig, Upstream};
use powgate_core::features::ScoreTable;
use powgate_core::puzzle;
use powgate_core::reputation::{ReputationScore, Scorer};
use powgate_core::wire::{self, ChallengeMessage};

const PEER: &str = "192.0.2.9:40000";

fn config(policy: &str) -> GateConfig {
    GateConfig::resolve(ConfigFile {
        policy: Some(policy.into()),
        score_table_path: Some("unused.csv".into()),
        test_mode: Some(true),
        static_body: Some("protected".into()),
        ..Default::default()
    })
    .unwrap()
}

fn scorer(entries: &[(&str, f64)]) -> Scorer {
    let mut table = ScoreTable::default();
    for (ip, s) in entries {
        table.insert(ip, ReputationScore::new(*s).unwrap());
    }
    Scorer::fixture(table)
}

fn state_with(config: GateConfig, clock: Arc<ManualClock>) -> GateState {
    GateState::with_clock(config, scorer(&[("192.0.2.9", 0.0), ("10.0.0.5", 5.0)]), clock)
}

fn peer() -> SocketAddr {
    PEER.parse().unwrap()
}

fn get(pow: Option<&str>) -> Request<Body> {
    let mut b = Request::get("/resource");
    if let Some(pow) = pow {
        b = b.header(wire::SOLUTION_HEADER, pow);
    }
    b.body(Body::empty()).unwrap()
}

async fn body_bytes(r: Response<Body>) -> (StatusCode, HeaderMap, Vec<u8>) {
    let (parts, body) = r.into_parts();
    (parts.status, parts.headers, body.collect().await.unwrap().to_bytes().to_vec())
}

async fn fetch_challenge(state: &GateState) -> ChallengeMessage {
    let (status, headers, body) = body_bytes(gate::handle_request(state, peer(), get(None)).await).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(headers[wire::REQUIRED_HEADER], "1");
    assert_eq!(headers["content-type"], "application/json");
    assert!(headers.get(wire::REJECT_HEADER).is_none());
    ChallengeMessage::parse(&body).unwrap()
}

fn solve_header(msg: &ChallengeMessage, ip: &str) -> String {
    let solved = puzzle::solve(&msg.to_challenge(ip).unwrap(), ip).unwrap();
    wire::format_solution_header(&solved.solution)
}

#[test]
fn client_ip_resolution() {
    let peer: SocketAddr = "192.0.2.9:1234".parse().unwrap();
    let mut headers = HeaderMap::new();
    let prod = GateConfig {
        test_mode: false,
        ..config("policy1")
    };
    let test = config("policy1");
    assert_eq!(gate::resolve_client_ip(peer, &headers, &test).unwrap(), "192.0.2.9");
    headers.insert(wire::CLIENT_IP_HEADER, HeaderValue::from_static("10.0.0.4"));
    assert_eq!(gate::resolve_client_ip(peer, &headers, &test).unwrap(), "10.0.0.4");
    assert_eq!(gate::resolve_client_ip(peer, &headers, &prod).unwrap(), "192.0.2.9");
    headers.insert(wire::CLIENT_IP_HEADER, HeaderValue::from_static("10.0.0.999"));
    assert_eq!(
        gate::resolve_client_ip(peer, &headers, &test),
        Err(MalformedClientIp("10.0.0.999".into()))
    );
    let mapped: SocketAddr = "[::ffff:192.0.2.9]:1234".parse().unwrap();
    assert_eq!(
        gate::resolve_client_ip(mapped, &HeaderMap::new(), &prod).unwrap(),
        "192.0.2.9"
    );
}

#[tokio::test]
async fn challenge_then_resource_then_replay() {
    let state = state_with(config("policy1"), Arc::new(ManualClock::new(1_000)));
    let msg = fetch_challenge(&state).await;
    assert_eq!(msg.d, 1, "score 0 under policy1");
    assert_eq!(msg.ts, 1_000);
    assert_eq!(msg.ttl, 120);

    let pow = solve_header(&msg, "192.0.2.9");
    let (status, _, body) = body_bytes(gate::handle_request(&state, peer(), get(Some(&pow))).await).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"protected");

    let (status, headers, body) = body_bytes(gate::handle_request(&state, peer(), get(Some(&pow))).await).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(headers[wire::REJECT_HEADER], "Replayed");
    let fresh = ChallengeMessage::parse(&body).unwrap();
    assert_ne!(fresh.seed, msg.seed);

    let audit = state.audit().unwrap();
    assert!(audit.violations(&|_| false).is_empty());
    assert!(matches!(audit.events().last(), Some(AuditEvent::Challenged { .. })));
}

#[tokio::test]
async fn every_request_gets_a_fresh_seed() {
    let state = state_with(config("policy2"), Arc::new(ManualClock::new(1)));
    let mut seeds = std::collections::HashSet::new();
    for _ in 0..50 {
        let msg = fetch_challenge(&state).await;
        assert_eq!(msg.d, 5);
        assert!(seeds.insert(msg.seed));
    }
}

#[tokio::test]
async fn reject_reasons_reach_the_wire() {
    let clock = Arc::new(ManualClock::new(1_000));
    let state = state_with(config("policy1"), clock.clone());

    // expired
    let msg = fetch_challenge(&state).await;
    let pow = solve_header(&msg, "192.0.2.9");
    clock.advance(121);
    let (status, headers, _) = body_bytes(gate::handle_request(&state, peer(), get(Some(&pow))).await).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(headers[wire::REJECT_HEADER], "Expired");

    // solution presented from another address
    let msg = fetch_challenge(&state).await;
    let pow = solve_header(&msg, "192.0.2.9");
    let mut req = get(Some(&pow));
    req.headers_mut()
        .insert(wire::CLIENT_IP_HEADER, HeaderValue::from_static("10.0.0.5"));
    let (_, headers, body) = body_bytes(gate::handle_request(&state, peer(), req).await).await;
    assert_eq!(headers[wire::REJECT_HEADER], "WrongClient");
    // the fresh challenge is scored for the presenting client
    assert_eq!(ChallengeMessage::parse(&body).unwrap().d, 6);

    // unknown seed
    let mut forged = wire::parse_solution_header(&pow).unwrap();
    forged.seed.0[15] ^= 0x01;
    let bogus = wire::format_solution_header(&forged);
    let (_, headers, _) = body_bytes(gate::handle_request(&state, peer(), get(Some(&bogus))).await).await;
    assert_eq!(headers[wire::REJECT_HEADER], "UnknownSeed");
}

#[tokio::test]
async fn malformed_headers_are_bad_requests() {
    let state = state_with(config("policy1"), Arc::new(ManualClock::new(1)));
    for bad in ["", "v=1", "garbage;seed=zz", "v=1;seed=00;ts=1;d=1;nonce=00000000"] {
        let r = gate::handle_request(&state, peer(), get(Some(bad))).await;
        assert_eq!(r.status(), StatusCode::BAD_REQUEST, "{bad:?}");
    }
    let mut req = get(None);
    req.headers_mut()
        .insert(wire::CLIENT_IP_HEADER, HeaderValue::from_static("nonsense"));
    assert_eq!(
        gate::handle_request(&state, peer(), req).await.status(),
        StatusCode::BAD_REQUEST
    );
}

#[tokio::test]
async fn full_store_sheds_load() {
    let mut cfg = config("policy1");
    cfg.store.capacity = 1;
    let state = state_with(cfg, Arc::new(ManualClock::new(1)));
    fetch_challenge(&state).await;
    let r = gate::handle_request(&state, peer(), get(None)).await;
    assert_eq!(r.status(), StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn exempt_clients_are_served_directly() {
    let mut cfg = config("policy1");
    cfg.exempt_ips.insert("192.0.2.9".into());
    let state = state_with(cfg, Arc::new(ManualClock::new(1)));
    let (status, _, body) = body_bytes(gate::handle_request(&state, peer(), get(None)).await).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"protected");
    let audit = state.audit().unwrap();
    assert!(audit.violations(&|ip| ip == "192.0.2.9").is_empty());
    assert_eq!(audit.violations(&|_| false).len(), 1);
}

#[tokio::test]
async fn unknown_clients_get_the_hardest_linear_puzzle() {
    let state = state_with(config("policy1"), Arc::new(ManualClock::new(1)));
    let mut req = get(None);
    req.headers_mut()
        .insert(wire::CLIENT_IP_HEADER, HeaderValue::from_static("203.0.113.1"));
    let (_, _, body) = body_bytes(gate::handle_request(&state, peer(), req).await).await;
    assert_eq!(ChallengeMessage::parse(&body).unwrap().d, 11);
}

#[tokio::test]
async fn production_mode_keeps_no_audit_trail() {
    let cfg = GateConfig {
        test_mode: false,
        ..config("policy1")
    };
    let state = state_with(cfg, Arc::new(ManualClock::new(1)));
    fetch_challenge(&state).await;
    assert!(state.audit().is_none());
}

#[test]
fn upstream_modes_are_exclusive() {
    let cfg = config("policy1");
    assert_eq!(cfg.upstream, Upstream::Static("protected".into()));
}
