//! Forward-mode relay to the origin server.

use axum::body::Body;
use axum::http::{header, request, HeaderName, Request, Response, Uri};
use bytes::Bytes;
use http_body_util::{BodyExt, Full};
use powgate_core::wire;

use crate::http1;

#[derive(Debug, thiserror::Error)]
pub enum UpstreamError {
    #[error("bad origin {0:?}")]
    Origin(String),
    #[error("connect: {0}")]
    Connect(#[from] std::io::Error),
    #[error("http: {0}")]
    Http(#[from] hyper::Error),
    #[error("request: {0}")]
    Request(#[from] axum::http::Error),
}

const HOP_BY_HOP: [HeaderName; 4] = [
    header::CONNECTION,
    header::TRANSFER_ENCODING,
    header::TE,
    header::UPGRADE,
];

/// Relay the request to `origin` (`http://host:port`) and return its response.
pub async fn forward(
    origin: &str,
    parts: request::Parts,
    body: Bytes,
) -> Result<Response<Body>, UpstreamError> {
    let authority = origin
        .parse::<Uri>()
        .ok()
        .and_then(|u| u.authority().cloned())
        .ok_or_else(|| UpstreamError::Origin(origin.to_string()))?;
    let path = parts
        .uri
        .path_and_query()
        .map(|p| p.as_str())
        .unwrap_or("/")
        .to_string();

    let mut builder = Request::builder().method(parts.method).uri(path);
    for (name, value) in &parts.headers {
        let skip = HOP_BY_HOP.contains(name)
            || name == header::HOST
            || name.as_str() == wire::SOLUTION_HEADER
            || name.as_str() == wire::CLIENT_IP_HEADER;
        if !skip {
            builder = builder.header(name, value);
        }
    }
    let request = builder
        .header(header::HOST, authority.as_str())
        .body(Full::new(body))?;

    let mut conn = http1::connect(authority.as_str()).await?;
    let response = conn.sender.send_request(request).await?;
    let (mut parts, body) = response.into_parts();
    let body = body.collect().await?.to_bytes();
    for name in &HOP_BY_HOP {
        parts.headers.remove(name);
    }
    Ok(Response::from_parts(parts, Body::from(body)))
}
