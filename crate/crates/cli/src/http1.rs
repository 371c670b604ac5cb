//! Minimal HTTP/1.1 client connections over tokio sockets.

use std::net::SocketAddr;

use bytes::Bytes;
use http_body_util::Full;
use hyper::client::conn::http1::SendRequest;
use hyper_util::rt::TokioIo;
use tokio::net::TcpStream;

/// An open HTTP/1.1 connection plus the local address it was made from.
pub struct Connection {
    pub sender: SendRequest<Full<Bytes>>,
    pub local_addr: SocketAddr,
}

pub async fn connect(authority: &str) -> std::io::Result<Connection> {
    let stream = TcpStream::connect(authority).await?;
    stream.set_nodelay(true)?;
    let local_addr = stream.local_addr()?;
    let (sender, conn) = hyper::client::conn::http1::handshake(TokioIo::new(stream))
        .await
        .map_err(std::io::Error::other)?;
    tokio::spawn(async move {
        // connection errors surface on the next send
        let _ = conn.await;
    });
    Ok(Connection { sender, local_addr })
}
