//! Canonical text form of client addresses.
//!
//! IPv4 is a dotted quad, IPv6 is the lowercase compressed form. Both are
//! exactly what `std::net::IpAddr`'s `Display` produces.

use std::net::IpAddr;

/// Parse any textual IP address and return its canonical form.
pub fn canonicalize(text: &str) -> Option<String> {
    text.trim().parse::<IpAddr>().ok().map(|ip| ip.to_string())
}

/// True when `text` is already in canonical form.
pub fn is_canonical(text: &str) -> bool {
    text.parse::<IpAddr>()
        .map(|ip| ip.to_string() == text)
        .unwrap_or(false)
}
