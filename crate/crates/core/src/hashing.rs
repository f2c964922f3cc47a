use sha2::{Digest, Sha256};

/// First 16 hex digits of the SHA-256 of `text`.
pub(crate) fn content_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Shortest round-trip rendering, so equal values hash equally.
pub(crate) fn num(x: f64) -> String {
    format!("{x:?}")
}
