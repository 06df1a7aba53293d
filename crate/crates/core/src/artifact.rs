//! Versioned, digest-protected text artifacts.
//!
//! Every persisted pipeline object uses the same three-part layout:
//!
//! ```text
//! xmlad-<kind> v<version>
//! sha256 <hex digest of the body>
//! <JSON body>
//! ```
//!
//! The body is serialized with a fixed field order, so identical values always
//! produce identical bytes.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("expected a `xmlad-{expected}` artifact, found `{found}`")]
    WrongKind { expected: String, found: String },
    #[error("unsupported {kind} version {found} (this build reads v{expected})")]
    VersionMismatch {
        kind: String,
        expected: u32,
        found: u32,
    },
    #[error("corrupt artifact: {0}")]
    Corrupt(String),
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn encode<T: Serialize>(kind: &str, version: u32, body: &T) -> Result<String, ArtifactError> {
    let json = serde_json::to_string_pretty(body)?;
    let digest = sha256_hex(json.as_bytes());
    Ok(format!(
        "xmlad-{kind} v{version}\nsha256 {digest}\n{json}\n"
    ))
}

/// Reads the `(kind, version)` pair from the header line without validating the body.
pub fn peek_header(text: &str) -> Result<(String, u32), ArtifactError> {
    let line = text
        .lines()
        .next()
        .ok_or_else(|| ArtifactError::Corrupt("empty file".into()))?;
    let (tag, version) = line
        .split_once(' ')
        .ok_or_else(|| ArtifactError::Corrupt(format!("bad header line `{line}`")))?;
    let kind = tag
        .strip_prefix("xmlad-")
        .ok_or_else(|| ArtifactError::Corrupt(format!("bad header line `{line}`")))?;
    let version = version
        .strip_prefix('v')
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| ArtifactError::Corrupt(format!("bad version in `{line}`")))?;
    Ok((kind.to_string(), version))
}

pub fn decode<T: DeserializeOwned>(
    kind: &str,
    version: u32,
    text: &str,
) -> Result<T, ArtifactError> {
    let (found_kind, found_version) = peek_header(text)?;
    if found_kind != kind {
        return Err(ArtifactError::WrongKind {
            expected: kind.to_string(),
            found: format!("xmlad-{found_kind}"),
        });
    }
    if found_version != version {
        return Err(ArtifactError::VersionMismatch {
            kind: kind.to_string(),
            expected: version,
            found: found_version,
        });
    }
    let mut parts = text.splitn(3, '\n');
    parts.next();
    let digest_line = parts
        .next()
        .ok_or_else(|| ArtifactError::Corrupt("missing digest line".into()))?;
    let expected = digest_line
        .strip_prefix("sha256 ")
        .ok_or_else(|| ArtifactError::Corrupt("missing digest line".into()))?;
    let body = parts
        .next()
        .ok_or_else(|| ArtifactError::Corrupt("missing body".into()))?;
    let body = body.strip_suffix('\n').unwrap_or(body);
    if sha256_hex(body.as_bytes()) != expected {
        return Err(ArtifactError::Corrupt("digest mismatch".into()));
    }
    serde_json::from_str(body).map_err(|e| ArtifactError::Corrupt(e.to_string()))
}

pub fn save<T: Serialize>(
    path: &Path,
    kind: &str,
    version: u32,
    body: &T,
) -> Result<(), ArtifactError> {
    let text = encode(kind, version, body)?;
    fs::write(path, text).map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load<T: DeserializeOwned>(
    path: &Path,
    kind: &str,
    version: u32,
) -> Result<T, ArtifactError> {
    decode(kind, version, &read_text(path)?)
}

pub fn read_text(path: &Path) -> Result<String, ArtifactError> {
    fs::read_to_string(path).map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })
}
