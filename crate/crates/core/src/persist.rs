//! Shared file-format plumbing: the standard header line every output file
//! starts with, a stable config fingerprint, and small IO helpers. All files
//! are plain text with LF line endings.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "laconic";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Standard first line of every output file: tool version, config hash, seed.
pub fn header_line(config_hash: &str, seed: u64) -> String {
    format!("# {TOOL_NAME} v{TOOL_VERSION} config={config_hash} seed={seed}")
}

/// Verifies that a file begins with a header written by [`header_line`].
pub fn check_header(path: &Path, line: &str) -> Result<()> {
    if line.starts_with(&format!("# {TOOL_NAME} v")) {
        Ok(())
    } else {
        Err(Error::Parse {
            path: path.display().to_string(),
            message: format!("missing tool header, found {line:?}"),
        })
    }
}

/// Extracts the `seed=` field from a header line.
pub fn header_seed(path: &Path, line: &str) -> Result<u64> {
    check_header(path, line)?;
    for field in line.split_whitespace() {
        if let Some(value) = field.strip_prefix("seed=") {
            return value.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                message: format!("bad seed field {value:?}"),
            });
        }
    }
    Err(Error::Parse {
        path: path.display().to_string(),
        message: "header lacks a seed field".into(),
    })
}

/// 64-bit FNV-1a over a byte string; stable across platforms and runs, which
/// is all a config fingerprint needs.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}
