//! Serialization helpers shared by checkpoints and CSV exports.
//!
//! Floats are always written with 17 significant digits, enough to round-trip
//! any `f64` exactly, so re-running a command over its own outputs is
//! byte-stable.

use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// 17-significant-digit scientific form, e.g. `1.2500000000000000e-1`.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

struct G17Formatter;

impl serde_json::ser::Formatter for G17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{}", fmt_g17(value))
    }
}

/// JSON with 17-significant-digit floats and stable field order.
pub fn to_json_g17<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, G17Formatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::InvalidParameter(format!("JSON encoding failed: {e}")))?;
    String::from_utf8(buf).map_err(|e| Error::InvalidParameter(format!("invalid UTF-8: {e}")))
}

pub fn write_json_g17<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<()> {
    let json = to_json_g17(value)?;
    out.write_all(json.as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Hex SHA-256, used to bind classifier checkpoints to the frequency bank
/// they were trained against.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
