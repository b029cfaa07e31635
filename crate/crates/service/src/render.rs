//! The JSON encoding shared by the HTTP API and the CLI, so both emit the
//! same bytes for the same state.

use serde::Serialize;

/// Compact JSON followed by a newline.
pub fn json<T: Serialize + ?Sized>(value: &T) -> termset_core::Result<String> {
    let mut s = serde_json::to_string(value)?;
    s.push('\n');
    Ok(s)
}
