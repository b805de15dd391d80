//! Scenario files: JSON documents matching `schema/scenario.schema.json`.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Scenario;

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse { line: inner.line(), column: inner.column(), field, message: strip_position(&inner.to_string()) }
    })?;
    scenario.check()?;
    Ok(scenario)
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(k) => msg[..k].to_string(),
        None => msg.to_string(),
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_scenario(&text)
}

/// Pretty-printed JSON for a scenario.
pub fn to_json(s: &Scenario) -> String {
    let mut out = serde_json::to_string_pretty(s).expect("scenario serialises");
    out.push('\n');
    out
}

/// SHA-256 over the compact JSON form, hex encoded.
pub fn fingerprint(s: &Scenario) -> String {
    let bytes = serde_json::to_vec(s).expect("scenario serialises");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
