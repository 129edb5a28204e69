use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::RefinedArtifact;
use crate::entity::EntityType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    /// 1-based line in the engine output; 0 when not line-specific.
    pub line: usize,
    pub reason: String,
}

/// Parses a JSON-lines engine response.
///
/// Total: every line yields exactly one artifact or one warning, so the two
/// outputs partition the input lines.
pub fn parse_refinement(
    raw: &str,
    valid_uids: &HashSet<String>,
    engine_id: &str,
) -> (Vec<RefinedArtifact>, Vec<ParseWarning>) {
    let mut artifacts = Vec::new();
    let mut warnings = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        match parse_line(line, valid_uids, engine_id) {
            Ok(a) => artifacts.push(a),
            Err(reason) => warnings.push(ParseWarning {
                line: i + 1,
                reason: reason.to_string(),
            }),
        }
    }
    (artifacts, warnings)
}

fn parse_line(line: &str, valid_uids: &HashSet<String>, engine_id: &str) -> Result<RefinedArtifact, String> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Err("empty line".into());
    }
    let value: Value = serde_json::from_str(trimmed).map_err(|_| "invalid JSON".to_string())?;
    let obj = value.as_object().ok_or("not a JSON object")?;

    let uid = obj.get("uid").and_then(Value::as_str).ok_or("missing uid")?;
    if !valid_uids.contains(uid) {
        return Err(format!("unknown uid {uid:?}"));
    }
    let label = obj
        .get("entity_type")
        .and_then(Value::as_str)
        .ok_or("missing entity_type")?;
    let entity_type: EntityType = label
        .trim()
        .parse()
        .map_err(|_| format!("unknown entity type {label:?}"))?;
    let refined_value = obj
        .get("refined_value")
        .and_then(Value::as_str)
        .map(str::trim)
        .ok_or("missing refined_value")?;
    if refined_value.is_empty() {
        return Err("empty refined value".into());
    }
    let confidence = obj.get("confidence").ok_or("missing confidence")?;
    let confidence = confidence
        .as_i64()
        .or_else(|| confidence.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64))
        .ok_or("confidence not an integer")?;
    if !(1..=10).contains(&confidence) {
        return Err("confidence out of range".into());
    }
    Ok(RefinedArtifact {
        uid: uid.to_string(),
        entity_type,
        refined_value: refined_value.to_string(),
        confidence: confidence as u8,
        engine: engine_id.to_string(),
    })
}
