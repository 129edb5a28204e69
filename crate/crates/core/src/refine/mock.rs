//! Deterministic rule-based refinement, used offline and in tests.
//!
//! De-obfuscation is limited to replacing `\xNN` escapes with spaces and
//! trimming delimiter junk; nothing is reconstructed.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;

use super::apps::app_name_for_package;
use super::timestamp::{normalize_timestamp, EpochUnit, DEFAULT_ZONE};
use super::{EngineError, EngineOutput, RefineError, RefinedArtifact, RefinementEngine};
use crate::entity::EntityType;
use crate::flatten::FlatRecord;

pub const MOCK_ENGINE_ID: &str = "mock-rules-v1";

// 2001-09-09T01:46:40Z ..= 2030-12-31T23:59:59Z
const EPOCH_MIN_SECS: i64 = 1_000_000_000;
const EPOCH_MAX_SECS: i64 = 1_924_991_999;

static ESCAPE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\\x[0-9a-fA-F]{2}").unwrap());
static EMAIL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}").unwrap());
static PHONE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\+[0-9]+").unwrap());
static MAC: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[0-9A-Fa-f:]+").unwrap());
static DIGITS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[0-9]+").unwrap());
static FULL_NAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?:^|[^A-Za-z0-9_])f?ull_name"?\s*:\s*"([^"]+)""#).unwrap());
static DECIMAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^-?[0-9]{1,3}\.[0-9]+$").unwrap());

const SEARCH_SUFFIX: &str = " - Google Search";

/// The rule engine. Timestamps render in `zone`.
#[derive(Debug, Clone)]
pub struct MockEngine {
    zone: String,
}

impl Default for MockEngine {
    fn default() -> Self {
        Self {
            zone: DEFAULT_ZONE.to_string(),
        }
    }
}

impl MockEngine {
    pub fn new(zone: impl Into<String>) -> Result<Self, RefineError> {
        let zone = zone.into();
        normalize_timestamp(0, EpochUnit::Seconds, &zone)?;
        Ok(Self { zone })
    }

    pub fn refine_record(&self, record: &FlatRecord) -> Vec<RefinedArtifact> {
        let mut found: Vec<(EntityType, String, u8)> = Vec::new();
        for (column, value) in record.pairs.iter() {
            extract_pair(column, value, &self.zone, &mut found);
        }
        let mut seen = HashSet::new();
        found
            .into_iter()
            .filter(|(t, v, _)| seen.insert((*t, v.clone())))
            .map(|(entity_type, refined_value, confidence)| RefinedArtifact {
                uid: record.uid.clone(),
                entity_type,
                refined_value,
                confidence,
                engine: MOCK_ENGINE_ID.to_string(),
            })
            .collect()
    }
}

impl RefinementEngine for MockEngine {
    fn id(&self) -> &str {
        MOCK_ENGINE_ID
    }

    fn refine(&self, batch: &[FlatRecord]) -> Result<EngineOutput, EngineError> {
        Ok(EngineOutput {
            artifacts: batch.iter().flat_map(|r| self.refine_record(r)).collect(),
            warnings: Vec::new(),
        })
    }
}

/// [`MockEngine`] with the default zone.
pub fn mock_refine(record: &FlatRecord) -> Vec<RefinedArtifact> {
    MockEngine::default().refine_record(record)
}

fn strip_escapes(value: &str) -> String {
    ESCAPE.replace_all(value, " ").into_owned()
}

fn trim_junk(s: &str) -> &str {
    s.trim_matches(|c: char| matches!(c, '.' | '-' | '_' | '+' | '%'))
}

fn char_before(s: &str, idx: usize) -> Option<char> {
    s[..idx].chars().next_back()
}

fn char_after(s: &str, idx: usize) -> Option<char> {
    s[idx..].chars().next()
}

fn extract_pair(column: &str, value: &str, zone: &str, out: &mut Vec<(EntityType, String, u8)>) {
    let text = strip_escapes(value);
    let column_lc = column.to_ascii_lowercase();

    for m in EMAIL.find_iter(&text) {
        let email = trim_junk(m.as_str());
        if email.contains('@') && !email.starts_with('@') {
            out.push((EntityType::Email, email.to_string(), 9));
        }
    }

    for m in PHONE.find_iter(&text) {
        let digits = m.as_str().len() - 1;
        let glued = char_before(&text, m.start()).is_some_and(|c| c.is_ascii_alphanumeric());
        if (8..=15).contains(&digits) && !glued {
            out.push((EntityType::PhoneNumber, m.as_str().to_string(), 9));
        }
    }

    for m in MAC.find_iter(&text) {
        let s = m.as_str();
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() == 6 && parts.iter().all(|p| p.len() == 2) {
            out.push((EntityType::MacAddress, s.to_ascii_uppercase(), 10));
        }
    }

    for m in DIGITS.find_iter(&text) {
        let before = char_before(&text, m.start());
        let after = char_after(&text, m.end());
        if before.is_some_and(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '.' | ':' | '-'))
            || after.is_some_and(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | ':'))
        {
            continue;
        }
        let (unit, secs) = match m.as_str().len() {
            13 => (EpochUnit::Millis, m.as_str().parse::<i64>().ok().map(|v| v / 1000)),
            10 => (EpochUnit::Seconds, m.as_str().parse::<i64>().ok()),
            _ => continue,
        };
        let Some(secs) = secs else { continue };
        if !(EPOCH_MIN_SECS..=EPOCH_MAX_SECS).contains(&secs) {
            continue;
        }
        let epoch: i64 = m.as_str().parse().expect("digit run");
        if let Ok(rendered) = normalize_timestamp(epoch, unit, zone) {
            out.push((EntityType::Timestamp, rendered, 8));
        }
    }

    for segment in text.split(|c: char| c == '/' || c.is_whitespace()) {
        if let Some(app) = app_name_for_package(segment) {
            out.push((EntityType::AppName, app.name, if app.known { 9 } else { 6 }));
        }
    }

    if column_lc == "title" {
        if let Some(query) = text.trim().strip_suffix(SEARCH_SUFFIX) {
            let query = query.trim();
            if !query.is_empty() {
                out.push((EntityType::SearchKeyword, query.to_string(), 9));
            }
        }
    }

    for cap in FULL_NAME.captures_iter(&text) {
        let name = cap[1].trim();
        if !name.is_empty() {
            out.push((EntityType::HumanName, name.to_string(), 7));
        }
    }

    let plain = text.trim();
    match column_lc.as_str() {
        "latitude" | "lat" if in_range(plain, 90.0) => out.push((EntityType::Latitude, plain.to_string(), 6)),
        "longitude" | "lon" | "lng" if in_range(plain, 180.0) => {
            out.push((EntityType::Longitude, plain.to_string(), 6))
        }
        "username" | "user_name" | "screen_name"
            if !plain.is_empty() && plain.len() <= 64 && !plain.contains(char::is_whitespace) =>
        {
            out.push((EntityType::Username, plain.to_string(), 6))
        }
        "message" | "body" | "text" if plain.chars().any(char::is_alphabetic) && !plain.contains("\\x") => {
            out.push((EntityType::Message, plain.to_string(), 5))
        }
        "address"
            if plain.chars().any(|c| c.is_ascii_digit())
                && plain.chars().any(char::is_alphabetic)
                && plain.contains(' ')
                && !plain.contains(':') =>
        {
            out.push((EntityType::Address, plain.to_string(), 5))
        }
        _ => {}
    }
}

fn in_range(s: &str, bound: f64) -> bool {
    DECIMAL.is_match(s) && s.parse::<f64>().is_ok_and(|v| v.abs() <= bound && v != 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flatten::Pairs;

    fn record(column: &str, value: &str) -> FlatRecord {
        FlatRecord {
            database: "x.db".into(),
            table: "t".into(),
            path: "/data/data/com.x/databases/".into(),
            uid: "00000000_t_1".into(),
            lid: 1,
            pairs: Pairs(vec![(column.into(), value.into())]),
        }
    }

    fn one(column: &str, value: &str) -> (EntityType, String, u8) {
        let out = mock_refine(&record(column, value));
        assert_eq!(out.len(), 1, "{out:?}");
        (out[0].entity_type, out[0].refined_value.clone(), out[0].confidence)
    }

    #[test]
    fn obfuscated_email() {
        let v = "\\x0a\\x08a\\x19heisenbergercarro@gmail.com--\\x00\\x12";
        assert_eq!(
            one("realVal", v),
            (EntityType::Email, "heisenbergercarro@gmail.com".into(), 9)
        );
    }

    #[test]
    fn protobuf_epoch_millis() {
        let v = "\\x03\\x0f\"1617477858090\"\\xe2\\x03";
        assert_eq!(
            one("proto", v),
            (EntityType::Timestamp, "03 April 2021 15:24:18".into(), 8)
        );
    }

    #[test]
    fn phone_from_blob() {
        let v = "n\\x0c+16506808040\\x12\\x09\\x0a\\x01";
        assert_eq!(one("blobVal", v), (EntityType::PhoneNumber, "+16506808040".into(), 9));
    }

    #[test]
    fn truncated_full_name_key() {
        let v = "\"ull_name\":\"Marsha Mellos\",\"profile_url\":\"\"";
        assert_eq!(one("Data", v), (EntityType::HumanName, "Marsha Mellos".into(), 7));
        let v = "{\"id\":7,\"full_name\":\"Beth Dutton\"}";
        assert_eq!(one("Data", v), (EntityType::HumanName, "Beth Dutton".into(), 7));
    }

    #[test]
    fn google_search_title() {
        assert_eq!(
            one("title", "hidden photos apps - Google Search"),
            (EntityType::SearchKeyword, "hidden photos apps".into(), 9)
        );
        assert!(mock_refine(&record("url", "hidden photos apps - Google Search")).is_empty());
    }

    #[test]
    fn mac_uppercased() {
        assert_eq!(
            one("address", "34:c7:31:f8:61:3b"),
            (EntityType::MacAddress, "34:C7:31:F8:61:3B".into(), 10)
        );
        assert!(mock_refine(&record("address", "2C:6B:7D:1D:21")).is_empty());
    }

    #[test]
    fn app_name_from_path_value() {
        assert_eq!(
            one("DPath", "/data/user/0/com.instagram.android/databases/direct.db"),
            (EntityType::AppName, "Instagram".into(), 9)
        );
        assert_eq!(
            one("pkg", "com.acme.carfinder"),
            (EntityType::AppName, "Carfinder".into(), 6)
        );
    }

    #[test]
    fn nothing_to_extract() {
        for (c, v) in [
            ("id", "42"),
            ("flag", ""),
            ("note", "lorem ipsum"),
            ("size", "98765432101"),
        ] {
            assert!(mock_refine(&record(c, v)).is_empty(), "{c}={v}");
        }
    }

    #[test]
    fn epoch_window() {
        assert!(mock_refine(&record("t", "0999999999")).is_empty());
        assert!(mock_refine(&record("t", "1924992000")).is_empty());
        assert!(mock_refine(&record("t", "0999999999000")).is_empty());
        assert_eq!(one("t", "1000000000").0, EntityType::Timestamp);
        assert_eq!(one("t", "1924991999999").0, EntityType::Timestamp);
    }

    #[test]
    fn minimal_rules_for_unanchored_types() {
        assert_eq!(one("latitude", "38.9012").0, EntityType::Latitude);
        assert_eq!(one("lng", "-77.2653").0, EntityType::Longitude);
        assert_eq!(one("username", "heisenberg_cars").0, EntityType::Username);
        assert_eq!(one("body", "meet me at the lot").0, EntityType::Message);
        assert_eq!(one("address", "1600 Main St Vienna VA").0, EntityType::Address);
    }

    #[test]
    fn deterministic_and_deduplicated() {
        let mut r = record("a", "x@y.com x@y.com");
        r.pairs.0.push(("b".into(), "x@y.com".into()));
        let first = mock_refine(&r);
        assert_eq!(first.len(), 1);
        assert_eq!(first, mock_refine(&r));
    }
}
