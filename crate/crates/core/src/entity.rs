//! The closed set of artifact labels and the value normalization shared by
//! graph node identity and ground-truth matching.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityType {
    AppName,
    Username,
    HumanName,
    PhoneNumber,
    Email,
    SearchKeyword,
    Message,
    MacAddress,
    Longitude,
    Latitude,
    Address,
    Timestamp,
}

impl EntityType {
    pub const ALL: [EntityType; 12] = [
        EntityType::AppName,
        EntityType::Username,
        EntityType::HumanName,
        EntityType::PhoneNumber,
        EntityType::Email,
        EntityType::SearchKeyword,
        EntityType::Message,
        EntityType::MacAddress,
        EntityType::Longitude,
        EntityType::Latitude,
        EntityType::Address,
        EntityType::Timestamp,
    ];

    /// Exact output label.
    pub fn label(self) -> &'static str {
        match self {
            EntityType::AppName => "App Name",
            EntityType::Username => "Username",
            EntityType::HumanName => "Human Name",
            EntityType::PhoneNumber => "Phone Number",
            EntityType::Email => "Email",
            EntityType::SearchKeyword => "Search keyword",
            EntityType::Message => "Message",
            EntityType::MacAddress => "MAC Address",
            EntityType::Longitude => "Longitude",
            EntityType::Latitude => "Latitude",
            EntityType::Address => "Address",
            EntityType::Timestamp => "Timestamp",
        }
    }

    /// Destination CSV for refined artifacts of this type.
    pub fn csv_file_name(self) -> &'static str {
        match self {
            EntityType::AppName => "Appname.csv",
            EntityType::Username => "Username.csv",
            EntityType::HumanName => "Name.csv",
            EntityType::PhoneNumber => "Phone_number.csv",
            EntityType::Email => "Email.csv",
            EntityType::SearchKeyword => "Google_Search.csv",
            EntityType::Message => "Message.csv",
            EntityType::MacAddress => "Mac_addr.csv",
            EntityType::Longitude => "Longitude.csv",
            EntityType::Latitude => "Latitude.csv",
            EntityType::Address => "Address.csv",
            EntityType::Timestamp => "Timestamp.csv",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown entity type {0:?}")]
pub struct UnknownEntityType(pub String);

impl FromStr for EntityType {
    type Err = UnknownEntityType;

    /// Exact label match only.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityType::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| UnknownEntityType(s.to_string()))
    }
}

impl Serialize for EntityType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for EntityType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{entity_type} value {value:?} does not normalize: {reason}")]
pub struct NormalizeError {
    pub entity_type: EntityType,
    pub value: String,
    pub reason: &'static str,
}

/// Canonical form for node identity and matching.
///
/// Trims; case-folds emails; reduces phones to `+digits` (or bare digits
/// when no country prefix is present); uppercases MACs.
pub fn normalize(entity_type: EntityType, value: &str) -> Result<String, NormalizeError> {
    let fail = |reason| NormalizeError {
        entity_type,
        value: value.to_string(),
        reason,
    };
    let v = value.trim();
    if v.is_empty() {
        return Err(fail("empty"));
    }
    match entity_type {
        EntityType::Email => {
            let (local, domain) = v.split_once('@').ok_or_else(|| fail("missing @"))?;
            if local.is_empty() || domain.is_empty() || domain.contains('@') || !domain.contains('.') {
                return Err(fail("not an address"));
            }
            Ok(v.to_lowercase())
        }
        EntityType::PhoneNumber => {
            let mut compact: String = v
                .chars()
                .filter(|c| !matches!(c, ' ' | '-' | '(' | ')' | '.'))
                .collect();
            if let Some(rest) = compact.strip_prefix("00") {
                compact = format!("+{rest}");
            }
            let digits = compact.strip_prefix('+').unwrap_or(&compact);
            if digits.len() < 5 || digits.len() > 15 || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return Err(fail("not a phone number"));
            }
            Ok(compact)
        }
        EntityType::MacAddress => {
            let upper = v.to_ascii_uppercase().replace('-', ":");
            let ok = upper
                .split(':')
                .all(|p| p.len() == 2 && p.bytes().all(|b| b.is_ascii_hexdigit()));
            if !ok {
                return Err(fail("not colon-separated hex pairs"));
            }
            Ok(upper)
        }
        _ => Ok(v.split_whitespace().collect::<Vec<_>>().join(" ")),
    }
}

/// Like [`normalize`] but never fails: falls back to the trimmed input.
pub fn canonical(entity_type: EntityType, value: &str) -> String {
    normalize(entity_type, value).unwrap_or_else(|_| value.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_twelve_labels_round_trip() {
        assert_eq!(EntityType::ALL.len(), 12);
        for t in EntityType::ALL {
            assert_eq!(t.label().parse::<EntityType>().unwrap(), t);
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(serde_json::from_str::<EntityType>(&json).unwrap(), t);
        }
        assert!("email".parse::<EntityType>().is_err());
        assert!("Search Keyword".parse::<EntityType>().is_err());
    }

    #[test]
    fn destination_files() {
        assert_eq!(EntityType::Email.csv_file_name(), "Email.csv");
        assert_eq!(EntityType::PhoneNumber.csv_file_name(), "Phone_number.csv");
        assert_eq!(EntityType::HumanName.csv_file_name(), "Name.csv");
        assert_eq!(EntityType::SearchKeyword.csv_file_name(), "Google_Search.csv");
        assert_eq!(EntityType::MacAddress.csv_file_name(), "Mac_addr.csv");
        assert_eq!(EntityType::AppName.csv_file_name(), "Appname.csv");
        let mut names: Vec<_> = EntityType::ALL.iter().map(|t| t.csv_file_name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 12);
    }

    #[test]
    fn normalization_rules() {
        use EntityType::*;
        assert_eq!(
            normalize(Email, " Heisenbergercarro@Gmail.com ").unwrap(),
            "heisenbergercarro@gmail.com"
        );
        assert!(normalize(Email, "marketing@get@upside").is_err());
        assert_eq!(normalize(PhoneNumber, "+1 (650) 680-8040").unwrap(), "+16506808040");
        assert_eq!(normalize(PhoneNumber, "0044 20 7946 0018").unwrap(), "+442079460018");
        assert!(normalize(PhoneNumber, "call me").is_err());
        assert_eq!(normalize(MacAddress, "34:c7:31:f8:61:3b").unwrap(), "34:C7:31:F8:61:3B");
        assert!(normalize(MacAddress, "34:c7:31:f8:61:3").is_err());
        assert_eq!(
            normalize(SearchKeyword, "  hidden   photos apps ").unwrap(),
            "hidden photos apps"
        );
        assert!(normalize(Timestamp, "   ").is_err());
        assert_eq!(canonical(Email, "no-at-sign"), "no-at-sign");
    }
}
