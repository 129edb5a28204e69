//! Groups refined artifacts by source UID into evidence records.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flatten::FlatRecord;
use crate::refine::RefinedArtifact;

pub const EVIDENCE_FILE_NAME: &str = "evidence_records.jsonl";

#[derive(Debug, Error)]
pub enum ConsolidateError {
    #[error("chain-of-custody breach: artifact uid {0} has no flattened record")]
    DanglingUid(String),
    #[error("uid {0} identifies more than one flattened record")]
    DuplicateUid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed evidence record on line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Flattened records keyed by UID.
#[derive(Debug, Clone, Default)]
pub struct RecordIndex {
    by_uid: HashMap<String, FlatRecord>,
}

impl RecordIndex {
    pub fn new(records: impl IntoIterator<Item = FlatRecord>) -> Result<Self, ConsolidateError> {
        let mut by_uid = HashMap::new();
        for r in records {
            if let Some(prev) = by_uid.insert(r.uid.clone(), r) {
                return Err(ConsolidateError::DuplicateUid(prev.uid));
            }
        }
        Ok(Self { by_uid })
    }

    pub fn get(&self, uid: &str) -> Option<&FlatRecord> {
        self.by_uid.get(uid)
    }

    pub fn len(&self) -> usize {
        self.by_uid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_uid.is_empty()
    }
}

/// Coordinates of the raw row an evidence record came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceKeys {
    pub database: String,
    pub table: String,
    pub path: String,
    pub lid: u64,
}

impl From<&FlatRecord> for SourceKeys {
    fn from(r: &FlatRecord) -> Self {
        Self {
            database: r.database.clone(),
            table: r.table.clone(),
            path: r.path.clone(),
            lid: r.lid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub uid: String,
    pub source: SourceKeys,
    pub artifacts: Vec<RefinedArtifact>,
}

/// Groups artifacts by UID, keeping input order within a group; output is
/// ordered by UID. Duplicate values inside a group are kept.
pub fn consolidate(
    artifacts: &[RefinedArtifact],
    index: &RecordIndex,
) -> Result<Vec<EvidenceRecord>, ConsolidateError> {
    let mut groups: BTreeMap<&str, Vec<RefinedArtifact>> = BTreeMap::new();
    for a in artifacts {
        if index.get(&a.uid).is_none() {
            return Err(ConsolidateError::DanglingUid(a.uid.clone()));
        }
        groups.entry(a.uid.as_str()).or_default().push(a.clone());
    }
    Ok(groups
        .into_iter()
        .map(|(uid, artifacts)| EvidenceRecord {
            uid: uid.to_string(),
            source: SourceKeys::from(index.get(uid).expect("checked above")),
            artifacts,
        })
        .collect())
}

pub fn write_evidence_jsonl<W: Write>(mut out: W, records: &[EvidenceRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_evidence_jsonl<R: BufRead>(input: R) -> Result<Vec<EvidenceRecord>, ConsolidateError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ConsolidateError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::EntityType;
    use crate::flatten::Pairs;

    fn flat(uid: &str) -> FlatRecord {
        FlatRecord {
            database: "d.db".into(),
            table: "t".into(),
            path: "/p/".into(),
            uid: uid.into(),
            lid: 1,
            pairs: Pairs::default(),
        }
    }

    fn art(uid: &str, v: &str) -> RefinedArtifact {
        RefinedArtifact {
            uid: uid.into(),
            entity_type: EntityType::Email,
            refined_value: v.into(),
            confidence: 9,
            engine: "t".into(),
        }
    }

    fn index(uids: &[&str]) -> RecordIndex {
        RecordIndex::new(uids.iter().map(|u| flat(u))).unwrap()
    }

    #[test]
    fn groups_by_uid_in_uid_order() {
        let idx = index(&["a", "b", "c"]);
        let input: Vec<_> = ["c", "a", "c", "b", "a", "c"]
            .iter()
            .enumerate()
            .map(|(i, u)| art(u, &i.to_string()))
            .collect();
        let out = consolidate(&input, &idx).unwrap();
        let shape: Vec<_> = out.iter().map(|r| (r.uid.as_str(), r.artifacts.len())).collect();
        assert_eq!(shape, [("a", 2), ("b", 1), ("c", 3)]);
        let c: Vec<_> = out[2].artifacts.iter().map(|a| a.refined_value.as_str()).collect();
        assert_eq!(c, ["0", "2", "5"]);
    }

    #[test]
    fn single_and_empty() {
        let idx = index(&["a"]);
        assert_eq!(consolidate(&[art("a", "x")], &idx).unwrap().len(), 1);
        assert!(consolidate(&[], &idx).unwrap().is_empty());
    }

    #[test]
    fn dangling_uid_is_a_breach() {
        let idx = index(&["a"]);
        assert!(matches!(
            consolidate(&[art("zz", "x")], &idx),
            Err(ConsolidateError::DanglingUid(u)) if u == "zz"
        ));
    }

    #[test]
    fn duplicate_index_uid_rejected() {
        assert!(matches!(
            RecordIndex::new([flat("a"), flat("a")]),
            Err(ConsolidateError::DuplicateUid(_))
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let idx = index(&["a", "b"]);
        let recs = consolidate(&[art("b", "1"), art("a", "2")], &idx).unwrap();
        let mut buf = Vec::new();
        write_evidence_jsonl(&mut buf, &recs).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 2);
        assert_eq!(read_evidence_jsonl(&buf[..]).unwrap(), recs);
    }
}
