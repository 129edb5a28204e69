use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::consolidate::RecordIndex;
use crate::flatten::{make_uid, FlatRecord, UidParts};
use crate::refine::RefinedArtifact;

pub const UNRESOLVED_UID: &str = "unresolved uid";
pub const UID_MISMATCH: &str = "uid mismatch";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustodyBreach {
    pub uid: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustodyReport {
    pub intact: u64,
    pub total: u64,
    pub breaches: Vec<CustodyBreach>,
}

/// Recomputes the UID of a flattened record from its own coordinates.
pub fn recompute_uid(device_id: &str, record: &FlatRecord) -> Option<String> {
    make_uid(&UidParts {
        device_id,
        file_path: &record.path,
        database_name: &record.database,
        table_name: &record.table,
        lid: record.lid,
    })
    .ok()
}

/// Checks that a record's stored UID is the one its coordinates derive.
pub fn verify_record(device_id: &str, record: &FlatRecord) -> Result<(), CustodyBreach> {
    match recompute_uid(device_id, record) {
        Some(uid) if uid == record.uid => Ok(()),
        _ => Err(CustodyBreach {
            uid: record.uid.clone(),
            reason: UID_MISMATCH.into(),
        }),
    }
}

/// An artifact is intact when its UID resolves to a flattened record whose
/// coordinates re-derive that UID. One breach is listed per offending UID.
pub fn audit_custody(artifacts: &[RefinedArtifact], index: &RecordIndex, device_id: &str) -> CustodyReport {
    let mut report = CustodyReport {
        total: artifacts.len() as u64,
        ..Default::default()
    };
    let mut breached: BTreeMap<&str, &str> = BTreeMap::new();
    for a in artifacts {
        let verdict = match index.get(&a.uid) {
            None => Err(UNRESOLVED_UID),
            Some(r) => verify_record(device_id, r).map_err(|_| UID_MISMATCH),
        };
        match verdict {
            Ok(()) => report.intact += 1,
            Err(reason) => {
                breached.entry(&a.uid).or_insert(reason);
            }
        }
    }
    report.breaches = breached
        .into_iter()
        .map(|(uid, reason)| CustodyBreach {
            uid: uid.to_string(),
            reason: reason.to_string(),
        })
        .collect();
    report
}

/// Full UIDs shared by more than one flattened record.
pub fn audit_collisions(records: &[FlatRecord]) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *seen.entry(&r.uid).or_default() += 1;
    }
    seen.into_iter()
        .filter(|(_, n)| *n > 1)
        .map(|(u, _)| u.to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::EntityType;
    use crate::flatten::Pairs;

    fn flat(device: &str, lid: u64) -> FlatRecord {
        let parts = UidParts {
            device_id: device,
            file_path: "/data/data/com.x/databases/",
            database_name: "x.db",
            table_name: "t",
            lid,
        };
        FlatRecord {
            database: "x.db".into(),
            table: "t".into(),
            path: parts.file_path.into(),
            uid: make_uid(&parts).unwrap(),
            lid,
            pairs: Pairs::default(),
        }
    }

    fn art(uid: &str) -> RefinedArtifact {
        RefinedArtifact {
            uid: uid.into(),
            entity_type: EntityType::Email,
            refined_value: "a@b.co".into(),
            confidence: 9,
            engine: "t".into(),
        }
    }

    #[test]
    fn untampered_is_fully_intact() {
        let recs = vec![flat("dev", 1), flat("dev", 2)];
        let arts: Vec<_> = recs.iter().map(|r| art(&r.uid)).collect();
        let idx = RecordIndex::new(recs).unwrap();
        let rep = audit_custody(&arts, &idx, "dev");
        assert_eq!((rep.intact, rep.total), (2, 2));
        assert!(rep.breaches.is_empty());
    }

    #[test]
    fn empty_is_vacuous() {
        let rep = audit_custody(&[], &RecordIndex::default(), "dev");
        assert_eq!(rep, CustodyReport::default());
    }

    #[test]
    fn edited_uid_is_a_mismatch() {
        let mut r = flat("dev", 1);
        let mut bytes = r.uid.clone().into_bytes();
        bytes[0] = if bytes[0] == b'0' { b'1' } else { b'0' };
        r.uid = String::from_utf8(bytes).unwrap();
        let arts = vec![art(&r.uid), art("ffffffff_t_9")];
        let idx = RecordIndex::new([r.clone()]).unwrap();
        let rep = audit_custody(&arts, &idx, "dev");
        assert_eq!(rep.intact, 0);
        assert_eq!(
            rep.breaches,
            vec![
                CustodyBreach {
                    uid: r.uid.clone(),
                    reason: UID_MISMATCH.into()
                },
                CustodyBreach {
                    uid: "ffffffff_t_9".into(),
                    reason: UNRESOLVED_UID.into()
                },
            ]
        );
    }

    #[test]
    fn wrong_device_breaks_custody() {
        let r = flat("dev-a", 1);
        assert!(verify_record("dev-a", &r).is_ok());
        assert!(verify_record("dev-b", &r).is_err());
    }

    #[test]
    fn collisions() {
        assert!(audit_collisions(&[flat("d", 1), flat("d", 2)]).is_empty());
        assert_eq!(audit_collisions(&[flat("d", 1), flat("d", 1)]).len(), 1);
    }
}
