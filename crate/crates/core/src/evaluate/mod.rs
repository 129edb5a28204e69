//! Ground-truth matching, hypothesis verdicts, custody auditing and the
//! metric suite.

mod custody;
mod metrics;
mod verdicts;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::consolidate::EvidenceRecord;
use crate::entity::{canonical, normalize, EntityType, NormalizeError};
use crate::graph::{EdgeType, HypothesisInstance};
use crate::refine::RefinedArtifact;

pub use custody::{
    audit_collisions, audit_custody, recompute_uid, verify_record, CustodyBreach, CustodyReport, UID_MISMATCH,
    UNRESOLVED_UID,
};
pub use metrics::{compute_metrics, Metric, Metrics, Tally};
pub use verdicts::{
    append_verdict, read_verdict_log, Applied, HypothesisVerdict, VerdictBook, VerdictCounts, VerdictError,
    VerdictState, VerdictSubmission, VERDICT_LOG_FILE_NAME,
};

pub const GROUND_TRUTH_FILE_NAME: &str = "ground_truth.json";
pub const METRICS_FILE_NAME: &str = "metrics_report.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtArtifact {
    pub entity_type: EntityType,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtRelationship {
    pub type_pair: EdgeType,
    pub values: [String; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub artifacts: Vec<GtArtifact>,
    #[serde(default)]
    pub relationships: Vec<GtRelationship>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub totals: Option<serde_json::Value>,
}

#[derive(Debug, Default)]
struct GtEntry {
    uids: BTreeSet<String>,
    raw_values: BTreeSet<String>,
}

/// Ground truth keyed by normalized value.
#[derive(Debug, Default)]
pub struct GtIndex {
    artifacts: BTreeMap<(EntityType, String), GtEntry>,
    relationships: HashSet<(EdgeType, String, String)>,
    pub errors: Vec<NormalizeError>,
}

impl GtIndex {
    /// Entries whose values fail normalization are excluded and reported.
    pub fn new(gt: &GroundTruth) -> Self {
        let mut idx = GtIndex::default();
        for a in &gt.artifacts {
            match normalize(a.entity_type, &a.value) {
                Ok(v) => {
                    let e = idx.artifacts.entry((a.entity_type, v)).or_default();
                    e.raw_values.insert(a.value.clone());
                    if let Some(uid) = &a.uid {
                        e.uids.insert(uid.clone());
                    }
                }
                Err(e) => idx.errors.push(e),
            }
        }
        for r in &gt.relationships {
            let (x, y) = r.type_pair.endpoints();
            let [v0, v1] = &r.values;
            let mut any = false;
            let mut first_err = None;
            for (a, b) in [(v0, v1), (v1, v0)] {
                match (normalize(x, a), normalize(y, b)) {
                    (Ok(a), Ok(b)) => {
                        idx.relationships.insert((r.type_pair, a, b));
                        any = true;
                    }
                    (Err(e), _) | (_, Err(e)) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            if !any {
                idx.errors.extend(first_err);
            }
        }
        idx
    }

    pub fn contains(&self, entity_type: EntityType, value: &str) -> bool {
        self.artifacts
            .contains_key(&(entity_type, canonical(entity_type, value)))
    }

    pub fn relationship_holds(&self, h: &HypothesisInstance) -> bool {
        self.relationships
            .contains(&(h.type_pair, h.values[0].clone(), h.values[1].clone()))
    }
}

pub struct MatchInput<'a> {
    /// Every refined artifact, before the confidence threshold.
    pub artifacts: &'a [RefinedArtifact],
    pub records: &'a [EvidenceRecord],
    pub hypotheses: &'a [HypothesisInstance],
    pub verdicts: &'a VerdictBook,
    pub custody: &'a CustodyReport,
    pub ground_truth: Option<&'a GroundTruth>,
    /// Count pending unmatched instances as failed connections.
    pub strict: bool,
}

#[derive(Debug, Clone, Default)]
pub struct MatchOutcome {
    pub tally: Tally,
    pub normalization_errors: Vec<NormalizeError>,
}

/// Builds the tally. Without ground truth only the connection and custody
/// fields are filled, leaving the other metrics undefined.
pub fn match_ground_truth(input: &MatchInput<'_>) -> MatchOutcome {
    let empty = GtIndex::default();
    let owned;
    let gt = match input.ground_truth {
        Some(g) => {
            owned = GtIndex::new(g);
            Some(&owned)
        }
        None => None,
    };
    let mut t = Tally {
        artifacts_with_intact_custody: input.custody.intact,
        total_artifacts: input.custody.total,
        ..Tally::default()
    };

    if let Some(gt) = gt {
        let mut produced: HashSet<(EntityType, String)> = HashSet::new();
        t.total_potential_extractions = input.artifacts.len() as u64;
        for a in input.artifacts {
            let key = (a.entity_type, canonical(a.entity_type, &a.refined_value));
            match gt.artifacts.get(&key) {
                Some(entry) => {
                    t.tp += 1;
                    if entry.raw_values.contains(&a.refined_value) {
                        t.exact_value_matches += 1;
                    }
                    if entry.uids.is_empty() || entry.uids.contains(&a.uid) {
                        t.artifacts_matching_context += 1;
                    }
                }
                None => t.fp += 1,
            }
            produced.insert(key);
        }
        t.true_extractions = t.tp;
        t.fn_ = gt.artifacts.keys().filter(|k| !produced.contains(*k)).count() as u64;

        t.total_consolidated = input.records.len() as u64;
        t.correctly_consolidated = input
            .records
            .iter()
            .filter(|r| {
                r.artifacts.iter().all(|a| {
                    gt.artifacts
                        .get(&(a.entity_type, canonical(a.entity_type, &a.refined_value)))
                        .is_none_or(|e| e.uids.is_empty() || e.uids.contains(&r.uid))
                })
            })
            .count() as u64;
    }

    let gt_for_links = gt.unwrap_or(&empty);
    for h in input.hypotheses {
        let state = input
            .verdicts
            .state(&h.edge_id, &h.uid)
            .unwrap_or(VerdictState::Pending);
        match state {
            VerdictState::Valid => {
                t.correct_connections += 1;
                t.total_connections += 1;
            }
            VerdictState::Invalid => t.total_connections += 1,
            VerdictState::Pending => {
                if gt_for_links.relationship_holds(h) {
                    t.correct_connections += 1;
                    t.total_connections += 1;
                } else if input.strict {
                    t.total_connections += 1;
                }
            }
        }
    }

    MatchOutcome {
        tally: t,
        normalization_errors: gt.map(|g| g.errors.clone()).unwrap_or_default(),
    }
}

/// Contents of `metrics_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub engine: String,
    pub min_confidence: u8,
    pub strict: bool,
    pub ground_truth: bool,
    pub generated_at: String,
    pub metrics: Metrics,
    pub tally: Tally,
    pub verdicts: VerdictCounts,
    pub custody_breaches: Vec<CustodyBreach>,
    pub normalization_errors: Vec<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
