//! Artifact refinement: engines turn flattened rows into typed,
//! confidence-scored artifacts that keep their source UID.

mod apps;
mod mock;
mod parse;
mod prompt;
mod remote;
mod timestamp;

use std::collections::HashSet;
use std::io::Write;
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::entity::EntityType;
use crate::flatten::FlatRecord;

pub use apps::{app_from_path, app_name_for_package, AppMatch};
pub use mock::{mock_refine, MockEngine, MOCK_ENGINE_ID};
pub use parse::{parse_refinement, ParseWarning};
pub use prompt::{build_prompt, record_line, Prompt, REFINEMENT_INSTRUCTIONS, RESPONSE_FORMAT_DIRECTIVE};
pub use remote::{RemoteEngine, RemoteEngineConfig, TOKEN_ENV_VAR};
pub use timestamp::{normalize_timestamp, EpochUnit, DEFAULT_ZONE};

pub const DEFAULT_MIN_CONFIDENCE: u8 = 5;
pub const DEFAULT_BATCH_SIZE: usize = 40;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("cannot build a prompt for an empty batch")]
    EmptyBatch,
    #[error("epoch {0} is outside the representable range")]
    OutOfRangeEpoch(i64),
    #[error("unknown time zone {0:?}")]
    UnknownZone(String),
    #[error("confidence threshold {0} outside 1..=10")]
    InvalidThreshold(u8),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("prompt: {0}")]
    Prompt(#[from] RefineError),
    #[error("transport: {0}")]
    Transport(String),
    #[error("engine returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed engine response: {0}")]
    MalformedResponse(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RefinedArtifact {
    pub uid: String,
    pub entity_type: EntityType,
    pub refined_value: String,
    /// 1..=10
    pub confidence: u8,
    pub engine: String,
}

/// Anything that can refine a batch of records.
///
/// Implementations must not mutate the records and may only emit UIDs that
/// appear in the batch.
pub trait RefinementEngine: Send + Sync {
    fn id(&self) -> &str;
    fn refine(&self, batch: &[FlatRecord]) -> Result<EngineOutput, EngineError>;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EngineOutput {
    pub artifacts: Vec<RefinedArtifact>,
    pub warnings: Vec<ParseWarning>,
}

/// Keeps artifacts with `confidence >= min_confidence`, in order.
pub fn apply_threshold(artifacts: &[RefinedArtifact], min_confidence: u8) -> Result<Vec<RefinedArtifact>, RefineError> {
    check_threshold(min_confidence)?;
    Ok(artifacts
        .iter()
        .filter(|a| a.confidence >= min_confidence)
        .cloned()
        .collect())
}

pub fn check_threshold(min_confidence: u8) -> Result<(), RefineError> {
    if (1..=10).contains(&min_confidence) {
        Ok(())
    } else {
        Err(RefineError::InvalidThreshold(min_confidence))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RefineOptions {
    pub batch_size: NonZeroUsize,
    pub max_in_flight: NonZeroUsize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            batch_size: NonZeroUsize::new(DEFAULT_BATCH_SIZE).unwrap(),
            max_in_flight: NonZeroUsize::new(DEFAULT_MAX_IN_FLIGHT).unwrap(),
        }
    }
}

/// A batch the engine could not refine; the run continues without it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnrefinedBatch {
    pub uids: Vec<String>,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefineOutcome {
    pub artifacts: Vec<RefinedArtifact>,
    pub warnings: Vec<ParseWarning>,
    pub unrefined: Vec<UnrefinedBatch>,
}

/// Runs `engine` over `records` in batches with a bounded number of batches
/// in flight. Artifacts are merged in UID order (stable within a UID).
pub fn refine_records(engine: &dyn RefinementEngine, records: &[FlatRecord], options: RefineOptions) -> RefineOutcome {
    let batches: Vec<&[FlatRecord]> = records.chunks(options.batch_size.get()).collect();
    let results: Vec<Mutex<Option<Result<EngineOutput, EngineError>>>> =
        batches.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = options.max_in_flight.get().min(batches.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(batch) = batches.get(i) else { break };
                let result = engine.refine(batch);
                *results[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut outcome = RefineOutcome::default();
    for (batch, slot) in batches.iter().zip(results) {
        let uids: HashSet<&str> = batch.iter().map(|r| r.uid.as_str()).collect();
        match slot.into_inner().unwrap().expect("every batch is processed") {
            Ok(out) => {
                for artifact in out.artifacts {
                    if !uids.contains(artifact.uid.as_str()) {
                        warn!(uid = %artifact.uid, "engine emitted a uid outside its batch; dropped");
                        outcome.warnings.push(ParseWarning {
                            line: 0,
                            reason: format!("uid {} not in batch", artifact.uid),
                        });
                        continue;
                    }
                    outcome.artifacts.push(artifact);
                }
                outcome.warnings.extend(out.warnings);
            }
            Err(err) => {
                warn!("batch left unrefined: {err}");
                outcome.unrefined.push(UnrefinedBatch {
                    uids: batch.iter().map(|r| r.uid.clone()).collect(),
                    error: err.to_string(),
                });
            }
        }
    }
    outcome.artifacts.sort_by(|a, b| a.uid.cmp(&b.uid));
    info!(
        engine = engine.id(),
        artifacts = outcome.artifacts.len(),
        unrefined = outcome.unrefined.len(),
        "refinement finished"
    );
    outcome
}

/// Writes `uid,refined_value,confidence` rows for one entity type.
pub fn write_artifact_csv<W: Write>(
    out: W,
    artifacts: &[RefinedArtifact],
    entity_type: EntityType,
) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["uid", "refined_value", "confidence"])?;
    for a in artifacts.iter().filter(|a| a.entity_type == entity_type) {
        w.write_record([a.uid.as_str(), &a.refined_value, &a.confidence.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flatten::Pairs;

    fn artifact(uid: &str, confidence: u8) -> RefinedArtifact {
        RefinedArtifact {
            uid: uid.into(),
            entity_type: EntityType::Email,
            refined_value: "a@b.co".into(),
            confidence,
            engine: "t".into(),
        }
    }

    #[test]
    fn threshold_examples() {
        let confidences: Vec<_> = [10, 7, 9].iter().map(|&c| artifact("u", c)).collect();
        assert_eq!(apply_threshold(&confidences, 5).unwrap().len(), 3);
        let edge: Vec<_> = [4, 5, 6].iter().map(|&c| artifact("u", c)).collect();
        let kept = apply_threshold(&edge, 5).unwrap();
        assert_eq!(kept.iter().map(|a| a.confidence).collect::<Vec<_>>(), [5, 6]);
        assert_eq!(apply_threshold(&edge, 1).unwrap(), edge);
        assert!(apply_threshold(&edge, 0).is_err());
        assert!(apply_threshold(&edge, 11).is_err());
    }

    struct Flaky;
    impl RefinementEngine for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }
        fn refine(&self, batch: &[FlatRecord]) -> Result<EngineOutput, EngineError> {
            if batch.iter().any(|r| r.lid == 3) {
                return Err(EngineError::Transport("boom".into()));
            }
            let mut artifacts: Vec<_> = batch.iter().rev().map(|r| artifact(&r.uid, 9)).collect();
            artifacts.push(artifact("zzzzzzzz_foreign_1", 9));
            Ok(EngineOutput {
                artifacts,
                warnings: vec![],
            })
        }
    }

    fn record(lid: u64) -> FlatRecord {
        FlatRecord {
            database: "d".into(),
            table: "t".into(),
            path: "/".into(),
            uid: format!("0000000{}_t_{lid}", lid % 10),
            lid,
            pairs: Pairs::default(),
        }
    }

    #[test]
    fn runner_isolates_failed_batches_and_orders_output() {
        let records: Vec<_> = (1..=6).map(record).collect();
        let opts = RefineOptions {
            batch_size: NonZeroUsize::new(2).unwrap(),
            max_in_flight: NonZeroUsize::new(3).unwrap(),
        };
        let out = refine_records(&Flaky, &records, opts);
        assert_eq!(out.unrefined.len(), 1);
        assert_eq!(out.unrefined[0].uids, ["00000003_t_3", "00000004_t_4"]);
        let uids: Vec<_> = out.artifacts.iter().map(|a| a.uid.as_str()).collect();
        assert_eq!(uids, ["00000001_t_1", "00000002_t_2", "00000005_t_5", "00000006_t_6"]);
        // one foreign uid per successful batch is dropped with a warning
        assert_eq!(out.warnings.len(), 2);
    }

    #[test]
    fn artifact_csv_filters_by_type() {
        let mut a = artifact("u1", 10);
        a.refined_value = "x, y".into();
        let mut b = artifact("u2", 9);
        b.entity_type = EntityType::Timestamp;
        let mut buf = Vec::new();
        write_artifact_csv(&mut buf, &[a, b], EntityType::Email).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "uid,refined_value,confidence\nu1,\"x, y\",10\n"
        );
    }
}
