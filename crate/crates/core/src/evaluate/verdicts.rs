use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::HypothesisInstance;

pub const VERDICT_LOG_FILE_NAME: &str = "verdicts.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictState {
    Pending,
    Valid,
    Invalid,
}

impl fmt::Display for VerdictState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictState::Pending => "pending",
            VerdictState::Valid => "valid",
            VerdictState::Invalid => "invalid",
        })
    }
}

/// A reviewer's request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSubmission {
    pub edge_id: String,
    pub uid: String,
    pub verdict: VerdictState,
    pub reviewer: String,
    #[serde(default)]
    pub note: String,
}

/// A recorded decision, one line of the verdict log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisVerdict {
    pub edge_id: String,
    pub uid: String,
    pub verdict: VerdictState,
    pub reviewer: String,
    pub note: String,
    pub decided_at: String,
}

#[derive(Debug, Error)]
pub enum VerdictError {
    #[error("no hypothesis instance for edge {edge_id} and uid {uid}")]
    UnknownEdge { edge_id: String, uid: String },
    #[error("illegal transition {from} -> {to}: {reason}")]
    IllegalTransition {
        from: VerdictState,
        to: VerdictState,
        reason: &'static str,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed verdict log line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub valid: u64,
    pub invalid: u64,
    pub pending: u64,
}

impl VerdictCounts {
    pub fn total(&self) -> u64 {
        self.valid + self.invalid + self.pending
    }
}

/// Outcome of applying a submission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Applied {
    /// State changed; the verdict must be appended to the log.
    Recorded(HypothesisVerdict),
    /// Same state resubmitted; nothing to log.
    Unchanged,
}

/// Current verdict per hypothesis instance.
#[derive(Debug, Clone, Default)]
pub struct VerdictBook {
    current: BTreeMap<(String, String), Option<HypothesisVerdict>>,
}

impl VerdictBook {
    /// All instances start pending.
    pub fn new(instances: &[HypothesisInstance]) -> Self {
        Self {
            current: instances
                .iter()
                .map(|h| ((h.edge_id.clone(), h.uid.clone()), None))
                .collect(),
        }
    }

    pub fn state(&self, edge_id: &str, uid: &str) -> Option<VerdictState> {
        self.current
            .get(&(edge_id.to_string(), uid.to_string()))
            .map(|v| v.as_ref().map_or(VerdictState::Pending, |v| v.verdict))
    }

    pub fn verdict(&self, edge_id: &str, uid: &str) -> Option<&HypothesisVerdict> {
        self.current
            .get(&(edge_id.to_string(), uid.to_string()))
            .and_then(Option::as_ref)
    }

    /// Validates and applies a transition. Allowed: pending to valid or
    /// invalid, and valid/invalid corrections that carry a note.
    pub fn apply(&mut self, s: &VerdictSubmission, decided_at: &str) -> Result<Applied, VerdictError> {
        let key = (s.edge_id.clone(), s.uid.clone());
        let slot = self.current.get_mut(&key).ok_or_else(|| VerdictError::UnknownEdge {
            edge_id: s.edge_id.clone(),
            uid: s.uid.clone(),
        })?;
        let from = slot.as_ref().map_or(VerdictState::Pending, |v| v.verdict);
        let illegal = |reason| VerdictError::IllegalTransition {
            from,
            to: s.verdict,
            reason,
        };
        if s.verdict == VerdictState::Pending {
            return Err(illegal("a verdict cannot return to pending"));
        }
        if from == s.verdict {
            return Ok(Applied::Unchanged);
        }
        if from != VerdictState::Pending && s.note.trim().is_empty() {
            return Err(illegal("a correction requires a note"));
        }
        if s.reviewer.trim().is_empty() {
            return Err(illegal("reviewer is required"));
        }
        let v = HypothesisVerdict {
            edge_id: s.edge_id.clone(),
            uid: s.uid.clone(),
            verdict: s.verdict,
            reviewer: s.reviewer.clone(),
            note: s.note.clone(),
            decided_at: decided_at.to_string(),
        };
        *slot = Some(v.clone());
        Ok(Applied::Recorded(v))
    }

    /// Rebuilds state from a log; every entry must still be a legal change.
    pub fn replay(instances: &[HypothesisInstance], log: &[HypothesisVerdict]) -> Result<Self, VerdictError> {
        let mut book = Self::new(instances);
        for v in log {
            let s = VerdictSubmission {
                edge_id: v.edge_id.clone(),
                uid: v.uid.clone(),
                verdict: v.verdict,
                reviewer: v.reviewer.clone(),
                note: v.note.clone(),
            };
            book.apply(&s, &v.decided_at)?;
        }
        Ok(book)
    }

    pub fn counts(&self) -> VerdictCounts {
        let mut c = VerdictCounts::default();
        for v in self.current.values() {
            match v.as_ref().map_or(VerdictState::Pending, |v| v.verdict) {
                VerdictState::Pending => c.pending += 1,
                VerdictState::Valid => c.valid += 1,
                VerdictState::Invalid => c.invalid += 1,
            }
        }
        c
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }
}

pub fn append_verdict<W: Write>(mut out: W, v: &HypothesisVerdict) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(v).expect("verdict serializes");
    line.push(b'\n');
    out.write_all(&line)?;
    out.flush()
}

pub fn read_verdict_log<R: BufRead>(input: R) -> Result<Vec<HypothesisVerdict>, VerdictError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| VerdictError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeType;

    fn instances(n: usize) -> Vec<HypothesisInstance> {
        (0..n)
            .map(|i| HypothesisInstance {
                edge_id: format!("e{i}"),
                uid: format!("u{i}"),
                type_pair: EdgeType::TimestampApp,
                values: ["t".into(), "a".into()],
                hypothesis: "h".into(),
            })
            .collect()
    }

    fn sub(i: usize, v: VerdictState, note: &str) -> VerdictSubmission {
        VerdictSubmission {
            edge_id: format!("e{i}"),
            uid: format!("u{i}"),
            verdict: v,
            reviewer: "examiner".into(),
            note: note.into(),
        }
    }

    use VerdictState::*;

    #[test]
    fn transition_table() {
        let mut b = VerdictBook::new(&instances(1));
        assert!(matches!(
            b.apply(&sub(0, Pending, "x"), "t"),
            Err(VerdictError::IllegalTransition { .. })
        ));
        assert!(matches!(b.apply(&sub(0, Valid, ""), "t"), Ok(Applied::Recorded(_))));
        assert_eq!(b.apply(&sub(0, Valid, ""), "t").unwrap(), Applied::Unchanged);
        assert!(matches!(
            b.apply(&sub(0, Invalid, ""), "t"),
            Err(VerdictError::IllegalTransition { .. })
        ));
        assert!(matches!(
            b.apply(&sub(0, Invalid, "missing metadata"), "t"),
            Ok(Applied::Recorded(_))
        ));
        assert!(matches!(
            b.apply(&sub(0, Pending, ""), "t"),
            Err(VerdictError::IllegalTransition { .. })
        ));
        assert_eq!(b.state("e0", "u0"), Some(Invalid));
    }

    #[test]
    fn unknown_instance() {
        let mut b = VerdictBook::new(&instances(1));
        assert!(matches!(
            b.apply(&sub(3, Valid, ""), "t"),
            Err(VerdictError::UnknownEdge { .. })
        ));
        let mut s = sub(0, Valid, "");
        s.uid = "u9".into();
        assert!(matches!(b.apply(&s, "t"), Err(VerdictError::UnknownEdge { .. })));
    }

    #[test]
    fn counts_and_replay() {
        let inst = instances(72);
        let mut b = VerdictBook::new(&inst);
        let mut log = Vec::new();
        for i in 0..72 {
            let v = if i < 4 { Invalid } else { Valid };
            if let Applied::Recorded(r) = b.apply(&sub(i, v, ""), "t").unwrap() {
                log.push(r);
            }
        }
        assert_eq!(
            b.counts(),
            VerdictCounts {
                valid: 68,
                invalid: 4,
                pending: 0
            }
        );
        let mut buf = Vec::new();
        for v in &log {
            append_verdict(&mut buf, v).unwrap();
        }
        let parsed = read_verdict_log(&buf[..]).unwrap();
        assert_eq!(parsed.len(), 72);
        assert_eq!(VerdictBook::replay(&inst, &parsed).unwrap().counts(), b.counts());
    }
}
