//! On-disk run directories: one directory per run holding JSON files, CSV
//! exports and the append-only verdict log.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consolidate::{read_evidence_jsonl, ConsolidateError, EvidenceRecord, RecordIndex, EVIDENCE_FILE_NAME};
use crate::evaluate::{
    append_verdict, audit_custody, compute_metrics, match_ground_truth, read_verdict_log, recompute_uid, Applied,
    GroundTruth, HypothesisVerdict, MatchInput, Metric, MetricsReport, VerdictBook, VerdictError, VerdictState,
    VerdictSubmission, GROUND_TRUTH_FILE_NAME, METRICS_FILE_NAME, VERDICT_LOG_FILE_NAME,
};
use crate::flatten::{
    parse_uid, read_unified_csv, source_prefix, table_csv_name, FlatRecord, FlattenError, UNIFIED_FILE_NAME,
};
use crate::graph::{ForensicGraph, HypothesisInstance, GRAPH_FILE_NAME};
use crate::ingest::{DatabaseRef, ScanWarning};
use crate::pipeline::RunConfig;
use crate::refine::RefinedArtifact;

pub const RUN_FILE_NAME: &str = "run.json";
pub const MANIFEST_FILE_NAME: &str = "manifest.json";
pub const TABLES_DIR: &str = "tables";
pub const ENTITIES_DIR: &str = "entities";
pub const ARTIFACTS_FILE_NAME: &str = "artifacts.jsonl";
pub const REFINE_REPORT_FILE_NAME: &str = "refine_report.json";
pub const REFINE_AUDIT_FILE_NAME: &str = "refine_audit.jsonl";
pub const DOT_FILE_NAME: &str = "graph.dot";
pub const LOCK_FILE_NAME: &str = ".lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingested,
    Flattened,
    Refined,
    Consolidated,
    Graphed,
    Evaluated,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingested,
        Stage::Flattened,
        Stage::Refined,
        Stage::Consolidated,
        Stage::Graphed,
        Stage::Evaluated,
    ];

    /// The verb naming the step that reaches this stage.
    pub fn step(self) -> &'static str {
        match self {
            Stage::Ingested => "ingest",
            Stage::Flattened => "flatten",
            Stage::Refined => "refine",
            Stage::Consolidated => "consolidate",
            Stage::Graphed => "graph",
            Stage::Evaluated => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.step())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stages {
    pub ingested: bool,
    pub flattened: bool,
    pub refined: bool,
    pub consolidated: bool,
    pub graphed: bool,
    pub evaluated: bool,
}

impl Stages {
    fn slot(&mut self, stage: Stage) -> &mut bool {
        match stage {
            Stage::Ingested => &mut self.ingested,
            Stage::Flattened => &mut self.flattened,
            Stage::Refined => &mut self.refined,
            Stage::Consolidated => &mut self.consolidated,
            Stage::Graphed => &mut self.graphed,
            Stage::Evaluated => &mut self.evaluated,
        }
    }

    pub fn done(&self, stage: Stage) -> bool {
        match stage {
            Stage::Ingested => self.ingested,
            Stage::Flattened => self.flattened,
            Stage::Refined => self.refined,
            Stage::Consolidated => self.consolidated,
            Stage::Graphed => self.graphed,
            Stage::Evaluated => self.evaluated,
        }
    }

    /// Marks `stage` complete; stages only move forward.
    pub fn complete(&mut self, stage: Stage) {
        *self.slot(stage) = true;
    }

    pub fn last(&self) -> Option<Stage> {
        Stage::ALL.into_iter().rev().find(|s| self.done(*s))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub databases: u64,
    pub tables: u64,
    pub flattened_records: u64,
    pub unified_records: u64,
    pub artifacts: u64,
    pub retained_artifacts: u64,
    pub parse_warnings: u64,
    pub unrefined_batches: u64,
    pub evidence_records: u64,
    pub nodes: u64,
    pub edges: u64,
    pub hypotheses: u64,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub device_id: String,
    pub created_at: String,
    pub engine: String,
    pub config: RunConfig,
    pub stages: Stages,
    pub counts: RunCounts,
    /// Output name to run-relative path.
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<ScanWarning>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("run {0} not found")]
    RunNotFound(String),
    #[error("run {run_id} has not completed the {stage} stage")]
    StageNotReady { run_id: String, stage: Stage },
    #[error("uid {0} is not known to any run")]
    UnknownUid(String),
    #[error("chain-of-custody breach for uid {uid}: coordinates derive {recomputed:?}")]
    CustodyBreach { uid: String, recomputed: Option<String> },
    #[error("run directory {path} is locked by process {pid}")]
    Locked { path: PathBuf, pid: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Verdict(#[from] VerdictError),
    #[error(transparent)]
    Flatten(#[from] FlattenError),
    #[error(transparent)]
    Consolidate(#[from] ConsolidateError),
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let f = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_artifacts_jsonl(path: &Path) -> Result<Vec<RefinedArtifact>, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| StoreError::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

pub fn artifacts_jsonl(artifacts: &[RefinedArtifact]) -> String {
    let mut out = String::new();
    for a in artifacts {
        out.push_str(&serde_json::to_string(a).expect("artifact serializes"));
        out.push('\n');
    }
    out
}

/// Exclusive ownership of a run directory for one process.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    /// Takes the lock, replacing it when the recorded process is gone.
    pub fn acquire(dir: &Path) -> Result<Self, StoreError> {
        let path = dir.join(LOCK_FILE_NAME);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    write!(f, "{}", std::process::id()).map_err(io_err(&path))?;
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let pid = fs::read_to_string(&path).unwrap_or_default().trim().to_string();
                    if process_alive(&pid) {
                        return Err(StoreError::Locked { path, pid });
                    }
                    tracing::warn!(pid, "removing stale lock {}", path.display());
                    let _ = fs::remove_file(&path);
                }
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
        Err(StoreError::Locked {
            pid: fs::read_to_string(&path).unwrap_or_default(),
            path,
        })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn process_alive(pid: &str) -> bool {
    match pid.parse::<u32>() {
        Ok(p) if p == std::process::id() => true,
        Ok(p) => {
            let proc_root = Path::new("/proc");
            !proc_root.is_dir() || proc_root.join(p.to_string()).exists()
        }
        Err(_) => false,
    }
}

/// Where a UID came from, re-derived and checked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub run_id: String,
    pub device_id: String,
    pub record: FlatRecord,
    pub database: Option<DatabaseRef>,
    /// Run-relative path of the per-table export holding the row.
    pub table_csv: String,
    pub recomputed_uid: String,
    pub custody: String,
}

/// Result of a verdict submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictOutcome {
    pub changed: bool,
    pub edge_id: String,
    pub uid: String,
    pub state: VerdictState,
    pub verdict: Option<HypothesisVerdict>,
    #[serde(rename = "KGCA")]
    pub kgca: Metric,
    pub metrics: MetricsReport,
}

/// A hypothesis instance with its current state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisView {
    #[serde(flatten)]
    pub instance: HypothesisInstance,
    pub state: VerdictState,
    pub verdict: Option<HypothesisVerdict>,
}

/// An opened run directory.
#[derive(Debug, Clone)]
pub struct Run {
    dir: PathBuf,
    pub record: RunRecord,
}

impl Run {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        let record = read_json(&dir.join(RUN_FILE_NAME))?;
        Ok(Self { dir, record })
    }

    pub fn create(dir: impl Into<PathBuf>, record: RunRecord) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let run = Self { dir, record };
        run.save()?;
        Ok(run)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn id(&self) -> &str {
        &self.record.run_id
    }

    pub fn save(&self) -> Result<(), StoreError> {
        write_json(&self.path(RUN_FILE_NAME), &self.record)
    }

    pub fn require(&self, stage: Stage) -> Result<(), StoreError> {
        if self.record.stages.done(stage) {
            Ok(())
        } else {
            Err(StoreError::StageNotReady {
                run_id: self.record.run_id.clone(),
                stage,
            })
        }
    }

    pub fn manifest(&self) -> Result<Vec<DatabaseRef>, StoreError> {
        self.require(Stage::Ingested)?;
        read_json(&self.path(MANIFEST_FILE_NAME))
    }

    pub fn unified_records(&self) -> Result<Vec<FlatRecord>, StoreError> {
        self.require(Stage::Flattened)?;
        let path = self.path(UNIFIED_FILE_NAME);
        let f = File::open(&path).map_err(io_err(&path))?;
        Ok(read_unified_csv(BufReader::new(f))?)
    }

    pub fn artifacts(&self) -> Result<Vec<RefinedArtifact>, StoreError> {
        self.require(Stage::Refined)?;
        read_artifacts_jsonl(&self.path(ARTIFACTS_FILE_NAME))
    }

    pub fn evidence(&self) -> Result<Vec<EvidenceRecord>, StoreError> {
        self.require(Stage::Consolidated)?;
        let path = self.path(EVIDENCE_FILE_NAME);
        let f = File::open(&path).map_err(io_err(&path))?;
        Ok(read_evidence_jsonl(BufReader::new(f))?)
    }

    pub fn graph(&self) -> Result<ForensicGraph, StoreError> {
        self.require(Stage::Graphed)?;
        read_json(&self.path(GRAPH_FILE_NAME))
    }

    /// Stored `graph.json` bytes, served verbatim.
    pub fn graph_bytes(&self) -> Result<Vec<u8>, StoreError> {
        self.require(Stage::Graphed)?;
        let path = self.path(GRAPH_FILE_NAME);
        fs::read(&path).map_err(io_err(&path))
    }

    pub fn ground_truth(&self) -> Result<Option<GroundTruth>, StoreError> {
        let path = self.path(GROUND_TRUTH_FILE_NAME);
        if path.exists() {
            read_json(&path).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn verdict_log(&self) -> Result<Vec<HypothesisVerdict>, StoreError> {
        let path = self.path(VERDICT_LOG_FILE_NAME);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let f = File::open(&path).map_err(io_err(&path))?;
        Ok(read_verdict_log(BufReader::new(f))?)
    }

    pub fn verdict_book(&self, hypotheses: &[HypothesisInstance]) -> Result<VerdictBook, StoreError> {
        Ok(VerdictBook::replay(hypotheses, &self.verdict_log()?)?)
    }

    pub fn metrics(&self) -> Result<MetricsReport, StoreError> {
        self.require(Stage::Evaluated)?;
        read_json(&self.path(METRICS_FILE_NAME))
    }

    pub fn hypotheses(&self) -> Result<Vec<HypothesisView>, StoreError> {
        let instances = self.graph()?.hypotheses();
        let book = self.verdict_book(&instances)?;
        Ok(instances
            .into_iter()
            .map(|h| HypothesisView {
                state: book.state(&h.edge_id, &h.uid).unwrap_or(VerdictState::Pending),
                verdict: book.verdict(&h.edge_id, &h.uid).cloned(),
                instance: h,
            })
            .collect())
    }

    /// Recomputes the metrics report from stored outputs and writes it.
    pub fn evaluate(&self, generated_at: &str) -> Result<MetricsReport, StoreError> {
        let artifacts = self.artifacts()?;
        let index = RecordIndex::new(self.unified_records()?)?;
        let evidence = self.evidence()?;
        let graph = self.graph()?;
        let hypotheses = graph.hypotheses();
        let book = self.verdict_book(&hypotheses)?;
        let custody = audit_custody(&artifacts, &index, &self.record.device_id);
        let gt = self.ground_truth()?;
        let outcome = match_ground_truth(&MatchInput {
            artifacts: &artifacts,
            records: &evidence,
            hypotheses: &hypotheses,
            verdicts: &book,
            custody: &custody,
            ground_truth: gt.as_ref(),
            strict: self.record.config.strict,
        });
        let report = MetricsReport {
            run_id: self.record.run_id.clone(),
            engine: self.record.engine.clone(),
            min_confidence: graph.min_confidence,
            strict: self.record.config.strict,
            ground_truth: gt.is_some(),
            generated_at: generated_at.to_string(),
            metrics: compute_metrics(&outcome.tally),
            tally: outcome.tally,
            verdicts: book.counts(),
            custody_breaches: custody.breaches,
            normalization_errors: outcome.normalization_errors.iter().map(|e| e.to_string()).collect(),
        };
        write_atomic(&self.path(METRICS_FILE_NAME), report.to_json().as_bytes())?;
        Ok(report)
    }

    /// Applies a verdict, appends it to the log when it changes state, and
    /// rewrites the metrics report. Callers serialize access per run.
    pub fn record_verdict(&self, submission: &VerdictSubmission, now: &str) -> Result<VerdictOutcome, StoreError> {
        self.require(Stage::Graphed)?;
        let instances = self.graph()?.hypotheses();
        let mut book = self.verdict_book(&instances)?;
        let applied = book.apply(submission, now)?;
        if let Applied::Recorded(v) = &applied {
            let path = self.path(VERDICT_LOG_FILE_NAME);
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(io_err(&path))?;
            append_verdict(f, v).map_err(io_err(&path))?;
        }
        let metrics = self.evaluate(now)?;
        Ok(VerdictOutcome {
            changed: matches!(applied, Applied::Recorded(_)),
            edge_id: submission.edge_id.clone(),
            uid: submission.uid.clone(),
            state: book
                .state(&submission.edge_id, &submission.uid)
                .unwrap_or(VerdictState::Pending),
            verdict: book.verdict(&submission.edge_id, &submission.uid).cloned(),
            kgca: metrics.metrics.KGCA,
            metrics,
        })
    }

    /// Finds `uid` among this run's flattened records and re-derives it.
    pub fn provenance(&self, uid: &str) -> Result<Option<Provenance>, StoreError> {
        let Some(record) = self.unified_records()?.into_iter().find(|r| r.uid == uid) else {
            return Ok(None);
        };
        let device = &self.record.device_id;
        let recomputed = recompute_uid(device, &record);
        if recomputed.as_deref() != Some(uid) {
            return Err(StoreError::CustodyBreach {
                uid: uid.to_string(),
                recomputed,
            });
        }
        let database = self
            .manifest()?
            .into_iter()
            .find(|d| d.file_path == record.path && d.database_name == record.database);
        let prefix = source_prefix(device, &record.path, &record.database);
        Ok(Some(Provenance {
            run_id: self.record.run_id.clone(),
            device_id: device.clone(),
            table_csv: format!(
                "{TABLES_DIR}/{}",
                table_csv_name(&prefix, &record.database, &record.table)
            ),
            database,
            recomputed_uid: recomputed.unwrap_or_default(),
            custody: "intact".into(),
            record,
        }))
    }
}

/// A directory of run directories.
#[derive(Debug, Clone)]
pub struct Store {
    data_dir: PathBuf,
}

pub fn valid_run_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl Store {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
        }
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.data_dir.join(run_id)
    }

    pub fn open(&self, run_id: &str) -> Result<Run, StoreError> {
        if !valid_run_id(run_id) {
            return Err(StoreError::RunNotFound(run_id.to_string()));
        }
        let dir = self.run_dir(run_id);
        if !dir.join(RUN_FILE_NAME).is_file() {
            return Err(StoreError::RunNotFound(run_id.to_string()));
        }
        Run::open(dir)
    }

    /// Every run, ordered by id.
    pub fn list(&self) -> Result<Vec<RunRecord>, StoreError> {
        let mut out = Vec::new();
        let entries = match fs::read_dir(&self.data_dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(io_err(&self.data_dir)(e)),
        };
        for entry in entries {
            let entry = entry.map_err(io_err(&self.data_dir))?;
            let run_file = entry.path().join(RUN_FILE_NAME);
            if run_file.is_file() {
                out.push(read_json::<RunRecord>(&run_file)?);
            }
        }
        out.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        Ok(out)
    }

    /// Searches flattened runs for `uid`.
    pub fn resolve_provenance(&self, uid: &str) -> Result<Provenance, StoreError> {
        if parse_uid(uid).is_none() {
            return Err(StoreError::UnknownUid(uid.to_string()));
        }
        for rec in self.list()? {
            if !rec.stages.flattened {
                continue;
            }
            let run = self.open(&rec.run_id)?;
            if let Some(p) = run.provenance(uid)? {
                return Ok(p);
            }
        }
        Err(StoreError::UnknownUid(uid.to_string()))
    }
}
