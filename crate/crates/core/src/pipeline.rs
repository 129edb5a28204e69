//! Stage orchestration: ingest, flatten, refine, consolidate, graph,
//! evaluate. Every stage writes its outputs into the run directory and can
//! be resumed from there.

use std::collections::BTreeMap;
use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

use crate::consolidate::{consolidate, write_evidence_jsonl, RecordIndex, EVIDENCE_FILE_NAME};
use crate::entity::EntityType;
use crate::evaluate::{GroundTruth, GROUND_TRUTH_FILE_NAME, VERDICT_LOG_FILE_NAME};
use crate::flatten::{
    flatten_table, source_prefix, table_csv_name, unify, write_table_csv, write_unified_csv, Denylist,
    DEFAULT_SAMPLE_INTERVAL, UNIFIED_FILE_NAME,
};
use crate::graph::{build_graph, GRAPH_FILE_NAME};
use crate::ingest::{DatabaseRef, ForensicImage, ScanWarning};
use crate::refine::{
    apply_threshold, check_threshold, refine_records, write_artifact_csv, MockEngine, RefineOptions, RefinementEngine,
    RemoteEngine, RemoteEngineConfig, UnrefinedBatch, DEFAULT_BATCH_SIZE, DEFAULT_MAX_IN_FLIGHT,
    DEFAULT_MIN_CONFIDENCE, DEFAULT_ZONE, MOCK_ENGINE_ID,
};
use crate::store::{
    artifacts_jsonl, write_atomic, write_json, Run, RunCounts, RunLock, RunRecord, Stage, Stages, ARTIFACTS_FILE_NAME,
    DOT_FILE_NAME, ENTITIES_DIR, MANIFEST_FILE_NAME, REFINE_AUDIT_FILE_NAME, REFINE_REPORT_FILE_NAME, TABLES_DIR,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EngineConfig {
    Mock,
    Remote {
        endpoint: String,
        model: String,
        max_retries: u32,
        backoff_ms: u64,
    },
}

impl EngineConfig {
    pub fn id(&self) -> String {
        match self {
            EngineConfig::Mock => MOCK_ENGINE_ID.to_string(),
            EngineConfig::Remote { model, .. } => format!("remote:{model}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub image_root: PathBuf,
    pub device_id: String,
    pub sample_interval: usize,
    pub min_confidence: u8,
    pub engine: EngineConfig,
    pub zone: String,
    /// Replaces the built-in denylist when set.
    pub denylist: Option<Vec<String>>,
    pub ground_truth: Option<PathBuf>,
    pub strict: bool,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl RunConfig {
    pub fn new(image_root: impl Into<PathBuf>, device_id: impl Into<String>) -> Self {
        Self {
            image_root: image_root.into(),
            device_id: device_id.into(),
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            engine: EngineConfig::Mock,
            zone: DEFAULT_ZONE.to_string(),
            denylist: None,
            ground_truth: None,
            strict: false,
            batch_size: DEFAULT_BATCH_SIZE,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.device_id.is_empty() {
            bail!("device id must not be empty");
        }
        if self.sample_interval < 1 {
            bail!("sample interval must be at least 1");
        }
        check_threshold(self.min_confidence)?;
        if self.batch_size < 1 || self.max_in_flight < 1 {
            bail!("batch size and max in-flight must be at least 1");
        }
        self.zone
            .parse::<chrono_tz::Tz>()
            .map_err(|_| anyhow::anyhow!("unknown time zone {:?}", self.zone))?;
        Ok(())
    }

    pub fn denylist(&self) -> Denylist {
        match &self.denylist {
            Some(list) => Denylist(list.clone()),
            None => Denylist::default(),
        }
    }
}

/// Where and how far to run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub data_dir: PathBuf,
    /// Timestamp recorded in run and report files; defaults to the clock.
    pub created_at: Option<String>,
    pub stop_after: Option<Stage>,
}

impl RunOptions {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            created_at: None,
            stop_after: None,
        }
    }
}

#[derive(Debug, Error)]
#[error("[{stage}] {error:#}")]
pub struct PipelineError {
    pub stage: Stage,
    pub error: anyhow::Error,
}

trait StageContext<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<anyhow::Error>> StageContext<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError { stage, error: e.into() })
    }
}

/// `SOURCE_DATE_EPOCH` when set, otherwise the current UTC time.
pub fn current_timestamp() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    pinned
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

/// Deterministic id over the settings that affect outputs and the content
/// of every input database and the ground truth.
pub fn compute_run_id(cfg: &RunConfig, image: &ForensicImage, manifest: &[DatabaseRef]) -> anyhow::Result<String> {
    let mut h = Sha256::new();
    let identity = serde_json::json!({
        "device_id": cfg.device_id,
        "sample_interval": cfg.sample_interval,
        "min_confidence": cfg.min_confidence,
        "engine": cfg.engine,
        "zone": cfg.zone,
        "denylist": cfg.denylist().0,
        "strict": cfg.strict,
        "batch_size": cfg.batch_size,
    });
    h.update(identity.to_string().as_bytes());
    for db in manifest {
        h.update(b"\0");
        h.update(db.relative_path().as_bytes());
        h.update(b"\0");
        h.update(sha256_file(&image.locate(db))?.as_bytes());
    }
    if let Some(gt) = &cfg.ground_truth {
        h.update(b"\0gt\0");
        h.update(
            sha256_file(gt)
                .with_context(|| format!("ground truth {}", gt.display()))?
                .as_bytes(),
        );
    }
    Ok(format!("run-{}", &hex::encode(h.finalize())[..16]))
}

fn engine_for(cfg: &RunConfig, run: &Run) -> anyhow::Result<Box<dyn RefinementEngine>> {
    Ok(match &cfg.engine {
        EngineConfig::Mock => Box::new(MockEngine::new(cfg.zone.clone())?),
        EngineConfig::Remote {
            endpoint,
            model,
            max_retries,
            backoff_ms,
        } => {
            let mut rc = RemoteEngineConfig::new(endpoint.clone(), model.clone());
            rc.max_retries = *max_retries;
            rc.backoff_base = Duration::from_millis(*backoff_ms);
            rc.audit_path = Some(run.path(REFINE_AUDIT_FILE_NAME));
            Box::new(RemoteEngine::new(rc)?)
        }
    })
}

#[derive(Debug, Serialize)]
struct RefineReport<'a> {
    engine: &'a str,
    min_confidence: u8,
    warnings: &'a [crate::refine::ParseWarning],
    unrefined: &'a [UnrefinedBatch],
}

/// Runs every stage not yet completed, up to `opts.stop_after`.
pub fn run_pipeline(cfg: &RunConfig, opts: &RunOptions) -> Result<RunRecord, PipelineError> {
    cfg.validate().stage(Stage::Ingested)?;
    let image = ForensicImage::new(&cfg.image_root, &cfg.device_id);
    let scan = image.scan().stage(Stage::Ingested)?;
    let run_id = compute_run_id(cfg, &image, &scan.databases).stage(Stage::Ingested)?;
    let dir = opts.data_dir.join(&run_id);
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .stage(Stage::Ingested)?;
    let _lock = RunLock::acquire(&dir).stage(Stage::Ingested)?;

    let created_at = opts.created_at.clone().unwrap_or_else(current_timestamp);
    let mut run = match Run::open(&dir) {
        Ok(existing) => {
            info!(run_id, last = ?existing.record.stages.last(), "resuming run");
            existing
        }
        Err(_) => Run::create(
            &dir,
            RunRecord {
                run_id: run_id.clone(),
                device_id: cfg.device_id.clone(),
                created_at: created_at.clone(),
                engine: cfg.engine.id(),
                config: cfg.clone(),
                stages: Stages::default(),
                counts: RunCounts::default(),
                outputs: BTreeMap::new(),
                warnings: Vec::new(),
            },
        )
        .stage(Stage::Ingested)?,
    };

    for stage in Stage::ALL {
        if run.record.stages.done(stage) {
            continue;
        }
        info!(run_id, %stage, "stage starting");
        match stage {
            Stage::Ingested => {
                write_json(&run.path(MANIFEST_FILE_NAME), &scan.databases).stage(stage)?;
                run.record.counts.databases = scan.databases.len() as u64;
                run.record.warnings = scan.warnings.clone();
                run.record.outputs.insert("manifest".into(), MANIFEST_FILE_NAME.into());
            }
            Stage::Flattened => flatten_stage(&image, cfg, &mut run).stage(stage)?,
            Stage::Refined => refine_stage(cfg, &mut run).stage(stage)?,
            Stage::Consolidated => {
                let artifacts = run.artifacts().stage(stage)?;
                let index = RecordIndex::new(run.unified_records().stage(stage)?).stage(stage)?;
                let records = consolidate(&artifacts, &index).stage(stage)?;
                let mut buf = Vec::new();
                write_evidence_jsonl(&mut buf, &records).stage(stage)?;
                write_atomic(&run.path(EVIDENCE_FILE_NAME), &buf).stage(stage)?;
                run.record.counts.evidence_records = records.len() as u64;
                run.record.outputs.insert("evidence".into(), EVIDENCE_FILE_NAME.into());
            }
            Stage::Graphed => {
                let graph = build_graph(&run.evidence().stage(stage)?, cfg.min_confidence).stage(stage)?;
                write_atomic(&run.path(GRAPH_FILE_NAME), graph.to_json().as_bytes()).stage(stage)?;
                write_atomic(&run.path(DOT_FILE_NAME), graph.to_dot().as_bytes()).stage(stage)?;
                run.record.counts.nodes = graph.nodes.len() as u64;
                run.record.counts.edges = graph.edges.len() as u64;
                run.record.counts.hypotheses = graph.hypotheses().len() as u64;
                run.record.outputs.insert("graph".into(), GRAPH_FILE_NAME.into());
                run.record.outputs.insert("graph_dot".into(), DOT_FILE_NAME.into());
            }
            Stage::Evaluated => {
                if let Some(src) = &cfg.ground_truth {
                    let gt: GroundTruth = crate::store::read_json(src).stage(stage)?;
                    write_json(&run.path(GROUND_TRUTH_FILE_NAME), &gt).stage(stage)?;
                    run.record
                        .outputs
                        .insert("ground_truth".into(), GROUND_TRUTH_FILE_NAME.into());
                }
                let log = run.path(VERDICT_LOG_FILE_NAME);
                if !log.exists() {
                    write_atomic(&log, b"").stage(stage)?;
                }
                run.record
                    .outputs
                    .insert("verdicts".into(), VERDICT_LOG_FILE_NAME.into());
                let generated_at = opts.created_at.clone().unwrap_or_else(current_timestamp);
                run.evaluate(&generated_at).stage(stage)?;
                run.record
                    .outputs
                    .insert("metrics".into(), crate::evaluate::METRICS_FILE_NAME.into());
            }
        }
        run.record.stages.complete(stage);
        run.save().stage(stage)?;
        info!(run_id, %stage, "stage complete");
        if opts.stop_after == Some(stage) {
            break;
        }
    }
    Ok(run.record)
}

fn flatten_stage(image: &ForensicImage, cfg: &RunConfig, run: &mut Run) -> anyhow::Result<()> {
    let manifest = run.manifest()?;
    let tables_dir = run.path(TABLES_DIR);
    fs::create_dir_all(&tables_dir)?;
    let mut all = Vec::new();
    let mut tables = 0u64;
    for db in &manifest {
        let names = match image.enumerate_tables(db) {
            Ok(n) => n,
            Err(e) => {
                warn!("skipping database: {e}");
                run.record.warnings.push(ScanWarning {
                    path: db.relative_path(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let prefix = source_prefix(&cfg.device_id, &db.file_path, &db.database_name);
        for table in names {
            let (rows, tally) = match image.collect_rows(db, &table) {
                Ok(r) => r,
                Err(e) => {
                    warn!("skipping table: {e}");
                    run.record.warnings.push(ScanWarning {
                        path: format!("{}#{table}", db.relative_path()),
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            if tally.skipped > 0 {
                run.record.warnings.push(ScanWarning {
                    path: format!("{}#{table}", db.relative_path()),
                    reason: format!("{} malformed rows skipped", tally.skipped),
                });
            }
            let columns: Vec<String> = rows
                .first()
                .map(|r| r.cells.iter().map(|(c, _)| c.clone()).collect())
                .unwrap_or_default();
            let records = flatten_table(db, &table, rows)?;
            let mut buf = Vec::new();
            write_table_csv(&mut buf, &records, &columns)?;
            write_atomic(
                &tables_dir.join(table_csv_name(&prefix, &db.database_name, &table)),
                &buf,
            )?;
            tables += 1;
            all.extend(records);
        }
    }
    let flattened = all.len() as u64;
    let interval = NonZeroUsize::new(cfg.sample_interval).context("sample interval must be at least 1")?;
    let unified = unify(all, interval, &cfg.denylist());
    let mut buf = Vec::new();
    write_unified_csv(&mut buf, &unified)?;
    write_atomic(&run.path(UNIFIED_FILE_NAME), &buf)?;
    run.record.counts.tables = tables;
    run.record.counts.flattened_records = flattened;
    run.record.counts.unified_records = unified.len() as u64;
    run.record.outputs.insert("tables".into(), TABLES_DIR.into());
    run.record.outputs.insert("unified".into(), UNIFIED_FILE_NAME.into());
    Ok(())
}

fn refine_stage(cfg: &RunConfig, run: &mut Run) -> anyhow::Result<()> {
    let records = run.unified_records()?;
    let engine = engine_for(cfg, run)?;
    let options = RefineOptions {
        batch_size: NonZeroUsize::new(cfg.batch_size).context("batch size must be at least 1")?,
        max_in_flight: NonZeroUsize::new(cfg.max_in_flight).context("max in-flight must be at least 1")?,
    };
    let outcome = refine_records(engine.as_ref(), &records, options);
    write_atomic(
        &run.path(ARTIFACTS_FILE_NAME),
        artifacts_jsonl(&outcome.artifacts).as_bytes(),
    )?;

    let retained = apply_threshold(&outcome.artifacts, cfg.min_confidence)?;
    let entities = run.path(ENTITIES_DIR);
    fs::create_dir_all(&entities)?;
    for t in EntityType::ALL {
        let mut buf = Vec::new();
        write_artifact_csv(&mut buf, &retained, t)?;
        write_atomic(&entities.join(t.csv_file_name()), &buf)?;
    }
    write_json(
        &run.path(REFINE_REPORT_FILE_NAME),
        &RefineReport {
            engine: engine.id(),
            min_confidence: cfg.min_confidence,
            warnings: &outcome.warnings,
            unrefined: &outcome.unrefined,
        },
    )?;
    run.record.counts.artifacts = outcome.artifacts.len() as u64;
    run.record.counts.retained_artifacts = retained.len() as u64;
    run.record.counts.parse_warnings = outcome.warnings.len() as u64;
    run.record.counts.unrefined_batches = outcome.unrefined.len() as u64;
    run.record
        .outputs
        .insert("artifacts".into(), ARTIFACTS_FILE_NAME.into());
    run.record.outputs.insert("entities".into(), ENTITIES_DIR.into());
    run.record
        .outputs
        .insert("refine_report".into(), REFINE_REPORT_FILE_NAME.into());
    if matches!(cfg.engine, EngineConfig::Remote { .. }) {
        run.record
            .outputs
            .insert("refine_audit".into(), REFINE_AUDIT_FILE_NAME.into());
    }
    Ok(())
}
