#![allow(dead_code)]

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use forensic_kg::entity::canonical;
use forensic_kg::fixtures::{generate, FixtureManifest, Scenario, DEFAULT_FIXTURE_DEVICE};
use forensic_kg::flatten::UNIFIED_FILE_NAME;
use forensic_kg::graph::{EdgeType, HypothesisInstance};
use forensic_kg::pipeline::{run_pipeline, RunConfig, RunOptions};
use forensic_kg::store::{Stage, ARTIFACTS_FILE_NAME};

pub const CREATED_AT: &str = "2026-01-01T00:00:00Z";

pub struct FixtureRun {
    pub fixture: FixtureManifest,
    pub data_dir: PathBuf,
    pub run_id: String,
    pub run_dir: PathBuf,
}

pub fn fixture_run(scenario: Scenario, dir: &Path) -> FixtureRun {
    fixture_run_until(scenario, dir, None)
}

pub fn fixture_run_until(scenario: Scenario, dir: &Path, stop_after: Option<Stage>) -> FixtureRun {
    let fixture = generate(scenario, &dir.join("fixture"), DEFAULT_FIXTURE_DEVICE, 6).unwrap();
    let mut cfg = RunConfig::new(&fixture.image_root, DEFAULT_FIXTURE_DEVICE);
    cfg.ground_truth = Some(fixture.ground_truth_path.clone());
    let data_dir = dir.join("runs");
    let mut opts = RunOptions::new(&data_dir);
    opts.created_at = Some(CREATED_AT.into());
    opts.stop_after = stop_after;
    let rec = run_pipeline(&cfg, &opts).unwrap();
    FixtureRun {
        run_dir: data_dir.join(&rec.run_id),
        run_id: rec.run_id,
        data_dir,
        fixture,
    }
}

/// Instances with no ground-truth relationship.
pub fn unsupported(fixture: &FixtureManifest, instances: &[HypothesisInstance]) -> Vec<HypothesisInstance> {
    let rels: HashSet<(EdgeType, String, String)> = fixture
        .ground_truth
        .relationships
        .iter()
        .map(|r| {
            let (ta, tb) = r.type_pair.endpoints();
            (r.type_pair, canonical(ta, &r.values[0]), canonical(tb, &r.values[1]))
        })
        .collect();
    instances
        .iter()
        .filter(|h| !rels.contains(&(h.type_pair, h.values[0].clone(), h.values[1].clone())))
        .cloned()
        .collect()
}

/// Flips the first prefix character of `uid` wherever it is stored as a
/// record or artifact key, returning the edited uid.
pub fn tamper_uid(run_dir: &Path, uid: &str) -> String {
    let mut bytes = uid.as_bytes().to_vec();
    bytes[0] = if bytes[0] == b'0' { b'1' } else { b'0' };
    let forged = String::from_utf8(bytes).unwrap();
    for name in [UNIFIED_FILE_NAME, ARTIFACTS_FILE_NAME] {
        let path = run_dir.join(name);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains(uid), "{uid} not in {name}");
        fs::write(&path, text.replace(uid, &forged)).unwrap();
    }
    forged
}
