//! Synthetic Android images with planted artifacts and ground truth.
//!
//! Planted rows are placed so that they survive sampling under the default
//! denylist and the given sample interval.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use rusqlite::types::Value;
use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use crate::entity::EntityType;
use crate::evaluate::{GroundTruth, GtArtifact, GtRelationship, GROUND_TRUTH_FILE_NAME};
use crate::flatten::{make_uid, Denylist, UidParts};
use crate::graph::EdgeType;

pub const IMAGE_DIR: &str = "image";
pub const FIXTURE_MANIFEST_FILE_NAME: &str = "fixture_manifest.json";
pub const DEFAULT_FIXTURE_DEVICE: &str = "fixture-device-01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// One record per artifact type, drawn from obfuscated column forms.
    Table1,
    /// Records whose co-occurring artifacts yield 72 hypothesis instances.
    Table2,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Table1 => "table1",
            Scenario::Table2 => "table2",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table1" => Ok(Scenario::Table1),
            "table2" => Ok(Scenario::Table2),
            other => Err(format!("unknown scenario {other:?} (expected table1 or table2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Int(i64),
    Text(String),
    Blob(Vec<u8>),
}

impl Cell {
    fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    fn to_sql(&self) -> Value {
        match self {
            Cell::Null => Value::Null,
            Cell::Int(v) => Value::Integer(*v),
            Cell::Text(s) => Value::Text(s.clone()),
            Cell::Blob(b) => Value::Blob(b.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Planted {
    pub entity_type: EntityType,
    pub value: String,
}

fn planted(entity_type: EntityType, value: &str) -> Planted {
    Planted {
        entity_type,
        value: value.to_string(),
    }
}

#[derive(Debug, Clone)]
pub enum RowSpec {
    Filler(usize),
    /// Placed at the next sampled position, or at a fixed lid.
    Evidence {
        lid: Option<u64>,
        cells: Vec<Cell>,
        planted: Vec<Planted>,
    },
}

#[derive(Debug, Clone)]
pub struct TableSpec {
    pub name: String,
    /// `(name, declared type)`; declared types are INTEGER, TEXT or BLOB.
    pub columns: Vec<(String, String)>,
    pub rows: Vec<RowSpec>,
    /// Pads with filler so that this lid of the following table is sampled.
    pub align_next_lid: Option<u64>,
}

impl TableSpec {
    pub fn new(name: &str, columns: &[(&str, &str)]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|(c, t)| (c.to_string(), t.to_string())).collect(),
            rows: Vec::new(),
            align_next_lid: None,
        }
    }

    pub fn filler(mut self, n: usize) -> Self {
        self.rows.push(RowSpec::Filler(n));
        self
    }

    pub fn evidence(mut self, cells: Vec<Cell>, planted: Vec<Planted>) -> Self {
        self.rows.push(RowSpec::Evidence {
            lid: None,
            cells,
            planted,
        });
        self
    }

    pub fn evidence_at(mut self, lid: u64, cells: Vec<Cell>, planted: Vec<Planted>) -> Self {
        self.rows.push(RowSpec::Evidence {
            lid: Some(lid),
            cells,
            planted,
        });
        self
    }

    pub fn align_next(mut self, lid: u64) -> Self {
        self.align_next_lid = Some(lid);
        self
    }

    fn filler_row(&self, n: usize) -> Vec<Cell> {
        self.columns
            .iter()
            .map(|(_, ty)| match ty.as_str() {
                "INTEGER" => Cell::Int(n as i64),
                "BLOB" => Cell::Blob(vec![0x00, 0x01]),
                _ => Cell::text("-"),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DbSpec {
    /// Image-relative directory with leading and trailing slash.
    pub file_path: String,
    pub file_name: String,
    pub tables: Vec<TableSpec>,
}

impl DbSpec {
    pub fn new(file_path: &str, file_name: &str, tables: Vec<TableSpec>) -> Self {
        Self {
            file_path: file_path.to_string(),
            file_name: file_name.to_string(),
            tables,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ImageSpec {
    pub databases: Vec<DbSpec>,
    /// Non-database files: `(image-relative path, bytes)`.
    pub raw_files: Vec<(String, Vec<u8>)>,
    pub relationships: Vec<GtRelationship>,
    pub totals: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedArtifact {
    pub entity_type: EntityType,
    pub value: String,
    pub uid: String,
    pub path: String,
    pub database: String,
    pub table: String,
    pub lid: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub scenario: Option<Scenario>,
    pub device_id: String,
    pub sample_interval: usize,
    pub image_root: PathBuf,
    pub ground_truth_path: PathBuf,
    pub planted: Vec<PlantedArtifact>,
    pub ground_truth: GroundTruth,
}

/// Creates `<out>/image/...`, `<out>/ground_truth.json` and
/// `<out>/fixture_manifest.json`.
pub fn materialize(spec: &ImageSpec, out: &Path, device_id: &str, sample_interval: usize) -> Result<FixtureManifest> {
    if sample_interval == 0 {
        bail!("sample interval must be at least 1");
    }
    let k = sample_interval as u64;
    let root = out.join(IMAGE_DIR);
    if root.exists() {
        bail!("{} already exists", root.display());
    }
    fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
    let denylist = Denylist::default();

    let mut dbs: Vec<&DbSpec> = spec.databases.iter().collect();
    dbs.sort_by(|a, b| (&a.file_path, &a.file_name).cmp(&(&b.file_path, &b.file_name)));
    let mut seen = BTreeSet::new();
    for db in &dbs {
        if !seen.insert((db.file_path.as_str(), db.file_name.as_str())) {
            bail!("duplicate database {}{}", db.file_path, db.file_name);
        }
    }

    let mut position: u64 = 0;
    let mut planted_out = Vec::new();
    for db in dbs {
        let excluded = denylist.matches(&db.file_path);
        let mut tables: Vec<&TableSpec> = db.tables.iter().collect();
        tables.sort_by(|a, b| a.name.as_bytes().cmp(b.name.as_bytes()));
        let mut built = Vec::new();
        for table in tables {
            let mut rows: Vec<Vec<Cell>> = Vec::new();
            let sampled = |pos: u64, lid: u64| (pos + lid - 1).is_multiple_of(k);
            for spec_row in &table.rows {
                match spec_row {
                    RowSpec::Filler(n) => {
                        for _ in 0..*n {
                            rows.push(table.filler_row(rows.len() + 1));
                        }
                    }
                    RowSpec::Evidence { lid, cells, planted } => {
                        if cells.len() != table.columns.len() {
                            bail!("row width mismatch in table {}", table.name);
                        }
                        let lid = match lid {
                            Some(l) => {
                                while (rows.len() as u64) + 1 < *l {
                                    rows.push(table.filler_row(rows.len() + 1));
                                }
                                if rows.len() as u64 + 1 != *l {
                                    bail!("lid {l} of table {} is already taken", table.name);
                                }
                                if !excluded && !sampled(position, *l) {
                                    bail!("lid {l} of table {} is not on a sampled position", table.name);
                                }
                                *l
                            }
                            None => {
                                while !excluded && !sampled(position, rows.len() as u64 + 1) {
                                    rows.push(table.filler_row(rows.len() + 1));
                                }
                                rows.len() as u64 + 1
                            }
                        };
                        rows.push(cells.clone());
                        if excluded {
                            continue;
                        }
                        let uid = make_uid(&UidParts {
                            device_id,
                            file_path: &db.file_path,
                            database_name: &db.file_name,
                            table_name: &table.name,
                            lid,
                        })?;
                        for p in planted {
                            planted_out.push(PlantedArtifact {
                                entity_type: p.entity_type,
                                value: p.value.clone(),
                                uid: uid.clone(),
                                path: db.file_path.clone(),
                                database: db.file_name.clone(),
                                table: table.name.clone(),
                                lid,
                            });
                        }
                    }
                }
            }
            if let Some(next) = table.align_next_lid {
                while !excluded && !sampled(position + rows.len() as u64, next) {
                    rows.push(table.filler_row(rows.len() + 1));
                }
            }
            if !excluded {
                position += rows.len() as u64;
            }
            built.push((table, rows));
        }
        write_database(&root, db, &built)?;
    }

    for (rel, bytes) in &spec.raw_files {
        let path = root.join(rel.trim_start_matches('/'));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }

    let ground_truth = GroundTruth {
        artifacts: planted_out
            .iter()
            .map(|p| GtArtifact {
                entity_type: p.entity_type,
                value: p.value.clone(),
                uid: Some(p.uid.clone()),
            })
            .collect(),
        relationships: spec.relationships.clone(),
        totals: spec.totals.clone(),
    };
    let gt_path = out.join(GROUND_TRUTH_FILE_NAME);
    fs::write(&gt_path, serde_json::to_string_pretty(&ground_truth)? + "\n")?;
    let manifest = FixtureManifest {
        scenario: None,
        device_id: device_id.to_string(),
        sample_interval,
        image_root: root,
        ground_truth_path: gt_path,
        planted: planted_out,
        ground_truth,
    };
    write_manifest(out, &manifest)?;
    Ok(manifest)
}

fn write_manifest(out: &Path, manifest: &FixtureManifest) -> Result<()> {
    fs::write(
        out.join(FIXTURE_MANIFEST_FILE_NAME),
        serde_json::to_string_pretty(manifest)? + "\n",
    )?;
    Ok(())
}

fn write_database(root: &Path, db: &DbSpec, tables: &[(&TableSpec, Vec<Vec<Cell>>)]) -> Result<()> {
    let dir = root.join(db.file_path.trim_matches('/'));
    fs::create_dir_all(&dir)?;
    let path = dir.join(&db.file_name);
    let mut conn = Connection::open(&path).with_context(|| format!("creating {}", path.display()))?;
    let tx = conn.transaction()?;
    for (table, rows) in tables {
        let cols: Vec<String> = table.columns.iter().map(|(c, t)| format!("\"{c}\" {t}")).collect();
        tx.execute(&format!("CREATE TABLE \"{}\" ({})", table.name, cols.join(", ")), [])?;
        let marks = vec!["?"; table.columns.len()].join(", ");
        let mut stmt = tx.prepare(&format!("INSERT INTO \"{}\" VALUES ({marks})", table.name))?;
        for row in rows {
            let values: Vec<Value> = row.iter().map(Cell::to_sql).collect();
            stmt.execute(rusqlite::params_from_iter(values))?;
        }
    }
    tx.commit()?;
    conn.close().map_err(|(_, e)| e)?;
    Ok(())
}

/// Generates a named scenario.
pub fn generate(scenario: Scenario, out: &Path, device_id: &str, sample_interval: usize) -> Result<FixtureManifest> {
    let spec = match scenario {
        Scenario::Table1 => table1_spec(),
        Scenario::Table2 => table2_spec(),
    };
    let mut manifest = materialize(&spec, out, device_id, sample_interval)?;
    manifest.scenario = Some(scenario);
    write_manifest(out, &manifest)?;
    Ok(manifest)
}

const JPEG_BYTES: &[u8] = &[
    0xFF, 0xD8, 0xFF, 0xE0, 0x00, 0x10, b'J', b'F', b'I', b'F', 0x00, 0x01, 0x01, 0x00, 0x00, 0x01, 0x00, 0x01, 0x00,
    0x00, 0xFF, 0xD9,
];

fn wal_bytes() -> Vec<u8> {
    let mut b = b"SQLite format 3\0".to_vec();
    b.extend_from_slice(&[0u8; 84]);
    b
}

use EntityType::*;

fn t(s: &str) -> Cell {
    Cell::text(s)
}

/// One record per artifact type, each in a different obfuscated form.
pub fn table1_spec() -> ImageSpec {
    let snap = "/data/data/com.snapchat.android/databases/";
    ImageSpec {
        databases: vec![
            DbSpec::new(
                snap,
                "core.db",
                vec![
                    TableSpec::new("Friend", &[("id", "INTEGER"), ("displayName", "TEXT")])
                        .filler(3)
                        .align_next(114),
                    TableSpec::new("UserStore", &[("id", "INTEGER"), ("realVal", "BLOB")]).evidence_at(
                        114,
                        vec![
                            Cell::Int(114),
                            Cell::Blob(b"\x0a\x08a\x19heisenbergercarro@gmail.com--\x00\x12".to_vec()),
                        ],
                        vec![planted(Email, "heisenbergercarro@gmail.com")],
                    ),
                ],
            ),
            DbSpec::new(
                snap,
                "main.db",
                vec![TableSpec::new("kv", &[("id", "INTEGER"), ("blobVal", "BLOB")])
                    .filler(2)
                    .evidence(
                        vec![Cell::Int(9), Cell::Blob(b"n\x0c+16506808040\x12\t\n\x01".to_vec())],
                        vec![planted(PhoneNumber, "+16506808040")],
                    )],
            ),
            DbSpec::new(
                "/data/data/com.google.android.apps.docs/databases/",
                "docs.db",
                vec![
                    TableSpec::new("items", &[("id", "INTEGER"), ("proto", "BLOB")]).evidence(
                        vec![
                            Cell::Int(1),
                            Cell::Blob(b"\x03\x0f\"1617477858090\"\xe2\x03\x01".to_vec()),
                        ],
                        vec![planted(Timestamp, "03 April 2021 15:24:18")],
                    ),
                ],
            ),
            DbSpec::new(
                "/data/data/com.twitter.android/databases/",
                "twitter.db",
                vec![
                    TableSpec::new("users", &[("id", "INTEGER"), ("Data", "BLOB")]).evidence(
                        vec![
                            Cell::Int(1),
                            Cell::Blob(b"\x0a\x1f\"ull_name\":\"Marsha Mellos\",\"profile_image\":\"\"".to_vec()),
                        ],
                        vec![planted(HumanName, "Marsha Mellos")],
                    ),
                ],
            ),
            DbSpec::new(
                "/data/data/com.android.chrome/app_chrome/Default/",
                "History",
                vec![
                    TableSpec::new("urls", &[("id", "INTEGER"), ("url", "TEXT"), ("title", "TEXT")])
                        .filler(4)
                        .evidence(
                            vec![
                                Cell::Int(5),
                                t("https://www.google.com/search?q=hidden+photos+apps"),
                                t("hidden photos apps - Google Search"),
                            ],
                            vec![planted(SearchKeyword, "hidden photos apps")],
                        ),
                ],
            ),
            DbSpec::new(
                "/data/data/com.android.bluetooth/databases/",
                "bluetooth.db",
                vec![
                    TableSpec::new("devices", &[("id", "INTEGER"), ("name", "TEXT"), ("address", "TEXT")]).evidence(
                        vec![Cell::Int(1), t("Car Audio"), t("34:C7:31:F8:61:3B")],
                        vec![planted(MacAddress, "34:C7:31:F8:61:3B")],
                    ),
                ],
            ),
            DbSpec::new(
                "/data/data/com.instagram.android/databases/",
                "analytics.db",
                vec![
                    TableSpec::new("logs", &[("id", "INTEGER"), ("DPath", "TEXT")]).evidence(
                        vec![
                            Cell::Int(1),
                            t("/data/user/0/com.instagram.android/databases/direct.db"),
                        ],
                        vec![planted(AppName, "Instagram")],
                    ),
                ],
            ),
            DbSpec::new(
                "/data/media/0/Download/",
                "photo.jpg",
                vec![TableSpec::new("cache", &[("id", "INTEGER"), ("note", "TEXT")]).filler(5)],
            ),
            DbSpec::new(
                "/data/data/com.android.providers.settings/databases/",
                "settings.db",
                vec![TableSpec::new("secure", &[("name", "TEXT"), ("value", "TEXT")])
                    .evidence(vec![t("account"), t("technician@settings.example 1617477858")], vec![])],
            ),
        ],
        raw_files: vec![
            ("/data/media/0/DCIM/Camera/IMG_0001.jpg".into(), JPEG_BYTES.to_vec()),
            (format!("{snap}core.db-wal"), wal_bytes()),
        ],
        relationships: Vec::new(),
        totals: None,
    }
}

/// Epoch milliseconds rendered in America/New_York.
struct Moment(i64, &'static str);

const SEARCHES: [(&str, Moment); 13] = [
    ("interesting car apps", Moment(1625716959000, "08 July 2021 00:02:39")),
    ("hidden photos apps", Moment(1623779194000, "15 June 2021 13:46:34")),
    (
        "chester springs pa zip code",
        Moment(1625716300000, "07 July 2021 23:51:40"),
    ),
    ("italianos near me", Moment(1625959325000, "10 July 2021 19:22:05")),
    (
        "how to disable car gps tracker",
        Moment(1625278491000, "02 July 2021 22:14:51"),
    ),
    ("vin number lookup", Moment(1625319677000, "03 July 2021 09:41:17")),
    (
        "car key fob programming",
        Moment(1625411133000, "04 July 2021 11:05:33"),
    ),
    (
        "used car buyers near me",
        Moment(1625531868000, "05 July 2021 20:37:48"),
    ),
    (
        "how to remove dealer plates",
        Moment(1625548766000, "06 July 2021 01:19:26"),
    ),
    (
        "title transfer pa without title",
        Moment(1625864282000, "09 July 2021 16:58:02"),
    ),
    (
        "bluetooth car unlock app",
        Moment(1626007479000, "11 July 2021 08:44:39"),
    ),
    (
        "junkyard prices for cars",
        Moment(1626112991000, "12 July 2021 14:03:11"),
    ),
    ("cattle ranch montana", Moment(1626233276000, "13 July 2021 23:27:56")),
];

const BT_CONNECTIONS: [(&str, Moment); 3] = [
    ("34:C7:31:F8:61:3B", Moment(1617592536000, "04 April 2021 23:15:36")),
    ("2C:6B:7D:1D:21:4A", Moment(1620586684000, "09 May 2021 14:58:04")),
    ("F0:8A:76:C4:F8:9E", Moment(1621559933000, "20 May 2021 21:18:53")),
];

const CHROME: (&str, &str) = ("com.android.chrome", "Chrome");
const BLUETOOTH: (&str, &str) = ("com.android.bluetooth", "Bluetooth");
const DRIVE: (&str, &str) = ("com.google.android.apps.docs", "Google Drive");
const SNAPCHAT: (&str, &str) = ("com.snapchat.android", "Snapchat");
const TWITTER: (&str, &str) = ("com.twitter.android", "Twitter");

struct Rels(Vec<GtRelationship>);

impl Rels {
    fn add(&mut self, type_pair: EdgeType, a: &str, b: &str) {
        self.0.push(GtRelationship {
            type_pair,
            values: [a.to_string(), b.to_string()],
        });
    }
}

/// Co-occurrence records yielding 72 hypothesis instances; four of them
/// (two Twitter timestamp links, two Twitter email links) have no
/// ground-truth relationship.
pub fn table2_spec() -> ImageSpec {
    let mut rels = Rels(Vec::new());
    use EdgeType as E;

    let mut chrome = TableSpec::new(
        "keyword_searches",
        &[
            ("id", "INTEGER"),
            ("package", "TEXT"),
            ("title", "TEXT"),
            ("visit_time", "INTEGER"),
        ],
    );
    for (i, (query, m)) in SEARCHES.iter().enumerate() {
        chrome = chrome.evidence(
            vec![
                Cell::Int(i as i64 + 1),
                t(CHROME.0),
                t(&format!("{query} - Google Search")),
                Cell::Int(m.0),
            ],
            vec![
                planted(AppName, CHROME.1),
                planted(SearchKeyword, query),
                planted(Timestamp, m.1),
            ],
        );
        rels.add(E::TimestampApp, m.1, CHROME.1);
        rels.add(E::AppSearch, CHROME.1, query);
        rels.add(E::TimestampSearch, m.1, query);
    }

    let mut bt = TableSpec::new(
        "devices",
        &[
            ("id", "INTEGER"),
            ("package", "TEXT"),
            ("address", "TEXT"),
            ("last_connected", "INTEGER"),
        ],
    );
    for (i, (mac, m)) in BT_CONNECTIONS.iter().enumerate() {
        bt = bt.evidence(
            vec![Cell::Int(i as i64 + 1), t(BLUETOOTH.0), t(mac), Cell::Int(m.0)],
            vec![
                planted(AppName, BLUETOOTH.1),
                planted(MacAddress, mac),
                planted(Timestamp, m.1),
            ],
        );
        rels.add(E::TimestampApp, m.1, BLUETOOTH.1);
        rels.add(E::MacApp, mac, BLUETOOTH.1);
        rels.add(E::TimestampMac, m.1, mac);
    }
    let bt_events = TableSpec::new(
        "events",
        &[("id", "INTEGER"), ("package", "TEXT"), ("event_time", "INTEGER")],
    )
    .evidence(
        vec![Cell::Int(1), t(BLUETOOTH.0), Cell::Int(1621559407000)],
        vec![
            planted(AppName, BLUETOOTH.1),
            planted(Timestamp, "20 May 2021 21:10:07"),
        ],
    );
    rels.add(E::TimestampApp, "20 May 2021 21:10:07", BLUETOOTH.1);

    let drive_items = TableSpec::new("items", &[("id", "INTEGER"), ("package", "TEXT"), ("proto", "BLOB")]).evidence(
        vec![
            Cell::Int(1),
            t(DRIVE.0),
            Cell::Blob(b"\x03\x0f\"1617477858090\"\xe2\x03\x01".to_vec()),
        ],
        vec![planted(AppName, DRIVE.1), planted(Timestamp, "03 April 2021 15:24:18")],
    );
    rels.add(E::TimestampApp, "03 April 2021 15:24:18", DRIVE.1);
    let drive_accounts = TableSpec::new(
        "accounts",
        &[
            ("id", "INTEGER"),
            ("package", "TEXT"),
            ("account", "TEXT"),
            ("last_sync", "INTEGER"),
        ],
    )
    .evidence(
        vec![
            Cell::Int(1),
            t(DRIVE.0),
            t("heisenbergcarro@gmail.com"),
            Cell::Int(1617478202000),
        ],
        vec![
            planted(AppName, DRIVE.1),
            planted(Email, "heisenbergcarro@gmail.com"),
            planted(Timestamp, "03 April 2021 15:30:02"),
        ],
    );
    rels.add(E::TimestampApp, "03 April 2021 15:30:02", DRIVE.1);
    rels.add(E::EmailApp, "heisenbergcarro@gmail.com", DRIVE.1);
    rels.add(E::TimestampEmail, "03 April 2021 15:30:02", "heisenbergcarro@gmail.com");

    let snap_friends = TableSpec::new(
        "friends",
        &[
            ("id", "INTEGER"),
            ("package", "TEXT"),
            ("Data", "TEXT"),
            ("added_ts", "INTEGER"),
        ],
    )
    .evidence(
        vec![
            Cell::Int(1),
            t(SNAPCHAT.0),
            t("{\"id\":7,\"full_name\":\"Beth Dutton\"}"),
            Cell::Int(1617654503000),
        ],
        vec![
            planted(AppName, SNAPCHAT.1),
            planted(HumanName, "Beth Dutton"),
            planted(Timestamp, "05 April 2021 16:28:23"),
        ],
    );
    rels.add(E::NameTimestamp, "Beth Dutton", "05 April 2021 16:28:23");
    rels.add(E::NameApp, "Beth Dutton", SNAPCHAT.1);
    rels.add(E::TimestampApp, "05 April 2021 16:28:23", SNAPCHAT.1);
    let snap_kv = TableSpec::new(
        "kv",
        &[
            ("id", "INTEGER"),
            ("package", "TEXT"),
            ("email", "TEXT"),
            ("blobVal", "BLOB"),
        ],
    )
    .evidence(
        vec![
            Cell::Int(1),
            t(SNAPCHAT.0),
            t("heisenbergcarro@gmail.com"),
            Cell::Blob(b"n\x0c+16506808040\x12\t\n\x01".to_vec()),
        ],
        vec![
            planted(AppName, SNAPCHAT.1),
            planted(Email, "heisenbergcarro@gmail.com"),
            planted(PhoneNumber, "+16506808040"),
        ],
    );
    rels.add(E::PhoneApp, "+16506808040", SNAPCHAT.1);
    rels.add(E::PhoneEmail, "+16506808040", "heisenbergcarro@gmail.com");
    rels.add(E::EmailApp, "heisenbergcarro@gmail.com", SNAPCHAT.1);

    let tw_users = TableSpec::new(
        "users",
        &[
            ("id", "INTEGER"),
            ("package", "TEXT"),
            ("Data", "TEXT"),
            ("updated_at", "INTEGER"),
        ],
    )
    .evidence(
        vec![
            Cell::Int(1),
            t(TWITTER.0),
            t("\"ull_name\":\"Marsha Mellos\",\"profile_image\":\"\""),
            Cell::Int(1624153080000),
        ],
        vec![
            planted(AppName, TWITTER.1),
            planted(HumanName, "Marsha Mellos"),
            planted(Timestamp, "19 June 2021 21:38:00"),
        ],
    );
    rels.add(E::NameTimestamp, "Marsha Mellos", "19 June 2021 21:38:00");
    rels.add(E::NameApp, "Marsha Mellos", TWITTER.1);
    rels.add(E::TimestampApp, "19 June 2021 21:38:00", TWITTER.1);

    // (email, epoch ms, rendered, timestamp-app valid, email-app valid)
    let activity: [(&str, i64, &str, bool, bool); 3] = [
        (
            "thedogecoinmillionaire@gmail.com",
            1624602559000,
            "25 June 2021 02:29:19",
            false,
            true,
        ),
        (
            "CryptoWendyO@protonmail.com",
            1626731280000,
            "19 July 2021 17:48:00",
            false,
            false,
        ),
        (
            "heisenbergcarro@gmail.com",
            1624198365000,
            "20 June 2021 10:12:45",
            true,
            false,
        ),
    ];
    let mut tw_activity = TableSpec::new(
        "activity",
        &[
            ("id", "INTEGER"),
            ("package", "TEXT"),
            ("email", "TEXT"),
            ("event_time", "INTEGER"),
        ],
    );
    for (i, (email, ms, rendered, ta_ok, ea_ok)) in activity.iter().enumerate() {
        tw_activity = tw_activity.evidence(
            vec![Cell::Int(i as i64 + 1), t(TWITTER.0), t(email), Cell::Int(*ms)],
            vec![
                planted(AppName, TWITTER.1),
                planted(Email, email),
                planted(Timestamp, rendered),
            ],
        );
        rels.add(E::TimestampEmail, rendered, email);
        if *ta_ok {
            rels.add(E::TimestampApp, rendered, TWITTER.1);
        }
        if *ea_ok {
            rels.add(E::EmailApp, email, TWITTER.1);
        }
    }

    let gmail = TableSpec::new(
        "messages",
        &[
            ("id", "INTEGER"),
            ("fromAddress", "TEXT"),
            ("dateReceivedMs", "INTEGER"),
        ],
    )
    .evidence(
        vec![
            Cell::Int(1),
            t("thedogecoinmillionaire@gmail.com"),
            Cell::Int(1624708800000),
        ],
        vec![
            planted(Email, "thedogecoinmillionaire@gmail.com"),
            planted(Timestamp, "26 June 2021 08:00:00"),
        ],
    );
    rels.add(
        E::TimestampEmail,
        "26 June 2021 08:00:00",
        "thedogecoinmillionaire@gmail.com",
    );

    let totals = serde_json::json!({
        "hypotheses": 72,
        "invalid": 4,
        "by_type_pair": EdgeType::ALL
            .iter()
            .zip([24, 5, 13, 3, 5, 13, 3, 2, 2, 1, 1])
            .map(|(e, n)| (e.label().to_string(), serde_json::json!(n)))
            .collect::<serde_json::Map<_, _>>(),
    });

    ImageSpec {
        databases: vec![
            DbSpec::new(
                "/data/data/com.android.chrome/app_chrome/Default/",
                "History",
                vec![chrome],
            ),
            DbSpec::new(
                "/data/data/com.android.bluetooth/databases/",
                "bluetooth.db",
                vec![bt, bt_events],
            ),
            DbSpec::new(
                "/data/data/com.google.android.apps.docs/databases/",
                "docs.db",
                vec![drive_items, drive_accounts],
            ),
            DbSpec::new(
                "/data/data/com.snapchat.android/databases/",
                "main.db",
                vec![snap_friends, snap_kv],
            ),
            DbSpec::new(
                "/data/data/com.twitter.android/databases/",
                "twitter.db",
                vec![tw_users, tw_activity],
            ),
            DbSpec::new(
                "/data/data/com.google.android.gm/databases/",
                "mailstore.db",
                vec![gmail],
            ),
        ],
        raw_files: Vec::new(),
        relationships: rels.0,
        totals: Some(totals),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names_round_trip() {
        for s in [Scenario::Table1, Scenario::Table2] {
            assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
        }
        assert!("table3".parse::<Scenario>().is_err());
    }

    #[test]
    fn fixed_lid_is_aligned() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate(Scenario::Table1, dir.path(), DEFAULT_FIXTURE_DEVICE, 6).unwrap();
        let email = m.planted.iter().find(|p| p.entity_type == Email).unwrap();
        assert_eq!(email.lid, 114);
        assert!(email.uid.ends_with("_UserStore_114"));
        assert_eq!(m.planted.len(), 7);
    }

    #[test]
    fn misaligned_fixed_lid_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ImageSpec {
            databases: vec![DbSpec::new(
                "/data/data/com.x/databases/",
                "x.db",
                vec![TableSpec::new("t", &[("v", "TEXT")]).evidence_at(2, vec![t("a")], vec![])],
            )],
            ..Default::default()
        };
        assert!(materialize(&spec, dir.path(), "d", 6).is_err());
    }
}
