//! Row flattening, deterministic UIDs, sampling and CSV serialization.
//!
//! A UID is the first eight lowercase hex characters of
//! `SHA-256(device_id ‖ file_path ‖ database_name)` (plain byte
//! concatenation, no separators), followed by `_<table>_<lid>`.

use std::fmt;
use std::io::{Read, Write};
use std::num::NonZeroUsize;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{DatabaseRef, RawRow, RawValue};

pub const UID_PREFIX_LEN: usize = 8;
pub const DEFAULT_SAMPLE_INTERVAL: usize = 6;
pub const UNIFIED_FILE_NAME: &str = "unified_records.csv";

/// Android system/configuration stores excluded before sampling.
pub const DEFAULT_DENYLIST: &[&str] = &[
    "com.android.providers.settings",
    "com.android.settings",
    "com.google.android.gms",
    "com.android.vending",
    "com.android.systemui",
    "com.android.keychain",
];

const METADATA_COLUMNS: [&str; 5] = ["database", "table", "path", "uid", "lid"];

#[derive(Debug, Error)]
pub enum FlattenError {
    #[error("invalid uid parts: {0}")]
    InvalidParts(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed unified record on line {line}: {reason}")]
    MalformedUnified { line: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UidParts<'a> {
    pub device_id: &'a str,
    pub file_path: &'a str,
    pub database_name: &'a str,
    pub table_name: &'a str,
    pub lid: u64,
}

/// 8-hex source prefix for one database location on one device.
pub fn source_prefix(device_id: &str, file_path: &str, database_name: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(device_id.as_bytes());
    hasher.update(file_path.as_bytes());
    hasher.update(database_name.as_bytes());
    let mut digest = hex::encode(hasher.finalize());
    digest.truncate(UID_PREFIX_LEN);
    digest
}

pub fn make_uid(parts: &UidParts<'_>) -> Result<String, FlattenError> {
    for (name, value) in [
        ("device_id", parts.device_id),
        ("file_path", parts.file_path),
        ("database_name", parts.database_name),
        ("table_name", parts.table_name),
    ] {
        if value.is_empty() {
            return Err(FlattenError::InvalidParts(format!("{name} is empty")));
        }
    }
    if parts.lid < 1 {
        return Err(FlattenError::InvalidParts("lid must be >= 1".into()));
    }
    Ok(format!(
        "{}_{}_{}",
        source_prefix(parts.device_id, parts.file_path, parts.database_name),
        parts.table_name,
        parts.lid
    ))
}

/// Components embedded in a UID string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UidComponents<'a> {
    pub prefix: &'a str,
    pub table: &'a str,
    pub lid: u64,
}

/// Splits `<8 hex>_<table>_<lid>`; the table itself may contain underscores.
pub fn parse_uid(uid: &str) -> Option<UidComponents<'_>> {
    let prefix = uid.get(..UID_PREFIX_LEN)?;
    if !prefix.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return None;
    }
    let rest = uid[UID_PREFIX_LEN..].strip_prefix('_')?;
    let (table, lid) = rest.rsplit_once('_')?;
    if table.is_empty() || lid.is_empty() || !lid.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if lid.len() > 1 && lid.starts_with('0') {
        return None;
    }
    let lid: u64 = lid.parse().ok()?;
    (lid >= 1).then_some(UidComponents { prefix, table, lid })
}

/// Column/value pairs in source column order, serialized as a JSON object.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Pairs(pub Vec<(String, String)>);

impl Pairs {
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(c, v)| (c.as_str(), v.as_str()))
    }

    pub fn get(&self, column: &str) -> Option<&str> {
        self.iter().find(|(c, _)| *c == column).map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("string pairs always serialize")
    }
}

impl Serialize for Pairs {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Pairs {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PairsVisitor;
        impl<'de> Visitor<'de> for PairsVisitor {
            type Value = Pairs;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object of string values")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Pairs, A::Error> {
                let mut out = Vec::with_capacity(access.size_hint().unwrap_or(0));
                while let Some((k, v)) = access.next_entry::<String, String>()? {
                    out.push((k, v));
                }
                Ok(Pairs(out))
            }
        }
        deserializer.deserialize_map(PairsVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatRecord {
    pub database: String,
    pub table: String,
    pub path: String,
    pub uid: String,
    pub lid: u64,
    pub pairs: Pairs,
}

/// Lossless text rendering of a raw cell.
///
/// Blobs keep printable ASCII and escape every other byte (and the
/// backslash itself) as lowercase `\xNN`.
pub fn render_value(value: &RawValue) -> String {
    match value {
        RawValue::Null => String::new(),
        RawValue::Integer(i) => i.to_string(),
        RawValue::Real(f) => render_real(*f),
        RawValue::Text(s) => s.clone(),
        RawValue::Blob(bytes) => escape_bytes(bytes),
    }
}

fn render_real(f: f64) -> String {
    if f.is_finite() && f.fract() == 0.0 && f.abs() < 1e15 {
        format!("{f:.1}")
    } else {
        f.to_string()
    }
}

pub fn escape_bytes(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len());
    for &b in bytes {
        if (0x20..=0x7e).contains(&b) && b != b'\\' {
            out.push(b as char);
        } else {
            out.push_str(&format!("\\x{b:02x}"));
        }
    }
    out
}

pub fn flatten_row(db: &DatabaseRef, row: &RawRow) -> Result<FlatRecord, FlattenError> {
    let uid = make_uid(&UidParts {
        device_id: &db.device_id,
        file_path: &db.file_path,
        database_name: &db.database_name,
        table_name: &row.table_name,
        lid: row.row_index,
    })?;
    Ok(FlatRecord {
        database: db.database_name.clone(),
        table: row.table_name.clone(),
        path: db.file_path.clone(),
        uid,
        lid: row.row_index,
        pairs: Pairs(row.cells.iter().map(|(c, v)| (c.clone(), render_value(v))).collect()),
    })
}

pub fn flatten_table<I>(db: &DatabaseRef, table: &str, rows: I) -> Result<Vec<FlatRecord>, FlattenError>
where
    I: IntoIterator<Item = RawRow>,
{
    rows.into_iter()
        .map(|row| {
            debug_assert_eq!(row.table_name, table);
            flatten_row(db, &row)
        })
        .collect()
}

/// Path exclusion list. Entries starting with `/` are path prefixes; any
/// other entry is a prefix of a single path segment (a package name).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Denylist(pub Vec<String>);

impl Default for Denylist {
    fn default() -> Self {
        Self(DEFAULT_DENYLIST.iter().map(|s| s.to_string()).collect())
    }
}

impl Denylist {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn matches(&self, path: &str) -> bool {
        self.0.iter().any(|entry| {
            if entry.starts_with('/') {
                path.starts_with(entry.as_str())
            } else {
                path.split('/').any(|seg| seg.starts_with(entry.as_str()))
            }
        })
    }
}

/// Drops denylisted records, then keeps positions 1, 1+k, 1+2k, ...
pub fn unify(records: Vec<FlatRecord>, sample_interval: NonZeroUsize, denylist: &Denylist) -> Vec<FlatRecord> {
    records
        .into_iter()
        .filter(|r| !denylist.matches(&r.path))
        .enumerate()
        .filter(|(i, _)| i % sample_interval.get() == 0)
        .map(|(_, r)| r)
        .collect()
}

/// File name for a per-table export; the source prefix keeps copies of the
/// same database at different paths apart.
pub fn table_csv_name(record_prefix: &str, database: &str, table: &str) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    };
    format!("{record_prefix}_{}_{}.csv", clean(database), clean(table))
}

/// Writes a per-table CSV: metadata columns then native columns.
pub fn write_table_csv<W: Write>(out: W, records: &[FlatRecord], columns: &[String]) -> Result<(), FlattenError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let header: Vec<&str> = METADATA_COLUMNS
        .iter()
        .copied()
        .chain(columns.iter().map(String::as_str))
        .collect();
    w.write_record(&header)?;
    for r in records {
        let lid = r.lid.to_string();
        let mut row: Vec<&str> = vec![&r.database, &r.table, &r.path, &r.uid, &lid];
        row.extend(r.pairs.iter().map(|(_, v)| v));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_unified_csv<W: Write>(out: W, records: &[FlatRecord]) -> Result<(), FlattenError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["database", "table", "path", "uid", "lid", "pairs"])?;
    for r in records {
        w.write_record([
            r.database.as_str(),
            &r.table,
            &r.path,
            &r.uid,
            &r.lid.to_string(),
            &r.pairs.to_json(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_unified_csv<R: Read>(input: R) -> Result<Vec<FlatRecord>, FlattenError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let row = row?;
        if row.len() != 6 {
            return Err(FlattenError::MalformedUnified {
                line,
                reason: format!("expected 6 columns, found {}", row.len()),
            });
        }
        let lid = row[4].parse().map_err(|_| FlattenError::MalformedUnified {
            line,
            reason: format!("bad lid {:?}", &row[4]),
        })?;
        let pairs: Pairs = serde_json::from_str(&row[5]).map_err(|e| FlattenError::MalformedUnified {
            line,
            reason: e.to_string(),
        })?;
        out.push(FlatRecord {
            database: row[0].to_string(),
            table: row[1].to_string(),
            path: row[2].to_string(),
            uid: row[3].to_string(),
            lid,
            pairs,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts<'a>(d: &'a str, p: &'a str, n: &'a str, t: &'a str, lid: u64) -> UidParts<'a> {
        UidParts {
            device_id: d,
            file_path: p,
            database_name: n,
            table_name: t,
            lid,
        }
    }

    #[test]
    fn whatsapp_example_uid() {
        let uid = make_uid(&parts(
            "A1B2C3D4E5F6G7H8",
            "/data/com.whatsapp/databases/",
            "msgstore.db",
            "messages",
            42,
        ))
        .unwrap();
        assert_eq!(uid, "788492af_messages_42");
    }

    #[test]
    fn dev1_prefix_matches_external_sha256() {
        // printf 'dev1/p/a.db' | sha256sum -> c308b2ab...
        let uid = make_uid(&parts("dev1", "/p/", "a.db", "t", 1)).unwrap();
        assert_eq!(uid, "c308b2ab_t_1");
    }

    #[test]
    fn invalid_parts_rejected() {
        assert!(make_uid(&parts("", "/p/", "a.db", "t", 1)).is_err());
        assert!(make_uid(&parts("d", "/p/", "a.db", "", 1)).is_err());
        assert!(make_uid(&parts("d", "/p/", "a.db", "t", 0)).is_err());
    }

    #[test]
    fn parse_uid_handles_underscored_tables() {
        let c = parse_uid("788492af_user_store_114").unwrap();
        assert_eq!(c.prefix, "788492af");
        assert_eq!(c.table, "user_store");
        assert_eq!(c.lid, 114);
        assert!(parse_uid("788492AF_t_1").is_none());
        assert!(parse_uid("788492af_t_0").is_none());
        assert!(parse_uid("788492af__1").is_none());
        assert!(parse_uid("garbage").is_none());
    }

    #[test]
    fn blob_escapes_match_table_one_rendering() {
        let mut bytes = vec![0x6e, 0x0c];
        bytes.extend_from_slice(b"+16506808040");
        bytes.extend_from_slice(&[0x12, 0x09, 0x0a, 0x01]);
        let s = render_value(&RawValue::Blob(bytes));
        assert_eq!(s, "n\\x0c+16506808040\\x12\\x09\\x0a\\x01");
        assert!(s.contains("n\\x0c+16506808040"));
    }

    #[test]
    fn backslash_is_escaped_for_losslessness() {
        assert_eq!(escape_bytes(b"a\\x41"), "a\\x5cx41");
    }

    #[test]
    fn scalar_rendering() {
        assert_eq!(render_value(&RawValue::Null), "");
        assert_eq!(render_value(&RawValue::Integer(-7)), "-7");
        assert_eq!(render_value(&RawValue::Real(2.0)), "2.0");
        assert_eq!(render_value(&RawValue::Real(0.25)), "0.25");
        assert_eq!(render_value(&RawValue::Text("héllo".into())), "héllo");
    }

    fn db() -> DatabaseRef {
        DatabaseRef {
            device_id: "dev".into(),
            file_path: "/data/data/com.snapchat.android/databases/".into(),
            database_name: "core.db".into(),
            byte_size: 0,
            signature: "sqlite3".into(),
        }
    }

    #[test]
    fn userstore_row_keeps_lid_in_uid() {
        let row = RawRow {
            table_name: "UserStore".into(),
            row_index: 114,
            cells: vec![(
                "realval".into(),
                RawValue::Blob(b"\x19heisenbergercarro@gmail.com--".to_vec()),
            )],
        };
        let recs = flatten_table(&db(), "UserStore", vec![row]).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert!(r.uid.ends_with("_UserStore_114"));
        assert_eq!(r.lid, 114);
        assert_eq!(r.pairs.get("realval"), Some("\\x19heisenbergercarro@gmail.com--"));
        assert!(flatten_table(&db(), "UserStore", Vec::new()).unwrap().is_empty());
    }

    fn rec(path: &str, lid: u64) -> FlatRecord {
        FlatRecord {
            database: "x.db".into(),
            table: "t".into(),
            path: path.into(),
            uid: format!("00000000_t_{lid}"),
            lid,
            pairs: Pairs::default(),
        }
    }

    #[test]
    fn sampling_keeps_first_then_every_interval() {
        let records: Vec<_> = (1..=12).map(|i| rec("/data/a/", i)).collect();
        let kept = unify(records.clone(), NonZeroUsize::new(6).unwrap(), &Denylist::empty());
        assert_eq!(kept.iter().map(|r| r.lid).collect::<Vec<_>>(), [1, 7]);
        let all = unify(records.clone(), NonZeroUsize::new(1).unwrap(), &Denylist::empty());
        assert_eq!(all, records);
    }

    #[test]
    fn exclusion_happens_before_sampling() {
        let mut records = vec![rec("/data/com.android.settings/databases/", 1)];
        records.extend((2..=8).map(|i| rec("/data/com.app/databases/", i)));
        let deny = Denylist(vec!["/data/com.android.settings".into()]);
        let kept = unify(records, NonZeroUsize::new(6).unwrap(), &deny);
        assert_eq!(kept.iter().map(|r| r.lid).collect::<Vec<_>>(), [2, 8]);
    }

    #[test]
    fn package_denylist_entries_match_segments() {
        let d = Denylist::default();
        assert!(d.matches("/data/data/com.android.providers.settings/databases/"));
        assert!(d.matches("/data/user/0/com.google.android.gms/databases/"));
        assert!(!d.matches("/data/data/com.android.chrome/app_chrome/Default/"));
        assert!(!d.matches("/data/data/com.android.bluetooth/databases/"));
    }

    #[test]
    fn unified_csv_round_trip_preserves_pair_order() {
        let mut r = rec("/p, with \"quotes\"/", 3);
        r.pairs = Pairs(vec![("z".into(), "last,\nline".into()), ("a".into(), "\\x00".into())]);
        let mut buf = Vec::new();
        write_unified_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("database,table,path,uid,lid,pairs\n"));
        assert!(!text.contains('\r'));
        assert!(text.contains(r#"{""z"":""last,\nline"",""a"":""\\x00""}"#));
        let back = read_unified_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![r]);
    }

    #[test]
    fn table_csv_header() {
        let mut r = rec("/p/", 1);
        r.pairs = Pairs(vec![("id".into(), "1".into()), ("body".into(), "hi".into())]);
        let mut buf = Vec::new();
        write_table_csv(&mut buf, &[r], &["id".into(), "body".into()]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "database,table,path,uid,lid,id,body\nx.db,t,/p/,00000000_t_1,1,1,hi\n"
        );
    }
}
