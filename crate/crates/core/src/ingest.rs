//! Evidence discovery over an extracted device image.
//!
//! Databases are identified by their 16-byte SQLite header, never by file
//! extension, so a database renamed to `photo.jpg` is still found. Sidecar
//! files (`-wal`, `-shm`, `-journal`) are ignored; only committed main-file
//! content is read, and every connection is opened read-only with
//! `immutable=1` so the evidence files are never touched.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;
use walkdir::WalkDir;

/// "SQLite format 3" followed by a NUL byte.
pub const SQLITE_MAGIC: &[u8; 16] = b"SQLite format 3\0";

/// Format tag carried by every emitted [`DatabaseRef`].
pub const SQLITE_SIGNATURE: &str = "sqlite3";

const SIDECAR_SUFFIXES: [&str; 3] = ["-wal", "-shm", "-journal"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("image root not found or unreadable: {0}")]
    RootNotFound(PathBuf),
    #[error("corrupt database {path}: {reason}")]
    CorruptDatabase { path: PathBuf, reason: String },
    #[error("table {table:?} not found in {database}")]
    TableNotFound { database: String, table: String },
    #[error("unsupported signature {0:?}")]
    UnsupportedSignature(String),
}

/// A database discovered in the image.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DatabaseRef {
    pub device_id: String,
    /// Image-relative directory, `/`-separated with leading and trailing slash.
    pub file_path: String,
    pub database_name: String,
    pub byte_size: u64,
    pub signature: String,
}

impl DatabaseRef {
    pub fn relative_path(&self) -> String {
        format!("{}{}", self.file_path, self.database_name)
    }
}

/// A scan warning for a file that could not be inspected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanWarning {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub databases: Vec<DatabaseRef>,
    pub warnings: Vec<ScanWarning>,
}

/// One raw cell value as stored by SQLite.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    /// Also used for TEXT cells that are not valid UTF-8.
    Blob(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub table_name: String,
    /// 1-based ordinal in physical scan order.
    pub row_index: u64,
    pub cells: Vec<(String, RawValue)>,
}

/// Outcome counters for one table stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RowTally {
    pub emitted: u64,
    pub skipped: u64,
}

/// An extracted device image mounted as a directory tree.
#[derive(Debug, Clone)]
pub struct ForensicImage {
    root: PathBuf,
    device_id: String,
}

impl ForensicImage {
    pub fn new(root: impl Into<PathBuf>, device_id: impl Into<String>) -> Self {
        Self {
            root: root.into(),
            device_id: device_id.into(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    /// Absolute location of a discovered database.
    pub fn locate(&self, db: &DatabaseRef) -> PathBuf {
        let mut path = self.root.clone();
        for part in db.file_path.split('/').filter(|p| !p.is_empty()) {
            path.push(part);
        }
        path.push(&db.database_name);
        path
    }

    /// Walks the tree and returns every file carrying the SQLite header,
    /// sorted by `(file_path, database_name)`.
    pub fn scan(&self) -> Result<ScanReport, IngestError> {
        if !self.root.is_dir() {
            return Err(IngestError::RootNotFound(self.root.clone()));
        }
        let mut report = ScanReport::default();
        for entry in WalkDir::new(&self.root).follow_links(false) {
            let entry = match entry {
                Ok(e) => e,
                Err(err) => {
                    let path = err.path().map(|p| p.display().to_string()).unwrap_or_default();
                    warn!(%path, "unreadable directory entry: {err}");
                    report.warnings.push(ScanWarning {
                        path,
                        reason: err.to_string(),
                    });
                    continue;
                }
            };
            if !entry.file_type().is_file() {
                continue;
            }
            let name = entry.file_name().to_string_lossy().into_owned();
            if SIDECAR_SUFFIXES.iter().any(|s| name.ends_with(s)) {
                continue;
            }
            match has_sqlite_header(entry.path()) {
                Ok(true) => {}
                Ok(false) => continue,
                Err(err) => {
                    report.warnings.push(ScanWarning {
                        path: entry.path().display().to_string(),
                        reason: err.to_string(),
                    });
                    continue;
                }
            }
            let byte_size = entry.metadata().map(|m| m.len()).unwrap_or(0);
            let rel_dir = entry
                .path()
                .parent()
                .and_then(|p| p.strip_prefix(&self.root).ok())
                .map(image_dir)
                .unwrap_or_else(|| "/".to_string());
            report.databases.push(DatabaseRef {
                device_id: self.device_id.clone(),
                file_path: rel_dir,
                database_name: name,
                byte_size,
                signature: SQLITE_SIGNATURE.to_string(),
            });
        }
        report
            .databases
            .sort_by(|a, b| (&a.file_path, &a.database_name).cmp(&(&b.file_path, &b.database_name)));
        Ok(report)
    }

    fn open(&self, db: &DatabaseRef) -> Result<Connection, IngestError> {
        if db.signature != SQLITE_SIGNATURE {
            return Err(IngestError::UnsupportedSignature(db.signature.clone()));
        }
        let path = self.locate(db);
        let corrupt = |reason: String| IngestError::CorruptDatabase {
            path: path.clone(),
            reason,
        };
        let uri = format!("file:{}?immutable=1", uri_escape(&path));
        Connection::open_with_flags(
            uri,
            OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_URI | OpenFlags::SQLITE_OPEN_NO_MUTEX,
        )
        .map_err(|e| corrupt(e.to_string()))
    }

    /// User tables in byte-wise name order; `sqlite_*` catalog tables excluded.
    pub fn enumerate_tables(&self, db: &DatabaseRef) -> Result<Vec<String>, IngestError> {
        let conn = self.open(db)?;
        let corrupt = |e: rusqlite::Error| IngestError::CorruptDatabase {
            path: self.locate(db),
            reason: e.to_string(),
        };
        let mut stmt = conn
            .prepare("SELECT name FROM sqlite_master WHERE type = 'table'")
            .map_err(corrupt)?;
        let mut names = stmt
            .query_map([], |row| row.get::<_, String>(0))
            .map_err(corrupt)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(corrupt)?;
        names.retain(|n| !n.starts_with("sqlite_"));
        names.sort();
        Ok(names)
    }

    /// Streams every row of `table` to `sink` in physical scan order.
    ///
    /// A row whose cells cannot be decoded is skipped and counted; a cursor
    /// failure ends the stream with the remaining rows uncounted.
    pub fn read_rows<F>(&self, db: &DatabaseRef, table: &str, mut sink: F) -> Result<RowTally, IngestError>
    where
        F: FnMut(RawRow),
    {
        let conn = self.open(db)?;
        let corrupt = |e: rusqlite::Error| IngestError::CorruptDatabase {
            path: self.locate(db),
            reason: e.to_string(),
        };
        let exists: bool = conn
            .query_row(
                "SELECT count(*) FROM sqlite_master WHERE type = 'table' AND name = ?1",
                [table],
                |r| r.get::<_, i64>(0),
            )
            .map_err(corrupt)?
            > 0;
        if !exists {
            return Err(IngestError::TableNotFound {
                database: db.database_name.clone(),
                table: table.to_string(),
            });
        }
        let sql = format!("SELECT * FROM {}", quote_ident(table));
        let mut stmt = conn.prepare(&sql).map_err(corrupt)?;
        let columns: Vec<String> = stmt.column_names().iter().map(|c| c.to_string()).collect();
        let mut rows = stmt.query([]).map_err(corrupt)?;
        let mut tally = RowTally::default();
        let mut index = 0u64;
        loop {
            let row = match rows.next() {
                Ok(Some(row)) => row,
                Ok(None) => break,
                Err(err) => {
                    warn!(table, "row cursor failed: {err}");
                    tally.skipped += 1;
                    break;
                }
            };
            index += 1;
            let mut cells = Vec::with_capacity(columns.len());
            let mut malformed = false;
            for (i, name) in columns.iter().enumerate() {
                match row.get_ref(i) {
                    Ok(value) => cells.push((name.clone(), raw_value(value))),
                    Err(_) => {
                        malformed = true;
                        break;
                    }
                }
            }
            if malformed {
                tally.skipped += 1;
                continue;
            }
            tally.emitted += 1;
            sink(RawRow {
                table_name: table.to_string(),
                row_index: index,
                cells,
            });
        }
        Ok(tally)
    }

    /// Convenience wrapper collecting a table stream.
    pub fn collect_rows(&self, db: &DatabaseRef, table: &str) -> Result<(Vec<RawRow>, RowTally), IngestError> {
        let mut out = Vec::new();
        let tally = self.read_rows(db, table, |row| out.push(row))?;
        Ok((out, tally))
    }
}

fn raw_value(value: ValueRef<'_>) -> RawValue {
    match value {
        ValueRef::Null => RawValue::Null,
        ValueRef::Integer(i) => RawValue::Integer(i),
        ValueRef::Real(f) => RawValue::Real(f),
        ValueRef::Text(bytes) => match std::str::from_utf8(bytes) {
            Ok(s) => RawValue::Text(s.to_string()),
            Err(_) => RawValue::Blob(bytes.to_vec()),
        },
        ValueRef::Blob(bytes) => RawValue::Blob(bytes.to_vec()),
    }
}

/// True when the first 16 bytes of `path` equal [`SQLITE_MAGIC`].
pub fn has_sqlite_header(path: &Path) -> std::io::Result<bool> {
    let mut file = File::open(path)?;
    let mut header = [0u8; 16];
    let mut filled = 0;
    while filled < header.len() {
        match file.read(&mut header[filled..])? {
            0 => return Ok(false),
            n => filled += n,
        }
    }
    Ok(&header == SQLITE_MAGIC)
}

fn image_dir(rel: &Path) -> String {
    let mut out = String::from("/");
    for comp in rel.components() {
        out.push_str(&comp.as_os_str().to_string_lossy());
        out.push('/');
    }
    out
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn uri_escape(path: &Path) -> String {
    let raw = path.to_string_lossy();
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '?' => out.push_str("%3f"),
            '#' => out.push_str("%23"),
            '%' => out.push_str("%25"),
            _ => out.push(c),
        }
    }
    out
}
