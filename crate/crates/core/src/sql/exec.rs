use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rusqlite::hooks::{AuthAction, AuthContext, Authorization};
use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const DEFAULT_STATEMENT_TIMEOUT: Duration = Duration::from_secs(5);

/// A scalar read back from SQLite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SqlValue {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob { blob: String },
}

impl SqlValue {
    pub fn from_ref(v: ValueRef<'_>) -> Self {
        match v {
            ValueRef::Null => SqlValue::Null,
            ValueRef::Integer(i) => SqlValue::Integer(i),
            ValueRef::Real(f) => SqlValue::Real(f),
            ValueRef::Text(t) => SqlValue::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => SqlValue::Blob { blob: hex::encode(b) },
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            SqlValue::Integer(i) => Some(*i as f64),
            SqlValue::Real(f) => Some(*f),
            _ => None,
        }
    }

    /// Renders the value as a SQL literal.
    pub fn to_sql_literal(&self) -> String {
        match self {
            SqlValue::Null => "NULL".to_string(),
            SqlValue::Integer(i) => i.to_string(),
            SqlValue::Real(f) => format!("{f:?}"),
            SqlValue::Text(s) => format!("'{}'", s.replace('\'', "''")),
            SqlValue::Blob { blob } => format!("X'{blob}'"),
        }
    }
}

impl fmt::Display for SqlValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SqlValue::Null => f.write_str("NULL"),
            SqlValue::Integer(i) => write!(f, "{i}"),
            SqlValue::Real(x) => write!(f, "{x}"),
            SqlValue::Text(s) => f.write_str(s),
            SqlValue::Blob { blob } => write!(f, "x'{blob}'"),
        }
    }
}

impl rusqlite::ToSql for SqlValue {
    fn to_sql(&self) -> rusqlite::Result<rusqlite::types::ToSqlOutput<'_>> {
        use rusqlite::types::{ToSqlOutput, Value};
        Ok(match self {
            SqlValue::Null => ToSqlOutput::Owned(Value::Null),
            SqlValue::Integer(i) => ToSqlOutput::Owned(Value::Integer(*i)),
            SqlValue::Real(f) => ToSqlOutput::Owned(Value::Real(*f)),
            SqlValue::Text(s) => ToSqlOutput::Borrowed(ValueRef::Text(s.as_bytes())),
            SqlValue::Blob { blob } => {
                ToSqlOutput::Owned(Value::Blob(hex::decode(blob).unwrap_or_default()))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<SqlValue>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<ResultTable>,
}

impl ExecutionOutcome {
    fn failed(msg: impl Into<String>) -> Self {
        Self {
            ok: false,
            error: Some(msg.into()),
            rows: None,
        }
    }
}

/// Handle to a single-file SQLite database.
///
/// Every operation opens its own read-only connection, so a handle can be
/// shared freely across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Database {
    id: String,
    path: PathBuf,
}

impl Database {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "db".to_string());
        Self::with_id(id, path)
    }

    pub fn with_id(id: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if !path.is_file() {
            return Err(Error::Database(format!("{} is not a file", path.display())));
        }
        let db = Self { id: id.into(), path };
        // Touch the header so corrupt files fail here rather than mid-mining.
        db.connect()?
            .query_row("SELECT count(*) FROM sqlite_master", [], |r| r.get::<_, i64>(0))?;
        Ok(db)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn connect(&self) -> Result<Connection> {
        let flags = OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX;
        Ok(Connection::open_with_flags(&self.path, flags)?)
    }

    /// SHA-256 of the file bytes, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        let bytes = std::fs::read(&self.path)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    /// Runs a read-only statement and collects every row.
    ///
    /// Statements that SQLite reports as writing are rejected before they
    /// run. Engine errors come back verbatim in the outcome, not as `Err`.
    pub fn execute(&self, sql: &str, timeout: Duration) -> Result<ExecutionOutcome> {
        let conn = self.connect()?;
        let deadline = Instant::now() + timeout;
        conn.progress_handler(1_000, Some(move || Instant::now() > deadline))?;
        // ATTACH and DETACH count as read-only to SQLite.
        conn.authorizer(Some(|ctx: AuthContext<'_>| match ctx.action {
            AuthAction::Attach { .. } | AuthAction::Detach { .. } => Authorization::Deny,
            _ => Authorization::Allow,
        }))?;
        let mut stmt = match conn.prepare(sql) {
            Ok(s) => s,
            Err(e) => return Ok(ExecutionOutcome::failed(e.to_string())),
        };
        if !stmt.readonly() {
            return Err(Error::RejectedStatement(
                sql.split_whitespace().next().unwrap_or("").to_uppercase(),
            ));
        }
        let columns: Vec<String> = stmt.column_names().iter().map(|s| s.to_string()).collect();
        let width = columns.len();
        let mut rows = Vec::new();
        let mut cursor = match stmt.query([]) {
            Ok(c) => c,
            Err(e) => return Ok(ExecutionOutcome::failed(e.to_string())),
        };
        loop {
            match cursor.next() {
                Ok(Some(row)) => {
                    let mut out = Vec::with_capacity(width);
                    for i in 0..width {
                        out.push(SqlValue::from_ref(row.get_ref(i)?));
                    }
                    rows.push(out);
                }
                Ok(None) => break,
                Err(rusqlite::Error::SqliteFailure(f, _))
                    if f.code == rusqlite::ErrorCode::OperationInterrupted =>
                {
                    return Ok(ExecutionOutcome::failed(format!(
                        "timeout: statement exceeded {} ms",
                        timeout.as_millis()
                    )));
                }
                Err(e) => return Ok(ExecutionOutcome::failed(e.to_string())),
            }
        }
        Ok(ExecutionOutcome {
            ok: true,
            error: None,
            rows: Some(ResultTable { columns, rows }),
        })
    }

    /// `execute` with the default 5 second statement timeout.
    pub fn execution_check(&self, sql: &str) -> Result<ExecutionOutcome> {
        self.execute(sql, DEFAULT_STATEMENT_TIMEOUT)
    }
}
