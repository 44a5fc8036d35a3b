//! Schema mining: structure, primary keys, foreign keys (declared and
//! inferred from inclusion dependencies), one-to-many relations and
//! enumeration values.

use std::collections::BTreeMap;

use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use crate::schema::{
    ColumnInfo, ColumnRef, EnumEntry, FkOrigin, ForeignKey, OneToMany, SchemaCard, TableInfo,
};
use crate::similarity::trigram_jaccard;
use crate::sql::{Database, SqlValue};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    /// Rows read per table, in storage order.
    pub sample_row_limit: u64,
    pub enum_max_distinct: u64,
    pub enum_max_ratio: f64,
    pub fk_min_coverage: f64,
    pub fk_name_similarity_floor: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            sample_row_limit: 10_000,
            enum_max_distinct: 20,
            enum_max_ratio: 0.2,
            fk_min_coverage: 0.95,
            fk_name_similarity_floor: 0.6,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        let fraction = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in (0, 1], got {v}")))
            }
        };
        fraction("enum_max_ratio", self.enum_max_ratio)?;
        fraction("fk_min_coverage", self.fk_min_coverage)?;
        fraction("fk_name_similarity_floor", self.fk_name_similarity_floor)?;
        if self.sample_row_limit == 0 {
            return Err(Error::Config("sample_row_limit must be at least 1".into()));
        }
        if self.enum_max_distinct == 0 {
            return Err(Error::Config("enum_max_distinct must be at least 1".into()));
        }
        Ok(())
    }
}

/// Runs every mining step in order.
pub fn mine(db: &Database, cfg: &MiningConfig) -> Result<SchemaCard> {
    cfg.validate()?;
    let card = introspect_schema(db)?;
    let card = detect_primary_keys(db, card, cfg)?;
    let card = infer_foreign_keys(db, card, cfg)?;
    let card = detect_one_to_many(db, card, cfg)?;
    extract_enumerations(db, card, cfg)
}

pub(crate) fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn sample(table: &str, cfg: &MiningConfig) -> String {
    format!("(SELECT * FROM {} LIMIT {})", quote_ident(table), cfg.sample_row_limit)
}

/// Reads tables and columns from the catalog, in catalog order.
pub fn introspect_schema(db: &Database) -> Result<SchemaCard> {
    let conn = db.connect()?;
    let mut stmt = conn.prepare(
        "SELECT name, coalesce(sql, '') FROM sqlite_master \
         WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid",
    )?;
    let entries: Vec<(String, String)> = stmt
        .query_map([], |r| Ok((r.get(0)?, r.get(1)?)))?
        .collect::<rusqlite::Result<_>>()?;
    if entries.is_empty() {
        return Err(Error::EmptySchema(db.id().to_string()));
    }
    let mut tables = Vec::with_capacity(entries.len());
    for (name, ddl) in entries {
        let mut info = conn.prepare(&format!("PRAGMA table_info({})", quote_ident(&name)))?;
        let mut columns: Vec<ColumnInfo> = info
            .query_map([], |r| {
                Ok(ColumnInfo {
                    name: r.get(1)?,
                    declared_type: r.get::<_, Option<String>>(2)?.unwrap_or_default(),
                    comment: String::new(),
                    nullable: r.get::<_, i64>(3)? == 0,
                })
            })?
            .collect::<rusqlite::Result<_>>()?;
        let comments = ddl_comments(&ddl);
        for c in &mut columns {
            if let Some(text) = comments.columns.get(&c.name.to_lowercase()) {
                c.comment = text.clone();
            }
        }
        // INTEGER PRIMARY KEY aliases the rowid and can never hold NULL.
        if let Some(pk) = declared_primary_key(&conn, &name)?.filter(|k| k.len() == 1) {
            if let Some(c) = columns.iter_mut().find(|c| c.name == pk[0]) {
                if c.declared_type.eq_ignore_ascii_case("INTEGER") {
                    c.nullable = false;
                }
            }
        }
        tables.push(TableInfo {
            name,
            comment: comments.table,
            columns,
        });
    }
    Ok(SchemaCard {
        database_id: db.id().to_string(),
        tables,
        ..Default::default()
    })
}

#[derive(Debug, Default, PartialEq)]
struct DdlComments {
    table: String,
    columns: BTreeMap<String, String>,
}

/// Splits a line at the first `--` outside quotes.
fn split_comment(line: &str) -> (&str, Option<&str>) {
    let mut quote: Option<char> = None;
    let bytes = line.as_bytes();
    for (i, ch) in line.char_indices() {
        match quote {
            Some(q) if ch == q => quote = None,
            Some(_) => {}
            None if matches!(ch, '\'' | '"' | '`') => quote = Some(ch),
            None if ch == '[' => quote = Some(']'),
            None if ch == '-' && bytes.get(i + 1) == Some(&b'-') => {
                return (&line[..i], Some(line[i + 2..].trim()));
            }
            None => {}
        }
    }
    (line, None)
}

/// Trailing `--` comments of a CREATE TABLE statement: the one on the
/// `CREATE TABLE` line describes the table, the one on a column definition
/// line describes that column.
fn ddl_comments(ddl: &str) -> DdlComments {
    let mut out = DdlComments::default();
    for line in ddl.lines() {
        let (code, comment) = split_comment(line);
        let Some(comment) = comment.filter(|c| !c.is_empty()) else {
            continue;
        };
        let code = code.trim();
        if code.to_ascii_uppercase().starts_with("CREATE") {
            out.table = comment.to_string();
            continue;
        }
        let first = code
            .split(|c: char| c.is_whitespace() || c == ',' || c == '(')
            .find(|s| !s.is_empty());
        if let Some(word) = first {
            let name = word.trim_matches(|c| matches!(c, '"' | '`' | '[' | ']'));
            let upper = name.to_ascii_uppercase();
            if matches!(
                upper.as_str(),
                "PRIMARY" | "FOREIGN" | "UNIQUE" | "CHECK" | "CONSTRAINT"
            ) {
                continue;
            }
            out.columns
                .entry(name.to_lowercase())
                .or_insert_with(|| comment.to_string());
        }
    }
    out
}

fn declared_primary_key(conn: &Connection, table: &str) -> Result<Option<Vec<String>>> {
    let mut stmt = conn.prepare(&format!("PRAGMA table_info({})", quote_ident(table)))?;
    let mut cols: Vec<(i64, String)> = stmt
        .query_map([], |r| Ok((r.get::<_, i64>(5)?, r.get::<_, String>(1)?)))?
        .filter_map(|r| r.ok())
        .filter(|(pk, _)| *pk > 0)
        .collect();
    if cols.is_empty() {
        return Ok(None);
    }
    cols.sort();
    Ok(Some(cols.into_iter().map(|(_, n)| n).collect()))
}

/// Fills `primary_keys`: the declared key when there is one, otherwise the
/// leftmost column that is non-null and unique over the sample.
pub fn detect_primary_keys(
    db: &Database,
    mut card: SchemaCard,
    cfg: &MiningConfig,
) -> Result<SchemaCard> {
    let conn = db.connect()?;
    let mut keys = BTreeMap::new();
    for t in &card.tables {
        if let Some(pk) = declared_primary_key(&conn, &t.name)? {
            keys.insert(t.name.clone(), pk);
            continue;
        }
        let mut chosen = Vec::new();
        for c in &t.columns {
            let sql = format!(
                "SELECT count(*), count({col}), count(DISTINCT {col}) FROM {src}",
                col = quote_ident(&c.name),
                src = sample(&t.name, cfg)
            );
            let (rows, non_null, distinct): (i64, i64, i64) =
                conn.query_row(&sql, [], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)))?;
            if rows > 0 && non_null == rows && distinct == rows {
                chosen.push(c.name.clone());
                break;
            }
        }
        keys.insert(t.name.clone(), chosen);
    }
    card.primary_keys = keys;
    Ok(card)
}

/// Storage class family of a declared type, following SQLite's affinity
/// rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Affinity {
    Integer,
    Text,
    Blob,
    Real,
    Numeric,
}

fn affinity(declared: &str) -> Affinity {
    let t = declared.to_ascii_uppercase();
    if t.contains("INT") {
        Affinity::Integer
    } else if t.contains("CHAR") || t.contains("CLOB") || t.contains("TEXT") {
        Affinity::Text
    } else if t.is_empty() || t.contains("BLOB") {
        Affinity::Blob
    } else if t.contains("REAL") || t.contains("FLOA") || t.contains("DOUB") {
        Affinity::Real
    } else {
        Affinity::Numeric
    }
}

/// Whether values of the two declared types can meaningfully be compared
/// for containment.
pub fn types_compatible(a: &str, b: &str) -> bool {
    use Affinity::*;
    let numeric = |x| matches!(x, Integer | Real | Numeric);
    match (affinity(a), affinity(b)) {
        (Blob, _) | (_, Blob) => true,
        (Text, Text) => true,
        (x, y) => numeric(x) && numeric(y),
    }
}

pub(crate) fn is_text_type(declared: &str) -> bool {
    matches!(affinity(declared), Affinity::Text | Affinity::Blob)
}

pub(crate) fn is_numeric_type(declared: &str) -> bool {
    matches!(
        affinity(declared),
        Affinity::Integer | Affinity::Real | Affinity::Numeric
    )
}

/// Distinct non-null sampled values of `child` and how many of them occur
/// anywhere in `parent`.
fn containment(
    conn: &Connection,
    child: &ColumnRef,
    parent: &ColumnRef,
    cfg: &MiningConfig,
) -> Result<(i64, i64)> {
    let sql = format!(
        "SELECT count(*), coalesce(sum(v IN (SELECT {pc} FROM {pt})), 0) FROM \
         (SELECT DISTINCT {cc} AS v FROM {src} WHERE {cc} IS NOT NULL)",
        pc = quote_ident(&parent.column),
        pt = quote_ident(&parent.table),
        cc = quote_ident(&child.column),
        src = sample(&child.table, cfg),
    );
    Ok(conn.query_row(&sql, [], |r| Ok((r.get(0)?, r.get(1)?)))?)
}

fn coverage(conn: &Connection, child: &ColumnRef, parent: &ColumnRef, cfg: &MiningConfig) -> Result<f64> {
    let (distinct, found) = containment(conn, child, parent, cfg)?;
    Ok(if distinct == 0 {
        1.0
    } else {
        found as f64 / distinct as f64
    })
}

/// Name similarity between a child column and a parent key: the better of
/// the bare parent column name and `<parent table>_<parent column>`.
pub fn fk_name_similarity(child: &ColumnRef, parent: &ColumnRef) -> f64 {
    let qualified = format!("{}_{}", parent.table, parent.column);
    trigram_jaccard(&child.column, &parent.column).max(trigram_jaccard(&child.column, &qualified))
}

/// Every (child, parent) pair eligible for inclusion-dependency checks:
/// the parent is a single-column primary key of another table and the
/// declared types are compatible. Catalog order, child-major.
fn candidate_pairs(card: &SchemaCard) -> Vec<(ColumnRef, ColumnRef)> {
    let parents: Vec<ColumnRef> = card
        .tables
        .iter()
        .filter_map(|t| match card.primary_keys.get(&t.name) {
            Some(k) if k.len() == 1 => Some(ColumnRef::new(&t.name, &k[0])),
            _ => None,
        })
        .collect();
    let mut out = Vec::new();
    for child in card.columns() {
        let child_type = &card.column_info(&child).expect("catalog column").declared_type;
        for parent in &parents {
            if parent.table == child.table {
                continue;
            }
            let parent_type = &card.column_info(parent).expect("catalog column").declared_type;
            if types_compatible(child_type, parent_type) {
                out.push((child.clone(), parent.clone()));
            }
        }
    }
    out
}

fn declared_foreign_keys(conn: &Connection, card: &SchemaCard) -> Result<Vec<(ColumnRef, ColumnRef)>> {
    let mut out = Vec::new();
    for t in &card.tables {
        let mut stmt = conn.prepare(&format!("PRAGMA foreign_key_list({})", quote_ident(&t.name)))?;
        let rows: Vec<(i64, i64, String, String, Option<String>)> = stmt
            .query_map([], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?)))?
            .collect::<rusqlite::Result<_>>()?;
        for (_, seq, parent_table, from, to) in rows {
            let parent_col = match to {
                Some(c) => c,
                // `REFERENCES t` without a column targets t's primary key.
                None => match card.primary_key(&parent_table).get(seq as usize) {
                    Some(c) => c.clone(),
                    None => continue,
                },
            };
            let child = card.resolve(&t.name, &from);
            let parent = card.resolve(&parent_table, &parent_col);
            if let (Some(c), Some(p)) = (child, parent) {
                out.push((c, p));
            }
        }
    }
    Ok(out)
}

fn catalog_index(card: &SchemaCard) -> impl Fn(&ColumnRef) -> usize + '_ {
    move |c: &ColumnRef| {
        card.columns()
            .position(|x| x.eq_ignore_case(c))
            .unwrap_or(usize::MAX)
    }
}

/// Fills `foreign_keys` with catalog declarations plus inferred inclusion
/// dependencies onto single-column primary keys.
pub fn infer_foreign_keys(db: &Database, mut card: SchemaCard, cfg: &MiningConfig) -> Result<SchemaCard> {
    let conn = db.connect()?;
    let mut fks = Vec::new();
    for (child, parent) in declared_foreign_keys(&conn, &card)? {
        let cov = coverage(&conn, &child, &parent, cfg)?;
        fks.push(ForeignKey {
            child,
            parent,
            origin: FkOrigin::Declared,
            coverage: cov,
        });
    }
    for (child, parent) in candidate_pairs(&card) {
        if fks.iter().any(|f| f.child == child && f.parent == parent) {
            continue;
        }
        let names_match = child.column.eq_ignore_ascii_case(&parent.column)
            || fk_name_similarity(&child, &parent) >= cfg.fk_name_similarity_floor;
        if !names_match {
            continue;
        }
        let (distinct, found) = containment(&conn, &child, &parent, cfg)?;
        if distinct == 0 {
            continue;
        }
        let cov = found as f64 / distinct as f64;
        if cov >= cfg.fk_min_coverage {
            fks.push(ForeignKey {
                child,
                parent,
                origin: FkOrigin::Inferred,
                coverage: cov,
            });
        }
    }
    {
        let idx = catalog_index(&card);
        fks.sort_by_key(|f| (idx(&f.child), idx(&f.parent)));
    }
    card.foreign_keys = fks;
    Ok(card)
}

/// Fills `one_to_many` for foreign keys and containment pairs whose child
/// column repeats a parent value at least twice.
pub fn detect_one_to_many(db: &Database, mut card: SchemaCard, cfg: &MiningConfig) -> Result<SchemaCard> {
    let conn = db.connect()?;
    let mut pairs: Vec<(ColumnRef, ColumnRef)> =
        card.foreign_keys.iter().map(|f| (f.child.clone(), f.parent.clone())).collect();
    for (child, parent) in candidate_pairs(&card) {
        if pairs.contains(&(child.clone(), parent.clone())) {
            continue;
        }
        let (distinct, found) = containment(&conn, &child, &parent, cfg)?;
        if distinct > 0 && found as f64 / distinct as f64 >= cfg.fk_min_coverage {
            pairs.push((child, parent));
        }
    }
    let mut relations = Vec::new();
    for (child, parent) in pairs {
        let cc = quote_ident(&child.column);
        let src = sample(&child.table, cfg);
        // Distinct-count statistics: a unique child column cannot fan out.
        let (non_null, distinct): (i64, i64) = conn.query_row(
            &format!("SELECT count({cc}), count(DISTINCT {cc}) FROM {src}"),
            [],
            |r| Ok((r.get(0)?, r.get(1)?)),
        )?;
        if non_null == distinct {
            continue;
        }
        let fanout: Option<i64> = conn.query_row(
            &format!(
                "SELECT max(n) FROM (SELECT count(*) AS n FROM {src} \
                 WHERE {cc} IN (SELECT {pc} FROM {pt}) GROUP BY {cc})",
                pc = quote_ident(&parent.column),
                pt = quote_ident(&parent.table),
            ),
            [],
            |r| r.get(0),
        )?;
        if let Some(n) = fanout.filter(|n| *n >= 2) {
            relations.push(OneToMany {
                one_side: parent,
                many_side: child,
                max_fanout: n as u64,
            });
        }
    }
    {
        let idx = catalog_index(&card);
        relations.sort_by_key(|r| (idx(&r.many_side), idx(&r.one_side)));
    }
    card.one_to_many = relations;
    Ok(card)
}

/// Parses `value: label` pairs separated by `;` or `,`. Every non-empty
/// part must parse, otherwise the comment yields nothing.
pub fn parse_enum_comment(comment: &str) -> Option<Vec<(String, String)>> {
    let mut out = Vec::new();
    for part in comment.split([';', ',']) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (value, label) = part.split_once(':')?;
        let (value, label) = (value.trim(), label.trim());
        if value.is_empty() || label.is_empty() {
            return None;
        }
        out.push((value.to_string(), label.to_string()));
    }
    (!out.is_empty()).then_some(out)
}

/// Fills `enums` for low-cardinality, non-key columns.
pub fn extract_enumerations(db: &Database, mut card: SchemaCard, cfg: &MiningConfig) -> Result<SchemaCard> {
    let conn = db.connect()?;
    let mut enums = BTreeMap::new();
    for col in card.columns().collect::<Vec<_>>() {
        if card.is_primary_key_column(&col) {
            continue;
        }
        let cc = quote_ident(&col.column);
        let src = sample(&col.table, cfg);
        let (rows, distinct): (i64, i64) = conn.query_row(
            &format!("SELECT count(*), count(DISTINCT {cc}) FROM {src}"),
            [],
            |r| Ok((r.get(0)?, r.get(1)?)),
        )?;
        if rows == 0 || distinct == 0 || distinct as u64 > cfg.enum_max_distinct {
            continue;
        }
        if distinct as f64 / rows as f64 > cfg.enum_max_ratio {
            continue;
        }
        let mut stmt = conn.prepare(&format!(
            "SELECT DISTINCT {cc} FROM {src} WHERE {cc} IS NOT NULL ORDER BY {cc}"
        ))?;
        let values: Vec<SqlValue> = stmt
            .query_map([], |r| Ok(SqlValue::from_ref(r.get_ref(0)?)))?
            .collect::<rusqlite::Result<_>>()?;
        let comment = &card.column_info(&col).expect("catalog column").comment;
        let parsed = parse_enum_comment(comment);
        let entries = values
            .into_iter()
            .map(|v| {
                let text = v.to_string();
                let label = parsed
                    .as_ref()
                    .and_then(|p| p.iter().find(|(k, _)| *k == text))
                    .map(|(_, l)| l.clone())
                    .unwrap_or(text);
                EnumEntry {
                    stored_value: v,
                    label,
                }
            })
            .collect();
        enums.insert(col, entries);
    }
    card.enums = enums;
    Ok(card)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, Declarations};

    #[test]
    fn comment_grammar() {
        assert_eq!(
            parse_enum_comment("0: init; 1: paid; 2: cancelled").unwrap(),
            vec![
                ("0".to_string(), "init".to_string()),
                ("1".to_string(), "paid".to_string()),
                ("2".to_string(), "cancelled".to_string())
            ]
        );
        assert_eq!(parse_enum_comment("1: online, 2: in store").unwrap().len(), 2);
        assert!(parse_enum_comment("stage name").is_none());
        assert!(parse_enum_comment("0: init; paid").is_none());
        assert!(parse_enum_comment("").is_none());
    }

    #[test]
    fn ddl_comment_extraction() {
        let ddl = "CREATE TABLE orders ( -- customer orders\n  order_id INTEGER PRIMARY KEY,\n  \
                   status INTEGER -- 0: init; 1: paid\n)";
        let c = ddl_comments(ddl);
        assert_eq!(c.table, "customer orders");
        assert_eq!(c.columns.get("status").unwrap(), "0: init; 1: paid");
        assert!(!c.columns.contains_key("order_id"));
        assert_eq!(split_comment("name TEXT DEFAULT '--x' -- real"), ("name TEXT DEFAULT '--x' ", Some("real")));
    }

    #[test]
    fn introspect_demo() {
        let dir = tempfile::tempdir().unwrap();
        let db = fixtures::demo_db(dir.path()).unwrap();
        let card = introspect_schema(&db).unwrap();
        assert_eq!(card.tables.len(), 4);
        assert_eq!(card.column_count(), 11);
        let names: Vec<_> = card.tables.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["singer", "concert", "customer", "orders"]);
        assert!(card.primary_keys.is_empty() && card.enums.is_empty());
    }

    #[test]
    fn introspect_single_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.sqlite");
        Connection::open(&path).unwrap().execute_batch("CREATE TABLE t(a)").unwrap();
        let card = introspect_schema(&Database::open(&path).unwrap()).unwrap();
        assert_eq!((card.tables.len(), card.column_count()), (1, 1));

        let empty = dir.path().join("empty.sqlite");
        Connection::open(&empty).unwrap().execute_batch("PRAGMA user_version = 1").unwrap();
        let err = introspect_schema(&Database::open(&empty).unwrap()).unwrap_err();
        assert!(matches!(err, Error::EmptySchema(_)));
    }

    #[test]
    fn corrupt_file_is_database_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.sqlite");
        std::fs::write(&path, b"this is not a database file at all, not even close....").unwrap();
        assert!(matches!(Database::open(&path), Err(Error::Database(_))));
    }

    #[test]
    fn primary_keys_declared_and_nominated() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = MiningConfig::default();
        let db = fixtures::demo_db(dir.path()).unwrap();
        let card = detect_primary_keys(&db, introspect_schema(&db).unwrap(), &cfg).unwrap();
        assert_eq!(card.primary_key("singer"), ["singer_id"]);

        let sub = dir.path().join("stripped");
        std::fs::create_dir(&sub).unwrap();
        let decl = Declarations { primary_keys: false, foreign_keys: false };
        let db = fixtures::demo_db_with(&sub, decl).unwrap();
        let card = detect_primary_keys(&db, introspect_schema(&db).unwrap(), &cfg).unwrap();
        // name is rejected because 'Ann' repeats; singer_id is leftmost anyway.
        assert_eq!(card.primary_key("singer"), ["singer_id"]);
        assert_eq!(card.primary_key("orders"), ["order_id"]);
    }

    #[test]
    fn no_unique_column_gives_empty_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dups.sqlite");
        Connection::open(&path)
            .unwrap()
            .execute_batch("CREATE TABLE t(a, b); INSERT INTO t VALUES (1, 'x'), (1, 'y'), (2, 'y');")
            .unwrap();
        let db = Database::open(&path).unwrap();
        let card = detect_primary_keys(&db, introspect_schema(&db).unwrap(), &MiningConfig::default()).unwrap();
        assert!(card.primary_key("t").is_empty());
    }

    #[test]
    fn mined_demo_matches_hand_card() {
        let dir = tempfile::tempdir().unwrap();
        let db = fixtures::demo_db(dir.path()).unwrap();
        let card = mine(&db, &fixtures::demo_mining_config()).unwrap();
        assert_eq!(card, fixtures::demo_card());
    }

    #[test]
    fn inferred_keys_on_stripped_demo() {
        let dir = tempfile::tempdir().unwrap();
        let decl = Declarations { primary_keys: true, foreign_keys: false };
        let db = fixtures::demo_db_with(dir.path(), decl).unwrap();
        let card = mine(&db, &MiningConfig::default()).unwrap();
        let got: Vec<_> = card
            .foreign_keys
            .iter()
            .map(|f| (f.child.to_string(), f.parent.to_string(), f.origin, f.coverage))
            .collect();
        assert_eq!(
            got,
            vec![
                ("concert.singer_id".into(), "singer.singer_id".into(), FkOrigin::Inferred, 1.0),
                ("orders.customer_id".into(), "customer.id".into(), FkOrigin::Inferred, 1.0),
            ]
        );
    }

    #[test]
    fn enums_on_demo() {
        let dir = tempfile::tempdir().unwrap();
        let db = fixtures::demo_db(dir.path()).unwrap();
        let card = mine(&db, &fixtures::demo_mining_config()).unwrap();
        let status = card.enum_values(&ColumnRef::new("orders", "status")).unwrap();
        let labels: Vec<_> = status.iter().map(|e| (e.stored_value.clone(), e.label.as_str())).collect();
        assert_eq!(
            labels,
            vec![
                (SqlValue::Integer(0), "init"),
                (SqlValue::Integer(1), "paid"),
                (SqlValue::Integer(2), "cancelled")
            ]
        );
        let nat = card.enum_values(&ColumnRef::new("singer", "nationality")).unwrap();
        assert!(nat.iter().all(|e| e.stored_value.to_string() == e.label));
        assert!(card.enum_values(&ColumnRef::new("singer", "singer_id")).is_none());
    }

    #[test]
    fn default_thresholds_on_retail() {
        let dir = tempfile::tempdir().unwrap();
        let db = fixtures::retail_db(dir.path()).unwrap();
        let card = mine(&db, &MiningConfig::default()).unwrap();
        let mut enum_cols: Vec<String> = card.enums.keys().map(|c| c.to_string()).collect();
        enum_cols.sort();
        assert_eq!(
            enum_cols,
            ["orders.channel", "orders.quantity", "orders.status", "product.category", "store.region"]
        );
        let channel = card.enum_values(&ColumnRef::new("orders", "channel")).unwrap();
        assert_eq!(channel[0].label, "online");
        assert_eq!(channel[1].label, "in store");
    }

    #[test]
    fn config_validation() {
        let bad = MiningConfig { enum_max_ratio: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = MiningConfig { sample_row_limit: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(MiningConfig::default().validate().is_ok());
    }
}
