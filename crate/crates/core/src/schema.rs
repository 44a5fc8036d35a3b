//! Schema card: the mined picture of one database.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::sql::SqlValue;

/// A `table.column` reference.
///
/// Serialized as the dotted string; the split happens at the first `.`, so
/// table names must not contain dots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        Self {
            table: table.into(),
            column: column.into(),
        }
    }

    /// Case-insensitive comparison, matching SQLite identifier semantics.
    pub fn eq_ignore_case(&self, other: &ColumnRef) -> bool {
        self.table.eq_ignore_ascii_case(&other.table)
            && self.column.eq_ignore_ascii_case(&other.column)
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnRefParseError(pub String);

impl fmt::Display for ColumnRefParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "expected `table.column`, got `{}`", self.0)
    }
}

impl std::error::Error for ColumnRefParseError {}

impl FromStr for ColumnRef {
    type Err = ColumnRefParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().split_once('.') {
            Some((t, c)) if !t.trim().is_empty() && !c.trim().is_empty() => {
                Ok(ColumnRef::new(t.trim(), c.trim()))
            }
            _ => Err(ColumnRefParseError(s.to_string())),
        }
    }
}

impl Serialize for ColumnRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ColumnRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    pub declared_type: String,
    #[serde(default)]
    pub comment: String,
    pub nullable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableInfo {
    pub name: String,
    #[serde(default)]
    pub comment: String,
    pub columns: Vec<ColumnInfo>,
}

impl TableInfo {
    pub fn column(&self, name: &str) -> Option<&ColumnInfo> {
        self.columns
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FkOrigin {
    Declared,
    Inferred,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub child: ColumnRef,
    pub parent: ColumnRef,
    pub origin: FkOrigin,
    /// Fraction of distinct non-null child values found in the parent column.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneToMany {
    pub one_side: ColumnRef,
    pub many_side: ColumnRef,
    pub max_fanout: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumEntry {
    pub stored_value: SqlValue,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SchemaCard {
    pub database_id: String,
    pub tables: Vec<TableInfo>,
    #[serde(default)]
    pub primary_keys: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
    #[serde(default)]
    pub one_to_many: Vec<OneToMany>,
    #[serde(default)]
    pub enums: BTreeMap<ColumnRef, Vec<EnumEntry>>,
}

impl SchemaCard {
    pub fn table(&self, name: &str) -> Option<&TableInfo> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    /// Resolves a possibly mis-cased reference to the catalog spelling.
    pub fn resolve(&self, table: &str, column: &str) -> Option<ColumnRef> {
        let t = self.table(table)?;
        let c = t.column(column)?;
        Some(ColumnRef::new(&t.name, &c.name))
    }

    pub fn column_info(&self, col: &ColumnRef) -> Option<&ColumnInfo> {
        self.table(&col.table)?.column(&col.column)
    }

    pub fn contains(&self, col: &ColumnRef) -> bool {
        self.column_info(col).is_some()
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    /// All columns in catalog order.
    pub fn columns(&self) -> impl Iterator<Item = ColumnRef> + '_ {
        self.tables
            .iter()
            .flat_map(|t| t.columns.iter().map(move |c| ColumnRef::new(&t.name, &c.name)))
    }

    pub fn primary_key(&self, table: &str) -> &[String] {
        self.table(table)
            .and_then(|t| self.primary_keys.get(&t.name))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_primary_key_column(&self, col: &ColumnRef) -> bool {
        self.primary_key(&col.table)
            .iter()
            .any(|c| c.eq_ignore_ascii_case(&col.column))
    }

    pub fn enum_values(&self, col: &ColumnRef) -> Option<&[EnumEntry]> {
        self.enums
            .iter()
            .find(|(k, _)| k.eq_ignore_case(col))
            .map(|(_, v)| v.as_slice())
    }

    /// Checks the structural invariants of a fully mined card.
    pub fn validate(&self) -> Result<(), String> {
        for (table, cols) in &self.primary_keys {
            for c in cols {
                if self.resolve(table, c).is_none() {
                    return Err(format!("primary key {table}.{c} does not resolve"));
                }
            }
        }
        for fk in &self.foreign_keys {
            if !self.contains(&fk.child) || !self.contains(&fk.parent) {
                return Err(format!("foreign key {} -> {} does not resolve", fk.child, fk.parent));
            }
            if !(0.0..=1.0).contains(&fk.coverage) {
                return Err(format!("coverage {} out of range", fk.coverage));
            }
        }
        for rel in &self.one_to_many {
            if !self.contains(&rel.one_side) || !self.contains(&rel.many_side) {
                return Err(format!("relation {} -> {} does not resolve", rel.one_side, rel.many_side));
            }
            if rel.max_fanout < 2 {
                return Err(format!("relation {} has fanout {}", rel.many_side, rel.max_fanout));
            }
        }
        for (col, entries) in &self.enums {
            if !self.contains(col) {
                return Err(format!("enum column {col} does not resolve"));
            }
            for (i, a) in entries.iter().enumerate() {
                if entries[i + 1..].iter().any(|b| b.stored_value == a.stored_value) {
                    return Err(format!("enum column {col} repeats a stored value"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_ref_parses_and_displays() {
        let c: ColumnRef = "singer.singer_id".parse().unwrap();
        assert_eq!(c, ColumnRef::new("singer", "singer_id"));
        assert_eq!(c.to_string(), "singer.singer_id");
        assert!("singer".parse::<ColumnRef>().is_err());
        assert!(".x".parse::<ColumnRef>().is_err());
    }

    #[test]
    fn enum_map_serializes_with_string_keys() {
        let mut card = SchemaCard::default();
        card.enums.insert(
            ColumnRef::new("orders", "status"),
            vec![EnumEntry {
                stored_value: SqlValue::Integer(0),
                label: "init".into(),
            }],
        );
        let json = serde_json::to_string(&card.enums).unwrap();
        assert_eq!(json, r#"{"orders.status":[{"stored_value":0,"label":"init"}]}"#);
        let back: BTreeMap<ColumnRef, Vec<EnumEntry>> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, card.enums);
    }
}
