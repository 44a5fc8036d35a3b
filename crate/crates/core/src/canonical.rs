//! Canonical JSON: object keys sorted, stable bytes for golden files.

use serde::Serialize;
use serde_json::{Map, Value};

use crate::Result;

/// Serializes `value` with every object's keys in sorted order.
///
/// Keys are re-sorted explicitly so the output does not depend on whether
/// some other crate in the build enables `serde_json/preserve_order`.
pub fn to_value<T: Serialize>(value: &T) -> Result<Value> {
    Ok(sort_keys(serde_json::to_value(value)?))
}

fn sort_keys(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(
                entries
                    .into_iter()
                    .map(|(k, v)| (k, sort_keys(v)))
                    .collect::<Map<String, Value>>(),
            )
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Compact single-line canonical form.
pub fn to_string<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(&to_value(value)?)?)
}

/// Indented canonical form with a trailing newline, used for files.
pub fn to_string_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut out = serde_json::to_string_pretty(&to_value(value)?)?;
    out.push('\n');
    Ok(out)
}
