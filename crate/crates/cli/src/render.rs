//! Text rendering of a JSON report.
//!
//! Objects become `key: value` lines indented by two spaces per level, in the
//! JSON field order. Arrays of scalars stay on one line; arrays of arrays put
//! one compact row per line; arrays of objects use `-` items. Numbers are
//! printed exactly as in the JSON, and `null` marks an absent or NaN value.

use serde_json::Value;

pub fn to_text(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    if !out.ends_with('\n') {
        out.push('\n');
    }
    out
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn has_object(v: &Value) -> bool {
    match v {
        Value::Object(_) => true,
        Value::Array(items) => items.iter().any(has_object),
        _ => false,
    }
}

fn pad(out: &mut String, depth: usize) {
    out.extend(std::iter::repeat_n("  ", depth));
}

fn write_value(out: &mut String, value: &Value, depth: usize) {
    match value {
        Value::Object(map) => {
            for (key, v) in map {
                pad(out, depth);
                out.push_str(key);
                out.push(':');
                write_child(out, v, depth);
            }
        }
        Value::Array(items) => {
            for item in items {
                pad(out, depth);
                out.push('-');
                write_child(out, item, depth);
            }
        }
        scalar => {
            pad(out, depth);
            out.push_str(&scalar.to_string());
            out.push('\n');
        }
    }
}

/// Continues a line that already holds a key or list marker.
fn write_child(out: &mut String, v: &Value, depth: usize) {
    match v {
        Value::Array(items) if items.is_empty() => out.push_str(" []\n"),
        Value::Object(map) if map.is_empty() => out.push_str(" {}\n"),
        Value::Array(items) if items.iter().all(is_scalar) => {
            out.push(' ');
            out.push_str(&v.to_string());
            out.push('\n');
        }
        Value::Array(items) if !has_object(v) => {
            out.push('\n');
            for row in items {
                pad(out, depth + 1);
                out.push_str(&row.to_string());
                out.push('\n');
            }
        }
        Value::Array(_) | Value::Object(_) => {
            out.push('\n');
            write_value(out, v, depth + 1);
        }
        scalar => {
            out.push(' ');
            out.push_str(&scalar.to_string());
            out.push('\n');
        }
    }
}
