//! Stable serializations: canonical JSON and flat CSV.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::model::{DataKind, MemLevel};
use crate::predictor::{AccessCounts, PredictionReport};

/// Pretty JSON with keys in declaration order and every float printed with
/// 17 significant digits, so equal reports give identical bytes.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| {
        for _ in 0..d {
            out.push_str("  ");
        }
    };
    match v {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&v.to_string()),
        Value::Number(n) => {
            if n.is_u64() || n.is_i64() {
                out.push_str(&n.to_string());
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                let _ = write!(out, "{f:.16e}");
            }
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, depth + 1);
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                pad(out, depth + 1);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push('}');
        }
    }
}

/// One row per layer, level and kind: `layer,level,kind,accesses_elements`.
/// Used for both analytic counts and oracle counters.
pub fn access_counts_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a AccessCounts)>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["layer", "level", "kind", "accesses_elements"])?;
    for (layer, counts) in rows {
        for level in MemLevel::ALL {
            for kind in DataKind::ALL {
                w.write_record([
                    layer,
                    level.as_str(),
                    &kind.to_string(),
                    &counts[level][kind].to_string(),
                ])?;
            }
        }
    }
    finish(w)
}

/// The access-count rows extended with per-row access energy.
pub fn prediction_csv(reports: &[PredictionReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["layer", "level", "kind", "accesses_elements", "energy_eu"])?;
    for r in reports {
        for level in MemLevel::ALL {
            for kind in DataKind::ALL {
                w.write_record([
                    r.layer.as_str(),
                    level.as_str(),
                    &kind.to_string(),
                    &r.access_counts_elements[level][kind].to_string(),
                    &format!("{:.16e}", r.energy.by_kind_eu[level][kind]),
                ])?;
            }
        }
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
