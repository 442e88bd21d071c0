//! Loader for line-delimited annotated product records.
//!
//! Records pass through with field mapping only: `asin` is accepted for
//! `id`, `title` for `text`, and `annotations` for `pairs`. Missing ids are
//! synthesized from the line number; a missing category falls back to a
//! default label.

use std::path::Path;

use serde_json::Value;

use super::{next_line, read_lines, Assembler, LoadReport};
use crate::error::Result;
use crate::record::ProductRecord;

const DEFAULT_CATEGORY: &str = "default";

fn string_field(object: &serde_json::Map<String, Value>, names: &[&str]) -> Option<String> {
    names
        .iter()
        .find_map(|name| object.get(*name))
        .and_then(Value::as_str)
        .map(str::to_string)
}

fn pair_fields(entry: &Value) -> Option<(String, String)> {
    let object = entry.as_object()?;
    let attribute = string_field(object, &["attribute", "attr"])?;
    let value = string_field(object, &["value"])?;
    Some((attribute, value))
}

/// Reads annotated records, mapping alias field names onto the canonical
/// schema. Lines that are not objects or lack a usable text field are
/// skipped and counted.
pub fn load_oamine(path: &Path) -> Result<(Vec<ProductRecord>, LoadReport)> {
    let mut lines = read_lines(path)?;
    let mut asm = Assembler::new(false);
    let mut line_number = 0usize;
    while let Some(line) = next_line(&mut lines, path)? {
        line_number += 1;
        asm.report.rows_read += 1;
        if line.trim().is_empty() {
            continue;
        }
        let Ok(value) = serde_json::from_str::<Value>(&line) else {
            asm.report.malformed_rows += 1;
            continue;
        };
        let Some(object) = value.as_object() else {
            asm.report.malformed_rows += 1;
            continue;
        };
        let Some(text) = string_field(object, &["text", "title"]).filter(|t| !t.trim().is_empty())
        else {
            asm.report.malformed_rows += 1;
            continue;
        };
        let id = string_field(object, &["id", "asin"])
            .filter(|s| !s.trim().is_empty())
            .unwrap_or_else(|| format!("oa-{line_number}"));
        let category =
            string_field(object, &["category"]).unwrap_or_else(|| DEFAULT_CATEGORY.to_string());
        let raw_pairs = ["pairs", "annotations"]
            .iter()
            .find_map(|name| object.get(*name))
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        let mut pairs = Vec::with_capacity(raw_pairs.len());
        for entry in &raw_pairs {
            match pair_fields(entry) {
                Some(pair) => pairs.push(pair),
                None => asm.report.invalid_pairs += 1,
            }
        }
        asm.push(id, category, text, pairs);
    }
    Ok(asm.finish())
}
