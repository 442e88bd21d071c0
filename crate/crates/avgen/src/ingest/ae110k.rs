//! Loader for tab-separated (title, attribute, value) triple files.
//!
//! Triples sharing an identical title merge into one record. Values equal to
//! the NULL sentinel — the literal "NULL" in any case, or an empty field —
//! are dropped before merging, and titles left without any valid pair vanish
//! from the output entirely.

use std::collections::BTreeMap;
use std::path::Path;

use super::{next_line, read_lines, Assembler, LoadReport};
use crate::error::Result;
use crate::record::ProductRecord;

/// Category assigned to every record; the triple format carries none.
const DEFAULT_CATEGORY: &str = "default";

fn is_null_sentinel(value: &str) -> bool {
    value.is_empty() || value.eq_ignore_ascii_case("null")
}

/// Reads a triple file and merges rows into canonical records, one per
/// distinct title in first-seen order, with ids `ae-1`, `ae-2`, ….
pub fn load_ae110k(path: &Path) -> Result<(Vec<ProductRecord>, LoadReport)> {
    let mut lines = read_lines(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut by_title: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    let mut asm = Assembler::new(true);
    while let Some(line) = next_line(&mut lines, path)? {
        asm.report.rows_read += 1;
        let columns: Vec<&str> = line.split('\t').collect();
        if columns.len() != 3 {
            asm.report.malformed_rows += 1;
            continue;
        }
        let title = columns[0].trim();
        let attribute = columns[1].trim();
        let value = columns[2].trim();
        if title.is_empty() {
            asm.report.malformed_rows += 1;
            continue;
        }
        let pairs = by_title.entry(title.to_string()).or_insert_with(|| {
            order.push(title.to_string());
            Vec::new()
        });
        if is_null_sentinel(value) {
            asm.report.null_values += 1;
            continue;
        }
        pairs.push((attribute.to_string(), value.to_string()));
    }
    for (index, title) in order.into_iter().enumerate() {
        let pairs = by_title.remove(&title).unwrap_or_default();
        asm.push(
            format!("ae-{}", index + 1),
            DEFAULT_CATEGORY.to_string(),
            title,
            pairs,
        );
    }
    Ok(asm.finish())
}
