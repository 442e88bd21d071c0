//! Loader for line-delimited records carrying evidence spans per attribute.
//!
//! Each attribute entry lists evidence spans; the verbatim text of the first
//! span becomes the pair's value. Entries without any span are negative
//! examples and are dropped, as are records that end up with no pairs.

use std::path::Path;

use serde::Deserialize;

use super::{next_line, read_lines, Assembler, LoadReport};
use crate::error::Result;
use crate::record::ProductRecord;

const DEFAULT_CATEGORY: &str = "default";

#[derive(Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    paragraphs: Vec<RawParagraph>,
    #[serde(default)]
    attributes: Vec<RawAttribute>,
}

#[derive(Deserialize)]
struct RawParagraph {
    #[serde(default)]
    text: String,
}

#[derive(Deserialize)]
struct RawAttribute {
    key: String,
    #[serde(default)]
    evidences: Vec<RawEvidence>,
}

#[derive(Deserialize)]
struct RawEvidence {
    value: String,
}

/// Reads evidence-span records into canonical records. Negative attribute
/// entries (no evidence) are counted and dropped; records left without
/// pairs are dropped.
pub fn load_mave(path: &Path) -> Result<(Vec<ProductRecord>, LoadReport)> {
    let mut lines = read_lines(path)?;
    let mut asm = Assembler::new(true);
    let mut line_number = 0usize;
    while let Some(line) = next_line(&mut lines, path)? {
        line_number += 1;
        asm.report.rows_read += 1;
        if line.trim().is_empty() {
            continue;
        }
        let Ok(raw) = serde_json::from_str::<RawRecord>(&line) else {
            asm.report.malformed_rows += 1;
            continue;
        };
        let text = raw
            .paragraphs
            .iter()
            .map(|p| p.text.trim())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        if text.is_empty() {
            asm.report.malformed_rows += 1;
            continue;
        }
        let id = raw
            .id
            .filter(|s| !s.trim().is_empty())
            .unwrap_or_else(|| format!("mave-{line_number}"));
        let category = raw.category.unwrap_or_else(|| DEFAULT_CATEGORY.to_string());
        let mut pairs = Vec::with_capacity(raw.attributes.len());
        for attribute in raw.attributes {
            match attribute.evidences.first() {
                Some(evidence) => pairs.push((attribute.key, evidence.value.clone())),
                None => asm.report.negative_entries += 1,
            }
        }
        asm.push(id, category, text, pairs);
    }
    Ok(asm.finish())
}
