//! Reading and writing the canonical line-delimited record format.

use std::io::Write;
use std::path::Path;

use super::{next_line, read_lines, Assembler, LoadReport};
use crate::error::{Error, Result};
use crate::record::ProductRecord;

/// Writes records as one JSON object per line.
pub fn write_canonical(path: &Path, records: &[ProductRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })?;
    let mut writer = std::io::BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record)?;
        writeln!(writer, "{line}").map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })?;
    }
    writer.flush().map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Strict reader for artifacts this framework wrote itself: any malformed
/// line or invariant violation is an error naming the line number.
pub fn read_canonical(path: &Path) -> Result<Vec<ProductRecord>> {
    let mut lines = read_lines(path)?;
    let mut records = Vec::new();
    let mut line_number = 0usize;
    while let Some(line) = next_line(&mut lines, path)? {
        line_number += 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: ProductRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Input(format!("{}:{line_number}: {e}", path.display())))?;
        record
            .validate()
            .map_err(|e| Error::Input(format!("{}:{line_number}: {e}", path.display())))?;
        records.push(record);
    }
    Ok(records)
}

/// Tolerant loader for externally produced canonical files: malformed lines
/// are skipped and counted, duplicate ids keep the first occurrence, and
/// within-record duplicate pairs are dropped.
pub fn load_canonical(path: &Path) -> Result<(Vec<ProductRecord>, LoadReport)> {
    let mut lines = read_lines(path)?;
    let mut asm = Assembler::new(false);
    while let Some(line) = next_line(&mut lines, path)? {
        asm.report.rows_read += 1;
        if line.trim().is_empty() {
            continue;
        }
        let Ok(record) = serde_json::from_str::<ProductRecord>(&line) else {
            asm.report.malformed_rows += 1;
            continue;
        };
        if record.text.trim().is_empty() {
            asm.report.malformed_rows += 1;
            continue;
        }
        let pairs = record
            .pairs
            .into_iter()
            .map(|p| (p.attribute, p.value))
            .collect();
        asm.push(record.id, record.category, record.text, pairs);
    }
    Ok(asm.finish())
}
