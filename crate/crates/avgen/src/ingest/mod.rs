//! Corpus loading, cleaning, and splitting.
//!
//! Each supported corpus format is an adapter onto one canonical record
//! schema (see [`crate::record::ProductRecord`]); downstream code only ever
//! sees canonical records. Loaders are tolerant: malformed rows are skipped
//! and counted in a [`LoadReport`], never fatal.

mod ae110k;
mod canonical;
mod mave;
mod oamine;
mod split;
mod stats;

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

pub use ae110k::load_ae110k;
pub use canonical::{load_canonical, read_canonical, write_canonical};
pub use mave::load_mave;
pub use oamine::load_oamine;
pub use split::{stratified_split, CategoryCounts, DatasetSplit, SplitReport};
pub use stats::{compute_stats, DatasetStats};

use crate::error::{Error, Result};
use crate::eval::normalize_pair;
use crate::record::{AttrValuePair, ProductRecord};

/// Input corpus formats accepted by the loaders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// Tab-separated (title, attribute, value) triples.
    Ae110k,
    /// Line-delimited annotated records.
    OaMine,
    /// Line-delimited records with evidence spans per attribute.
    Mave,
    /// The canonical record schema itself.
    Canonical,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ae110k" => Ok(Self::Ae110k),
            "oamine" => Ok(Self::OaMine),
            "mave" => Ok(Self::Mave),
            "canonical" => Ok(Self::Canonical),
            other => Err(Error::Config(format!(
                "unknown corpus format '{other}' (expected ae110k, oamine, mave, or canonical)"
            ))),
        }
    }
}

impl std::fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::Ae110k => "ae110k",
            Self::OaMine => "oamine",
            Self::Mave => "mave",
            Self::Canonical => "canonical",
        };
        f.write_str(name)
    }
}

/// Per-load diagnostics. Counters not applicable to a format stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LoadReport {
    /// Physical rows or lines consumed from the file.
    pub rows_read: usize,
    /// Records emitted.
    pub records: usize,
    /// Pairs emitted across all records.
    pub pairs: usize,
    /// Rows or lines skipped as unparseable.
    pub malformed_rows: usize,
    /// Triples dropped because the value was the NULL sentinel.
    pub null_values: usize,
    /// Attribute entries dropped because they carried no evidence span.
    pub negative_entries: usize,
    /// Records dropped because cleaning left them without pairs.
    pub empty_records: usize,
    /// Records dropped because an earlier record claimed the same id.
    pub duplicate_ids: usize,
    /// Pairs dropped as within-record duplicates under normalization.
    pub duplicate_pairs: usize,
    /// Pairs dropped for an empty attribute or value.
    pub invalid_pairs: usize,
}

/// Loads a corpus file in the given format into canonical records.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<(Vec<ProductRecord>, LoadReport)> {
    match format {
        CorpusFormat::Ae110k => load_ae110k(path),
        CorpusFormat::OaMine => load_oamine(path),
        CorpusFormat::Mave => load_mave(path),
        CorpusFormat::Canonical => load_canonical(path),
    }
}

/// Accumulates canonical records while enforcing the shared cleaning rules:
/// first occurrence wins for duplicate ids, within-record pairs are unique
/// under normalization, and degenerate pairs are dropped and counted.
struct Assembler {
    records: Vec<ProductRecord>,
    seen_ids: BTreeSet<String>,
    report: LoadReport,
    drop_empty_records: bool,
}

impl Assembler {
    fn new(drop_empty_records: bool) -> Self {
        Self {
            records: Vec::new(),
            seen_ids: BTreeSet::new(),
            report: LoadReport::default(),
            drop_empty_records,
        }
    }

    fn push(&mut self, id: String, category: String, text: String, pairs: Vec<(String, String)>) {
        if !self.seen_ids.insert(id.clone()) {
            self.report.duplicate_ids += 1;
            return;
        }
        let mut seen_pairs = BTreeSet::new();
        let mut kept = Vec::new();
        for (attribute, value) in pairs {
            match AttrValuePair::new(&attribute, &value) {
                Ok(pair) => {
                    let n = normalize_pair(&pair);
                    if seen_pairs.insert((n.attribute, n.value)) {
                        kept.push(pair);
                    } else {
                        self.report.duplicate_pairs += 1;
                    }
                }
                Err(_) => self.report.invalid_pairs += 1,
            }
        }
        if kept.is_empty() && self.drop_empty_records {
            self.report.empty_records += 1;
            return;
        }
        self.report.records += 1;
        self.report.pairs += kept.len();
        self.records.push(ProductRecord {
            id,
            category,
            text,
            pairs: kept,
        });
    }

    fn finish(self) -> (Vec<ProductRecord>, LoadReport) {
        (self.records, self.report)
    }
}

fn read_lines(path: &Path) -> Result<std::io::Lines<std::io::BufReader<std::fs::File>>> {
    use std::io::BufRead;
    let file = std::fs::File::open(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(std::io::BufReader::new(file).lines())
}

fn next_line(
    iter: &mut std::io::Lines<std::io::BufReader<std::fs::File>>,
    path: &Path,
) -> Result<Option<String>> {
    match iter.next() {
        None => Ok(None),
        Some(Ok(line)) => Ok(Some(line)),
        Some(Err(source)) => Err(Error::Read {
            path: path.to_path_buf(),
            source,
        }),
    }
}
