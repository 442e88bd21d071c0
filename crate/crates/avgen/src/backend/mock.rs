//! The memorizing mock backend: a loss-free stand-in that returns the exact
//! training target for every seen source and an empty string otherwise.
//! It makes full-strategy tests runnable with known ground truth.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{truncate_tokens, BackendConfig, Seq2SeqModel, TrainReport, TrainedModel};
use crate::error::{Error, Result};
use crate::serdes::TaskExample;

const MODEL_FILE: &str = "model.jsonl";

/// Memorized source→target map. Sources are stored after input truncation so
/// lookup at generation time sees the same key space as training.
pub struct MockModel {
    map: BTreeMap<String, String>,
    max_input_tokens: usize,
}

#[derive(Serialize, Deserialize)]
struct MapLine {
    source: String,
    target: String,
}

impl MockModel {
    pub fn load(dir: &Path, config: &BackendConfig) -> Result<Self> {
        let path = dir.join(MODEL_FILE);
        let raw = std::fs::read_to_string(&path).map_err(|source| Error::Read { path, source })?;
        let mut map = BTreeMap::new();
        for line in raw.lines().filter(|l| !l.trim().is_empty()) {
            let entry: MapLine = serde_json::from_str(line)?;
            map.insert(entry.source, entry.target);
        }
        Ok(Self {
            map,
            max_input_tokens: config.max_input_tokens,
        })
    }
}

impl Seq2SeqModel for MockModel {
    fn kind(&self) -> &'static str {
        "mock"
    }

    fn generate(&self, sources: &[String]) -> Result<Vec<String>> {
        Ok(sources
            .iter()
            .map(|source| {
                let (key, _) = truncate_tokens(source, self.max_input_tokens);
                self.map.get(&key).cloned().unwrap_or_default()
            })
            .collect())
    }

    fn memory_proxy(&self) -> f64 {
        // One loaded instance costs one unit regardless of map size, so
        // multi-model strategies compare by model count.
        1.0
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MODEL_FILE);
        let file = std::fs::File::create(&path).map_err(|source| Error::Write {
            path: path.clone(),
            source,
        })?;
        let mut writer = std::io::BufWriter::new(file);
        for (source, target) in &self.map {
            let line = serde_json::to_string(&MapLine {
                source: source.clone(),
                target: target.clone(),
            })?;
            writeln!(writer, "{line}").map_err(|source| Error::Write {
                path: path.clone(),
                source,
            })?;
        }
        writer
            .flush()
            .map_err(|source| Error::Write { path, source })
    }
}

/// "Trains" by memorizing the corpus: later duplicates of a source override
/// earlier ones. Validation examples only participate in the fingerprint.
pub(super) fn train(
    examples: &[TaskExample],
    config: &BackendConfig,
    _val_examples: &[TaskExample],
    fingerprint: String,
) -> Result<TrainedModel> {
    let mut map = BTreeMap::new();
    let mut truncated_sources = 0usize;
    for example in examples {
        let (key, truncated) = truncate_tokens(&example.source, config.max_input_tokens);
        if truncated {
            truncated_sources += 1;
        }
        map.insert(key, example.target.clone());
    }
    let report = TrainReport {
        epochs_run: 1,
        early_stopped: false,
        truncated_sources,
        final_val_loss: Some(0.0),
    };
    let model = MockModel {
        map,
        max_input_tokens: config.max_input_tokens,
    };
    Ok(TrainedModel::assemble(
        config.clone(),
        fingerprint,
        report,
        Box::new(model),
    ))
}
