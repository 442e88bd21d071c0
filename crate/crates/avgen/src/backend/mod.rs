//! The sequence-to-sequence model contract: training on task examples and
//! batch generation from source strings.
//!
//! Three implementations ship with the framework: a deterministic memorizing
//! mock for tests, a small trainable recurrent encoder-decoder for smoke
//! fine-tuning without any external runtime, and a subprocess adapter that
//! delegates to an external command for real pretrained checkpoints.

mod defaults;
mod external;
mod mock;
mod tiny;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use defaults::{defaults_for, ModelRole, RoleDefaults};
pub use external::{ExternalModel, EXTERNAL_PROTOCOL};
pub use mock::MockModel;
pub use tiny::TinyModel;

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::serdes::{TaskExample, HIGHLIGHT_TOKEN};

/// Reserved model id for the memorizing mock backend.
pub const MOCK_MODEL_ID: &str = "mock";
/// Reserved model id for the built-in trainable model — the smallest
/// supported checkpoint, trained from random initialization.
pub const TINY_MODEL_ID: &str = "tiny";

/// How output strings are decoded from the model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Greedy,
    Beam(usize),
}

fn default_max_input() -> usize {
    512
}
fn default_max_output() -> usize {
    64
}
fn default_patience() -> usize {
    3
}
fn default_special_tokens() -> Vec<String> {
    vec![HIGHLIGHT_TOKEN.to_string()]
}

/// Everything a backend needs to train and decode. Serialized verbatim into
/// model manifests, so identical configs fingerprint identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub model_id: String,
    #[serde(default = "default_max_input")]
    pub max_input_tokens: usize,
    #[serde(default = "default_max_output")]
    pub max_output_tokens: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default = "default_patience")]
    pub early_stop_patience: usize,
    #[serde(default)]
    pub decode_mode: DecodeMode,
    pub seed: u64,
    #[serde(default = "default_special_tokens")]
    pub special_tokens: Vec<String>,
    /// Command template for the external adapter; required whenever
    /// `model_id` is neither built-in id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_cmd: Option<String>,
}

impl BackendConfig {
    /// A config with neutral hyperparameters, suitable for the mock.
    pub fn for_model(model_id: &str, seed: u64) -> Self {
        Self {
            model_id: model_id.to_string(),
            max_input_tokens: default_max_input(),
            max_output_tokens: default_max_output(),
            epochs: 1,
            learning_rate: 1e-3,
            batch_size: 16,
            early_stop_patience: default_patience(),
            decode_mode: DecodeMode::Greedy,
            seed,
            special_tokens: default_special_tokens(),
            external_cmd: None,
        }
    }

    /// Checks the numeric invariants: positive counts, positive learning
    /// rate, beam width at least 1.
    pub fn validate(&self) -> Result<()> {
        if self.model_id.trim().is_empty() {
            return Err(Error::Config("model_id is empty".into()));
        }
        for (name, value) in [
            ("max_input_tokens", self.max_input_tokens),
            ("max_output_tokens", self.max_output_tokens),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("early_stop_patience", self.early_stop_patience),
        ] {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if let DecodeMode::Beam(k) = self.decode_mode {
            if k == 0 {
                return Err(Error::Config("beam width must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Counters from one training run. Deliberately holds no wall-clock data so
/// that manifests are byte-stable across runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Epochs actually completed (early stopping may end training sooner).
    pub epochs_run: usize,
    /// Whether validation loss triggered an early stop.
    pub early_stopped: bool,
    /// Sources cut down to `max_input_tokens`.
    pub truncated_sources: usize,
    /// Final validation loss, when the backend computes one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_val_loss: Option<f64>,
}

/// Object-safe surface every trained backend exposes.
pub trait Seq2SeqModel: Send {
    /// Identifier of the implementation, used for load dispatch.
    fn kind(&self) -> &'static str;

    /// One output string per source, order-aligned.
    fn generate(&self, sources: &[String]) -> Result<Vec<String>>;

    /// Relative memory footprint of one loaded instance. The unit is
    /// arbitrary but consistent within a kind; cost reports compare sums.
    fn memory_proxy(&self) -> f64;

    /// Persists implementation-specific state under `dir`.
    fn save(&self, dir: &Path) -> Result<()>;
}

/// A trained model with its configuration, fingerprint, and train report.
pub struct TrainedModel {
    pub config: BackendConfig,
    pub fingerprint: String,
    pub report: TrainReport,
    model: Box<dyn Seq2SeqModel>,
}

impl std::fmt::Debug for TrainedModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainedModel")
            .field("kind", &self.model.kind())
            .field("config", &self.config)
            .field("fingerprint", &self.fingerprint)
            .field("report", &self.report)
            .finish()
    }
}

/// On-disk description of a trained model directory.
#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    kind: String,
    fingerprint: String,
    config: BackendConfig,
    report: TrainReport,
}

const MANIFEST_FILE: &str = "manifest.json";

impl TrainedModel {
    /// Generates one output per source; `|outputs| == |sources|` always.
    pub fn generate(&self, sources: &[String]) -> Result<Vec<String>> {
        let outputs = self.model.generate(sources)?;
        if outputs.len() != sources.len() {
            return Err(Error::Consistency(format!(
                "backend returned {} outputs for {} sources",
                outputs.len(),
                sources.len()
            )));
        }
        // Uniform output-length cap, independent of backend.
        Ok(outputs
            .into_iter()
            .map(|o| truncate_tokens(&o, self.config.max_output_tokens).0)
            .collect())
    }

    pub fn memory_proxy(&self) -> f64 {
        self.model.memory_proxy()
    }

    pub fn kind(&self) -> &'static str {
        self.model.kind()
    }

    /// Writes the manifest and backend state into `dir` (created if needed).
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        let manifest = Manifest {
            kind: self.model.kind().to_string(),
            fingerprint: self.fingerprint.clone(),
            config: self.config.clone(),
            report: self.report.clone(),
        };
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, json.as_bytes()).map_err(|source| Error::Write { path, source })?;
        self.model.save(dir)
    }

    /// Restores a model saved with [`TrainedModel::save`], dispatching on
    /// the manifest's kind.
    pub fn load(dir: &Path) -> Result<TrainedModel> {
        let path = dir.join(MANIFEST_FILE);
        let raw = std::fs::read_to_string(&path).map_err(|source| Error::Read { path, source })?;
        let manifest: Manifest = serde_json::from_str(&raw)?;
        let model: Box<dyn Seq2SeqModel> = match manifest.kind.as_str() {
            "mock" => Box::new(MockModel::load(dir, &manifest.config)?),
            "tiny" => Box::new(TinyModel::load(dir, &manifest.config)?),
            "external" => Box::new(ExternalModel::load(dir, &manifest.config)?),
            other => {
                return Err(Error::Config(format!(
                    "manifest names unknown backend kind '{other}'"
                )))
            }
        };
        Ok(TrainedModel {
            config: manifest.config,
            fingerprint: manifest.fingerprint,
            report: manifest.report,
            model,
        })
    }

    /// Assembles a trained model from parts; used by backend implementations.
    pub(crate) fn assemble(
        config: BackendConfig,
        fingerprint: String,
        report: TrainReport,
        model: Box<dyn Seq2SeqModel>,
    ) -> Self {
        Self {
            config,
            fingerprint,
            report,
            model,
        }
    }
}

/// Digest of the training corpus and configuration; identical inputs always
/// produce identical fingerprints.
pub fn training_fingerprint(
    config: &BackendConfig,
    examples: &[TaskExample],
    val_examples: &[TaskExample],
) -> Result<String> {
    let mut payload = serde_json::to_string(config)?;
    payload.push('\n');
    for (label, set) in [("train", examples), ("val", val_examples)] {
        for ex in set {
            payload.push_str(label);
            payload.push('\u{1f}');
            payload.push_str(&serde_json::to_string(ex)?);
            payload.push('\n');
        }
    }
    Ok(sha256_hex(payload.as_bytes()))
}

/// Cuts a string to at most `max_tokens` whitespace-delimited tokens.
/// Returns the (possibly shortened) string and whether it was cut.
pub fn truncate_tokens(s: &str, max_tokens: usize) -> (String, bool) {
    let tokens: Vec<&str> = s.split_whitespace().collect();
    if tokens.len() <= max_tokens {
        (s.to_string(), false)
    } else {
        (tokens[..max_tokens].join(" "), true)
    }
}

fn check_train_preconditions(examples: &[TaskExample], config: &BackendConfig) -> Result<()> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Config(
            "training requires at least one example".into(),
        ));
    }
    let needs_highlight = examples
        .iter()
        .any(|e| e.source.contains(HIGHLIGHT_TOKEN) || e.target.contains(HIGHLIGHT_TOKEN));
    if needs_highlight && !config.special_tokens.iter().any(|t| t == HIGHLIGHT_TOKEN) {
        return Err(Error::Config(format!(
            "corpus contains {HIGHLIGHT_TOKEN} but special_tokens does not register it"
        )));
    }
    Ok(())
}

/// Trains a model of the kind selected by `config.model_id`.
///
/// `mock` memorizes the corpus, `tiny` fits the built-in recurrent model,
/// and any other id goes through the external adapter (which requires
/// `external_cmd`).
pub fn train(
    examples: &[TaskExample],
    config: &BackendConfig,
    val_examples: &[TaskExample],
) -> Result<TrainedModel> {
    check_train_preconditions(examples, config)?;
    let fingerprint = training_fingerprint(config, examples, val_examples)?;
    match config.model_id.as_str() {
        MOCK_MODEL_ID => mock::train(examples, config, val_examples, fingerprint),
        TINY_MODEL_ID => tiny::train(examples, config, val_examples, fingerprint),
        _ => external::train(examples, config, val_examples, fingerprint),
    }
}

/// Wall-clock cost measurements for one trained model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub train_seconds: f64,
    pub infer_seconds_per_1k: f64,
    pub memory_proxy: f64,
}

/// Measures generation latency over the given sources and scales it to
/// seconds per 1,000 generations. `train_seconds` is supplied by the caller,
/// which timed [`train`].
pub fn cost_probe(
    model: &TrainedModel,
    sources: &[String],
    train_seconds: f64,
) -> Result<CostRecord> {
    let started = std::time::Instant::now();
    let generated = model.generate(sources)?;
    let elapsed = started.elapsed().as_secs_f64();
    let per_1k = if generated.is_empty() {
        0.0
    } else {
        elapsed / generated.len() as f64 * 1000.0
    };
    Ok(CostRecord {
        train_seconds,
        infer_seconds_per_1k: per_1k,
        memory_proxy: model.memory_proxy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::serdes::TaskKind;

    fn example(source: &str, target: &str) -> TaskExample {
        TaskExample {
            source: source.into(),
            target: target.into(),
            task: TaskKind::E2e,
        }
    }

    #[test]
    fn config_validation_rejects_degenerate_values() {
        let mut config = BackendConfig::for_model(MOCK_MODEL_ID, 0);
        assert!(config.validate().is_ok());
        config.epochs = 0;
        assert!(config.validate().is_err());
        config.epochs = 1;
        config.learning_rate = 0.0;
        assert!(config.validate().is_err());
        config.learning_rate = 1e-3;
        config.decode_mode = DecodeMode::Beam(0);
        assert!(config.validate().is_err());
    }

    #[test]
    fn empty_corpus_is_a_configuration_error() {
        let config = BackendConfig::for_model(MOCK_MODEL_ID, 0);
        assert!(train(&[], &config, &[]).is_err());
    }

    #[test]
    fn unregistered_highlight_token_is_rejected() {
        let mut config = BackendConfig::for_model(MOCK_MODEL_ID, 0);
        config.special_tokens.clear();
        let examples = vec![example("a <hl> b <hl> c", "B")];
        assert!(train(&examples, &config, &[]).is_err());
    }

    #[test]
    fn fingerprints_are_deterministic_and_input_sensitive() {
        let config = BackendConfig::for_model(MOCK_MODEL_ID, 0);
        let corpus = vec![example("s", "t")];
        let a = training_fingerprint(&config, &corpus, &[]).unwrap();
        let b = training_fingerprint(&config, &corpus, &[]).unwrap();
        assert_eq!(a, b);
        let other = vec![example("s2", "t")];
        assert_ne!(a, training_fingerprint(&config, &other, &[]).unwrap());
        let mut config2 = config.clone();
        config2.seed = 1;
        assert_ne!(a, training_fingerprint(&config2, &corpus, &[]).unwrap());
    }

    #[test]
    fn truncation_counts_whitespace_tokens() {
        let (kept, cut) = truncate_tokens("a b c d", 2);
        assert_eq!(kept, "a b");
        assert!(cut);
        let (kept, cut) = truncate_tokens("a b", 5);
        assert_eq!(kept, "a b");
        assert!(!cut);
    }

    #[test]
    fn unknown_model_without_external_cmd_fails() {
        let config = BackendConfig::for_model("t5-small", 0);
        let err = train(&[example("s", "t")], &config, &[]).unwrap_err();
        assert!(err.to_string().contains("external"));
    }
}
