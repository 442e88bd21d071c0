//! The three generation strategies and their ensemble: building training
//! corpora from records, orchestrating one- or two-stage inference over a
//! trained backend, combining member predictions, and persisting trained
//! strategies and prediction files.
//!
//! A strategy owns only immutable trained models after construction.
//! Prediction batches stage-1 calls across all records, then stage-2 calls,
//! so backends see large aligned batches instead of per-record chatter.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::{self, BackendConfig, DecodeMode, ModelRole, TrainedModel};
use crate::error::{Error, Result};
use crate::eval::normalize_pair;
use crate::record::{AttrValuePair, ProductRecord};
use crate::serdes::{
    add_task_prefix, highlight_value, make_training_examples, parse_pairs, parse_values,
    CorpusKind, PrefixTask, TaskExample, TaskKind,
};

/// Which generation scheme produces attribute-value pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// Two dedicated models: value extraction, then attribute generation.
    Pipeline,
    /// One model serving both sub-tasks, routed by source prefixes.
    Multitask,
    /// One model generating the flattened pair list directly.
    End2End,
    /// Set union of member predictions; members are trained separately.
    Ensemble(Vec<StrategyKind>),
}

impl StrategyKind {
    /// Short name used in prediction files and artifact manifests.
    pub fn label(&self) -> &'static str {
        match self {
            StrategyKind::Pipeline => "pipeline",
            StrategyKind::Multitask => "multitask",
            StrategyKind::End2End => "end2end",
            StrategyKind::Ensemble(_) => "ensemble",
        }
    }

    /// Checks the ensemble invariants: non-empty, no nested ensembles.
    pub fn validate(&self) -> Result<()> {
        if let StrategyKind::Ensemble(members) = self {
            if members.is_empty() {
                return Err(Error::Config(
                    "an ensemble needs at least one member".into(),
                ));
            }
            if members
                .iter()
                .any(|m| matches!(m, StrategyKind::Ensemble(_)))
            {
                return Err(Error::Config(
                    "ensemble members must not be ensembles".into(),
                ));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pipeline" => Ok(StrategyKind::Pipeline),
            "multitask" => Ok(StrategyKind::Multitask),
            "end2end" => Ok(StrategyKind::End2End),
            "ensemble" => Err(Error::Config(
                "ensembles are not trained directly; evaluate member prediction files together"
                    .into(),
            )),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected pipeline, multitask, or end2end)"
            ))),
        }
    }
}

/// Counters describing what inference had to repair or drop for one record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Generated segments that failed structured parsing.
    pub malformed_segments: usize,
    /// Extracted candidate values that never occur in the record text.
    pub values_not_found: usize,
    /// Pairs dropped because an earlier pair normalizes identically.
    pub duplicates_removed: usize,
}

impl Diagnostics {
    fn add(&mut self, other: &Diagnostics) {
        self.malformed_segments += other.malformed_segments;
        self.values_not_found += other.values_not_found;
        self.duplicates_removed += other.duplicates_removed;
    }
}

/// The pairs predicted for one record, deduplicated under normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSet {
    pub record_id: String,
    pub pairs: Vec<AttrValuePair>,
    pub diagnostics: Diagnostics,
}

impl PredictionSet {
    fn empty(record_id: String) -> Self {
        Self {
            record_id,
            pairs: Vec::new(),
            diagnostics: Diagnostics::default(),
        }
    }

    /// Drops pairs whose normalized form repeats an earlier pair and counts
    /// the removals.
    fn dedup(&mut self) {
        let pairs = std::mem::take(&mut self.pairs);
        let (kept, removed) = dedup_pairs(pairs);
        self.pairs = kept;
        self.diagnostics.duplicates_removed += removed;
    }
}

/// Keeps the first pair of each normalized form; returns (kept, removed).
fn dedup_pairs(pairs: Vec<AttrValuePair>) -> (Vec<AttrValuePair>, usize) {
    let mut seen = std::collections::BTreeSet::new();
    let mut kept = Vec::with_capacity(pairs.len());
    let mut removed = 0;
    for pair in pairs {
        let norm = normalize_pair(&pair);
        if seen.insert((norm.attribute, norm.value)) {
            kept.push(pair);
        } else {
            removed += 1;
        }
    }
    (kept, removed)
}

// ---------------------------------------------------------------------------
// Corpus construction
// ---------------------------------------------------------------------------

/// Train and validation example pools for one model.
#[derive(Debug, Clone, Default)]
pub struct CorpusPair {
    pub train: Vec<TaskExample>,
    pub val: Vec<TaskExample>,
    /// Gold values skipped during construction because they never occur in
    /// their record's text (no highlight position exists).
    pub values_not_found: usize,
}

/// The example pools a strategy trains on.
#[derive(Debug, Clone)]
pub enum StrategyCorpus {
    /// Two disjoint corpora for two dedicated models.
    Pipeline { ve: CorpusPair, ag: CorpusPair },
    /// One pool: mixed prefixed examples (multitask) or flattened-pair
    /// examples (end2end).
    Single {
        kind: StrategyKind,
        corpus: CorpusPair,
    },
}

fn build_pool(records: &[ProductRecord], kind: CorpusKind) -> (Vec<TaskExample>, usize) {
    let mut examples = Vec::new();
    let mut not_found = 0;
    for record in records {
        let built = make_training_examples(record, kind);
        examples.extend(built.examples);
        not_found += built.values_not_found;
    }
    (examples, not_found)
}

/// Builds the training and validation pools for `kind`.
///
/// Pipeline yields two disjoint corpora (VE and AG); multitask one mixed,
/// prefixed corpus; end2end one corpus of flattened-pair targets. An empty
/// record stream, or one producing no usable training examples, is a
/// configuration error.
pub fn build_corpus(
    train_records: &[ProductRecord],
    val_records: &[ProductRecord],
    kind: &StrategyKind,
) -> Result<StrategyCorpus> {
    kind.validate()?;
    if train_records.is_empty() {
        return Err(Error::Config(
            "cannot build a training corpus from zero records".into(),
        ));
    }
    match kind {
        StrategyKind::Ensemble(_) => Err(Error::Config(
            "ensembles have no training corpus; train each member separately".into(),
        )),
        StrategyKind::Pipeline => {
            let (train, train_missing) = build_pool(train_records, CorpusKind::Pipeline);
            let (val, val_missing) = build_pool(val_records, CorpusKind::Pipeline);
            let mut ve = CorpusPair::default();
            let mut ag = CorpusPair {
                values_not_found: train_missing + val_missing,
                ..CorpusPair::default()
            };
            for example in train {
                match example.task {
                    TaskKind::Ve => ve.train.push(example),
                    _ => ag.train.push(example),
                }
            }
            for example in val {
                match example.task {
                    TaskKind::Ve => ve.val.push(example),
                    _ => ag.val.push(example),
                }
            }
            if ve.train.is_empty() || ag.train.is_empty() {
                return Err(Error::Config(
                    "records produced no usable pipeline training examples".into(),
                ));
            }
            Ok(StrategyCorpus::Pipeline { ve, ag })
        }
        StrategyKind::Multitask | StrategyKind::End2End => {
            let corpus_kind = if *kind == StrategyKind::Multitask {
                CorpusKind::Multitask
            } else {
                CorpusKind::EndToEnd
            };
            let (train, train_missing) = build_pool(train_records, corpus_kind);
            let (val, val_missing) = build_pool(val_records, corpus_kind);
            if train.is_empty() {
                return Err(Error::Config(
                    "records produced no usable training examples".into(),
                ));
            }
            Ok(StrategyCorpus::Single {
                kind: kind.clone(),
                corpus: CorpusPair {
                    train,
                    val,
                    values_not_found: train_missing + val_missing,
                },
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration resolution
// ---------------------------------------------------------------------------

/// Field-level overrides layered on top of per-role defaults. `None` keeps
/// the default.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_input_tokens: Option<usize>,
    pub max_output_tokens: Option<usize>,
    pub early_stop_patience: Option<usize>,
    pub decode_mode: Option<DecodeMode>,
    pub external_cmd: Option<String>,
}

impl ConfigOverrides {
    fn apply(&self, mut config: BackendConfig) -> BackendConfig {
        if let Some(v) = self.epochs {
            config.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            config.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.max_input_tokens {
            config.max_input_tokens = v;
        }
        if let Some(v) = self.max_output_tokens {
            config.max_output_tokens = v;
        }
        if let Some(v) = self.early_stop_patience {
            config.early_stop_patience = v;
        }
        if let Some(v) = self.decode_mode {
            config.decode_mode = v;
        }
        if let Some(v) = &self.external_cmd {
            config.external_cmd = Some(v.clone());
        }
        config
    }
}

/// Resolves the effective config for one model role: per-(model, role)
/// defaults first, explicit overrides on top.
pub fn role_config(
    model_id: &str,
    role: ModelRole,
    seed: u64,
    overrides: &ConfigOverrides,
) -> BackendConfig {
    overrides.apply(BackendConfig::with_defaults(model_id, role, seed))
}

// ---------------------------------------------------------------------------
// Trained strategies
// ---------------------------------------------------------------------------

/// A strategy with its trained model(s), ready for inference.
// A handful of these exist per process, so the variant size imbalance from
// Pipeline's second model is not worth boxing members over.
#[allow(clippy::large_enum_variant)]
#[derive(Debug)]
pub enum TrainedStrategy {
    Pipeline { ve: TrainedModel, ag: TrainedModel },
    Multitask { model: TrainedModel },
    End2End { model: TrainedModel },
}

/// Builds the corpus for `kind` and trains its model(s). Pipeline trains
/// two models under their respective role defaults; the other strategies
/// train one.
pub fn train_strategy(
    kind: &StrategyKind,
    train_records: &[ProductRecord],
    val_records: &[ProductRecord],
    model_id: &str,
    seed: u64,
    overrides: &ConfigOverrides,
) -> Result<TrainedStrategy> {
    match build_corpus(train_records, val_records, kind)? {
        StrategyCorpus::Pipeline { ve, ag } => {
            let ve_config = role_config(model_id, ModelRole::PipelineVe, seed, overrides);
            let ag_config = role_config(model_id, ModelRole::PipelineAg, seed, overrides);
            Ok(TrainedStrategy::Pipeline {
                ve: backend::train(&ve.train, &ve_config, &ve.val)?,
                ag: backend::train(&ag.train, &ag_config, &ag.val)?,
            })
        }
        StrategyCorpus::Single { kind, corpus } => {
            let role = if kind == StrategyKind::Multitask {
                ModelRole::Multitask
            } else {
                ModelRole::End2End
            };
            let config = role_config(model_id, role, seed, overrides);
            let model = backend::train(&corpus.train, &config, &corpus.val)?;
            Ok(match kind {
                StrategyKind::Multitask => TrainedStrategy::Multitask { model },
                _ => TrainedStrategy::End2End { model },
            })
        }
    }
}

impl TrainedStrategy {
    pub fn kind(&self) -> StrategyKind {
        match self {
            TrainedStrategy::Pipeline { .. } => StrategyKind::Pipeline,
            TrainedStrategy::Multitask { .. } => StrategyKind::Multitask,
            TrainedStrategy::End2End { .. } => StrategyKind::End2End,
        }
    }

    pub fn label(&self) -> &'static str {
        self.kind().label()
    }

    /// The member models in a fixed order.
    pub fn models(&self) -> Vec<&TrainedModel> {
        match self {
            TrainedStrategy::Pipeline { ve, ag } => vec![ve, ag],
            TrainedStrategy::Multitask { model } | TrainedStrategy::End2End { model } => {
                vec![model]
            }
        }
    }

    /// Sum of member model memory proxies.
    pub fn memory_proxy(&self) -> f64 {
        self.models().iter().map(|m| m.memory_proxy()).sum()
    }

    /// Predicts one `PredictionSet` per record, in record order.
    pub fn predict(&self, records: &[ProductRecord]) -> Result<Vec<PredictionSet>> {
        match self {
            TrainedStrategy::Pipeline { ve, ag } => two_stage_predict(ve, ag, false, records),
            TrainedStrategy::Multitask { model } => two_stage_predict(model, model, true, records),
            TrainedStrategy::End2End { model } => e2e_predict(model, records),
        }
    }

    /// Persists the strategy under `dir`: a manifest plus one subdirectory
    /// per member model.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let manifest = StrategyManifest {
            kind: self.kind(),
            members: member_dirs(&self.kind())
                .iter()
                .map(|s| s.to_string())
                .collect(),
        };
        std::fs::create_dir_all(dir).map_err(|source| Error::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join(STRATEGY_MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, json.as_bytes()).map_err(|source| Error::Write { path, source })?;
        for (name, model) in member_dirs(&self.kind()).iter().zip(self.models()) {
            let member_dir = dir.join(name);
            std::fs::create_dir_all(&member_dir).map_err(|source| Error::Write {
                path: member_dir.clone(),
                source,
            })?;
            model.save(&member_dir)?;
        }
        Ok(())
    }

    /// Loads a strategy persisted by [`TrainedStrategy::save`].
    pub fn load(dir: &Path) -> Result<TrainedStrategy> {
        let path = dir.join(STRATEGY_MANIFEST_FILE);
        let raw = std::fs::read_to_string(&path).map_err(|source| Error::Read { path, source })?;
        let manifest: StrategyManifest = serde_json::from_str(&raw)?;
        let expected = member_dirs(&manifest.kind);
        if manifest.members != expected {
            return Err(Error::Consistency(format!(
                "strategy manifest in {} lists members {:?}, expected {:?}",
                dir.display(),
                manifest.members,
                expected
            )));
        }
        let mut models = expected
            .iter()
            .map(|name| TrainedModel::load(&dir.join(name)))
            .collect::<Result<Vec<_>>>()?;
        Ok(match manifest.kind {
            StrategyKind::Pipeline => {
                let ag = models.pop().expect("two members");
                let ve = models.pop().expect("two members");
                TrainedStrategy::Pipeline { ve, ag }
            }
            StrategyKind::Multitask => TrainedStrategy::Multitask {
                model: models.pop().expect("one member"),
            },
            StrategyKind::End2End => TrainedStrategy::End2End {
                model: models.pop().expect("one member"),
            },
            StrategyKind::Ensemble(_) => unreachable!("rejected by member_dirs"),
        })
    }
}

const STRATEGY_MANIFEST_FILE: &str = "strategy.json";

#[derive(Debug, Serialize, Deserialize)]
struct StrategyManifest {
    kind: StrategyKind,
    members: Vec<String>,
}

fn member_dirs(kind: &StrategyKind) -> Vec<&'static str> {
    match kind {
        StrategyKind::Pipeline => vec!["ve", "ag"],
        StrategyKind::Multitask | StrategyKind::End2End => vec!["model"],
        StrategyKind::Ensemble(_) => Vec::new(),
    }
}

/// Two-stage inference: extract candidate values for every record, then
/// generate an attribute for each candidate that occurs in its record's
/// text. `prefixed` selects the multitask source format; the pipeline
/// passes two distinct models, the multitask strategy the same model twice.
fn two_stage_predict(
    ve: &TrainedModel,
    ag: &TrainedModel,
    prefixed: bool,
    records: &[ProductRecord],
) -> Result<Vec<PredictionSet>> {
    let stage1: Vec<String> = records
        .iter()
        .map(|r| {
            if prefixed {
                add_task_prefix(PrefixTask::Ve, &r.text)
            } else {
                r.text.clone()
            }
        })
        .collect();
    let extracted = ve.generate(&stage1)?;
    let mut sets: Vec<PredictionSet> = records
        .iter()
        .map(|r| PredictionSet::empty(r.id.clone()))
        .collect();
    let mut stage2_sources = Vec::new();
    let mut stage2_slots: Vec<(usize, String)> = Vec::new();
    for (idx, generated) in extracted.iter().enumerate() {
        let report = parse_values(generated);
        sets[idx].diagnostics.malformed_segments += report.malformed_segments;
        sets[idx].diagnostics.duplicates_removed += report.duplicates;
        for value in report.parsed {
            match highlight_value(&records[idx].text, &value) {
                Some(highlighted) => {
                    let source = if prefixed {
                        add_task_prefix(PrefixTask::Ag, &highlighted)
                    } else {
                        highlighted
                    };
                    stage2_sources.push(source);
                    stage2_slots.push((idx, value));
                }
                None => sets[idx].diagnostics.values_not_found += 1,
            }
        }
    }
    let attributes = ag.generate(&stage2_sources)?;
    for ((idx, value), attribute) in stage2_slots.into_iter().zip(attributes) {
        match AttrValuePair::new(attribute.trim(), value) {
            Ok(pair) => sets[idx].pairs.push(pair),
            // An attribute generation that cannot form a pair (e.g. the
            // model emitted nothing) counts as a malformed segment.
            Err(_) => sets[idx].diagnostics.malformed_segments += 1,
        }
    }
    for set in &mut sets {
        set.dedup();
    }
    Ok(sets)
}

/// Single-stage inference: parse each generated flattened-pair string.
fn e2e_predict(model: &TrainedModel, records: &[ProductRecord]) -> Result<Vec<PredictionSet>> {
    let sources: Vec<String> = records.iter().map(|r| r.text.clone()).collect();
    let outputs = model.generate(&sources)?;
    let mut sets = Vec::with_capacity(records.len());
    for (record, generated) in records.iter().zip(outputs) {
        let report = parse_pairs(&generated);
        let mut set = PredictionSet::empty(record.id.clone());
        set.diagnostics.malformed_segments = report.malformed_segments;
        set.diagnostics.duplicates_removed = report.duplicates;
        set.pairs = report.parsed;
        set.dedup();
        sets.push(set);
    }
    Ok(sets)
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

/// Unions member predictions for one record: pairs combined under
/// normalization (first occurrence kept), diagnostics summed.
pub fn ensemble_combine(sets: &[PredictionSet]) -> Result<PredictionSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Input("an ensemble needs at least one member prediction".into()))?;
    let mut pairs = Vec::new();
    let mut diagnostics = Diagnostics::default();
    for set in sets {
        if set.record_id != first.record_id {
            return Err(Error::Input(format!(
                "ensemble members disagree on record id: '{}' vs '{}'",
                first.record_id, set.record_id
            )));
        }
        pairs.extend(set.pairs.iter().cloned());
        diagnostics.add(&set.diagnostics);
    }
    // Overlap between members is set semantics, not a removal diagnostic.
    let (pairs, _) = dedup_pairs(pairs);
    Ok(PredictionSet {
        record_id: first.record_id.clone(),
        pairs,
        diagnostics,
    })
}

/// Combines whole prediction runs record by record, joined on record id.
/// The output keeps the first run's record order; every run must cover
/// exactly the same records.
pub fn ensemble_runs(runs: &[Vec<PredictionSet>]) -> Result<Vec<PredictionSet>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Input("an ensemble needs at least one member run".into()))?;
    for (i, run) in runs.iter().enumerate().skip(1) {
        if run.len() != first.len() {
            return Err(Error::Input(format!(
                "ensemble member {} covers {} records, member 0 covers {}",
                i,
                run.len(),
                first.len()
            )));
        }
    }
    let maps: Vec<BTreeMap<&str, &PredictionSet>> = runs
        .iter()
        .map(|run| {
            run.iter()
                .map(|set| (set.record_id.as_str(), set))
                .collect()
        })
        .collect();
    let mut combined = Vec::with_capacity(first.len());
    for set in first {
        let mut members = Vec::with_capacity(runs.len());
        for (i, map) in maps.iter().enumerate() {
            let member = map.get(set.record_id.as_str()).ok_or_else(|| {
                Error::Input(format!(
                    "ensemble member {} has no prediction for record id '{}'",
                    i, set.record_id
                ))
            })?;
            members.push((*member).clone());
        }
        combined.push(ensemble_combine(&members)?);
    }
    Ok(combined)
}

// ---------------------------------------------------------------------------
// Prediction files
// ---------------------------------------------------------------------------

/// One line of a prediction file. Field names are part of the format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub id: String,
    pub strategy: String,
    pub pairs: Vec<AttrValuePair>,
    pub diagnostics: Diagnostics,
}

impl PredictionLine {
    pub fn into_set(self) -> PredictionSet {
        PredictionSet {
            record_id: self.id,
            pairs: self.pairs,
            diagnostics: self.diagnostics,
        }
    }
}

/// Writes one JSON line per prediction set, labeled with the strategy name.
pub fn write_predictions(path: &Path, strategy: &str, sets: &[PredictionSet]) -> Result<()> {
    let mut out = String::new();
    for set in sets {
        let line = PredictionLine {
            id: set.record_id.clone(),
            strategy: strategy.to_string(),
            pairs: set.pairs.clone(),
            diagnostics: set.diagnostics,
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    std::fs::write(path, out.as_bytes()).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a prediction file written by [`write_predictions`].
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionLine>> {
    let raw = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = Vec::new();
    for (number, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PredictionLine = serde_json::from_str(line)
            .map_err(|e| Error::Input(format!("{}:{}: {e}", path.display(), number + 1)))?;
        lines.push(parsed);
    }
    Ok(lines)
}

// ---------------------------------------------------------------------------
// Cost probing
// ---------------------------------------------------------------------------

/// Measured costs of training and running one strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyCost {
    pub strategy: String,
    pub train_seconds: f64,
    pub infer_seconds_per_1k: f64,
    pub memory_proxy: f64,
    pub mean_pairs_per_product: f64,
}

/// Trains `kind` and times it, then times inference over `probe_records`.
/// Returns the trained strategy alongside its cost record so callers can
/// reuse the models.
pub fn probe_strategy_cost(
    kind: &StrategyKind,
    train_records: &[ProductRecord],
    val_records: &[ProductRecord],
    probe_records: &[ProductRecord],
    model_id: &str,
    seed: u64,
    overrides: &ConfigOverrides,
) -> Result<(TrainedStrategy, StrategyCost)> {
    let started = Instant::now();
    let strategy = train_strategy(kind, train_records, val_records, model_id, seed, overrides)?;
    let train_seconds = started.elapsed().as_secs_f64();
    let started = Instant::now();
    let sets = strategy.predict(probe_records)?;
    let infer_seconds = started.elapsed().as_secs_f64();
    let n = probe_records.len().max(1) as f64;
    let total_pairs: usize = sets.iter().map(|s| s.pairs.len()).sum();
    let cost = StrategyCost {
        strategy: strategy.label().to_string(),
        train_seconds,
        infer_seconds_per_1k: infer_seconds / n * 1000.0,
        memory_proxy: strategy.memory_proxy(),
        mean_pairs_per_product: total_pairs as f64 / n,
    };
    Ok((strategy, cost))
}
