//! Operator surface over the `avgen` library: corpus preparation, strategy
//! training, prediction, evaluation, cross-evaluation, and cost probing as
//! composable commands over file artifacts.
//!
//! Every command resolves its settings with the same precedence — explicit
//! flags first, then `--config` key=value entries, then built-in defaults —
//! and writes its artifacts plus a `run.json` manifest (recording the seed
//! and resolved options) and a `log.jsonl` event log into `--out`. Given
//! identical inputs and seed, artifacts are byte-identical across runs;
//! only log timestamps and measured cost timings vary.
//!
//! Exit codes: 0 when all artifacts were written, 2 for usage errors
//! (unknown formats, malformed ratios, missing required values), 1 for
//! runtime failures (missing files, id mismatches, training errors).

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde_json::{json, Value};

use avgen::backend::DecodeMode;
use avgen::eval::{Averaging, ScoreOptions};
use avgen::ingest::{self, CorpusFormat};
use avgen::strategies::{
    ensemble_runs, probe_strategy_cost, read_predictions, train_strategy, write_predictions,
    ConfigOverrides, PredictionSet, StrategyKind, TrainedStrategy,
};

#[derive(Parser)]
#[command(
    name = "avgen",
    version,
    about = "Attribute-value generation experiments"
)]
struct Cli {
    /// Flat key=value file supplying defaults for any flag (flags win).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// RNG seed, recorded in every run manifest.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory receiving this command's artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus and write canonical train/val/test splits.
    Prepare {
        /// Corpus format: ae110k, oamine, mave, or canonical.
        #[arg(long)]
        format: Option<String>,

        /// Input corpus file.
        #[arg(long = "in", value_name = "FILE")]
        input: Option<PathBuf>,

        /// Train:val:test ratios, e.g. 8:1:1.
        #[arg(long)]
        ratios: Option<String>,
    },

    /// Train a strategy on prepared splits.
    Train {
        /// Strategy: pipeline, multitask, or end2end.
        #[arg(long)]
        strategy: Option<String>,

        #[command(flatten)]
        fit: FitOpts,
    },

    /// Generate predictions for a canonical record file.
    Predict {
        /// Trained strategy directory (a `train` output).
        #[arg(long, value_name = "DIR")]
        model_dir: Option<PathBuf>,

        /// Canonical records to predict on.
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
    },

    /// Score a prediction file against gold records.
    Evaluate {
        /// Prediction file (a `predict` output).
        #[arg(long, value_name = "FILE")]
        predictions: Option<PathBuf>,

        /// Member prediction files to union per record before scoring.
        #[arg(long, num_args = 1.., value_name = "FILE")]
        ensemble: Vec<PathBuf>,

        /// Canonical gold records.
        #[arg(long, value_name = "FILE")]
        gold: Option<PathBuf>,

        /// Averaging mode: micro or macro.
        #[arg(long)]
        averaging: Option<String>,

        /// Keep predictions whose attribute has no gold label.
        #[arg(long)]
        no_discard: bool,
    },

    /// Score every trained model on every test split.
    Crosseval {
        /// One corpus per flag: name=model_dir,test_file.
        #[arg(long = "entry", value_name = "NAME=MODEL_DIR,TEST_FILE")]
        entries: Vec<String>,
    },

    /// Train all three strategies in-process and report cost ratios.
    Costs {
        #[command(flatten)]
        fit: FitOpts,

        /// Split to time inference on: train, val, or test.
        #[arg(long)]
        probe: Option<String>,
    },
}

/// Training knobs shared by `train` and `costs`. Unset values fall back to
/// the config file, then to the per-(model, strategy) defaults.
#[derive(Args)]
struct FitOpts {
    /// Model identifier: mock, tiny, or an external checkpoint id.
    #[arg(long)]
    model: Option<String>,

    /// Directory holding train.jsonl and val.jsonl (a `prepare` output).
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,

    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    learning_rate: Option<f64>,

    #[arg(long)]
    batch_size: Option<usize>,

    #[arg(long)]
    max_input_tokens: Option<usize>,

    #[arg(long)]
    max_output_tokens: Option<usize>,

    /// Early-stopping patience, in epochs.
    #[arg(long)]
    patience: Option<usize>,

    /// Decode mode: greedy, beam, or beam:<width>.
    #[arg(long)]
    decode: Option<String>,

    /// Command template for the external backend adapter.
    #[arg(long, value_name = "TEMPLATE")]
    external_cmd: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Reports a bad or missing argument value through clap, exiting with the
/// usage-error code.
fn usage_error(message: String) -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::InvalidValue, message)
        .exit()
}

// ---------------------------------------------------------------------------
// Settings resolution
// ---------------------------------------------------------------------------

/// Key=value entries from `--config`, consulted when a flag is absent.
struct FileConfig(BTreeMap<String, String>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self(BTreeMap::new()));
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("failed to read config file {}", path.display()))?;
        let map = parse_config_text(&text)
            .unwrap_or_else(|message| usage_error(format!("{}: {message}", path.display())));
        Ok(Self(map))
    }

    /// Parses the value stored under `key`, if any. A present but
    /// unparseable value is a usage error.
    fn get<T: FromStr>(&self, key: &str) -> Option<T>
    where
        T::Err: Display,
    {
        self.0.get(key).map(|raw| {
            raw.parse().unwrap_or_else(|err| {
                usage_error(format!("config key '{key}': {err} (value '{raw}')"))
            })
        })
    }
}

/// Lines of `key = value`; blank lines and `#` comments are skipped.
fn parse_config_text(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (index, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!(
                "line {}: expected key=value, got '{line}'",
                index + 1
            ));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Flag value if given, else the config-file value.
fn pick<T: FromStr>(flag: Option<T>, config: &FileConfig, key: &str) -> Option<T>
where
    T::Err: Display,
{
    flag.or_else(|| config.get(key))
}

/// As [`pick`], but a missing value is a usage error.
fn require<T: FromStr>(flag: Option<T>, config: &FileConfig, key: &str) -> T
where
    T::Err: Display,
{
    pick(flag, config, key).unwrap_or_else(|| {
        usage_error(format!(
            "missing required value: pass --{} or set '{key}' in the config file",
            key.replace('_', "-")
        ))
    })
}

/// Parses `train:val:test`. Entries above 1 are shares normalized by their
/// total (`8:1:1` → 0.8/0.1/0.1); fractional triples must sum to 1.
fn parse_ratios(raw: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("ratios must be train:val:test, got '{raw}'"));
    }
    let mut ratios = [0.0f64; 3];
    for (slot, part) in ratios.iter_mut().zip(parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| format!("ratio '{}' is not a number", part.trim()))?;
    }
    if ratios.iter().any(|r| *r < 0.0 || !r.is_finite()) {
        return Err(format!("ratios must be non-negative numbers, got '{raw}'"));
    }
    let sum: f64 = ratios.iter().sum();
    if sum <= 0.0 {
        return Err(format!("ratios must have a positive sum, got '{raw}'"));
    }
    if ratios.iter().all(|r| *r <= 1.0) {
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("fractional ratios must sum to 1, got {sum}"));
        }
        Ok(ratios)
    } else {
        Ok(ratios.map(|r| r / sum))
    }
}

fn parse_decode(raw: &str) -> std::result::Result<DecodeMode, String> {
    match raw {
        "greedy" => Ok(DecodeMode::Greedy),
        "beam" => Ok(DecodeMode::Beam(4)),
        _ => match raw.strip_prefix("beam:").and_then(|w| w.parse().ok()) {
            Some(width) if width >= 1 => Ok(DecodeMode::Beam(width)),
            _ => Err(format!(
                "decode mode must be 'greedy', 'beam', or 'beam:<width>', got '{raw}'"
            )),
        },
    }
}

fn decode_label(mode: DecodeMode) -> String {
    match mode {
        DecodeMode::Greedy => "greedy".into(),
        DecodeMode::Beam(width) => format!("beam:{width}"),
    }
}

fn parse_entry(raw: &str) -> std::result::Result<(String, PathBuf, PathBuf), String> {
    let err = || format!("entry must be name=model_dir,test_file, got '{raw}'");
    let (name, rest) = raw.split_once('=').ok_or_else(err)?;
    let (dir, test) = rest.split_once(',').ok_or_else(err)?;
    if name.trim().is_empty() || dir.trim().is_empty() || test.trim().is_empty() {
        return Err(err());
    }
    Ok((
        name.trim().to_string(),
        PathBuf::from(dir.trim()),
        PathBuf::from(test.trim()),
    ))
}

/// Resolves the training knobs: flags over config-file values; `None`
/// leaves the per-(model, strategy) default in force.
fn resolve_overrides(fit: &FitOpts, config: &FileConfig) -> ConfigOverrides {
    ConfigOverrides {
        epochs: pick(fit.epochs, config, "epochs"),
        learning_rate: pick(fit.learning_rate, config, "learning_rate"),
        batch_size: pick(fit.batch_size, config, "batch_size"),
        max_input_tokens: pick(fit.max_input_tokens, config, "max_input_tokens"),
        max_output_tokens: pick(fit.max_output_tokens, config, "max_output_tokens"),
        early_stop_patience: pick(fit.patience, config, "patience"),
        decode_mode: pick::<String>(fit.decode.clone(), config, "decode")
            .map(|raw| parse_decode(&raw).unwrap_or_else(|message| usage_error(message))),
        external_cmd: pick(fit.external_cmd.clone(), config, "external_cmd"),
    }
}

fn overrides_json(overrides: &ConfigOverrides) -> Value {
    json!({
        "epochs": overrides.epochs,
        "learning_rate": overrides.learning_rate,
        "batch_size": overrides.batch_size,
        "max_input_tokens": overrides.max_input_tokens,
        "max_output_tokens": overrides.max_output_tokens,
        "patience": overrides.early_stop_patience,
        "decode": overrides.decode_mode.map(decode_label),
        "external_cmd": overrides.external_cmd,
    })
}

// ---------------------------------------------------------------------------
// Artifacts and logging
// ---------------------------------------------------------------------------

/// Line-delimited JSON event log under the output directory. Each line
/// carries a UNIX timestamp, the event name, and event-specific fields.
struct RunLog {
    file: std::fs::File,
}

impl RunLog {
    fn create(out_dir: &Path) -> Result<Self> {
        let path = out_dir.join("log.jsonl");
        let file = std::fs::File::create(&path)
            .with_context(|| format!("failed to create {}", path.display()))?;
        Ok(Self { file })
    }

    fn event(&mut self, name: &str, fields: Value) -> Result<()> {
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let mut line = json!({ "ts": ts, "event": name });
        if let (Some(target), Some(extra)) = (line.as_object_mut(), fields.as_object()) {
            for (key, value) in extra {
                target.insert(key.clone(), value.clone());
            }
        }
        writeln!(self.file, "{line}").context("failed to write log event")
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("failed to serialize artifact")?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("failed to write {}", path.display()))
}

/// Records the resolved invocation — command, seed, and options — so every
/// run directory states how it was produced.
fn write_run_manifest(out_dir: &Path, command: &str, seed: u64, options: Value) -> Result<()> {
    write_json(
        &out_dir.join("run.json"),
        &json!({ "command": command, "seed": seed, "options": options }),
    )
}

fn prepare_out_dir(out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("failed to create output directory {}", out_dir.display()))
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<()> {
    let config = FileConfig::load(cli.config.as_deref())?;
    let seed = pick(cli.seed, &config, "seed").unwrap_or(0);
    let out_dir: PathBuf = require(cli.out, &config, "out");
    match cli.command {
        Command::Prepare {
            format,
            input,
            ratios,
        } => cmd_prepare(&out_dir, seed, &config, format, input, ratios),
        Command::Train { strategy, fit } => cmd_train(&out_dir, seed, &config, strategy, &fit),
        Command::Predict { model_dir, data } => {
            cmd_predict(&out_dir, seed, &config, model_dir, data)
        }
        Command::Evaluate {
            predictions,
            ensemble,
            gold,
            averaging,
            no_discard,
        } => cmd_evaluate(
            &out_dir,
            seed,
            &config,
            predictions,
            ensemble,
            gold,
            averaging,
            no_discard,
        ),
        Command::Crosseval { entries } => cmd_crosseval(&out_dir, seed, &config, entries),
        Command::Costs { fit, probe } => cmd_costs(&out_dir, seed, &config, &fit, probe),
    }
}

fn cmd_prepare(
    out_dir: &Path,
    seed: u64,
    config: &FileConfig,
    format: Option<String>,
    input: Option<PathBuf>,
    ratios: Option<String>,
) -> Result<()> {
    let format_raw: String = require(format, config, "format");
    let format: CorpusFormat = format_raw
        .parse()
        .unwrap_or_else(|err: avgen::Error| usage_error(err.to_string()));
    let input: PathBuf = require(input, config, "in");
    let ratios_raw: String = pick(ratios, config, "ratios").unwrap_or_else(|| "8:1:1".into());
    let ratios = parse_ratios(&ratios_raw).unwrap_or_else(|message| usage_error(message));

    prepare_out_dir(out_dir)?;
    let mut log = RunLog::create(out_dir)?;
    log.event("start", json!({ "command": "prepare", "seed": seed }))?;

    let (records, load_report) = ingest::load_corpus(&input, format)?;
    log.event(
        "corpus_loaded",
        json!({
            "path": input.display().to_string(),
            "format": format_raw,
            "rows_read": load_report.rows_read,
            "records": load_report.records,
            "pairs": load_report.pairs,
            "malformed_rows": load_report.malformed_rows,
        }),
    )?;

    let (split, split_report) = ingest::stratified_split(records, ratios, seed)?;
    ingest::write_canonical(&out_dir.join("train.jsonl"), &split.train)?;
    ingest::write_canonical(&out_dir.join("val.jsonl"), &split.val)?;
    ingest::write_canonical(&out_dir.join("test.jsonl"), &split.test)?;
    write_json(&out_dir.join("split_report.json"), &split_report)?;
    log.event(
        "splits_written",
        json!({
            "train": split.train.len(),
            "val": split.val.len(),
            "test": split.test.len(),
            "small_categories": split_report.small_categories,
        }),
    )?;

    write_run_manifest(
        out_dir,
        "prepare",
        seed,
        json!({
            "format": format_raw,
            "in": input.display().to_string(),
            "ratios": ratios_raw,
        }),
    )?;
    log.event(
        "done",
        json!({ "artifacts": ["train.jsonl", "val.jsonl", "test.jsonl", "split_report.json"] }),
    )?;
    println!(
        "prepared {} corpus {}: {} records -> train {} / val {} / test {} (seed {seed})",
        format_raw,
        input.display(),
        split.train.len() + split.val.len() + split.test.len(),
        split.train.len(),
        split.val.len(),
        split.test.len(),
    );
    println!("artifacts in {}", out_dir.display());
    Ok(())
}

fn cmd_train(
    out_dir: &Path,
    seed: u64,
    config: &FileConfig,
    strategy: Option<String>,
    fit: &FitOpts,
) -> Result<()> {
    let strategy_raw: String = require(strategy, config, "strategy");
    let kind: StrategyKind = strategy_raw
        .parse()
        .unwrap_or_else(|err: avgen::Error| usage_error(err.to_string()));
    let model: String = require(fit.model.clone(), config, "model");
    let data: PathBuf = require(fit.data.clone(), config, "data");
    let overrides = resolve_overrides(fit, config);

    prepare_out_dir(out_dir)?;
    let mut log = RunLog::create(out_dir)?;
    log.event("start", json!({ "command": "train", "seed": seed }))?;

    let train_records = ingest::read_canonical(&data.join("train.jsonl"))?;
    let val_records = ingest::read_canonical(&data.join("val.jsonl"))?;
    log.event(
        "splits_loaded",
        json!({ "train_records": train_records.len(), "val_records": val_records.len() }),
    )?;

    let trained = train_strategy(
        &kind,
        &train_records,
        &val_records,
        &model,
        seed,
        &overrides,
    )?;
    trained.save(out_dir)?;
    let members: Vec<Value> = trained
        .models()
        .iter()
        .map(|member| {
            json!({
                "kind": member.kind(),
                "epochs_run": member.report.epochs_run,
                "early_stopped": member.report.early_stopped,
                "final_val_loss": member.report.final_val_loss,
                "fingerprint": member.fingerprint,
            })
        })
        .collect();
    log.event(
        "model_trained",
        json!({ "strategy": trained.label(), "members": members, "memory_proxy": trained.memory_proxy() }),
    )?;

    write_run_manifest(
        out_dir,
        "train",
        seed,
        json!({
            "strategy": strategy_raw,
            "model": model,
            "data": data.display().to_string(),
            "overrides": overrides_json(&overrides),
        }),
    )?;
    log.event("done", json!({ "artifacts": ["strategy.json"] }))?;
    println!(
        "trained {} ({model}) on {} records ({} validation)",
        trained.label(),
        train_records.len(),
        val_records.len(),
    );
    for member in trained.models() {
        println!(
            "  member {}: epochs_run={} early_stopped={}",
            member.kind(),
            member.report.epochs_run,
            member.report.early_stopped,
        );
    }
    println!("saved to {}", out_dir.display());
    Ok(())
}

fn cmd_predict(
    out_dir: &Path,
    seed: u64,
    config: &FileConfig,
    model_dir: Option<PathBuf>,
    data: Option<PathBuf>,
) -> Result<()> {
    let model_dir: PathBuf = require(model_dir, config, "model_dir");
    let data: PathBuf = require(data, config, "data");

    prepare_out_dir(out_dir)?;
    let mut log = RunLog::create(out_dir)?;
    log.event("start", json!({ "command": "predict", "seed": seed }))?;

    let strategy = TrainedStrategy::load(&model_dir)?;
    let records = ingest::read_canonical(&data)?;
    let sets = strategy.predict(&records)?;
    write_predictions(&out_dir.join("predictions.jsonl"), strategy.label(), &sets)?;

    let pairs: usize = sets.iter().map(|s| s.pairs.len()).sum();
    let malformed: usize = sets.iter().map(|s| s.diagnostics.malformed_segments).sum();
    let not_found: usize = sets.iter().map(|s| s.diagnostics.values_not_found).sum();
    let duplicates: usize = sets.iter().map(|s| s.diagnostics.duplicates_removed).sum();
    log.event(
        "predictions_written",
        json!({
            "strategy": strategy.label(),
            "records": sets.len(),
            "pairs": pairs,
            "malformed_segments": malformed,
            "values_not_found": not_found,
            "duplicates_removed": duplicates,
        }),
    )?;

    write_run_manifest(
        out_dir,
        "predict",
        seed,
        json!({
            "model_dir": model_dir.display().to_string(),
            "data": data.display().to_string(),
        }),
    )?;
    log.event("done", json!({ "artifacts": ["predictions.jsonl"] }))?;
    println!(
        "predicted {} pairs over {} records with {} ({} malformed segments, {} values not found, {} duplicates removed)",
        pairs,
        sets.len(),
        strategy.label(),
        malformed,
        not_found,
        duplicates,
    );
    println!("wrote {}", out_dir.join("predictions.jsonl").display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    out_dir: &Path,
    seed: u64,
    config: &FileConfig,
    predictions: Option<PathBuf>,
    ensemble: Vec<PathBuf>,
    gold: Option<PathBuf>,
    averaging: Option<String>,
    no_discard: bool,
) -> Result<()> {
    let gold_path: PathBuf = require(gold, config, "gold");
    let member_paths: Vec<PathBuf> = if !ensemble.is_empty() {
        if predictions.is_some() {
            usage_error("pass either --predictions or --ensemble, not both".into());
        }
        ensemble
    } else if let Some(path) = pick(predictions, config, "predictions") {
        vec![path]
    } else {
        usage_error(
            "missing prediction input: pass --predictions or --ensemble, or set 'predictions' \
             in the config file"
                .into(),
        );
    };
    let averaging = match pick(averaging, config, "averaging").as_deref() {
        None | Some("micro") => Averaging::Micro,
        Some("macro") => Averaging::Macro,
        Some(other) => usage_error(format!("averaging must be micro or macro, got '{other}'")),
    };
    let apply_discard = if no_discard {
        false
    } else {
        config.get("discard").unwrap_or(true)
    };

    prepare_out_dir(out_dir)?;
    let mut log = RunLog::create(out_dir)?;
    log.event("start", json!({ "command": "evaluate", "seed": seed }))?;

    let mut runs: Vec<Vec<PredictionSet>> = Vec::new();
    for path in &member_paths {
        let lines = read_predictions(path)?;
        runs.push(lines.into_iter().map(|line| line.into_set()).collect());
    }
    let sets = if runs.len() == 1 {
        runs.pop().expect("one run")
    } else {
        ensemble_runs(&runs)?
    };
    let golds = ingest::read_canonical(&gold_path)?;
    let report = avgen::eval::score_predictions(
        &sets,
        &golds,
        ScoreOptions {
            apply_discard,
            averaging,
        },
    )?;
    let doc = report.to_doc();
    write_json(&out_dir.join("report.json"), &doc)?;
    log.event(
        "report_written",
        json!({
            "precision": doc.precision,
            "recall": doc.recall,
            "f1": doc.f1,
            "records": doc.records,
            "members": member_paths.len(),
        }),
    )?;

    write_run_manifest(
        out_dir,
        "evaluate",
        seed,
        json!({
            "predictions": member_paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "gold": gold_path.display().to_string(),
            "averaging": if averaging == Averaging::Macro { "macro" } else { "micro" },
            "discard": apply_discard,
        }),
    )?;
    log.event("done", json!({ "artifacts": ["report.json"] }))?;
    println!(
        "P={:.2} R={:.2} F1={:.2} over {} records (tp={} fp={} fn={} discarded={})",
        doc.precision,
        doc.recall,
        doc.f1,
        doc.records,
        doc.counts.true_positives,
        doc.counts.false_positives,
        doc.counts.false_negatives,
        doc.counts.discarded,
    );
    println!("wrote {}", out_dir.join("report.json").display());
    Ok(())
}

fn cmd_crosseval(
    out_dir: &Path,
    seed: u64,
    config: &FileConfig,
    entries: Vec<String>,
) -> Result<()> {
    let raw_entries: Vec<String> = if entries.is_empty() {
        config
            .get::<String>("entries")
            .map(|joined| joined.split_whitespace().map(str::to_string).collect())
            .unwrap_or_default()
    } else {
        entries
    };
    if raw_entries.is_empty() {
        usage_error("pass at least one --entry name=model_dir,test_file".into());
    }
    let mut parsed = Vec::new();
    for raw in &raw_entries {
        let entry = parse_entry(raw).unwrap_or_else(|message| usage_error(message));
        if parsed.iter().any(|(name, _, _)| *name == entry.0) {
            usage_error(format!("duplicate corpus name '{}'", entry.0));
        }
        parsed.push(entry);
    }

    prepare_out_dir(out_dir)?;
    let mut log = RunLog::create(out_dir)?;
    log.event("start", json!({ "command": "crosseval", "seed": seed }))?;

    let mut models = BTreeMap::new();
    let mut splits = BTreeMap::new();
    for (name, model_dir, test_path) in &parsed {
        models.insert(name.clone(), TrainedStrategy::load(model_dir)?);
        splits.insert(name.clone(), ingest::read_canonical(test_path)?);
    }
    let matrix = avgen::eval::cross_eval(&models, &splits)?;
    write_json(&out_dir.join("matrix.json"), &matrix)?;
    log.event("matrix_written", json!({ "corpora": matrix.len() }))?;

    write_run_manifest(
        out_dir,
        "crosseval",
        seed,
        json!({ "entries": raw_entries }),
    )?;
    log.event("done", json!({ "artifacts": ["matrix.json"] }))?;
    println!("cross-evaluation F1 (rows = training corpus, columns = test corpus):");
    for (row_name, row) in &matrix {
        let cells: Vec<String> = row
            .iter()
            .map(|(col_name, value)| format!("{col_name}={value:.2}"))
            .collect();
        println!("  {row_name}: {}", cells.join(" "));
    }
    println!("wrote {}", out_dir.join("matrix.json").display());
    Ok(())
}

fn cmd_costs(
    out_dir: &Path,
    seed: u64,
    config: &FileConfig,
    fit: &FitOpts,
    probe: Option<String>,
) -> Result<()> {
    let model: String = require(fit.model.clone(), config, "model");
    let data: PathBuf = require(fit.data.clone(), config, "data");
    let probe_split: String = pick(probe, config, "probe").unwrap_or_else(|| "test".into());
    if !["train", "val", "test"].contains(&probe_split.as_str()) {
        usage_error(format!(
            "probe split must be train, val, or test, got '{probe_split}'"
        ));
    }
    let overrides = resolve_overrides(fit, config);

    prepare_out_dir(out_dir)?;
    let mut log = RunLog::create(out_dir)?;
    log.event("start", json!({ "command": "costs", "seed": seed }))?;

    let train_records = ingest::read_canonical(&data.join("train.jsonl"))?;
    let val_records = ingest::read_canonical(&data.join("val.jsonl"))?;
    let probe_records = ingest::read_canonical(&data.join(format!("{probe_split}.jsonl")))?;
    log.event(
        "splits_loaded",
        json!({
            "train_records": train_records.len(),
            "val_records": val_records.len(),
            "probe_records": probe_records.len(),
            "probe_split": probe_split,
        }),
    )?;

    let mut probes = Vec::new();
    for kind in [
        StrategyKind::Pipeline,
        StrategyKind::Multitask,
        StrategyKind::End2End,
    ] {
        let (_, cost) = probe_strategy_cost(
            &kind,
            &train_records,
            &val_records,
            &probe_records,
            &model,
            seed,
            &overrides,
        )?;
        log.event(
            "strategy_probed",
            json!({
                "strategy": cost.strategy,
                "train_seconds": cost.train_seconds,
                "infer_seconds_per_1k": cost.infer_seconds_per_1k,
                "memory_proxy": cost.memory_proxy,
                "mean_pairs_per_product": cost.mean_pairs_per_product,
            }),
        )?;
        probes.push(cost);
    }
    let report = avgen::eval::build_cost_report(&probes)?;
    write_json(&out_dir.join("costs.json"), &report)?;

    write_run_manifest(
        out_dir,
        "costs",
        seed,
        json!({
            "model": model,
            "data": data.display().to_string(),
            "probe": probe_split,
            "overrides": overrides_json(&overrides),
        }),
    )?;
    log.event("done", json!({ "artifacts": ["costs.json"] }))?;
    println!(
        "cost report (baseline: {}, raw_only: {}):",
        report.baseline, report.raw_only
    );
    for row in &report.rows {
        match &row.normalized {
            Some(ratios) => println!(
                "  {}: train {:.4}s ({:.1}x) infer {:.4}s/1k ({:.1}x) memory {} ({:.1}x) pairs {:.2} ({:.1}x)",
                row.strategy,
                row.train_seconds,
                ratios.train,
                row.infer_seconds_per_1k,
                ratios.infer,
                row.memory_proxy,
                ratios.memory,
                row.mean_pairs_per_product,
                ratios.pairs,
            ),
            None => println!(
                "  {}: train {:.4}s infer {:.4}s/1k memory {} pairs {:.2}",
                row.strategy,
                row.train_seconds,
                row.infer_seconds_per_1k,
                row.memory_proxy,
                row.mean_pairs_per_product,
            ),
        }
    }
    println!("wrote {}", out_dir.join("costs.json").display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios_parse_and_reject_malformed_triples() {
        assert_eq!(parse_ratios("8:1:1").unwrap(), [0.8, 0.1, 0.1]);
        assert_eq!(parse_ratios("0.8 : 0.1 : 0.1").unwrap(), [0.8, 0.1, 0.1]);
        assert!(parse_ratios("8:1").is_err());
        assert!(parse_ratios("8:1:x").is_err());
        assert!(
            parse_ratios("0.5:0.2:0.2").is_err(),
            "fractions must sum to 1"
        );
        assert!(parse_ratios("-8:1:1").is_err());
        assert!(parse_ratios("0:0:0").is_err());
    }

    #[test]
    fn decode_modes_parse() {
        assert_eq!(parse_decode("greedy").unwrap(), DecodeMode::Greedy);
        assert_eq!(parse_decode("beam").unwrap(), DecodeMode::Beam(4));
        assert_eq!(parse_decode("beam:2").unwrap(), DecodeMode::Beam(2));
        assert!(parse_decode("beam:0").is_err());
        assert!(parse_decode("sampling").is_err());
    }

    #[test]
    fn crosseval_entries_parse() {
        let (name, dir, test) = parse_entry("ae=runs/ae/model,runs/ae/test.jsonl").unwrap();
        assert_eq!(name, "ae");
        assert_eq!(dir, PathBuf::from("runs/ae/model"));
        assert_eq!(test, PathBuf::from("runs/ae/test.jsonl"));
        assert!(parse_entry("no-separator").is_err());
        assert!(parse_entry("name=only-a-dir").is_err());
    }

    #[test]
    fn config_text_parses_and_skips_comments() {
        let map = parse_config_text("# comment\n\nseed = 7\nmodel=mock\n").unwrap();
        assert_eq!(map.get("seed").map(String::as_str), Some("7"));
        assert_eq!(map.get("model").map(String::as_str), Some("mock"));
        assert!(parse_config_text("just-a-line\n").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
