//! Subprocess adapter for external pretrained encoder-decoder runtimes.
//!
//! The framework core never links a model library; any model id other than
//! the built-ins is delegated to a user-supplied command (`external_cmd`)
//! speaking a small file protocol, documented in [`EXTERNAL_PROTOCOL`].

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::{BackendConfig, Seq2SeqModel, TrainReport, TrainedModel};
use crate::error::{Error, Result};
use crate::serdes::TaskExample;

/// The file protocol an external adapter command must implement.
pub const EXTERNAL_PROTOCOL: &str = "\
The configured command is invoked two ways:

  <cmd> train --data <dir> --model-dir <dir>
    <data>/train.jsonl and <data>/val.jsonl hold one JSON object per line
    with fields `source`, `target`, `task`; <data>/config.json holds the
    full backend configuration (model_id, epochs, learning_rate, ...).
    The command must write its model state under --model-dir and exit 0.

  <cmd> generate --model-dir <dir> --in <file> --out <file>
    --in is one JSON object per line with field `source`; the command must
    write exactly one JSON object per line with field `output` to --out,
    aligned with the input order, and exit 0.";

const STATE_DIR: &str = "external";

/// Handle to an externally trained model: the command to invoke and the
/// directory holding the adapter's state.
pub struct ExternalModel {
    command: Vec<String>,
    model_dir: PathBuf,
    /// Keeps a just-trained model's staging directory alive until saved.
    _scratch: Option<tempfile::TempDir>,
}

#[derive(Serialize)]
struct SourceLine<'a> {
    source: &'a str,
}

#[derive(Deserialize)]
struct OutputLine {
    output: String,
}

fn split_command(config: &BackendConfig) -> Result<Vec<String>> {
    let raw = config
        .external_cmd
        .as_deref()
        .unwrap_or("")
        .trim()
        .to_string();
    if raw.is_empty() {
        return Err(Error::Config(format!(
            "model '{}' needs the external adapter; set external_cmd to the adapter command",
            config.model_id
        )));
    }
    Ok(raw.split_whitespace().map(str::to_string).collect())
}

fn run(argv: &[String], args: &[&str]) -> Result<()> {
    let output = Command::new(&argv[0])
        .args(&argv[1..])
        .args(args)
        .output()
        .map_err(|e| Error::External(format!("failed to spawn '{}': {e}", argv[0])))?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        let tail: String = stderr.lines().rev().take(5).collect::<Vec<_>>().join(" | ");
        return Err(Error::External(format!(
            "adapter '{} {}' exited with {}: {tail}",
            argv[0],
            args.join(" "),
            output.status
        )));
    }
    Ok(())
}

fn write_examples(path: &Path, examples: &[TaskExample]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })?;
    let mut writer = std::io::BufWriter::new(file);
    for example in examples {
        let line = serde_json::to_string(example)?;
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

fn copy_tree(from: &Path, to: &Path) -> Result<()> {
    std::fs::create_dir_all(to).map_err(|source| Error::Write {
        path: to.to_path_buf(),
        source,
    })?;
    let entries = std::fs::read_dir(from).map_err(|source| Error::Read {
        path: from.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| Error::Read {
            path: from.to_path_buf(),
            source,
        })?;
        let target = to.join(entry.file_name());
        let path = entry.path();
        if path.is_dir() {
            copy_tree(&path, &target)?;
        } else {
            std::fs::copy(&path, &target).map_err(|source| Error::Write {
                path: target.clone(),
                source,
            })?;
        }
    }
    Ok(())
}

impl ExternalModel {
    pub fn load(dir: &Path, config: &BackendConfig) -> Result<Self> {
        let model_dir = dir.join(STATE_DIR);
        if !model_dir.is_dir() {
            return Err(Error::Input(format!(
                "external model state missing at {}",
                model_dir.display()
            )));
        }
        Ok(Self {
            command: split_command(config)?,
            model_dir,
            _scratch: None,
        })
    }
}

impl Seq2SeqModel for ExternalModel {
    fn kind(&self) -> &'static str {
        "external"
    }

    fn generate(&self, sources: &[String]) -> Result<Vec<String>> {
        if sources.is_empty() {
            return Ok(Vec::new());
        }
        let work = tempfile::tempdir()
            .map_err(|e| Error::External(format!("cannot create scratch directory: {e}")))?;
        let in_path = work.path().join("sources.jsonl");
        let out_path = work.path().join("outputs.jsonl");
        {
            let file = std::fs::File::create(&in_path).map_err(|source| Error::Write {
                path: in_path.clone(),
                source,
            })?;
            let mut writer = std::io::BufWriter::new(file);
            for source in sources {
                let line = serde_json::to_string(&SourceLine { source })?;
                writeln!(writer, "{line}").map_err(|source| Error::Write {
                    path: in_path.clone(),
                    source,
                })?;
            }
        }
        run(
            &self.command,
            &[
                "generate",
                "--model-dir",
                &self.model_dir.to_string_lossy(),
                "--in",
                &in_path.to_string_lossy(),
                "--out",
                &out_path.to_string_lossy(),
            ],
        )?;
        let raw = std::fs::read_to_string(&out_path).map_err(|source| Error::Read {
            path: out_path,
            source,
        })?;
        let mut outputs = Vec::with_capacity(sources.len());
        for line in raw.lines().filter(|l| !l.trim().is_empty()) {
            let parsed: OutputLine = serde_json::from_str(line).map_err(|e| {
                Error::External(format!("adapter emitted malformed output line: {e}"))
            })?;
            outputs.push(parsed.output);
        }
        if outputs.len() != sources.len() {
            return Err(Error::External(format!(
                "adapter returned {} outputs for {} sources",
                outputs.len(),
                sources.len()
            )));
        }
        Ok(outputs)
    }

    fn memory_proxy(&self) -> f64 {
        // One adapter instance per model; strategies compare model counts.
        1.0
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let target = dir.join(STATE_DIR);
        if self.model_dir == target {
            return Ok(());
        }
        copy_tree(&self.model_dir, &target)
    }
}

/// Stages the corpus and config, invokes the adapter's `train` mode into a
/// scratch directory, and wraps the result. The scratch state is persisted
/// by [`TrainedModel::save`].
pub(super) fn train(
    examples: &[TaskExample],
    config: &BackendConfig,
    val_examples: &[TaskExample],
    fingerprint: String,
) -> Result<TrainedModel> {
    let command = split_command(config)?;
    let scratch = tempfile::tempdir()
        .map_err(|e| Error::External(format!("cannot create scratch directory: {e}")))?;
    let data_dir = scratch.path().join("data");
    let model_dir = scratch.path().join("model");
    for dir in [&data_dir, &model_dir] {
        std::fs::create_dir_all(dir).map_err(|source| Error::Write {
            path: dir.clone(),
            source,
        })?;
    }
    write_examples(&data_dir.join("train.jsonl"), examples)?;
    write_examples(&data_dir.join("val.jsonl"), val_examples)?;
    let config_json = serde_json::to_string_pretty(config)?;
    let config_path = data_dir.join("config.json");
    std::fs::write(&config_path, config_json.as_bytes()).map_err(|source| Error::Write {
        path: config_path,
        source,
    })?;
    run(
        &command,
        &[
            "train",
            "--data",
            &data_dir.to_string_lossy(),
            "--model-dir",
            &model_dir.to_string_lossy(),
        ],
    )?;
    let report = TrainReport {
        epochs_run: config.epochs,
        early_stopped: false,
        truncated_sources: 0,
        final_val_loss: None,
    };
    let model = ExternalModel {
        command,
        model_dir,
        _scratch: Some(scratch),
    };
    Ok(TrainedModel::assemble(
        config.clone(),
        fingerprint,
        report,
        Box::new(model),
    ))
}
