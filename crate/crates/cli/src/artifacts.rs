//! Output layout and stamped readers/writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::CliError;

/// Resolved configuration plus its hash, shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub hash: String,
}

impl Context {
    pub fn new(config: PipelineConfig) -> Self {
        let hash = config.hash();
        Context { config, hash }
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.config.out_dir.join(relative)
    }

    pub fn stamp<T>(&self, data: T) -> Stamped<T> {
        Stamped {
            config_hash: self.hash.clone(),
            seed: self.config.seed,
            data,
        }
    }

    /// Comment line naming the config hash and seed.
    pub fn header(&self, marker: &str) -> String {
        format!("{marker} config_hash={} seed={}\n", self.hash, self.config.seed)
    }

    pub fn write_json<T: Serialize>(&self, relative: &str, data: &T) -> Result<PathBuf, CliError> {
        let path = self.path(relative);
        let mut text = serde_json::to_string_pretty(&self.stamp(data)).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        write_file(&path, &text)?;
        Ok(path)
    }

    /// Writes `body` behind a stamped comment line using `marker`.
    pub fn write_text(&self, relative: &str, marker: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.path(relative);
        write_file(&path, &format!("{}{body}", self.header(marker)))?;
        Ok(path)
    }

    /// Reads a stamped JSON artifact; a stamp from another configuration is
    /// reported but accepted.
    pub fn read_json<T: DeserializeOwned>(&self, relative: &str) -> Result<T, CliError> {
        let path = self.path(relative);
        let text = read_file(&path)?;
        let stamped: Stamped<T> = serde_json::from_str(&text)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        if stamped.config_hash != self.hash {
            log::warn!(
                "{} was produced by config {}, current config is {}",
                path.display(),
                stamped.config_hash,
                self.hash
            );
        }
        Ok(stamped.data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    pub seed: u64,
    pub data: T,
}

pub fn require(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Missing(path.to_path_buf()))
    }
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    require(path)?;
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub const DATASET: &str = "dataset.jsonl";
pub const PARTITIONS: &str = "graph/partitions.json";
pub const MODULARITY: &str = "graph/modularity.json";
pub const SIMILARITY: &str = "anchors/similarity.csv";
pub const ANCHORS: &str = "anchors/anchors.json";
pub const MODEL: &str = "train/model.json";
pub const TRAIN_REPORT: &str = "train/report.json";
pub const METRICS: &str = "eval/metrics.json";
pub const PREDICTIONS: &str = "eval/predictions.csv";
pub const ABLATION: &str = "ablation/results.json";
pub const ABLATION_TABLE: &str = "ablation/table.txt";
pub const TRANSFER: &str = "transfer/reports.json";
pub const TRANSFER_TABLE: &str = "transfer/table.txt";

/// JSON files holding metrics, compared across runs for reproducibility.
pub const METRIC_FILES: [&str; 5] = [MODULARITY, TRAIN_REPORT, METRICS, ABLATION, TRANSFER];
