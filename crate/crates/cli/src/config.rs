//! Pipeline configuration file and command-line overrides.

use std::path::{Path, PathBuf};

use sapa_core::simgraph::DEFAULT_TAU;
use sapa_core::{Mode, SelectionRule, SyntheticSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed: data generation, clustering, initialisation and mining
    /// all derive from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Existing embedding file; when absent the pipeline generates one into
    /// `out_dir`.
    pub dataset: Option<PathBuf>,
    pub source_corpus: String,
    pub target_corpus: String,
    pub graph: GraphSection,
    pub anchors: AnchorSection,
    pub ablation: AblationSection,
    pub transfer: TransferSection,
    pub synthetic: SyntheticSpec,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub tau: f64,
    pub unweighted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhonemeSet {
    Vowels,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorSection {
    pub rule: SelectionRule,
    pub phonemes: PhonemeSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    /// Runs per mode; run `i` uses seed `seed + i`.
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    pub n_random_seeds: usize,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            tau: DEFAULT_TAU,
            unweighted: false,
        }
    }
}

impl Default for AnchorSection {
    fn default() -> Self {
        AnchorSection {
            rule: SelectionRule::default(),
            phonemes: PhonemeSet::Vowels,
        }
    }
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection { runs: 5 }
    }
}

impl Default for TransferSection {
    fn default() -> Self {
        TransferSection { n_random_seeds: 10 }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out_dir: PathBuf::from("sapa-out"),
            dataset: None,
            source_corpus: "src".into(),
            target_corpus: "tgt".into(),
            graph: GraphSection::default(),
            anchors: AnchorSection::default(),
            ablation: AblationSection::default(),
            transfer: TransferSection::default(),
            synthetic: SyntheticSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Values given on the command line; each replaces the config entry.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tau: Option<f64>,
    pub mode: Option<Mode>,
    pub out_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::Missing(path.to_path_buf())
            } else {
                CliError::Io(format!("{}: {e}", path.display()))
            }
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Applies overrides, pushes the master seed and corpus names into the
    /// nested sections, and validates the result.
    pub fn resolve(mut self, overrides: &Overrides) -> Result<Self, CliError> {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(tau) = overrides.tau {
            self.graph.tau = tau;
        }
        if let Some(mode) = overrides.mode {
            self.train.mode = mode;
        }
        if let Some(dir) = &overrides.out_dir {
            self.out_dir = dir.clone();
        }
        self.synthetic.seed = self.seed;
        self.train.seed = self.seed;
        self.train.source_corpus = self.source_corpus.clone();
        self.train.target_corpus = self.target_corpus.clone();
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.graph.tau.is_finite() && (-1.0..=1.0).contains(&self.graph.tau)) {
            return Err(CliError::Config(format!("tau must lie in [-1, 1], got {}", self.graph.tau)));
        }
        if self.source_corpus == self.target_corpus {
            return Err(CliError::Config("source and target corpus must differ".into()));
        }
        if self.ablation.runs == 0 {
            return Err(CliError::Config("ablation.runs must be positive".into()));
        }
        if self.transfer.n_random_seeds == 0 {
            return Err(CliError::Config("transfer.n_random_seeds must be positive".into()));
        }
        match self.anchors.rule {
            SelectionRule::TopK { k: 0 } => {
                return Err(CliError::Config("anchors.rule top_k needs k >= 1".into()))
            }
            SelectionRule::Threshold { theta } if !theta.is_finite() => {
                return Err(CliError::Config("anchors.rule threshold must be finite".into()))
            }
            _ => {}
        }
        if self.dataset.is_none() {
            self.synthetic.validate()?;
            for corpus in [&self.source_corpus, &self.target_corpus] {
                if !self.synthetic.corpora.contains(corpus) {
                    return Err(CliError::Config(format!(
                        "corpus {corpus} is not generated by the synthetic section"
                    )));
                }
            }
        }
        self.train.validate()?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset
            .clone()
            .unwrap_or_else(|| self.out_dir.join("dataset.jsonl"))
    }
}
