//! Mini-batch AdamW training with per-epoch triplet re-mining and early
//! stopping on source validation UAR.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::embstore::{EmbeddingRecord, EmotionLabel, Split};
use crate::error::{Error, Result};
use crate::evalkit::{predict, uar, ConfusionMatrix};
use crate::model::{backward, Batch, InputMode, ModelConfig, ModelParams, TripletInput};
use crate::simgraph::Partition;
use crate::triplets::{mine_phoneme_triplets, mine_speaker_triplets, MiningConfig, Triplet};
use crate::utterances::{assemble_utterances, LabeledUtterance, UtteranceFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "SAPA")]
    Sapa,
    #[serde(rename = "Only-S")]
    OnlyS,
    #[serde(rename = "Only-P")]
    OnlyP,
    #[serde(rename = "SAPA-Only-S")]
    SapaOnlyS,
    #[serde(rename = "SAPA-Only-P")]
    SapaOnlyP,
}

impl Mode {
    /// Ablation table order, full model last.
    pub const ALL: [Mode; 5] = [Mode::OnlyS, Mode::OnlyP, Mode::SapaOnlyS, Mode::SapaOnlyP, Mode::Sapa];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Sapa => "SAPA",
            Mode::OnlyS => "Only-S",
            Mode::OnlyP => "Only-P",
            Mode::SapaOnlyS => "SAPA-Only-S",
            Mode::SapaOnlyP => "SAPA-Only-P",
        }
    }

    /// Input gating and active anchoring losses.
    pub fn configure(self, model: &mut ModelConfig) {
        let (input, phoneme, speaker) = match self {
            Mode::Sapa => (InputMode::Fused, true, true),
            Mode::OnlyS => (InputMode::SpeakerOnly, false, false),
            Mode::OnlyP => (InputMode::ContentOnly, false, false),
            Mode::SapaOnlyS => (InputMode::Fused, false, true),
            Mode::SapaOnlyP => (InputMode::Fused, true, false),
        };
        model.input_mode = input;
        model.phoneme_anchoring = phoneme;
        model.speaker_anchoring = speaker;
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['_', ' '], "-");
        match key.as_str() {
            "sapa" => Ok(Mode::Sapa),
            "only-s" | "onlys" => Ok(Mode::OnlyS),
            "only-p" | "onlyp" => Ok(Mode::OnlyP),
            "sapa-only-s" | "sapaonlys" => Ok(Mode::SapaOnlyS),
            "sapa-only-p" | "sapaonlyp" => Ok(Mode::SapaOnlyP),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub mining: MiningConfig,
    pub mode: Mode,
    pub model: ModelConfig,
    pub source_corpus: String,
    pub target_corpus: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_epochs: 70,
            batch_size: 64,
            early_stop_patience: 7,
            seed: 0,
            mining: MiningConfig::default(),
            mode: Mode::Sapa,
            model: ModelConfig::default(),
            source_corpus: "src".into(),
            target_corpus: "tgt".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config(
                "max_epochs, batch_size and early_stop_patience must be positive".into(),
            ));
        }
        if self.source_corpus == self.target_corpus {
            return Err(Error::Config("source and target corpus must differ".into()));
        }
        self.model.validate()
    }

    /// Model configuration with this run's mode applied.
    pub fn effective_model(&self) -> ModelConfig {
        let mut m = self.model.clone();
        self.mode.configure(&mut m);
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ser: f64,
    pub phoneme: f64,
    pub speaker: f64,
    pub total: f64,
    pub validation_uar: f64,
    pub phoneme_triplets: usize,
    pub speaker_triplets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
    /// non-finite loss or activations; the best earlier parameters are kept
    Diverged { epoch: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: Mode,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based; 0 when no epoch completed
    pub best_epoch: usize,
    pub best_validation_uar: f64,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn diverged(&self) -> bool {
        matches!(self.stop_reason, StopReason::Diverged { .. })
    }
}

/// Mixes a run seed with a stream tag and counter (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64, counter: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(counter.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const SHUFFLE_STREAM: u64 = 1;
const MINING_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    fn new(n: usize) -> Self {
        AdamW {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = cfg.learning_rate;
        let mut offset = 0;
        let g_tensors = grads.tensors();
        for ((_, p), (_, g)) in params.tensors_mut().into_iter().zip(g_tensors) {
            for (i, (w, &gi)) in p.iter_mut().zip(g.iter()).enumerate() {
                let k = offset + i;
                self.m[k] = b1 * self.m[k] + (1.0 - b1) * gi;
                self.v[k] = b2 * self.v[k] + (1.0 - b2) * gi * gi;
                let update = (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + cfg.adam_eps);
                *w -= lr * (update + cfg.weight_decay * *w);
            }
            offset += p.len();
        }
    }
}

fn triplet_inputs(triplets: &[Triplet], lookup: &HashMap<&str, &EmbeddingRecord>) -> Vec<TripletInput> {
    triplets
        .iter()
        .map(|t| TripletInput {
            anchor: lookup[t.anchor_id.as_str()].vector.clone(),
            positive: lookup[t.positive_id.as_str()].vector.clone(),
            negative: lookup[t.negative_id.as_str()].vector.clone(),
        })
        .collect()
}

fn chunk_for(list: &[TripletInput], batch: usize, n_batches: usize) -> Vec<TripletInput> {
    if list.is_empty() {
        return Vec::new();
    }
    let per = list.len().div_ceil(n_batches);
    let start = (batch * per).min(list.len());
    let end = (start + per).min(list.len());
    list[start..end].to_vec()
}

fn validation_uar(params: &ModelParams, validation: &[LabeledUtterance]) -> Result<f64> {
    let predicted = predict(params, validation)?;
    let cm = ConfusionMatrix::from_pairs(validation.iter().map(|u| u.emotion).zip(predicted));
    uar(&cm)
}

/// Trains on the source corpus train split; triplets are mined over the train
/// splits of both corpora. Returns the parameters of the best validation epoch.
pub fn train(
    records: &[EmbeddingRecord],
    cfg: &TrainConfig,
    anchors: &AnchorSet,
    partitions: &BTreeMap<EmotionLabel, Partition>,
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    let model_cfg = cfg.effective_model();
    let source = Some(cfg.source_corpus.as_str());
    let train_set = assemble_utterances(
        records,
        UtteranceFilter {
            corpus: source,
            split: Some(Split::Train),
        },
    )
    .utterances;
    let validation = assemble_utterances(
        records,
        UtteranceFilter {
            corpus: source,
            split: Some(Split::Validation),
        },
    )
    .utterances;
    if train_set.is_empty() {
        return Err(Error::Domain(format!(
            "corpus {} has no training utterances",
            cfg.source_corpus
        )));
    }
    if validation.is_empty() {
        return Err(Error::Domain(format!(
            "corpus {} has no validation utterances",
            cfg.source_corpus
        )));
    }
    let mining_records: Vec<EmbeddingRecord> = records
        .iter()
        .filter(|r| r.corpus_id == cfg.source_corpus || r.corpus_id == cfg.target_corpus)
        .cloned()
        .collect();
    let lookup: HashMap<&str, &EmbeddingRecord> = mining_records
        .iter()
        .map(|r| (r.record_id.as_str(), r))
        .collect();

    let mut params = ModelParams::init(&model_cfg, derive_seed(cfg.seed, INIT_STREAM, 0))?;
    let mut best = params.clone();
    let mut adam = AdamW::new(params.n_params());
    let mut report = TrainReport {
        mode: cfg.mode,
        seed: cfg.seed,
        epochs: Vec::new(),
        best_epoch: 0,
        best_validation_uar: f64::NEG_INFINITY,
        stop_reason: StopReason::MaxEpochs,
    };
    let n_batches = train_set.len().div_ceil(cfg.batch_size);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        let e = epoch as u64;
        let mining = MiningConfig {
            batches: n_batches,
            seed: derive_seed(cfg.seed, MINING_STREAM, e),
            ..cfg.mining.clone()
        };
        let phoneme = if model_cfg.phoneme_anchoring {
            triplet_inputs(
                &mine_phoneme_triplets(&mining_records, anchors, partitions, &mining).triplets,
                &lookup,
            )
        } else {
            Vec::new()
        };
        let speaker = if model_cfg.speaker_anchoring {
            triplet_inputs(&mine_speaker_triplets(&mining_records, partitions, &mining).triplets, &lookup)
        } else {
            Vec::new()
        };

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SHUFFLE_STREAM, e));
        order.shuffle(&mut rng);

        let mut sums = [0.0; 4];
        let mut failure = None;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch {
                utterances: idx.iter().map(|&i| train_set[i].input.clone()).collect(),
                labels: idx.iter().map(|&i| train_set[i].emotion.index()).collect(),
                phoneme_triplets: chunk_for(&phoneme, b, n_batches),
                speaker_triplets: chunk_for(&speaker, b, n_batches),
            };
            match backward(&params, &batch) {
                Ok(g) if g.loss.total.is_finite() => {
                    let l = g.loss;
                    for (s, v) in sums.iter_mut().zip([l.ser, l.phoneme, l.speaker, l.total]) {
                        *s += v;
                    }
                    adam.step(&mut params, &g.params, cfg);
                }
                Ok(g) => {
                    failure = Some(format!("non-finite total loss {}", g.loss.total));
                    break;
                }
                Err(err) => {
                    failure = Some(err.to_string());
                    break;
                }
            }
        }
        let uar_result = match failure {
            None if params.is_finite() => validation_uar(&params, &validation),
            None => Err(Error::Numeric {
                layer: "parameters".into(),
            }),
            Some(message) => Err(Error::Numeric { layer: message }),
        };
        let validation_uar = match uar_result {
            Ok(u) => u,
            Err(err) => {
                log::warn!("{} seed {}: diverged at epoch {epoch}: {err}", cfg.mode, cfg.seed);
                report.stop_reason = StopReason::Diverged {
                    epoch,
                    message: err.to_string(),
                };
                break;
            }
        };
        let n = n_batches as f64;
        report.epochs.push(EpochRecord {
            epoch,
            ser: sums[0] / n,
            phoneme: sums[1] / n,
            speaker: sums[2] / n,
            total: sums[3] / n,
            validation_uar,
            phoneme_triplets: phoneme.len(),
            speaker_triplets: speaker.len(),
        });
        log::debug!(
            "{} seed {} epoch {epoch}: total {:.4} val UAR {:.4}",
            cfg.mode,
            cfg.seed,
            sums[3] / n,
            validation_uar
        );
        if validation_uar > report.best_validation_uar {
            report.best_validation_uar = validation_uar;
            report.best_epoch = epoch;
            best = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                report.stop_reason = StopReason::EarlyStopped;
                break;
            }
        }
    }
    if report.best_epoch == 0 {
        report.best_validation_uar = 0.0;
    }
    Ok((best, report))
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub seed: u64,
    pub outcome: std::result::Result<(ModelParams, TrainReport), String>,
}

/// Every mode for every seed; runs execute in parallel and failures are kept
/// per run.
pub fn run_mode_suite(
    records: &[EmbeddingRecord],
    base: &TrainConfig,
    seeds: &[u64],
    anchors: &AnchorSet,
    partitions: &BTreeMap<EmotionLabel, Partition>,
) -> Result<BTreeMap<Mode, Vec<SuiteRun>>> {
    run_modes(records, base, &Mode::ALL, seeds, anchors, partitions)
}

pub fn run_modes(
    records: &[EmbeddingRecord],
    base: &TrainConfig,
    modes: &[Mode],
    seeds: &[u64],
    anchors: &AnchorSet,
    partitions: &BTreeMap<EmotionLabel, Partition>,
) -> Result<BTreeMap<Mode, Vec<SuiteRun>>> {
    if seeds.is_empty() {
        return Err(Error::Config("mode suite needs at least one seed".into()));
    }
    base.validate()?;
    let jobs: Vec<(Mode, u64)> = modes
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let results: Vec<(Mode, SuiteRun)> = jobs
        .par_iter()
        .map(|&(mode, seed)| {
            let cfg = TrainConfig {
                mode,
                seed,
                ..base.clone()
            };
            let outcome = train(records, &cfg, anchors, partitions).map_err(|e| e.to_string());
            (mode, SuiteRun { seed, outcome })
        })
        .collect();
    let mut out: BTreeMap<Mode, Vec<SuiteRun>> = BTreeMap::new();
    for (mode, run) in results {
        out.entry(mode).or_default().push(run);
    }
    Ok(out)
}
