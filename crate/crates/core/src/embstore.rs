//! Embedding records, the JSON Lines dataset container and the synthetic
//! corpus generator.
//!
//! A dataset file is UTF-8 text. The first line is the [`DatasetManifest`],
//! every following line is one [`EmbeddingRecord`]. Floats are written with
//! shortest round-trip formatting, so `read_dataset(write_dataset(x)) == x`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four emotion categories, in class-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Neutral,
    Happiness,
    Anger,
    Sadness,
}

/// Number of emotion classes.
pub const N_EMOTIONS: usize = 4;

impl EmotionLabel {
    pub const ALL: [EmotionLabel; N_EMOTIONS] = [
        EmotionLabel::Neutral,
        EmotionLabel::Happiness,
        EmotionLabel::Anger,
        EmotionLabel::Sadness,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Happiness => "happiness",
            EmotionLabel::Anger => "anger",
            EmotionLabel::Sadness => "sadness",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Schema(format!("unknown emotion {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Speaker,
    Content,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// One speaker-style or phonetic-content embedding with its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub record_id: String,
    pub corpus_id: String,
    pub speaker_id: String,
    pub utterance_id: String,
    pub emotion: EmotionLabel,
    pub kind: RecordKind,
    pub phoneme: Option<String>,
    pub vector: Vec<f64>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountEntry {
    pub corpus_id: String,
    pub emotion: EmotionLabel,
    pub split: Split,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub d_s: usize,
    pub d_c: usize,
    pub corpora: Vec<String>,
    pub phoneme_inventory: Vec<String>,
    /// Alias → canonical symbol, applied to record phonemes at ingestion
    /// (for example `a` → `A` merges the two open vowels into one class).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub phoneme_equivalence: BTreeMap<String, String>,
    pub counts: Vec<CountEntry>,
    /// Free-form origin tags such as a config hash.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

impl DatasetManifest {
    /// Builds a manifest whose counts and corpus list are derived from `records`.
    pub fn from_records(
        d_s: usize,
        d_c: usize,
        phoneme_inventory: Vec<String>,
        records: &[EmbeddingRecord],
    ) -> Self {
        let mut corpora = Vec::new();
        let mut seen = HashSet::new();
        for r in records {
            if seen.insert(r.corpus_id.as_str()) {
                corpora.push(r.corpus_id.clone());
            }
        }
        DatasetManifest {
            d_s,
            d_c,
            corpora,
            phoneme_inventory,
            phoneme_equivalence: BTreeMap::new(),
            counts: count_records(records),
            provenance: BTreeMap::new(),
        }
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().map(|c| c.count).sum()
    }

    pub fn dim(&self, kind: RecordKind) -> usize {
        match kind {
            RecordKind::Speaker => self.d_s,
            RecordKind::Content => self.d_c,
        }
    }

    fn canonical_phoneme<'a>(&'a self, symbol: &'a str) -> &'a str {
        self.phoneme_equivalence
            .get(symbol)
            .map(String::as_str)
            .unwrap_or(symbol)
    }
}

/// Counts per (corpus, emotion, split), in sorted key order.
pub fn count_records(records: &[EmbeddingRecord]) -> Vec<CountEntry> {
    let mut counts: BTreeMap<(&str, EmotionLabel, Split), usize> = BTreeMap::new();
    for r in records {
        *counts
            .entry((r.corpus_id.as_str(), r.emotion, r.split))
            .or_default() += 1;
    }
    counts
        .into_iter()
        .map(|((corpus, emotion, split), count)| CountEntry {
            corpus_id: corpus.to_string(),
            emotion,
            split,
            count,
        })
        .collect()
}

/// A manifest together with its records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<EmbeddingRecord>,
}

impl Dataset {
    /// Checks every record against the manifest.
    pub fn validate(&self) -> Result<()> {
        let inventory: HashSet<&str> = self
            .manifest
            .phoneme_inventory
            .iter()
            .map(String::as_str)
            .collect();
        let mut ids = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            validate_record(&self.manifest, &inventory, r)?;
            if !ids.insert(r.record_id.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate record_id {}",
                    r.record_id
                )));
            }
        }
        if count_records(&self.records) != self.manifest.counts {
            return Err(Error::Schema(format!(
                "manifest counts (total {}) do not match the {} records",
                self.manifest.total_count(),
                self.records.len()
            )));
        }
        Ok(())
    }
}

fn validate_record(
    manifest: &DatasetManifest,
    inventory: &HashSet<&str>,
    r: &EmbeddingRecord,
) -> Result<()> {
    let expected = manifest.dim(r.kind);
    if r.vector.len() != expected {
        return Err(Error::Schema(format!(
            "record {}: vector length {} does not match manifest dimension {}",
            r.record_id,
            r.vector.len(),
            expected
        )));
    }
    if let Some(i) = r.vector.iter().position(|v| !v.is_finite()) {
        return Err(Error::Schema(format!(
            "record {}: non-finite entry at index {i}",
            r.record_id
        )));
    }
    match (r.kind, &r.phoneme) {
        (RecordKind::Content, None) => Err(Error::Schema(format!(
            "record {}: content record without phoneme",
            r.record_id
        ))),
        (RecordKind::Speaker, Some(_)) => Err(Error::Schema(format!(
            "record {}: speaker record carries a phoneme",
            r.record_id
        ))),
        (RecordKind::Content, Some(p)) if !inventory.contains(p.as_str()) => Err(Error::Schema(
            format!("record {}: unknown phoneme {p:?}", r.record_id),
        )),
        _ => Ok(()),
    }
}

/// Reads and validates a dataset file.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file))
}

/// Parses a dataset from any reader. Phoneme aliases declared in the manifest
/// are mapped to their canonical symbol before validation.
pub fn parse_dataset<R: Read>(reader: BufReader<R>) -> Result<Dataset> {
    let mut lines = reader.lines().enumerate();
    let manifest: DatasetManifest = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?;
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: 1,
                message: format!("manifest: {e}"),
            })?
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing manifest".into(),
            })
        }
    };
    if manifest.d_s == 0 || manifest.d_c == 0 {
        return Err(Error::Schema("manifest dimensions must be positive".into()));
    }

    let mut records = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| classify_record_error(lineno, e))?;
        if let Some(p) = record.phoneme.take() {
            record.phoneme = Some(manifest.canonical_phoneme(&p).to_string());
        }
        records.push(record);
    }
    let dataset = Dataset { manifest, records };
    dataset.validate()?;
    Ok(dataset)
}

fn classify_record_error(line: usize, e: serde_json::Error) -> Error {
    // serde reports unknown enum variants as data errors; surface those as
    // schema violations and keep syntax problems as parse errors.
    if e.is_data() {
        Error::Schema(format!("line {line}: {e}"))
    } else {
        Error::Parse {
            line,
            message: e.to_string(),
        }
    }
}

/// Writes a dataset to `path` and returns the path.
pub fn write_dataset(
    path: impl AsRef<Path>,
    manifest: &DatasetManifest,
    records: &[EmbeddingRecord],
) -> Result<PathBuf> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset_to(&mut w, manifest, records).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn write_dataset_to<W: Write>(
    w: &mut W,
    manifest: &DatasetManifest,
    records: &[EmbeddingRecord],
) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, manifest)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// The six vowel classes used for anchor search by default.
pub fn default_vowels() -> Vec<String> {
    ["i", "E", "@", "A", "O", "u"]
        .into_iter()
        .map(String::from)
        .collect()
}

/// Parameters of the synthetic two-corpus generator.
///
/// Speaker-kind vectors live around per-(emotion, style cluster) centroids
/// shared by every corpus. Content-kind vectors live around per-(phoneme,
/// emotion) centroids mixed between a cross-corpus component and a
/// corpus-specific one; the mixing weight is the gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub corpora: Vec<String>,
    pub speakers_per_corpus: usize,
    /// Utterances per (speaker, emotion).
    pub utterances_per_speaker: usize,
    pub segments_per_utterance: usize,
    pub n_style_clusters: usize,
    /// Norm of the per-speaker offset from its style centroid.
    pub cluster_spread: f64,
    /// Norm of the per-utterance noise on speaker vectors.
    pub utterance_noise: f64,
    /// Norm of the per-segment noise on content vectors.
    pub segment_noise: f64,
    pub phoneme_inventory: Vec<String>,
    pub anchored_phonemes: BTreeMap<EmotionLabel, Vec<String>>,
    pub cross_corpus_anchor_gap: f64,
    pub non_anchor_gap: f64,
    pub emotion_signal_strength: f64,
    /// Weight of the emotion direction inside speaker style centroids.
    pub speaker_emotion_strength: f64,
    /// Norm of a per-corpus offset added to every speaker vector of that
    /// corpus (channel or language effect in the speaker space).
    pub speaker_corpus_shift: f64,
    /// Emotions whose speaker vectors carry planted style clusters. Other
    /// emotions get an unstructured per-speaker voice vector.
    pub styled_emotions: Vec<EmotionLabel>,
    pub d_s: usize,
    pub d_c: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let anchored = [
            (EmotionLabel::Neutral, vec!["E", "@", "A"]),
            (EmotionLabel::Happiness, vec!["i", "A"]),
            (EmotionLabel::Anger, vec!["A", "i", "u"]),
            (EmotionLabel::Sadness, vec!["E", "@", "O"]),
        ]
        .into_iter()
        .map(|(e, ps)| (e, ps.into_iter().map(String::from).collect()))
        .collect();
        let mut inventory = default_vowels();
        inventory.extend(["p", "t", "k", "s", "n", "m"].map(String::from));
        SyntheticSpec {
            seed: 1,
            corpora: vec!["src".into(), "tgt".into()],
            speakers_per_corpus: 12,
            utterances_per_speaker: 10,
            segments_per_utterance: 6,
            n_style_clusters: 3,
            cluster_spread: 0.05,
            utterance_noise: 0.3,
            segment_noise: 0.3,
            phoneme_inventory: inventory,
            anchored_phonemes: anchored,
            cross_corpus_anchor_gap: 0.0,
            non_anchor_gap: 1.0,
            emotion_signal_strength: 0.5,
            speaker_emotion_strength: 0.5,
            speaker_corpus_shift: 0.0,
            styled_emotions: EmotionLabel::ALL.to_vec(),
            d_s: 64,
            d_c: 64,
            train_fraction: 0.6,
            validation_fraction: 0.2,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("speakers_per_corpus", self.speakers_per_corpus),
            ("utterances_per_speaker", self.utterances_per_speaker),
            ("segments_per_utterance", self.segments_per_utterance),
            ("n_style_clusters", self.n_style_clusters),
            ("d_s", self.d_s),
            ("d_c", self.d_c),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.corpora.is_empty() {
            return Err(Error::Config("at least one corpus is required".into()));
        }
        if self.phoneme_inventory.is_empty() {
            return Err(Error::Config("phoneme inventory is empty".into()));
        }
        for (name, g) in [
            ("cross_corpus_anchor_gap", self.cross_corpus_anchor_gap),
            ("non_anchor_gap", self.non_anchor_gap),
        ] {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {g}")));
            }
        }
        for (name, v) in [
            ("cluster_spread", self.cluster_spread),
            ("utterance_noise", self.utterance_noise),
            ("segment_noise", self.segment_noise),
            ("emotion_signal_strength", self.emotion_signal_strength),
            ("speaker_emotion_strength", self.speaker_emotion_strength),
            ("speaker_corpus_shift", self.speaker_corpus_shift),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        let fractions_ok = self.train_fraction > 0.0
            && self.validation_fraction >= 0.0
            && self.train_fraction + self.validation_fraction <= 1.0;
        if !fractions_ok {
            return Err(Error::Config("invalid split fractions".into()));
        }
        let inventory: HashSet<&str> = self.phoneme_inventory.iter().map(String::as_str).collect();
        for (e, ps) in &self.anchored_phonemes {
            if let Some(p) = ps.iter().find(|p| !inventory.contains(p.as_str())) {
                return Err(Error::Config(format!(
                    "anchored phoneme {p:?} for {e} is not in the inventory"
                )));
            }
        }
        Ok(())
    }

    fn split_of(&self, utterance_index: usize) -> Split {
        let pos = (utterance_index as f64 + 0.5) / self.utterances_per_speaker as f64;
        if pos < self.train_fraction {
            Split::Train
        } else if pos < self.train_fraction + self.validation_fraction {
            Split::Validation
        } else {
            Split::Test
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Isotropic Gaussian noise whose expected squared norm is `scale²`.
fn add_noise(rng: &mut ChaCha8Rng, v: &mut [f64], scale: f64) {
    if scale == 0.0 {
        return;
    }
    let per_dim = scale / (v.len() as f64).sqrt();
    for x in v.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x += per_dim * z;
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + yi).collect()
}

fn mix(gap: f64, shared: &[f64], specific: &[f64]) -> Vec<f64> {
    let (a, b) = ((1.0 - gap).sqrt(), gap.sqrt());
    shared
        .iter()
        .zip(specific)
        .map(|(s, t)| a * s + b * t)
        .collect()
}

/// Planted ground truth behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlantedTruth {
    /// Style cluster of each (corpus, speaker) under each styled emotion.
    pub style_cluster: BTreeMap<EmotionLabel, BTreeMap<(String, String), usize>>,
}

/// Generates a dataset with planted speaker-style clusters and phoneme anchors.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    generate_synthetic_with_truth(spec).map(|(d, _)| d)
}

pub fn generate_synthetic_with_truth(spec: &SyntheticSpec) -> Result<(Dataset, PlantedTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.n_style_clusters;
    let n_phonemes = spec.phoneme_inventory.len();
    let n_corpora = spec.corpora.len();

    // Style prototypes form a pool of k + 1 vectors; emotion e uses k of them,
    // so a prototype alone narrows the emotion down without fixing it.
    let prototypes: Vec<Vec<f64>> = (0..=k).map(|_| unit_vector(&mut rng, spec.d_s)).collect();
    let speaker_emotion_dirs: Vec<Vec<f64>> = (0..N_EMOTIONS)
        .map(|_| unit_vector(&mut rng, spec.d_s))
        .collect();
    let style_centroid = |e: EmotionLabel, cluster: usize| -> Vec<f64> {
        let proto = &prototypes[(cluster + e.index()) % (k + 1)];
        normalized(axpy(
            spec.speaker_emotion_strength,
            &speaker_emotion_dirs[e.index()],
            proto,
        ))
    };

    let phoneme_shared: Vec<Vec<f64>> = (0..n_phonemes)
        .map(|_| unit_vector(&mut rng, spec.d_c))
        .collect();
    let phoneme_specific: Vec<Vec<Vec<f64>>> = (0..n_corpora)
        .map(|_| {
            (0..n_phonemes)
                .map(|_| unit_vector(&mut rng, spec.d_c))
                .collect()
        })
        .collect();
    let emotion_shared: Vec<Vec<f64>> = (0..N_EMOTIONS)
        .map(|_| unit_vector(&mut rng, spec.d_c))
        .collect();
    let emotion_specific: Vec<Vec<Vec<f64>>> = (0..n_corpora)
        .map(|_| {
            (0..N_EMOTIONS)
                .map(|_| unit_vector(&mut rng, spec.d_c))
                .collect()
        })
        .collect();

    let strength = spec.emotion_signal_strength;
    // centroid[corpus][phoneme][emotion]
    let content_centroids: Vec<Vec<Vec<Vec<f64>>>> = (0..n_corpora)
        .map(|c| {
            (0..n_phonemes)
                .map(|p| {
                    EmotionLabel::ALL
                        .iter()
                        .map(|&e| {
                            let anchored = spec
                                .anchored_phonemes
                                .get(&e)
                                .is_some_and(|ps| ps.contains(&spec.phoneme_inventory[p]));
                            let gap = if anchored {
                                spec.cross_corpus_anchor_gap
                            } else {
                                spec.non_anchor_gap
                            };
                            let shared =
                                axpy(strength, &emotion_shared[e.index()], &phoneme_shared[p]);
                            let specific = axpy(
                                strength,
                                &emotion_specific[c][e.index()],
                                &phoneme_specific[c][p],
                            );
                            mix(gap, &shared, &specific)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    // Speakers of every corpus share one cluster assignment per emotion so
    // clusters mix corpora.
    let speakers: Vec<(usize, String)> = (0..n_corpora)
        .flat_map(|c| (0..spec.speakers_per_corpus).map(move |s| (c, format!("s{s:02}"))))
        .collect();
    let mut truth = PlantedTruth::default();
    let mut assignment: BTreeMap<EmotionLabel, Vec<usize>> = BTreeMap::new();
    for e in EmotionLabel::ALL {
        if !spec.styled_emotions.contains(&e) {
            continue;
        }
        let mut order: Vec<usize> = (0..speakers.len()).collect();
        order.shuffle(&mut rng);
        let mut clusters = vec![0; speakers.len()];
        for (pos, &idx) in order.iter().enumerate() {
            clusters[idx] = pos % k;
        }
        let map = truth.style_cluster.entry(e).or_default();
        for (idx, (c, s)) in speakers.iter().enumerate() {
            map.insert((spec.corpora[*c].clone(), s.clone()), clusters[idx]);
        }
        assignment.insert(e, clusters);
    }
    let voices: Vec<Vec<f64>> = speakers
        .iter()
        .map(|_| unit_vector(&mut rng, spec.d_s))
        .collect();
    let corpus_shift: Vec<Vec<f64>> = (0..n_corpora)
        .map(|_| {
            let mut v = unit_vector(&mut rng, spec.d_s);
            v.iter_mut().for_each(|x| *x *= spec.speaker_corpus_shift);
            v
        })
        .collect();

    let mut records = Vec::new();
    for (idx, (c, speaker)) in speakers.iter().enumerate() {
        let corpus = &spec.corpora[*c];
        for e in EmotionLabel::ALL {
            let mut style_mean = match assignment.get(&e) {
                Some(clusters) => style_centroid(e, clusters[idx]),
                None => normalized(axpy(
                    spec.speaker_emotion_strength,
                    &speaker_emotion_dirs[e.index()],
                    &voices[idx],
                )),
            };
            add_noise(&mut rng, &mut style_mean, spec.cluster_spread);
            for (m, s) in style_mean.iter_mut().zip(&corpus_shift[*c]) {
                *m += s;
            }

            for u in 0..spec.utterances_per_speaker {
                let split = spec.split_of(u);
                let utterance_id = format!("{corpus}-{speaker}-{e}-{u:03}");
                let mut spk = style_mean.clone();
                add_noise(&mut rng, &mut spk, spec.utterance_noise);
                records.push(EmbeddingRecord {
                    record_id: format!("{utterance_id}-spk"),
                    corpus_id: corpus.clone(),
                    speaker_id: speaker.clone(),
                    utterance_id: utterance_id.clone(),
                    emotion: e,
                    kind: RecordKind::Speaker,
                    phoneme: None,
                    vector: spk,
                    split,
                });
                for j in 0..spec.segments_per_utterance {
                    let p = rng.random_range(0..n_phonemes);
                    let mut v = content_centroids[*c][p][e.index()].clone();
                    add_noise(&mut rng, &mut v, spec.segment_noise);
                    records.push(EmbeddingRecord {
                        record_id: format!("{utterance_id}-c{j:02}"),
                        corpus_id: corpus.clone(),
                        speaker_id: speaker.clone(),
                        utterance_id: utterance_id.clone(),
                        emotion: e,
                        kind: RecordKind::Content,
                        phoneme: Some(spec.phoneme_inventory[p].clone()),
                        vector: v,
                        split,
                    });
                }
            }
        }
    }

    let manifest = DatasetManifest {
        d_s: spec.d_s,
        d_c: spec.d_c,
        corpora: spec.corpora.clone(),
        phoneme_inventory: spec.phoneme_inventory.clone(),
        phoneme_equivalence: BTreeMap::new(),
        counts: count_records(&records),
        provenance: BTreeMap::new(),
    };
    Ok((Dataset { manifest, records }, truth))
}

/// Distinct phoneme symbols occurring in `records`.
pub fn phonemes_in(records: &[EmbeddingRecord]) -> BTreeSet<&str> {
    records.iter().filter_map(|r| r.phoneme.as_deref()).collect()
}
