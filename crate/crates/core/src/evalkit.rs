//! Recognition metrics, the cross-corpus protocol and speaker-group
//! transferability analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embstore::{EmbeddingRecord, EmotionLabel, Split, N_EMOTIONS};
use crate::error::{Error, Result};
use crate::model::{argmax, predict_logits, ModelParams};
use crate::simgraph::{NodeId, Partition};
use crate::utterances::{assemble_utterances, LabeledUtterance, UtteranceFilter};

/// Rows are true emotions, columns predictions, both in `EmotionLabel::ALL` order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_EMOTIONS]; N_EMOTIONS],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (EmotionLabel, EmotionLabel)>) -> Self {
        let mut cm = Self::new();
        for (t, p) in pairs {
            cm.record(t, p);
        }
        cm
    }

    pub fn record(&mut self, truth: EmotionLabel, predicted: EmotionLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn support(&self, emotion: EmotionLabel) -> u64 {
        self.counts[emotion.index()].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn recall(&self, emotion: EmotionLabel) -> Option<f64> {
        let support = self.support(emotion);
        (support > 0).then(|| self.counts[emotion.index()][emotion.index()] as f64 / support as f64)
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        let correct: u64 = (0..N_EMOTIONS).map(|i| self.counts[i][i]).sum();
        (total > 0).then(|| correct as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UarSummary {
    pub uar: f64,
    pub recalls: BTreeMap<EmotionLabel, f64>,
    /// classes without support, left out of the mean
    pub excluded: Vec<EmotionLabel>,
}

pub fn uar_detailed(cm: &ConfusionMatrix) -> Result<UarSummary> {
    let mut recalls = BTreeMap::new();
    let mut excluded = Vec::new();
    for e in EmotionLabel::ALL {
        match cm.recall(e) {
            Some(r) => {
                recalls.insert(e, r);
            }
            None => excluded.push(e),
        }
    }
    if recalls.is_empty() {
        return Err(Error::Domain("UAR undefined: confusion matrix is empty".into()));
    }
    if !excluded.is_empty() {
        log::warn!(
            "UAR excludes classes without support: {}",
            excluded.iter().map(|e| e.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    let uar = recalls.values().sum::<f64>() / recalls.len() as f64;
    Ok(UarSummary {
        uar,
        recalls,
        excluded,
    })
}

pub fn uar(cm: &ConfusionMatrix) -> Result<f64> {
    uar_detailed(cm).map(|s| s.uar)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub corpus_id: String,
    pub speaker_id: String,
    pub utterance_id: String,
    pub emotion: EmotionLabel,
    pub predicted: EmotionLabel,
}

impl Prediction {
    pub fn correct(&self) -> bool {
        self.emotion == self.predicted
    }

    pub fn node(&self) -> NodeId {
        NodeId::new(&self.corpus_id, &self.speaker_id)
    }
}

const PREDICT_CHUNK: usize = 64;

pub fn predict(params: &ModelParams, utterances: &[LabeledUtterance]) -> Result<Vec<EmotionLabel>> {
    let chunks: Vec<Result<Vec<EmotionLabel>>> = utterances
        .par_chunks(PREDICT_CHUNK)
        .map(|chunk| {
            let inputs: Vec<_> = chunk.iter().map(|u| u.input.clone()).collect();
            let logits = predict_logits(params, &inputs)?;
            Ok(logits
                .iter()
                .map(|z| EmotionLabel::from_index(argmax(z)).expect("four logits"))
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(utterances.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Fraction of utterances whose argmax matches the label.
pub fn accuracy(params: &ModelParams, utterances: &[LabeledUtterance]) -> Result<f64> {
    if utterances.is_empty() {
        return Err(Error::Domain("accuracy over zero utterances".into()));
    }
    let predicted = predict(params, utterances)?;
    let correct = predicted
        .iter()
        .zip(utterances)
        .filter(|(p, u)| **p == u.emotion)
        .count();
    Ok(correct as f64 / utterances.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub corpus_id: String,
    pub split: Split,
    pub confusion: ConfusionMatrix,
    pub uar: f64,
    pub recalls: BTreeMap<EmotionLabel, f64>,
    pub n_scored: usize,
    pub skipped: Vec<String>,
    pub predictions: Vec<Prediction>,
}

pub fn evaluate_split(
    params: &ModelParams,
    records: &[EmbeddingRecord],
    corpus: &str,
    split: Split,
) -> Result<Evaluation> {
    let assembly = assemble_utterances(
        records,
        UtteranceFilter {
            corpus: Some(corpus),
            split: Some(split),
        },
    );
    if !assembly.skipped.is_empty() {
        log::warn!(
            "{} {} utterances in {corpus} skipped for missing embeddings",
            assembly.skipped.len(),
            split_name(split)
        );
    }
    if assembly.utterances.is_empty() {
        return Err(Error::Domain(format!(
            "no scorable {} utterances in corpus {corpus}",
            split_name(split)
        )));
    }
    let predicted = predict(params, &assembly.utterances)?;
    let predictions: Vec<Prediction> = assembly
        .utterances
        .iter()
        .zip(&predicted)
        .map(|(u, &p)| Prediction {
            corpus_id: u.corpus_id.clone(),
            speaker_id: u.speaker_id.clone(),
            utterance_id: u.utterance_id.clone(),
            emotion: u.emotion,
            predicted: p,
        })
        .collect();
    let confusion = ConfusionMatrix::from_pairs(predictions.iter().map(|p| (p.emotion, p.predicted)));
    let summary = uar_detailed(&confusion)?;
    Ok(Evaluation {
        corpus_id: corpus.to_string(),
        split,
        confusion,
        uar: summary.uar,
        recalls: summary.recalls,
        n_scored: predictions.len(),
        skipped: assembly.skipped,
        predictions,
    })
}

/// Scores a source-trained model on the target corpus test split.
pub fn evaluate_cross(params: &ModelParams, records: &[EmbeddingRecord], target_corpus: &str) -> Result<Evaluation> {
    evaluate_split(params, records, target_corpus, Split::Test)
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Validation => "validation",
        Split::Test => "test",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    WithEmotion,
    WithoutEmotion,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    /// community index in the grouping's partition; for random groups, the
    /// emotion-specific community whose size was matched
    pub community: usize,
    pub n_speakers: usize,
    pub n_utterances: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionGroupResult {
    pub emotion: EmotionLabel,
    /// mean of per-group accuracies
    pub macro_accuracy: f64,
    /// pooled correctness over all grouped utterances
    pub micro_accuracy: f64,
    pub groups: Vec<GroupAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracyReport {
    pub grouping: Grouping,
    pub per_emotion: Vec<EmotionGroupResult>,
    pub random_seeds: usize,
    pub notices: Vec<String>,
}

impl GroupAccuracyReport {
    pub fn macro_for(&self, emotion: EmotionLabel) -> Option<f64> {
        self.per_emotion
            .iter()
            .find(|r| r.emotion == emotion)
            .map(|r| r.macro_accuracy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferOptions {
    pub n_random_seeds: usize,
    pub seed: u64,
}

impl Default for TransferOptions {
    fn default() -> Self {
        TransferOptions {
            n_random_seeds: 10,
            seed: 0,
        }
    }
}

/// Per community, the emotion-labelled target predictions of its speakers.
fn grouped<'p>(
    predictions: &'p [Prediction],
    partition: &Partition,
    emotion: EmotionLabel,
) -> (Vec<(usize, usize, Vec<&'p Prediction>)>, Vec<usize>) {
    let lookup = partition.lookup();
    let mut speakers: BTreeMap<usize, BTreeSet<NodeId>> = BTreeMap::new();
    let mut members: BTreeMap<usize, Vec<&Prediction>> = BTreeMap::new();
    for p in predictions {
        let Some(&c) = lookup.get(&p.node()) else {
            continue;
        };
        speakers.entry(c).or_default().insert(p.node());
        if p.emotion == emotion {
            members.entry(c).or_default().push(p);
        }
    }
    let mut groups = Vec::new();
    let mut empty = Vec::new();
    for c in 0..partition.n_communities {
        let n_speakers = speakers.get(&c).map_or(0, BTreeSet::len);
        match members.remove(&c) {
            Some(m) => groups.push((c, n_speakers, m)),
            None => empty.push(c),
        }
    }
    (groups, empty)
}

fn summarize(emotion: EmotionLabel, groups: Vec<GroupAccuracy>, correct: usize, total: usize) -> EmotionGroupResult {
    let macro_accuracy = groups.iter().map(|g| g.accuracy).sum::<f64>() / groups.len() as f64;
    EmotionGroupResult {
        emotion,
        macro_accuracy,
        micro_accuracy: correct as f64 / total as f64,
        groups,
    }
}

fn partition_report(
    grouping: Grouping,
    predictions: &[Prediction],
    partitions: &BTreeMap<EmotionLabel, &Partition>,
) -> GroupAccuracyReport {
    let mut per_emotion = Vec::new();
    let mut notices = Vec::new();
    for (&emotion, partition) in partitions {
        let (groups, empty) = grouped(predictions, partition, emotion);
        if !empty.is_empty() {
            notices.push(format!(
                "{emotion}: {} communities without test utterances excluded",
                empty.len()
            ));
        }
        if groups.is_empty() {
            notices.push(format!("{emotion}: no grouped test utterances"));
            continue;
        }
        let mut correct = 0;
        let mut total = 0;
        let stats = groups
            .iter()
            .map(|(c, n_speakers, members)| {
                let ok = members.iter().filter(|p| p.correct()).count();
                correct += ok;
                total += members.len();
                GroupAccuracy {
                    community: *c,
                    n_speakers: *n_speakers,
                    n_utterances: members.len(),
                    accuracy: ok as f64 / members.len() as f64,
                }
            })
            .collect();
        per_emotion.push(summarize(emotion, stats, correct, total));
    }
    GroupAccuracyReport {
        grouping,
        per_emotion,
        random_seeds: 0,
        notices,
    }
}

/// Random speaker groups matched in speaker count and utterance count to each
/// emotion-specific community, drawing from all target test utterances.
fn random_report(
    predictions: &[Prediction],
    reference: &GroupAccuracyReport,
    opts: TransferOptions,
) -> GroupAccuracyReport {
    let mut by_speaker: BTreeMap<NodeId, Vec<&Prediction>> = BTreeMap::new();
    for p in predictions {
        by_speaker.entry(p.node()).or_default().push(p);
    }
    let speakers: Vec<&NodeId> = by_speaker.keys().collect();
    let seeds = opts.n_random_seeds.max(1);
    let mut per_emotion = Vec::new();
    for result in &reference.per_emotion {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ ((result.emotion.index() as u64 + 1) << 32));
        let mut acc = vec![0.0; result.groups.len()];
        let mut sizes = vec![0usize; result.groups.len()];
        let mut micro = 0.0;
        for _ in 0..seeds {
            let mut correct = 0;
            let mut total = 0;
            for (gi, g) in result.groups.iter().enumerate() {
                let k = g.n_speakers.clamp(1, speakers.len());
                let chosen: Vec<&&NodeId> = speakers.choose_multiple(&mut rng, k).collect();
                let mut pool: Vec<&Prediction> = chosen
                    .iter()
                    .flat_map(|s| by_speaker[**s].iter().copied())
                    .collect();
                pool.shuffle(&mut rng);
                pool.truncate(g.n_utterances);
                let ok = pool.iter().filter(|p| p.correct()).count();
                acc[gi] += ok as f64 / pool.len() as f64;
                sizes[gi] = pool.len();
                correct += ok;
                total += pool.len();
            }
            micro += correct as f64 / total as f64;
        }
        let groups: Vec<GroupAccuracy> = result
            .groups
            .iter()
            .zip(acc.iter().zip(&sizes))
            .map(|(g, (a, &n))| GroupAccuracy {
                community: g.community,
                n_speakers: g.n_speakers,
                n_utterances: n,
                accuracy: a / seeds as f64,
            })
            .collect();
        let macro_accuracy = groups.iter().map(|g| g.accuracy).sum::<f64>() / groups.len() as f64;
        per_emotion.push(EmotionGroupResult {
            emotion: result.emotion,
            macro_accuracy,
            micro_accuracy: micro / seeds as f64,
            groups,
        });
    }
    GroupAccuracyReport {
        grouping: Grouping::Random,
        per_emotion,
        random_seeds: seeds,
        notices: Vec::new(),
    }
}

/// With-emotion, without-emotion and random reports, in that order.
pub fn group_transferability_from_predictions(
    predictions: &[Prediction],
    per_emotion: &BTreeMap<EmotionLabel, Partition>,
    global: &Partition,
    opts: TransferOptions,
) -> Vec<GroupAccuracyReport> {
    let with: BTreeMap<EmotionLabel, &Partition> = per_emotion.iter().map(|(e, p)| (*e, p)).collect();
    let without: BTreeMap<EmotionLabel, &Partition> = per_emotion.keys().map(|e| (*e, global)).collect();
    let with_report = partition_report(Grouping::WithEmotion, predictions, &with);
    let without_report = partition_report(Grouping::WithoutEmotion, predictions, &without);
    let random = random_report(predictions, &with_report, opts);
    vec![with_report, without_report, random]
}

pub fn group_transferability(
    params: &ModelParams,
    records: &[EmbeddingRecord],
    target_corpus: &str,
    per_emotion: &BTreeMap<EmotionLabel, Partition>,
    global: &Partition,
    opts: TransferOptions,
) -> Result<Vec<GroupAccuracyReport>> {
    let eval = evaluate_cross(params, records, target_corpus)?;
    Ok(group_transferability_from_predictions(
        &eval.predictions,
        per_emotion,
        global,
        opts,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationOptions {
    /// enumerate every relabelling when there are at most this many
    pub max_exact: u64,
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        PermutationOptions {
            max_exact: 200_000,
            n_resamples: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed_difference: f64,
    pub p_value: f64,
    pub exact: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Two-sided test of equal means between per-seed scores `a` and `b`.
pub fn permutation_test(a: &[f64], b: &[f64], opts: PermutationOptions) -> Result<PermutationResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("permutation test needs two non-empty samples".into()));
    }
    let observed = mean(a) - mean(b);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let total: f64 = pooled.iter().sum();
    let (n, na) = (pooled.len(), a.len());
    let nb = n - na;
    let tol = 1e-12 * observed.abs().max(1.0);
    let extreme = |sum_a: f64| {
        let diff = sum_a / na as f64 - (total - sum_a) / nb as f64;
        diff.abs() >= observed.abs() - tol
    };
    let combos = binomial(n, na);
    if combos <= opts.max_exact {
        let mut idx: Vec<usize> = (0..na).collect();
        let mut hits = 0u64;
        let mut count = 0u64;
        loop {
            let s: f64 = idx.iter().map(|&i| pooled[i]).sum();
            hits += extreme(s) as u64;
            count += 1;
            // next combination in lexicographic order
            let mut i = na;
            loop {
                if i == 0 {
                    return Ok(PermutationResult {
                        observed_difference: observed,
                        p_value: hits as f64 / count as f64,
                        exact: true,
                    });
                }
                i -= 1;
                if idx[i] < n - na + i {
                    break;
                }
            }
            idx[i] += 1;
            for j in i + 1..na {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut shuffled = pooled.clone();
    let mut hits = 0usize;
    for _ in 0..opts.n_resamples {
        shuffled.shuffle(&mut rng);
        hits += extreme(shuffled[..na].iter().sum()) as usize;
    }
    Ok(PermutationResult {
        observed_difference: observed,
        p_value: (hits + 1) as f64 / (opts.n_resamples + 1) as f64,
        exact: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub uars: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// against the reference row, when one is given
    pub p_value: Option<f64>,
}

/// Mean and sample standard deviation per row, with permutation p-values
/// against `reference` (usually the full model).
pub fn summarize_runs(
    runs: &[(String, Vec<f64>)],
    reference: Option<&str>,
    opts: PermutationOptions,
) -> Result<Vec<AblationRow>> {
    let reference_uars = reference.and_then(|r| runs.iter().find(|(l, _)| l == r)).map(|(_, u)| u);
    runs.iter()
        .map(|(label, uars)| {
            let m = if uars.is_empty() { f64::NAN } else { mean(uars) };
            let std = if uars.len() > 1 {
                (uars.iter().map(|u| (u - m).powi(2)).sum::<f64>() / (uars.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            let p_value = match reference_uars {
                Some(r) if Some(label.as_str()) != reference && !uars.is_empty() && !r.is_empty() => {
                    Some(permutation_test(r, uars, opts)?.p_value)
                }
                _ => None,
            };
            Ok(AblationRow {
                label: label.clone(),
                uars: uars.clone(),
                mean: m,
                std,
                p_value,
            })
        })
        .collect()
}

fn stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.05 => "**",
        Some(p) if p < 0.1 => "*",
        _ => "",
    }
}

/// Plain-text UAR table, one row per model, values in percent.
pub fn format_ablation_table(direction: &str, rows: &[AblationRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<14} {:>16} {:>8} {:>4}", "Model", direction, "std", "n");
    let _ = writeln!(out, "{}", "-".repeat(45));
    for r in rows {
        let value = format!("{:.2}{}", 100.0 * r.mean, stars(r.p_value));
        let _ = writeln!(
            out,
            "{:<14} {:>16} {:>8.2} {:>4}",
            r.label,
            value,
            100.0 * r.std,
            r.uars.len()
        );
    }
    out.push_str("* p < 0.1, ** p < 0.05 against the reference row (two-sided permutation test)\n");
    out
}

/// Plain-text accuracy table with one row per emotion and one column per
/// grouping (macro accuracy, percent).
pub fn format_transfer_table(reports: &[GroupAccuracyReport]) -> String {
    let column = |g: Grouping| reports.iter().find(|r| r.grouping == g);
    let mut out = String::new();
    let _ = writeln!(out, "{:<10} {:>9} {:>9} {:>9}", "Emotion", "w/ Emo", "w/o Emo", "Rand");
    let _ = writeln!(out, "{}", "-".repeat(40));
    let cell = |g: Grouping, e: EmotionLabel| {
        column(g)
            .and_then(|r| r.macro_for(e))
            .map_or_else(|| "-".to_string(), |v| format!("{:.1}", 100.0 * v))
    };
    for e in EmotionLabel::ALL {
        if column(Grouping::WithEmotion).and_then(|r| r.macro_for(e)).is_none() {
            continue;
        }
        let _ = writeln!(
            out,
            "{:<10} {:>9} {:>9} {:>9}",
            e.as_str(),
            cell(Grouping::WithEmotion, e),
            cell(Grouping::WithoutEmotion, e),
            cell(Grouping::Random, e)
        );
    }
    out
}
