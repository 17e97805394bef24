//! Shared setup: synthetic data, per-emotion communities and anchors.

#![allow(dead_code)]

use std::collections::BTreeMap;

use sapa_core::embstore::default_vowels;
use sapa_core::{
    cluster_all_emotions, generate_synthetic, phoneme_similarity, select_anchors, AnchorSet, Dataset,
    EmotionLabel, Partition, PhonemeScope, SelectionRule, SyntheticSpec,
};

pub struct Prepared {
    pub dataset: Dataset,
    pub partitions: BTreeMap<EmotionLabel, Partition>,
    pub anchors: AnchorSet,
}

pub fn prepare(spec: &SyntheticSpec, cluster_seed: u64) -> Prepared {
    let dataset = generate_synthetic(spec).unwrap();
    prepare_from(dataset, cluster_seed)
}

pub fn prepare_from(dataset: Dataset, cluster_seed: u64) -> Prepared {
    let partitions = cluster_all_emotions(&dataset.records, 0.7, cluster_seed)
        .per_emotion
        .into_iter()
        .map(|(e, c)| (e, c.partition))
        .collect();
    let table = phoneme_similarity(
        &dataset.records,
        &dataset.manifest.phoneme_inventory,
        &PhonemeScope::Only(default_vowels()),
        "src",
        "tgt",
    )
    .unwrap();
    let anchors = select_anchors(&table, SelectionRule::TopK { k: 3 }).unwrap();
    Prepared {
        dataset,
        partitions,
        anchors,
    }
}

/// Two corpora with close anchored phonemes and distant others.
pub fn ablation_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        seed,
        speakers_per_corpus: 16,
        utterances_per_speaker: 20,
        segments_per_utterance: 6,
        cross_corpus_anchor_gap: 0.2,
        non_anchor_gap: 0.9,
        emotion_signal_strength: 0.5,
        speaker_emotion_strength: 0.1,
        utterance_noise: 1.0,
        segment_noise: 1.5,
        speaker_corpus_shift: 0.5,
        ..SyntheticSpec::default()
    }
}

/// Style clusters planted for every emotion except neutral.
pub fn transfer_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        seed,
        speakers_per_corpus: 16,
        utterances_per_speaker: 20,
        segments_per_utterance: 6,
        cross_corpus_anchor_gap: 0.2,
        non_anchor_gap: 0.9,
        emotion_signal_strength: 0.3,
        speaker_emotion_strength: 0.5,
        utterance_noise: 0.3,
        segment_noise: 1.5,
        speaker_corpus_shift: 0.2,
        styled_emotions: vec![EmotionLabel::Happiness, EmotionLabel::Anger, EmotionLabel::Sadness],
        ..SyntheticSpec::default()
    }
}
