//! Groups flat embedding records into classifier inputs.

use std::collections::BTreeMap;

use crate::embstore::{EmbeddingRecord, EmotionLabel, RecordKind, Split};
use crate::model::UtteranceInput;
use crate::simgraph::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledUtterance {
    pub corpus_id: String,
    pub speaker_id: String,
    pub utterance_id: String,
    pub emotion: EmotionLabel,
    pub split: Split,
    pub input: UtteranceInput,
}

impl LabeledUtterance {
    pub fn node(&self) -> NodeId {
        NodeId::new(&self.corpus_id, &self.speaker_id)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Assembly {
    pub utterances: Vec<LabeledUtterance>,
    /// utterance ids lacking a speaker record or any content segment
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UtteranceFilter<'a> {
    pub corpus: Option<&'a str>,
    pub split: Option<Split>,
}

/// Builds one input per (corpus, utterance) in first-appearance order; content
/// segments keep file order.
pub fn assemble_utterances(records: &[EmbeddingRecord], filter: UtteranceFilter<'_>) -> Assembly {
    struct Parts<'r> {
        first: &'r EmbeddingRecord,
        speaker: Option<&'r EmbeddingRecord>,
        segments: Vec<&'r EmbeddingRecord>,
    }
    let mut order: Vec<(&str, &str)> = Vec::new();
    let mut parts: BTreeMap<(&str, &str), Parts<'_>> = BTreeMap::new();
    for r in records {
        if filter.corpus.is_some_and(|c| c != r.corpus_id) || filter.split.is_some_and(|s| s != r.split) {
            continue;
        }
        let key = (r.corpus_id.as_str(), r.utterance_id.as_str());
        let entry = parts.entry(key).or_insert_with(|| {
            order.push(key);
            Parts {
                first: r,
                speaker: None,
                segments: Vec::new(),
            }
        });
        match r.kind {
            RecordKind::Speaker => entry.speaker = Some(r),
            RecordKind::Content => entry.segments.push(r),
        }
    }
    let mut out = Assembly::default();
    for key in order {
        let p = &parts[&key];
        match p.speaker {
            Some(spk) if !p.segments.is_empty() => out.utterances.push(LabeledUtterance {
                corpus_id: p.first.corpus_id.clone(),
                speaker_id: p.first.speaker_id.clone(),
                utterance_id: p.first.utterance_id.clone(),
                emotion: p.first.emotion,
                split: p.first.split,
                input: UtteranceInput {
                    segments: p.segments.iter().map(|r| r.vector.clone()).collect(),
                    speaker: spk.vector.clone(),
                },
            }),
            _ => out.skipped.push(p.first.utterance_id.clone()),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, utt: &str, kind: RecordKind) -> EmbeddingRecord {
        EmbeddingRecord {
            record_id: id.into(),
            corpus_id: "c".into(),
            speaker_id: "s".into(),
            utterance_id: utt.into(),
            emotion: EmotionLabel::Anger,
            kind,
            phoneme: (kind == RecordKind::Content).then(|| "A".to_string()),
            vector: vec![id.len() as f64],
            split: Split::Test,
        }
    }

    #[test]
    fn groups_and_skips() {
        let records = vec![
            rec("u1-c0", "u1", RecordKind::Content),
            rec("u1-spk", "u1", RecordKind::Speaker),
            rec("u1-c01", "u1", RecordKind::Content),
            rec("u2-spk", "u2", RecordKind::Speaker),
            rec("u3-c0", "u3", RecordKind::Content),
        ];
        let a = assemble_utterances(&records, UtteranceFilter::default());
        assert_eq!(a.utterances.len(), 1);
        assert_eq!(a.utterances[0].input.segments, vec![vec![5.0], vec![6.0]]);
        assert_eq!(a.skipped, vec!["u2".to_string(), "u3".to_string()]);
        let none = assemble_utterances(
            &records,
            UtteranceFilter {
                split: Some(Split::Train),
                ..Default::default()
            },
        );
        assert!(none.utterances.is_empty() && none.skipped.is_empty());
    }
}
