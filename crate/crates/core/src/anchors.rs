//! Cross-corpus phoneme similarity per emotion and anchor selection.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::embstore::{EmbeddingRecord, EmotionLabel, RecordKind, Split};
use crate::error::{Error, Result};
use crate::simgraph::cosine;

/// Cosine similarity between per-corpus mean content embeddings, one row per
/// emotion and one column per phoneme. Cells are `None` when the phoneme is
/// missing from either corpus under that emotion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeSimilarityTable {
    pub src_corpus: String,
    pub tgt_corpus: String,
    pub columns: Vec<String>,
    pub rows: BTreeMap<EmotionLabel, Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PhonemeSimilarityTable {
    pub fn cell(&self, emotion: EmotionLabel, phoneme: &str) -> Option<f64> {
        let col = self.columns.iter().position(|c| c == phoneme)?;
        self.rows.get(&emotion)?.get(col).copied().flatten()
    }

    /// Present cells of one row in column order.
    pub fn row_cells(&self, emotion: EmotionLabel) -> Vec<(&str, f64)> {
        self.rows
            .get(&emotion)
            .map(|row| {
                self.columns
                    .iter()
                    .zip(row)
                    .filter_map(|(p, s)| s.map(|s| (p.as_str(), s)))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.values().all(|r| r.iter().all(Option::is_none))
    }

    /// CSV with emotions as rows and phonemes as columns; absent cells are blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("emotion");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (e, row) in &self.rows {
            out.push_str(e.as_str());
            for cell in row {
                out.push(',');
                if let Some(s) = cell {
                    let _ = write!(out, "{s}");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Which phonemes take part in the anchor search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhonemeScope {
    All,
    Only(Vec<String>),
}

/// Builds the similarity table over content-kind train records.
///
/// `inventory` fixes the column order; `scope` narrows it (by default the
/// search is limited to vowels).
pub fn phoneme_similarity(
    records: &[EmbeddingRecord],
    inventory: &[String],
    scope: &PhonemeScope,
    src_corpus: &str,
    tgt_corpus: &str,
) -> Result<PhonemeSimilarityTable> {
    let columns: Vec<String> = match scope {
        PhonemeScope::All => inventory.to_vec(),
        PhonemeScope::Only(list) => inventory
            .iter()
            .filter(|p| list.contains(p))
            .cloned()
            .collect(),
    };

    type Key<'a> = (&'a str, EmotionLabel, &'a str);
    let mut sums: BTreeMap<Key, (Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        if r.kind != RecordKind::Content || r.split != Split::Train {
            continue;
        }
        let corpus = r.corpus_id.as_str();
        if corpus != src_corpus && corpus != tgt_corpus {
            continue;
        }
        let Some(p) = r.phoneme.as_deref() else { continue };
        let e = sums
            .entry((corpus, r.emotion, p))
            .or_insert_with(|| (vec![0.0; r.vector.len()], 0));
        for (s, v) in e.0.iter_mut().zip(&r.vector) {
            *s += v;
        }
        e.1 += 1;
    }
    let mean = |key: Key| {
        sums.get(&key)
            .map(|(s, n)| s.iter().map(|x| x / *n as f64).collect::<Vec<f64>>())
    };

    let mut rows = BTreeMap::new();
    let mut warnings = Vec::new();
    for emotion in EmotionLabel::ALL {
        let mut row = Vec::with_capacity(columns.len());
        let mut any_record = false;
        for p in &columns {
            let src = mean((src_corpus, emotion, p.as_str()));
            let tgt = mean((tgt_corpus, emotion, p.as_str()));
            any_record |= src.is_some() || tgt.is_some();
            let cell = match (src, tgt) {
                (Some(a), Some(b)) => Some(cosine(&a, &b)?),
                _ => None,
            };
            row.push(cell);
        }
        if any_record {
            rows.insert(emotion, row);
        }
    }
    let table = PhonemeSimilarityTable {
        src_corpus: src_corpus.to_string(),
        tgt_corpus: tgt_corpus.to_string(),
        columns,
        rows,
        warnings: Vec::new(),
    };
    if table.is_empty() {
        warnings.push(format!(
            "no phoneme is shared between {src_corpus} and {tgt_corpus} under any emotion"
        ));
        log::warn!("{}", warnings[0]);
    }
    Ok(PhonemeSimilarityTable { warnings, ..table })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Highest `k` similarities; ties go to the earlier inventory column.
    TopK { k: usize },
    /// Every phoneme with similarity ≥ `theta`.
    Threshold { theta: f64 },
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule::TopK { k: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub phoneme: String,
    pub sim: f64,
}

/// Per-emotion anchors, descending by similarity.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnchorSet {
    pub rule: Option<SelectionRule>,
    pub per_emotion: BTreeMap<EmotionLabel, Vec<Anchor>>,
}

impl AnchorSet {
    pub fn contains(&self, emotion: EmotionLabel, phoneme: &str) -> bool {
        self.per_emotion
            .get(&emotion)
            .is_some_and(|a| a.iter().any(|x| x.phoneme == phoneme))
    }

    pub fn phonemes(&self, emotion: EmotionLabel) -> Vec<&str> {
        self.per_emotion
            .get(&emotion)
            .map(|a| a.iter().map(|x| x.phoneme.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn is_empty(&self) -> bool {
        self.per_emotion.values().all(Vec::is_empty)
    }
}

/// Selects anchors for all four emotions.
pub fn select_anchors(table: &PhonemeSimilarityTable, rule: SelectionRule) -> Result<AnchorSet> {
    select_anchors_for(table, rule, &EmotionLabel::ALL)
}

pub fn select_anchors_for(
    table: &PhonemeSimilarityTable,
    rule: SelectionRule,
    emotions: &[EmotionLabel],
) -> Result<AnchorSet> {
    let missing: Vec<String> = emotions
        .iter()
        .filter(|e| table.row_cells(**e).is_empty())
        .map(|e| e.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Domain(format!(
            "no phoneme similarity cells for: {}",
            missing.join(", ")
        )));
    }
    let mut per_emotion = BTreeMap::new();
    for &e in emotions {
        let mut cells = table.row_cells(e);
        // Stable sort keeps inventory order among equal similarities.
        cells.sort_by(|a, b| b.1.total_cmp(&a.1));
        let chosen: Vec<Anchor> = match rule {
            SelectionRule::TopK { k } => cells.into_iter().take(k).map(to_anchor).collect(),
            SelectionRule::Threshold { theta } => cells
                .into_iter()
                .filter(|(_, s)| *s >= theta)
                .map(to_anchor)
                .collect(),
        };
        per_emotion.insert(e, chosen);
    }
    Ok(AnchorSet {
        rule: Some(rule),
        per_emotion,
    })
}

fn to_anchor((phoneme, sim): (&str, f64)) -> Anchor {
    Anchor {
        phoneme: phoneme.to_string(),
        sim,
    }
}
