//! Triplet mining in the phoneme (content) and speaker-style spaces.
//!
//! Anchors are drawn uniformly over cells rather than raw records: phoneme
//! cells are (emotion, phoneme, community), speaker cells (emotion,
//! community). Positives always come from a different speaker of the same
//! style community.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::embstore::{EmbeddingRecord, EmotionLabel, RecordKind, Split};
use crate::simgraph::{NodeId, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripletSpace {
    Phoneme,
    Speaker,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub space: TripletSpace,
    pub anchor_id: String,
    pub positive_id: String,
    pub negative_id: String,
    pub emotion: EmotionLabel,
    pub phoneme: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    pub anchors_per_batch: usize,
    /// Number of batches to mine for; total draws = anchors_per_batch × batches.
    pub batches: usize,
    pub cross_corpus_positive: bool,
    pub restrict_to_anchor_set: bool,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            anchors_per_batch: 64,
            batches: 1,
            cross_corpus_positive: true,
            restrict_to_anchor_set: true,
            seed: 0,
        }
    }
}

impl MiningConfig {
    pub fn total_draws(&self) -> usize {
        self.anchors_per_batch * self.batches
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MiningReport {
    pub draws: usize,
    pub emitted: usize,
    pub skipped_no_positive: usize,
    pub skipped_no_negative: usize,
    pub notices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MinedTriplets {
    pub triplets: Vec<Triplet>,
    pub report: MiningReport,
}

/// Community lookup per emotion.
type Communities = BTreeMap<EmotionLabel, BTreeMap<NodeId, usize>>;

fn lookups(partitions: &BTreeMap<EmotionLabel, Partition>) -> Communities {
    partitions.iter().map(|(e, p)| (*e, p.lookup())).collect()
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> Option<&'a T> {
    items.choose(rng)
}

/// Phoneme-space triplets: anchor and positive share phoneme, emotion and
/// style community; the negative shares the phoneme under another emotion,
/// preferably spoken by a speaker from the anchor's community.
pub fn mine_phoneme_triplets(
    records: &[EmbeddingRecord],
    anchor_set: &AnchorSet,
    partitions: &BTreeMap<EmotionLabel, Partition>,
    cfg: &MiningConfig,
) -> MinedTriplets {
    let comms = lookups(partitions);
    let content: Vec<&EmbeddingRecord> = records
        .iter()
        .filter(|r| r.kind == RecordKind::Content && r.split == Split::Train && r.phoneme.is_some())
        .collect();

    // (emotion, phoneme) → records, for negatives.
    let mut by_emotion_phoneme: BTreeMap<(EmotionLabel, &str), Vec<&EmbeddingRecord>> = BTreeMap::new();
    // (emotion, phoneme, community) → records, for anchors and positives.
    let mut cells: BTreeMap<(EmotionLabel, &str, usize), Vec<&EmbeddingRecord>> = BTreeMap::new();
    let mut unassigned = 0usize;
    for &r in &content {
        let p = r.phoneme.as_deref().unwrap_or_default();
        by_emotion_phoneme.entry((r.emotion, p)).or_default().push(r);
        let anchorable = !cfg.restrict_to_anchor_set || anchor_set.contains(r.emotion, p);
        if !anchorable {
            continue;
        }
        match comms.get(&r.emotion).and_then(|m| m.get(&NodeId::of(r))) {
            Some(&c) => cells.entry((r.emotion, p, c)).or_default().push(r),
            None => unassigned += 1,
        }
    }

    let mut out = MinedTriplets::default();
    if unassigned > 0 {
        out.report.notices.push(format!(
            "{unassigned} anchorable content records have no community and were ignored"
        ));
    }
    let cell_keys: Vec<_> = cells.keys().copied().collect();
    if cell_keys.is_empty() {
        out.report.notices.push("no anchorable phoneme cells".into());
        return out;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5048_4f4e);
    for _ in 0..cfg.total_draws() {
        out.report.draws += 1;
        let key = cell_keys[rng.random_range(0..cell_keys.len())];
        let (emotion, phoneme, community) = key;
        let cell = &cells[&key];
        let anchor = *pick(&mut rng, cell).expect("cells are non-empty");

        let others: Vec<&EmbeddingRecord> = cell
            .iter()
            .copied()
            .filter(|r| r.speaker_id != anchor.speaker_id || r.corpus_id != anchor.corpus_id)
            .collect();
        let cross: Vec<&EmbeddingRecord> = others
            .iter()
            .copied()
            .filter(|r| r.corpus_id != anchor.corpus_id)
            .collect();
        let pool = if cfg.cross_corpus_positive && !cross.is_empty() {
            &cross
        } else {
            &others
        };
        let Some(positive) = pick(&mut rng, pool).copied() else {
            out.report.skipped_no_positive += 1;
            continue;
        };

        let negative_emotions: Vec<EmotionLabel> = EmotionLabel::ALL
            .into_iter()
            .filter(|&e| e != emotion && by_emotion_phoneme.contains_key(&(e, phoneme)))
            .collect();
        let Some(&neg_emotion) = pick(&mut rng, &negative_emotions) else {
            out.report.skipped_no_negative += 1;
            continue;
        };
        let candidates = &by_emotion_phoneme[&(neg_emotion, phoneme)];
        let anchor_comm = &comms[&emotion];
        let same_comm: Vec<&EmbeddingRecord> = candidates
            .iter()
            .copied()
            .filter(|r| anchor_comm.get(&NodeId::of(r)) == Some(&community))
            .collect();
        let pool = if same_comm.is_empty() { candidates } else { &same_comm };
        let negative = *pick(&mut rng, pool).expect("negative pool is non-empty");

        out.triplets.push(Triplet {
            space: TripletSpace::Phoneme,
            anchor_id: anchor.record_id.clone(),
            positive_id: positive.record_id.clone(),
            negative_id: negative.record_id.clone(),
            emotion,
            phoneme: Some(phoneme.to_string()),
        });
    }
    out.report.emitted = out.triplets.len();
    out
}

/// Speaker-space triplets: anchor and positive from different speakers of the
/// same community, negative from another community of the same emotion graph.
pub fn mine_speaker_triplets(
    records: &[EmbeddingRecord],
    partitions: &BTreeMap<EmotionLabel, Partition>,
    cfg: &MiningConfig,
) -> MinedTriplets {
    let comms = lookups(partitions);
    let mut out = MinedTriplets::default();
    let mut cells: BTreeMap<(EmotionLabel, usize), Vec<&EmbeddingRecord>> = BTreeMap::new();
    for r in records {
        if r.kind != RecordKind::Speaker || r.split != Split::Train {
            continue;
        }
        let Some(p) = partitions.get(&r.emotion) else { continue };
        if p.n_communities < 2 {
            continue;
        }
        if let Some(&c) = comms[&r.emotion].get(&NodeId::of(r)) {
            cells.entry((r.emotion, c)).or_default().push(r);
        }
    }
    for (e, p) in partitions {
        if p.n_communities < 2 {
            out.report
                .notices
                .push(format!("{e}: a single community, no speaker triplets"));
        }
    }
    let cell_keys: Vec<_> = cells.keys().copied().collect();
    if cell_keys.is_empty() {
        return out;
    }
    let mut by_emotion: BTreeMap<EmotionLabel, Vec<(usize, &EmbeddingRecord)>> = BTreeMap::new();
    for (&(e, c), rs) in &cells {
        by_emotion.entry(e).or_default().extend(rs.iter().map(|r| (c, *r)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5350_4b52);
    for _ in 0..cfg.total_draws() {
        out.report.draws += 1;
        let key = cell_keys[rng.random_range(0..cell_keys.len())];
        let (emotion, community) = key;
        let cell = &cells[&key];
        let anchor = *pick(&mut rng, cell).expect("cells are non-empty");
        let others: Vec<&EmbeddingRecord> = cell
            .iter()
            .copied()
            .filter(|r| r.speaker_id != anchor.speaker_id || r.corpus_id != anchor.corpus_id)
            .collect();
        let cross: Vec<&EmbeddingRecord> = others
            .iter()
            .copied()
            .filter(|r| r.corpus_id != anchor.corpus_id)
            .collect();
        let pool = if cfg.cross_corpus_positive && !cross.is_empty() {
            &cross
        } else {
            &others
        };
        let Some(positive) = pick(&mut rng, pool).copied() else {
            out.report.skipped_no_positive += 1;
            continue;
        };
        let negatives: Vec<&EmbeddingRecord> = by_emotion[&emotion]
            .iter()
            .filter(|(c, _)| *c != community)
            .map(|(_, r)| *r)
            .collect();
        let Some(negative) = pick(&mut rng, &negatives).copied() else {
            out.report.skipped_no_negative += 1;
            continue;
        };
        out.triplets.push(Triplet {
            space: TripletSpace::Speaker,
            anchor_id: anchor.record_id.clone(),
            positive_id: positive.record_id.clone(),
            negative_id: negative.record_id.clone(),
            emotion,
            phoneme: None,
        });
    }
    out.report.emitted = out.triplets.len();
    out
}

/// Checks a triplet against the raw records and partitions only.
pub fn validate_triplet(
    t: &Triplet,
    records: &HashMap<&str, &EmbeddingRecord>,
    partitions: &BTreeMap<EmotionLabel, Partition>,
) -> std::result::Result<(), String> {
    let get = |id: &str| {
        records
            .get(id)
            .copied()
            .ok_or_else(|| format!("unknown record {id}"))
    };
    let (a, p, n) = (get(&t.anchor_id)?, get(&t.positive_id)?, get(&t.negative_id)?);
    let partition = partitions
        .get(&t.emotion)
        .ok_or_else(|| format!("no partition for {}", t.emotion))?;
    let community = |r: &EmbeddingRecord| {
        partition
            .community_of(&NodeId::of(r))
            .ok_or_else(|| format!("{} not in the {} partition", r.record_id, t.emotion))
    };
    if a.record_id == p.record_id {
        return Err("anchor and positive are the same record".into());
    }
    match t.space {
        TripletSpace::Phoneme => {
            if [a, p, n].iter().any(|r| r.kind != RecordKind::Content) {
                return Err("phoneme triplet with a non-content record".into());
            }
            let ph = t.phoneme.as_deref().ok_or("phoneme triplet without phoneme")?;
            if [a, p, n].iter().any(|r| r.phoneme.as_deref() != Some(ph)) {
                return Err("records do not share the triplet phoneme".into());
            }
            if a.emotion != t.emotion || p.emotion != t.emotion {
                return Err("anchor/positive emotion mismatch".into());
            }
            if n.emotion == t.emotion {
                return Err("negative shares the anchor emotion".into());
            }
            if community(a)? != community(p)? {
                return Err("anchor and positive speakers are in different communities".into());
            }
        }
        TripletSpace::Speaker => {
            if [a, p, n].iter().any(|r| r.kind != RecordKind::Speaker) {
                return Err("speaker triplet with a non-speaker record".into());
            }
            if [a, p, n].iter().any(|r| r.emotion != t.emotion) {
                return Err("speaker triplet records outside the triplet emotion".into());
            }
            let (ca, cp, cn) = (community(a)?, community(p)?, community(n)?);
            if ca != cp {
                return Err("anchor and positive in different communities".into());
            }
            if ca == cn {
                return Err("negative in the anchor's community".into());
            }
        }
    }
    Ok(())
}

/// One triplet per line: `space\tanchor\tpositive\tnegative\temotion\tphoneme`.
pub fn dump_triplets(triplets: &[Triplet]) -> String {
    let mut out = String::new();
    for t in triplets {
        let space = match t.space {
            TripletSpace::Phoneme => "phoneme",
            TripletSpace::Speaker => "speaker",
        };
        let _ = writeln!(
            out,
            "{space}\t{}\t{}\t{}\t{}\t{}",
            t.anchor_id,
            t.positive_id,
            t.negative_id,
            t.emotion,
            t.phoneme.as_deref().unwrap_or("-")
        );
    }
    out
}
