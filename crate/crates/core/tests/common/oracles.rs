//! Reference computations written independently of the library code.

#![allow(dead_code)]

use rand::Rng;

/// Modularity straight from the double sum over ordered node pairs.
pub fn brute_modularity(n: usize, edges: &[(usize, usize, f64)], labels: &[usize]) -> f64 {
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j, w) in edges {
        a[i][j] += w;
        a[j][i] += w;
    }
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Visits every set partition of `n` nodes as a restricted growth string.
pub fn for_each_partition(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut labels = vec![0usize; n];
    let mut maxes = vec![0usize; n];
    loop {
        visit(&labels);
        let mut i = n;
        loop {
            if i <= 1 {
                return;
            }
            i -= 1;
            if labels[i] <= maxes[i - 1] {
                break;
            }
        }
        labels[i] += 1;
        let m = maxes[i - 1].max(labels[i]);
        maxes[i] = m;
        for j in i + 1..n {
            labels[j] = 0;
            maxes[j] = m;
        }
    }
}

pub fn exhaustive_max_modularity(n: usize, edges: &[(usize, usize, f64)]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for_each_partition(n, |labels| {
        best = best.max(brute_modularity(n, edges, labels));
    });
    best
}

/// Random weighted graph with at least one edge.
pub fn random_graph(rng: &mut impl Rng, n: usize, density: f64) -> Vec<(usize, usize, f64)> {
    loop {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(density) {
                    edges.push((i, j, rng.random_range(0.05..1.0)));
                }
            }
        }
        if !edges.is_empty() {
            return edges;
        }
    }
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    use std::collections::HashMap;
    let n = a.len() as f64;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let c2 = |v: f64| v * (v - 1.0) / 2.0;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sr: f64 = rows.values().map(|&v| c2(v)).sum();
    let sc: f64 = cols.values().map(|&v| c2(v)).sum();
    let expected = sr * sc / c2(n);
    let max = 0.5 * (sr + sc);
    if (max - expected).abs() < 1e-15 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Triplet rules checked from scratch against the raw records: shared
/// phoneme and emotion for content triplets, community membership under the
/// triplet emotion, distinct speakers for anchor and positive.
pub fn check_triplet(
    t: &sapa_core::Triplet,
    by_id: &std::collections::HashMap<String, sapa_core::EmbeddingRecord>,
    partitions: &std::collections::BTreeMap<sapa_core::EmotionLabel, sapa_core::Partition>,
    anchors: Option<&sapa_core::AnchorSet>,
) -> Result<(), String> {
    use sapa_core::{RecordKind, Split, TripletSpace};
    let a = by_id.get(&t.anchor_id).ok_or("missing anchor")?;
    let p = by_id.get(&t.positive_id).ok_or("missing positive")?;
    let n = by_id.get(&t.negative_id).ok_or("missing negative")?;
    let part = partitions.get(&t.emotion).ok_or("emotion without partition")?;
    let community = |r: &sapa_core::EmbeddingRecord| -> Option<usize> {
        part.nodes
            .iter()
            .zip(&part.labels)
            .find(|(node, _)| node.corpus_id == r.corpus_id && node.speaker_id == r.speaker_id)
            .map(|(_, &l)| l)
    };
    let same_speaker = |x: &sapa_core::EmbeddingRecord, y: &sapa_core::EmbeddingRecord| {
        x.corpus_id == y.corpus_id && x.speaker_id == y.speaker_id
    };
    for r in [a, p, n] {
        if r.split != Split::Train {
            return Err(format!("{} is not a train record", r.record_id));
        }
    }
    if same_speaker(a, p) {
        return Err("anchor and positive from one speaker".into());
    }
    let ca = community(a).ok_or("anchor speaker unclustered")?;
    if community(p) != Some(ca) {
        return Err("positive outside the anchor community".into());
    }
    match t.space {
        TripletSpace::Phoneme => {
            let ph = t.phoneme.as_deref().ok_or("no phoneme")?;
            for r in [a, p, n] {
                if r.kind != RecordKind::Content || r.phoneme.as_deref() != Some(ph) {
                    return Err(format!("{} is not a {ph} segment", r.record_id));
                }
            }
            if a.emotion != t.emotion || p.emotion != t.emotion || n.emotion == t.emotion {
                return Err("emotion rule broken".into());
            }
            if let Some(set) = anchors {
                if !set.contains(t.emotion, ph) {
                    return Err(format!("{ph} is not an anchor of {}", t.emotion));
                }
            }
        }
        TripletSpace::Speaker => {
            for r in [a, p, n] {
                if r.kind != RecordKind::Speaker || r.emotion != t.emotion {
                    return Err(format!("{} is not a {} speaker record", r.record_id, t.emotion));
                }
            }
            match community(n) {
                Some(cn) if cn != ca => {}
                _ => return Err("negative not in another community".into()),
            }
        }
    }
    Ok(())
}
