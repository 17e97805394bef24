mod common;

use std::collections::{BTreeMap, HashMap};

use common::oracles::{brute_modularity, check_triplet, exhaustive_max_modularity, for_each_partition};
use proptest::prelude::*;
use sapa_core::anchors::{PhonemeScope, PhonemeSimilarityTable};
use sapa_core::embstore::{default_vowels, read_dataset};
use sapa_core::evalkit::uar;
use sapa_core::model::{argmax, loss_total, softmax, TripletInput, UtteranceInput};
use sapa_core::simgraph::SpeakerGraph;
use sapa_core::{
    cluster_all_emotions, cosine, generate_synthetic, louvain, mine_phoneme_triplets,
    mine_speaker_triplets, modularity, phoneme_similarity, select_anchors, write_dataset, Batch,
    ConfusionMatrix, EmotionLabel, MiningConfig, ModelConfig, ModelParams, Partition,
    SelectionRule, SyntheticSpec,
};

fn vec_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, len)
}

fn nonzero(v: &[f64]) -> bool {
    v.iter().map(|x| x * x).sum::<f64>() > 1e-6
}

/// Graph size, edge list and a labelling over its nodes.
fn labelled_graph(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>, Vec<usize>)> {
    (2..=max_n).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let m = pairs.len();
        (
            Just(n),
            prop::collection::vec(prop::option::weighted(0.5, 0.05..1.0f64), m).prop_map(move |ws| {
                let mut edges: Vec<(usize, usize, f64)> = pairs
                    .iter()
                    .zip(ws)
                    .filter_map(|(&(i, j), w)| w.map(|w| (i, j, w)))
                    .collect();
                if edges.is_empty() {
                    edges.push((0, 1, 0.5));
                }
                edges
            }),
            prop::collection::vec(0..n, n),
        )
    })
}

fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        seed,
        speakers_per_corpus: 6,
        utterances_per_speaker: 5,
        segments_per_utterance: 4,
        d_s: 12,
        d_c: 12,
        cross_corpus_anchor_gap: 0.2,
        non_anchor_gap: 0.9,
        ..SyntheticSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cosine_is_bounded_and_symmetric(u in vec_strategy(6), v in vec_strategy(6)) {
        prop_assume!(nonzero(&u) && nonzero(&v));
        let uv = cosine(&u, &v).unwrap();
        prop_assert!((-1.0..=1.0).contains(&uv));
        prop_assert!((uv - cosine(&v, &u).unwrap()).abs() < 1e-15);
        prop_assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_ignores_positive_scaling(u in vec_strategy(5), v in vec_strategy(5), s in 0.01..100.0f64) {
        prop_assume!(nonzero(&u) && nonzero(&v));
        let scaled: Vec<f64> = u.iter().map(|x| x * s).collect();
        prop_assert!((cosine(&u, &v).unwrap() - cosine(&scaled, &v).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn modularity_matches_double_sum((n, edges, labels) in labelled_graph(12)) {
        let g = SpeakerGraph::from_edges(n, &edges);
        let q = modularity(&g, &Partition::from_labels(g.node_ids(), &labels)).unwrap();
        prop_assert!((q - brute_modularity(n, &edges, &labels)).abs() < 1e-12);
    }

    #[test]
    fn modularity_is_label_permutation_invariant((n, edges, labels) in labelled_graph(10), shift in 1usize..7) {
        let g = SpeakerGraph::from_edges(n, &edges);
        let renamed: Vec<usize> = labels.iter().map(|l| (l + shift) * 3).collect();
        let a = modularity(&g, &Partition::from_labels(g.node_ids(), &labels)).unwrap();
        let b = modularity(&g, &Partition::from_labels(g.node_ids(), &renamed)).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn louvain_never_loses_to_singletons((n, edges, _) in labelled_graph(14), seed in 0u64..1000) {
        let g = SpeakerGraph::from_edges(n, &edges);
        let found = modularity(&g, &louvain(&g, seed)).unwrap();
        let single = modularity(&g, &Partition::singletons(g.node_ids())).unwrap();
        prop_assert!(found >= single - 1e-12);
        prop_assert!(found <= 1.0);
    }

    #[test]
    fn hinge_is_nonnegative_and_shift_invariant(
        a in vec_strategy(4), p in vec_strategy(4), n in vec_strategy(4),
        shift in vec_strategy(4), margin in 0.0..2.0f64,
    ) {
        let l = sapa_core::triplet_loss(&a, &p, &n, margin);
        prop_assert!(l >= 0.0);
        let mv = |v: &[f64]| -> Vec<f64> { v.iter().zip(&shift).map(|(x, s)| x + s).collect() };
        let moved = sapa_core::triplet_loss(&mv(&a), &mv(&p), &mv(&n), margin);
        prop_assert!((l - moved).abs() < 1e-9 * (1.0 + l));
        prop_assert_eq!(sapa_core::triplet_loss(&a, &a, &a, margin), margin);
    }

    #[test]
    fn softmax_is_a_distribution(z in vec_strategy(4), c in -50.0..50.0f64) {
        let s = softmax(&z);
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(s.iter().all(|&x| x > 0.0));
        let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
        prop_assert_eq!(argmax(&z), argmax(&shifted));
    }

    #[test]
    fn uar_survives_duplication(pairs in prop::collection::vec((0usize..4, 0usize..4), 4..60), k in 2u64..6) {
        let label = |i| EmotionLabel::from_index(i).unwrap();
        let mut cm = ConfusionMatrix::from_pairs(pairs.iter().map(|&(t, p)| (label(t), label(p))));
        prop_assume!(EmotionLabel::ALL.iter().any(|&e| cm.support(e) > 0));
        let once = uar(&cm).unwrap();
        cm.counts.iter_mut().flatten().for_each(|c| *c *= k);
        prop_assert!((once - uar(&cm).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn threshold_anchors_shrink_as_theta_rises(
        cells in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 6), 4),
        lo in -1.0..1.0f64, gap in 0.0..1.0f64,
    ) {
        let table = PhonemeSimilarityTable {
            src_corpus: "a".into(),
            tgt_corpus: "b".into(),
            columns: default_vowels(),
            rows: EmotionLabel::ALL
                .iter()
                .zip(cells)
                .map(|(e, row)| (*e, row.into_iter().map(Some).collect()))
                .collect(),
            warnings: vec![],
        };
        let loose = select_anchors(&table, SelectionRule::Threshold { theta: lo }).unwrap();
        let strict = select_anchors(&table, SelectionRule::Threshold { theta: lo + gap }).unwrap();
        for e in EmotionLabel::ALL {
            let wide = loose.phonemes(e);
            prop_assert!(strict.phonemes(e).iter().all(|p| wide.contains(p)));
        }
    }
}

fn toy_params(seed: u64) -> ModelParams {
    let cfg = ModelConfig {
        d_c: 6,
        d_s: 5,
        d_proj: 4,
        d_model: 8,
        n_heads: 2,
        d_ff: 8,
        fc_widths: [8, 6, 6, 4],
        ..ModelConfig::default()
    };
    ModelParams::init(&cfg, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn batch_loss_ignores_utterance_order(seed in 0u64..500, rot in 1usize..5) {
        use rand::{Rng, SeedableRng};
        let params = toy_params(seed);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let utterances: Vec<UtteranceInput> = (0..5)
            .map(|i| UtteranceInput { segments: (0..1 + i % 3).map(|_| v(6)).collect(), speaker: v(5) })
            .collect();
        let triplet = |v: &mut dyn FnMut(usize) -> Vec<f64>, d| TripletInput { anchor: v(d), positive: v(d), negative: v(d) };
        let batch = Batch {
            utterances,
            labels: vec![0, 1, 2, 3, 1],
            phoneme_triplets: vec![triplet(&mut v, 6), triplet(&mut v, 6)],
            speaker_triplets: vec![triplet(&mut v, 5)],
        };
        let mut rotated = batch.clone();
        rotated.utterances.rotate_left(rot);
        rotated.labels.rotate_left(rot);
        rotated.phoneme_triplets.reverse();
        let a = loss_total(&params, &batch).unwrap();
        let b = loss_total(&params, &rotated).unwrap();
        prop_assert!((a.total - b.total).abs() < 1e-12);
    }
}

#[test]
fn dataset_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..3 {
        let ds = generate_synthetic(&small_spec(seed)).unwrap();
        let path = write_dataset(dir.path().join(format!("d{seed}.jsonl")), &ds.manifest, &ds.records).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.records, ds.records);
        assert_eq!(back.manifest, ds.manifest);
    }
}

#[test]
fn mined_triplets_are_valid_and_reproducible() {
    for seed in 0..4 {
        let ds = generate_synthetic(&small_spec(seed)).unwrap();
        let partitions: BTreeMap<EmotionLabel, Partition> = cluster_all_emotions(&ds.records, 0.7, seed)
            .per_emotion
            .into_iter()
            .map(|(e, c)| (e, c.partition))
            .collect();
        let table = phoneme_similarity(&ds.records, &ds.manifest.phoneme_inventory, &PhonemeScope::Only(default_vowels()), "src", "tgt").unwrap();
        let anchors = select_anchors(&table, SelectionRule::TopK { k: 3 }).unwrap();
        let cfg = MiningConfig { anchors_per_batch: 128, seed, ..MiningConfig::default() };
        let by_id: HashMap<String, _> = ds.records.iter().map(|r| (r.record_id.clone(), r.clone())).collect();

        let phon = mine_phoneme_triplets(&ds.records, &anchors, &partitions, &cfg);
        let spk = mine_speaker_triplets(&ds.records, &partitions, &cfg);
        assert!(!phon.triplets.is_empty());
        for t in phon.triplets.iter().chain(&spk.triplets) {
            check_triplet(t, &by_id, &partitions, Some(&anchors)).unwrap_or_else(|e| panic!("{t:?}: {e}"));
        }
        assert_eq!(phon, mine_phoneme_triplets(&ds.records, &anchors, &partitions, &cfg));
        assert_eq!(spk, mine_speaker_triplets(&ds.records, &partitions, &cfg));
    }
}

#[test]
fn louvain_is_near_exhaustive_on_tiny_graphs() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let n = 4 + trial % 4;
        let edges = common::oracles::random_graph(&mut rng, n, 0.5);
        let g = SpeakerGraph::from_edges(n, &edges);
        let found = modularity(&g, &louvain(&g, trial as u64)).unwrap();
        let best = exhaustive_max_modularity(n, &edges);
        assert!(found >= 0.95 * best - 1e-12, "trial {trial}: {found} vs {best}");
    }
}

#[test]
fn partition_enumeration_counts_bell_numbers() {
    for (n, bell) in [(1, 1), (3, 5), (5, 52), (7, 877)] {
        let mut count = 0;
        for_each_partition(n, |_| count += 1);
        assert_eq!(count, bell);
    }
}
