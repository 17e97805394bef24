//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line and
//! the process exits non-zero if any of them fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::fixtures::{ablation_spec, prepare, prepare_from, transfer_spec};
use common::gradcheck::{batch, max_param_error, perturbed_params, small_config, TOLERANCE};
use common::oracles::{
    adjusted_rand_index, brute_modularity, check_triplet, exhaustive_max_modularity, random_graph,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sapa_cli::artifacts::METRIC_FILES;
use sapa_cli::{cmd_all, Context, Overrides, PipelineConfig};
use sapa_core::embstore::{default_vowels, generate_synthetic_with_truth};
use sapa_core::evalkit::{group_transferability, TransferOptions};
use sapa_core::simgraph::{cluster_global, ClusterOptions, SpeakerGraph};
use sapa_core::trainer::run_mode_suite;
use sapa_core::{
    evaluate_cross, generate_synthetic, louvain, mine_phoneme_triplets, mine_speaker_triplets, modularity,
    phoneme_similarity, select_anchors, train, uar, ConfusionMatrix, EmotionLabel, MiningConfig, Mode,
    Partition, PhonemeScope, SelectionRule, SyntheticSpec, TrainConfig,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let k = rng.random_range(1..=n);
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

fn modularity_matches_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for g in 0..200 {
        let n = rng.random_range(2..=20);
        let density = rng.random_range(0.2..1.0);
        let edges = random_graph(&mut rng, n, density);
        if edges.is_empty() {
            continue;
        }
        let graph = SpeakerGraph::from_edges(n, &edges);
        let mut candidates = vec![random_labels(&mut rng, n), louvain(&graph, g).labels];
        candidates.push((0..n).collect());
        candidates.push(vec![0; n]);
        for labels in candidates {
            let q = modularity(&graph, &Partition::from_labels(graph.node_ids(), &labels)).map_err(|e| e.to_string())?;
            let expected = brute_modularity(n, &edges, &labels);
            worst = worst.max((q - expected).abs());
        }
    }
    ensure(worst < 1e-12, || format!("max |Q - oracle| = {worst:e}"))?;
    Ok(format!("max |Q - oracle| = {worst:.1e}"))
}

fn louvain_near_exhaustive() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::INFINITY;
    let (mut scored, mut g) = (0, 0u64);
    while scored < 50 {
        let n = rng.random_range(3..=8);
        let density = rng.random_range(0.25..0.9);
        let edges = random_graph(&mut rng, n, density);
        g += 1;
        if edges.is_empty() {
            continue;
        }
        let best = exhaustive_max_modularity(n, &edges);
        let graph = SpeakerGraph::from_edges(n, &edges);
        let found = modularity(&graph, &louvain(&graph, g)).map_err(|e| e.to_string())?;
        // a maximum within rounding of zero leaves no ratio to test
        if best <= 1e-12 {
            ensure(found >= best - 1e-12, || format!("graph {g} (n={n}): Q {found} vs max {best}"))?;
            continue;
        }
        scored += 1;
        worst = worst.min(found / best);
        ensure(found >= 0.95 * best, || format!("graph {g} (n={n}): Q {found} vs max {best}"))?;
    }
    let triangles = [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)];
    let graph = SpeakerGraph::from_edges(6, &triangles);
    for seed in 0..5 {
        let q = modularity(&graph, &louvain(&graph, seed)).map_err(|e| e.to_string())?;
        ensure(q == 0.5, || format!("two triangles: Q = {q:?}"))?;
    }
    Ok(format!("worst ratio {worst:.4}; two triangles Q = 0.5"))
}

fn gradients_match() -> Outcome {
    let cfg = small_config();
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let params = perturbed_params(&cfg, seed);
        let (err, at) = max_param_error(&params, &batch(&params, seed + 100));
        ensure(err < TOLERANCE, || format!("seed {seed}: relative error {err:e} at {at}"))?;
        worst = worst.max(err);
    }
    Ok(format!("max relative error {worst:.1e} over 5 seeds"))
}

fn planted_structure_recovered() -> Outcome {
    let mut min_ari = 1.0f64;
    for seed in 0..3 {
        let spec = SyntheticSpec {
            seed,
            cross_corpus_anchor_gap: 0.2,
            non_anchor_gap: 0.9,
            ..SyntheticSpec::default()
        };
        let (dataset, truth) = generate_synthetic_with_truth(&spec).map_err(|e| e.to_string())?;
        let p = prepare_from(dataset, seed);
        for (emotion, partition) in &p.partitions {
            let planted: Vec<usize> = partition
                .nodes
                .iter()
                .map(|n| truth.style_cluster[emotion][&(n.corpus_id.clone(), n.speaker_id.clone())])
                .collect();
            let ari = adjusted_rand_index(&partition.labels, &planted);
            min_ari = min_ari.min(ari);
            ensure(ari >= 0.95, || format!("seed {seed} {emotion}: ARI {ari:.3}"))?;
        }
        let table = phoneme_similarity(
            &p.dataset.records,
            &p.dataset.manifest.phoneme_inventory,
            &PhonemeScope::Only(default_vowels()),
            "src",
            "tgt",
        )
        .map_err(|e| e.to_string())?;
        let chosen = select_anchors(&table, SelectionRule::Threshold { theta: 0.5 }).map_err(|e| e.to_string())?;
        for (emotion, expected) in &spec.anchored_phonemes {
            let got: BTreeSet<&str> = chosen.phonemes(*emotion).into_iter().collect();
            let want: BTreeSet<&str> = expected.iter().map(String::as_str).collect();
            ensure(got == want, || format!("seed {seed} {emotion}: anchors {got:?}, planted {want:?}"))?;
        }
    }
    Ok(format!("min ARI {min_ari:.3}; anchors exact on 3 datasets"))
}

fn ablation_ordering() -> Outcome {
    let mut uars: BTreeMap<Mode, Vec<f64>> = BTreeMap::new();
    for seed in 0..10u64 {
        let p = prepare(&ablation_spec(100 + seed), seed);
        let base = TrainConfig {
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let runs = run_mode_suite(&p.dataset.records, &base, &[seed], &p.anchors, &p.partitions)
            .map_err(|e| e.to_string())?;
        for (mode, rs) in runs {
            for run in rs {
                let (params, _) = run.outcome.map_err(|e| format!("{mode} seed {seed}: {e}"))?;
                let ev = evaluate_cross(&params, &p.dataset.records, "tgt").map_err(|e| e.to_string())?;
                uars.entry(mode).or_default().push(ev.uar);
            }
        }
    }
    let mean = |m: Mode| 100.0 * uars[&m].iter().sum::<f64>() / uars[&m].len() as f64;
    let summary = Mode::ALL
        .iter()
        .map(|m| format!("{} {:.2}", m.label(), mean(*m)))
        .collect::<Vec<_>>()
        .join(", ");
    let (sapa, only_p, only_s) = (mean(Mode::Sapa), mean(Mode::OnlyP), mean(Mode::OnlyS));
    ensure(sapa - only_p >= 2.0 && only_p - only_s >= 2.0, || format!("UAR means: {summary}"))?;
    Ok(format!("UAR means over 10 seeds: {summary}"))
}

fn transferability_direction() -> Outcome {
    let styled = [EmotionLabel::Happiness, EmotionLabel::Anger, EmotionLabel::Sadness];
    let seeds = 10u64;
    let mut sums: BTreeMap<EmotionLabel, (f64, f64)> = BTreeMap::new();
    for seed in 0..seeds {
        let p = prepare(&transfer_spec(200 + seed), seed);
        let global = cluster_global(&p.dataset.records, &ClusterOptions { seed, ..ClusterOptions::default() })
            .map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            seed,
            mode: Mode::Sapa,
            ..TrainConfig::default()
        };
        let (params, _) = train(&p.dataset.records, &cfg, &p.anchors, &p.partitions).map_err(|e| e.to_string())?;
        let reports = group_transferability(
            &params,
            &p.dataset.records,
            "tgt",
            &p.partitions,
            &global.partition,
            TransferOptions { seed, n_random_seeds: 10 },
        )
        .map_err(|e| e.to_string())?;
        let (with, random) = (&reports[0], &reports[2]);
        for e in EmotionLabel::ALL {
            let entry = sums.entry(e).or_default();
            entry.0 += with.macro_for(e).unwrap_or(f64::NAN) / seeds as f64;
            entry.1 += random.macro_for(e).unwrap_or(f64::NAN) / seeds as f64;
        }
    }
    let summary = EmotionLabel::ALL
        .iter()
        .map(|e| format!("{} w {:.3} r {:.3}", e.as_str(), sums[e].0, sums[e].1))
        .collect::<Vec<_>>()
        .join(", ");
    for e in styled {
        let (w, r) = sums[&e];
        ensure(w >= r, || format!("{e}: with-emotion {w:.3} < random {r:.3} ({summary})"))?;
    }
    Ok(summary)
}

fn run_all(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    let tiny = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.toml");
    let overrides = Overrides {
        out_dir: Some(dir.to_path_buf()),
        ..Overrides::default()
    };
    let config = PipelineConfig::load(&tiny)
        .and_then(|c| c.resolve(&overrides))
        .map_err(|e| e.to_string())?;
    cmd_all(&Context::new(config)).map_err(|e| e.to_string())?;
    METRIC_FILES
        .iter()
        .map(|f| std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}")))
        .collect()
}

fn pipeline_is_deterministic() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("run");
    let first = run_all(&out)?;
    std::fs::remove_dir_all(&out).map_err(|e| e.to_string())?;
    let second = run_all(&out)?;
    for (name, (a, b)) in METRIC_FILES.iter().zip(first.iter().zip(&second)) {
        ensure(a == b, || format!("{name} differs between runs"))?;
    }
    let bytes: usize = first.iter().map(Vec::len).sum();
    Ok(format!("{} metric files identical ({bytes} bytes)", METRIC_FILES.len()))
}

fn mined_triplets_valid() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0usize;
    for seed in 0..20u64 {
        let spec = SyntheticSpec {
            seed: 300 + seed,
            speakers_per_corpus: rng.random_range(4..=10),
            utterances_per_speaker: rng.random_range(3..=8),
            segments_per_utterance: rng.random_range(2..=6),
            d_s: 8,
            d_c: 8,
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic(&spec).map_err(|e| e.to_string())?;
        let p = prepare_from(ds, seed);
        let by_id: HashMap<String, _> = p.dataset.records.iter().map(|r| (r.record_id.clone(), r.clone())).collect();
        for restrict in [true, false] {
            let cfg = MiningConfig {
                anchors_per_batch: 64,
                batches: 2,
                restrict_to_anchor_set: restrict,
                seed,
                ..MiningConfig::default()
            };
            let phon = mine_phoneme_triplets(&p.dataset.records, &p.anchors, &p.partitions, &cfg);
            let spk = mine_speaker_triplets(&p.dataset.records, &p.partitions, &cfg);
            let anchors = restrict.then_some(&p.anchors);
            for t in phon.triplets.iter().chain(&spk.triplets) {
                check_triplet(t, &by_id, &p.partitions, anchors).map_err(|e| format!("dataset {seed}: {e}"))?;
                checked += 1;
            }
        }
    }
    ensure(checked > 0, || "no triplets mined".into())?;
    Ok(format!("{checked} triplets accepted on 20 datasets"))
}

fn uar_suite() -> Outcome {
    use EmotionLabel::*;
    let perfect = ConfusionMatrix::from_pairs(EmotionLabel::ALL.iter().flat_map(|e| [(*e, *e); 3]));
    let u = uar(&perfect).map_err(|e| e.to_string())?;
    ensure(u == 1.0, || format!("perfect UAR {u}"))?;

    let mixed = ConfusionMatrix::from_pairs([
        (Neutral, Neutral),
        (Neutral, Neutral),
        (Happiness, Happiness),
        (Happiness, Neutral),
        (Anger, Anger),
        (Anger, Anger),
        (Anger, Sadness),
        (Anger, Sadness),
        (Sadness, Anger),
        (Sadness, Neutral),
    ]);
    let u = uar(&mixed).map_err(|e| e.to_string())?;
    ensure((u - 0.5).abs() < 1e-12, || format!("recalls (1, .5, .5, 0) give UAR {u}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let pairs: Vec<(EmotionLabel, EmotionLabel)> = (0..rng.random_range(4..40))
            .map(|_| {
                let t = EmotionLabel::ALL[rng.random_range(0..4)];
                let p = EmotionLabel::ALL[rng.random_range(0..4)];
                (t, p)
            })
            .collect();
        let copies = rng.random_range(2..5);
        let once = uar(&ConfusionMatrix::from_pairs(pairs.clone()));
        let many = uar(&ConfusionMatrix::from_pairs(pairs.iter().cycle().take(pairs.len() * copies).copied()));
        match (once, many) {
            (Ok(a), Ok(b)) => ensure((a - b).abs() < 1e-12, || format!("duplication changed UAR {a} -> {b}"))?,
            (Err(_), Err(_)) => {}
            (a, b) => return Err(format!("duplication changed definedness: {a:?} vs {b:?}")),
        }
    }
    Ok("perfect 1.0, mixed 0.5, duplication invariant".into())
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("1 modularity oracle", Duration::from_secs(10), modularity_matches_oracle),
        ("2 louvain optimality", Duration::from_secs(60), louvain_near_exhaustive),
        ("3 gradient check", Duration::from_secs(60), gradients_match),
        ("4 planted recovery", Duration::from_secs(30), planted_structure_recovered),
        ("5 ablation ordering", Duration::from_secs(15 * 60), ablation_ordering),
        ("6 group transferability", Duration::from_secs(5 * 60), transferability_direction),
        ("7 determinism", Duration::MAX, pipeline_is_deterministic),
        ("8 triplet validity", Duration::MAX, mined_triplets_valid),
        ("9 uar suite", Duration::MAX, uar_suite),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed > budget {
                Err(format!("{detail}; took {elapsed:.1?}, budget {budget:?}"))
            } else {
                Ok(detail)
            }
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{elapsed:.1?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} [{elapsed:.1?}]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
