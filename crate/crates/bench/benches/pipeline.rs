use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sapa_core::model::{backward, forward, Batch, ModelConfig, TripletInput, UtteranceInput};
use sapa_core::{build_graph, generate_synthetic, louvain, modularity, EmotionLabel, ModelParams, SyntheticSpec};

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_batch(cfg: &ModelConfig, size: usize, segments: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let utterances = (0..size)
        .map(|_| UtteranceInput {
            segments: (0..segments).map(|_| random_vec(&mut rng, cfg.d_c)).collect(),
            speaker: random_vec(&mut rng, cfg.d_s),
        })
        .collect();
    let labels = (0..size).map(|i| i % 4).collect();
    let triplets = |dim: usize, rng: &mut ChaCha8Rng| -> Vec<TripletInput> {
        (0..size)
            .map(|_| TripletInput {
                anchor: random_vec(rng, dim),
                positive: random_vec(rng, dim),
                negative: random_vec(rng, dim),
            })
            .collect()
    };
    let phoneme_triplets = triplets(cfg.d_c, &mut rng);
    let speaker_triplets = triplets(cfg.d_s, &mut rng);
    Batch {
        utterances,
        labels,
        phoneme_triplets,
        speaker_triplets,
    }
}

fn graphs(c: &mut Criterion) {
    let mut group = c.benchmark_group("graph");
    for speakers in [16, 64] {
        let spec = SyntheticSpec {
            speakers_per_corpus: speakers,
            utterances_per_speaker: 4,
            segments_per_utterance: 2,
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let graph = build_graph(&ds.records, EmotionLabel::Anger, 0.7).unwrap();
        let partition = louvain(&graph, 0);
        group.bench_with_input(BenchmarkId::new("louvain", 2 * speakers), &graph, |b, g| {
            b.iter(|| louvain(black_box(g), 0))
        });
        group.bench_with_input(BenchmarkId::new("modularity", 2 * speakers), &graph, |b, g| {
            b.iter(|| modularity(black_box(g), &partition).unwrap())
        });
    }
    group.finish();
}

fn model(c: &mut Criterion) {
    let cfg = ModelConfig::default();
    let params = ModelParams::init(&cfg, 0).unwrap();
    let batch = random_batch(&cfg, 32, 6, 1);
    let mut group = c.benchmark_group("model");
    group.sample_size(20);
    group.bench_function("forward", |b| b.iter(|| forward(&params, black_box(&batch)).unwrap()));
    group.bench_function("backward", |b| b.iter(|| backward(&params, black_box(&batch)).unwrap()));
    group.finish();
}

criterion_group!(benches, graphs, model);
criterion_main!(benches);
