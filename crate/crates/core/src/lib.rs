//! Speaker-style aware phoneme anchoring for cross-lingual speech emotion
//! recognition: embedding storage, speaker-style graphs, phoneme anchors,
//! triplet mining, the classifier with its training loop and evaluation.

pub mod anchors;
pub mod embstore;
pub mod error;
pub mod evalkit;
pub mod linalg;
pub mod model;
pub mod simgraph;
pub mod trainer;
pub mod triplets;
pub mod utterances;

pub use anchors::{
    phoneme_similarity, select_anchors, select_anchors_for, Anchor, AnchorSet, PhonemeScope,
    PhonemeSimilarityTable, SelectionRule,
};
pub use embstore::{
    generate_synthetic, generate_synthetic_with_truth, read_dataset, write_dataset, Dataset,
    DatasetManifest, EmbeddingRecord, EmotionLabel, RecordKind, Split, SyntheticSpec, N_EMOTIONS,
};
pub use error::{Error, Result};
pub use simgraph::{
    build_graph, cluster_all_emotions, cluster_all_emotions_with, cosine, louvain, modularity,
    ClusterOptions, ModularityReport, NodeId, Partition, SpeakerGraph,
};
pub use triplets::{
    mine_phoneme_triplets, mine_speaker_triplets, MiningConfig, MiningReport, Triplet,
    TripletSpace,
};
pub use evalkit::{
    evaluate_cross, group_transferability, permutation_test, uar, ConfusionMatrix, Evaluation,
    GroupAccuracyReport, Grouping, TransferOptions,
};
pub use model::{fuse, triplet_loss, Batch, ModelConfig, ModelParams};
pub use trainer::{run_mode_suite, train, Mode, TrainConfig, TrainReport};
pub use utterances::{assemble_utterances, LabeledUtterance};
