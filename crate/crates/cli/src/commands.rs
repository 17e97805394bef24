//! One function per pipeline stage. Each reads upstream artifacts from the
//! output directory, writes its own, and returns the paths it wrote.

use std::collections::BTreeMap;
use std::path::PathBuf;

use sapa_core::embstore::{default_vowels, read_dataset, Dataset};
use sapa_core::evalkit::{
    evaluate_split, format_ablation_table, format_transfer_table, group_transferability,
    summarize_runs, AblationRow, GroupAccuracyReport, PermutationOptions, TransferOptions,
};
use sapa_core::model::CHECKPOINT_VERSION;
use sapa_core::simgraph::{cluster_all_emotions_with, cluster_global, ClusterOptions, ModularityReport};
use sapa_core::trainer::StopReason;
use sapa_core::{
    evaluate_cross, generate_synthetic, phoneme_similarity, run_mode_suite, select_anchors, train,
    write_dataset, AnchorSet, EmotionLabel, Mode, ModelParams, Partition, PhonemeScope,
    PhonemeSimilarityTable, Split, TrainReport,
};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, require, Context};
use crate::config::PhonemeSet;
use crate::error::CliError;

pub type Written = Vec<PathBuf>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partitions {
    pub per_emotion: BTreeMap<EmotionLabel, Partition>,
    pub global: Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularitySummary {
    pub per_emotion: Vec<ModularityReport>,
    pub global: ModularityReport,
    pub notices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorArtifact {
    pub anchors: AnchorSet,
    pub similarity: PhonemeSimilarityTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub source_corpus: String,
    pub target_corpus: String,
    pub cross_uar: f64,
    pub cross_recalls: BTreeMap<EmotionLabel, f64>,
    pub confusion: [[u64; 4]; 4],
    pub n_scored: usize,
    pub within_source_uar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub mode: Mode,
    pub seed: u64,
    pub cross_uar: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs: Option<usize>,
    pub stop_reason: Option<StopReason>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResults {
    pub direction: String,
    pub rows: Vec<AblationRow>,
    pub runs: Vec<AblationRun>,
}

#[derive(Serialize)]
struct CheckpointOut<'a> {
    version: u32,
    config_hash: &'a str,
    seed: u64,
    params: &'a ModelParams,
}

fn direction(ctx: &Context) -> String {
    format!("{}→{}", ctx.config.source_corpus, ctx.config.target_corpus)
}

fn load_dataset(ctx: &Context) -> Result<Dataset, CliError> {
    let path = ctx.config.dataset_path();
    require(&path)?;
    let dataset = read_dataset(&path)?;
    for corpus in [&ctx.config.source_corpus, &ctx.config.target_corpus] {
        if !dataset.manifest.corpora.contains(corpus) {
            return Err(CliError::Config(format!(
                "corpus {corpus} does not occur in {}",
                path.display()
            )));
        }
    }
    Ok(dataset)
}

fn load_model(ctx: &Context) -> Result<ModelParams, CliError> {
    let path = ctx.path(artifacts::MODEL);
    require(&path)?;
    Ok(ModelParams::load(&path)?)
}

pub fn cmd_synth(ctx: &Context) -> Result<Written, CliError> {
    let mut dataset = generate_synthetic(&ctx.config.synthetic)?;
    dataset
        .manifest
        .provenance
        .insert("config_hash".into(), ctx.hash.clone());
    dataset
        .manifest
        .provenance
        .insert("seed".into(), ctx.config.seed.to_string());
    let path = write_dataset(ctx.path(artifacts::DATASET), &dataset.manifest, &dataset.records)?;
    Ok(vec![path])
}

pub fn cmd_graph(ctx: &Context) -> Result<Written, CliError> {
    let dataset = load_dataset(ctx)?;
    let opts = ClusterOptions {
        tau: ctx.config.graph.tau,
        seed: ctx.config.seed,
        corpus: None,
        unweighted: ctx.config.graph.unweighted,
    };
    let outcome = cluster_all_emotions_with(&dataset.records, &opts);
    for notice in &outcome.notices {
        log::warn!("{notice}");
    }
    let global = cluster_global(&dataset.records, &opts)?;
    let mut written = Vec::new();
    let mut export = |name: &str, c: &sapa_core::simgraph::EmotionClustering| -> Result<(), CliError> {
        written.push(ctx.write_text(&format!("graph/{name}.edges.tsv"), "#", &c.graph.to_edge_list())?);
        written.push(ctx.write_text(&format!("graph/{name}.communities.csv"), "#", &c.partition.to_csv())?);
        written.push(ctx.write_text(&format!("graph/{name}.dot"), "//", &c.graph.to_dot(Some(&c.partition)))?);
        Ok(())
    };
    for (emotion, c) in &outcome.per_emotion {
        export(emotion.as_str(), c)?;
    }
    export("global", &global)?;

    let summary = ModularitySummary {
        per_emotion: outcome.per_emotion.values().map(|c| c.report.clone()).collect(),
        global: global.report.clone(),
        notices: outcome.notices.clone(),
    };
    written.push(ctx.write_json(artifacts::MODULARITY, &summary)?);
    let partitions = Partitions {
        per_emotion: outcome
            .per_emotion
            .into_iter()
            .map(|(e, c)| (e, c.partition))
            .collect(),
        global: global.partition,
    };
    written.push(ctx.write_json(artifacts::PARTITIONS, &partitions)?);
    Ok(written)
}

pub fn cmd_anchors(ctx: &Context) -> Result<Written, CliError> {
    let dataset = load_dataset(ctx)?;
    let scope = match ctx.config.anchors.phonemes {
        PhonemeSet::Vowels => PhonemeScope::Only(default_vowels()),
        PhonemeSet::All => PhonemeScope::All,
    };
    let similarity = phoneme_similarity(
        &dataset.records,
        &dataset.manifest.phoneme_inventory,
        &scope,
        &ctx.config.source_corpus,
        &ctx.config.target_corpus,
    )?;
    let anchors = select_anchors(&similarity, ctx.config.anchors.rule)?;
    let csv = ctx.write_text(artifacts::SIMILARITY, "#", &similarity.to_csv())?;
    let json = ctx.write_json(artifacts::ANCHORS, &AnchorArtifact { anchors, similarity })?;
    Ok(vec![csv, json])
}

struct Upstream {
    dataset: Dataset,
    partitions: Partitions,
    anchors: AnchorSet,
}

fn load_upstream(ctx: &Context) -> Result<Upstream, CliError> {
    let dataset = load_dataset(ctx)?;
    let partitions: Partitions = ctx.read_json(artifacts::PARTITIONS)?;
    let anchors: AnchorArtifact = ctx.read_json(artifacts::ANCHORS)?;
    Ok(Upstream {
        dataset,
        partitions,
        anchors: anchors.anchors,
    })
}

pub fn cmd_train(ctx: &Context) -> Result<Written, CliError> {
    let up = load_upstream(ctx)?;
    let (params, report) = train(
        &up.dataset.records,
        &ctx.config.train,
        &up.anchors,
        &up.partitions.per_emotion,
    )?;
    let model_path = ctx.path(artifacts::MODEL);
    let ckpt = CheckpointOut {
        version: CHECKPOINT_VERSION,
        config_hash: &ctx.hash,
        seed: ctx.config.seed,
        params: &params,
    };
    let text = serde_json::to_string(&ckpt).map_err(|e| CliError::Io(e.to_string()))?;
    artifacts::write_file(&model_path, &text)?;
    let report_path = ctx.write_json(artifacts::TRAIN_REPORT, &report)?;
    if let StopReason::Diverged { epoch, message } = &report.stop_reason {
        return Err(CliError::Numeric(format!(
            "training diverged in epoch {epoch}: {message}; best earlier parameters saved"
        )));
    }
    Ok(vec![model_path, report_path])
}

pub fn cmd_eval(ctx: &Context) -> Result<Written, CliError> {
    let dataset = load_dataset(ctx)?;
    let params = load_model(ctx)?;
    let cross = evaluate_cross(&params, &dataset.records, &ctx.config.target_corpus)?;
    let within = evaluate_split(&params, &dataset.records, &ctx.config.source_corpus, Split::Test)?;
    let metrics = Metrics {
        source_corpus: ctx.config.source_corpus.clone(),
        target_corpus: ctx.config.target_corpus.clone(),
        cross_uar: cross.uar,
        cross_recalls: cross.recalls.clone(),
        confusion: cross.confusion.counts,
        n_scored: cross.n_scored,
        within_source_uar: within.uar,
    };
    let mut csv = String::from("corpus_id,speaker_id,utterance_id,emotion,predicted\n");
    for p in &cross.predictions {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            p.corpus_id, p.speaker_id, p.utterance_id, p.emotion, p.predicted
        ));
    }
    Ok(vec![
        ctx.write_json(artifacts::METRICS, &metrics)?,
        ctx.write_text(artifacts::PREDICTIONS, "#", &csv)?,
    ])
}

pub fn cmd_ablate(ctx: &Context) -> Result<Written, CliError> {
    let up = load_upstream(ctx)?;
    let seeds: Vec<u64> = (0..ctx.config.ablation.runs as u64)
        .map(|i| ctx.config.seed + i)
        .collect();
    let suite = run_mode_suite(
        &up.dataset.records,
        &ctx.config.train,
        &seeds,
        &up.anchors,
        &up.partitions.per_emotion,
    )?;
    let mut runs = Vec::new();
    let mut per_mode: Vec<(String, Vec<f64>)> = Vec::new();
    for mode in Mode::ALL {
        let mut uars = Vec::new();
        for run in suite.get(&mode).into_iter().flatten() {
            let record = match &run.outcome {
                Ok((params, report)) => {
                    let eval = evaluate_cross(params, &up.dataset.records, &ctx.config.target_corpus)?;
                    uars.push(eval.uar);
                    finished_run(mode, run.seed, eval.uar, report)
                }
                Err(message) => {
                    log::warn!("{mode} seed {}: {message}", run.seed);
                    AblationRun {
                        mode,
                        seed: run.seed,
                        cross_uar: None,
                        best_epoch: None,
                        epochs: None,
                        stop_reason: None,
                        error: Some(message.clone()),
                    }
                }
            };
            runs.push(record);
        }
        per_mode.push((mode.label().to_string(), uars));
    }
    let opts = PermutationOptions {
        seed: ctx.config.seed,
        ..PermutationOptions::default()
    };
    let rows = summarize_runs(&per_mode, Some(Mode::Sapa.label()), opts)?;
    let results = AblationResults {
        direction: direction(ctx),
        rows,
        runs,
    };
    let table = format_ablation_table(&results.direction, &results.rows);
    Ok(vec![
        ctx.write_json(artifacts::ABLATION, &results)?,
        ctx.write_text(artifacts::ABLATION_TABLE, "#", &table)?,
    ])
}

fn finished_run(mode: Mode, seed: u64, uar: f64, report: &TrainReport) -> AblationRun {
    AblationRun {
        mode,
        seed,
        cross_uar: Some(uar),
        best_epoch: Some(report.best_epoch),
        epochs: Some(report.epochs.len()),
        stop_reason: Some(report.stop_reason.clone()),
        error: None,
    }
}

pub fn cmd_transfer(ctx: &Context) -> Result<Written, CliError> {
    let dataset = load_dataset(ctx)?;
    let params = load_model(ctx)?;
    let partitions: Partitions = ctx.read_json(artifacts::PARTITIONS)?;
    let opts = TransferOptions {
        n_random_seeds: ctx.config.transfer.n_random_seeds,
        seed: ctx.config.seed,
    };
    let reports: Vec<GroupAccuracyReport> = group_transferability(
        &params,
        &dataset.records,
        &ctx.config.target_corpus,
        &partitions.per_emotion,
        &partitions.global,
        opts,
    )?;
    for notice in reports.iter().flat_map(|r| &r.notices) {
        log::warn!("{notice}");
    }
    let table = format_transfer_table(&reports);
    Ok(vec![
        ctx.write_json(artifacts::TRANSFER, &reports)?,
        ctx.write_text(artifacts::TRANSFER_TABLE, "#", &table)?,
    ])
}

/// Every stage in order; data is generated unless the config names a file.
pub fn cmd_all(ctx: &Context) -> Result<Written, CliError> {
    let mut written = Vec::new();
    if ctx.config.dataset.is_none() {
        written.extend(cmd_synth(ctx)?);
    }
    written.extend(cmd_graph(ctx)?);
    written.extend(cmd_anchors(ctx)?);
    written.extend(cmd_train(ctx)?);
    written.extend(cmd_eval(ctx)?);
    written.extend(cmd_ablate(ctx)?);
    written.extend(cmd_transfer(ctx)?);
    Ok(written)
}
