//! LOSO experiment orchestration: per-fold prompt optimization, feature
//! extraction, fusion, training, and held-out prediction, aggregated over
//! seeds into reports with full provenance for the leakage audit.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{
    build_sequence, EmbedError, FusionOptions, HashingEmbedder, MultimodalSequence,
    PrecomputedStore, VectorRow,
};
use crate::gateway::CompletionBackend;
use crate::metrics::{compute_metrics, mean_metrics, Metrics, MetricsError};
use crate::preprocess::{clean_cohort, PreprocessError, WakeWordScope};
use crate::prompt_opt::{
    build_initial_prompt, extract_features, optimize, sample_minibatch, LinguisticSummary,
    PromptOptError,
};
use crate::synth::{SynthConfig, SyntheticCohort};
use crate::tsmodel::{predict, train, ModelConfig, TrainConfig, TsModelError};
use crate::types::{Label, MonthlyTranscript};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("harness configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    PromptOpt(#[from] PromptOptError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Model(#[from] TsModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("report I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// One LOSO fold: the held-out participant and everyone else.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub held_out: String,
    pub train: Vec<String>,
}

/// N participants give N folds; fold i tests exactly participant i.
pub fn loso_split(participants: &[String]) -> Result<Vec<Fold>, HarnessError> {
    if participants.len() < 2 {
        return Err(HarnessError::Config(format!(
            "leave-one-subject-out needs at least 2 participants, got {}",
            participants.len()
        )));
    }
    Ok(participants
        .iter()
        .map(|held_out| Fold {
            held_out: held_out.clone(),
            train: participants
                .iter()
                .filter(|p| *p != held_out)
                .cloned()
                .collect(),
        })
        .collect())
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// All stage randomness derives from (global seed, fold, seed, stage salt)
/// so serial and parallel execution orders agree.
pub fn derive_seed(global: u64, fold: u64, seed: u64, salt: u64) -> u64 {
    splitmix64(global ^ splitmix64(seed ^ splitmix64(fold ^ splitmix64(salt))))
}

fn fnv1a_str(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Cleaned cohort plus labels and the acoustic vector store; the unit all
/// experiments run over.
pub struct CohortData {
    pub transcripts: BTreeMap<String, Vec<MonthlyTranscript>>,
    pub labels: BTreeMap<String, Label>,
    pub acoustic: PrecomputedStore,
    pub acoustic_dim: usize,
    pub t_months: u32,
}

impl CohortData {
    pub fn from_synthetic(
        cohort: &SyntheticCohort,
        config: &SynthConfig,
    ) -> Result<Self, HarnessError> {
        let cleaned = clean_cohort(
            cohort.records.clone(),
            config.study_start,
            config.t_months,
            WakeWordScope::Pooled,
        )?;
        let mut store = PrecomputedStore::new(config.acoustic_dim, 1);
        for row in &cohort.acoustic {
            store.insert(VectorRow {
                participant_id: row.participant_id.clone(),
                month_index: row.month_index,
                modality: crate::embed::Modality::Acoustic,
                vector: row.vector.clone(),
            })?;
        }
        let labels = cohort
            .labels
            .iter()
            .map(|l| (l.participant_id.clone(), l.label))
            .collect();
        Ok(CohortData {
            transcripts: cleaned.transcripts,
            labels,
            acoustic: store,
            acoustic_dim: config.acoustic_dim,
            t_months: config.t_months,
        })
    }

    pub fn participants(&self) -> Vec<String> {
        self.transcripts.keys().cloned().collect()
    }

    /// Content hash over rendered transcripts and labels, for provenance.
    pub fn content_hash(&self) -> String {
        let mut blob = String::new();
        for (pid, months) in &self.transcripts {
            for t in months {
                blob.push_str(pid);
                blob.push(':');
                blob.push_str(&t.month_index.to_string());
                blob.push('\n');
                blob.push_str(&t.render());
            }
        }
        for (pid, label) in &self.labels {
            blob.push_str(&format!("{pid}={label}\n"));
        }
        format!("{:016x}", fnv1a_str(&blob))
    }
}

/// Prediction granularity. Participant-level (one prediction per held-out
/// participant) is canonical; window mode predicts from months 1..t for
/// every t >= t_min.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalGranularity {
    Participant,
    Window { t_min: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seeds: Vec<u64>,
    pub global_seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub linguistic_dim: usize,
    pub max_prompt_iter: u32,
    /// Ablation: reuse the unrefined initial prompt throughout.
    pub skip_prompt_opt: bool,
    pub fusion: FusionOptions,
    pub granularity: EvalGranularity,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed required".into()));
        }
        if self.max_prompt_iter == 0 {
            return Err(HarnessError::Config("max_prompt_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_id: String,
    pub seed: u64,
    pub prediction: Option<Label>,
    pub probability: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldProvenance {
    pub seed: u64,
    pub held_out: String,
    pub minibatch_participants: BTreeSet<String>,
    pub train_participants: BTreeSet<String>,
    pub lineage_len: usize,
    pub best_prompt_iteration: u32,
    pub best_prompt_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub seed: u64,
    pub fold_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub configuration: String,
    pub per_seed: Vec<SeedMetrics>,
    pub mean: Metrics,
    pub cohort_hash: String,
    pub folds: Vec<FoldResult>,
    pub provenance: Vec<FoldProvenance>,
    pub failures: Vec<FoldFailure>,
}

struct FoldOutput {
    results: Vec<FoldResult>,
    provenance: FoldProvenance,
}

fn labeled_months(
    data: &CohortData,
    participants: &[String],
) -> Vec<(MonthlyTranscript, Label)> {
    let mut out = Vec::new();
    for pid in participants {
        let label = data.labels[pid];
        for t in &data.transcripts[pid] {
            if !t.is_empty() {
                out.push((t.clone(), label));
            }
        }
    }
    out
}

fn run_fold(
    data: &CohortData,
    gateway: &dyn CompletionBackend,
    config: &PipelineConfig,
    seed: u64,
    fold_idx: u64,
    fold: &Fold,
) -> Result<FoldOutput, (String, HarnessError)> {
    let stage = |s: &str| s.to_string();

    // Prompt optimization sees training participants only.
    let items = labeled_months(data, &fold.train);
    let mb_seed = derive_seed(config.global_seed, fold_idx, seed, 0);
    let split = sample_minibatch(&items, mb_seed);
    let minibatch_participants: BTreeSet<String> = split
        .train
        .iter()
        .chain(&split.val)
        .map(|(t, _)| t.participant_id.clone())
        .collect();

    let p_init = build_initial_prompt(&split.train, mb_seed)
        .map_err(|e| (stage("prompt_init"), e.into()))?;
    let iterations = if config.skip_prompt_opt { 1 } else { config.max_prompt_iter };
    let (best, lineage) = optimize(p_init, &split, gateway, iterations)
        .map_err(|e| (stage("prompt_opt"), e.into()))?;

    // Extract summaries with the selected prompt for every participant;
    // held-out data is only ever read here for its own prediction.
    let embedder = HashingEmbedder { dim: config.linguistic_dim };
    let mut sequences: BTreeMap<String, MultimodalSequence> = BTreeMap::new();
    for (pid, months) in &data.transcripts {
        let mut summaries: BTreeMap<u32, LinguisticSummary> = BTreeMap::new();
        for t in months {
            let summary = extract_features(t, &best.template, gateway, best.iteration)
                .map_err(|e| (stage("extract"), PromptOptError::from(e).into()))?;
            summaries.insert(t.month_index, summary);
        }
        let seq = build_sequence(
            pid,
            data.t_months,
            &summaries,
            &data.acoustic,
            &embedder,
            config.fusion,
        )
        .map_err(|e| (stage("embed"), e.into()))?;
        sequences.insert(pid.clone(), seq);
    }

    // Early-stopping validation split carved from training participants.
    let mut train_ids = fold.train.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.global_seed, fold_idx, seed, 1));
    train_ids.shuffle(&mut rng);
    let n_val = (train_ids.len() / 5).max(1);
    let val_ids = train_ids.split_off(train_ids.len() - n_val);

    let to_set = |ids: &[String]| -> Vec<(MultimodalSequence, u8)> {
        ids.iter()
            .map(|pid| {
                (
                    sequences[pid].clone(),
                    (data.labels[pid] == Label::Mci) as u8,
                )
            })
            .collect()
    };
    let train_set = to_set(&train_ids);
    let val_set = to_set(&val_ids);

    let mut model_config = config.model.clone();
    model_config.t_months = data.t_months as usize;
    model_config.n_variates = data.acoustic_dim + config.linguistic_dim;
    model_config.seed = derive_seed(config.global_seed, fold_idx, seed, 2);
    let mut train_config = config.train.clone();
    train_config.seed = derive_seed(config.global_seed, fold_idx, seed, 3);

    let model = train(&model_config, &train_config, &train_set, &val_set)
        .map_err(|e| (stage("train"), e.into()))?;

    let held_seq = &sequences[&fold.held_out];
    let label = data.labels[&fold.held_out];
    let mut results = Vec::new();
    match config.granularity {
        EvalGranularity::Participant => {
            let (prediction, probability) =
                predict(&model, held_seq).map_err(|e| (stage("predict"), e.into()))?;
            results.push(FoldResult {
                fold_id: fold.held_out.clone(),
                seed,
                prediction: Some(prediction),
                probability,
                label,
            });
        }
        EvalGranularity::Window { t_min } => {
            for t in t_min..=data.t_months {
                let mut truncated = held_seq.clone();
                for m in (t as usize)..truncated.rows.len() {
                    truncated.rows[m].fill(0.0);
                    truncated.mask[m] = false;
                }
                let (prediction, probability) =
                    predict(&model, &truncated).map_err(|e| (stage("predict"), e.into()))?;
                results.push(FoldResult {
                    fold_id: fold.held_out.clone(),
                    seed,
                    prediction: Some(prediction),
                    probability,
                    label,
                });
            }
        }
    }

    Ok(FoldOutput {
        results,
        provenance: FoldProvenance {
            seed,
            held_out: fold.held_out.clone(),
            minibatch_participants,
            train_participants: train_ids.iter().chain(&val_ids).cloned().collect(),
            lineage_len: lineage.len(),
            best_prompt_iteration: best.iteration,
            best_prompt_f1: best.val_f1,
        },
    })
}

/// Runs the full pipeline per fold and seed; fold failures are recorded and
/// the report marks partial results instead of aborting the experiment.
pub fn run_pipeline(
    data: &CohortData,
    gateway: &dyn CompletionBackend,
    config: &PipelineConfig,
    configuration: &str,
) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let participants = data.participants();
    let folds = loso_split(&participants)?;

    let mut per_seed = Vec::new();
    let mut all_folds = Vec::new();
    let mut provenance = Vec::new();
    let mut failures = Vec::new();

    for &seed in &config.seeds {
        let mut seed_results: Vec<FoldResult> = Vec::new();
        for (fold_idx, fold) in folds.iter().enumerate() {
            match run_fold(data, gateway, config, seed, fold_idx as u64, fold) {
                Ok(output) => {
                    seed_results.extend(output.results);
                    provenance.push(output.provenance);
                }
                Err((stage, err)) => failures.push(FoldFailure {
                    seed,
                    fold_id: fold.held_out.clone(),
                    stage,
                    message: err.to_string(),
                }),
            }
        }
        if seed_results.is_empty() {
            continue;
        }
        let pairs: Vec<(Option<Label>, Label)> = seed_results
            .iter()
            .map(|r| (r.prediction, r.label))
            .collect();
        per_seed.push(SeedMetrics {
            seed,
            metrics: compute_metrics(&pairs)?,
        });
        all_folds.extend(seed_results);
    }

    if per_seed.is_empty() {
        return Err(HarnessError::Config(
            "every fold failed; no metrics to report".into(),
        ));
    }
    let mean = mean_metrics(&per_seed.iter().map(|s| s.metrics).collect::<Vec<_>>())?;

    Ok(ExperimentReport {
        configuration: configuration.to_string(),
        per_seed,
        mean,
        cohort_hash: data.content_hash(),
        folds: all_folds,
        provenance,
        failures,
    })
}

pub const ABLATION_NAMES: [&str; 4] = ["Full", "w/o Prompt", "w/o Temporal", "w/o Acoustic"];

/// The four-configuration ablation grid, in table order.
pub fn run_ablations(
    data: &CohortData,
    gateway: &dyn CompletionBackend,
    base: &PipelineConfig,
) -> Result<Vec<ExperimentReport>, HarnessError> {
    let mut reports = Vec::with_capacity(4);
    reports.push(run_pipeline(data, gateway, base, ABLATION_NAMES[0])?);

    let mut no_prompt = base.clone();
    no_prompt.skip_prompt_opt = true;
    reports.push(run_pipeline(data, gateway, &no_prompt, ABLATION_NAMES[1])?);

    let mut no_temporal = base.clone();
    no_temporal.model.architecture = crate::tsmodel::Architecture::MeanPool;
    reports.push(run_pipeline(data, gateway, &no_temporal, ABLATION_NAMES[2])?);

    let mut no_acoustic = base.clone();
    no_acoustic.fusion.zero_acoustic = true;
    reports.push(run_pipeline(data, gateway, &no_acoustic, ABLATION_NAMES[3])?);

    Ok(reports)
}

/// Asserts, from recorded provenance, that no held-out participant's data
/// reached a prompt-optimization minibatch or a model training set.
pub fn audit_leakage(report: &ExperimentReport) -> Result<(), String> {
    for record in &report.provenance {
        if record.minibatch_participants.contains(&record.held_out) {
            return Err(format!(
                "seed {} fold {}: held-out participant present in prompt minibatch",
                record.seed, record.held_out
            ));
        }
        if record.train_participants.contains(&record.held_out) {
            return Err(format!(
                "seed {} fold {}: held-out participant present in training set",
                record.seed, record.held_out
            ));
        }
    }
    Ok(())
}

fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

/// Writes report.json, report.md, and report.csv; the two-decimal percent
/// rendering is identical across the human-readable formats.
pub fn emit_report(reports: &[ExperimentReport], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::Config("no reports to emit".into()));
    }
    std::fs::create_dir_all(dir)?;

    let json_path = dir.join("report.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(reports)?)?;

    let md_path = dir.join("report.md");
    let mut md = std::fs::File::create(&md_path)?;
    writeln!(md, "| Configuration | Acc (%) | F1 (%) |")?;
    writeln!(md, "|---|---|---|")?;
    for report in reports {
        writeln!(
            md,
            "| {} | {} | {} |",
            report.configuration,
            pct(report.mean.accuracy),
            pct(report.mean.f1)
        )?;
    }
    writeln!(md)?;
    for report in reports {
        writeln!(
            md,
            "- {}: cohort {}, {} seeds, {} failures",
            report.configuration,
            report.cohort_hash,
            report.per_seed.len(),
            report.failures.len()
        )?;
    }

    let csv_path = dir.join("report.csv");
    let mut csv = std::fs::File::create(&csv_path)?;
    writeln!(csv, "configuration,accuracy_pct,f1_pct")?;
    for report in reports {
        writeln!(
            csv,
            "{},{},{}",
            report.configuration,
            pct(report.mean.accuracy),
            pct(report.mean.f1)
        )?;
    }

    Ok(vec![json_path, md_path, csv_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::RuleBackend;
    use crate::synth::{generate_cohort, MarkerStrengths};
    use crate::tsmodel::Architecture;

    #[test]
    fn loso_partition_properties() {
        let ids: Vec<String> = (0..15).map(|i| format!("p{i:02}")).collect();
        let folds = loso_split(&ids).unwrap();
        assert_eq!(folds.len(), 15);
        let mut tested = BTreeSet::new();
        for fold in &folds {
            assert_eq!(fold.train.len(), 14);
            assert!(!fold.train.contains(&fold.held_out));
            assert!(tested.insert(fold.held_out.clone()));
        }
        assert_eq!(tested.len(), 15);

        let two: Vec<String> = vec!["a".into(), "b".into()];
        let folds = loso_split(&two).unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[0].train, vec!["b".to_string()]);

        assert!(loso_split(&["solo".to_string()]).is_err());
    }

    #[test]
    fn derive_seed_varies_per_component() {
        let base = derive_seed(1, 2, 3, 4);
        assert_ne!(base, derive_seed(2, 2, 3, 4));
        assert_ne!(base, derive_seed(1, 3, 3, 4));
        assert_ne!(base, derive_seed(1, 2, 4, 4));
        assert_ne!(base, derive_seed(1, 2, 3, 5));
        assert_eq!(base, derive_seed(1, 2, 3, 4));
    }

    fn tiny_cohort() -> (CohortData, SynthConfig) {
        let config = SynthConfig {
            n_participants: 6,
            mci_fraction: 0.5,
            t_months: 4,
            commands_per_week: 10.0,
            marker_strengths: MarkerStrengths::uniform(1.0),
            acoustic_dim: 4,
            acoustic_shift: 1.0,
            seed: 17,
            ..SynthConfig::default()
        };
        let cohort = generate_cohort(&config).unwrap();
        (CohortData::from_synthetic(&cohort, &config).unwrap(), config)
    }

    fn tiny_pipeline(t_months: usize) -> PipelineConfig {
        PipelineConfig {
            seeds: vec![0],
            global_seed: 7,
            model: ModelConfig {
                architecture: Architecture::MeanPool,
                d_model: 8,
                n_heads: 2,
                n_layers: 1,
                patch_len: 2,
                stride: 1,
                dropout: 0.0,
                t_months,
                n_variates: 0,
                seed: 0,
            },
            train: TrainConfig {
                max_epochs: 5,
                patience: 5,
                lr: 1e-2,
                warmup_steps: 2,
                ..TrainConfig::default()
            },
            linguistic_dim: 8,
            max_prompt_iter: 3,
            skip_prompt_opt: false,
            fusion: FusionOptions::default(),
            granularity: EvalGranularity::Participant,
        }
    }

    #[test]
    fn pipeline_end_to_end_deterministic_and_leak_free() {
        let (data, synth) = tiny_cohort();
        let gateway = RuleBackend::new();
        let config = tiny_pipeline(synth.t_months as usize);

        let report = run_pipeline(&data, &gateway, &config, "Full").unwrap();
        assert_eq!(report.per_seed.len(), 1);
        // One prediction per participant per seed.
        assert_eq!(report.folds.len(), 6);
        assert!(report.failures.is_empty());
        audit_leakage(&report).unwrap();

        // Mean equals the arithmetic mean of per-seed metrics.
        let expected =
            mean_metrics(&report.per_seed.iter().map(|s| s.metrics).collect::<Vec<_>>()).unwrap();
        assert!((report.mean.accuracy - expected.accuracy).abs() < 1e-12);
        assert!((report.mean.f1 - expected.f1).abs() < 1e-12);

        let again = run_pipeline(&data, &gateway, &config, "Full").unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn window_granularity_multiplies_results() {
        let (data, synth) = tiny_cohort();
        let gateway = RuleBackend::new();
        let mut config = tiny_pipeline(synth.t_months as usize);
        config.granularity = EvalGranularity::Window { t_min: 2 };
        let report = run_pipeline(&data, &gateway, &config, "Full").unwrap();
        // t in {2,3,4} per participant.
        assert_eq!(report.folds.len(), 6 * 3);
    }

    #[test]
    fn ablation_grid_names_and_lineages() {
        let (data, synth) = tiny_cohort();
        let gateway = RuleBackend::new();
        let mut config = tiny_pipeline(synth.t_months as usize);
        config.train.max_epochs = 2;
        let reports = run_ablations(&data, &gateway, &config).unwrap();
        let names: Vec<&str> = reports.iter().map(|r| r.configuration.as_str()).collect();
        assert_eq!(names, ABLATION_NAMES.to_vec());
        // Skipping optimization leaves the single-entry initial lineage.
        for record in &reports[1].provenance {
            assert_eq!(record.lineage_len, 1);
            assert_eq!(record.best_prompt_iteration, 1);
        }
        for report in &reports {
            audit_leakage(report).unwrap();
        }
    }

    #[test]
    fn emit_report_formats_agree() {
        let (data, synth) = tiny_cohort();
        let gateway = RuleBackend::new();
        let mut config = tiny_pipeline(synth.t_months as usize);
        config.train.max_epochs = 2;
        let report = run_pipeline(&data, &gateway, &config, "Full").unwrap();

        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(std::slice::from_ref(&report), dir.path()).unwrap();
        assert_eq!(files.len(), 3);

        let acc = pct(report.mean.accuracy);
        let f1 = pct(report.mean.f1);
        // Two decimals exactly.
        assert_eq!(acc.split('.').nth(1).unwrap().len(), 2);

        let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
        assert!(md.contains(&format!("| Full | {acc} | {f1} |")));
        let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert!(csv.contains(&format!("Full,{acc},{f1}")));
        let json: Vec<ExperimentReport> = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("report.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(json[0].mean, report.mean);

        assert!(emit_report(&[], dir.path()).is_err());
    }

    #[test]
    fn cohort_hash_tracks_content() {
        let (data, _) = tiny_cohort();
        let h1 = data.content_hash();
        assert_eq!(h1.len(), 16);
        let config = SynthConfig {
            n_participants: 6,
            mci_fraction: 0.5,
            t_months: 4,
            commands_per_week: 10.0,
            marker_strengths: MarkerStrengths::uniform(1.0),
            acoustic_dim: 4,
            acoustic_shift: 1.0,
            seed: 18,
            ..SynthConfig::default()
        };
        let other = generate_cohort(&config).unwrap();
        let other = CohortData::from_synthetic(&other, &config).unwrap();
        assert_ne!(h1, other.content_hash());
        assert_eq!(h1, data.content_hash());
    }
}
