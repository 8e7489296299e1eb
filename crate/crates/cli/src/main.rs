//! cogcmd: synthetic cohort generation, preprocessing, prompt optimization,
//! embedding, training, and LOSO evaluation from the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use cogcmd_cli::http::{HttpBackend, HttpBackendConfig};
use cogcmd_cli::ioutil;
use cogcmd_core::embed::{build_sequence, FusionOptions, HashingEmbedder};
use cogcmd_core::gateway::{CompletionBackend, FixtureBackend, RuleBackend};
use cogcmd_core::harness::{
    audit_leakage, emit_report, run_ablations, run_pipeline, CohortData, EvalGranularity,
    ExperimentReport, PipelineConfig,
};
use cogcmd_core::preprocess::{clean_cohort, WakeWordScope};
use cogcmd_core::prompt_opt::{
    build_initial_prompt, extract_features, optimize, sample_minibatch, LinguisticSummary,
    PromptCandidate,
};
use cogcmd_core::synth::{generate_cohort, SynthConfig};
use cogcmd_core::tsmodel::{train, Architecture, ModelConfig, TrainConfig};
use cogcmd_core::types::{CohortLabel, CommandRecord, Label, MonthlyTranscript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Http,
    Fixture,
    Rule,
}

#[derive(Parser)]
#[command(name = "cogcmd", version, about = "Longitudinal voice-command analysis pipeline")]
struct Cli {
    /// JSON configuration file (meaning depends on the subcommand).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Completion backend for LLM-driven stages.
    #[arg(long, global = true, value_enum, default_value_t = BackendKind::Rule)]
    backend: BackendKind,
    /// Fixture file for --backend fixture.
    #[arg(long, global = true)]
    fixture: Option<PathBuf>,
    /// Comma-separated experiment seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory (or file, for `optimize`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Chat-completion endpoint URL for --backend http.
    #[arg(long, global = true)]
    base_url: Option<String>,
    /// Model name sent to the HTTP backend.
    #[arg(long, global = true, default_value = "gpt-4o-mini")]
    model: String,
    /// Append every HTTP request/response to this replay log.
    #[arg(long, global = true)]
    replay_log: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (config: generator settings JSON).
    Synth,
    /// Filter, wake-word-strip, and group a cohort into monthly transcripts.
    Preprocess {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        study_start: NaiveDate,
        #[arg(long, default_value_t = 18)]
        months: u32,
    },
    /// Run the iterative prompt-refinement loop; writes the lineage JSON.
    Optimize {
        /// Directory containing transcripts.jsonl.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_iter: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Extract summaries with an optimized prompt and build fused sequences.
    Embed {
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long)]
        lineage: PathBuf,
        #[arg(long)]
        acoustic: PathBuf,
        #[arg(long, default_value_t = 768)]
        acoustic_dim: usize,
        #[arg(long, default_value_t = 384)]
        linguistic_dim: usize,
        #[arg(long, default_value_t = 18)]
        months: u32,
        #[arg(long)]
        zero_acoustic: bool,
        #[arg(long)]
        zero_linguistic: bool,
    },
    /// Train a sequence classifier on persisted sequences.
    Train {
        /// Directory of *.seq.bin / *.seq.json containers.
        #[arg(long)]
        sequences: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Full LOSO pipeline over seeds; emits report files.
    Evaluate {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        acoustic: PathBuf,
        #[arg(long)]
        study_start: NaiveDate,
        #[arg(long, default_value_t = 18)]
        months: u32,
    },
    /// The four-configuration ablation grid.
    Ablate {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        acoustic: PathBuf,
        #[arg(long)]
        study_start: NaiveDate,
        #[arg(long, default_value_t = 18)]
        months: u32,
    },
    /// Re-render report files from a saved report.json.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

/// Experiment settings file for `evaluate`, `ablate`, and `train`. Every
/// field is optional; omitted fields take the built-in defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct ExperimentFile {
    seeds: Option<Vec<u64>>,
    global_seed: u64,
    architecture: Option<Architecture>,
    d_model: Option<usize>,
    n_heads: Option<usize>,
    n_layers: Option<usize>,
    patch_len: Option<usize>,
    stride: Option<usize>,
    dropout: Option<f64>,
    lr: Option<f64>,
    warmup_steps: Option<usize>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    weight_decay: Option<f64>,
    acoustic_dim: Option<usize>,
    linguistic_dim: Option<usize>,
    max_prompt_iter: Option<u32>,
    skip_prompt_opt: bool,
    zero_acoustic: bool,
    zero_linguistic: bool,
    window_t_min: Option<u32>,
}

impl ExperimentFile {
    fn load(path: Option<&PathBuf>) -> Result<Self> {
        match path {
            Some(path) => ioutil::read_json(path),
            None => Ok(ExperimentFile::default()),
        }
    }

    fn model_config(&self) -> ModelConfig {
        let mut mc = ModelConfig::new(
            self.architecture.unwrap_or(Architecture::ITransformer),
            0,
            0,
            0,
        );
        if let Some(v) = self.d_model {
            mc.d_model = v;
        }
        if let Some(v) = self.n_heads {
            mc.n_heads = v;
        }
        if let Some(v) = self.n_layers {
            mc.n_layers = v;
        }
        if let Some(v) = self.patch_len {
            mc.patch_len = v;
        }
        if let Some(v) = self.stride {
            mc.stride = v;
        }
        if let Some(v) = self.dropout {
            mc.dropout = v;
        }
        mc
    }

    fn train_config(&self) -> TrainConfig {
        let mut tc = TrainConfig::default();
        if let Some(v) = self.lr {
            tc.lr = v;
        }
        if let Some(v) = self.warmup_steps {
            tc.warmup_steps = v;
        }
        if let Some(v) = self.batch_size {
            tc.batch_size = v;
        }
        if let Some(v) = self.max_epochs {
            tc.max_epochs = v;
        }
        if let Some(v) = self.patience {
            tc.patience = v;
        }
        if let Some(v) = self.weight_decay {
            tc.weight_decay = v;
        }
        tc
    }

    fn pipeline(&self, seeds_override: Option<&Vec<u64>>) -> PipelineConfig {
        PipelineConfig {
            seeds: seeds_override
                .cloned()
                .or_else(|| self.seeds.clone())
                .unwrap_or_else(|| vec![0, 1, 2, 3, 4]),
            global_seed: self.global_seed,
            model: self.model_config(),
            train: self.train_config(),
            linguistic_dim: self.linguistic_dim.unwrap_or(384),
            max_prompt_iter: self.max_prompt_iter.unwrap_or(3),
            skip_prompt_opt: self.skip_prompt_opt,
            fusion: FusionOptions {
                zero_acoustic: self.zero_acoustic,
                zero_linguistic: self.zero_linguistic,
            },
            granularity: match self.window_t_min {
                Some(t_min) => EvalGranularity::Window { t_min },
                None => EvalGranularity::Participant,
            },
        }
    }
}

/// Persisted output of the refinement loop.
#[derive(Debug, Serialize, Deserialize)]
struct LineageFile {
    best: PromptCandidate,
    lineage: Vec<PromptCandidate>,
}

fn make_backend(cli: &Cli) -> Result<Box<dyn CompletionBackend>> {
    match cli.backend {
        BackendKind::Rule => Ok(Box::new(RuleBackend::new())),
        BackendKind::Fixture => {
            let path = cli
                .fixture
                .as_ref()
                .ok_or_else(|| anyhow!("--backend fixture requires --fixture <path>"))?;
            let body = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Ok(Box::new(FixtureBackend::from_json(&body)?))
        }
        BackendKind::Http => {
            let base_url = cli
                .base_url
                .clone()
                .ok_or_else(|| anyhow!("--backend http requires --base-url <url>"))?;
            let mut config = HttpBackendConfig::new(base_url, cli.model.clone());
            config.replay_log = cli.replay_log.clone();
            Ok(Box::new(HttpBackend::new(config)?))
        }
    }
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .ok_or_else(|| anyhow!("--out <dir> is required for this subcommand"))?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn label_map(path: &Path) -> Result<BTreeMap<String, Label>> {
    let labels: Vec<CohortLabel> = ioutil::read_jsonl(path)?;
    for l in &labels {
        if !l.is_consistent() {
            bail!(
                "label/MoCA inconsistency for participant {}",
                l.participant_id
            );
        }
    }
    Ok(labels
        .into_iter()
        .map(|l| (l.participant_id, l.label))
        .collect())
}

fn load_cohort_data(
    cohort: &Path,
    labels: &Path,
    acoustic: &Path,
    study_start: NaiveDate,
    months: u32,
    acoustic_dim: usize,
) -> Result<CohortData> {
    let records: Vec<CommandRecord> = ioutil::read_jsonl(cohort)?;
    let cleaned = clean_cohort(records, study_start, months, WakeWordScope::Pooled)?;
    Ok(CohortData {
        transcripts: cleaned.transcripts,
        labels: label_map(labels)?,
        acoustic: ioutil::load_acoustic_store(acoustic, acoustic_dim)?,
        acoustic_dim,
        t_months: months,
    })
}

fn labeled_items(
    transcripts: &[MonthlyTranscript],
    labels: &BTreeMap<String, Label>,
) -> Result<Vec<(MonthlyTranscript, Label)>> {
    let mut items = Vec::new();
    for t in transcripts {
        if t.is_empty() {
            continue;
        }
        let label = labels
            .get(&t.participant_id)
            .ok_or_else(|| anyhow!("no label for participant {}", t.participant_id))?;
        items.push((t.clone(), *label));
    }
    Ok(items)
}

fn print_reports(reports: &[ExperimentReport]) {
    println!("configuration,accuracy_pct,f1_pct");
    for r in reports {
        println!(
            "{},{:.2},{:.2}",
            r.configuration,
            r.mean.accuracy * 100.0,
            r.mean.f1 * 100.0
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth => {
            let config_path = cli
                .config
                .as_ref()
                .ok_or_else(|| anyhow!("synth requires --config <path>"))?;
            let config: SynthConfig = ioutil::read_json(config_path)?;
            let cohort = generate_cohort(&config)?;
            let dir = out_dir(&cli)?;
            let files = vec![
                dir.join("cohort.jsonl"),
                dir.join("labels.jsonl"),
                dir.join("acoustic.jsonl"),
            ];
            ioutil::write_jsonl(&files[0], &cohort.records)?;
            ioutil::write_jsonl(&files[1], &cohort.labels)?;
            ioutil::write_jsonl(&files[2], &cohort.acoustic)?;
            ioutil::write_manifest(&dir, &files)?;
            println!(
                "wrote {} records, {} participants to {}",
                cohort.records.len(),
                cohort.labels.len(),
                dir.display()
            );
        }
        Command::Preprocess { cohort, labels, study_start, months } => {
            let records: Vec<CommandRecord> = ioutil::read_jsonl(cohort)?;
            let label_map = label_map(labels)?;
            let cleaned = clean_cohort(records, *study_start, *months, WakeWordScope::Pooled)?;
            for pid in cleaned.transcripts.keys() {
                if !label_map.contains_key(pid) {
                    bail!("no label for participant {pid}");
                }
            }
            let dir = out_dir(&cli)?;
            let transcripts: Vec<&MonthlyTranscript> =
                cleaned.transcripts.values().flatten().collect();
            let files = vec![
                dir.join("transcripts.jsonl"),
                dir.join("dropped.jsonl"),
                dir.join("wake_words.json"),
            ];
            ioutil::write_jsonl(&files[0], &transcripts)?;
            ioutil::write_jsonl(&files[1], &cleaned.dropped)?;
            ioutil::write_json(&files[2], &cleaned.wake_words)?;
            ioutil::write_manifest(&dir, &files)?;
            println!(
                "kept {} transcripts, dropped {} records",
                transcripts.len(),
                cleaned.dropped.len()
            );
        }
        Command::Optimize { train, labels, max_iter, seed } => {
            let transcripts: Vec<MonthlyTranscript> =
                ioutil::read_jsonl(&train.join("transcripts.jsonl"))?;
            let labels = label_map(labels)?;
            let items = labeled_items(&transcripts, &labels)?;
            let split = sample_minibatch(&items, *seed);
            let gateway = make_backend(&cli)?;
            let p_init = build_initial_prompt(&split.train, *seed)?;
            let (best, lineage) = optimize(p_init, &split, gateway.as_ref(), *max_iter)?;
            let out = cli
                .out
                .clone()
                .ok_or_else(|| anyhow!("optimize requires --out <lineage.json>"))?;
            ioutil::write_json(&out, &LineageFile { best: best.clone(), lineage })?;
            println!(
                "best prompt: iteration {} (validation F1 {:.4})",
                best.iteration, best.val_f1
            );
        }
        Command::Embed {
            transcripts,
            lineage,
            acoustic,
            acoustic_dim,
            linguistic_dim,
            months,
            zero_acoustic,
            zero_linguistic,
        } => {
            let transcripts: Vec<MonthlyTranscript> = ioutil::read_jsonl(transcripts)?;
            let lineage: LineageFile = ioutil::read_json(lineage)?;
            let store = ioutil::load_acoustic_store(acoustic, *acoustic_dim)?;
            let embedder = HashingEmbedder { dim: *linguistic_dim };
            let gateway = make_backend(&cli)?;
            let options = FusionOptions {
                zero_acoustic: *zero_acoustic,
                zero_linguistic: *zero_linguistic,
            };

            let mut by_participant: BTreeMap<String, Vec<&MonthlyTranscript>> = BTreeMap::new();
            for t in &transcripts {
                by_participant.entry(t.participant_id.clone()).or_default().push(t);
            }
            let dir = out_dir(&cli)?;
            let mut files = Vec::new();
            for (pid, months_list) in &by_participant {
                let mut summaries: BTreeMap<u32, LinguisticSummary> = BTreeMap::new();
                for t in months_list {
                    let summary = extract_features(
                        t,
                        &lineage.best.template,
                        gateway.as_ref(),
                        lineage.best.iteration,
                    )?;
                    summaries.insert(t.month_index, summary);
                }
                let seq = build_sequence(pid, *months, &summaries, &store, &embedder, options)?;
                ioutil::write_sequence(&dir, &seq)?;
                files.push(dir.join(format!("{pid}.seq.bin")));
                files.push(dir.join(format!("{pid}.seq.json")));
            }
            ioutil::write_manifest(&dir, &files)?;
            println!("wrote {} sequences to {}", by_participant.len(), dir.display());
        }
        Command::Train { sequences, labels, seed } => {
            let file = ExperimentFile::load(cli.config.as_ref())?;
            let all = ioutil::read_all_sequences(sequences)?;
            if all.is_empty() {
                bail!("no sequence containers found in {}", sequences.display());
            }
            let labels = label_map(labels)?;
            let mut labeled = Vec::new();
            for seq in all {
                let label = *labels
                    .get(&seq.participant_id)
                    .ok_or_else(|| anyhow!("no label for participant {}", seq.participant_id))?;
                labeled.push((seq, (label == Label::Mci) as u8));
            }
            // Deterministic early-stopping split: every fifth participant
            // (by sorted id) validates.
            let mut train_set = Vec::new();
            let mut val_set = Vec::new();
            for (i, item) in labeled.into_iter().enumerate() {
                if i % 5 == 4 {
                    val_set.push(item);
                } else {
                    train_set.push(item);
                }
            }
            if val_set.is_empty() {
                val_set.push(train_set.pop().ok_or_else(|| anyhow!("need >= 2 sequences"))?);
            }

            let mut model_config = file.model_config();
            model_config.t_months = train_set[0].0.t_months();
            model_config.n_variates = train_set[0].0.width();
            model_config.seed = *seed;
            let mut train_config = file.train_config();
            train_config.seed = *seed;

            let model = train(&model_config, &train_config, &train_set, &val_set)?;
            let dir = out_dir(&cli)?;
            ioutil::write_checkpoint(&dir, &model)?;
            ioutil::write_manifest(
                &dir,
                &[dir.join("params.bin"), dir.join("model.json"), dir.join("curves.csv")],
            )?;
            println!(
                "trained {:?}: best epoch {}, final val loss {:.6}",
                model_config.architecture,
                model.best_epoch,
                model.val_loss_history.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Evaluate { cohort, labels, acoustic, study_start, months }
        | Command::Ablate { cohort, labels, acoustic, study_start, months } => {
            let file = ExperimentFile::load(cli.config.as_ref())?;
            let config = file.pipeline(cli.seeds.as_ref());
            let data = load_cohort_data(
                cohort,
                labels,
                acoustic,
                *study_start,
                *months,
                file.acoustic_dim.unwrap_or(768),
            )?;
            let gateway = make_backend(&cli)?;
            let reports = if matches!(cli.command, Command::Ablate { .. }) {
                run_ablations(&data, gateway.as_ref(), &config)?
            } else {
                vec![run_pipeline(&data, gateway.as_ref(), &config, "Full")?]
            };
            for report in &reports {
                audit_leakage(report).map_err(|m| anyhow!("leakage audit failed: {m}"))?;
            }
            let dir = out_dir(&cli)?;
            let files = emit_report(&reports, &dir)?;
            ioutil::write_manifest(&dir, &files)?;
            print_reports(&reports);
        }
        Command::Report { input } => {
            let reports: Vec<ExperimentReport> = ioutil::read_json(input)?;
            let dir = out_dir(&cli)?;
            let files = emit_report(&reports, &dir)?;
            ioutil::write_manifest(&dir, &files)?;
            print_reports(&reports);
        }
    }
    Ok(())
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
