//! Iterative prompt refinement: extract features with the current prompt,
//! classify, score F1 on a fixed validation minibatch, analyze errors,
//! refine, and keep the best-scoring prompt.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    parse_label, CompletionBackend, CompletionRequest, GatewayError, RoleTag,
};
use crate::prompt::{apply_refinement, Exemplar, PromptTemplate};
use crate::types::{Label, MonthlyTranscript};

/// Sentinel summary for months without usable commands; never sent to a
/// gateway and classified as Abstain downstream.
pub const NO_DATA: &str = "NO DATA";

/// Default iteration budget.
pub const DEFAULT_MAX_ITER: u32 = 3;

/// Minibatch sizing: 64 items split 51 train / 13 validation when the pool
/// is large enough.
pub const FULL_MINIBATCH: usize = 64;
pub const FULL_MINIBATCH_TRAIN: usize = 51;

/// Marker terms counted in error digests; `repetition` also matches the
/// `repetition_bursts` summary lines.
const DIGEST_TERMS: [&str; 7] = [
    "filler",
    "imperative",
    "lexical",
    "repetition",
    "self_correction",
    "topic_jump",
    "vague",
];

#[derive(Debug, Error)]
pub enum PromptOptError {
    #[error("prompt optimization requires a non-empty validation set")]
    EmptyValidation,
    #[error("prompt optimization requires max_iter >= 1")]
    ZeroIterations,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] crate::prompt::PromptError),
}

/// Free-text feature summary for one participant-month, tagged with the
/// prompt iteration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinguisticSummary {
    pub participant_id: String,
    pub month_index: u32,
    pub iteration: u32,
    pub text: String,
}

impl LinguisticSummary {
    pub fn is_no_data(&self) -> bool {
        self.text == NO_DATA
    }
}

/// A prompt with its lineage bookkeeping. `val_f1` is set exactly once, by
/// evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptCandidate {
    pub template: PromptTemplate,
    pub iteration: u32,
    pub val_f1: f64,
    pub parent_iteration: Option<u32>,
    pub feedback_applied: String,
}

/// Disjoint train/validation minibatch of labeled monthly transcripts.
#[derive(Debug, Clone)]
pub struct MinibatchSplit {
    pub train: Vec<(MonthlyTranscript, Label)>,
    pub val: Vec<(MonthlyTranscript, Label)>,
}

/// Samples a minibatch: with 64 or more items available, 64 are drawn and
/// split 51/13; otherwise an 80/20 split that keeps at least one item of
/// each present class on both sides. Seed-deterministic.
pub fn sample_minibatch(items: &[(MonthlyTranscript, Label)], seed: u64) -> MinibatchSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mci: Vec<usize> = Vec::new();
    let mut hc: Vec<usize> = Vec::new();
    for (i, (_, label)) in items.iter().enumerate() {
        match label {
            Label::Mci => mci.push(i),
            Label::Hc => hc.push(i),
        }
    }
    mci.shuffle(&mut rng);
    hc.shuffle(&mut rng);

    // Downsample to the minibatch cap preserving class proportions.
    let total = mci.len() + hc.len();
    if total > FULL_MINIBATCH {
        let m_take = ((mci.len() as f64 * FULL_MINIBATCH as f64 / total as f64).round()
            as usize)
            .clamp(usize::from(!mci.is_empty()), mci.len());
        let h_take = (FULL_MINIBATCH - m_take).min(hc.len());
        mci.truncate(m_take);
        hc.truncate(h_take);
    }
    let n = mci.len() + hc.len();

    let val_total = if n >= FULL_MINIBATCH {
        n - FULL_MINIBATCH_TRAIN
    } else {
        ((n as f64 * 0.2).round() as usize).clamp(1, n.saturating_sub(1).max(1))
    };
    // Per-class validation counts, proportional with at least one item of
    // each present class on each side when the class has two or more.
    let mut val_m = (val_total as f64 * mci.len() as f64 / n as f64).round() as usize;
    if !mci.is_empty() {
        val_m = val_m.clamp(1, mci.len().saturating_sub(1).max(1));
    }
    let val_h = val_total.saturating_sub(val_m).min(hc.len());
    let val_m = (val_total - val_h).min(mci.len());

    let val_idx_m = mci.split_off(mci.len() - val_m);
    let val_idx_h = hc.split_off(hc.len() - val_h);
    let collect = |a: &[usize], b: &[usize]| {
        a.iter().chain(b).map(|&i| items[i].clone()).collect::<Vec<_>>()
    };
    MinibatchSplit {
        train: collect(&mci, &hc),
        val: collect(&val_idx_m, &val_idx_h),
    }
}

/// One misclassified validation item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misclassification {
    pub participant_id: String,
    pub month_index: u32,
    pub predicted: Option<Label>,
    pub actual: Label,
    pub summary: String,
}

/// Extracts a feature summary for one transcript under the given prompt.
/// Empty transcripts short-circuit to the NO DATA sentinel.
pub fn extract_features(
    transcript: &MonthlyTranscript,
    prompt: &PromptTemplate,
    gateway: &dyn CompletionBackend,
    iteration: u32,
) -> Result<LinguisticSummary, GatewayError> {
    let text = if transcript.is_empty() {
        NO_DATA.to_string()
    } else {
        let request = CompletionRequest::new(
            RoleTag::Extractor,
            prompt.render(),
            transcript.render(),
        );
        gateway.complete(&request)?.text
    };
    Ok(LinguisticSummary {
        participant_id: transcript.participant_id.clone(),
        month_index: transcript.month_index,
        iteration,
        text,
    })
}

/// Classifies a summary; NO DATA abstains without touching the gateway.
pub fn classify_with_prompt(
    summary: &LinguisticSummary,
    prompt: &PromptTemplate,
    gateway: &dyn CompletionBackend,
) -> Result<Option<Label>, GatewayError> {
    if summary.is_no_data() {
        return Ok(None);
    }
    let request = CompletionRequest::new(
        RoleTag::Classifier,
        prompt.render(),
        summary.text.clone(),
    );
    let response = gateway.complete(&request)?;
    Ok(parse_label(&response.text))
}

#[derive(Debug, Clone)]
pub struct PromptEvaluation {
    pub f1: f64,
    pub errors: Vec<Misclassification>,
}

/// Scores a prompt on the validation set: F1 with MCI positive, Abstain
/// counted as incorrect (a false negative when the label is MCI, never a
/// false positive).
pub fn evaluate_prompt(
    prompt: &PromptTemplate,
    val: &[(MonthlyTranscript, Label)],
    gateway: &dyn CompletionBackend,
    iteration: u32,
) -> Result<PromptEvaluation, PromptOptError> {
    if val.is_empty() {
        return Err(PromptOptError::EmptyValidation);
    }
    let mut tp = 0u32;
    let mut fp = 0u32;
    let mut fn_ = 0u32;
    let mut errors = Vec::new();
    for (transcript, actual) in val {
        let summary = extract_features(transcript, prompt, gateway, iteration)?;
        let predicted = classify_with_prompt(&summary, prompt, gateway)?;
        match (predicted, actual) {
            (Some(Label::Mci), Label::Mci) => tp += 1,
            (Some(Label::Mci), Label::Hc) => fp += 1,
            (Some(Label::Hc) | None, Label::Mci) => fn_ += 1,
            (Some(Label::Hc), Label::Hc) => {}
            (None, Label::Hc) => {}
        }
        if predicted != Some(*actual) {
            errors.push(Misclassification {
                participant_id: transcript.participant_id.clone(),
                month_index: transcript.month_index,
                predicted,
                actual: *actual,
                summary: summary.text,
            });
        }
    }
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
    Ok(PromptEvaluation { f1, errors })
}

/// Deterministic digest of misclassified cases: per-class error counts, the
/// three most frequent marker terms across the misclassified summaries, and
/// up to three verbatim summaries truncated to 500 characters.
pub fn analyze_errors(errors: &[Misclassification]) -> String {
    if errors.is_empty() {
        return "NO ERRORS".to_string();
    }
    let errors_on_mci = errors.iter().filter(|e| e.actual == Label::Mci).count();
    let errors_on_hc = errors.len() - errors_on_mci;

    let mut term_counts: Vec<(&str, usize)> = DIGEST_TERMS
        .iter()
        .map(|&term| {
            let count = errors
                .iter()
                .map(|e| e.summary.matches(term).count())
                .sum::<usize>();
            (term, count)
        })
        .filter(|&(_, count)| count > 0)
        .collect();
    term_counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    term_counts.truncate(3);

    let mut digest = String::from("error analysis\n");
    digest.push_str(&format!("errors_on_mci: {errors_on_mci}\n"));
    digest.push_str(&format!("errors_on_hc: {errors_on_hc}\n"));
    if !term_counts.is_empty() {
        let terms: Vec<&str> = term_counts.iter().map(|&(t, _)| t).collect();
        digest.push_str(&format!("top_terms: {}\n", terms.join(", ")));
    }
    for error in errors.iter().take(3) {
        let truncated: String = error.summary.chars().take(500).collect();
        digest.push_str(&format!("example: {truncated}\n"));
    }
    digest
}

/// Outcome of one refinement attempt.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub template: PromptTemplate,
    /// Human-readable note recorded in lineage `feedback_applied`.
    pub note: String,
}

/// Asks the refiner for an edited prompt. "NO ERRORS" feedback skips the
/// gateway; an unparseable response falls back to the unmodified prompt
/// with the failure recorded in the note.
pub fn refine(
    prompt: &PromptTemplate,
    feedback: &str,
    gateway: &dyn CompletionBackend,
) -> Result<Refinement, GatewayError> {
    if feedback.trim() == "NO ERRORS" {
        return Ok(Refinement {
            template: prompt.clone(),
            note: "refiner skipped: no errors".to_string(),
        });
    }
    let request = CompletionRequest::new(
        RoleTag::Refiner,
        prompt.render(),
        feedback.to_string(),
    );
    let response = gateway.complete(&request)?;
    match apply_refinement(prompt, &response.text) {
        Ok(template) => Ok(Refinement {
            template,
            note: format!("refined from feedback: {}", first_line(feedback)),
        }),
        Err(err) => Ok(Refinement {
            template: prompt.clone(),
            note: format!("refinement parse failed, prompt kept: {err}"),
        }),
    }
}

fn first_line(text: &str) -> &str {
    text.lines().next().unwrap_or("")
}

/// Runs the refinement loop: iteration 1 evaluates the initial prompt, each
/// further iteration consumes the previous refinement. The best candidate
/// updates only on strict F1 improvement, so ties keep the earlier
/// iteration.
pub fn optimize(
    p_init: PromptTemplate,
    split: &MinibatchSplit,
    gateway: &dyn CompletionBackend,
    max_iter: u32,
) -> Result<(PromptCandidate, Vec<PromptCandidate>), PromptOptError> {
    if max_iter < 1 {
        return Err(PromptOptError::ZeroIterations);
    }
    let mut current = p_init;
    let mut parent: Option<u32> = None;
    let mut note = "initial prompt".to_string();
    let mut lineage: Vec<PromptCandidate> = Vec::new();
    let mut best_idx = 0usize;

    for iteration in 1..=max_iter {
        let eval = evaluate_prompt(&current, &split.val, gateway, iteration)?;
        lineage.push(PromptCandidate {
            template: current.clone(),
            iteration,
            val_f1: eval.f1,
            parent_iteration: parent,
            feedback_applied: note.clone(),
        });
        if eval.f1 > lineage[best_idx].val_f1 {
            best_idx = lineage.len() - 1;
        }
        if iteration == max_iter {
            break;
        }
        let digest = analyze_errors(&eval.errors);
        let refinement = refine(&current, &digest, gateway)?;
        current = refinement.template;
        note = refinement.note;
        parent = Some(iteration);
    }

    Ok((lineage[best_idx].clone(), lineage))
}

/// Builds the initial three-part prompt: marker background, an extraction
/// directive with a deliberately narrow starting weight line, and
/// class-balanced exemplars drawn seed-deterministically from the train
/// split (2 per class when available).
pub fn build_initial_prompt(
    train: &[(MonthlyTranscript, Label)],
    seed: u64,
) -> Result<PromptTemplate, PromptOptError> {
    let context = "Background: early cognitive decline shows up in voice commands as \
reduced lexical diversity, vague placeholders, repetitive bursts, abrupt topic jumps, \
abandoned self-corrections, imperative-only phrasing, and disfluency fillers."
        .to_string();
    let instruction = "Summarize the linguistic features of the transcript relevant to \
cognitive status, reporting the weighted markers with values.\n\
weights imperative:0.2 threshold:0.5"
        .to_string();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: [Vec<&MonthlyTranscript>; 2] = [Vec::new(), Vec::new()];
    for (transcript, label) in train {
        if !transcript.is_empty() {
            by_class[(*label == Label::Mci) as usize].push(transcript);
        }
    }
    let mut exemplars = Vec::new();
    for (class_idx, label) in [(1usize, Label::Mci), (0usize, Label::Hc)] {
        let pool = &mut by_class[class_idx];
        pool.shuffle(&mut rng);
        for transcript in pool.iter().take(2) {
            let excerpt: Vec<String> = transcript
                .commands
                .iter()
                .take(5)
                .map(|c| c.text.clone())
                .collect();
            exemplars.push(Exemplar {
                excerpt: excerpt.join("; "),
                label,
            });
        }
    }
    Ok(PromptTemplate::initial(context, instruction, exemplars)?)
}
