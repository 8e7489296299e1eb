//! Rule-based pseudo-LLM.
//!
//! The rule backend turns the three Algorithm roles into deterministic
//! computations over marker statistics:
//!
//! - **extractor**: parses the rendered transcript, computes marker stats,
//!   and renders a templated summary. Categories carrying a positive weight
//!   in the prompt's directive line get a `key: value (qualifier)` line;
//!   unweighted categories surface only as `note: elevated key` when their
//!   impairment crosses the category's qualifier threshold.
//! - **classifier**: parses weight directives from the prompt and stat
//!   values from the summary, then answers "Prediction: MCI" when
//!   `sum(weight_c * stat_c) > threshold`, else "Prediction: HC".
//! - **refiner**: a coordinate-ascent edit. It reads the error digest's
//!   `top_terms:` line, picks the most frequent marker category that is not
//!   yet weighted (falling back to the most frequent overall), raises that
//!   weight, and emits the updated instruction block.

use std::collections::BTreeMap;

use super::{CompletionBackend, CompletionRequest, CompletionResponse, GatewayError, RoleTag};
use crate::markers::{marker_statistics, MarkerCategory, MarkerStats};
use crate::prompt::{parse_blocks, INSTRUCTION_MARKER};
use crate::types::MonthlyTranscript;

/// Weight increment applied by one refiner edit.
pub const REFINER_STEP: f64 = 1.0;

/// Impairment level above which an unweighted category is flagged as
/// elevated in extractor summaries.
fn qualifier_threshold(category: MarkerCategory) -> f64 {
    match category {
        MarkerCategory::LexicalDiversity => 0.25,
        MarkerCategory::Repetition => 1.0,
        MarkerCategory::Filler => 0.15,
        MarkerCategory::VaguePlaceholder => 0.1,
        MarkerCategory::Imperative => 0.45,
        MarkerCategory::TopicJump => 0.03,
        MarkerCategory::SelfCorrection => 1.0,
    }
}

/// Key used for a category in summaries; the repetition stat renders as a
/// burst count.
pub fn summary_key(category: MarkerCategory) -> &'static str {
    match category {
        MarkerCategory::Repetition => "repetition_bursts",
        other => other.key(),
    }
}

fn category_from_summary_key(key: &str) -> Option<MarkerCategory> {
    if key == "repetition_bursts" {
        return Some(MarkerCategory::Repetition);
    }
    MarkerCategory::from_key(key)
}

/// Parsed `key:value` weight directives, e.g.
/// `weights imperative:0.2 repetition:0.5 threshold:0.8`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDirectives {
    pub weights: BTreeMap<&'static str, f64>,
    pub threshold: f64,
}

impl WeightDirectives {
    pub fn weight(&self, category: MarkerCategory) -> f64 {
        self.weights.get(category.key()).copied().unwrap_or(0.0)
    }

    pub fn set_weight(&mut self, category: MarkerCategory, weight: f64) {
        self.weights.insert(category.key(), weight);
    }

    /// Scans whitespace-separated `key:value` tokens anywhere in `text`.
    /// Unknown keys are ignored; a recognized key with a malformed value is
    /// a configuration error, as is text with no directives at all.
    pub fn parse(text: &str) -> Result<WeightDirectives, GatewayError> {
        let mut weights = BTreeMap::new();
        let mut threshold = None;
        for token in text.split_whitespace() {
            if let Some((key, value)) = token.split_once(':') {
                let known = key == "threshold" || MarkerCategory::from_key(key).is_some();
                if !known {
                    continue;
                }
                let parsed: f64 = value.parse().map_err(|_| {
                    GatewayError::Config(format!("unparseable rule directive `{token}`"))
                })?;
                if key == "threshold" {
                    threshold = Some(parsed);
                } else if let Some(category) = MarkerCategory::from_key(key) {
                    weights.insert(category.key(), parsed);
                }
            }
        }
        match threshold {
            Some(threshold) if !weights.is_empty() => Ok(WeightDirectives { weights, threshold }),
            _ => Err(GatewayError::Config(
                "prompt carries no weight directives (expected `weights <key>:<w> ... threshold:<t>`)"
                    .into(),
            )),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::from("weights");
        for category in MarkerCategory::ALL {
            if let Some(w) = self.weights.get(category.key()) {
                out.push_str(&format!(" {}:{}", category.key(), w));
            }
        }
        out.push_str(&format!(" threshold:{}", self.threshold));
        out
    }

    /// Weighted impairment score of a stats vector over the weighted
    /// categories.
    pub fn score(&self, stats: &MarkerStats) -> f64 {
        MarkerCategory::ALL
            .iter()
            .map(|&c| self.weight(c) * stats.impairment(c))
            .sum()
    }
}

/// The deterministic rule backend. Stateless; safe for concurrent use.
#[derive(Debug, Default)]
pub struct RuleBackend;

impl RuleBackend {
    pub fn new() -> Self {
        RuleBackend
    }

    fn extract(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let directives = WeightDirectives::parse(&request.prompt_text)?;
        let transcript = MonthlyTranscript::parse_rendered("", 0, &request.input_text);
        let stats = marker_statistics(&transcript);
        Ok(render_summary(&directives, &stats, transcript.commands.len()))
    }

    fn classify(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let directives = WeightDirectives::parse(&request.prompt_text)?;
        let stats = parse_summary_stats(&request.input_text);
        let score: f64 = MarkerCategory::ALL
            .iter()
            .map(|&c| directives.weight(c) * stats.get(&c).copied().unwrap_or(0.0))
            .sum();
        let verdict = if score > directives.threshold { "MCI" } else { "HC" };
        Ok(format!("Prediction: {verdict}"))
    }

    fn refine(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let blocks = parse_blocks(&request.prompt_text);
        let instruction = blocks.instruction.ok_or_else(|| {
            GatewayError::Config("refiner prompt carries no instruction block".into())
        })?;
        let mut directives = WeightDirectives::parse(&instruction)?;

        let top_terms = parse_top_terms(&request.input_text);
        let target = top_terms
            .iter()
            .find(|&&c| directives.weight(c) == 0.0)
            .or_else(|| top_terms.first())
            .copied();

        let edited = match target {
            Some(category) => {
                let current = directives.weight(category);
                directives.set_weight(category, current + REFINER_STEP);
                replace_directive_line(&instruction, &directives)
            }
            None => instruction,
        };
        Ok(format!("{INSTRUCTION_MARKER}\n{edited}"))
    }
}

fn render_summary(
    directives: &WeightDirectives,
    stats: &MarkerStats,
    n_commands: usize,
) -> String {
    let mut out = String::from("feature summary\n");
    out.push_str(&format!("commands: {n_commands}\n"));
    for category in MarkerCategory::ALL {
        let value = stats.impairment(category);
        let elevated = value >= qualifier_threshold(category);
        if directives.weight(category) > 0.0 {
            let qualifier = if elevated { "elevated" } else { "low" };
            // f64 Display round-trips, so the classifier recovers the exact
            // stat from the summary line.
            out.push_str(&format!("{}: {} ({})\n", summary_key(category), value, qualifier));
        } else if elevated {
            out.push_str(&format!("note: elevated {}\n", summary_key(category)));
        }
    }
    out
}

/// Recovers `key: value` stat lines from an extractor summary.
fn parse_summary_stats(summary: &str) -> BTreeMap<MarkerCategory, f64> {
    let mut stats = BTreeMap::new();
    for line in summary.lines() {
        if let Some((key, rest)) = line.split_once(':') {
            if let Some(category) = category_from_summary_key(key.trim()) {
                let value_text = rest.trim().split(|c| c == ' ' || c == '(').next().unwrap_or("");
                if let Ok(value) = value_text.parse::<f64>() {
                    stats.insert(category, value);
                }
            }
        }
    }
    stats
}

/// Reads the `top_terms:` line of an error digest in listed order.
fn parse_top_terms(feedback: &str) -> Vec<MarkerCategory> {
    for line in feedback.lines() {
        if let Some(rest) = line.trim().strip_prefix("top_terms:") {
            return rest
                .split(',')
                .filter_map(|term| category_from_summary_key(term.trim()))
                .collect();
        }
    }
    Vec::new()
}

/// Swaps the directive line inside an instruction, appending one if the
/// instruction had none on its own line.
fn replace_directive_line(instruction: &str, directives: &WeightDirectives) -> String {
    let mut lines: Vec<String> = Vec::new();
    let mut replaced = false;
    for line in instruction.lines() {
        if !replaced && line.trim_start().starts_with("weights") {
            lines.push(directives.render());
            replaced = true;
        } else {
            lines.push(line.to_string());
        }
    }
    if !replaced {
        lines.push(directives.render());
    }
    lines.join("\n")
}

impl CompletionBackend for RuleBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let text = match request.role_tag {
            RoleTag::Extractor => self.extract(request)?,
            RoleTag::Classifier => self.classify(request)?,
            RoleTag::Refiner => self.refine(request)?,
        };
        if text.is_empty() {
            return Err(GatewayError::EmptyResponse);
        }
        Ok(CompletionResponse {
            text,
            backend_id: self.backend_id().to_string(),
            usage: None,
            latency: None,
        })
    }

    fn backend_id(&self) -> &str {
        "rule"
    }
}
