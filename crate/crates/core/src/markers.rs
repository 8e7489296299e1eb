//! Linguistic marker statistics computed by exact counting rules.
//!
//! Seven marker categories cover reduced lexical diversity, repetitive
//! bursts, disfluency fillers, vague placeholders, imperative-only style,
//! topic jumps, and abandoned self-corrections. The same rules drive both
//! the synthetic generator's planted signal and the rule backend's scoring,
//! so the two share one oracle.

use serde::{Deserialize, Serialize};

use crate::textutil::{first_token, normalize_command, tokenize};
use crate::types::MonthlyTranscript;

/// Disfluency filler tokens.
pub const FILLER_TOKENS: [&str; 4] = ["um", "uh", "er", "hmm"];

/// Vague word-retrieval placeholder phrases.
pub const PLACEHOLDER_PHRASES: [&str; 3] = ["that thing", "the thing", "whatever it is"];

/// First tokens marking imperative device commands.
pub const IMPERATIVE_TOKENS: [&str; 5] = ["play", "stop", "turn", "set", "volume"];

/// Abandoned / reverted self-correction patterns.
pub const SELF_CORRECTION_PHRASES: [&str; 2] = ["never mind", "no wait"];

/// A repetition burst is a maximal run of >= 3 identical commands spanning
/// less than this many seconds.
pub const BURST_WINDOW_SECS: i64 = 30;

/// A topic jump is an adjacent category change within this many seconds.
pub const TOPIC_JUMP_WINDOW_SECS: i64 = 10;

/// The seven marker categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerCategory {
    LexicalDiversity,
    TopicJump,
    SelfCorrection,
    Imperative,
    Repetition,
    VaguePlaceholder,
    Filler,
}

impl MarkerCategory {
    pub const ALL: [MarkerCategory; 7] = [
        MarkerCategory::LexicalDiversity,
        MarkerCategory::TopicJump,
        MarkerCategory::SelfCorrection,
        MarkerCategory::Imperative,
        MarkerCategory::Repetition,
        MarkerCategory::VaguePlaceholder,
        MarkerCategory::Filler,
    ];

    /// Stable key used in prompt weight directives and summaries.
    pub fn key(&self) -> &'static str {
        match self {
            MarkerCategory::LexicalDiversity => "lexical",
            MarkerCategory::TopicJump => "topic_jump",
            MarkerCategory::SelfCorrection => "self_correction",
            MarkerCategory::Imperative => "imperative",
            MarkerCategory::Repetition => "repetition",
            MarkerCategory::VaguePlaceholder => "vague",
            MarkerCategory::Filler => "filler",
        }
    }

    pub fn from_key(key: &str) -> Option<MarkerCategory> {
        MarkerCategory::ALL.iter().copied().find(|c| c.key() == key)
    }
}

/// Eight-way command intent taxonomy used for topic-jump detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandCategory {
    Music,
    Alarm,
    Lights,
    Weather,
    Qa,
    Math,
    Lists,
    Smalltalk,
}

const CATEGORY_KEYWORDS: [(CommandCategory, &[&str]); 8] = [
    (CommandCategory::Music, &["music", "song", "playlist", "radio", "volume", "album"]),
    (CommandCategory::Alarm, &["alarm", "timer", "wake", "remind", "reminder"]),
    (CommandCategory::Lights, &["light", "lights", "lamp", "plug", "thermostat"]),
    (CommandCategory::Weather, &["weather", "temperature", "rain", "forecast", "snow"]),
    (CommandCategory::Math, &["divide", "multiply", "plus", "minus", "percent", "times"]),
    (CommandCategory::Lists, &["list", "shopping", "grocery", "groceries", "todo"]),
    (CommandCategory::Qa, &["what", "who", "when", "where", "how", "why", "spell", "capital"]),
    (CommandCategory::Smalltalk, &["hello", "joke", "thank", "thanks", "morning", "goodnight"]),
];

/// Classifies a command into the intent taxonomy by keyword match; commands
/// with no matching keyword fall back to Smalltalk.
pub fn command_category(text: &str) -> CommandCategory {
    let tokens = tokenize(text);
    for (category, keywords) in CATEGORY_KEYWORDS {
        if tokens.iter().any(|t| keywords.contains(&t.as_str())) {
            return category;
        }
    }
    CommandCategory::Smalltalk
}

/// Per-transcript marker statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerStats {
    /// Unique tokens / total tokens; 1.0 for an empty transcript.
    pub type_token_ratio: f64,
    pub repetition_burst_count: u32,
    /// Filler tokens per command.
    pub filler_rate: f64,
    /// Placeholder phrase occurrences per command.
    pub vague_placeholder_rate: f64,
    /// Fraction of commands whose first token is imperative.
    pub imperative_fraction: f64,
    /// Category changes within 10 s per adjacent command pair.
    pub topic_jump_rate: f64,
    pub self_correction_abandon_count: u32,
}

impl MarkerStats {
    /// Impairment score for one category: a non-negative quantity that grows
    /// with the marker's presence. Lexical diversity is inverted and
    /// baseline-corrected: ordinary varied phrasing sits around TTR 0.5 on a
    /// month of commands, so only the excess repetition below that counts.
    pub fn impairment(&self, category: MarkerCategory) -> f64 {
        match category {
            MarkerCategory::LexicalDiversity => (0.5 - self.type_token_ratio).max(0.0),
            MarkerCategory::Repetition => self.repetition_burst_count as f64,
            MarkerCategory::Filler => self.filler_rate,
            MarkerCategory::VaguePlaceholder => self.vague_placeholder_rate,
            MarkerCategory::Imperative => self.imperative_fraction,
            MarkerCategory::TopicJump => self.topic_jump_rate,
            MarkerCategory::SelfCorrection => self.self_correction_abandon_count as f64,
        }
    }
}

fn count_occurrences(haystack: &str, needle: &str) -> u32 {
    let mut count = 0;
    let mut start = 0;
    while let Some(pos) = haystack[start..].find(needle) {
        count += 1;
        start += pos + needle.len();
    }
    count
}

/// Computes all marker statistics for one transcript. Pure: the same
/// transcript always yields the same stats.
pub fn marker_statistics(transcript: &MonthlyTranscript) -> MarkerStats {
    let commands = &transcript.commands;
    let n = commands.len();

    let mut total_tokens = 0usize;
    let mut unique: std::collections::BTreeSet<String> = Default::default();
    let mut filler_count = 0u32;
    let mut vague_count = 0u32;
    let mut imperative_count = 0usize;
    let mut self_corrections = 0u32;

    for cmd in commands {
        let tokens = tokenize(&cmd.text);
        total_tokens += tokens.len();
        for t in &tokens {
            if FILLER_TOKENS.contains(&t.as_str()) {
                filler_count += 1;
            }
            unique.insert(t.clone());
        }
        let normalized = normalize_command(&cmd.text);
        for phrase in PLACEHOLDER_PHRASES {
            vague_count += count_occurrences(&normalized, phrase);
        }
        for phrase in SELF_CORRECTION_PHRASES {
            self_corrections += count_occurrences(&normalized, phrase);
        }
        if let Some(first) = first_token(&cmd.text) {
            if IMPERATIVE_TOKENS.contains(&first.as_str()) {
                imperative_count += 1;
            }
        }
    }

    let type_token_ratio = if total_tokens == 0 {
        1.0
    } else {
        unique.len() as f64 / total_tokens as f64
    };

    // Maximal runs of identical normalized texts, counted when the run has
    // >= 3 commands and spans < 30 s first-to-last.
    let mut bursts = 0u32;
    let mut run_start = 0usize;
    for i in 1..=n {
        let run_ends = i == n
            || normalize_command(&commands[i].text) != normalize_command(&commands[run_start].text);
        if run_ends {
            let len = i - run_start;
            if len >= 3 {
                let span = (commands[i - 1].timestamp - commands[run_start].timestamp).num_seconds();
                if span < BURST_WINDOW_SECS {
                    bursts += 1;
                }
            }
            run_start = i;
        }
    }

    let mut jumps = 0usize;
    for pair in commands.windows(2) {
        let gap = (pair[1].timestamp - pair[0].timestamp).num_seconds();
        if gap < TOPIC_JUMP_WINDOW_SECS
            && command_category(&pair[0].text) != command_category(&pair[1].text)
        {
            jumps += 1;
        }
    }

    MarkerStats {
        type_token_ratio,
        repetition_burst_count: bursts,
        filler_rate: if n == 0 { 0.0 } else { filler_count as f64 / n as f64 },
        vague_placeholder_rate: if n == 0 { 0.0 } else { vague_count as f64 / n as f64 },
        imperative_fraction: if n == 0 { 0.0 } else { imperative_count as f64 / n as f64 },
        topic_jump_rate: if n < 2 { 0.0 } else { jumps as f64 / (n - 1) as f64 },
        self_correction_abandon_count: self_corrections,
    }
}
