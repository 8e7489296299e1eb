//! Shared domain types: voice-command records, monthly transcripts, and
//! cohort labels.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// MoCA cutoff separating HC from MCI: scores >= 26 label HC.
pub const MOCA_HC_CUTOFF: u8 = 26;

/// Cognitive status label. MCI is the positive class throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "HC")]
    Hc,
    #[serde(rename = "MCI")]
    Mci,
}

impl Label {
    pub fn from_moca(score: u8) -> Label {
        if score >= MOCA_HC_CUTOFF {
            Label::Hc
        } else {
            Label::Mci
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Hc => "HC",
            Label::Mci => "MCI",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One timestamped voice command, the atomic input unit.
///
/// `text` is stored verbatim; filtering and wake-word stripping produce new
/// records rather than mutating in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub participant_id: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acoustic_ref: Option<String>,
}

/// All of one participant's cleaned commands in one study month.
///
/// `month_index` is 1-based; commands are kept sorted by timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyTranscript {
    pub participant_id: String,
    pub month_index: u32,
    pub commands: Vec<CommandRecord>,
}

impl MonthlyTranscript {
    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    /// Renders the transcript as one command per line, `<epoch_seconds>\t<text>`.
    /// This is the wire form fed to LLM backends; the rule backend parses it
    /// back to recover inter-command timing.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for cmd in &self.commands {
            out.push_str(&format!("{}\t{}\n", cmd.timestamp.timestamp(), cmd.text));
        }
        out
    }

    /// Parses the `render` line format back into a transcript.
    /// Lines that do not match the format are skipped.
    pub fn parse_rendered(participant_id: &str, month_index: u32, text: &str) -> MonthlyTranscript {
        let mut commands = Vec::new();
        for line in text.lines() {
            if let Some((ts, body)) = line.split_once('\t') {
                if let Ok(secs) = ts.trim().parse::<i64>() {
                    if let Some(when) = DateTime::<Utc>::from_timestamp(secs, 0) {
                        commands.push(CommandRecord {
                            participant_id: participant_id.to_string(),
                            timestamp: when,
                            text: body.to_string(),
                            acoustic_ref: None,
                        });
                    }
                }
            }
        }
        MonthlyTranscript {
            participant_id: participant_id.to_string(),
            month_index,
            commands,
        }
    }
}

/// Participant-level cohort label, fixed at baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortLabel {
    pub participant_id: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moca_score: Option<u8>,
}

impl CohortLabel {
    /// Checks the MoCA/label consistency rule when a score is present.
    pub fn is_consistent(&self) -> bool {
        match self.moca_score {
            Some(score) => self.label == Label::from_moca(score),
            None => true,
        }
    }
}
