//! Command-log cleaning: error-record filtering, wake-word detection and
//! stripping, and monthly grouping.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textutil::{first_token, normalize_command};
use crate::types::{CommandRecord, MonthlyTranscript};

/// Transcript strings emitted by the voice platform for unusable audio.
pub const DEFAULT_ERROR_PHRASES: [&str; 2] = [
    "audio could not be understood",
    "audio was not intended for this device",
];

/// Device-activation tokens eligible for stripping.
pub const DEFAULT_WAKE_LEXICON: [&str; 4] = ["alexa", "computer", "echo", "ziggy"];

/// Top-k cutoff for first-token frequency ranking.
pub const DEFAULT_WAKE_TOP_K: usize = 4;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("record outside study window: participant {participant_id} at {timestamp} (window is {window_months} months from {study_start})")]
    OutOfWindow {
        participant_id: String,
        timestamp: String,
        study_start: NaiveDate,
        window_months: u32,
    },
}

/// Why a record was dropped; serialized into the machine-readable drop log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    EmptyText,
    ErrorPhrase,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DroppedRecord {
    pub record: CommandRecord,
    pub reason: DropReason,
}

/// Result of [`filter_error_records`]; `kept.len() + dropped.len()` always
/// equals the input length.
#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: Vec<CommandRecord>,
    pub dropped: Vec<DroppedRecord>,
}

pub fn default_error_phrases() -> BTreeSet<String> {
    DEFAULT_ERROR_PHRASES.iter().map(|s| s.to_string()).collect()
}

pub fn default_wake_lexicon() -> BTreeSet<String> {
    DEFAULT_WAKE_LEXICON.iter().map(|s| s.to_string()).collect()
}

/// Drops records whose text, after trim + casefold, exactly equals an error
/// phrase, and records with empty or whitespace-only text. Matching is exact
/// rather than substring so legitimate commands quoting a system message
/// survive. Relative order is preserved.
pub fn filter_error_records(
    records: Vec<CommandRecord>,
    error_phrases: &BTreeSet<String>,
) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for record in records {
        let normalized = normalize_command(&record.text);
        if normalized.is_empty() {
            out.dropped.push(DroppedRecord {
                record,
                reason: DropReason::EmptyText,
            });
        } else if error_phrases.contains(&normalized) {
            out.dropped.push(DroppedRecord {
                record,
                reason: DropReason::ErrorPhrase,
            });
        } else {
            out.kept.push(record);
        }
    }
    out
}

/// Ranks first tokens by corpus frequency (ties broken lexicographically) and
/// returns the top-k tokens that are also in `lexicon`. Intersecting with the
/// lexicon keeps frequent content verbs ("play") from being treated as wake
/// words.
pub fn detect_wake_words(
    records: &[CommandRecord],
    k: usize,
    lexicon: &BTreeSet<String>,
) -> BTreeSet<String> {
    let mut freqs: BTreeMap<String, usize> = BTreeMap::new();
    for record in records {
        if let Some(tok) = first_token(&record.text) {
            if !tok.is_empty() {
                *freqs.entry(tok).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = freqs.into_iter().collect();
    // Descending frequency, ascending token at equal frequency.
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .take(k)
        .filter(|(tok, _)| lexicon.contains(tok))
        .map(|(tok, _)| tok)
        .collect()
}

/// Removes a leading wake word and one following separator from the record
/// text. Applied once: only the first token is examined, so a doubled wake
/// word keeps its second occurrence.
pub fn strip_wake_word(record: &CommandRecord, wake_words: &BTreeSet<String>) -> CommandRecord {
    let text = &record.text;
    let trimmed = text.trim_start();
    let leading_ws = text.len() - trimmed.len();
    let token_end = trimmed
        .find(|c: char| c.is_ascii_whitespace())
        .unwrap_or(trimmed.len());
    let raw_first = &trimmed[..token_end];
    let normalized = raw_first
        .trim_matches(|c: char| c.is_ascii_punctuation())
        .to_lowercase();
    if normalized.is_empty() || !wake_words.contains(&normalized) {
        return record.clone();
    }
    let mut rest = &trimmed[token_end..];
    // One separator after the token.
    let mut chars = rest.char_indices();
    if let Some((_, c)) = chars.next() {
        if c.is_ascii_whitespace() {
            rest = &rest[c.len_utf8()..];
        }
    }
    let mut new_text = String::with_capacity(leading_ws + rest.len());
    new_text.push_str(&text[..leading_ws]);
    new_text.push_str(rest);
    CommandRecord {
        text: new_text,
        ..record.clone()
    }
}

/// Calendar-month difference from `start` to `date`, floored by day-of-month.
fn months_elapsed(start: NaiveDate, date: NaiveDate) -> i64 {
    let mut months = (date.year() as i64 - start.year() as i64) * 12
        + (date.month() as i64 - start.month() as i64);
    if date.day() < start.day() {
        months -= 1;
    }
    months
}

/// Buckets one participant's records into exactly `t_months` monthly
/// transcripts. Empty months yield empty command lists. A record outside
/// `[study_start, study_start + t_months months)` is rejected.
pub fn group_monthly(
    records: &[CommandRecord],
    study_start: NaiveDate,
    t_months: u32,
) -> Result<Vec<MonthlyTranscript>, PreprocessError> {
    let participant_id = records
        .first()
        .map(|r| r.participant_id.clone())
        .unwrap_or_default();
    let mut months: Vec<Vec<CommandRecord>> = vec![Vec::new(); t_months as usize];
    for record in records {
        let elapsed = months_elapsed(study_start, record.timestamp.date_naive());
        if elapsed < 0 || elapsed >= t_months as i64 {
            return Err(PreprocessError::OutOfWindow {
                participant_id: record.participant_id.clone(),
                timestamp: record.timestamp.to_rfc3339(),
                study_start,
                window_months: t_months,
            });
        }
        months[elapsed as usize].push(record.clone());
    }
    Ok(months
        .into_iter()
        .enumerate()
        .map(|(idx, mut commands)| {
            commands.sort_by_key(|c| c.timestamp);
            MonthlyTranscript {
                participant_id: participant_id.clone(),
                month_index: idx as u32 + 1,
                commands,
            }
        })
        .collect())
}

/// Whether wake-word frequency ranking runs per participant or pooled over
/// the whole cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WakeWordScope {
    PerParticipant,
    Pooled,
}

/// Cleaned cohort: per-participant monthly transcripts plus the drop log and
/// the wake words detected for each scope unit.
#[derive(Debug, Clone)]
pub struct CleanCohort {
    /// Sorted by participant id; each entry carries exactly `t_months`
    /// transcripts.
    pub transcripts: BTreeMap<String, Vec<MonthlyTranscript>>,
    pub dropped: Vec<DroppedRecord>,
    pub wake_words: BTreeMap<String, BTreeSet<String>>,
}

/// Full cleaning pipeline: filter, detect wake words (per participant by
/// default), strip, group monthly.
pub fn clean_cohort(
    records: Vec<CommandRecord>,
    study_start: NaiveDate,
    t_months: u32,
    scope: WakeWordScope,
) -> Result<CleanCohort, PreprocessError> {
    let lexicon = default_wake_lexicon();
    let outcome = filter_error_records(records, &default_error_phrases());

    let mut by_participant: BTreeMap<String, Vec<CommandRecord>> = BTreeMap::new();
    for record in outcome.kept {
        by_participant
            .entry(record.participant_id.clone())
            .or_default()
            .push(record);
    }

    let pooled_wake = match scope {
        WakeWordScope::Pooled => {
            let all: Vec<CommandRecord> =
                by_participant.values().flatten().cloned().collect();
            Some(detect_wake_words(&all, DEFAULT_WAKE_TOP_K, &lexicon))
        }
        WakeWordScope::PerParticipant => None,
    };

    let mut transcripts = BTreeMap::new();
    let mut wake_words = BTreeMap::new();
    for (pid, recs) in by_participant {
        let wake = match &pooled_wake {
            Some(w) => w.clone(),
            None => detect_wake_words(&recs, DEFAULT_WAKE_TOP_K, &lexicon),
        };
        let stripped: Vec<CommandRecord> =
            recs.iter().map(|r| strip_wake_word(r, &wake)).collect();
        transcripts.insert(pid.clone(), group_monthly(&stripped, study_start, t_months)?);
        wake_words.insert(pid, wake);
    }

    Ok(CleanCohort {
        transcripts,
        dropped: outcome.dropped,
        wake_words,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{DateTime, Duration, TimeZone, Utc};

    fn rec(pid: &str, ts: DateTime<Utc>, text: &str) -> CommandRecord {
        CommandRecord {
            participant_id: pid.into(),
            timestamp: ts,
            text: text.into(),
            acoustic_ref: None,
        }
    }

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 1, 15, 12, 0, 0).unwrap()
    }

    #[test]
    fn filter_drops_error_phrases_and_empty() {
        let records = vec![
            rec("p", t0(), "audio could not be understood"),
            rec("p", t0(), "Audio was not intended for this device"),
            rec("p", t0(), ""),
            rec("p", t0(), "   "),
            rec("p", t0(), "turn off the lights"),
            // Quoting a system message must survive exact matching.
            rec("p", t0(), "why does it say audio could not be understood"),
        ];
        let out = filter_error_records(records, &default_error_phrases());
        assert_eq!(out.kept.len(), 2);
        assert_eq!(out.dropped.len(), 4);
        assert_eq!(out.kept[0].text, "turn off the lights");
        assert_eq!(out.dropped[2].reason, DropReason::EmptyText);
    }

    #[test]
    fn filter_is_idempotent_and_conserving() {
        let records = vec![
            rec("p", t0(), "audio could not be understood"),
            rec("p", t0(), "play music"),
            rec("p", t0(), ""),
        ];
        let n = records.len();
        let once = filter_error_records(records, &default_error_phrases());
        assert_eq!(once.kept.len() + once.dropped.len(), n);
        let twice = filter_error_records(once.kept.clone(), &default_error_phrases());
        assert_eq!(twice.kept, once.kept);
        assert!(twice.dropped.is_empty());
    }

    #[test]
    fn wake_word_detection_ranks_and_intersects() {
        // First-token frequencies alexa:100, echo:40, computer:30, ziggy:10, play:9.
        let mut records = Vec::new();
        for (tok, n) in [("alexa", 100), ("echo", 40), ("computer", 30), ("ziggy", 10), ("play", 9)]
        {
            for _ in 0..n {
                records.push(rec("p", t0(), &format!("{tok} do something")));
            }
        }
        let found = detect_wake_words(&records, 4, &default_wake_lexicon());
        let expect: BTreeSet<String> =
            ["alexa", "echo", "computer", "ziggy"].iter().map(|s| s.to_string()).collect();
        assert_eq!(found, expect);
    }

    #[test]
    fn wake_word_detection_never_strips_content_words() {
        let mut records = Vec::new();
        for _ in 0..50 {
            records.push(rec("p", t0(), "play music"));
        }
        for _ in 0..40 {
            records.push(rec("p", t0(), "stop music"));
        }
        assert!(detect_wake_words(&records, 4, &default_wake_lexicon()).is_empty());
    }

    #[test]
    fn wake_word_single_candidate() {
        let records: Vec<_> = (0..10).map(|_| rec("p", t0(), "alexa play")).collect();
        let found = detect_wake_words(&records, 4, &default_wake_lexicon());
        assert_eq!(found.len(), 1);
        assert!(found.contains("alexa"));
    }

    #[test]
    fn wake_word_tie_break_is_lexicographic() {
        let mut records = Vec::new();
        for tok in ["ziggy", "echo", "alexa", "computer", "aardvark"] {
            for _ in 0..5 {
                records.push(rec("p", t0(), &format!("{tok} hi")));
            }
        }
        // All tied at 5; top 4 by lexicographic order: aardvark, alexa, computer, echo.
        let found = detect_wake_words(&records, 4, &default_wake_lexicon());
        let expect: BTreeSet<String> =
            ["alexa", "computer", "echo"].iter().map(|s| s.to_string()).collect();
        assert_eq!(found, expect);
    }

    #[test]
    fn strip_removes_only_leading_token_once() {
        let wake: BTreeSet<String> = ["alexa", "echo"].iter().map(|s| s.to_string()).collect();
        let stripped = strip_wake_word(&rec("p", t0(), "Alexa set a timer"), &wake);
        assert_eq!(stripped.text, "set a timer");
        let noop = strip_wake_word(&rec("p", t0(), "set a timer"), &wake);
        assert_eq!(noop.text, "set a timer");
        let doubled = strip_wake_word(&rec("p", t0(), "echo echo play music"), &wake);
        assert_eq!(doubled.text, "echo play music");
        // Idempotent when no wake word remains.
        let again = strip_wake_word(&stripped, &wake);
        assert_eq!(again.text, "set a timer");
    }

    #[test]
    fn strip_handles_trailing_punctuation() {
        let wake: BTreeSet<String> = ["alexa"].iter().map(|s| s.to_string()).collect();
        let stripped = strip_wake_word(&rec("p", t0(), "Alexa, play music"), &wake);
        assert_eq!(stripped.text, "play music");
    }

    #[test]
    fn group_monthly_buckets_by_calendar_month() {
        let start = NaiveDate::from_ymd_opt(2023, 1, 15).unwrap();
        let records = vec![
            rec("p", t0() + Duration::days(3), "a"),
            rec("p", t0() + Duration::days(40), "b"),
        ];
        let months = group_monthly(&records, start, 18).unwrap();
        assert_eq!(months.len(), 18);
        assert_eq!(months[0].commands.len(), 1);
        assert_eq!(months[1].commands.len(), 1);
        assert!(months[2..].iter().all(|m| m.commands.is_empty()));
        assert_eq!(months[5].month_index, 6);
    }

    #[test]
    fn group_monthly_empty_input() {
        let start = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
        let months = group_monthly(&[], start, 18).unwrap();
        assert_eq!(months.len(), 18);
        assert!(months.iter().all(|m| m.commands.is_empty()));
    }

    #[test]
    fn group_monthly_rejects_out_of_window() {
        let start = NaiveDate::from_ymd_opt(2023, 1, 15).unwrap();
        let late = rec("p", Utc.with_ymd_and_hms(2024, 8, 20, 0, 0, 0).unwrap(), "x");
        let err = group_monthly(&[late], start, 18).unwrap_err();
        assert!(matches!(err, PreprocessError::OutOfWindow { .. }));
        let early = rec("p", Utc.with_ymd_and_hms(2023, 1, 10, 0, 0, 0).unwrap(), "x");
        assert!(group_monthly(&[early], start, 18).is_err());
    }

    #[test]
    fn group_monthly_partitions_records() {
        let start = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
        let records: Vec<_> = (0..100)
            .map(|i| rec("p", t0() + Duration::days(i * 5 % 500), &format!("cmd {i}")))
            .collect();
        let months = group_monthly(&records, start, 18).unwrap();
        let total: usize = months.iter().map(|m| m.commands.len()).sum();
        assert_eq!(total, records.len());
        for m in &months {
            for w in m.commands.windows(2) {
                assert!(w[0].timestamp <= w[1].timestamp);
            }
        }
    }

    #[test]
    fn clean_cohort_end_to_end() {
        let start = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
        let mut records = Vec::new();
        for i in 0..20 {
            records.push(rec(
                "p1",
                Utc.with_ymd_and_hms(2023, 1, 2 + i % 20, 8, 0, 0).unwrap(),
                "alexa play music",
            ));
        }
        records.push(rec("p1", t0(), "audio could not be understood"));
        let cohort = clean_cohort(records, start, 3, WakeWordScope::PerParticipant).unwrap();
        assert_eq!(cohort.dropped.len(), 1);
        let months = &cohort.transcripts["p1"];
        assert_eq!(months.len(), 3);
        for m in months {
            for c in &m.commands {
                assert!(!c.text.starts_with("alexa"));
            }
        }
        assert!(cohort.wake_words["p1"].contains("alexa"));
    }
}
