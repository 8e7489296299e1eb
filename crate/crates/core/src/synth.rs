//! Deterministic synthetic cohort generation with linguistic markers planted
//! at controllable strength in MCI participants, plus class-shifted synthetic
//! acoustic vectors.
//!
//! The planted signal is defined by the same counting rules as
//! [`crate::markers::marker_statistics`], which is the ground-truth oracle
//! the private clinical data cannot provide.

use chrono::{Datelike, Duration, NaiveDate, TimeZone, Utc};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markers::MarkerCategory;
use crate::types::{CohortLabel, CommandRecord, Label};

/// Average weeks per calendar month.
const WEEKS_PER_MONTH: f64 = 4.345;

/// Number of leading acoustic dimensions receiving the class mean shift.
pub const ACOUSTIC_SHIFT_DIMS: usize = 8;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic cohort configuration: {0}")]
    Config(String),
}

/// Per-category planting strength in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarkerStrengths {
    pub lexical: f64,
    pub topic_jump: f64,
    pub self_correction: f64,
    pub imperative: f64,
    pub repetition: f64,
    pub vague: f64,
    pub filler: f64,
}

impl Default for MarkerStrengths {
    fn default() -> Self {
        MarkerStrengths::uniform(0.0)
    }
}

impl MarkerStrengths {
    pub fn uniform(s: f64) -> Self {
        MarkerStrengths {
            lexical: s,
            topic_jump: s,
            self_correction: s,
            imperative: s,
            repetition: s,
            vague: s,
            filler: s,
        }
    }

    pub fn get(&self, category: MarkerCategory) -> f64 {
        match category {
            MarkerCategory::LexicalDiversity => self.lexical,
            MarkerCategory::TopicJump => self.topic_jump,
            MarkerCategory::SelfCorrection => self.self_correction,
            MarkerCategory::Imperative => self.imperative,
            MarkerCategory::Repetition => self.repetition,
            MarkerCategory::VaguePlaceholder => self.vague,
            MarkerCategory::Filler => self.filler,
        }
    }

    pub fn set(&mut self, category: MarkerCategory, s: f64) {
        match category {
            MarkerCategory::LexicalDiversity => self.lexical = s,
            MarkerCategory::TopicJump => self.topic_jump = s,
            MarkerCategory::SelfCorrection => self.self_correction = s,
            MarkerCategory::Imperative => self.imperative = s,
            MarkerCategory::Repetition => self.repetition = s,
            MarkerCategory::VaguePlaceholder => self.vague = s,
            MarkerCategory::Filler => self.filler = s,
        }
    }

    pub fn is_null(&self) -> bool {
        MarkerCategory::ALL.iter().all(|&c| self.get(c) == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_participants: usize,
    pub mci_fraction: f64,
    pub t_months: u32,
    pub commands_per_week: f64,
    pub marker_strengths: MarkerStrengths,
    pub acoustic_dim: usize,
    pub acoustic_shift: f64,
    pub seed: u64,
    pub study_start: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_participants: 16,
            mci_fraction: 0.5,
            t_months: 18,
            commands_per_week: 47.0,
            marker_strengths: MarkerStrengths::default(),
            acoustic_dim: 768,
            acoustic_shift: 0.0,
            seed: 0,
            study_start: NaiveDate::from_ymd_opt(2023, 1, 1).unwrap(),
        }
    }
}

/// One participant-month synthetic acoustic vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticRow {
    pub participant_id: String,
    pub month_index: u32,
    pub vector: Vec<f64>,
}

/// Everything one synthetic cohort emits: raw command records, baseline
/// labels, and per-month acoustic vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub records: Vec<CommandRecord>,
    pub labels: Vec<CohortLabel>,
    pub acoustic: Vec<AcousticRow>,
}

// Command bank, organized so the HC population draws across all eight intent
// categories with varied phrasing.
const BANK: [&[&str]; 8] = [
    &[
        "play some jazz music",
        "play my morning playlist",
        "put on classical radio",
        "play the new album by norah jones",
        "turn the volume down a little",
        "skip this song please",
    ],
    &[
        "set a timer for fifteen minutes",
        "set the alarm for seven a m",
        "remind me to take my pills at noon",
        "cancel my eight o'clock alarm",
        "wake me up at six thirty tomorrow",
    ],
    &[
        "turn off the kitchen lights",
        "dim the living room lamp",
        "turn on the porch light",
        "set the thermostat to seventy",
        "switch off the bedroom plug",
    ],
    &[
        "what is the weather today",
        "will it rain this afternoon",
        "what's the forecast for the weekend",
        "how cold is it outside right now",
        "is there snow expected tonight",
    ],
    &[
        "what is the capital of portugal",
        "spell the word risotto",
        "who wrote pride and prejudice",
        "how far is the moon from earth",
        "when does daylight saving time end",
    ],
    &[
        "what is twelve times eight",
        "divide one hundred by seven",
        "what is forty percent of ninety",
        "add thirty five plus twenty nine",
    ],
    &[
        "add milk to my shopping list",
        "what's on my grocery list",
        "add call the dentist to my todo list",
        "remove eggs from the shopping list",
    ],
    &[
        "tell me a joke",
        "good morning",
        "thank you",
        "tell me something interesting",
        "goodnight",
    ],
];

// Restricted phrasing pool for the reduced-lexical-diversity marker.
const RESTRICTED_BANK: [&str; 3] = ["play music", "set a timer", "turn off the lights"];

// Vague-placeholder phrasings for impaired word retrieval.
const VAGUE_BANK: [&str; 4] = [
    "turn on that thing",
    "play the thing again",
    "where is whatever it is",
    "stop that thing",
];

// Imperative-only device commands.
const IMPERATIVE_BANK: [&str; 5] = [
    "play music",
    "stop",
    "turn off the lights",
    "set a timer",
    "volume up",
];

const SELF_CORRECTION_BANK: [&str; 3] = [
    "never mind",
    "no wait cancel that",
    "set the alarm for seven no wait eight",
];

/// One generated interaction: commands with intra-event gaps in seconds.
struct Event {
    commands: Vec<(String, i64)>,
}

fn single(text: &str) -> Event {
    Event {
        commands: vec![(text.to_string(), 0)],
    }
}

fn add_months(date: NaiveDate, months: u32) -> NaiveDate {
    let zero_based = date.month0() + months;
    let year = date.year() + (zero_based / 12) as i32;
    let month = zero_based % 12 + 1;
    NaiveDate::from_ymd_opt(year, month, date.day()).unwrap()
}

fn base_command(rng: &mut ChaCha8Rng) -> String {
    let category = rng.gen_range(0..BANK.len());
    BANK[category][rng.gen_range(0..BANK[category].len())].to_string()
}

fn mci_command(rng: &mut ChaCha8Rng, strengths: &MarkerStrengths) -> String {
    if rng.gen_bool((0.8 * strengths.lexical).clamp(0.0, 1.0)) {
        return RESTRICTED_BANK[rng.gen_range(0..RESTRICTED_BANK.len())].to_string();
    }
    if rng.gen_bool((0.4 * strengths.vague).clamp(0.0, 1.0)) {
        return VAGUE_BANK[rng.gen_range(0..VAGUE_BANK.len())].to_string();
    }
    if rng.gen_bool((0.5 * strengths.imperative).clamp(0.0, 1.0)) {
        return IMPERATIVE_BANK[rng.gen_range(0..IMPERATIVE_BANK.len())].to_string();
    }
    base_command(rng)
}

fn with_fillers(rng: &mut ChaCha8Rng, strengths: &MarkerStrengths, text: String) -> String {
    if rng.gen_bool((0.6 * strengths.filler).clamp(0.0, 1.0)) {
        let prefix = if rng.gen_bool(0.3) { "um uh" } else if rng.gen_bool(0.5) { "um" } else { "uh" };
        format!("{prefix} {text}")
    } else {
        text
    }
}

fn month_events(
    rng: &mut ChaCha8Rng,
    label: Label,
    strengths: &MarkerStrengths,
    n_commands: usize,
) -> Vec<Event> {
    let planted = label == Label::Mci;
    let mut events = Vec::new();
    let mut generated = 0usize;
    while generated < n_commands {
        if planted && rng.gen_bool((0.06 * strengths.repetition).clamp(0.0, 1.0)) {
            // Burst: 3-4 identical requests, gaps small enough that the full
            // run spans < 30 s.
            let base = mci_command(rng, strengths);
            let text = with_fillers(rng, strengths, base);
            let reps = rng.gen_range(3..=4);
            let mut commands = Vec::new();
            for r in 0..reps {
                commands.push((text.clone(), if r == 0 { 0 } else { rng.gen_range(3..=7) }));
            }
            generated += commands.len();
            events.push(Event { commands });
        } else if planted && rng.gen_bool((0.12 * strengths.topic_jump).clamp(0.0, 1.0)) {
            // Abrupt topic jump: two commands from different categories
            // within < 10 s.
            let a = BANK[0][rng.gen_range(0..BANK[0].len())].to_string();
            let b = BANK[5][rng.gen_range(0..BANK[5].len())].to_string();
            let c = BANK[2][rng.gen_range(0..BANK[2].len())].to_string();
            generated += 3;
            events.push(Event {
                commands: vec![(a, 0), (b, rng.gen_range(3..=8)), (c, rng.gen_range(3..=8))],
            });
        } else if planted && rng.gen_bool((0.08 * strengths.self_correction).clamp(0.0, 1.0)) {
            let text = SELF_CORRECTION_BANK[rng.gen_range(0..SELF_CORRECTION_BANK.len())];
            generated += 1;
            events.push(single(text));
        } else {
            let text = if planted {
                let base = mci_command(rng, strengths);
                with_fillers(rng, strengths, base)
            } else {
                base_command(rng)
            };
            generated += 1;
            events.push(Event {
                commands: vec![(text, 0)],
            });
        }
    }
    events
}

/// Generates one deterministic synthetic cohort.
///
/// The number of MCI labels is `round(n_participants * mci_fraction)`; a
/// cohort that would end up single-class is rejected.
pub fn generate_cohort(config: &SynthConfig) -> Result<SyntheticCohort, SynthError> {
    if config.n_participants < 2 {
        return Err(SynthError::Config(format!(
            "need at least 2 participants, got {}",
            config.n_participants
        )));
    }
    if !(0.0..=1.0).contains(&config.mci_fraction) {
        return Err(SynthError::Config("mci_fraction must lie in [0, 1]".into()));
    }
    if config.t_months < 1 {
        return Err(SynthError::Config("t_months must be >= 1".into()));
    }
    if config.commands_per_week <= 0.0 {
        return Err(SynthError::Config("commands_per_week must be positive".into()));
    }
    let n_mci = (config.n_participants as f64 * config.mci_fraction).round() as usize;
    if n_mci == 0 || n_mci == config.n_participants {
        return Err(SynthError::Config(format!(
            "degenerate single-class cohort: {n_mci} MCI of {}",
            config.n_participants
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let commands_per_month = config.commands_per_week * WEEKS_PER_MONTH;
    let count_noise = Normal::new(0.0, (commands_per_month * 0.15).max(0.5))
        .expect("valid normal");
    let unit = Normal::new(0.0, 1.0).expect("valid normal");

    let mut records = Vec::new();
    let mut labels = Vec::new();
    let mut acoustic = Vec::new();

    for p in 0..config.n_participants {
        let pid = format!("p{:03}", p + 1);
        let label = if p < n_mci { Label::Mci } else { Label::Hc };
        let moca = match label {
            Label::Mci => rng.gen_range(18..26),
            Label::Hc => rng.gen_range(26..=30),
        };
        labels.push(CohortLabel {
            participant_id: pid.clone(),
            label,
            moca_score: Some(moca),
        });

        for month in 0..config.t_months {
            let month_start = add_months(config.study_start, month);
            let n_commands =
                (commands_per_month + count_noise.sample(&mut rng)).round().max(1.0) as usize;
            let mut events = month_events(&mut rng, label, &config.marker_strengths, n_commands);

            // Anchor each event at a random second within the first 28 days
            // of the month, then sort; event-internal gaps stay tight.
            let mut anchors: Vec<i64> = (0..events.len())
                .map(|_| rng.gen_range(0..28 * 24 * 3600))
                .collect();
            anchors.sort_unstable();
            // Keep anchored events from overlapping within burst windows.
            for i in 1..anchors.len() {
                if anchors[i] - anchors[i - 1] < 60 {
                    anchors[i] = anchors[i - 1] + 60 + rng.gen_range(0..60);
                }
            }
            let month_utc = Utc
                .from_utc_datetime(&month_start.and_hms_opt(0, 0, 0).unwrap());
            for (event, anchor) in events.drain(..).zip(anchors) {
                let mut offset = anchor;
                for (text, gap) in event.commands {
                    offset += gap;
                    records.push(CommandRecord {
                        participant_id: pid.clone(),
                        timestamp: month_utc + Duration::seconds(offset),
                        text,
                        acoustic_ref: Some(format!("{pid}-m{:02}", month + 1)),
                    });
                }
            }

            let mut vector: Vec<f64> = (0..config.acoustic_dim)
                .map(|_| unit.sample(&mut rng))
                .collect();
            if label == Label::Mci {
                for value in vector.iter_mut().take(ACOUSTIC_SHIFT_DIMS) {
                    *value += config.acoustic_shift;
                }
            }
            acoustic.push(AcousticRow {
                participant_id: pid.clone(),
                month_index: month + 1,
                vector,
            });
        }
    }

    records.sort_by(|a, b| {
        a.participant_id
            .cmp(&b.participant_id)
            .then(a.timestamp.cmp(&b.timestamp))
    });
    Ok(SyntheticCohort {
        records,
        labels,
        acoustic,
    })
}
