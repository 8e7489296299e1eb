//! Longitudinal voice-command analytics.
//!
//! The pipeline cleans raw voice-assistant command logs, iteratively refines
//! an LLM feature-extraction prompt against a validation minibatch, fuses
//! per-month acoustic and linguistic embeddings into multimodal sequences,
//! and classifies MCI vs. HC with small from-scratch time-series
//! transformers under leave-one-subject-out evaluation. A deterministic
//! synthetic cohort generator with planted linguistic markers provides
//! ground truth for end-to-end validation.

pub mod embed;
pub mod gateway;
pub mod harness;
pub mod markers;
pub mod metrics;
pub mod preprocess;
pub mod prompt;
pub mod prompt_opt;
pub mod synth;
pub mod textutil;
pub mod tsmodel;
pub mod types;
