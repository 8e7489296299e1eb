//! Three-part prompt templates and their wire format.
//!
//! A template renders as explicit `CONTEXT:` / `INSTRUCTION:` / `EXEMPLARS:`
//! blocks. The block markers give refiner responses a parseable contract:
//! a refinement must at minimum carry an instruction block; context and
//! exemplars are carried over when absent.

use serde::{Deserialize, Serialize};

use crate::types::Label;

pub const CONTEXT_MARKER: &str = "CONTEXT:";
pub const INSTRUCTION_MARKER: &str = "INSTRUCTION:";
pub const EXEMPLARS_MARKER: &str = "EXEMPLARS:";

/// A few-shot exemplar: a transcript excerpt with its cognitive status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub excerpt: String,
    pub label: Label,
}

/// The three-part prompt. Rendering order is always context, instruction,
/// exemplars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub context: String,
    pub instruction: String,
    pub exemplars: Vec<Exemplar>,
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("initial prompt requires non-empty context, instruction, and exemplars")]
    EmptyPart,
    #[error("refinement response lacks a recognizable {INSTRUCTION_MARKER} block")]
    MissingInstruction,
}

impl PromptTemplate {
    /// Constructs an initial prompt; all three parts must be non-empty.
    pub fn initial(
        context: String,
        instruction: String,
        exemplars: Vec<Exemplar>,
    ) -> Result<Self, PromptError> {
        if context.trim().is_empty() || instruction.trim().is_empty() || exemplars.is_empty() {
            return Err(PromptError::EmptyPart);
        }
        Ok(PromptTemplate {
            context,
            instruction,
            exemplars,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(CONTEXT_MARKER);
        out.push('\n');
        out.push_str(self.context.trim_end());
        out.push('\n');
        out.push_str(INSTRUCTION_MARKER);
        out.push('\n');
        out.push_str(self.instruction.trim_end());
        out.push('\n');
        out.push_str(EXEMPLARS_MARKER);
        out.push('\n');
        for exemplar in &self.exemplars {
            // Excerpts are flattened to one line so the block stays
            // line-parseable.
            let flat = exemplar.excerpt.replace('\n', " | ");
            out.push_str(&format!("[{}] {}\n", exemplar.label, flat));
        }
        out
    }
}

/// Raw block contents parsed out of marker-formatted text.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct BlockSet {
    pub context: Option<String>,
    pub instruction: Option<String>,
    pub exemplars: Option<String>,
}

/// Splits marker-formatted text into blocks. A marker must start a line;
/// the block runs until the next marker. Text before the first marker is
/// ignored.
pub fn parse_blocks(text: &str) -> BlockSet {
    #[derive(Clone, Copy, PartialEq)]
    enum Block {
        None,
        Context,
        Instruction,
        Exemplars,
    }
    let mut set = BlockSet::default();
    let mut current = Block::None;
    let mut buffer = String::new();

    let flush = |block: Block, buffer: &mut String, set: &mut BlockSet| {
        let content = buffer.trim().to_string();
        *buffer = String::new();
        match block {
            Block::Context => set.context = Some(content),
            Block::Instruction => set.instruction = Some(content),
            Block::Exemplars => set.exemplars = Some(content),
            Block::None => {}
        }
    };

    for line in text.lines() {
        let trimmed = line.trim_start();
        let next = if let Some(rest) = trimmed.strip_prefix(CONTEXT_MARKER) {
            Some((Block::Context, rest))
        } else if let Some(rest) = trimmed.strip_prefix(INSTRUCTION_MARKER) {
            Some((Block::Instruction, rest))
        } else if let Some(rest) = trimmed.strip_prefix(EXEMPLARS_MARKER) {
            Some((Block::Exemplars, rest))
        } else {
            None
        };
        match next {
            Some((block, rest)) => {
                flush(current, &mut buffer, &mut set);
                current = block;
                if !rest.trim().is_empty() {
                    buffer.push_str(rest.trim());
                    buffer.push('\n');
                }
            }
            None => {
                if current != Block::None {
                    buffer.push_str(line);
                    buffer.push('\n');
                }
            }
        }
    }
    flush(current, &mut buffer, &mut set);
    set
}

/// Parses an exemplars block back into labeled excerpts. Lines not matching
/// `[LABEL] text` are skipped.
pub fn parse_exemplars(block: &str) -> Vec<Exemplar> {
    let mut out = Vec::new();
    for line in block.lines() {
        let line = line.trim();
        let (label, rest) = if let Some(rest) = line.strip_prefix("[MCI] ") {
            (Label::Mci, rest)
        } else if let Some(rest) = line.strip_prefix("[HC] ") {
            (Label::Hc, rest)
        } else {
            continue;
        };
        out.push(Exemplar {
            excerpt: rest.to_string(),
            label,
        });
    }
    out
}

/// Applies a refiner response to `base`: the instruction block is replaced,
/// context and exemplars are replaced only when the response provides them.
pub fn apply_refinement(base: &PromptTemplate, response: &str) -> Result<PromptTemplate, PromptError> {
    let blocks = parse_blocks(response);
    let instruction = match blocks.instruction {
        Some(text) if !text.trim().is_empty() => text,
        _ => return Err(PromptError::MissingInstruction),
    };
    let context = match blocks.context {
        Some(text) if !text.trim().is_empty() => text,
        _ => base.context.clone(),
    };
    let exemplars = match blocks.exemplars.as_deref().map(parse_exemplars) {
        Some(parsed) if !parsed.is_empty() => parsed,
        _ => base.exemplars.clone(),
    };
    Ok(PromptTemplate {
        context,
        instruction,
        exemplars,
    })
}
