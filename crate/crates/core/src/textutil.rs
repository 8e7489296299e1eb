//! Tokenization helpers shared by preprocessing, marker counting, and the
//! rule backend.
//!
//! Tokens are produced by casefolding, splitting on ASCII whitespace, and
//! stripping punctuation from token edges.

/// Splits `text` into normalized tokens. Tokens that are pure punctuation
/// disappear.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_ascii_whitespace()
        .filter_map(|raw| {
            let tok = raw
                .trim_matches(|c: char| c.is_ascii_punctuation())
                .to_lowercase();
            if tok.is_empty() {
                None
            } else {
                Some(tok)
            }
        })
        .collect()
}

/// First normalized token of `text`, if any.
pub fn first_token(text: &str) -> Option<String> {
    text.split_ascii_whitespace().next().map(|raw| {
        raw.trim_matches(|c: char| c.is_ascii_punctuation())
            .to_lowercase()
    })
}

/// Trim + casefold normalization used for exact command comparison.
pub fn normalize_command(text: &str) -> String {
    text.trim().to_lowercase()
}
