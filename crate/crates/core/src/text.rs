//! Tokenization shared by the keyword, unique-word and AI-flag analyses.
//!
//! A token is a maximal run of letters, digits, hyphens and apostrophes.
//! Hyphens and apostrophes at the edges of a run are trimmed, so
//! "plant-based" stays whole while "-fish-" becomes "fish".

use alloc::string::String;
use alloc::vec::Vec;

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '\'' || c == '\u{2019}'
}

fn is_joiner(c: char) -> bool {
    c == '-' || c == '\'' || c == '\u{2019}'
}

/// Lowercased tokens of `text`, in order.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !is_token_char(c))
        .map(|t| t.trim_matches(is_joiner))
        .filter(|t| !t.is_empty())
        .map(|t| t.replace('\u{2019}', "'").to_lowercase())
        .collect()
}
