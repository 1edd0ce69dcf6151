//! Post-processing applied to model text before a bot sends it.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{lines, Grammar};
use crate::engine::Millis;

const SENTENCE_END: [char; 4] = ['.', '!', '?', '\u{2026}'];
const REDUCED: [char; 6] = [',', '.', ';', ':', '!', '?'];

/// Rewrites `text` in the bot's grammar style. Idempotent for every grammar.
pub fn apply_grammar(text: &str, grammar: Grammar) -> String {
    match grammar {
        Grammar::Perfect => text.to_string(),
        Grammar::Lowercase => strip_sentence_final(&text.to_lowercase()),
        Grammar::ReducedPunctuation => strip_boundary_punctuation(text),
    }
}

/// Drops runs of sentence-ending punctuation that are followed by
/// whitespace or the end of the text.
fn strip_sentence_final(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        if SENTENCE_END.contains(&chars[i]) {
            let start = i;
            while i < chars.len() && SENTENCE_END.contains(&chars[i]) {
                i += 1;
            }
            let at_boundary = i == chars.len() || chars[i].is_whitespace();
            if !at_boundary {
                out.extend(&chars[start..i]);
            }
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out.trim_end().to_string()
}

/// Removes `, . ; : ! ?` unless the mark sits between two alphanumerics.
fn strip_boundary_punctuation(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if REDUCED.contains(&c) {
            let inner = i > 0
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if !inner {
                continue;
            }
        }
        out.push(c);
    }
    out.trim_end().to_string()
}

/// Splits text into sentences. A sentence ends after a run of `. ! ?`
/// followed by whitespace.
pub fn sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.trim().chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        cur.push(c);
        i += 1;
        if SENTENCE_END.contains(&c) {
            while i < chars.len() && SENTENCE_END.contains(&chars[i]) {
                cur.push(chars[i]);
                i += 1;
            }
            if i == chars.len() || chars[i].is_whitespace() {
                let s = cur.trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                cur.clear();
            }
        }
    }
    let s = cur.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

/// Breaks a reply into separately sent sentences at offsets 0, d, 2d, ...
/// With `split` false (bot-only conversations) the text stays whole.
pub fn split_into_chain(text: &str, chain_delay_ms: Millis, split: bool) -> Vec<(String, Millis)> {
    if !split {
        return alloc::vec![(text.trim().to_string(), 0)];
    }
    sentences(text)
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i as Millis * chain_delay_ms))
        .collect()
}

/// Removes stock phrases that make bot replies sound canned.
pub fn scrub_common_phrases(text: &str) -> String {
    let mut out = text.to_string();
    for phrase in lines::SCRUBBED_PHRASES {
        loop {
            let lower = out.to_lowercase();
            let Some(pos) = lower.find(phrase) else { break };
            // lowercase can shift byte offsets for non-ascii text; bail out then
            if lower.len() != out.len() {
                break;
            }
            out.replace_range(pos..pos + phrase.len(), "");
        }
    }
    let collapsed: Vec<&str> = out.split_whitespace().collect();
    let joined = collapsed.join(" ");
    let trimmed = joined.trim_start_matches(|c: char| c == ',' || c == ' ');
    let mut s = trimmed.to_string();
    if let Some(first) = s.chars().next() {
        if first.is_lowercase() && text.chars().next().is_some_and(char::is_uppercase) {
            let upper: String = first.to_uppercase().collect();
            s.replace_range(..first.len_utf8(), &upper);
        }
    }
    s
}
