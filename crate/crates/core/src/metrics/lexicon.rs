//! Word-level measures: on-topic keywords, unique words and AI-flag tokens.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agent::strip_comments;
use crate::domain::{Condition, ParticipantKind};
use crate::engine::{ConversationId, GameState, Millis, ParticipantId};
use crate::text::tokens;

const KEYWORDS: &str = include_str!("../../data/keywords.txt");
const STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// Tokens whose presence in a human message counts as an AI flag.
pub const AI_FLAG_TOKENS: [&str; 4] = ["bot", "ai", "chatgpt", "chatbot"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordDictionary {
    words: BTreeSet<String>,
    /// Entries per `# Section` block, in file order.
    pub sections: Vec<usize>,
}

impl Default for KeywordDictionary {
    fn default() -> Self {
        Self::parse(KEYWORDS)
    }
}

impl KeywordDictionary {
    /// One word per line; a comment line starting with `# Section` opens a block.
    pub fn parse(src: &str) -> Self {
        let mut words = BTreeSet::new();
        let mut sections = Vec::new();
        for line in src.lines().map(str::trim) {
            if line.starts_with("# Section") {
                sections.push(0);
            } else if !line.is_empty() && !line.starts_with('#') {
                if words.insert(line.to_lowercase()) {
                    match sections.last_mut() {
                        Some(n) => *n += 1,
                        None => sections.push(1),
                    }
                }
            }
        }
        Self { words, sections }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordCounts {
    pub per_keyword: BTreeMap<String, u32>,
    pub total: u32,
}

pub fn keyword_counts(text: &str, dict: &KeywordDictionary) -> KeywordCounts {
    let mut out = KeywordCounts::default();
    for t in tokens(text) {
        if dict.contains(&t) {
            *out.per_keyword.entry(t).or_default() += 1;
            out.total += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords(BTreeSet<String>);

impl Default for StopWords {
    fn default() -> Self {
        Self::parse(STOPWORDS)
    }
}

impl StopWords {
    pub fn parse(src: &str) -> Self {
        Self(strip_comments(src).lines().map(|l| l.trim().to_lowercase()).filter(|l| !l.is_empty()).collect())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Distinct non-stopword tokens of `text`, as a set.
pub fn unique_words(text: &str, stop: &StopWords) -> BTreeSet<String> {
    tokens(text).into_iter().filter(|t| !stop.contains(t)).collect()
}

pub fn unique_word_count(text: &str, stop: &StopWords) -> usize {
    unique_words(text, stop).len()
}

/// AI-flag tokens in `text`, one entry per occurrence.
pub fn detect_flag_tokens(text: &str) -> Vec<&'static str> {
    tokens(text)
        .iter()
        .filter_map(|t| AI_FLAG_TOKENS.iter().copied().find(|f| f == t))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagIncident {
    pub conversation: ConversationId,
    pub message_index: usize,
    pub sender: ParticipantId,
    pub token: String,
    pub at_ms: Millis,
}

/// Flag incidents in human messages of a bot-human game, in time order.
/// Other conditions have none by definition.
pub fn detect_ai_flags(game: &GameState) -> Vec<FlagIncident> {
    if game.config.condition != Condition::BotHuman {
        return Vec::new();
    }
    let mut out = Vec::new();
    for conv in &game.conversations {
        for (i, m) in conv.messages.iter().enumerate() {
            if game.kind_of(m.sender) != ParticipantKind::Human {
                continue;
            }
            for token in detect_flag_tokens(&m.text) {
                out.push(FlagIncident {
                    conversation: conv.id,
                    message_index: i,
                    sender: m.sender,
                    token: token.into(),
                    at_ms: m.at_ms,
                });
            }
        }
    }
    out.sort_by_key(|f| (f.at_ms, f.conversation, f.message_index));
    out
}

pub fn first_flag_at(game: &GameState) -> Option<Millis> {
    detect_ai_flags(game).first().map(|f| f.at_ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_dictionary_shape() {
        let d = KeywordDictionary::default();
        assert_eq!(d.len(), 102);
        assert_eq!(d.sections, [36, 66]);
        assert!(d.contains("plant-based"));
    }

    #[test]
    fn keyword_examples() {
        let d = KeywordDictionary::default();
        let c = keyword_counts("Veganism helps the climate", &d);
        assert_eq!(c.total, 2);
        assert_eq!(c.per_keyword.get("veganism"), Some(&1));
        assert_eq!(c.per_keyword.get("climate"), Some(&1));
        let c = keyword_counts("plant-based diets", &d);
        assert_eq!(c.per_keyword.len(), 2);
        assert_eq!(keyword_counts("aim higher", &d).total, 0);
    }

    #[test]
    fn unique_word_examples() {
        let s = StopWords::default();
        assert_eq!(s.len(), 179);
        assert_eq!(unique_word_count("the the fish fish", &s), 1);
        assert_eq!(unique_word_count("", &s), 0);
        assert_eq!(unique_word_count("Fish fish", &s), 1);
    }

    #[test]
    fn flag_tokens() {
        assert_eq!(detect_flag_tokens("are you a bot?"), ["bot"]);
        assert!(detect_flag_tokens("robotic").is_empty());
        assert!(detect_flag_tokens("aim").is_empty());
        assert_eq!(detect_flag_tokens("this AI thing"), ["ai"]);
        assert_eq!(detect_flag_tokens("ChatGPT or a Chatbot"), ["chatgpt", "chatbot"]);
    }
}
