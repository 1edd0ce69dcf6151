use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Grammar, Personality};

const INITIAL: &str = include_str!("../../data/prompts/initial.txt");
const DIRECTIVES: &str = include_str!("../../data/prompts/directives.txt");
const FAREWELL: &str = include_str!("../../data/prompts/farewell.txt");
const REFEREE: &str = include_str!("../../data/prompts/referee.txt");
const SUMMARY: &str = include_str!("../../data/prompts/summary.txt");
const NATURAL_END: &str = include_str!("../../data/prompts/natural_end.txt");

/// Drops `#` comment lines and surrounding blank lines.
pub fn strip_comments(src: &str) -> String {
    let body: Vec<&str> = src.lines().filter(|l| !l.trim_start().starts_with('#')).collect();
    body.join("\n").trim().to_string()
}

fn parse_directives(src: &str) -> BTreeMap<String, String> {
    strip_comments(src)
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub initial: String,
    pub directives: BTreeMap<String, String>,
    pub farewell: String,
    pub referee: String,
    pub summary: String,
    pub natural_end: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            initial: strip_comments(INITIAL),
            directives: parse_directives(DIRECTIVES),
            farewell: strip_comments(FAREWELL),
            referee: strip_comments(REFEREE),
            summary: strip_comments(SUMMARY),
            natural_end: strip_comments(NATURAL_END),
        }
    }
}

impl PromptTemplates {
    /// Overrides the initial template (and optionally the directives file)
    /// with user supplied sources in the shipped format.
    pub fn with_initial(mut self, initial_src: &str, directives_src: Option<&str>) -> Self {
        self.initial = strip_comments(initial_src);
        if let Some(d) = directives_src {
            self.directives = parse_directives(d);
        }
        self
    }

    fn directive(&self, key: &str) -> &str {
        self.directives.get(key).map(String::as_str).unwrap_or("")
    }

    /// System prompt for a new conversation: the game template with the
    /// belief slots filled, then persona, grammar, cloaking and memory.
    pub fn build_initial_prompt(
        &self,
        alpha: &str,
        beta: u32,
        gamma: u32,
        personality: Personality,
        grammar: Grammar,
        summary: Option<&str>,
    ) -> String {
        let alpha = alpha.to_lowercase();
        let mut out = self
            .initial
            .replace("{alpha}", &alpha)
            .replace("{beta}", &beta.to_string())
            .replace("{gamma}", &gamma.to_string());
        for key in [personality.key(), grammar.key(), "cloak"] {
            let d = self.directive(key);
            if !d.is_empty() {
                out.push(' ');
                out.push_str(d);
            }
        }
        if let Some(s) = summary.filter(|s| !s.trim().is_empty()) {
            out.push(' ');
            out.push_str(&self.directive("memory").replace("{summary}", s.trim()));
        }
        out
    }

    pub fn referee_prompt(&self, alpha: &str, choice_ids: &[&str], personality: Personality) -> String {
        let disposition = match personality {
            Personality::Suggestible => "open to changing opinion when given effective arguments",
            Personality::Regular => "neither especially open nor especially resistant to persuasion",
            Personality::Stubborn => "firm and hard to persuade",
        };
        self.referee
            .replace("{alpha}", alpha)
            .replace("{choices}", &choice_ids.join(", "))
            .replace("{disposition}", disposition)
    }
}
