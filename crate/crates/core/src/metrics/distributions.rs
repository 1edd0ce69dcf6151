//! Per-condition distributions for post-game reporting.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::chains::{holding_periods, response_times, segment_chains, Stamp};
use super::lexicon::{keyword_counts, unique_words, KeywordDictionary, StopWords};
use super::MetricsError;
use crate::domain::{BudgetRange, Condition, ConversationType, ParticipantKind};
use crate::engine::{GameState, ParticipantId};

/// Conversation groups for the timing analysis: human-only games (HO),
/// human-only conversations of bot-human games (HH) and bot-human
/// conversations (BH).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TimingGroup {
    HO,
    HH,
    BH,
}

impl TimingGroup {
    pub const ALL: [TimingGroup; 3] = [TimingGroup::HO, TimingGroup::HH, TimingGroup::BH];

    pub fn of(condition: Condition, kind: ConversationType) -> Option<Self> {
        match (condition, kind) {
            (Condition::HumanOnly, ConversationType::HumanOnly) => Some(TimingGroup::HO),
            (Condition::BotHuman, ConversationType::HumanOnly) => Some(TimingGroup::HH),
            (Condition::BotHuman, ConversationType::BotHuman) => Some(TimingGroup::BH),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TimingGroup::HO => "HO",
            TimingGroup::HH => "HH",
            TimingGroup::BH => "BH",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSamples {
    pub messages: usize,
    pub chains: usize,
    pub holding: Vec<f64>,
    pub response: Vec<f64>,
}

pub fn timing_samples<'a>(
    games: impl IntoIterator<Item = &'a GameState>,
) -> Result<BTreeMap<TimingGroup, TimingSamples>, MetricsError> {
    let mut out: BTreeMap<TimingGroup, TimingSamples> = BTreeMap::new();
    for game in games {
        for conv in &game.conversations {
            let Some(group) = TimingGroup::of(game.config.condition, conv.kind) else { continue };
            let stamps: Vec<Stamp> = conv.messages.iter().map(Stamp::from).collect();
            let chains = segment_chains(&stamps)?;
            let t = out.entry(group).or_default();
            t.messages += stamps.len();
            t.chains += chains.iter().filter(|c| c.len >= 2).count();
            t.holding.extend(holding_periods(&chains).iter().map(|s| s.seconds));
            t.response.extend(response_times(&chains).iter().map(|s| s.seconds));
        }
    }
    Ok(out)
}

/// Word measures of one participant over a whole game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantText {
    pub game_id: String,
    pub condition: Condition,
    pub participant: ParticipantId,
    pub kind: ParticipantKind,
    pub messages: u32,
    pub keywords: u32,
    pub unique_words: u32,
}

pub fn participant_text(game: &GameState, dict: &KeywordDictionary, stop: &StopWords) -> Vec<ParticipantText> {
    game.roster
        .iter()
        .map(|p| {
            let mut messages = 0;
            let mut keywords = 0;
            let mut words = alloc::collections::BTreeSet::new();
            for m in game.conversations.iter().flat_map(|c| &c.messages).filter(|m| m.sender == p.id) {
                messages += 1;
                keywords += keyword_counts(&m.text, dict).total;
                words.extend(unique_words(&m.text, stop));
            }
            ParticipantText {
                game_id: game.game_id.clone(),
                condition: game.config.condition,
                participant: p.id,
                kind: p.kind,
                messages,
                keywords,
                unique_words: words.len() as u32,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub lengths: Vec<u32>,
    pub histogram: BTreeMap<u32, u32>,
    /// Budget bounds drawn on the histogram, when the type has a budget.
    pub budget_band: Option<BudgetRange>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionDistributions {
    pub games: u32,
    pub conversations_per_game: Vec<u32>,
    pub messages_per_conversation: Vec<u32>,
    pub points: Vec<u32>,
    pub points_histogram: BTreeMap<u32, u32>,
    pub points_by_kind: BTreeMap<ParticipantKind, Vec<u32>>,
    /// rank -> count, per participant kind.
    pub ranks_by_kind: BTreeMap<ParticipantKind, BTreeMap<u32, u32>>,
    pub lengths: BTreeMap<ConversationType, LengthHistogram>,
}

pub fn distribution_summaries<'a>(
    games: impl IntoIterator<Item = &'a GameState>,
) -> BTreeMap<Condition, ConditionDistributions> {
    let mut out: BTreeMap<Condition, ConditionDistributions> = BTreeMap::new();
    for game in games {
        let d = out.entry(game.config.condition).or_default();
        d.games += 1;
        d.conversations_per_game.push(game.conversations.len() as u32);
        for conv in &game.conversations {
            let n = conv.messages.len() as u32;
            d.messages_per_conversation.push(n);
            let h = d.lengths.entry(conv.kind).or_insert_with(|| LengthHistogram {
                lengths: Vec::new(),
                histogram: BTreeMap::new(),
                budget_band: game.config.budget_range(conv.kind),
            });
            h.lengths.push(n);
            *h.histogram.entry(n).or_default() += 1;
        }
        if let Some(scores) = &game.scores {
            for e in &scores.entries {
                let kind = game.kind_of(e.participant);
                d.points.push(e.total);
                *d.points_histogram.entry(e.total).or_default() += 1;
                d.points_by_kind.entry(kind).or_default().push(e.total);
                *d.ranks_by_kind.entry(kind).or_default().entry(e.rank).or_default() += 1;
            }
        }
    }
    out
}
