//! Per-conversation outcomes: opinion changes, persuasiveness and the
//! before/after split around a game's first AI flag.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agent::Persona;
use crate::domain::{classify_assignment, AssignmentType, Condition, ConversationType, ParticipantKind};
use crate::engine::{ChangeOutcome, ConversationId, ConversationStatus, GameState, Millis, ParticipantId};

/// Row of the opinion-change table. Bot-human conversations are split by
/// the kind of the participant whose change is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeRow {
    HumanOnly,
    BotHumanHuman,
    BotHumanBot,
    BotOnly,
}

impl ChangeRow {
    pub const ALL: [ChangeRow; 4] =
        [ChangeRow::HumanOnly, ChangeRow::BotHumanHuman, ChangeRow::BotHumanBot, ChangeRow::BotOnly];

    pub fn of(assignment: AssignmentType) -> Self {
        match assignment {
            AssignmentType::HumanToHuman => ChangeRow::HumanOnly,
            AssignmentType::HumanToBot => ChangeRow::BotHumanHuman,
            AssignmentType::BotToHuman => ChangeRow::BotHumanBot,
            AssignmentType::BotToBot => ChangeRow::BotOnly,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ChangeRow::HumanOnly => "Human-only",
            ChangeRow::BotHumanHuman => "Bot-human (Human)",
            ChangeRow::BotHumanBot => "Bot-human (Bot)",
            ChangeRow::BotOnly => "Bot-only",
        }
    }
}

/// One completed re-evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRecord {
    pub game_id: String,
    pub condition: Condition,
    pub conversation: ConversationId,
    pub participant: ParticipantId,
    pub partner: ParticipantId,
    pub kind: ParticipantKind,
    pub partner_kind: ParticipantKind,
    pub row: ChangeRow,
    pub changed: bool,
    pub outcome: ChangeOutcome,
    pub personal_before: u8,
    pub personal_after: u8,
    /// Rating given to the partner, 0 = not enough info.
    pub perceived: u8,
    pub at_ms: Millis,
}

pub fn change_records(game: &GameState) -> Vec<ChangeRecord> {
    let mut out = Vec::new();
    for conv in &game.conversations {
        for slot in 0..2 {
            let Some(r) = &conv.reevaluations[slot] else { continue };
            let (me, partner) = (conv.participants[slot], conv.participants[1 - slot]);
            let (kind, partner_kind) = (game.kind_of(me), game.kind_of(partner));
            out.push(ChangeRecord {
                game_id: game.game_id.clone(),
                condition: game.config.condition,
                conversation: conv.id,
                participant: me,
                partner,
                kind,
                partner_kind,
                row: ChangeRow::of(classify_assignment(kind, partner_kind)),
                changed: r.outcome.changed(),
                outcome: r.outcome,
                personal_before: conv.snapshot[slot].confidence.level(),
                personal_after: r.personal_confidence.level(),
                perceived: r.perceived_confidence.level(),
                at_ms: r.at_ms,
            });
        }
    }
    out.sort_by_key(|r| (r.at_ms, r.conversation, r.participant));
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeCell {
    pub changed: u32,
    pub unchanged: u32,
}

impl ChangeCell {
    pub fn total(&self) -> u32 {
        self.changed + self.unchanged
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpinionChangeTable {
    pub cells: BTreeMap<(Condition, ChangeRow), ChangeCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeTableRow {
    pub condition: Condition,
    pub row: ChangeRow,
    pub label: String,
    pub changed: u32,
    pub unchanged: u32,
}

impl OpinionChangeTable {
    pub fn cell(&self, condition: Condition, row: ChangeRow) -> ChangeCell {
        self.cells.get(&(condition, row)).copied().unwrap_or_default()
    }

    pub fn rows(&self) -> Vec<ChangeTableRow> {
        self.cells
            .iter()
            .map(|(&(condition, row), c)| ChangeTableRow {
                condition,
                row,
                label: row.label().into(),
                changed: c.changed,
                unchanged: c.unchanged,
            })
            .collect()
    }
}

pub fn tabulate_opinion_changes<'a>(games: impl IntoIterator<Item = &'a GameState>) -> OpinionChangeTable {
    let mut t = OpinionChangeTable::default();
    for game in games {
        for r in change_records(game) {
            let cell = t.cells.entry((r.condition, r.row)).or_default();
            if r.changed {
                cell.changed += 1;
            } else {
                cell.unchanged += 1;
            }
        }
    }
    t
}

/// 3 when the partner switched to the bot's opinion, otherwise the drop in
/// the partner's confidence clamped to [0, 3].
pub fn persuasiveness_score(flipped_to_bot: bool, before: u8, after: u8) -> u8 {
    if flipped_to_bot {
        3
    } else {
        before.saturating_sub(after).min(3)
    }
}

pub fn persuasiveness_percentage(mean_score: f64) -> f64 {
    mean_score / 3.0 * 100.0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersuasivenessRecord {
    pub game_id: String,
    pub conversation: ConversationId,
    pub bot: ParticipantId,
    pub persona: Option<Persona>,
    pub score: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persuasiveness {
    pub records: Vec<PersuasivenessRecord>,
    /// Bot-human conversations without the human's re-evaluation.
    pub skipped: Vec<(String, ConversationId)>,
}

pub fn persuasiveness<'a>(games: impl IntoIterator<Item = &'a GameState>) -> Persuasiveness {
    let mut out = Persuasiveness::default();
    for game in games {
        for conv in game.conversations.iter().filter(|c| c.kind == ConversationType::BotHuman) {
            let bot_slot = if game.kind_of(conv.participants[0]) == ParticipantKind::Bot { 0 } else { 1 };
            let human_slot = 1 - bot_slot;
            let bot = conv.participants[bot_slot];
            let Some(r) = &conv.reevaluations[human_slot] else {
                out.skipped.push((game.game_id.clone(), conv.id));
                continue;
            };
            let flipped = r.outcome == ChangeOutcome::ToPartner;
            let score = persuasiveness_score(
                flipped,
                conv.snapshot[human_slot].confidence.level(),
                r.personal_confidence.level(),
            );
            out.records.push(PersuasivenessRecord {
                game_id: game.game_id.clone(),
                conversation: conv.id,
                bot,
                persona: game.roster[bot.index()].persona,
                score,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersuasivenessSummary {
    pub conversations: usize,
    pub mean_score: f64,
    pub percent: f64,
}

pub fn persuasiveness_by_persona(records: &[PersuasivenessRecord]) -> BTreeMap<Persona, PersuasivenessSummary> {
    let mut groups: BTreeMap<Persona, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(p) = r.persona {
            groups.entry(p).or_default().push(f64::from(r.score));
        }
    }
    groups
        .into_iter()
        .map(|(p, xs)| {
            let mean = crate::math::mean(&xs);
            (p, PersuasivenessSummary { conversations: xs.len(), mean_score: mean, percent: persuasiveness_percentage(mean) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagSide {
    Before,
    After,
}

/// A sample taken exactly at the flag time counts as after.
pub fn flag_side(flag_at: Millis, at: Millis) -> FlagSide {
    if at >= flag_at {
        FlagSide::After
    } else {
        FlagSide::Before
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagSplit<T> {
    pub before: Vec<T>,
    pub after: Vec<T>,
}

impl<T> Default for FlagSplit<T> {
    fn default() -> Self {
        Self { before: Vec::new(), after: Vec::new() }
    }
}

impl<T> FlagSplit<T> {
    pub fn push(&mut self, side: FlagSide, v: T) {
        match side {
            FlagSide::Before => self.before.push(v),
            FlagSide::After => self.after.push(v),
        }
    }
}

/// Partitions timestamped samples around the first flag. Games without a
/// flag are not partitioned.
pub fn split_by_first_flag<T>(flag_at: Option<Millis>, samples: impl IntoIterator<Item = (Millis, T)>) -> Option<FlagSplit<T>> {
    let flag_at = flag_at?;
    let mut out = FlagSplit::default();
    for (at, v) in samples {
        out.push(flag_side(flag_at, at), v);
    }
    Some(out)
}

/// Human behaviour around the first AI flag of one game.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlagEffects {
    /// Per-participant opinion-change rates.
    pub change_rate: FlagSplit<f64>,
    pub perceived: FlagSplit<f64>,
    pub personal: FlagSplit<f64>,
    /// Keywords per human message.
    pub keywords: FlagSplit<f64>,
}

pub fn flag_effects(game: &GameState, dict: &super::KeywordDictionary) -> Option<FlagEffects> {
    let flag_at = super::first_flag_at(game)?;
    let humans: Vec<ChangeRecord> =
        change_records(game).into_iter().filter(|r| r.kind == ParticipantKind::Human).collect();
    let mut fx = FlagEffects::default();
    let mut rates: BTreeMap<(ParticipantId, bool), (u32, u32)> = BTreeMap::new();
    for r in &humans {
        let side = flag_side(flag_at, r.at_ms);
        let e = rates.entry((r.participant, side == FlagSide::After)).or_default();
        e.0 += u32::from(r.changed);
        e.1 += 1;
        fx.perceived.push(side, f64::from(r.perceived));
        fx.personal.push(side, f64::from(r.personal_after));
    }
    for ((_, after), (changed, total)) in rates {
        let side = if after { FlagSide::After } else { FlagSide::Before };
        fx.change_rate.push(side, f64::from(changed) / f64::from(total));
    }
    for conv in &game.conversations {
        for m in conv.messages.iter().filter(|m| game.kind_of(m.sender) == ParticipantKind::Human) {
            fx.keywords.push(flag_side(flag_at, m.at_ms), f64::from(super::keyword_counts(&m.text, dict).total));
        }
    }
    Some(fx)
}

/// Whether a conversation never reached re-evaluation on either side.
pub fn is_incomplete(status: ConversationStatus) -> bool {
    status != ConversationStatus::Terminated
}
