//! Shared vocabulary: opinions, confidence scales, participant kinds,
//! conversation classification and the game configuration.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("unknown {scale} confidence label `{label}`")]
    UnknownLabel { scale: &'static str, label: String },
    #[error("confidence level {level} is outside the {scale} scale")]
    LevelOutOfRange { scale: &'static str, level: u8 },
    #[error("invalid game configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown opinion `{0}`")]
    UnknownOpinion(String),
}

/// One of the four answer options of a game.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OpinionChoice {
    pub id: String,
    pub label: String,
}

impl OpinionChoice {
    pub fn new(id: &str, label: &str) -> Self {
        Self { id: id.to_string(), label: label.to_string() }
    }
}

/// Opinion identifier as it appears in commands and logs (the choice id).
pub type OpinionId = String;

pub const CHOICE_COUNT: usize = 4;

pub const DEFAULT_PROMPT: &str =
    "Which of these diets is the best compromise between nutritiousness and climate consciousness?";

pub fn default_choices() -> Vec<OpinionChoice> {
    alloc::vec![
        OpinionChoice::new("vegan", "Vegan"),
        OpinionChoice::new("vegetarian", "Vegetarian"),
        OpinionChoice::new("omnivorous", "Omnivorous"),
        OpinionChoice::new("pescatarian", "Pescatarian"),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceScale {
    Personal,
    Perceived,
}

impl ConfidenceScale {
    fn name(self) -> &'static str {
        match self {
            ConfidenceScale::Personal => "personal",
            ConfidenceScale::Perceived => "perceived",
        }
    }
}

const PERSONAL_LABELS: [&str; 4] =
    ["Not very confident", "Somewhat confident", "Fairly confident", "Very confident"];
const NOT_ENOUGH_INFO: &str = "Not enough info";

/// Self-reported confidence, levels 1 through 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PersonalConfidence(u8);

impl PersonalConfidence {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 4;

    pub fn new(level: u8) -> Result<Self, DomainError> {
        if (Self::MIN..=Self::MAX).contains(&level) {
            Ok(Self(level))
        } else {
            Err(DomainError::LevelOutOfRange { scale: "personal", level })
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn label(self) -> &'static str {
        PERSONAL_LABELS[(self.0 - 1) as usize]
    }
}

impl TryFrom<u8> for PersonalConfidence {
    type Error = DomainError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<PersonalConfidence> for u8 {
    fn from(c: PersonalConfidence) -> u8 {
        c.0
    }
}

/// Confidence a participant attributes to their partner, levels 0 through 4.
/// Level 0 is "Not enough info".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PerceivedConfidence(u8);

impl PerceivedConfidence {
    pub const NOT_ENOUGH_INFO: PerceivedConfidence = PerceivedConfidence(0);
    pub const MAX: u8 = 4;

    pub fn new(level: u8) -> Result<Self, DomainError> {
        if level <= Self::MAX {
            Ok(Self(level))
        } else {
            Err(DomainError::LevelOutOfRange { scale: "perceived", level })
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn label(self) -> &'static str {
        if self.0 == 0 {
            NOT_ENOUGH_INFO
        } else {
            PERSONAL_LABELS[(self.0 - 1) as usize]
        }
    }
}

impl TryFrom<u8> for PerceivedConfidence {
    type Error = DomainError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<PerceivedConfidence> for u8 {
    fn from(c: PerceivedConfidence) -> u8 {
        c.0
    }
}

/// Maps a confidence label to its ordinal level. Matching ignores case and
/// surrounding whitespace.
pub fn encode_confidence(label: &str, scale: ConfidenceScale) -> Result<u8, DomainError> {
    let wanted = label.trim();
    if let Some(pos) = PERSONAL_LABELS.iter().position(|l| l.eq_ignore_ascii_case(wanted)) {
        return Ok(pos as u8 + 1);
    }
    if scale == ConfidenceScale::Perceived && NOT_ENOUGH_INFO.eq_ignore_ascii_case(wanted) {
        return Ok(0);
    }
    Err(DomainError::UnknownLabel { scale: scale.name(), label: label.to_string() })
}

/// Canonical label for a level on the given scale.
pub fn decode_confidence(level: u8, scale: ConfidenceScale) -> Result<&'static str, DomainError> {
    match scale {
        ConfidenceScale::Personal => PersonalConfidence::new(level).map(PersonalConfidence::label),
        ConfidenceScale::Perceived => {
            PerceivedConfidence::new(level).map(PerceivedConfidence::label)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantKind {
    Human,
    Bot,
}

impl ParticipantKind {
    pub fn is_bot(self) -> bool {
        self == ParticipantKind::Bot
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    HumanOnly,
    BotHuman,
    BotOnly,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::HumanOnly, Condition::BotHuman, Condition::BotOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::HumanOnly => "human-only",
            Condition::BotHuman => "bot-human",
            Condition::BotOnly => "bot-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s.trim())
    }

    /// Default roster composition for `roster_size` participants.
    pub fn default_roster(self, roster_size: usize) -> Vec<ParticipantKind> {
        match self {
            Condition::HumanOnly => alloc::vec![ParticipantKind::Human; roster_size],
            Condition::BotOnly => alloc::vec![ParticipantKind::Bot; roster_size],
            Condition::BotHuman => {
                let humans = roster_size / 2;
                let mut kinds = alloc::vec![ParticipantKind::Human; humans];
                kinds.resize(roster_size, ParticipantKind::Bot);
                kinds
            }
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConversationType {
    HumanOnly,
    BotHuman,
    BotOnly,
}

impl ConversationType {
    pub const ALL: [ConversationType; 3] =
        [ConversationType::HumanOnly, ConversationType::BotHuman, ConversationType::BotOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            ConversationType::HumanOnly => "human-only",
            ConversationType::BotHuman => "bot-human",
            ConversationType::BotOnly => "bot-only",
        }
    }
}

/// Direction-aware classification of a rating: the first kind is the rater.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentType {
    HumanToHuman,
    HumanToBot,
    BotToHuman,
    BotToBot,
}

impl AssignmentType {
    pub const ALL: [AssignmentType; 4] = [
        AssignmentType::HumanToHuman,
        AssignmentType::HumanToBot,
        AssignmentType::BotToHuman,
        AssignmentType::BotToBot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AssignmentType::HumanToHuman => "human-to-human",
            AssignmentType::HumanToBot => "human-to-bot",
            AssignmentType::BotToHuman => "bot-to-human",
            AssignmentType::BotToBot => "bot-to-bot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s.trim())
    }

    pub fn mirrored(self) -> Self {
        match self {
            AssignmentType::HumanToBot => AssignmentType::BotToHuman,
            AssignmentType::BotToHuman => AssignmentType::HumanToBot,
            same => same,
        }
    }

    pub fn conversation_type(self) -> ConversationType {
        match self {
            AssignmentType::HumanToHuman => ConversationType::HumanOnly,
            AssignmentType::BotToBot => ConversationType::BotOnly,
            _ => ConversationType::BotHuman,
        }
    }
}

pub fn classify_conversation(a: ParticipantKind, b: ParticipantKind) -> ConversationType {
    match (a, b) {
        (ParticipantKind::Human, ParticipantKind::Human) => ConversationType::HumanOnly,
        (ParticipantKind::Bot, ParticipantKind::Bot) => ConversationType::BotOnly,
        _ => ConversationType::BotHuman,
    }
}

pub fn classify_assignment(rater: ParticipantKind, rated: ParticipantKind) -> AssignmentType {
    use ParticipantKind::*;
    match (rater, rated) {
        (Human, Human) => AssignmentType::HumanToHuman,
        (Human, Bot) => AssignmentType::HumanToBot,
        (Bot, Human) => AssignmentType::BotToHuman,
        (Bot, Bot) => AssignmentType::BotToBot,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    Real,
    Virtual,
}

/// Inclusive integer range used for message budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetRange {
    pub min: u32,
    pub max: u32,
}

impl BudgetRange {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: u32) -> bool {
        (self.min..=self.max).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameConfig {
    pub prompt: String,
    pub choices: Vec<OpinionChoice>,
    pub condition: Condition,
    pub roster_size: usize,
    /// Stage-2 length in seconds.
    pub duration_s: u32,
    pub budget_bot_only: BudgetRange,
    pub budget_bot_human: BudgetRange,
    pub rng_seed: u64,
    pub clock_mode: ClockMode,
    /// Seconds after stage 3 begins before the game concludes without all surveys.
    pub survey_grace_s: u32,
}

impl GameConfig {
    pub fn new(condition: Condition, rng_seed: u64) -> Self {
        Self {
            prompt: DEFAULT_PROMPT.to_string(),
            choices: default_choices(),
            condition,
            roster_size: 6,
            duration_s: 3600,
            budget_bot_only: BudgetRange::new(12, 16),
            budget_bot_human: BudgetRange::new(30, 50),
            rng_seed,
            clock_mode: ClockMode::Virtual,
            survey_grace_s: 900,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |m: &str| Err(DomainError::InvalidConfig(m.to_string()));
        if self.roster_size < 2 {
            return bad("roster_size must be at least 2");
        }
        if self.choices.len() != CHOICE_COUNT {
            return bad("exactly four opinion choices are required");
        }
        let mut ids: Vec<&str> = self.choices.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != CHOICE_COUNT {
            return bad("opinion choice ids must be unique");
        }
        for r in [self.budget_bot_only, self.budget_bot_human] {
            if r.min < 1 || r.min > r.max {
                return bad("budget ranges must be nonempty with a lower bound of at least 1");
            }
        }
        if self.duration_s == 0 {
            return bad("duration must be positive");
        }
        Ok(())
    }

    pub fn choice(&self, id: &str) -> Option<&OpinionChoice> {
        self.choices.iter().find(|c| c.id == id)
    }

    pub fn budget_range(&self, conversation: ConversationType) -> Option<BudgetRange> {
        match conversation {
            ConversationType::BotOnly => Some(self.budget_bot_only),
            ConversationType::BotHuman => Some(self.budget_bot_human),
            ConversationType::HumanOnly => None,
        }
    }

    pub fn duration_ms(&self) -> u64 {
        u64::from(self.duration_s) * 1000
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodes_paper_labels() {
        assert_eq!(encode_confidence("Very confident", ConfidenceScale::Personal), Ok(4));
        assert_eq!(encode_confidence("Not enough info", ConfidenceScale::Perceived), Ok(0));
        assert_eq!(encode_confidence("somewhat confident", ConfidenceScale::Personal), Ok(2));
        assert_eq!(encode_confidence("  NOT VERY confident ", ConfidenceScale::Perceived), Ok(1));
    }

    #[test]
    fn unknown_label_names_offender() {
        let err = encode_confidence("Not enough info", ConfidenceScale::Personal).unwrap_err();
        assert_eq!(
            err,
            DomainError::UnknownLabel { scale: "personal", label: "Not enough info".into() }
        );
        let err = encode_confidence("meh", ConfidenceScale::Perceived).unwrap_err();
        assert!(err.to_string().contains("`meh`"));
    }

    #[test]
    fn labels_round_trip() {
        for scale in [ConfidenceScale::Personal, ConfidenceScale::Perceived] {
            let levels: &[u8] =
                if scale == ConfidenceScale::Personal { &[1, 2, 3, 4] } else { &[0, 1, 2, 3, 4] };
            for &l in levels {
                let label = decode_confidence(l, scale).unwrap();
                assert_eq!(encode_confidence(label, scale), Ok(l));
            }
        }
        assert!(decode_confidence(0, ConfidenceScale::Personal).is_err());
        assert!(decode_confidence(5, ConfidenceScale::Perceived).is_err());
    }

    #[test]
    fn conversation_classification_is_symmetric() {
        use ParticipantKind::*;
        assert_eq!(classify_conversation(Human, Human), ConversationType::HumanOnly);
        assert_eq!(classify_conversation(Bot, Human), ConversationType::BotHuman);
        assert_eq!(classify_conversation(Human, Bot), ConversationType::BotHuman);
        assert_eq!(classify_conversation(Bot, Bot), ConversationType::BotOnly);
    }

    #[test]
    fn assignment_is_directional() {
        use ParticipantKind::*;
        assert_eq!(classify_assignment(Human, Bot), AssignmentType::HumanToBot);
        assert_eq!(classify_assignment(Bot, Human), AssignmentType::BotToHuman);
        assert_eq!(classify_assignment(Human, Human), AssignmentType::HumanToHuman);
        for a in [Human, Bot] {
            for b in [Human, Bot] {
                assert_eq!(classify_assignment(a, b).mirrored(), classify_assignment(b, a));
                assert_eq!(
                    classify_assignment(a, b).conversation_type(),
                    classify_conversation(a, b)
                );
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = GameConfig::new(Condition::BotOnly, 1);
        assert!(cfg.validate().is_ok());
        cfg.roster_size = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = GameConfig::new(Condition::BotOnly, 1);
        cfg.budget_bot_only = BudgetRange::new(0, 3);
        assert!(cfg.validate().is_err());
        let mut cfg = GameConfig::new(Condition::BotOnly, 1);
        cfg.choices[1].id = "vegan".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bot_human_roster_is_split_evenly() {
        let kinds = Condition::BotHuman.default_roster(6);
        assert_eq!(kinds.iter().filter(|k| k.is_bot()).count(), 3);
    }
}
