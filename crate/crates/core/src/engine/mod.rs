//! The three-stage game state machine.
//!
//! Every mutation goes through [`GameState::apply`], which validates one
//! [`Event`] before touching any state. [`GameState::handle`] turns a
//! [`Command`] into the primary event, applies it, and then derives and
//! applies the automatic follow-up transitions. Replaying a log therefore
//! runs exactly the same code as live play.

mod scoring;
mod view;

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Persona;
use crate::domain::{
    classify_conversation, ConversationType, DomainError, GameConfig, OpinionId,
    ParticipantKind, PerceivedConfidence, PersonalConfidence,
};

pub use scoring::{compute_scores, rank_participants, RankKey, ScoreEntry, ScoreSheet};
pub use view::{Audience, ConversationView, ParticipantView, PeerView, ScoreView};

/// Game clock in milliseconds since stage 2 started.
pub type Millis = u64;

/// Preset usernames handed out to participants.
pub const USERNAMES: [&str; 6] = ["Aspen", "Birch", "Cedar", "Maple", "Rowan", "Willow"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticipantId(pub u32);

impl ParticipantId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConversationId(pub u32);

impl ConversationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ConversationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
    Stage3,
    Concluded,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("command not allowed in {stage:?}")]
    WrongStage { stage: Stage },
    #[error("unknown participant {0}")]
    UnknownParticipant(ParticipantId),
    #[error("unknown conversation {0}")]
    UnknownConversation(ConversationId),
    #[error("unknown username `{0}`")]
    UnknownUsername(String),
    #[error("unknown opinion `{0}`")]
    UnknownOpinion(String),
    #[error("{0} already submitted")]
    DuplicateSubmission(ParticipantId),
    #[error("participants cannot invite themselves")]
    SelfInvite,
    #[error("{0} is busy")]
    Busy(ParticipantId),
    #[error("invite from {0} to {1} is already pending")]
    DuplicateInvite(ParticipantId, ParticipantId),
    #[error("no pending invite from {0} to {1}")]
    NoSuchInvite(ParticipantId, ParticipantId),
    #[error("invite from {from} is stale: {busy} joined another conversation")]
    StaleInvite { from: ParticipantId, busy: ParticipantId },
    #[error("{0} is not a member of the conversation")]
    NotMember(ParticipantId),
    #[error("conversation {0} is not active")]
    InactiveConversation(ConversationId),
    #[error("conversation {0} has not been terminated")]
    NotTerminated(ConversationId),
    #[error("the game timer has expired")]
    TimerExpired,
    #[error("the game timer has not expired yet")]
    TimerRunning,
    #[error("message text is empty")]
    EmptyMessage,
    #[error("event time {at} precedes game clock {clock}")]
    ClockRegression { at: Millis, clock: Millis },
    #[error("only human participants take the exit survey")]
    BotSurvey,
    #[error("participants cannot nominate themselves")]
    SelfNomination,
    #[error("roster does not match the configuration: {0}")]
    RosterMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(#[from] DomainError),
    #[error("event inconsistent with replayed state: {0}")]
    Inconsistent(String),
}

impl EngineError {
    /// Stable machine-readable code used by the API layer.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::WrongStage { .. } => "wrong_stage",
            EngineError::UnknownParticipant(_) => "unknown_participant",
            EngineError::UnknownConversation(_) => "unknown_conversation",
            EngineError::UnknownUsername(_) => "unknown_username",
            EngineError::UnknownOpinion(_) => "unknown_opinion",
            EngineError::DuplicateSubmission(_) => "duplicate",
            EngineError::SelfInvite => "self_invite",
            EngineError::Busy(_) => "busy",
            EngineError::DuplicateInvite(..) => "duplicate_invite",
            EngineError::NoSuchInvite(..) => "no_such_invite",
            EngineError::StaleInvite { .. } => "stale_invite",
            EngineError::NotMember(_) => "not_member",
            EngineError::InactiveConversation(_) => "inactive_conversation",
            EngineError::NotTerminated(_) => "not_terminated",
            EngineError::TimerExpired => "timer_expired",
            EngineError::TimerRunning => "timer_running",
            EngineError::EmptyMessage => "empty_message",
            EngineError::ClockRegression { .. } => "clock_regression",
            EngineError::BotSurvey => "bot_survey",
            EngineError::SelfNomination => "self_nomination",
            EngineError::RosterMismatch(_) => "roster_mismatch",
            EngineError::Config(_) => "invalid_config",
            EngineError::Inconsistent(_) => "inconsistent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: ParticipantId,
    pub username: String,
    pub kind: ParticipantKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<Persona>,
}

/// Entry of the roster passed to [`GameState::create`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RosterEntry {
    pub kind: ParticipantKind,
    pub persona: Option<Persona>,
}

impl From<ParticipantKind> for RosterEntry {
    fn from(kind: ParticipantKind) -> Self {
        Self { kind, persona: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantState {
    pub opinion: Option<OpinionId>,
    pub confidence: Option<PersonalConfidence>,
    /// Active conversation, or terminated one whose re-evaluation is still owed.
    pub engaged: Option<ConversationId>,
    pub convince_points: u32,
    pub last_point_at: Option<Millis>,
    pub survey_submitted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub sender: ParticipantId,
    pub text: String,
    pub at_ms: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversationStatus {
    Active,
    Terminated,
    Expired,
}

/// Opinion and confidence of a member when the conversation started.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub opinion: OpinionId,
    pub confidence: PersonalConfidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeOutcome {
    Kept,
    /// Switched to the partner's opinion; the partner earns a point.
    ToPartner,
    /// Switched to an opinion neither member held; no point is awarded.
    ThirdOpinion,
}

impl ChangeOutcome {
    pub fn changed(self) -> bool {
        self != ChangeOutcome::Kept
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reevaluation {
    pub new_opinion: OpinionId,
    pub personal_confidence: PersonalConfidence,
    pub perceived_confidence: PerceivedConfidence,
    pub outcome: ChangeOutcome,
    pub at_ms: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: ConversationId,
    pub participants: [ParticipantId; 2],
    pub kind: ConversationType,
    pub started_at: Millis,
    pub ended_at: Option<Millis>,
    pub status: ConversationStatus,
    pub terminated_by: Option<ParticipantId>,
    pub snapshot: [Snapshot; 2],
    pub messages: Vec<Message>,
    pub reevaluations: [Option<Reevaluation>; 2],
}

impl Conversation {
    pub fn slot(&self, p: ParticipantId) -> Option<usize> {
        self.participants.iter().position(|&q| q == p)
    }

    pub fn partner_of(&self, p: ParticipantId) -> Option<ParticipantId> {
        self.slot(p).map(|i| self.participants[1 - i])
    }

    pub fn is_member(&self, p: ParticipantId) -> bool {
        self.slot(p).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Demographics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ethnicity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitSurvey {
    pub participant: ParticipantId,
    pub most_convincing: String,
    pub least_convincing: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<Demographics>,
    /// Free-text placeholder; no payment processing happens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payment: Option<String>,
    pub at_ms: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant: Option<ParticipantId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversation: Option<ConversationId>,
    pub code: String,
    pub detail: String,
}

/// Inputs from participants and the platform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    SubmitInitialOpinion {
        participant: ParticipantId,
        opinion: OpinionId,
        confidence: PersonalConfidence,
    },
    SendInvite {
        from: ParticipantId,
        to: ParticipantId,
    },
    RespondInvite {
        to: ParticipantId,
        from: ParticipantId,
        accept: bool,
    },
    PostMessage {
        conversation: ConversationId,
        sender: ParticipantId,
        text: String,
    },
    TerminateConversation {
        conversation: ConversationId,
        by: ParticipantId,
    },
    SubmitReevaluation {
        conversation: ConversationId,
        participant: ParticipantId,
        new_opinion: OpinionId,
        personal_confidence: PersonalConfidence,
        perceived_confidence: PerceivedConfidence,
    },
    ExpireTimer,
    SubmitExitSurvey {
        participant: ParticipantId,
        most_convincing: String,
        least_convincing: String,
        #[serde(default)]
        demographics: Option<Demographics>,
        #[serde(default)]
        payment: Option<String>,
    },
    Conclude,
    Diagnostic(Diagnostic),
}

/// Persisted, replayable facts. The serialized form is the `kind`/`payload`
/// pair of the event-log schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    GameCreated {
        game_id: String,
        config: GameConfig,
    },
    ParticipantJoined(Participant),
    InitialOpinion {
        participant: ParticipantId,
        opinion: OpinionId,
        confidence: PersonalConfidence,
    },
    StageChanged {
        from: Stage,
        to: Stage,
    },
    InviteSent {
        from: ParticipantId,
        to: ParticipantId,
    },
    InviteResponded {
        from: ParticipantId,
        to: ParticipantId,
        accepted: bool,
    },
    ConversationStarted {
        conversation: ConversationId,
        participants: [ParticipantId; 2],
    },
    MessagePosted {
        conversation: ConversationId,
        sender: ParticipantId,
        text: String,
    },
    ConversationTerminated {
        conversation: ConversationId,
        by: ParticipantId,
    },
    ConversationExpired {
        conversation: ConversationId,
    },
    Reevaluation {
        conversation: ConversationId,
        participant: ParticipantId,
        new_opinion: OpinionId,
        personal_confidence: PersonalConfidence,
        perceived_confidence: PerceivedConfidence,
        outcome: ChangeOutcome,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        point_to: Option<ParticipantId>,
    },
    ScoresComputed(ScoreSheet),
    ExitSurvey(ExitSurvey),
    AgentDiagnostic(Diagnostic),
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::GameCreated { .. } => "game_created",
            EventKind::ParticipantJoined(_) => "participant_joined",
            EventKind::InitialOpinion { .. } => "initial_opinion",
            EventKind::StageChanged { .. } => "stage_changed",
            EventKind::InviteSent { .. } => "invite_sent",
            EventKind::InviteResponded { .. } => "invite_responded",
            EventKind::ConversationStarted { .. } => "conversation_started",
            EventKind::MessagePosted { .. } => "message_posted",
            EventKind::ConversationTerminated { .. } => "conversation_terminated",
            EventKind::ConversationExpired { .. } => "conversation_expired",
            EventKind::Reevaluation { .. } => "reevaluation",
            EventKind::ScoresComputed(_) => "scores_computed",
            EventKind::ExitSurvey(_) => "exit_survey",
            EventKind::AgentDiagnostic(_) => "agent_diagnostic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub at_ms: Millis,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn new(at_ms: Millis, kind: EventKind) -> Self {
        Self { at_ms, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub game_id: String,
    pub config: GameConfig,
    pub stage: Stage,
    pub roster: Vec<Participant>,
    pub participants: Vec<ParticipantState>,
    pub pending_invites: BTreeSet<(ParticipantId, ParticipantId)>,
    pub conversations: Vec<Conversation>,
    pub active_conversations: BTreeSet<ConversationId>,
    pub clock_ms: Millis,
    pub scores: Option<ScoreSheet>,
    pub surveys: Vec<ExitSurvey>,
    pub diagnostics: u32,
}

impl GameState {
    /// Empty shell that only accepts a `game_created` event. Used by replay.
    pub fn blank() -> Self {
        Self {
            game_id: String::new(),
            config: GameConfig::new(crate::domain::Condition::BotOnly, 0),
            stage: Stage::Stage1,
            roster: Vec::new(),
            participants: Vec::new(),
            pending_invites: BTreeSet::new(),
            conversations: Vec::new(),
            active_conversations: BTreeSet::new(),
            clock_ms: 0,
            scores: None,
            surveys: Vec::new(),
            diagnostics: 0,
        }
    }

    /// Creates a game in stage 1 and returns it together with the creation
    /// events (`game_created` followed by one `participant_joined` each).
    pub fn create(
        game_id: &str,
        config: GameConfig,
        roster: &[RosterEntry],
    ) -> Result<(Self, Vec<Event>), EngineError> {
        config.validate()?;
        if roster.len() != config.roster_size {
            return Err(EngineError::RosterMismatch(alloc::format!(
                "expected {} participants, got {}",
                config.roster_size,
                roster.len()
            )));
        }
        let mut expected = config.condition.default_roster(config.roster_size);
        let mut given: Vec<ParticipantKind> = roster.iter().map(|r| r.kind).collect();
        expected.sort();
        given.sort();
        if expected != given {
            return Err(EngineError::RosterMismatch(alloc::format!(
                "participant kinds do not match condition {}",
                config.condition
            )));
        }

        let mut names: Vec<String> = (0..config.roster_size)
            .map(|i| match USERNAMES.get(i) {
                Some(n) => (*n).to_string(),
                None => alloc::format!("Player{}", i + 1),
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ 0x5EED_0F_05E4_7A3E);
        names.shuffle(&mut rng);

        let mut events = Vec::with_capacity(roster.len() + 1);
        events.push(Event::new(
            0,
            EventKind::GameCreated { game_id: game_id.to_string(), config },
        ));
        for (i, (entry, username)) in roster.iter().zip(names).enumerate() {
            events.push(Event::new(
                0,
                EventKind::ParticipantJoined(Participant {
                    id: ParticipantId(i as u32),
                    username,
                    kind: entry.kind,
                    persona: entry.persona,
                }),
            ));
        }
        let mut state = Self::blank();
        for e in &events {
            state.apply(e)?;
        }
        Ok((state, events))
    }

    pub fn participant(&self, id: ParticipantId) -> Result<&Participant, EngineError> {
        self.roster.get(id.index()).ok_or(EngineError::UnknownParticipant(id))
    }

    pub fn participant_state(&self, id: ParticipantId) -> Result<&ParticipantState, EngineError> {
        self.participants.get(id.index()).ok_or(EngineError::UnknownParticipant(id))
    }

    pub fn conversation(&self, id: ConversationId) -> Result<&Conversation, EngineError> {
        self.conversations.get(id.index()).ok_or(EngineError::UnknownConversation(id))
    }

    pub fn by_username(&self, name: &str) -> Option<&Participant> {
        self.roster.iter().find(|p| p.username == name)
    }

    pub fn kind_of(&self, id: ParticipantId) -> ParticipantKind {
        self.roster[id.index()].kind
    }

    pub fn is_free(&self, id: ParticipantId) -> bool {
        self.participants.get(id.index()).is_some_and(|p| p.engaged.is_none())
    }

    /// Participants that can currently be invited (stage 2, not engaged).
    pub fn available(&self) -> Vec<ParticipantId> {
        if self.stage != Stage::Stage2 || self.clock_ms >= self.config.duration_ms() {
            return Vec::new();
        }
        self.roster.iter().map(|p| p.id).filter(|&p| self.is_free(p)).collect()
    }

    pub fn humans(&self) -> impl Iterator<Item = &Participant> {
        self.roster.iter().filter(|p| p.kind == ParticipantKind::Human)
    }

    pub fn remaining_ms(&self) -> Millis {
        match self.stage {
            Stage::Stage1 => self.config.duration_ms(),
            Stage::Stage2 => self.config.duration_ms().saturating_sub(self.clock_ms),
            _ => 0,
        }
    }

    /// Executes a command at game time `at_ms` and returns the events it produced.
    pub fn handle(&mut self, command: Command, at_ms: Millis) -> Result<Vec<Event>, EngineError> {
        let at_ms = if self.stage == Stage::Stage1 { 0 } else { at_ms };
        let mut out = Vec::new();
        fn emit(
            state: &mut GameState,
            out: &mut Vec<Event>,
            at_ms: Millis,
            kind: EventKind,
        ) -> Result<(), EngineError> {
            let e = Event::new(at_ms, kind);
            state.apply(&e)?;
            out.push(e);
            Ok(())
        }
        match command {
            Command::SubmitInitialOpinion { participant, opinion, confidence } => {
                emit(self, &mut out, at_ms, EventKind::InitialOpinion { participant, opinion, confidence })?;
                if self.participants.iter().all(|p| p.opinion.is_some()) {
                    emit(self, &mut out, at_ms, EventKind::StageChanged { from: Stage::Stage1, to: Stage::Stage2 })?;
                }
            }
            Command::SendInvite { from, to } => emit(self, &mut out, at_ms, EventKind::InviteSent { from, to })?,
            Command::RespondInvite { to, from, accept } => {
                emit(self, &mut out, at_ms, EventKind::InviteResponded { from, to, accepted: accept })?;
                if accept {
                    let conversation = ConversationId(self.conversations.len() as u32);
                    emit(
                        self,
                        &mut out,
                        at_ms,
                        EventKind::ConversationStarted { conversation, participants: [from, to] },
                    )?;
                }
            }
            Command::PostMessage { conversation, sender, text } => {
                emit(self, &mut out, at_ms, EventKind::MessagePosted { conversation, sender, text })?
            }
            Command::TerminateConversation { conversation, by } => {
                emit(self, &mut out, at_ms, EventKind::ConversationTerminated { conversation, by })?
            }
            Command::SubmitReevaluation {
                conversation,
                participant,
                new_opinion,
                personal_confidence,
                perceived_confidence,
            } => {
                let (outcome, point_to) =
                    self.reevaluation_outcome(conversation, participant, &new_opinion)?;
                emit(
                    self,
                    &mut out,
                    at_ms,
                    EventKind::Reevaluation {
                        conversation,
                        participant,
                        new_opinion,
                        personal_confidence,
                        perceived_confidence,
                        outcome,
                        point_to,
                    },
                )?;
            }
            Command::ExpireTimer => {
                match self.stage {
                    Stage::Stage3 | Stage::Concluded => return Ok(out),
                    Stage::Stage1 => return Err(EngineError::WrongStage { stage: self.stage }),
                    Stage::Stage2 => {}
                }
                if at_ms < self.config.duration_ms() {
                    return Err(EngineError::TimerRunning);
                }
                let active: Vec<ConversationId> =
                    self.active_conversations.iter().copied().collect();
                for conversation in active {
                    emit(self, &mut out, at_ms, EventKind::ConversationExpired { conversation })?;
                }
                emit(self, &mut out, at_ms, EventKind::StageChanged { from: Stage::Stage2, to: Stage::Stage3 })?;
                let sheet = compute_scores(self)?;
                emit(self, &mut out, at_ms, EventKind::ScoresComputed(sheet))?;
                if self.humans().next().is_none() {
                    emit(
                        self,
                        &mut out,
                        at_ms,
                        EventKind::StageChanged { from: Stage::Stage3, to: Stage::Concluded },
                    )?;
                }
            }
            Command::SubmitExitSurvey {
                participant,
                most_convincing,
                least_convincing,
                demographics,
                payment,
            } => {
                emit(
                    self,
                    &mut out,
                    at_ms,
                    EventKind::ExitSurvey(ExitSurvey {
                        participant,
                        most_convincing,
                        least_convincing,
                        demographics,
                        payment,
                        at_ms,
                    }),
                )?;
                if self.all_surveys_in() {
                    emit(
                        self,
                        &mut out,
                        at_ms,
                        EventKind::StageChanged { from: Stage::Stage3, to: Stage::Concluded },
                    )?;
                }
            }
            Command::Conclude => {
                if self.stage == Stage::Concluded {
                    return Ok(out);
                }
                emit(self, &mut out, at_ms, EventKind::StageChanged { from: self.stage, to: Stage::Concluded })?;
            }
            Command::Diagnostic(d) => emit(self, &mut out, at_ms, EventKind::AgentDiagnostic(d))?,
        }
        Ok(out)
    }

    fn all_surveys_in(&self) -> bool {
        self.roster
            .iter()
            .zip(&self.participants)
            .all(|(p, s)| p.kind == ParticipantKind::Bot || s.survey_submitted)
    }

    fn reevaluation_outcome(
        &self,
        conversation: ConversationId,
        participant: ParticipantId,
        new_opinion: &str,
    ) -> Result<(ChangeOutcome, Option<ParticipantId>), EngineError> {
        let conv = self.conversation(conversation)?;
        let slot = conv.slot(participant).ok_or(EngineError::NotMember(participant))?;
        let prior = self.participant_state(participant)?.opinion.as_deref().unwrap_or_default();
        let partner_opinion = conv.snapshot[1 - slot].opinion.as_str();
        Ok(if new_opinion == prior {
            (ChangeOutcome::Kept, None)
        } else if new_opinion == partner_opinion {
            (ChangeOutcome::ToPartner, Some(conv.participants[1 - slot]))
        } else {
            (ChangeOutcome::ThirdOpinion, None)
        })
    }

    fn require_stage(&self, stage: Stage) -> Result<(), EngineError> {
        if self.stage == stage {
            Ok(())
        } else {
            Err(EngineError::WrongStage { stage: self.stage })
        }
    }

    fn require_running(&self, at: Millis) -> Result<(), EngineError> {
        self.require_stage(Stage::Stage2)?;
        if at >= self.config.duration_ms() {
            return Err(EngineError::TimerExpired);
        }
        Ok(())
    }

    fn check_opinion(&self, opinion: &str) -> Result<(), EngineError> {
        if self.config.choice(opinion).is_some() {
            Ok(())
        } else {
            Err(EngineError::UnknownOpinion(opinion.to_string()))
        }
    }

    fn check_participant(&self, id: ParticipantId) -> Result<(), EngineError> {
        self.participant(id).map(|_| ())
    }

    fn active_member(
        &self,
        conversation: ConversationId,
        who: ParticipantId,
    ) -> Result<&Conversation, EngineError> {
        let conv = self.conversation(conversation)?;
        if !conv.is_member(who) {
            return Err(EngineError::NotMember(who));
        }
        if conv.status != ConversationStatus::Active {
            return Err(EngineError::InactiveConversation(conversation));
        }
        Ok(conv)
    }

    /// Validates and applies a single event. On error the state is unchanged.
    pub fn apply(&mut self, event: &Event) -> Result<(), EngineError> {
        let at = event.at_ms;
        if !matches!(event.kind, EventKind::GameCreated { .. }) && at < self.clock_ms {
            return Err(EngineError::ClockRegression { at, clock: self.clock_ms });
        }
        match &event.kind {
            EventKind::GameCreated { game_id, config } => {
                if !self.game_id.is_empty() {
                    return Err(EngineError::Inconsistent("game already created".into()));
                }
                config.validate()?;
                self.game_id = game_id.clone();
                self.config = config.clone();
            }
            EventKind::ParticipantJoined(p) => {
                self.require_stage(Stage::Stage1)?;
                if self.game_id.is_empty() {
                    return Err(EngineError::Inconsistent("participant before game".into()));
                }
                if p.id.index() != self.roster.len() || self.roster.len() >= self.config.roster_size
                {
                    return Err(EngineError::Inconsistent(alloc::format!(
                        "unexpected participant {}",
                        p.id
                    )));
                }
                if self.roster.iter().any(|q| q.username == p.username) {
                    return Err(EngineError::Inconsistent("duplicate username".into()));
                }
                self.roster.push(p.clone());
                self.participants.push(ParticipantState {
                    opinion: None,
                    confidence: None,
                    engaged: None,
                    convince_points: 0,
                    last_point_at: None,
                    survey_submitted: false,
                });
            }
            EventKind::InitialOpinion { participant, opinion, confidence } => {
                self.require_stage(Stage::Stage1)?;
                if self.roster.len() != self.config.roster_size {
                    return Err(EngineError::RosterMismatch("roster incomplete".into()));
                }
                self.check_participant(*participant)?;
                self.check_opinion(opinion)?;
                let st = &mut self.participants[participant.index()];
                if st.opinion.is_some() {
                    return Err(EngineError::DuplicateSubmission(*participant));
                }
                st.opinion = Some(opinion.clone());
                st.confidence = Some(*confidence);
            }
            EventKind::StageChanged { from, to } => {
                self.require_stage(*from)?;
                let ok = match (from, to) {
                    (Stage::Stage1, Stage::Stage2) => {
                        self.participants.len() == self.config.roster_size
                            && self.participants.iter().all(|p| p.opinion.is_some())
                    }
                    (Stage::Stage2, Stage::Stage3) => {
                        at >= self.config.duration_ms() && self.active_conversations.is_empty()
                    }
                    (Stage::Stage3, Stage::Concluded) => {
                        self.scores.is_some()
                            && (self.all_surveys_in()
                                || at
                                    >= self.config.duration_ms()
                                        + u64::from(self.config.survey_grace_s) * 1000)
                    }
                    _ => false,
                };
                if !ok {
                    return Err(EngineError::Inconsistent(alloc::format!(
                        "illegal stage transition {from:?} -> {to:?}"
                    )));
                }
                self.stage = *to;
                if *to == Stage::Stage3 {
                    self.pending_invites.clear();
                    for p in &mut self.participants {
                        p.engaged = None;
                    }
                }
            }
            EventKind::InviteSent { from, to } => {
                self.require_running(at)?;
                self.check_participant(*from)?;
                self.check_participant(*to)?;
                if from == to {
                    return Err(EngineError::SelfInvite);
                }
                for p in [from, to] {
                    if !self.is_free(*p) {
                        return Err(EngineError::Busy(*p));
                    }
                }
                if self.pending_invites.contains(&(*from, *to)) {
                    return Err(EngineError::DuplicateInvite(*from, *to));
                }
                self.pending_invites.insert((*from, *to));
            }
            EventKind::InviteResponded { from, to, accepted } => {
                self.require_running(at)?;
                if !self.pending_invites.contains(&(*from, *to)) {
                    return Err(EngineError::NoSuchInvite(*from, *to));
                }
                if *accepted {
                    for p in [to, from] {
                        if !self.is_free(*p) {
                            return Err(EngineError::StaleInvite { from: *from, busy: *p });
                        }
                    }
                }
                self.pending_invites.remove(&(*from, *to));
            }
            EventKind::ConversationStarted { conversation, participants } => {
                self.require_running(at)?;
                let [a, b] = *participants;
                if conversation.index() != self.conversations.len() || a == b {
                    return Err(EngineError::Inconsistent("bad conversation id".into()));
                }
                for p in [a, b] {
                    self.check_participant(p)?;
                    if !self.is_free(p) {
                        return Err(EngineError::Busy(p));
                    }
                }
                let snap = |p: ParticipantId| {
                    let st = &self.participants[p.index()];
                    Snapshot {
                        opinion: st.opinion.clone().unwrap_or_default(),
                        confidence: st.confidence.unwrap_or(PersonalConfidence::new(1).unwrap()),
                    }
                };
                let conv = Conversation {
                    id: *conversation,
                    participants: [a, b],
                    kind: classify_conversation(self.kind_of(a), self.kind_of(b)),
                    started_at: at,
                    ended_at: None,
                    status: ConversationStatus::Active,
                    terminated_by: None,
                    snapshot: [snap(a), snap(b)],
                    messages: Vec::new(),
                    reevaluations: [None, None],
                };
                self.pending_invites.retain(|(x, y)| ![a, b].contains(x) && ![a, b].contains(y));
                self.participants[a.index()].engaged = Some(*conversation);
                self.participants[b.index()].engaged = Some(*conversation);
                self.active_conversations.insert(*conversation);
                self.conversations.push(conv);
            }
            EventKind::MessagePosted { conversation, sender, text } => {
                self.require_running(at)?;
                self.active_member(*conversation, *sender)?;
                if text.trim().is_empty() {
                    return Err(EngineError::EmptyMessage);
                }
                self.conversations[conversation.index()].messages.push(Message {
                    sender: *sender,
                    text: text.clone(),
                    at_ms: at,
                });
            }
            EventKind::ConversationTerminated { conversation, by } => {
                self.require_running(at)?;
                self.active_member(*conversation, *by)?;
                let conv = &mut self.conversations[conversation.index()];
                conv.status = ConversationStatus::Terminated;
                conv.terminated_by = Some(*by);
                conv.ended_at = Some(at);
                self.active_conversations.remove(conversation);
            }
            EventKind::ConversationExpired { conversation } => {
                self.require_stage(Stage::Stage2)?;
                if at < self.config.duration_ms() {
                    return Err(EngineError::TimerRunning);
                }
                let conv = self.conversation(*conversation)?;
                if conv.status != ConversationStatus::Active {
                    return Err(EngineError::InactiveConversation(*conversation));
                }
                let members = conv.participants;
                let conv = &mut self.conversations[conversation.index()];
                conv.status = ConversationStatus::Expired;
                conv.ended_at = Some(at);
                self.active_conversations.remove(conversation);
                for p in members {
                    self.participants[p.index()].engaged = None;
                }
            }
            EventKind::Reevaluation {
                conversation,
                participant,
                new_opinion,
                personal_confidence,
                perceived_confidence,
                outcome,
                point_to,
            } => {
                self.require_running(at)?;
                self.check_opinion(new_opinion)?;
                let conv = self.conversation(*conversation)?;
                let slot = conv.slot(*participant).ok_or(EngineError::NotMember(*participant))?;
                if conv.status != ConversationStatus::Terminated {
                    return Err(EngineError::NotTerminated(*conversation));
                }
                if conv.reevaluations[slot].is_some() {
                    return Err(EngineError::DuplicateSubmission(*participant));
                }
                let expected =
                    self.reevaluation_outcome(*conversation, *participant, new_opinion)?;
                if expected != (*outcome, *point_to) {
                    return Err(EngineError::Inconsistent("re-evaluation outcome".into()));
                }
                self.conversations[conversation.index()].reevaluations[slot] =
                    Some(Reevaluation {
                        new_opinion: new_opinion.clone(),
                        personal_confidence: *personal_confidence,
                        perceived_confidence: *perceived_confidence,
                        outcome: *outcome,
                        at_ms: at,
                    });
                let st = &mut self.participants[participant.index()];
                st.opinion = Some(new_opinion.clone());
                st.confidence = Some(*personal_confidence);
                st.engaged = None;
                if let Some(winner) = point_to {
                    let w = &mut self.participants[winner.index()];
                    w.convince_points += 1;
                    w.last_point_at = Some(at);
                }
            }
            EventKind::ScoresComputed(sheet) => {
                self.require_stage(Stage::Stage3)?;
                if self.scores.is_some() {
                    return Err(EngineError::Inconsistent("scores already computed".into()));
                }
                let expected = compute_scores(self)?;
                if &expected != sheet {
                    return Err(EngineError::Inconsistent("score sheet mismatch".into()));
                }
                self.scores = Some(expected);
            }
            EventKind::ExitSurvey(survey) => {
                self.require_stage(Stage::Stage3)?;
                let p = self.participant(survey.participant)?;
                if p.kind == ParticipantKind::Bot {
                    return Err(EngineError::BotSurvey);
                }
                if self.participants[p.id.index()].survey_submitted {
                    return Err(EngineError::DuplicateSubmission(p.id));
                }
                for name in [&survey.most_convincing, &survey.least_convincing] {
                    let nominee = self
                        .by_username(name)
                        .ok_or_else(|| EngineError::UnknownUsername(name.clone()))?;
                    if nominee.id == survey.participant {
                        return Err(EngineError::SelfNomination);
                    }
                }
                if survey.at_ms != at {
                    return Err(EngineError::Inconsistent("survey timestamp".into()));
                }
                self.participants[survey.participant.index()].survey_submitted = true;
                self.surveys.push(survey.clone());
            }
            EventKind::AgentDiagnostic(_) => {
                self.diagnostics += 1;
            }
        }
        if self.stage != Stage::Stage1 {
            self.clock_ms = self.clock_ms.max(at);
        }
        Ok(())
    }

    /// Structural invariants that must hold after every event.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = alloc::vec![0u32; self.roster.len()];
        for id in &self.active_conversations {
            let conv = &self.conversations[id.index()];
            if conv.status != ConversationStatus::Active {
                return Err(alloc::format!("{id} listed active but is {:?}", conv.status));
            }
            for p in conv.participants {
                seen[p.index()] += 1;
            }
        }
        if let Some(p) = seen.iter().position(|&n| n > 1) {
            return Err(alloc::format!("participant p{p} is in {} active conversations", seen[p]));
        }
        for (a, b) in &self.pending_invites {
            if !self.is_free(*a) || !self.is_free(*b) {
                return Err(alloc::format!("pending invite {a}->{b} involves a busy participant"));
            }
        }
        for conv in &self.conversations {
            if conv.messages.windows(2).any(|w| w[1].at_ms < w[0].at_ms) {
                return Err(alloc::format!("{} messages out of order", conv.id));
            }
            match conv.status {
                ConversationStatus::Terminated => {
                    if !conv.terminated_by.is_some_and(|p| conv.is_member(p)) {
                        return Err(alloc::format!("{} terminated by non-member", conv.id));
                    }
                }
                ConversationStatus::Expired => {
                    if conv.reevaluations.iter().all(Option::is_some) {
                        return Err(alloc::format!("{} expired with re-evaluations", conv.id));
                    }
                }
                ConversationStatus::Active => {}
            }
            let last_msg = conv.messages.last().map_or(0, |m| m.at_ms);
            if last_msg >= self.config.duration_ms() {
                return Err(alloc::format!("{} has a message after expiry", conv.id));
            }
        }
        Ok(())
    }

    /// Text shown to a human after submitting the exit survey.
    pub fn reveal_text(&self, participant: ParticipantId) -> String {
        let winner = self
            .scores
            .as_ref()
            .and_then(|s| s.entry(participant))
            .is_some_and(|e| e.winner);
        let mut text = String::new();
        if winner {
            text.push_str("Congratulations, you finished in the top two and won the game! ");
        }
        text.push_str(
            "Thank you for playing. This study runs two conditions involving people: one with \
             bots among the participants and one with humans only. ",
        );
        match self.config.condition {
            crate::domain::Condition::BotHuman => text.push_str(
                "In your game, three of the other participants were bots powered by large \
                 language models.",
            ),
            _ => text.push_str("In your game, all participants were human."),
        }
        text
    }
}

#[cfg(test)]
mod tests;
