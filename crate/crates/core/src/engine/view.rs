//! Participant-scoped projections of the game state. Nothing here exposes
//! another participant's opinion, kind, or a conversation they are not in.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    ConversationId, ConversationStatus, Event, EventKind, GameState, Millis, ParticipantId,
    ScoreEntry, Stage,
};
use crate::domain::{OpinionChoice, OpinionId, PersonalConfidence};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerView {
    pub username: String,
    pub available: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewMessage {
    pub sender: String,
    pub text: String,
    pub at_ms: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationView {
    pub id: ConversationId,
    pub partner: String,
    pub status: ConversationStatus,
    pub messages: Vec<ViewMessage>,
    pub awaiting_reevaluation: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantView {
    pub game_id: String,
    pub stage: Stage,
    pub username: String,
    pub prompt: String,
    pub choices: Vec<OpinionChoice>,
    pub opinion: Option<OpinionId>,
    pub confidence: Option<PersonalConfidence>,
    pub remaining_ms: Millis,
    pub peers: Vec<PeerView>,
    pub incoming_invites: Vec<String>,
    pub outgoing_invites: Vec<String>,
    pub conversation: Option<ConversationView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreView>,
    pub survey_submitted: bool,
}

/// A participant's own result, without internal ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreView {
    pub final_opinion: OpinionId,
    pub convince_points: u32,
    pub majority_bonus: u32,
    pub total: u32,
    pub rank: u32,
    pub winner: bool,
}

impl From<&ScoreEntry> for ScoreView {
    fn from(e: &ScoreEntry) -> Self {
        Self {
            final_opinion: e.final_opinion.clone(),
            convince_points: e.convince_points,
            majority_bonus: e.majority_bonus,
            total: e.total,
            rank: e.rank,
            winner: e.winner,
        }
    }
}

/// Who may observe an event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Audience {
    Everyone,
    Only(Vec<ParticipantId>),
    Nobody,
}

impl Audience {
    pub fn includes(&self, p: ParticipantId) -> bool {
        match self {
            Audience::Everyone => true,
            Audience::Only(ps) => ps.contains(&p),
            Audience::Nobody => false,
        }
    }
}

impl GameState {
    pub fn participant_view(&self, me: ParticipantId) -> Option<ParticipantView> {
        let who = self.roster.get(me.index())?;
        let st = &self.participants[me.index()];
        let name = |p: ParticipantId| self.roster[p.index()].username.clone();
        let running = self.stage == Stage::Stage2;
        let peers = self
            .roster
            .iter()
            .filter(|p| p.id != me)
            .map(|p| PeerView { username: p.username.clone(), available: running && self.is_free(p.id) })
            .collect();
        let incoming_invites =
            self.pending_invites.iter().filter(|(_, to)| *to == me).map(|(f, _)| name(*f)).collect();
        let outgoing_invites =
            self.pending_invites.iter().filter(|(f, _)| *f == me).map(|(_, t)| name(*t)).collect();
        let conversation = st.engaged.map(|cid| {
            let conv = &self.conversations[cid.index()];
            let slot = conv.slot(me).expect("engaged participant is a member");
            ConversationView {
                id: cid,
                partner: name(conv.participants[1 - slot]),
                status: conv.status,
                messages: conv
                    .messages
                    .iter()
                    .map(|m| ViewMessage { sender: name(m.sender), text: m.text.clone(), at_ms: m.at_ms })
                    .collect(),
                awaiting_reevaluation: conv.status == ConversationStatus::Terminated
                    && conv.reevaluations[slot].is_none(),
            }
        });
        Some(ParticipantView {
            game_id: self.game_id.clone(),
            stage: self.stage,
            username: who.username.clone(),
            prompt: self.config.prompt.clone(),
            choices: self.config.choices.clone(),
            opinion: st.opinion.clone(),
            confidence: st.confidence,
            remaining_ms: self.remaining_ms(),
            peers,
            incoming_invites,
            outgoing_invites,
            conversation,
            score: self.scores.as_ref().and_then(|s| s.entry(me)).map(ScoreView::from),
            survey_submitted: st.survey_submitted,
        })
    }

    /// Participants allowed to see `event`. Evaluate against the state the
    /// event was applied to.
    pub fn audience(&self, event: &Event) -> Audience {
        match &event.kind {
            EventKind::GameCreated { .. }
            | EventKind::ParticipantJoined(_)
            | EventKind::ScoresComputed(_)
            | EventKind::AgentDiagnostic(_) => Audience::Nobody,
            EventKind::StageChanged { .. } => Audience::Everyone,
            EventKind::InitialOpinion { participant, .. }
            | EventKind::Reevaluation { participant, .. } => Audience::Only(alloc::vec![*participant]),
            EventKind::ExitSurvey(s) => Audience::Only(alloc::vec![s.participant]),
            EventKind::InviteSent { from, to } | EventKind::InviteResponded { from, to, .. } => {
                Audience::Only(alloc::vec![*from, *to])
            }
            EventKind::ConversationStarted { participants, .. } => {
                Audience::Only(participants.to_vec())
            }
            EventKind::MessagePosted { conversation, .. }
            | EventKind::ConversationTerminated { conversation, .. }
            | EventKind::ConversationExpired { conversation } => self
                .conversations
                .get(conversation.index())
                .map_or(Audience::Nobody, |c| Audience::Only(c.participants.to_vec())),
        }
    }
}
