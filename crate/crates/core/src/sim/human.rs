//! A scripted stand-in for a human player.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentCtx};
use crate::domain::{OpinionId, PerceivedConfidence, PersonalConfidence};
use crate::engine::{Command, ConversationId, Event, EventKind, Millis, ParticipantId, Stage};

const GREETINGS: &[&str] = &["hi", "hey there", "hello!", "hey, how are you?", "hi :)"];

/// `{own}` is the player's current choice.
const ARGUMENTS: &[&str] = &[
    "I picked {own} because it balances nutrition and the climate",
    "{own} still gives you enough protein without all the emissions",
    "honestly meat is a big part of the carbon footprint problem",
    "fish gives omega-3 and it is healthier than red meat",
    "a vegan diet can lack vitamin b12 unless you take supplements",
    "plant-based diets use way less land and water",
    "cows produce a lot of methane, that is bad for the environment",
    "eggs and dairy are pretty sustainable in moderation",
    "you need a balanced diet with vegetables and some animal protein",
    "overfishing is a real issue for the oceans though",
    "what made you choose that one?",
    "I see your point but I'm not fully convinced",
    "that's fair, nutrition matters a lot",
    "{own} is the best compromise in my opinion",
];

const SUSPICIONS: &[&str] = &["are you a bot?", "wait, is this an AI?", "you sound like chatgpt lol", "r u a chatbot"];

const PARTINGS: &[&str] = &["ok bye!", "gotta go, nice talking", "see you, good chat", "alright bye"];

/// Behavioral knobs of a scripted human. Times are in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanScript {
    pub first_invite_ms: (Millis, Millis),
    pub idle_invite_ms: (Millis, Millis),
    pub accept_delay_ms: (Millis, Millis),
    pub accept_probability: f64,
    pub reply_delay_ms: (Millis, Millis),
    pub chain_gap_ms: (Millis, Millis),
    /// Probability that a reply is sent as two consecutive messages.
    pub chain_probability: f64,
    /// Own messages after which the player leaves the conversation.
    pub messages_per_conversation: (u32, u32),
    pub flag_probability: f64,
    pub reevaluate_delay_ms: (Millis, Millis),
    pub switch_probability: f64,
    pub third_opinion_probability: f64,
    pub silence_leave_ms: Millis,
    pub survey_delay_ms: (Millis, Millis),
}

impl Default for HumanScript {
    fn default() -> Self {
        Self {
            first_invite_ms: (5_000, 60_000),
            idle_invite_ms: (20_000, 90_000),
            accept_delay_ms: (3_000, 15_000),
            accept_probability: 0.85,
            reply_delay_ms: (4_000, 40_000),
            chain_gap_ms: (2_000, 12_000),
            chain_probability: 0.3,
            messages_per_conversation: (5, 18),
            flag_probability: 0.04,
            reevaluate_delay_ms: (5_000, 30_000),
            switch_probability: 0.2,
            third_opinion_probability: 0.05,
            silence_leave_ms: 150_000,
            survey_delay_ms: (10_000, 120_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Step {
    Invite,
    Accept(ParticipantId),
    Say { conversation: ConversationId, seen: usize },
    Silence { conversation: ConversationId, seen: usize },
    Reevaluate(ConversationId),
    Survey,
}

#[derive(Debug, Clone)]
struct Chat {
    id: ConversationId,
    target: u32,
    sent: u32,
}

pub struct ScriptedHuman {
    me: ParticipantId,
    script: HumanScript,
    rng: ChaCha8Rng,
    opinion: Option<(OpinionId, PersonalConfidence)>,
    chat: Option<Chat>,
    steps: BTreeMap<u64, Step>,
    next_token: u64,
}

fn between<R: Rng>(rng: &mut R, (lo, hi): (Millis, Millis)) -> Millis {
    rng.random_range(lo..=hi.max(lo))
}

impl ScriptedHuman {
    pub fn new(me: ParticipantId, script: HumanScript, seed: u64) -> Self {
        Self { me, script, rng: ChaCha8Rng::seed_from_u64(seed), opinion: None, chat: None, steps: BTreeMap::new(), next_token: 0 }
    }

    /// Starts with a fixed opinion instead of a random one.
    pub fn with_opinion(mut self, opinion: &str, confidence: PersonalConfidence) -> Self {
        self.opinion = Some((opinion.into(), confidence));
        self
    }

    fn schedule(&mut self, ctx: &mut AgentCtx<'_>, delay: Millis, step: Step) {
        let token = self.next_token;
        self.next_token += 1;
        self.steps.insert(token, step);
        ctx.wake_at(ctx.now + delay, token);
    }

    fn own(&self, ctx: &AgentCtx<'_>) -> String {
        ctx.my_state().opinion.clone().unwrap_or_default()
    }

    fn line(&mut self, ctx: &AgentCtx<'_>, list: &[&str]) -> String {
        let own = self.own(ctx);
        let label = ctx.game().choice(&own).map_or(own.clone(), |c| c.label.to_lowercase());
        list[self.rng.random_range(0..list.len())].replace("{own}", &label)
    }

    fn seen(ctx: &AgentCtx<'_>, id: ConversationId) -> usize {
        ctx.conversation(id).map_or(0, |c| c.messages.len())
    }

    fn say(&mut self, ctx: &mut AgentCtx<'_>, id: ConversationId, seen: usize) {
        let Some(chat) = self.chat.clone().filter(|c| c.id == id) else { return };
        let Some(conv) = ctx.conversation(id) else { return };
        // a newer message arrived since this reply was planned
        if conv.messages.len() != seen {
            return;
        }
        if chat.sent >= chat.target {
            let text = self.line(ctx, PARTINGS);
            ctx.send(Command::PostMessage { conversation: id, sender: self.me, text });
            ctx.send(Command::TerminateConversation { conversation: id, by: self.me });
            return;
        }
        let text = if chat.sent == 0 && conv.messages.is_empty() {
            self.line(ctx, GREETINGS)
        } else if self.rng.random_bool(self.script.flag_probability) {
            self.line(ctx, SUSPICIONS)
        } else {
            self.line(ctx, ARGUMENTS)
        };
        ctx.send(Command::PostMessage { conversation: id, sender: self.me, text });
        if let Some(c) = self.chat.as_mut() {
            c.sent += 1;
        }
        let after = seen + 1;
        if self.rng.random_bool(self.script.chain_probability) {
            let gap = between(&mut self.rng, self.script.chain_gap_ms);
            self.schedule(ctx, gap, Step::Say { conversation: id, seen: after });
        } else {
            let wait = self.script.silence_leave_ms;
            self.schedule(ctx, wait, Step::Silence { conversation: id, seen: after });
        }
    }

    fn reevaluate(&mut self, ctx: &mut AgentCtx<'_>, id: ConversationId) {
        let Some(conv) = ctx.conversation(id) else { return };
        let slot = conv.slot(self.me).expect("member");
        if conv.reevaluations[slot].is_some() {
            return;
        }
        let own = self.own(ctx);
        let partner_opinion = conv.snapshot[1 - slot].opinion.clone();
        let confidence = ctx.my_state().confidence.map_or(2, |c| c.level());
        let u: f64 = self.rng.random();
        let new_opinion = if partner_opinion != own && u < self.script.switch_probability {
            partner_opinion
        } else if u > 1.0 - self.script.third_opinion_probability {
            let others: Vec<&str> = ctx
                .game()
                .choices
                .iter()
                .map(|c| c.id.as_str())
                .filter(|c| *c != own && *c != partner_opinion)
                .collect();
            others.get(self.rng.random_range(0..others.len().max(1))).map_or(own.clone(), |s| (*s).into())
        } else {
            own.clone()
        };
        let shift: i8 = self.rng.random_range(-1..=1);
        let personal = (confidence as i8 + shift).clamp(1, 4) as u8;
        let perceived = if conv.messages.len() < 3 { 0 } else { self.rng.random_range(0..=4) };
        ctx.send(Command::SubmitReevaluation {
            conversation: id,
            participant: self.me,
            new_opinion,
            personal_confidence: PersonalConfidence::new(personal).expect("clamped"),
            perceived_confidence: PerceivedConfidence::new(perceived).expect("in range"),
        });
    }

    fn survey(&mut self, ctx: &mut AgentCtx<'_>) {
        let peers = ctx.peers();
        if peers.len() < 2 {
            return;
        }
        let most = peers[self.rng.random_range(0..peers.len())];
        let rest: Vec<ParticipantId> = peers.iter().copied().filter(|p| *p != most).collect();
        let least = rest[self.rng.random_range(0..rest.len())];
        ctx.send(Command::SubmitExitSurvey {
            participant: self.me,
            most_convincing: ctx.username(most).into(),
            least_convincing: ctx.username(least).into(),
            demographics: None,
            payment: None,
        });
    }
}

impl Agent for ScriptedHuman {
    fn id(&self) -> ParticipantId {
        self.me
    }

    fn on_game_start(&mut self, ctx: &mut AgentCtx<'_>) {
        let (opinion, confidence) = match self.opinion.clone() {
            Some(o) => o,
            None => {
                let choices = &ctx.game().choices;
                let o = choices[self.rng.random_range(0..choices.len())].id.clone();
                (o, PersonalConfidence::new(self.rng.random_range(1..=4)).expect("in range"))
            }
        };
        ctx.send(Command::SubmitInitialOpinion { participant: self.me, opinion, confidence });
    }

    fn on_event(&mut self, ctx: &mut AgentCtx<'_>, event: &Event) {
        match &event.kind {
            EventKind::StageChanged { to: Stage::Stage2, .. } => {
                let d = between(&mut self.rng, self.script.first_invite_ms);
                self.schedule(ctx, d, Step::Invite);
            }
            EventKind::StageChanged { to: Stage::Stage3, .. } => {
                self.steps.clear();
                self.chat = None;
                let d = between(&mut self.rng, self.script.survey_delay_ms);
                self.schedule(ctx, d, Step::Survey);
            }
            EventKind::InviteSent { from, to } if *to == self.me => {
                let d = between(&mut self.rng, self.script.accept_delay_ms);
                self.schedule(ctx, d, Step::Accept(*from));
            }
            EventKind::ConversationStarted { conversation, participants } => {
                let (lo, hi) = self.script.messages_per_conversation;
                let target = self.rng.random_range(lo..=hi.max(lo));
                self.chat = Some(Chat { id: *conversation, target, sent: 0 });
                self.steps.retain(|_, s| !matches!(s, Step::Accept(_)));
                if participants[0] == self.me {
                    let d = between(&mut self.rng, self.script.accept_delay_ms);
                    self.schedule(ctx, d, Step::Say { conversation: *conversation, seen: 0 });
                } else {
                    let wait = self.script.silence_leave_ms;
                    self.schedule(ctx, wait, Step::Silence { conversation: *conversation, seen: 0 });
                }
            }
            EventKind::MessagePosted { conversation, sender, .. } if *sender != self.me => {
                if self.chat.as_ref().is_some_and(|c| c.id == *conversation) {
                    let seen = Self::seen(ctx, *conversation);
                    let d = between(&mut self.rng, self.script.reply_delay_ms);
                    self.schedule(ctx, d, Step::Say { conversation: *conversation, seen });
                }
            }
            EventKind::ConversationTerminated { conversation, .. } => {
                if self.chat.as_ref().is_some_and(|c| c.id == *conversation) {
                    self.chat = None;
                    let d = between(&mut self.rng, self.script.reevaluate_delay_ms);
                    self.schedule(ctx, d, Step::Reevaluate(*conversation));
                }
            }
            EventKind::ConversationExpired { conversation } => {
                if self.chat.as_ref().is_some_and(|c| c.id == *conversation) {
                    self.chat = None;
                }
            }
            EventKind::Reevaluation { participant, .. } if *participant == self.me => {
                let d = between(&mut self.rng, self.script.idle_invite_ms);
                self.schedule(ctx, d, Step::Invite);
            }
            _ => {}
        }
    }

    fn on_wake(&mut self, ctx: &mut AgentCtx<'_>, token: u64) {
        let Some(step) = self.steps.remove(&token) else { return };
        match step {
            Step::Survey => {
                if ctx.stage() == Stage::Stage3 {
                    self.survey(ctx);
                }
            }
            _ if ctx.stage() != Stage::Stage2 => {}
            Step::Invite => {
                if self.chat.is_none() && ctx.my_state().engaged.is_none() {
                    let invited = ctx.outgoing_invites();
                    let pool: Vec<ParticipantId> =
                        ctx.available_peers().into_iter().filter(|p| !invited.contains(p)).collect();
                    if !pool.is_empty() {
                        let to = pool[self.rng.random_range(0..pool.len())];
                        ctx.send(Command::SendInvite { from: self.me, to });
                    }
                    let d = between(&mut self.rng, self.script.idle_invite_ms);
                    self.schedule(ctx, d, Step::Invite);
                }
            }
            Step::Accept(from) => {
                if self.chat.is_none() && ctx.incoming_invites().contains(&from) {
                    let accept = self.rng.random_bool(self.script.accept_probability);
                    ctx.send(Command::RespondInvite { to: self.me, from, accept });
                }
            }
            Step::Say { conversation, seen } => self.say(ctx, conversation, seen),
            Step::Silence { conversation, seen } => {
                if self.chat.as_ref().is_some_and(|c| c.id == conversation) && Self::seen(ctx, conversation) == seen {
                    ctx.send(Command::TerminateConversation { conversation, by: self.me });
                }
            }
            Step::Reevaluate(id) => self.reevaluate(ctx, id),
        }
    }
}
