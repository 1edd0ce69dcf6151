//! Bot participants: personas, prompts, model access and the reactive
//! brain that turns game events into commands.

mod bot;
pub mod lines;
mod memory;
mod model;
mod prompt;
mod referee;
pub mod style;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{BudgetRange, ConversationType, GameConfig, OpinionId, PersonalConfidence};
use crate::engine::{
    Command, Conversation, ConversationId, Diagnostic, GameState, Millis, ParticipantId,
    ParticipantState, Stage,
};

pub use bot::{BotAgent, BotTiming};
pub use memory::{infer_opinion, AgentMemory, PartnerMemory};
pub use model::{
    ChatRole, ChatTurn, CompletionRequest, LanguageModel, ModelError, ModelPool, Purpose,
    ScriptedModel, StubScripts,
};
pub use prompt::{strip_comments, PromptTemplates};
pub use referee::{assess, parse_assessment, Assessment, RefereeOutcome, REPROMPT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Personality {
    Suggestible,
    Regular,
    Stubborn,
}

impl Personality {
    pub const ALL: [Personality; 3] =
        [Personality::Suggestible, Personality::Regular, Personality::Stubborn];

    pub fn key(self) -> &'static str {
        match self {
            Personality::Suggestible => "suggestible",
            Personality::Regular => "regular",
            Personality::Stubborn => "stubborn",
        }
    }

    /// Draw weights: half regular, a quarter each for the other two.
    pub fn weight(self) -> f64 {
        match self {
            Personality::Regular => 0.5,
            _ => 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grammar {
    Lowercase,
    Perfect,
    ReducedPunctuation,
}

impl Grammar {
    pub const ALL: [Grammar; 3] = [Grammar::Lowercase, Grammar::Perfect, Grammar::ReducedPunctuation];

    pub fn key(self) -> &'static str {
        match self {
            Grammar::Lowercase => "lowercase",
            Grammar::Perfect => "perfect",
            Grammar::ReducedPunctuation => "reduced_punctuation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Persona {
    pub personality: Personality,
    pub grammar: Grammar,
}

impl fmt::Display for Persona {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.personality.key(), self.grammar.key())
    }
}

/// One entry of a bot's model mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeight {
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotConfig {
    pub persona: Persona,
    /// Normalized: weights are positive and sum to 1.
    pub model_mix: Vec<ModelWeight>,
    pub chain_delay_ms: Millis,
    pub inactivity_remind_ms: Millis,
    pub inactivity_leave_ms: Millis,
    pub idle_invite_ms: Millis,
    pub rng_seed: u64,
}

impl BotConfig {
    pub const DEFAULT_CHAIN_DELAY_MS: Millis = 3_000;
    pub const DEFAULT_REMIND_MS: Millis = 90_000;
    pub const DEFAULT_LEAVE_MS: Millis = 180_000;
    pub const DEFAULT_IDLE_MS: Millis = 45_000;

    pub fn new(persona: Persona, model_mix: &[ModelWeight], rng_seed: u64) -> Result<Self, String> {
        Ok(Self {
            persona,
            model_mix: normalize_mix(model_mix)?,
            chain_delay_ms: Self::DEFAULT_CHAIN_DELAY_MS,
            inactivity_remind_ms: Self::DEFAULT_REMIND_MS,
            inactivity_leave_ms: Self::DEFAULT_LEAVE_MS,
            idle_invite_ms: Self::DEFAULT_IDLE_MS,
            rng_seed,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        normalize_mix(&self.model_mix)?;
        if self.chain_delay_ms == 0 || self.inactivity_remind_ms == 0 || self.idle_invite_ms == 0 {
            return Err("delays must be positive".into());
        }
        if self.inactivity_leave_ms <= self.inactivity_remind_ms {
            return Err("inactivity leave threshold must exceed the reminder threshold".into());
        }
        Ok(())
    }
}

/// Checks that every weight is positive and finite and rescales them to sum to 1.
pub fn normalize_mix(mix: &[ModelWeight]) -> Result<Vec<ModelWeight>, String> {
    if mix.is_empty() {
        return Err("model mix is empty".into());
    }
    if let Some(bad) = mix.iter().find(|m| !(m.weight.is_finite() && m.weight > 0.0)) {
        return Err(alloc::format!("model {} has non-positive weight {}", bad.name, bad.weight));
    }
    let total: f64 = mix.iter().map(|m| m.weight).sum();
    Ok(mix.iter().map(|m| ModelWeight { name: m.name.clone(), weight: m.weight / total }).collect())
}

/// Seeded weighted draw; returns an index into `weights`.
pub fn weighted_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct BotInit {
    pub config: BotConfig,
    pub opinion: OpinionId,
    pub confidence: PersonalConfidence,
}

/// Draws a bot's starting opinion, confidence and persona.
pub fn instantiate_bot<R: Rng + ?Sized>(
    game: &GameConfig,
    model_mix: &[ModelWeight],
    rng: &mut R,
) -> Result<BotInit, String> {
    let opinion = game.choices[rng.random_range(0..game.choices.len())].id.clone();
    let confidence = PersonalConfidence::new(rng.random_range(1..=4)).expect("level in range");
    let weights: Vec<f64> = Personality::ALL.iter().map(|p| p.weight()).collect();
    let personality = Personality::ALL[weighted_index(&weights, rng)];
    let grammar = Grammar::ALL[rng.random_range(0..Grammar::ALL.len())];
    let config = BotConfig::new(Persona { personality, grammar }, model_mix, rng.random())?;
    Ok(BotInit { config, opinion, confidence })
}

/// Message budget of one conversation: messages sent plus received.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationBudget {
    pub limit: u32,
    pub used: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetCheck {
    Continue,
    Farewell,
}

impl ConversationBudget {
    pub fn draw<R: Rng + ?Sized>(range: BudgetRange, rng: &mut R) -> Self {
        Self { limit: rng.random_range(range.min..=range.max), used: 0 }
    }

    /// Budget for a conversation of `kind`; human-only conversations have none.
    pub fn for_conversation<R: Rng + ?Sized>(
        game: &GameConfig,
        kind: ConversationType,
        rng: &mut R,
    ) -> Option<Self> {
        game.budget_range(kind).map(|r| Self::draw(r, rng))
    }

    pub fn check(&self) -> BudgetCheck {
        if self.used >= self.limit {
            BudgetCheck::Farewell
        } else {
            BudgetCheck::Continue
        }
    }
}

/// Uniform choice among invitable participants.
pub fn idle_invite_policy<R: Rng + ?Sized>(pool: &[ParticipantId], rng: &mut R) -> Option<ParticipantId> {
    if pool.is_empty() {
        None
    } else {
        Some(pool[rng.random_range(0..pool.len())])
    }
}

/// A participant driven by code: bots, and scripted humans in simulation.
/// Agents react to the events they are allowed to see and to their own
/// timers, and answer with commands through the context.
pub trait Agent: Send {
    fn id(&self) -> ParticipantId;

    /// Called once when the game is created, before any event is delivered.
    fn on_game_start(&mut self, _ctx: &mut AgentCtx<'_>) {}

    fn on_event(&mut self, ctx: &mut AgentCtx<'_>, event: &crate::engine::Event);

    fn on_wake(&mut self, ctx: &mut AgentCtx<'_>, token: u64);

    /// A command this agent issued was refused by the engine.
    fn on_rejected(&mut self, _ctx: &mut AgentCtx<'_>, _command: &Command, _error: &crate::engine::EngineError) {}
}

/// What an agent may read and do during one callback.
pub struct AgentCtx<'a> {
    pub now: Millis,
    me: ParticipantId,
    state: &'a GameState,
    commands: Vec<Command>,
    wakes: Vec<(Millis, u64)>,
}

impl<'a> AgentCtx<'a> {
    pub fn new(now: Millis, me: ParticipantId, state: &'a GameState) -> Self {
        Self { now, me, state, commands: Vec::new(), wakes: Vec::new() }
    }

    pub fn me(&self) -> ParticipantId {
        self.me
    }

    pub fn stage(&self) -> Stage {
        self.state.stage
    }

    pub fn game(&self) -> &'a GameConfig {
        &self.state.config
    }

    pub fn my_state(&self) -> &'a ParticipantState {
        &self.state.participants[self.me.index()]
    }

    /// A conversation this agent is a member of.
    pub fn conversation(&self, id: ConversationId) -> Option<&'a Conversation> {
        self.state.conversations.get(id.index()).filter(|c| c.is_member(self.me))
    }

    pub fn peers(&self) -> Vec<ParticipantId> {
        self.state.roster.iter().map(|p| p.id).filter(|&p| p != self.me).collect()
    }

    /// Peers that can be invited right now.
    pub fn available_peers(&self) -> Vec<ParticipantId> {
        self.state.available().into_iter().filter(|&p| p != self.me).collect()
    }

    pub fn outgoing_invites(&self) -> Vec<ParticipantId> {
        self.state.pending_invites.iter().filter(|(f, _)| *f == self.me).map(|(_, t)| *t).collect()
    }

    pub fn incoming_invites(&self) -> Vec<ParticipantId> {
        self.state.pending_invites.iter().filter(|(_, t)| *t == self.me).map(|(f, _)| *f).collect()
    }

    pub fn username(&self, p: ParticipantId) -> &'a str {
        &self.state.roster[p.index()].username
    }

    pub fn remaining_ms(&self) -> Millis {
        self.state.remaining_ms()
    }

    pub fn send(&mut self, command: Command) {
        self.commands.push(command);
    }

    pub fn wake_at(&mut self, at: Millis, token: u64) {
        self.wakes.push((at.max(self.now), token));
    }

    pub fn diagnostic(&mut self, conversation: Option<ConversationId>, code: &str, detail: String) {
        self.commands.push(Command::Diagnostic(Diagnostic {
            participant: Some(self.me),
            conversation,
            code: code.into(),
            detail,
        }));
    }

    pub fn into_parts(self) -> (Vec<Command>, Vec<(Millis, u64)>) {
        (self.commands, self.wakes)
    }
}
