//! The bot brain. Reacts to the events its participant may see and to its
//! own timers; model calls are synchronous and happen inside callbacks.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::memory::{infer_opinion, AgentMemory};
use super::model::{ChatRole, ChatTurn, CompletionRequest, ModelPool, Purpose};
use super::prompt::PromptTemplates;
use super::referee::{assess, RefereeOutcome, REPROMPT};
use super::style::{apply_grammar, scrub_common_phrases, split_into_chain};
use super::{
    idle_invite_policy, lines, Agent, AgentCtx, BotConfig, BotInit, BudgetCheck, ConversationBudget,
};
use crate::domain::{ConversationType, PersonalConfidence};
use crate::engine::{
    Command, Conversation, ConversationId, ConversationStatus, EngineError, Event, EventKind,
    Millis, ParticipantId, Stage,
};

/// Delays that shape a bot's pace. All in game milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotTiming {
    pub accept_delay_ms: Millis,
    /// Inviter's greeting after the conversation opens.
    pub greet_delay_ms: Millis,
    /// Invitee greets unprompted if the inviter stays silent this long.
    pub open_fallback_ms: Millis,
    pub think_base_ms: Millis,
    pub think_per_char_ms: Millis,
    pub think_cap_ms: Millis,
    pub bot_only_think_ms: Millis,
    pub reevaluate_delay_ms: Millis,
    pub idle_jitter_ms: Millis,
}

impl Default for BotTiming {
    fn default() -> Self {
        Self {
            accept_delay_ms: 2_000,
            greet_delay_ms: 2_000,
            open_fallback_ms: 8_000,
            think_base_ms: 3_000,
            think_per_char_ms: 20,
            think_cap_ms: 15_000,
            bot_only_think_ms: 6_000,
            reevaluate_delay_ms: 5_000,
            idle_jitter_ms: 10_000,
        }
    }
}

impl BotTiming {
    pub fn think(&self, text: &str, bot_only: bool) -> Millis {
        if bot_only {
            self.bot_only_think_ms
        } else {
            (self.think_base_ms + self.think_per_char_ms * text.chars().count() as Millis).min(self.think_cap_ms)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Action {
    IdleInvite,
    Accept(ParticipantId),
    Open(ConversationId),
    Dispatch { conversation: ConversationId, generation: u64 },
    Inactivity { conversation: ConversationId, partner_msgs: usize, leave: bool },
    Reevaluate(ConversationId),
}

impl Action {
    fn conversation(&self) -> Option<ConversationId> {
        match self {
            Action::Open(c)
            | Action::Dispatch { conversation: c, .. }
            | Action::Inactivity { conversation: c, .. }
            | Action::Reevaluate(c) => Some(*c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
struct Live {
    id: ConversationId,
    partner: ParticipantId,
    inviter: bool,
    /// Sentence chains are only used with human partners.
    split: bool,
    budget: Option<ConversationBudget>,
    moves: u32,
    generation: u64,
    parts: VecDeque<String>,
    move_counted: bool,
    partner_msgs: usize,
    reminded: bool,
    closing: bool,
}

pub struct BotAgent {
    me: ParticipantId,
    config: BotConfig,
    timing: BotTiming,
    models: Arc<ModelPool>,
    templates: Arc<PromptTemplates>,
    rng: ChaCha8Rng,
    memory: AgentMemory,
    initial_confidence: PersonalConfidence,
    live: Option<Live>,
    actions: BTreeMap<u64, Action>,
    next_token: u64,
    calls: u32,
}

impl BotAgent {
    pub fn new(
        me: ParticipantId,
        init: BotInit,
        timing: BotTiming,
        models: Arc<ModelPool>,
        templates: Arc<PromptTemplates>,
    ) -> Self {
        Self {
            me,
            rng: ChaCha8Rng::seed_from_u64(init.config.rng_seed),
            memory: AgentMemory::new(me, init.opinion),
            initial_confidence: init.confidence,
            config: init.config,
            timing,
            models,
            templates,
            live: None,
            actions: BTreeMap::new(),
            next_token: 0,
            calls: 0,
        }
    }

    /// Stage 1 submission of the drawn opinion and confidence.
    pub fn initial_submission(&self) -> Command {
        Command::SubmitInitialOpinion {
            participant: self.me,
            opinion: self.memory.own_opinion.clone(),
            confidence: self.initial_confidence,
        }
    }

    pub fn config(&self) -> &BotConfig {
        &self.config
    }

    pub fn memory(&self) -> &AgentMemory {
        &self.memory
    }

    /// Budget of the current conversation, if any.
    pub fn budget(&self) -> Option<ConversationBudget> {
        self.live.as_ref().and_then(|l| l.budget)
    }

    fn schedule(&mut self, ctx: &mut AgentCtx<'_>, at: Millis, action: Action) {
        let token = self.next_token;
        self.next_token += 1;
        self.actions.insert(token, action);
        ctx.wake_at(at, token);
    }

    fn cancel(&mut self, pred: impl Fn(&Action) -> bool) {
        self.actions.retain(|_, a| !pred(a));
    }

    fn schedule_idle(&mut self, ctx: &mut AgentCtx<'_>) {
        self.cancel(|a| *a == Action::IdleInvite);
        let jitter = self.rng.random_range(0..=self.timing.idle_jitter_ms);
        let at = ctx.now + self.config.idle_invite_ms + jitter;
        self.schedule(ctx, at, Action::IdleInvite);
    }

    fn own_opinion(&self, ctx: &AgentCtx<'_>) -> String {
        ctx.my_state().opinion.clone().unwrap_or_else(|| self.memory.own_opinion.clone())
    }

    fn label(ctx: &AgentCtx<'_>, id: &str) -> String {
        ctx.game().choice(id).map_or_else(|| id.to_string(), |c| c.label.to_lowercase())
    }

    fn vars(&self, ctx: &AgentCtx<'_>, partner: ParticipantId) -> BTreeMap<String, String> {
        let own = self.own_opinion(ctx);
        let known = self.memory.known_opinion(partner).map(String::from);
        let mut v = BTreeMap::new();
        v.insert("alpha".into(), Self::label(ctx, &own));
        v.insert("own".into(), own.clone());
        v.insert("partner".into(), known.unwrap_or(own));
        v.insert("personality".into(), self.config.persona.personality.key().into());
        v
    }

    fn request(
        &mut self,
        purpose: Purpose,
        system: String,
        transcript: Vec<ChatTurn>,
        instruction: Option<String>,
        vars: BTreeMap<String, String>,
    ) -> CompletionRequest {
        let turn = self.calls;
        self.calls += 1;
        CompletionRequest { purpose, system, transcript, instruction, vars, seed: self.config.rng_seed, turn }
    }

    /// Runs a pooled completion; failures are logged as degraded.
    fn call(&mut self, ctx: &mut AgentCtx<'_>, conv: ConversationId, req: &CompletionRequest) -> Option<String> {
        let done = self.models.complete(&self.config.model_mix, req, &mut self.rng);
        match done.text {
            Ok(t) => Some(t),
            Err(e) => {
                ctx.diagnostic(
                    Some(conv),
                    "model_degraded",
                    alloc::format!("{:?} via {} failed after {} attempts: {e}", req.purpose, done.model, done.attempts),
                );
                None
            }
        }
    }

    fn chat_turns(&self, conv: &Conversation) -> Vec<ChatTurn> {
        conv.messages
            .iter()
            .map(|m| ChatTurn {
                role: if m.sender == self.me { ChatRole::Assistant } else { ChatRole::User },
                content: m.text.clone(),
            })
            .collect()
    }

    /// Transcript as one block with the bot as A and the partner as B.
    fn labelled(&self, conv: &Conversation) -> Vec<ChatTurn> {
        let body: Vec<String> = conv
            .messages
            .iter()
            .map(|m| alloc::format!("{}: {}", if m.sender == self.me { "A" } else { "B" }, m.text))
            .collect();
        alloc::vec![ChatTurn { role: ChatRole::User, content: body.join("\n") }]
    }

    fn system_prompt(&self, ctx: &AgentCtx<'_>, partner: ParticipantId) -> String {
        let (beta, gamma) = self.beliefs(ctx, partner);
        self.templates.build_initial_prompt(
            &Self::label(ctx, &self.own_opinion(ctx)),
            beta,
            gamma,
            self.config.persona.personality,
            self.config.persona.grammar,
            self.memory.summary(partner),
        )
    }

    fn beliefs(&self, ctx: &AgentCtx<'_>, partner: ParticipantId) -> (u32, u32) {
        let mut m = self.memory.clone();
        m.own_opinion = self.own_opinion(ctx);
        m.beliefs(partner)
    }

    /// The prompt actually used for the next reply to `partner`.
    pub fn current_prompt(&self, ctx: &AgentCtx<'_>, partner: ParticipantId) -> String {
        self.system_prompt(ctx, partner)
    }

    fn pick<'l>(&mut self, list: &'l [&'l str]) -> &'l str {
        list[self.rng.random_range(0..list.len())]
    }

    fn compose(&mut self, ctx: &mut AgentCtx<'_>) -> String {
        let Some(live) = self.live.as_ref() else { return String::new() };
        let (conv_id, partner, moves) = (live.id, live.partner, live.moves);
        let alpha = Self::label(ctx, &self.own_opinion(ctx));
        let raw = match moves {
            0 => self.pick(lines::GREETINGS).to_string(),
            1 => self.pick(lines::OPINION_EXCHANGE).replace("{alpha}", &alpha),
            _ => {
                let conv = ctx.conversation(conv_id).expect("member of live conversation");
                let req = self.request(
                    Purpose::Reply,
                    self.system_prompt(ctx, partner),
                    self.chat_turns(conv),
                    None,
                    self.vars(ctx, partner),
                );
                let text = self.call(ctx, conv_id, &req).map(|t| scrub_common_phrases(&t));
                match text.filter(|t| !t.trim().is_empty()) {
                    Some(t) => t,
                    None => self.pick(lines::FALLBACK_REPLIES).replace("{alpha}", &alpha),
                }
            }
        };
        let styled = apply_grammar(raw.trim(), self.config.persona.grammar);
        if styled.trim().is_empty() {
            raw.trim().to_string()
        } else {
            styled
        }
    }

    /// Generates the next move and schedules its parts. `immediate` skips
    /// the thinking delay.
    fn plan_reply(&mut self, ctx: &mut AgentCtx<'_>, immediate: bool) {
        let text = self.compose(ctx);
        let Some(live) = self.live.as_mut() else { return };
        let parts = split_into_chain(&text, self.config.chain_delay_ms, live.split);
        let think = if immediate { 0 } else { self.timing.think(&text, !live.split) };
        live.generation += 1;
        live.move_counted = false;
        live.parts = parts.iter().map(|(t, _)| t.clone()).collect();
        let (id, generation) = (live.id, live.generation);
        for (_, offset) in parts {
            self.schedule(ctx, ctx.now + think + offset, Action::Dispatch { conversation: id, generation });
        }
    }

    /// Drops an undelivered reply. Returns how many parts were discarded.
    fn interrupt(&mut self) -> usize {
        let Some(live) = self.live.as_mut() else { return 0 };
        let id = live.id;
        let dropped = live.parts.len();
        live.parts.clear();
        live.generation += 1;
        self.cancel(|a| matches!(a, Action::Dispatch { conversation, .. } | Action::Open(conversation) if *conversation == id));
        dropped
    }

    fn used(ctx: &AgentCtx<'_>, id: ConversationId) -> u32 {
        ctx.conversation(id).map_or(0, |c| c.messages.len() as u32)
    }

    fn budget_check(&mut self, ctx: &AgentCtx<'_>) -> BudgetCheck {
        let Some(live) = self.live.as_mut() else { return BudgetCheck::Continue };
        let used = Self::used(ctx, live.id);
        match live.budget.as_mut() {
            Some(b) => {
                b.used = used;
                b.check()
            }
            None => BudgetCheck::Continue,
        }
    }

    fn farewell(&mut self, ctx: &mut AgentCtx<'_>, reason: &str) {
        let Some(live) = self.live.as_ref() else { return };
        if live.closing {
            return;
        }
        let (id, partner) = (live.id, live.partner);
        self.interrupt();
        self.cancel(|a| a.conversation() == Some(id));
        if let Some(live) = self.live.as_mut() {
            live.closing = true;
        }
        let conv = ctx.conversation(id).expect("member of live conversation");
        let req = self.request(
            Purpose::Farewell,
            self.system_prompt(ctx, partner),
            self.chat_turns(conv),
            Some(self.templates.farewell.clone()),
            self.vars(ctx, partner),
        );
        let raw = match self.call(ctx, id, &req).map(|t| scrub_common_phrases(&t)) {
            Some(t) if !t.trim().is_empty() => t,
            _ => self.pick(lines::GOODBYES).to_string(),
        };
        let mut text = apply_grammar(raw.trim(), self.config.persona.grammar);
        if text.trim().is_empty() {
            text = raw.trim().to_string();
        }
        ctx.diagnostic(Some(id), "farewell", reason.into());
        ctx.send(Command::PostMessage { conversation: id, sender: self.me, text });
        ctx.send(Command::TerminateConversation { conversation: id, by: self.me });
    }

    fn natural_end(&mut self, ctx: &mut AgentCtx<'_>, id: ConversationId) -> bool {
        let conv = ctx.conversation(id).expect("member of live conversation");
        let partner = conv.partner_of(self.me).expect("member");
        let req = self.request(
            Purpose::NaturalEnd,
            self.templates.natural_end.clone(),
            self.chat_turns(conv),
            None,
            self.vars(ctx, partner),
        );
        self.call(ctx, id, &req)
            .is_some_and(|t| t.trim().to_lowercase().starts_with("yes"))
    }

    fn start(&mut self, ctx: &mut AgentCtx<'_>, id: ConversationId, participants: [ParticipantId; 2]) {
        self.cancel(|a| matches!(a, Action::IdleInvite | Action::Accept(_)));
        let Some(conv) = ctx.conversation(id) else { return };
        let kind = conv.kind;
        let inviter = participants[0] == self.me;
        let partner = if inviter { participants[1] } else { participants[0] };
        let budget = ConversationBudget::for_conversation(ctx.game(), kind, &mut self.rng);
        if let Some(b) = budget {
            ctx.diagnostic(Some(id), "budget", alloc::format!("{}", b.limit));
        }
        self.live = Some(Live {
            id,
            partner,
            inviter,
            split: kind == ConversationType::BotHuman,
            budget,
            moves: 0,
            generation: 0,
            parts: VecDeque::new(),
            move_counted: false,
            partner_msgs: 0,
            reminded: false,
            closing: false,
        });
        let delay = if inviter { self.timing.greet_delay_ms } else { self.timing.open_fallback_ms };
        self.schedule(ctx, ctx.now + delay, Action::Open(id));
    }

    fn on_partner_message(&mut self, ctx: &mut AgentCtx<'_>, id: ConversationId, text: &str) {
        let Some(live) = self.live.as_mut() else { return };
        if live.closing {
            return;
        }
        live.partner_msgs += 1;
        live.reminded = false;
        let partner = live.partner;
        if let Some(op) = infer_opinion(text, &ctx.game().choices) {
            self.memory.update_beliefs(partner, &op);
        }
        self.cancel(|a| matches!(a, Action::Inactivity { conversation, .. } if *conversation == id));
        let dropped = self.interrupt();
        if dropped > 0 {
            ctx.diagnostic(Some(id), "reply_interrupted", alloc::format!("{dropped} undelivered parts regenerated"));
        }
        if self.budget_check(ctx) == BudgetCheck::Farewell {
            self.farewell(ctx, "budget");
            return;
        }
        if self.natural_end(ctx, id) {
            self.farewell(ctx, "natural_end");
            return;
        }
        self.plan_reply(ctx, false);
    }

    fn dispatch(&mut self, ctx: &mut AgentCtx<'_>, id: ConversationId, generation: u64) {
        match self.live.as_ref() {
            Some(l) if l.id == id && l.generation == generation && !l.closing && !l.parts.is_empty() => {}
            _ => return,
        }
        if self.budget_check(ctx) == BudgetCheck::Farewell {
            self.farewell(ctx, "budget");
            return;
        }
        let live = self.live.as_mut().expect("checked above");
        let text = live.parts.pop_front().expect("checked above");
        if !live.move_counted {
            live.move_counted = true;
            live.moves += 1;
        }
        let waiting = live.parts.is_empty().then_some(live.partner_msgs);
        ctx.send(Command::PostMessage { conversation: id, sender: self.me, text });
        if let Some(partner_msgs) = waiting {
            let at = ctx.now + self.config.inactivity_remind_ms;
            self.schedule(ctx, at, Action::Inactivity { conversation: id, partner_msgs, leave: false });
        }
    }

    fn inactivity(&mut self, ctx: &mut AgentCtx<'_>, id: ConversationId, partner_msgs: usize, leave: bool) {
        match self.live.as_ref() {
            Some(l) if l.id == id && l.partner_msgs == partner_msgs && l.parts.is_empty() && !l.closing => {}
            _ => return,
        }
        if leave {
            self.farewell(ctx, "inactive");
            return;
        }
        if self.budget_check(ctx) == BudgetCheck::Farewell {
            self.farewell(ctx, "budget");
            return;
        }
        let text = apply_grammar(self.pick(lines::REMINDERS), self.config.persona.grammar);
        if let Some(l) = self.live.as_mut() {
            l.reminded = true;
        }
        ctx.send(Command::PostMessage { conversation: id, sender: self.me, text });
        let wait = self.config.inactivity_leave_ms - self.config.inactivity_remind_ms;
        self.schedule(ctx, ctx.now + wait, Action::Inactivity { conversation: id, partner_msgs, leave: true });
    }

    fn finish(&mut self, ctx: &mut AgentCtx<'_>, id: ConversationId, terminated: bool) {
        if self.live.as_ref().is_none_or(|l| l.id != id) {
            return;
        }
        let live = self.live.take().expect("checked above");
        self.cancel(|a| a.conversation() == Some(id));
        if let Some(conv) = ctx.conversation(id).filter(|c| !c.messages.is_empty()) {
            let req = self.request(
                Purpose::Summary,
                self.templates.summary.clone(),
                self.labelled(conv),
                None,
                self.vars(ctx, live.partner),
            );
            match self.call(ctx, id, &req) {
                Some(s) => self.memory.remember_summary(live.partner, s.trim().to_string()),
                None => ctx.diagnostic(Some(id), "summary_failed", "continuing without memory".into()),
            }
        }
        if terminated {
            self.schedule(ctx, ctx.now + self.timing.reevaluate_delay_ms, Action::Reevaluate(id));
        }
    }

    fn reevaluate(&mut self, ctx: &mut AgentCtx<'_>, id: ConversationId) {
        let Some(conv) = ctx.conversation(id) else { return };
        let slot = conv.slot(self.me).expect("member");
        if conv.status != ConversationStatus::Terminated || conv.reevaluations[slot].is_some() {
            return;
        }
        let partner = conv.participants[1 - slot];
        let own = self.own_opinion(ctx);
        let confidence = ctx.my_state().confidence.unwrap_or(self.initial_confidence);
        let choices = ctx.game().choices.clone();
        let outcome = if conv.messages.is_empty() {
            RefereeOutcome::Parsed(super::Assessment::conservative(&own, confidence))
        } else {
            let ids: Vec<&str> = choices.iter().map(|c| c.id.as_str()).collect();
            let prompt = self.templates.referee_prompt(&own, &ids, self.config.persona.personality);
            let transcript = self.labelled(conv);
            let vars = self.vars(ctx, partner);
            let mut ask = |reprompt: bool| {
                let mut instruction = prompt.clone();
                if reprompt {
                    instruction.push('\n');
                    instruction.push_str(REPROMPT);
                }
                let req = self.request(Purpose::Referee, String::new(), transcript.clone(), Some(instruction), vars.clone());
                self.call(ctx, id, &req)
            };
            assess(&mut ask, &choices, &own, confidence)
        };
        match &outcome {
            RefereeOutcome::Reprompted(_) => ctx.diagnostic(Some(id), "referee_reprompt", String::new()),
            RefereeOutcome::Defaulted(_) => {
                ctx.diagnostic(Some(id), "referee_default", "unreadable referee output, kept opinion".into())
            }
            RefereeOutcome::Parsed(_) => {}
        }
        let a = outcome.assessment().clone();
        ctx.send(Command::SubmitReevaluation {
            conversation: id,
            participant: self.me,
            new_opinion: a.new_opinion,
            personal_confidence: a.personal,
            perceived_confidence: a.perceived,
        });
    }

    fn idle_invite(&mut self, ctx: &mut AgentCtx<'_>) {
        if self.live.is_none() && ctx.my_state().engaged.is_none() {
            let invited = ctx.outgoing_invites();
            let pool: Vec<ParticipantId> =
                ctx.available_peers().into_iter().filter(|p| !invited.contains(p)).collect();
            if let Some(to) = idle_invite_policy(&pool, &mut self.rng) {
                ctx.send(Command::SendInvite { from: self.me, to });
            }
        }
        self.schedule_idle(ctx);
    }

    fn accept(&mut self, ctx: &mut AgentCtx<'_>, from: ParticipantId) {
        if self.live.is_some() || ctx.my_state().engaged.is_some() {
            return;
        }
        let incoming = ctx.incoming_invites();
        let from = if incoming.contains(&from) { Some(from) } else { incoming.first().copied() };
        if let Some(from) = from {
            ctx.send(Command::RespondInvite { to: self.me, from, accept: true });
        }
    }
}

impl Agent for BotAgent {
    fn id(&self) -> ParticipantId {
        self.me
    }

    fn on_game_start(&mut self, ctx: &mut AgentCtx<'_>) {
        ctx.send(self.initial_submission());
    }

    fn on_event(&mut self, ctx: &mut AgentCtx<'_>, event: &Event) {
        match &event.kind {
            EventKind::StageChanged { to: Stage::Stage2, .. } => self.schedule_idle(ctx),
            EventKind::StageChanged { .. } => {
                self.actions.clear();
                self.live = None;
            }
            EventKind::InviteSent { from, to } if *to == self.me => {
                let waiting = self.actions.values().any(|a| matches!(a, Action::Accept(_)));
                if self.live.is_none() && ctx.my_state().engaged.is_none() && !waiting {
                    self.schedule(ctx, ctx.now + self.timing.accept_delay_ms, Action::Accept(*from));
                }
            }
            EventKind::ConversationStarted { conversation, participants } if participants.contains(&self.me) => {
                self.start(ctx, *conversation, *participants)
            }
            EventKind::MessagePosted { conversation, sender, text } => {
                if *sender != self.me && self.live.as_ref().is_some_and(|l| l.id == *conversation) {
                    self.on_partner_message(ctx, *conversation, text);
                }
            }
            EventKind::ConversationTerminated { conversation, .. } => self.finish(ctx, *conversation, true),
            EventKind::ConversationExpired { conversation } => self.finish(ctx, *conversation, false),
            EventKind::Reevaluation { participant, new_opinion, .. } if *participant == self.me => {
                self.memory.own_opinion = new_opinion.clone();
                self.schedule_idle(ctx);
            }
            _ => {}
        }
    }

    fn on_wake(&mut self, ctx: &mut AgentCtx<'_>, token: u64) {
        let Some(action) = self.actions.remove(&token) else { return };
        if ctx.stage() != Stage::Stage2 {
            return;
        }
        match action {
            Action::IdleInvite => self.idle_invite(ctx),
            Action::Accept(from) => self.accept(ctx, from),
            Action::Open(id) => {
                let fresh = self.live.as_ref().is_some_and(|l| {
                    l.id == id && l.moves == 0 && l.parts.is_empty() && !l.closing
                });
                let silent = ctx.conversation(id).is_some_and(|c| c.messages.is_empty());
                if fresh && (self.live.as_ref().is_some_and(|l| l.inviter) || silent) {
                    self.plan_reply(ctx, true);
                }
            }
            Action::Dispatch { conversation, generation } => self.dispatch(ctx, conversation, generation),
            Action::Inactivity { conversation, partner_msgs, leave } => {
                self.inactivity(ctx, conversation, partner_msgs, leave)
            }
            Action::Reevaluate(id) => self.reevaluate(ctx, id),
        }
    }

    fn on_rejected(&mut self, ctx: &mut AgentCtx<'_>, command: &Command, error: &EngineError) {
        if let Command::PostMessage { conversation, .. } = command {
            ctx.diagnostic(Some(*conversation), "message_rejected", error.code().into());
        }
    }
}
