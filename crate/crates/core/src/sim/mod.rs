//! Discrete-event simulation of whole games on a virtual clock.
//!
//! Agents are woken in (time, sequence) order; commands they issue are
//! executed one at a time in issue order, and every resulting event is
//! delivered only to its audience.

mod human;

pub use human::{HumanScript, ScriptedHuman};

use alloc::boxed::Box;
use alloc::collections::{BinaryHeap, VecDeque};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{
    instantiate_bot, Agent, AgentCtx, BotAgent, BotTiming, ModelPool, ModelWeight, PromptTemplates,
    ScriptedModel, StubScripts,
};
use crate::domain::{GameConfig, ParticipantKind};
use crate::engine::{
    Command, EngineError, Event, GameState, Millis, ParticipantId, RosterEntry, Stage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Wake {
    Agent { index: usize, token: u64 },
    Expire,
    Grace,
}

/// Upper bound on processed commands, as a guard against runaway agents.
pub const MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("agent list does not match the roster: {0}")]
    Agents(String),
    #[error("simulation exceeded {0} steps")]
    Runaway(usize),
    #[error("simulation stalled in {0:?}")]
    Stalled(Stage),
    #[error("setup failed: {0}")]
    Setup(String),
}

/// Runs a game: executes commands, delivers each event to its audience and
/// fires agent timers in (time, sequence) order. Participants without an
/// agent are driven from outside through [`Driver::submit`].
pub struct Driver {
    state: GameState,
    log: Vec<Event>,
    agents: Vec<Option<Box<dyn Agent>>>,
    wakes: BinaryHeap<Reverse<(Millis, u64, Wake)>>,
    commands: VecDeque<(Option<usize>, Command)>,
    now: Millis,
    seq: u64,
    steps: usize,
    rejected: usize,
    started: bool,
}

/// Result of a finished simulation.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub state: GameState,
    pub log: Vec<Event>,
    /// Commands the engine refused (races and late actions).
    pub rejected: usize,
}

impl Driver {
    /// `agents[i]` drives participant `i` of `roster`, `None` for external ones.
    pub fn new(
        game_id: &str,
        config: GameConfig,
        roster: &[RosterEntry],
        agents: Vec<Option<Box<dyn Agent>>>,
    ) -> Result<Self, SimError> {
        if agents.len() != roster.len()
            || agents.iter().enumerate().any(|(i, a)| a.as_ref().is_some_and(|a| a.id().index() != i))
        {
            return Err(SimError::Agents(alloc::format!("{} agents for {} participants", agents.len(), roster.len())));
        }
        let (state, log) = GameState::create(game_id, config, roster)?;
        Ok(Self {
            state,
            log,
            agents,
            wakes: BinaryHeap::new(),
            commands: VecDeque::new(),
            now: 0,
            seq: 0,
            steps: 0,
            rejected: 0,
            started: false,
        })
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    /// Every event so far, creation events included.
    pub fn log(&self) -> &[Event] {
        &self.log
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// Time of the earliest pending timer.
    pub fn next_wake(&self) -> Option<Millis> {
        self.wakes.peek().map(|Reverse((at, _, _))| *at)
    }

    pub fn into_outcome(self) -> SimOutcome {
        SimOutcome { state: self.state, log: self.log, rejected: self.rejected }
    }

    fn push_wake(&mut self, at: Millis, wake: Wake) {
        self.wakes.push(Reverse((at, self.seq, wake)));
        self.seq += 1;
    }

    fn collect(&mut self, index: usize, (commands, wakes): (Vec<Command>, Vec<(Millis, u64)>)) {
        for c in commands {
            self.commands.push_back((Some(index), c));
        }
        for (at, token) in wakes {
            self.push_wake(at, Wake::Agent { index, token });
        }
    }

    fn with_agent(&mut self, i: usize, f: impl FnOnce(&mut dyn Agent, &mut AgentCtx<'_>)) {
        let Some(agent) = self.agents[i].as_mut() else { return };
        let mut ctx = AgentCtx::new(self.now, ParticipantId(i as u32), &self.state);
        f(agent.as_mut(), &mut ctx);
        let parts = ctx.into_parts();
        self.collect(i, parts);
    }

    fn deliver(&mut self, event: &Event) {
        let audience = self.state.audience(event);
        for i in 0..self.agents.len() {
            if audience.includes(ParticipantId(i as u32)) {
                self.with_agent(i, |a, ctx| a.on_event(ctx, event));
            }
        }
    }

    fn accept(&mut self, events: Vec<Event>) {
        for e in events {
            self.log.push(e.clone());
            if let crate::engine::EventKind::StageChanged { to, .. } = e.kind {
                match to {
                    Stage::Stage2 => self.push_wake(self.state.config.duration_ms(), Wake::Expire),
                    Stage::Stage3 => {
                        let grace = u64::from(self.state.config.survey_grace_s) * 1000;
                        self.push_wake(self.state.config.duration_ms() + grace, Wake::Grace);
                    }
                    _ => {}
                }
            }
            self.deliver(&e);
        }
    }

    fn execute(&mut self, from: Option<usize>, command: Command) -> Result<(), SimError> {
        self.steps += 1;
        if self.steps > MAX_STEPS {
            return Err(SimError::Runaway(MAX_STEPS));
        }
        match self.state.handle(command.clone(), self.now) {
            Ok(events) => self.accept(events),
            Err(err) => {
                self.rejected += 1;
                match from {
                    Some(i) => self.with_agent(i, |a, ctx| a.on_rejected(ctx, &command, &err)),
                    None => return Err(err.into()),
                }
            }
        }
        Ok(())
    }

    fn drain(&mut self) -> Result<(), SimError> {
        while let Some((from, c)) = self.commands.pop_front() {
            self.execute(from, c)?;
        }
        Ok(())
    }

    /// Lets every agent act once at game start. Idempotent.
    pub fn start(&mut self) -> Result<(), SimError> {
        if self.started {
            return Ok(());
        }
        self.started = true;
        for i in 0..self.agents.len() {
            self.with_agent(i, |a, ctx| a.on_game_start(ctx));
        }
        self.drain()
    }

    /// Executes a command from an external participant at the current time,
    /// then lets the agents react. A refused command is returned as the
    /// engine error and changes nothing.
    pub fn submit(&mut self, command: Command) -> Result<Vec<Event>, SimError> {
        self.start()?;
        self.steps += 1;
        let events = self.state.handle(command, self.now)?;
        self.accept(events.clone());
        self.drain()?;
        Ok(events)
    }

    /// Fires the earliest pending timer. Returns `false` if there is none.
    pub fn step(&mut self) -> Result<bool, SimError> {
        self.start()?;
        let Some(Reverse((at, _, wake))) = self.wakes.pop() else {
            return Ok(false);
        };
        if self.state.stage != Stage::Stage1 {
            self.now = self.now.max(at);
        }
        match wake {
            Wake::Agent { index, token } => self.with_agent(index, |a, ctx| a.on_wake(ctx, token)),
            Wake::Expire => self.commands.push_back((None, Command::ExpireTimer)),
            Wake::Grace => {
                if self.state.stage == Stage::Stage3 {
                    self.commands.push_back((None, Command::Conclude));
                }
            }
        }
        self.drain()?;
        Ok(true)
    }

    /// Fires every timer due at or before `t`, then moves the clock to `t`.
    /// The clock stays at 0 while the game is in stage 1.
    pub fn advance_to(&mut self, t: Millis) -> Result<(), SimError> {
        self.start()?;
        while self.next_wake().is_some_and(|at| at <= t) && self.state.stage != Stage::Concluded {
            self.step()?;
        }
        if self.state.stage != Stage::Stage1 {
            self.now = self.now.max(t);
        }
        Ok(())
    }
}

/// A game where every participant is an agent.
pub struct Simulation(Driver);

impl Simulation {
    /// `agents[i]` must drive participant `i` of `roster`.
    pub fn new(
        game_id: &str,
        config: GameConfig,
        roster: &[RosterEntry],
        agents: Vec<Box<dyn Agent>>,
    ) -> Result<Self, SimError> {
        Ok(Self(Driver::new(game_id, config, roster, agents.into_iter().map(Some).collect())?))
    }

    pub fn state(&self) -> &GameState {
        self.0.state()
    }

    /// Runs the game to its conclusion.
    pub fn run(mut self) -> Result<SimOutcome, SimError> {
        self.0.start()?;
        while self.0.state.stage != Stage::Concluded {
            if !self.0.step()? {
                return Err(SimError::Stalled(self.0.state.stage));
            }
        }
        Ok(self.0.into_outcome())
    }
}

/// What drives the bots and scripted humans of simulated games.
#[derive(Clone)]
pub struct SimSetup {
    pub models: Arc<ModelPool>,
    pub model_mix: Vec<ModelWeight>,
    pub templates: Arc<PromptTemplates>,
    pub timing: BotTiming,
    pub human: HumanScript,
}

impl SimSetup {
    /// Stub-backed setup: every model in `models` gets equal weight.
    pub fn new(models: Arc<ModelPool>, templates: Arc<PromptTemplates>) -> Self {
        let model_mix = models.names().map(|n| ModelWeight { name: n.to_string(), weight: 1.0 }).collect();
        Self { models, model_mix, templates, timing: BotTiming::default(), human: HumanScript::default() }
    }
}

/// Two scripted models sharing `scripts`, standing in for a real model mix.
pub fn stub_pool(scripts: StubScripts) -> Arc<ModelPool> {
    Arc::new(
        ModelPool::new(1)
            .with("stub-a", Arc::new(ScriptedModel::new("stub-a", scripts.clone())))
            .with("stub-b", Arc::new(ScriptedModel::new("stub-b", scripts))),
    )
}

/// Seed of game `index` in a batch started from `seed`.
pub fn game_seed(seed: u64, index: u32) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(index) + 1);
    rng.random()
}

/// Roster and agents for the condition's default roster, drawn from the
/// game seed. Humans get a scripted agent when `script_humans` is set and
/// are left to be driven from outside otherwise.
pub fn build_participants(
    config: &GameConfig,
    setup: &SimSetup,
    script_humans: bool,
) -> Result<(Vec<RosterEntry>, Vec<Option<Box<dyn Agent>>>), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let kinds = config.condition.default_roster(config.roster_size);
    let mut roster = Vec::with_capacity(kinds.len());
    let mut agents: Vec<Option<Box<dyn Agent>>> = Vec::with_capacity(kinds.len());
    for (i, kind) in kinds.into_iter().enumerate() {
        let id = ParticipantId(i as u32);
        match kind {
            ParticipantKind::Bot => {
                let init = instantiate_bot(config, &setup.model_mix, &mut rng).map_err(SimError::Setup)?;
                roster.push(RosterEntry { kind, persona: Some(init.config.persona) });
                agents.push(Some(Box::new(BotAgent::new(
                    id,
                    init,
                    setup.timing,
                    setup.models.clone(),
                    setup.templates.clone(),
                ))));
            }
            ParticipantKind::Human => {
                roster.push(RosterEntry::from(kind));
                let seed: u64 = rng.random();
                agents.push(
                    script_humans.then(|| Box::new(ScriptedHuman::new(id, setup.human.clone(), seed)) as Box<dyn Agent>),
                );
            }
        }
    }
    Ok((roster, agents))
}

/// Builds and runs one game with bots and scripted humans per the condition's
/// default roster.
pub fn simulate_game(game_id: &str, mut config: GameConfig, setup: &SimSetup) -> Result<SimOutcome, SimError> {
    config.clock_mode = crate::domain::ClockMode::Virtual;
    let (roster, agents) = build_participants(&config, setup, true)?;
    let mut driver = Driver::new(game_id, config, &roster, agents)?;
    driver.start()?;
    while driver.state.stage != Stage::Concluded {
        if !driver.step()? {
            return Err(SimError::Stalled(driver.state.stage));
        }
    }
    Ok(driver.into_outcome())
}

#[cfg(test)]
mod tests;
