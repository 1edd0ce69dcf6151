//! Batch simulation: runs seeded games and writes one event log per game.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use consensus_core::agent::{PromptTemplates, StubScripts};
use consensus_core::sim::{game_seed, simulate_game, stub_pool, SimSetup};
use consensus_core::{Condition, GameConfig};

use crate::eventlog::{virtual_epoch, LogWriter, WallClock};
use crate::llm::load_stub_dir;

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub condition: Condition,
    pub games: u32,
    pub seed: u64,
    pub stub_dir: Option<PathBuf>,
    pub out: PathBuf,
    /// Stamp `wall_ts` from game time so reruns are byte-identical.
    pub virtual_clock: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulatedGame {
    pub game_id: String,
    pub path: PathBuf,
    pub events: usize,
    pub conversations: usize,
    pub rejected: usize,
}

pub fn game_id(condition: Condition, seed: u64, index: u32) -> String {
    format!("{condition}-s{seed}-g{index:03}")
}

pub fn log_path(out: &Path, game_id: &str) -> PathBuf {
    out.join(format!("{game_id}.jsonl"))
}

pub fn simulate(opts: &SimulateOptions) -> anyhow::Result<Vec<SimulatedGame>> {
    if opts.games == 0 {
        anyhow::bail!("--games must be at least 1");
    }
    let scripts = match &opts.stub_dir {
        Some(d) => load_stub_dir(d).map_err(anyhow::Error::msg)?,
        None => StubScripts::default(),
    };
    let setup = SimSetup::new(stub_pool(scripts), Arc::new(PromptTemplates::default()));
    let clock = if opts.virtual_clock { WallClock::Virtual(virtual_epoch()) } else { WallClock::Real };
    std::fs::create_dir_all(&opts.out)?;
    let mut done = Vec::with_capacity(opts.games as usize);
    for i in 0..opts.games {
        let id = game_id(opts.condition, opts.seed, i);
        let config = GameConfig::new(opts.condition, game_seed(opts.seed, i));
        let outcome = simulate_game(&id, config, &setup).map_err(|e| anyhow::anyhow!("{id}: {e}"))?;
        let path = log_path(&opts.out, &id);
        let mut w = LogWriter::create(&path, &id, clock)?;
        for e in &outcome.log {
            w.append(e)?;
        }
        tracing::info!(game = %id, events = outcome.log.len(), "simulated");
        done.push(SimulatedGame {
            game_id: id,
            path,
            events: outcome.log.len(),
            conversations: outcome.state.conversations.len(),
            rejected: outcome.rejected,
        });
    }
    Ok(done)
}
