use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use consensus_core::stats::McmcConfig;
use consensus_core::Condition;
use consensus_lab::analyze::{analyze, load_games, write_outputs, AnalyzeOptions};
use consensus_lab::config::RuntimeConfig;
use consensus_lab::server::{serve, AppState};
use consensus_lab::simulate::{simulate, SimulateOptions};

#[derive(Parser)]
#[command(name = "consensus-lab", version, about = "Run, simulate and analyze consensus games")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Start the game service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run seeded games with stub models and write their event logs.
    Simulate {
        #[arg(long, value_parser = parse_condition)]
        condition: Condition,
        #[arg(long, default_value_t = 1)]
        games: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory of stub script overrides.
        #[arg(long)]
        stub_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Derive wall timestamps from game time for byte-identical reruns.
        #[arg(long)]
        virtual_clock: bool,
    },
    /// Replay event logs and write the analysis report.
    Analyze {
        #[arg(long)]
        logs: PathBuf,
        /// Report path.
        #[arg(long)]
        out: PathBuf,
        /// Also write CSV tables into this directory.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        chains: usize,
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Skip the hierarchical models.
        #[arg(long)]
        no_models: bool,
    },
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    Condition::parse(s).ok_or_else(|| format!("expected one of human-only, bot-human, bot-only; got {s:?}"))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Cmd::Serve { config } => {
            let cfg = RuntimeConfig::load(&config)?;
            let state = Arc::new(AppState::from_config(cfg)?);
            for g in state.recovered().values() {
                tracing::info!(game = %g.game_id, stage = ?g.stage, "found existing log");
            }
            tokio::runtime::Runtime::new()?.block_on(serve(state))
        }
        Cmd::Simulate { condition, games, seed, stub_dir, out, virtual_clock } => {
            let done = simulate(&SimulateOptions { condition, games, seed, stub_dir, out, virtual_clock })?;
            for g in done {
                println!("{}\t{} events\t{} conversations\t{}", g.game_id, g.events, g.conversations, g.path.display());
            }
            Ok(())
        }
        Cmd::Analyze { logs, out, csv, chains, iterations, seed, no_models } => {
            let (games, load_warnings) = load_games(&logs)?;
            let opts = AnalyzeOptions { mcmc: McmcConfig { chains, iterations, warmup: None, seed }, fit_models: !no_models };
            let (mut report, tables) = analyze(&games, &opts);
            if !load_warnings.is_empty() {
                report.warnings.splice(0..0, load_warnings);
                report.status = consensus_lab::analyze::Status::Warning;
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let written = write_outputs(&report, &tables, &out, csv.as_deref())?;
            println!("{} games analyzed, {} files written", games.len(), written.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
