//! Runtime configuration read from a TOML file. Secrets never appear in the
//! file: endpoints name the environment variable holding their key.

use std::path::{Path, PathBuf};

use consensus_core::domain::{BudgetRange, ClockMode};
use consensus_core::{Condition, GameConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEndpoint {
    pub name: String,
    /// Chat-completion URL.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn one() -> f64 {
    1.0
}

fn default_timeout() -> u64 {
    30
}

fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameDefaults {
    pub duration_s: u32,
    pub survey_grace_s: u32,
    pub budget_bot_only: BudgetRange,
    pub budget_bot_human: BudgetRange,
}

impl Default for GameDefaults {
    fn default() -> Self {
        let g = GameConfig::new(Condition::BotOnly, 0);
        Self {
            duration_s: g.duration_s,
            survey_grace_s: g.survey_grace_s,
            budget_bot_only: g.budget_bot_only,
            budget_bot_human: g.budget_bot_human,
        }
    }
}

impl GameDefaults {
    pub fn game_config(&self, condition: Condition, seed: u64, clock: ClockMode) -> GameConfig {
        let mut g = GameConfig::new(condition, seed);
        g.duration_s = self.duration_s;
        g.survey_grace_s = self.survey_grace_s;
        g.budget_bot_only = self.budget_bot_only;
        g.budget_bot_human = self.budget_bot_human;
        g.clock_mode = clock;
        g
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LobbySettings {
    pub bot_human_minimum: usize,
    pub human_only_minimum: usize,
    /// Seeds the subset draw when a slot is oversubscribed.
    pub seed: u64,
}

impl Default for LobbySettings {
    fn default() -> Self {
        Self { bot_human_minimum: 3, human_only_minimum: 6, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeConfig {
    #[serde(default = "default_port")]
    pub listen_port: u16,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default = "default_clock")]
    pub clock: ClockMode,
    /// Environment variable holding the operator key. Without it operator
    /// endpoints are open.
    #[serde(default)]
    pub operator_key_env: Option<String>,
    /// Scripted stub responses; used instead of `models` when set.
    #[serde(default)]
    pub stub_dir: Option<PathBuf>,
    #[serde(default)]
    pub models: Vec<ModelEndpoint>,
    #[serde(default)]
    pub game: GameDefaults,
    #[serde(default)]
    pub lobby: LobbySettings,
}

fn default_port() -> u16 {
    8080
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

fn default_clock() -> ClockMode {
    ClockMode::Real
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            listen_port: default_port(),
            data_dir: default_data_dir(),
            clock: default_clock(),
            operator_key_env: None,
            stub_dir: None,
            models: Vec::new(),
            game: GameDefaults::default(),
            lobby: LobbySettings::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn valid_env_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

impl RuntimeConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let cfg: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.data_dir.as_os_str().is_empty() {
            return bad("data_dir is empty".into());
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("model names must be unique".into());
        }
        for m in &self.models {
            if m.name.is_empty() || m.model.is_empty() {
                return bad("model entries need a name and a model id".into());
            }
            if !(m.weight.is_finite() && m.weight > 0.0) {
                return bad(format!("model {} has weight {}", m.name, m.weight));
            }
            match reqwest::Url::parse(&m.endpoint) {
                Ok(u) if matches!(u.scheme(), "http" | "https") => {}
                _ => return bad(format!("model {} has invalid endpoint {:?}", m.name, m.endpoint)),
            }
            if m.timeout_s == 0 {
                return bad(format!("model {} has a zero timeout", m.name));
            }
            if let Some(env) = &m.api_key_env {
                if !valid_env_name(env) {
                    return bad(format!("model {}: {env:?} is not an environment variable name", m.name));
                }
            }
        }
        if let Some(env) = &self.operator_key_env {
            if !valid_env_name(env) {
                return bad(format!("{env:?} is not an environment variable name"));
            }
        }
        if self.lobby.bot_human_minimum == 0 || self.lobby.human_only_minimum == 0 {
            return bad("lobby minimums must be positive".into());
        }
        self.game
            .game_config(Condition::BotHuman, 0, self.clock)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Value of the operator key, read from the environment.
    pub fn operator_key(&self) -> Result<Option<String>, ConfigError> {
        match &self.operator_key_env {
            None => Ok(None),
            Some(env) => std::env::var(env)
                .map(Some)
                .map_err(|_| ConfigError::Invalid(format!("operator key variable {env} is not set"))),
        }
    }
}
