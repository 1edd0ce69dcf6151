//! Language-model access: the client interface, weighted model mixing with
//! bounded retries, and the deterministic scripted stub.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{lines, prompt::strip_comments, weighted_index, ModelWeight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Reply,
    Farewell,
    NaturalEnd,
    Referee,
    Summary,
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Reply => 1,
            Purpose::Farewell => 2,
            Purpose::NaturalEnd => 3,
            Purpose::Referee => 4,
            Purpose::Summary => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: ChatRole,
    pub content: String,
}

/// Everything a client needs for one completion. `vars`, `seed` and `turn`
/// are only read by the scripted stub.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub purpose: Purpose,
    pub system: String,
    pub transcript: Vec<ChatTurn>,
    /// Sent as a final user message after the transcript.
    pub instruction: Option<String>,
    pub vars: BTreeMap<String, String>,
    pub seed: u64,
    pub turn: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("timed out")]
    Timeout,
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("no model named {0}")]
    Unknown(String),
}

pub trait LanguageModel: Send + Sync {
    /// Identity used in logs.
    fn label(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> Result<String, ModelError>;
}

/// Result of one pooled completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub model: String,
    pub attempts: u32,
    pub text: Result<String, ModelError>,
}

/// Named models shared by every bot of a runtime.
#[derive(Clone, Default)]
pub struct ModelPool {
    models: Vec<(String, Arc<dyn LanguageModel>)>,
    /// Extra attempts after the first failure.
    pub retries: u32,
}

impl core::fmt::Debug for ModelPool {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let names: Vec<&str> = self.models.iter().map(|(n, _)| n.as_str()).collect();
        f.debug_struct("ModelPool").field("models", &names).field("retries", &self.retries).finish()
    }
}

impl ModelPool {
    pub fn new(retries: u32) -> Self {
        Self { models: Vec::new(), retries }
    }

    pub fn with(mut self, name: &str, model: Arc<dyn LanguageModel>) -> Self {
        self.models.push((name.to_string(), model));
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.models.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn LanguageModel>> {
        self.models.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Picks a model from `mix` with a seeded weighted draw.
    pub fn pick<'m, R: Rng + ?Sized>(mix: &'m [ModelWeight], rng: &mut R) -> &'m str {
        let weights: Vec<f64> = mix.iter().map(|m| m.weight).collect();
        &mix[weighted_index(&weights, rng)].name
    }

    pub fn complete<R: Rng + ?Sized>(
        &self,
        mix: &[ModelWeight],
        request: &CompletionRequest,
        rng: &mut R,
    ) -> Completion {
        let name = Self::pick(mix, rng).to_string();
        let Some(model) = self.get(&name) else {
            return Completion { text: Err(ModelError::Unknown(name.clone())), model: name, attempts: 0 };
        };
        let mut attempts = 0;
        loop {
            attempts += 1;
            match model.complete(request) {
                Ok(text) if !text.trim().is_empty() => {
                    return Completion { model: name, attempts, text: Ok(text) };
                }
                Ok(_) => {
                    if attempts > self.retries {
                        let err = ModelError::BadResponse("empty completion".into());
                        return Completion { model: name, attempts, text: Err(err) };
                    }
                }
                Err(e) => {
                    if attempts > self.retries {
                        return Completion { model: name, attempts, text: Err(e) };
                    }
                }
            }
        }
    }
}

const STUB_REPLIES: &str = include_str!("../../data/stub/replies.txt");
const STUB_FAREWELLS: &str = include_str!("../../data/stub/farewells.txt");
const STUB_SUMMARIES: &str = include_str!("../../data/stub/summaries.txt");
const STUB_REFEREE: &str = include_str!("../../data/stub/referee.txt");
const STUB_REFEREE_SUGGESTIBLE: &str = include_str!("../../data/stub/referee-suggestible.txt");
const STUB_REFEREE_STUBBORN: &str = include_str!("../../data/stub/referee-stubborn.txt");

fn script_lines(src: &str) -> Vec<String> {
    strip_comments(src).lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

/// Canned responses for the scripted stub. `turns` holds exact overrides
/// keyed by (seed, turn).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubScripts {
    pub replies: Vec<String>,
    pub farewells: Vec<String>,
    pub summaries: Vec<String>,
    /// Keyed by personality (`suggestible`, `regular`, `stubborn`); `default` is the fallback.
    pub referee: BTreeMap<String, Vec<String>>,
    pub turns: BTreeMap<(u64, u32), String>,
}

impl Default for StubScripts {
    fn default() -> Self {
        let mut referee = BTreeMap::new();
        referee.insert("default".to_string(), script_lines(STUB_REFEREE));
        referee.insert("suggestible".to_string(), script_lines(STUB_REFEREE_SUGGESTIBLE));
        referee.insert("stubborn".to_string(), script_lines(STUB_REFEREE_STUBBORN));
        Self {
            replies: script_lines(STUB_REPLIES),
            farewells: script_lines(STUB_FAREWELLS),
            summaries: script_lines(STUB_SUMMARIES),
            referee,
            turns: BTreeMap::new(),
        }
    }
}

impl StubScripts {
    /// Replaces a script list from a file in the shipped format. `name` is
    /// the file stem: `replies`, `farewells`, `summaries`, `referee` or
    /// `referee-<personality>`.
    pub fn load(&mut self, name: &str, src: &str) -> bool {
        let lines = script_lines(src);
        match name {
            "replies" => self.replies = lines,
            "farewells" => self.farewells = lines,
            "summaries" => self.summaries = lines,
            "referee" => {
                self.referee.insert("default".into(), lines);
            }
            other => match other.strip_prefix("referee-") {
                Some(p) => {
                    self.referee.insert(p.to_string(), lines);
                }
                None => return false,
            },
        }
        true
    }

    /// Registers an exact response for (seed, turn) from a file named `<seed>-<turn>`.
    pub fn load_turn(&mut self, stem: &str, src: &str) -> bool {
        let Some((s, t)) = stem.split_once('-') else { return false };
        match (s.parse(), t.parse()) {
            (Ok(seed), Ok(turn)) => {
                self.turns.insert((seed, turn), strip_comments(src));
                true
            }
            _ => false,
        }
    }

    /// Every line the stub can produce, for content checks.
    pub fn all_lines(&self) -> impl Iterator<Item = &String> {
        self.replies
            .iter()
            .chain(&self.farewells)
            .chain(&self.summaries)
            .chain(self.referee.values().flatten())
            .chain(self.turns.values())
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn render(template: &str, vars: &BTreeMap<String, String>) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&alloc::format!("{{{k}}}"), v);
    }
    out
}

/// Deterministic model that replays canned responses. The response is a
/// pure function of (seed, turn, purpose) and the request variables.
#[derive(Debug, Clone, Default)]
pub struct ScriptedModel {
    pub label: String,
    pub scripts: StubScripts,
}

impl ScriptedModel {
    pub fn new(label: &str, scripts: StubScripts) -> Self {
        Self { label: label.to_string(), scripts }
    }

    fn choose<'s>(&self, list: &'s [String], req: &CompletionRequest) -> Option<&'s String> {
        if list.is_empty() {
            return None;
        }
        let h = splitmix(req.seed ^ splitmix(u64::from(req.turn) ^ (req.purpose.code() << 40)));
        Some(&list[(h % list.len() as u64) as usize])
    }
}

impl LanguageModel for ScriptedModel {
    fn label(&self) -> &str {
        &self.label
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, ModelError> {
        if let Some(text) = self.scripts.turns.get(&(req.seed, req.turn)) {
            return Ok(render(text, &req.vars));
        }
        let empty = || ModelError::BadResponse("no script lines".into());
        let text = match req.purpose {
            Purpose::Reply => self.choose(&self.scripts.replies, req).ok_or_else(empty)?,
            Purpose::Farewell => self.choose(&self.scripts.farewells, req).ok_or_else(empty)?,
            Purpose::Summary => self.choose(&self.scripts.summaries, req).ok_or_else(empty)?,
            Purpose::Referee => {
                let key = req.vars.get("personality").map(String::as_str).unwrap_or("default");
                let list = self
                    .scripts
                    .referee
                    .get(key)
                    .filter(|l| !l.is_empty())
                    .or_else(|| self.scripts.referee.get("default"))
                    .ok_or_else(empty)?;
                self.choose(list, req).ok_or_else(empty)?
            }
            Purpose::NaturalEnd => {
                let last = req
                    .transcript
                    .iter()
                    .rev()
                    .find(|t| t.role == ChatRole::User)
                    .map(|t| crate::text::tokens(&t.content))
                    .unwrap_or_default();
                let parting = lines::PARTING_KEYWORDS.iter().any(|k| {
                    let k = crate::text::tokens(k);
                    last.windows(k.len()).any(|w| w == k.as_slice())
                });
                return Ok(if parting { "yes" } else { "no" }.to_string());
            }
        };
        Ok(render(text, &req.vars))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::sync::atomic::{AtomicU32, Ordering};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn request(purpose: Purpose, seed: u64, turn: u32) -> CompletionRequest {
        let mut vars = BTreeMap::new();
        vars.insert("own".to_string(), "vegan".to_string());
        vars.insert("partner".to_string(), "omnivorous".to_string());
        CompletionRequest {
            purpose,
            system: String::new(),
            transcript: Vec::new(),
            instruction: None,
            vars,
            seed,
            turn,
        }
    }

    struct Failing(AtomicU32);

    impl LanguageModel for Failing {
        fn label(&self) -> &str {
            "failing"
        }
        fn complete(&self, _: &CompletionRequest) -> Result<String, ModelError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Err(ModelError::Transport("connection refused".into()))
        }
    }

    #[test]
    fn stub_is_deterministic_and_renders_vars() {
        let m = ScriptedModel::new("stub", StubScripts::default());
        for turn in 0..50 {
            let a = m.complete(&request(Purpose::Reply, 3, turn)).unwrap();
            let b = m.complete(&request(Purpose::Reply, 3, turn)).unwrap();
            assert_eq!(a, b);
            assert!(!a.contains('{'), "{a}");
        }
    }

    #[test]
    fn turn_overrides_win() {
        let mut scripts = StubScripts::default();
        assert!(scripts.load_turn("3-7", "# note\nI really like {partner} food"));
        let m = ScriptedModel::new("stub", scripts);
        assert_eq!(m.complete(&request(Purpose::Reply, 3, 7)).unwrap(), "I really like omnivorous food");
    }

    #[test]
    fn natural_end_heuristic() {
        let m = ScriptedModel::new("stub", StubScripts::default());
        let mut req = request(Purpose::NaturalEnd, 1, 1);
        req.transcript.push(ChatTurn { role: ChatRole::User, content: "ok bye!".into() });
        assert_eq!(m.complete(&req).unwrap(), "yes");
        req.transcript.push(ChatTurn { role: ChatRole::User, content: "I could maybe see your side".into() });
        assert_eq!(m.complete(&req).unwrap(), "no");
        req.transcript.push(ChatTurn { role: ChatRole::User, content: "but fish has mercury".into() });
        assert_eq!(m.complete(&req).unwrap(), "no");
    }

    #[test]
    fn pool_retries_then_reports_failure() {
        let failing = Arc::new(Failing(AtomicU32::new(0)));
        let pool = ModelPool::new(2).with("f", failing.clone());
        let mix = [ModelWeight { name: "f".into(), weight: 1.0 }];
        let c = pool.complete(&mix, &request(Purpose::Reply, 0, 0), &mut ChaCha8Rng::seed_from_u64(1));
        assert!(c.text.is_err());
        assert_eq!(c.attempts, 3);
        assert_eq!(failing.0.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn pool_mix_draws_are_balanced() {
        let mix = [
            ModelWeight { name: "m1".into(), weight: 0.5 },
            ModelWeight { name: "m2".into(), weight: 0.5 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m1 = (0..1_000).filter(|_| ModelPool::pick(&mix, &mut rng) == "m1").count();
        assert!((450..=550).contains(&m1), "{m1}");
    }
}
