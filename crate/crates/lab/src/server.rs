//! Game service: lobby, per-game login, participant state over HTTP and a
//! WebSocket stream of audience-filtered events.
//!
//! Every frame a participant receives names others by username only; ids,
//! kinds and personas stay on the server.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use consensus_core::agent::PromptTemplates;
use consensus_core::domain::{ClockMode, PerceivedConfidence, PersonalConfidence};
use consensus_core::engine::{Audience, Demographics, Event, EventKind, Millis, ParticipantId};
use consensus_core::sim::{build_participants, Driver, SimError, SimSetup};
use consensus_core::{Command, Condition, GameState, ParticipantKind, Stage};
use rand::distr::{Alphanumeric, SampleString};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast;

use crate::config::RuntimeConfig;
use crate::eventlog::{log_files, read_log, replay, virtual_epoch, LogError, LogWriter, WallClock};
use crate::llm::build_pool;

const TICK_EVERY: Duration = Duration::from_secs(1);
/// Real-clock timer frames go out every this many ticks.
const TIMER_FRAME_TICKS: u32 = 5;

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, code: code.into(), message: message.into() }
    }

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} not found"))
    }

    fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid credentials")
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Engine(e) => Self::new(StatusCode::CONFLICT, e.code(), e.to_string()),
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        Self::internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Pushed to stream subscribers of one game.
#[derive(Debug, Clone)]
enum Push {
    Events(Arc<Vec<(Audience, Event)>>),
    Tick { remaining_ms: Millis, stage: Stage },
}

#[derive(Debug, Clone, Serialize)]
pub struct Credential {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lobby_token: Option<String>,
    pub username: String,
    pub password: String,
    #[serde(skip)]
    participant: ParticipantId,
}

struct GameHandle {
    driver: Driver,
    writer: LogWriter,
    written: usize,
    credentials: Vec<Credential>,
    sessions: HashMap<String, ParticipantId>,
    launched: Instant,
    stage2_at: Option<Instant>,
}

impl GameHandle {
    /// Logs the events produced since the last call and hands them to the
    /// stream subscribers.
    fn flush(&mut self, tx: &broadcast::Sender<Push>, clock: ClockMode) -> Result<(), LogError> {
        let fresh: Vec<Event> = self.driver.log()[self.written..].to_vec();
        for e in &fresh {
            self.writer.append(e)?;
        }
        self.written += fresh.len();
        if clock == ClockMode::Real && self.stage2_at.is_none() && self.driver.state().stage != Stage::Stage1 {
            self.stage2_at = Some(Instant::now());
        }
        if !fresh.is_empty() {
            let state = self.driver.state();
            let batch = fresh.into_iter().map(|e| (state.audience(&e), e)).collect();
            // no subscribers is fine
            let _ = tx.send(Push::Events(Arc::new(batch)));
        }
        Ok(())
    }

    /// Real clock: fires every timer that is due by now.
    fn sync_clock(&mut self) -> Result<(), SimError> {
        match self.driver.state().stage {
            Stage::Concluded => Ok(()),
            Stage::Stage1 => {
                let t = self.launched.elapsed().as_millis() as Millis;
                while self.driver.state().stage == Stage::Stage1 && self.driver.next_wake().is_some_and(|w| w <= t) {
                    self.driver.step()?;
                }
                Ok(())
            }
            _ => {
                let base = *self.stage2_at.get_or_insert_with(Instant::now);
                self.driver.advance_to(base.elapsed().as_millis() as Millis)
            }
        }
    }
}

pub struct GameSlot {
    game_id: String,
    condition: Condition,
    clock: ClockMode,
    handle: Mutex<GameHandle>,
    tx: broadcast::Sender<Push>,
}

impl GameSlot {
    fn lock(&self) -> MutexGuard<'_, GameHandle> {
        self.handle.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Runs `f` against the game, then persists and publishes what it produced.
    fn with<T>(&self, f: impl FnOnce(&mut GameHandle) -> Result<T, SimError>) -> ApiResult<T> {
        let mut h = self.lock();
        if self.clock == ClockMode::Real {
            let synced = h.sync_clock();
            h.flush(&self.tx, self.clock)?;
            synced?;
        }
        let out = f(&mut h);
        h.flush(&self.tx, self.clock)?;
        Ok(out?)
    }
}

/// A game found in the data directory at startup. Its log is intact but no
/// live driver exists for it.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveredGame {
    pub game_id: String,
    pub condition: Condition,
    pub stage: Stage,
    pub events: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LobbyStatus {
    Waiting { position: usize },
    Assigned { game_id: String, username: String, password: String },
}

#[derive(Default)]
struct Lobby {
    /// Slot -> tokens in sign-up order.
    waiting: BTreeMap<String, Vec<String>>,
    assigned: HashMap<(String, String), LobbyStatus>,
}

pub struct AppState {
    pub config: RuntimeConfig,
    operator_key: Option<String>,
    setup: SimSetup,
    lobby: Mutex<Lobby>,
    games: Mutex<BTreeMap<String, Arc<GameSlot>>>,
    recovered: BTreeMap<String, RecoveredGame>,
    counter: Mutex<u64>,
}

impl AppState {
    /// Builds the service state and replays any logs already in the data
    /// directory.
    pub fn new(config: RuntimeConfig, operator_key: Option<String>, setup: SimSetup) -> anyhow::Result<Self> {
        std::fs::create_dir_all(&config.data_dir)?;
        let mut recovered = BTreeMap::new();
        for path in log_files(&config.data_dir)? {
            let log = read_log(&path)?;
            let state = replay(&log).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            if state.stage != Stage::Concluded {
                tracing::warn!(game = %state.game_id, stage = ?state.stage, "recovered game was interrupted");
            }
            recovered.insert(
                state.game_id.clone(),
                RecoveredGame {
                    game_id: state.game_id.clone(),
                    condition: state.config.condition,
                    stage: state.stage,
                    events: log.records.len(),
                    warnings: log.warnings.clone(),
                },
            );
        }
        Ok(Self {
            config,
            operator_key,
            setup,
            lobby: Mutex::new(Lobby::default()),
            games: Mutex::new(BTreeMap::new()),
            recovered,
            counter: Mutex::new(0),
        })
    }

    /// State for `config`, with models from its endpoints or stub directory.
    pub fn from_config(config: RuntimeConfig) -> anyhow::Result<Self> {
        let key = config.operator_key()?;
        let (models, mix) = build_pool(&config).map_err(anyhow::Error::msg)?;
        let mut setup = SimSetup::new(models, Arc::new(PromptTemplates::default()));
        setup.model_mix = mix;
        Self::new(config, key, setup)
    }

    pub fn recovered(&self) -> &BTreeMap<String, RecoveredGame> {
        &self.recovered
    }

    fn game(&self, id: &str) -> ApiResult<Arc<GameSlot>> {
        self.games.lock().unwrap_or_else(|p| p.into_inner()).get(id).cloned().ok_or_else(|| ApiError::not_found("game"))
    }

    fn check_operator(&self, headers: &HeaderMap) -> ApiResult<()> {
        match &self.operator_key {
            None => Ok(()),
            Some(k) if headers.get("x-operator-key").and_then(|v| v.to_str().ok()) == Some(k.as_str()) => Ok(()),
            Some(_) => Err(ApiError::unauthorized()),
        }
    }

    fn log_path(&self, game_id: &str) -> PathBuf {
        self.config.data_dir.join(format!("{game_id}.jsonl"))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "ok": true })) }))
        .route("/lobby/signup", post(signup))
        .route("/lobby/{slot}/{token}", get(lobby_status))
        .route("/games", post(launch).get(list_games))
        .route("/games/{id}/login", post(login))
        .route("/games/{id}/state", get(view))
        .route("/games/{id}/actions", post(action))
        .route("/games/{id}/exit-survey", post(exit_survey))
        .route("/games/{id}/advance", post(advance))
        .route("/games/{id}/stream", get(stream))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>) -> anyhow::Result<()> {
    let addr = SocketAddr::from(([0, 0, 0, 0], state.config.listen_port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Debug, Deserialize)]
struct SignupRequest {
    slot: String,
    token: String,
}

async fn signup(State(app): State<Arc<AppState>>, Json(req): Json<SignupRequest>) -> ApiResult<impl IntoResponse> {
    if req.slot.is_empty() || req.token.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "slot and token are required"));
    }
    let mut lobby = app.lobby.lock().unwrap_or_else(|p| p.into_inner());
    let key = (req.slot.clone(), req.token.clone());
    let queue = lobby.waiting.entry(req.slot.clone()).or_default();
    if queue.contains(&req.token) {
        return Err(ApiError::new(StatusCode::CONFLICT, "duplicate_signup", "token already signed up for this slot"));
    }
    queue.push(req.token);
    let position = queue.len();
    if lobby.assigned.contains_key(&key) {
        lobby.waiting.get_mut(&req.slot).map(Vec::pop);
        return Err(ApiError::new(StatusCode::CONFLICT, "duplicate_signup", "token already assigned a game"));
    }
    Ok((StatusCode::CREATED, Json(json!({ "slot": req.slot, "position": position }))))
}

async fn lobby_status(
    State(app): State<Arc<AppState>>,
    Path((slot, token)): Path<(String, String)>,
) -> ApiResult<Json<LobbyStatus>> {
    let lobby = app.lobby.lock().unwrap_or_else(|p| p.into_inner());
    if let Some(s) = lobby.assigned.get(&(slot.clone(), token.clone())) {
        return Ok(Json(s.clone()));
    }
    lobby
        .waiting
        .get(&slot)
        .and_then(|q| q.iter().position(|t| *t == token))
        .map(|i| Json(LobbyStatus::Waiting { position: i + 1 }))
        .ok_or_else(|| ApiError::not_found("sign-up"))
}

#[derive(Debug, Deserialize)]
struct LaunchRequest {
    condition: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    slot: Option<String>,
    #[serde(default)]
    game_id: Option<String>,
}

#[derive(Debug, Serialize)]
struct LaunchResponse {
    game_id: String,
    condition: Condition,
    credentials: Vec<Credential>,
    /// Sign-ups left waiting in the slot.
    deferred: usize,
}

fn valid_game_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

async fn launch(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<LaunchRequest>,
) -> ApiResult<impl IntoResponse> {
    app.check_operator(&headers)?;
    let condition = Condition::parse(&req.condition)
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "bad_condition", format!("unknown condition {:?}", req.condition)))?;
    let game_id = match req.game_id.clone() {
        Some(id) => id,
        None => {
            let mut n = app.counter.lock().unwrap_or_else(|p| p.into_inner());
            *n += 1;
            format!("{condition}-{:04}-s{}", *n, req.seed)
        }
    };
    if !valid_game_id(&game_id) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_game_id", "game ids use letters, digits, - and _"));
    }
    if app.games.lock().unwrap_or_else(|p| p.into_inner()).contains_key(&game_id)
        || app.recovered.contains_key(&game_id)
        || app.log_path(&game_id).exists()
    {
        return Err(ApiError::new(StatusCode::CONFLICT, "game_exists", format!("game {game_id} already exists")));
    }
    let app2 = app.clone();
    let (slot, resp) = blocking(move || start_game(&app2, condition, req, game_id)).await?;
    if slot.clock == ClockMode::Real && slot.lock().driver.state().stage != Stage::Concluded {
        tokio::spawn(run_ticker(slot));
    }
    Ok((StatusCode::CREATED, Json(resp)))
}

fn start_game(
    app: &AppState,
    condition: Condition,
    req: LaunchRequest,
    game_id: String,
) -> ApiResult<(Arc<GameSlot>, LaunchResponse)> {
    let clock = app.config.clock;
    let config = app.config.game.game_config(condition, req.seed, clock);
    let (roster, agents) = build_participants(&config, &app.setup, false)?;
    let humans: Vec<ParticipantId> =
        (0..roster.len()).filter(|&i| roster[i].kind == ParticipantKind::Human).map(|i| ParticipantId(i as u32)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(app.config.lobby.seed ^ req.seed.rotate_left(17));

    // Pick the participants before anything irreversible happens.
    let mut picked: Vec<String> = Vec::new();
    let mut deferred = 0;
    if !humans.is_empty() {
        let minimum = match condition {
            Condition::BotHuman => app.config.lobby.bot_human_minimum,
            _ => app.config.lobby.human_only_minimum,
        }
        .max(humans.len());
        let slot = req
            .slot
            .as_ref()
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "slot_required", "games with humans need a lobby slot"))?;
        let mut lobby = app.lobby.lock().unwrap_or_else(|p| p.into_inner());
        let queue = lobby.waiting.get(slot).cloned().unwrap_or_default();
        if queue.len() < minimum {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "not_enough_signups",
                format!("slot {slot} has {} sign-ups, {minimum} needed", queue.len()),
            ));
        }
        let mut idx = sample(&mut rng, queue.len(), humans.len()).into_vec();
        idx.sort_unstable();
        picked = idx.iter().map(|&i| queue[i].clone()).collect();
        let rest: Vec<String> = queue.into_iter().filter(|t| !picked.contains(t)).collect();
        deferred = rest.len();
        lobby.waiting.insert(slot.clone(), rest);
    }

    let mut driver = Driver::new(&game_id, config, &roster, agents)?;
    let wall = match clock {
        ClockMode::Virtual => WallClock::Virtual(virtual_epoch()),
        ClockMode::Real => WallClock::Real,
    };
    let writer = LogWriter::create(&app.log_path(&game_id), &game_id, wall)?;
    let credentials: Vec<Credential> = humans
        .iter()
        .zip(picked.iter().map(Some).chain(std::iter::repeat(None)))
        .map(|(&p, token)| Credential {
            lobby_token: token.cloned(),
            username: driver.state().roster[p.index()].username.clone(),
            password: Alphanumeric.sample_string(&mut rng, 12),
            participant: p,
        })
        .collect();
    if let Some(slot) = &req.slot {
        let mut lobby = app.lobby.lock().unwrap_or_else(|p| p.into_inner());
        for c in &credentials {
            if let Some(t) = &c.lobby_token {
                lobby.assigned.insert(
                    (slot.clone(), t.clone()),
                    LobbyStatus::Assigned { game_id: game_id.clone(), username: c.username.clone(), password: c.password.clone() },
                );
            }
        }
    }
    driver.start()?;
    if humans.is_empty() && clock == ClockMode::Virtual {
        while driver.state().stage != Stage::Concluded {
            if !driver.step()? {
                return Err(SimError::Stalled(driver.state().stage).into());
            }
        }
    }
    let (tx, _) = broadcast::channel(1024);
    let handle = GameHandle {
        driver,
        writer,
        written: 0,
        credentials: credentials.clone(),
        sessions: HashMap::new(),
        launched: Instant::now(),
        stage2_at: None,
    };
    let slot = Arc::new(GameSlot { game_id: game_id.clone(), condition, clock, handle: Mutex::new(handle), tx });
    slot.lock().flush(&slot.tx, clock)?;
    app.games.lock().unwrap_or_else(|p| p.into_inner()).insert(game_id.clone(), slot.clone());
    tracing::info!(game = %game_id, %condition, "launched");
    Ok((slot, LaunchResponse { game_id, condition, credentials, deferred }))
}

async fn run_ticker(slot: Arc<GameSlot>) {
    let mut interval = tokio::time::interval(TICK_EVERY);
    let mut n = 0u32;
    loop {
        interval.tick().await;
        n += 1;
        let s = slot.clone();
        let r = blocking(move || {
            s.with(|_| Ok(()))?;
            let h = s.lock();
            Ok((h.driver.state().stage, h.driver.state().remaining_ms()))
        })
        .await;
        match r {
            Ok((stage, remaining_ms)) => {
                if n % TIMER_FRAME_TICKS == 0 {
                    let _ = slot.tx.send(Push::Tick { remaining_ms, stage });
                }
                if stage == Stage::Concluded {
                    break;
                }
            }
            Err(e) => {
                tracing::error!(game = %slot.game_id, error = %e.message, "clock tick failed");
                break;
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct GameListing {
    game_id: String,
    condition: Condition,
    stage: Stage,
    live: bool,
}

async fn list_games(State(app): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Json<Vec<GameListing>>> {
    app.check_operator(&headers)?;
    let games: Vec<Arc<GameSlot>> = app.games.lock().unwrap_or_else(|p| p.into_inner()).values().cloned().collect();
    let mut out: Vec<GameListing> = app
        .recovered
        .values()
        .map(|r| GameListing { game_id: r.game_id.clone(), condition: r.condition, stage: r.stage, live: false })
        .collect();
    for g in games {
        let stage = g.lock().driver.state().stage;
        out.push(GameListing { game_id: g.game_id.clone(), condition: g.condition, stage, live: true });
    }
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct LoginRequest {
    username: String,
    password: String,
}

async fn login(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<LoginRequest>,
) -> ApiResult<Json<Value>> {
    let slot = app.game(&id)?;
    let mut h = slot.lock();
    let p = h
        .credentials
        .iter()
        .find(|c| c.username == req.username && c.password == req.password)
        .map(|c| c.participant)
        .ok_or_else(ApiError::unauthorized)?;
    let token = format!("{:032x}", rand::rng().random::<u128>());
    h.sessions.insert(token.clone(), p);
    Ok(Json(json!({ "token": token, "username": req.username })))
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers.get("authorization")?.to_str().ok()?.strip_prefix("Bearer ")
}

fn session(slot: &GameSlot, token: Option<&str>) -> ApiResult<ParticipantId> {
    let token = token.ok_or_else(ApiError::unauthorized)?;
    slot.lock().sessions.get(token).copied().ok_or_else(ApiError::unauthorized)
}

fn state_frame(state: &GameState, me: ParticipantId) -> Value {
    json!({ "type": "state", "view": state.participant_view(me) })
}

async fn view(State(app): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Json<Value>> {
    let slot = app.game(&id)?;
    let me = session(&slot, bearer(&headers))?;
    let s = slot.clone();
    blocking(move || {
        if s.clock == ClockMode::Real {
            s.with(|_| Ok(()))?;
        }
        Ok(Json(json!(s.lock().driver.state().participant_view(me))))
    })
    .await
}

/// Participant actions, identical over HTTP and the stream.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientAction {
    SubmitInitialOpinion { opinion: String, confidence: PersonalConfidence },
    SendInvite { to: String },
    RespondInvite { from: String, accept: bool },
    PostMessage { text: String },
    Terminate,
    SubmitReevaluation { new_opinion: String, personal_confidence: PersonalConfidence, perceived_confidence: PerceivedConfidence },
}

fn resolve(state: &GameState, name: &str) -> Result<ParticipantId, SimError> {
    state
        .by_username(name)
        .map(|p| p.id)
        .ok_or_else(|| SimError::Engine(consensus_core::EngineError::UnknownUsername(name.to_string())))
}

fn engaged(state: &GameState, me: ParticipantId) -> Result<consensus_core::engine::ConversationId, SimError> {
    state.participants[me.index()].engaged.ok_or(SimError::Engine(consensus_core::EngineError::WrongStage { stage: state.stage }))
}

fn to_command(state: &GameState, me: ParticipantId, action: ClientAction) -> Result<Command, SimError> {
    Ok(match action {
        ClientAction::SubmitInitialOpinion { opinion, confidence } => {
            Command::SubmitInitialOpinion { participant: me, opinion, confidence }
        }
        ClientAction::SendInvite { to } => Command::SendInvite { from: me, to: resolve(state, &to)? },
        ClientAction::RespondInvite { from, accept } => Command::RespondInvite { to: me, from: resolve(state, &from)?, accept },
        ClientAction::PostMessage { text } => Command::PostMessage { conversation: engaged(state, me)?, sender: me, text },
        ClientAction::Terminate => Command::TerminateConversation { conversation: engaged(state, me)?, by: me },
        ClientAction::SubmitReevaluation { new_opinion, personal_confidence, perceived_confidence } => {
            Command::SubmitReevaluation {
                conversation: engaged(state, me)?,
                participant: me,
                new_opinion,
                personal_confidence,
                perceived_confidence,
            }
        }
    })
}

fn perform(slot: &GameSlot, me: ParticipantId, action: ClientAction) -> ApiResult<Value> {
    slot.with(|h| {
        let cmd = to_command(h.driver.state(), me, action)?;
        h.driver.submit(cmd)?;
        Ok(())
    })?;
    Ok(json!(slot.lock().driver.state().participant_view(me)))
}

async fn action(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(act): Json<ClientAction>,
) -> ApiResult<Json<Value>> {
    let slot = app.game(&id)?;
    let me = session(&slot, bearer(&headers))?;
    blocking(move || perform(&slot, me, act)).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct SurveyRequest {
    most_convincing: String,
    least_convincing: String,
    #[serde(default)]
    demographics: Option<Demographics>,
    #[serde(default)]
    payment: Option<String>,
}

async fn exit_survey(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(req): Json<SurveyRequest>,
) -> ApiResult<Json<Value>> {
    let slot = app.game(&id)?;
    let me = session(&slot, bearer(&headers))?;
    blocking(move || {
        slot.with(|h| {
            h.driver.submit(Command::SubmitExitSurvey {
                participant: me,
                most_convincing: req.most_convincing,
                least_convincing: req.least_convincing,
                demographics: req.demographics,
                payment: req.payment,
            })
        })?;
        Ok(Json(json!({ "reveal": slot.lock().driver.state().reveal_text(me) })))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct AdvanceRequest {
    #[serde(default)]
    to_ms: Option<Millis>,
    #[serde(default)]
    by_ms: Option<Millis>,
}

async fn advance(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(req): Json<AdvanceRequest>,
) -> ApiResult<Json<Value>> {
    app.check_operator(&headers)?;
    let slot = app.game(&id)?;
    if slot.clock != ClockMode::Virtual {
        return Err(ApiError::new(StatusCode::CONFLICT, "real_clock", "only virtual-clock games are advanced by hand"));
    }
    blocking(move || {
        slot.with(|h| {
            let now = h.driver.now();
            let to = match (req.to_ms, req.by_ms) {
                (Some(t), None) => t,
                (None, Some(d)) => now + d,
                _ => return Err(SimError::Setup("give exactly one of to_ms and by_ms".into())),
            };
            h.driver.advance_to(to.max(now))
        })
        .map_err(|e| if e.status == StatusCode::INTERNAL_SERVER_ERROR { ApiError { status: StatusCode::BAD_REQUEST, ..e } } else { e })?;
        let h = slot.lock();
        let st = h.driver.state();
        let _ = slot.tx.send(Push::Tick { remaining_ms: st.remaining_ms(), stage: st.stage });
        Ok(Json(json!({ "clock_ms": h.driver.now(), "stage": st.stage, "remaining_ms": st.remaining_ms() })))
    })
    .await
}

/// The frame `me` receives for `event`, if any.
pub fn client_frame(state: &GameState, me: ParticipantId, audience: &Audience, event: &Event) -> Option<Value> {
    if !audience.includes(me) {
        return None;
    }
    let name = |p: &ParticipantId| state.roster.get(p.index()).map(|r| r.username.clone());
    let at = event.at_ms;
    Some(match &event.kind {
        EventKind::StageChanged { from, to } => json!({ "type": "stage_changed", "from": from, "to": to, "at_ms": at }),
        EventKind::InitialOpinion { opinion, confidence, .. } => {
            json!({ "type": "initial_opinion", "opinion": opinion, "confidence": confidence })
        }
        EventKind::InviteSent { from, to } => json!({ "type": "invite_sent", "from": name(from), "to": name(to) }),
        EventKind::InviteResponded { from, to, accepted } => {
            json!({ "type": "invite_responded", "from": name(from), "to": name(to), "accepted": accepted })
        }
        EventKind::ConversationStarted { conversation, participants } => {
            let partner = participants.iter().find(|p| **p != me)?;
            json!({ "type": "conversation_started", "conversation": conversation, "partner": name(partner), "at_ms": at })
        }
        EventKind::MessagePosted { conversation, sender, text } => {
            json!({ "type": "message_posted", "conversation": conversation, "sender": name(sender), "text": text, "at_ms": at })
        }
        EventKind::ConversationTerminated { conversation, by } => {
            json!({ "type": "conversation_terminated", "conversation": conversation, "by": name(by), "at_ms": at })
        }
        EventKind::ConversationExpired { conversation } => {
            json!({ "type": "conversation_expired", "conversation": conversation, "at_ms": at })
        }
        EventKind::Reevaluation { conversation, new_opinion, personal_confidence, perceived_confidence, .. } => json!({
            "type": "reevaluation",
            "conversation": conversation,
            "new_opinion": new_opinion,
            "personal_confidence": personal_confidence,
            "perceived_confidence": perceived_confidence,
        }),
        EventKind::ExitSurvey(_) => json!({ "type": "exit_survey_received" }),
        EventKind::GameCreated { .. }
        | EventKind::ParticipantJoined(_)
        | EventKind::ScoresComputed(_)
        | EventKind::AgentDiagnostic(_) => return None,
    })
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    token: String,
}

async fn stream(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let slot = app.game(&id)?;
    let me = session(&slot, Some(&q.token))?;
    Ok(ws.on_upgrade(move |socket| stream_session(socket, slot, me)))
}

async fn send(socket: &mut WebSocket, v: &Value) -> bool {
    socket.send(WsMessage::Text(v.to_string().into())).await.is_ok()
}

async fn stream_session(mut socket: WebSocket, slot: Arc<GameSlot>, me: ParticipantId) {
    let mut rx = slot.tx.subscribe();
    let first = state_frame(slot.lock().driver.state(), me);
    if !send(&mut socket, &first).await {
        return;
    }
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(WsMessage::Text(t))) => t,
                    Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match serde_json::from_str::<ClientAction>(&text) {
                    Err(e) => Some(json!({ "type": "error", "code": "bad_request", "message": e.to_string() })),
                    Ok(act) => {
                        let s = slot.clone();
                        match blocking(move || perform(&s, me, act)).await {
                            Ok(_) => None,
                            Err(e) => Some(json!({ "type": "error", "code": e.code, "message": e.message })),
                        }
                    }
                };
                if let Some(r) = reply {
                    if !send(&mut socket, &r).await {
                        break;
                    }
                }
            }
            push = rx.recv() => {
                let frames = match push {
                    Ok(Push::Events(batch)) => {
                        let h = slot.lock();
                        let state = h.driver.state();
                        let mut frames: Vec<Value> =
                            batch.iter().filter_map(|(a, e)| client_frame(state, me, a, e)).collect();
                        if batch.iter().any(|(_, e)| matches!(e.kind, EventKind::StageChanged { .. })) {
                            frames.push(state_frame(state, me));
                        }
                        frames
                    }
                    Ok(Push::Tick { remaining_ms, stage }) => {
                        vec![json!({ "type": "timer", "remaining_ms": remaining_ms, "stage": stage })]
                    }
                    Err(broadcast::error::RecvError::Lagged(_)) => vec![state_frame(slot.lock().driver.state(), me)],
                    Err(broadcast::error::RecvError::Closed) => break,
                };
                for f in &frames {
                    if !send(&mut socket, f).await {
                        return;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use consensus_core::engine::ConversationId;

    #[test]
    fn frames_name_people_and_respect_audience() {
        let cfg = consensus_core::GameConfig::new(Condition::BotHuman, 3);
        let (mut state, _) = GameState::create(
            "g",
            cfg,
            &Condition::BotHuman.default_roster(6).into_iter().map(Into::into).collect::<Vec<_>>(),
        )
        .unwrap();
        state.stage = Stage::Stage2;
        let (a, b) = (ParticipantId(0), ParticipantId(4));
        let e = Event::new(5, EventKind::ConversationStarted { conversation: ConversationId(0), participants: [a, b] });
        let aud = Audience::Only(vec![a, b]);
        let f = client_frame(&state, a, &aud, &e).unwrap();
        assert_eq!(f["partner"], state.roster[4].username);
        assert!(client_frame(&state, ParticipantId(1), &aud, &e).is_none());
        let d = Event::new(5, EventKind::AgentDiagnostic(consensus_core::engine::Diagnostic {
            participant: Some(b),
            conversation: None,
            code: "budget".into(),
            detail: "14".into(),
        }));
        assert!(client_frame(&state, a, &Audience::Everyone, &d).is_none());
    }

    #[test]
    fn actions_parse() {
        let a: ClientAction = serde_json::from_str(r#"{"type":"send_invite","to":"Birch"}"#).unwrap();
        assert!(matches!(a, ClientAction::SendInvite { .. }));
        let a: ClientAction = serde_json::from_str(
            r#"{"type":"submit_reevaluation","new_opinion":"vegan","personal_confidence":3,"perceived_confidence":0}"#,
        )
        .unwrap();
        assert!(matches!(a, ClientAction::SubmitReevaluation { .. }));
        assert!(serde_json::from_str::<ClientAction>(r#"{"type":"submit_initial_opinion","opinion":"x","confidence":9}"#).is_err());
    }
}
