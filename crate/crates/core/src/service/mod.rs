//! HTTP service for live games of one human against four agents.
//!
//! | method | path                        | body / query                              |
//! |--------|-----------------------------|-------------------------------------------|
//! | POST   | `/games`                    | `{agents?, seed?, human_seat?, tom_checkpoint?}` |
//! | GET    | `/games/{id}/state`         |                                           |
//! | GET    | `/games/{id}/events`        | `?since=<seq>&timeout_ms=<ms>`            |
//! | POST   | `/games/{id}/night-choice`  | a night choice, e.g. `{"kind": "view", "target": 2}` |
//! | POST   | `/games/{id}/statement`     | `{text, face, tone}`                      |
//! | POST   | `/games/{id}/vote`          | `{target}`                                |
//! | GET    | `/games/{id}/beliefs`       | debug builds of the server only           |
//!
//! Every route under `/games/{id}` needs the `x-seat-token` header returned
//! by `POST /games`. Errors are `{code, message}` with a matching status.
//! The event feed long-polls: with nothing newer than `since` it waits up to
//! `timeout_ms` (default 15000, at most 60000) and then returns `[]`.

mod session;

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{Mutex, Notify};

use crate::action::{ActionSpace, ActionTriplet, EmotionLabel};
use crate::agents::llm::{llm_perceive, ChatBackend};
use crate::agents::AgentKind;
use crate::driver::AgentSetup;
use crate::game::{GameError, NightChoice, Phase, PlayerId};
use crate::planner::MctsConfig;
use crate::tom::checkpoint::load_checkpoint;
use crate::tom::{BeliefMatrix, ModelParams};

pub use session::{Awaiting, SeatInfo, Session, StateView, Step, WireEvent, WireKind};

pub const TOKEN_HEADER: &str = "x-seat-token";
const DEFAULT_POLL_MS: u64 = 15_000;
const MAX_POLL_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status: status.as_u16(), code: code.into(), message: message.into() }
    }

    pub fn bad_config(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_config", message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn bad_token() -> Self {
        Self::new(StatusCode::FORBIDDEN, "bad_token", "missing or unknown seat token")
    }

    fn unknown_game(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_game", format!("no game {id}"))
    }
}

impl From<GameError> for ApiError {
    fn from(e: GameError) -> Self {
        let code = match &e {
            GameError::WrongPhase { .. } => "wrong_phase",
            GameError::OutOfTurn { .. } => "out_of_turn",
            GameError::SelfVote(_) => "self_vote",
            GameError::DoubleVote(_) => "double_vote",
            GameError::AlreadyActed(_) => "already_acted",
            GameError::IllegalChoice { .. } => "illegal_choice",
            GameError::UnknownPlayer(_) | GameError::InvalidStatement(_) | GameError::MissingChoice(_) => {
                return Self::bad_request(e.to_string())
            }
            GameError::InvalidConfig(_) => return Self::bad_config(e.to_string()),
        };
        Self::new(StatusCode::CONFLICT, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

#[derive(Clone, Default)]
pub struct ServiceConfig {
    /// Enables `GET /games/{id}/beliefs`.
    pub debug: bool,
    /// Belief model for MultiMind seats when a request names no checkpoint.
    pub model: Option<Arc<ModelParams>>,
    pub mcts: MctsConfig,
    pub llm: Option<Arc<dyn ChatBackend>>,
    /// Finished games are appended here as game-log lines.
    pub game_log: Option<PathBuf>,
}

struct Cell {
    session: Mutex<Session>,
    changed: Notify,
}

#[derive(Clone)]
struct AppState {
    config: Arc<ServiceConfig>,
    games: Arc<RwLock<HashMap<String, Arc<Cell>>>>,
}

impl AppState {
    fn cell(&self, id: &str) -> Result<Arc<Cell>, ApiError> {
        self.games.read().expect("game table lock").get(id).cloned().ok_or_else(|| ApiError::unknown_game(id))
    }
}

fn token(headers: &HeaderMap) -> Option<&str> {
    headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok())
}

pub fn router(config: ServiceConfig) -> Router {
    let state = AppState { config: Arc::new(config), games: Arc::default() };
    Router::new()
        .route("/games", post(create_game))
        .route("/games/{id}/state", get(get_state))
        .route("/games/{id}/events", get(get_events))
        .route("/games/{id}/night-choice", post(post_night_choice))
        .route("/games/{id}/statement", post(post_statement))
        .route("/games/{id}/vote", post(post_vote))
        .route("/games/{id}/beliefs", get(get_beliefs))
        .with_state(state)
}

/// Serves on an already bound listener until the task is dropped.
pub async fn serve_on(listener: tokio::net::TcpListener, config: ServiceConfig) -> std::io::Result<()> {
    axum::serve(listener, router(config)).await
}

pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    serve_on(listener, config).await
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    agents: Option<Vec<String>>,
    seed: Option<u64>,
    human_seat: Option<usize>,
    tom_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct CreateResponse {
    game_id: String,
    seat_token: String,
    human_seat: PlayerId,
    phase: Phase,
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("bad request body: {e}")))
}

async fn create_game(State(app): State<AppState>, body: axum::body::Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: CreateRequest = if body.is_empty() { CreateRequest::default() } else { parse_body(&body)? };
    let model = match &req.tom_checkpoint {
        Some(path) => Some(Arc::new(
            load_checkpoint(path).map_err(|e| ApiError::bad_config(format!("cannot load checkpoint: {e}")))?,
        )),
        None => app.config.model.clone(),
    };
    let kinds: Vec<AgentKind> = match &req.agents {
        Some(names) => names
            .iter()
            .map(|s| AgentKind::from_str(s).map_err(ApiError::bad_config))
            .collect::<Result<_, _>>()?,
        None => {
            let first = if model.is_some() { AgentKind::MultiMind } else { AgentKind::Scripted };
            vec![first, AgentKind::Scripted, AgentKind::Scripted, AgentKind::Scripted]
        }
    };
    let setup = AgentSetup { model, mcts: app.config.mcts.clone(), llm: app.config.llm.clone() };
    let seed = req.seed.unwrap_or_else(rand::random);
    let human = PlayerId(req.human_seat.unwrap_or(0));
    let id = uuid::Uuid::new_v4().simple().to_string();
    let token = uuid::Uuid::new_v4().simple().to_string();
    let session = tokio::task::spawn_blocking({
        let (id, token) = (id.clone(), token.clone());
        move || Session::new(id, token, human, &kinds, seed, &setup)
    })
    .await
    .map_err(|e| ApiError::bad_config(e.to_string()))??;
    let phase = session.state.phase;
    let cell = Arc::new(Cell { session: Mutex::new(session), changed: Notify::new() });
    app.games.write().expect("game table lock").insert(id.clone(), cell.clone());
    drive(app.clone(), cell);
    Ok((StatusCode::CREATED, Json(CreateResponse { game_id: id, seat_token: token, human_seat: human, phase })))
}

/// Runs agent turns until the human must act. At most one driver runs per
/// session; agents plan without holding the session lock.
fn drive(app: AppState, cell: Arc<Cell>) {
    tokio::spawn(async move {
        {
            let mut s = cell.session.lock().await;
            if s.driving {
                return;
            }
            s.driving = true;
        }
        loop {
            let step = {
                let mut s = cell.session.lock().await;
                let step = s.next_step();
                if matches!(step, Step::Idle) {
                    s.driving = false;
                    maybe_log(&app, &s);
                }
                step
            };
            cell.changed.notify_waiters();
            let (player, mut agent) = match step {
                Step::Idle => return,
                Step::Speak(p, a) => (p, a),
            };
            let joined = tokio::task::spawn_blocking(move || {
                let said = agent.speak();
                (agent, said)
            })
            .await;
            let (agent, said) = match joined {
                Ok(r) => r,
                Err(e) => {
                    log::error!("agent task for {player} died: {e}");
                    return;
                }
            };
            cell.session.lock().await.finish_speak(player, agent, said);
            cell.changed.notify_waiters();
        }
    });
}

fn maybe_log(app: &AppState, s: &Session) {
    let Some(path) = &app.config.game_log else { return };
    if s.state.phase != Phase::Finished {
        return;
    }
    let line = match serde_json::to_string(&s.state.to_log()) {
        Ok(l) => l,
        Err(e) => return log::error!("cannot serialize game log: {e}"),
    };
    let written = OpenOptions::new().create(true).append(true).open(path).and_then(|mut f| writeln!(f, "{line}"));
    if let Err(e) = written {
        log::error!("cannot append to {}: {e}", path.display());
    }
}

async fn get_state(State(app): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> Result<Json<StateView>, ApiError> {
    let cell = app.cell(&id)?;
    let s = cell.session.lock().await;
    s.check_token(token(&headers))?;
    Ok(Json(s.view()))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: u64,
    timeout_ms: Option<u64>,
}

async fn get_events(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Json<Vec<WireEvent>>, ApiError> {
    let cell = app.cell(&id)?;
    let wait = Duration::from_millis(q.timeout_ms.unwrap_or(DEFAULT_POLL_MS).min(MAX_POLL_MS));
    let deadline = tokio::time::Instant::now() + wait;
    loop {
        let notified = cell.changed.notified();
        {
            let s = cell.session.lock().await;
            s.check_token(token(&headers))?;
            let events = s.events_since(q.since);
            if !events.is_empty() {
                return Ok(Json(events));
            }
        }
        if tokio::time::timeout_at(deadline, notified).await.is_err() {
            return Ok(Json(Vec::new()));
        }
    }
}

async fn post_night_choice(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let choice: NightChoice = parse_body(&body)?;
    let cell = app.cell(&id)?;
    {
        let mut s = cell.session.lock().await;
        s.check_token(token(&headers))?;
        s.submit_night_choice(choice)?;
    }
    cell.changed.notify_waiters();
    drive(app, cell);
    Ok(Json(json!({ "accepted": choice })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatementRequest {
    text: String,
    face: String,
    tone: String,
}

#[derive(Debug, Serialize)]
struct StatementAck {
    t: usize,
    triplets: Vec<ActionTriplet>,
    degraded: bool,
}

fn label(s: &str, field: &str) -> Result<EmotionLabel, ApiError> {
    EmotionLabel::from_str(s).map_err(|_| ApiError::bad_request(format!("unknown {field} label {s:?}")))
}

async fn post_statement(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Result<Json<StatementAck>, ApiError> {
    let req: StatementRequest = parse_body(&body)?;
    let (face, tone) = (label(&req.face, "face")?, label(&req.tone, "tone")?);
    let cell = app.cell(&id)?;
    let (human, n) = {
        let mut s = cell.session.lock().await;
        s.check_token(token(&headers))?;
        if s.awaiting() != Some(Awaiting::Statement) {
            return Err(s.submit_statement(req.text, Vec::new(), face, tone).expect_err("not the human's turn"));
        }
        (s.human, s.state.num_players())
    };
    let (triplets, degraded) = match app.config.llm.clone() {
        Some(backend) => {
            let text = req.text.clone();
            let p = tokio::task::spawn_blocking(move || llm_perceive(&text, human, n, backend.as_ref()))
                .await
                .map_err(|e| ApiError::bad_request(e.to_string()))?;
            (p.triplets, p.degraded)
        }
        None => (ActionSpace::new(n).parse(&req.text, human), false),
    };
    let (t, triplets) = {
        let mut s = cell.session.lock().await;
        let triplets = s.submit_statement(req.text, triplets, face, tone)?;
        (s.state.dialogue.len() - 1, triplets)
    };
    cell.changed.notify_waiters();
    drive(app, cell);
    Ok(Json(StatementAck { t, triplets, degraded }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VoteRequest {
    target: usize,
}

async fn post_vote(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let req: VoteRequest = parse_body(&body)?;
    let cell = app.cell(&id)?;
    let voter = {
        let mut s = cell.session.lock().await;
        s.check_token(token(&headers))?;
        s.submit_vote(PlayerId(req.target))?;
        s.human
    };
    cell.changed.notify_waiters();
    drive(app, cell);
    Ok(Json(json!({ "voter": voter, "target": req.target })))
}

#[derive(Debug, Serialize)]
struct BeliefResponse {
    seat: PlayerId,
    belief: BeliefMatrix,
}

async fn get_beliefs(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<BeliefResponse>, ApiError> {
    if !app.config.debug {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "debug_disabled", "belief inspection is disabled on this server"));
    }
    let cell = app.cell(&id)?;
    let s = cell.session.lock().await;
    s.check_token(token(&headers))?;
    if !s.has_belief_agent() {
        return Err(ApiError::new(StatusCode::CONFLICT, "no_belief_agent", "no MultiMind seat in this game"));
    }
    let (seat, belief) = s
        .belief()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "busy", "the MultiMind seat is planning; retry"))?;
    Ok(Json(BeliefResponse { seat, belief }))
}
