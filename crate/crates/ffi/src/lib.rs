//! C interface to the game engine, belief model and planner.
//!
//! Objects are opaque handles created by `onuw_*_new`, `onuw_*_init` or
//! `onuw_*_load` and released with the matching `onuw_*_free`. Every
//! fallible call returns an [`OnuwStatus`]; after a failure
//! [`onuw_last_error`] describes the cause on the calling thread. Strings
//! handed out through `char **` parameters belong to the caller and are
//! released with [`onuw_string_free`].
//!
//! Emotion labels are passed as indices: 0 happy, 1 sad, 2 neutral,
//! 3 angry, 4 surprise, 5 disgust, 6 fear, 7 other.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fmt::Display;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use onuw_core::action::{ActionSpace, EmotionLabel};
use onuw_core::agents::AgentKind;
use onuw_core::arena::{run_match, MatchSpec};
use onuw_core::driver::resolve_random_night;
use onuw_core::game::{GameConfig, GameError, GameState, Phase, PlayerId, Team};
use onuw_core::planner::{plan_tokens, MctsConfig, PlanError};
use onuw_core::tom::checkpoint::load_checkpoint;
use onuw_core::tom::{dialogue_tokens, BeliefMatrix, ModelConfig, ModelParams, TomError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnuwStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    InvalidArgument = 2,
    /// The game rules rejected the action.
    GameRule = 3,
    Io = 4,
    Model = 5,
    Planner = 6,
    /// Rust code panicked; the handle involved should be freed.
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnuwPhase {
    Night = 0,
    Discussion = 1,
    Voting = 2,
    Finished = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnuwTeam {
    Village = 0,
    Werewolf = 1,
}

/// One game in progress.
pub struct OnuwGame {
    state: GameState,
}

/// A belief model.
pub struct OnuwModel {
    params: ModelParams,
}

struct Failure {
    status: OnuwStatus,
    message: String,
}

impl Failure {
    fn new(status: OnuwStatus, message: impl Display) -> Self {
        Self { status, message: message.to_string() }
    }

    fn invalid(message: impl Display) -> Self {
        Self::new(OnuwStatus::InvalidArgument, message)
    }
}

impl From<GameError> for Failure {
    fn from(e: GameError) -> Self {
        Self::new(OnuwStatus::GameRule, e)
    }
}

impl From<TomError> for Failure {
    fn from(e: TomError) -> Self {
        let status = if matches!(e, TomError::Io(_)) { OnuwStatus::Io } else { OnuwStatus::Model };
        Self::new(status, e)
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        Self::new(OnuwStatus::Planner, e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: Option<&str>) {
    let value = message.map(|m| CString::new(m.replace('\0', " ")).expect("nul bytes removed"));
    LAST_ERROR.with(|e| *e.borrow_mut() = value);
}

fn run(f: impl FnOnce() -> Result<(), Failure>) -> OnuwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(None);
            OnuwStatus::Ok
        }
        Ok(Err(failure)) => {
            set_last_error(Some(&failure.message));
            failure.status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(Some(&format!("panic: {message}")));
            OnuwStatus::Panic
        }
    }
}

unsafe fn get_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(OnuwStatus::NullPointer, format!("{what} is null")))
}

unsafe fn get_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::new(OnuwStatus::NullPointer, format!("{what} is null")))
}

unsafe fn get_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(OnuwStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(OnuwStatus::NullPointer, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure::invalid("string contains a nul byte"))?;
    put(out, c.into_raw())
}

fn emotion(index: u8) -> Result<EmotionLabel, Failure> {
    EmotionLabel::ALL
        .get(index as usize)
        .copied()
        .ok_or_else(|| Failure::invalid(format!("emotion index {index} is out of range 0..8")))
}

fn player(state: &GameState, index: usize) -> Result<PlayerId, Failure> {
    if index < state.num_players() {
        Ok(PlayerId(index))
    } else {
        Err(Failure::invalid(format!("player {index} is out of range 0..{}", state.num_players())))
    }
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn onuw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next call into the library.
#[no_mangle]
pub extern "C" fn onuw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn onuw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Deals a new five-player game from `seed`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn onuw_game_new(seed: u64, out: *mut *mut OnuwGame) -> OnuwStatus {
    run(|| {
        let state = GameState::new(GameConfig::with_seed(seed))?;
        put(out, Box::into_raw(Box::new(OnuwGame { state })))
    })
}

/// # Safety
/// `game` must be null or a handle from [`onuw_game_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn onuw_game_free(game: *mut OnuwGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn onuw_game_num_players(game: *const OnuwGame, out: *mut usize) -> OnuwStatus {
    run(|| put(out, get_ref(game, "game")?.state.num_players()))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn onuw_game_phase(game: *const OnuwGame, out: *mut OnuwPhase) -> OnuwStatus {
    run(|| {
        let phase = match get_ref(game, "game")?.state.phase {
            Phase::Night => OnuwPhase::Night,
            Phase::Discussion { .. } => OnuwPhase::Discussion,
            Phase::Voting => OnuwPhase::Voting,
            Phase::Finished => OnuwPhase::Finished,
        };
        put(out, phase)
    })
}

/// Resolves the night with seeded uniform choices for every seat.
///
/// # Safety
/// `game` must be valid.
#[no_mangle]
pub unsafe extern "C" fn onuw_game_resolve_random_night(game: *mut OnuwGame) -> OnuwStatus {
    run(|| Ok(resolve_random_night(&mut get_mut(game, "game")?.state)?))
}

/// Seat whose turn it is to speak. Fails outside the discussion.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn onuw_game_current_speaker(game: *const OnuwGame, out: *mut usize) -> OnuwStatus {
    run(|| {
        let speaker = get_ref(game, "game")?
            .state
            .current_speaker()
            .ok_or_else(|| Failure::new(OnuwStatus::GameRule, "no speaker outside the discussion"))?;
        put(out, speaker.index())
    })
}

/// Records a statement; its intentions are parsed from `text`.
///
/// # Safety
/// `game` must be valid and `text` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn onuw_game_say(
    game: *mut OnuwGame,
    speaker: usize,
    text: *const c_char,
    face: u8,
    tone: u8,
) -> OnuwStatus {
    run(|| {
        let g = get_mut(game, "game")?;
        let text = get_str(text, "text")?;
        let speaker = player(&g.state, speaker)?;
        let triplets = ActionSpace::new(g.state.num_players()).parse(text, speaker);
        g.state.record_statement(speaker, text, triplets, emotion(face)?, emotion(tone)?)?;
        Ok(())
    })
}

/// # Safety
/// `game` must be valid.
#[no_mangle]
pub unsafe extern "C" fn onuw_game_vote(game: *mut OnuwGame, voter: usize, target: usize) -> OnuwStatus {
    run(|| {
        let g = get_mut(game, "game")?;
        let (voter, target) = (player(&g.state, voter)?, player(&g.state, target)?);
        Ok(g.state.cast_vote(voter, target)?)
    })
}

/// Winning team of a finished game.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn onuw_game_winner(game: *const OnuwGame, out: *mut OnuwTeam) -> OnuwStatus {
    run(|| {
        let outcome = get_ref(game, "game")?
            .state
            .outcome
            .as_ref()
            .ok_or_else(|| Failure::new(OnuwStatus::GameRule, "the game is not finished"))?;
        put(out, if outcome.winner == Team::Village { OnuwTeam::Village } else { OnuwTeam::Werewolf })
    })
}

/// Full game log as JSON, including hidden cards and night actions.
///
/// # Safety
/// Pointers must be valid; free the string with [`onuw_string_free`].
#[no_mangle]
pub unsafe extern "C" fn onuw_game_log_json(game: *const OnuwGame, out: *mut *mut c_char) -> OnuwStatus {
    run(|| {
        let log = get_ref(game, "game")?.state.to_log();
        put_string(out, serde_json::to_string(&log).expect("log serializes"))
    })
}

/// Loads a checkpoint directory.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn onuw_model_load(path: *const c_char, out: *mut *mut OnuwModel) -> OnuwStatus {
    run(|| {
        let params = load_checkpoint(Path::new(get_str(path, "path")?))?;
        put(out, Box::into_raw(Box::new(OnuwModel { params })))
    })
}

/// Randomly initialized five-player model, mainly for tests and benchmarks.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn onuw_model_init(
    hidden: usize,
    layers: usize,
    heads: usize,
    seed: u64,
    out: *mut *mut OnuwModel,
) -> OnuwStatus {
    run(|| {
        let config = ModelConfig { hidden, layers, heads, ..ModelConfig::default() };
        let params = ModelParams::init(config, seed, 0.02)?;
        put(out, Box::into_raw(Box::new(OnuwModel { params })))
    })
}

/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn onuw_model_free(model: *mut OnuwModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn onuw_model_num_players(model: *const OnuwModel, out: *mut usize) -> OnuwStatus {
    run(|| put(out, get_ref(model, "model")?.params.config().num_players))
}

/// Writes the belief matrix after the game's dialogue, row-major, into
/// `out[0..len]` with `len == n * n`. Before any statement the matrix is
/// uniform.
///
/// # Safety
/// Handles must be valid and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn onuw_model_belief(
    model: *const OnuwModel,
    game: *const OnuwGame,
    out: *mut f64,
    len: usize,
) -> OnuwStatus {
    run(|| {
        let params = &get_ref(model, "model")?.params;
        let state = &get_ref(game, "game")?.state;
        let n = params.config().num_players;
        if n != state.num_players() {
            return Err(Failure::invalid(format!("model is for {n} players, game has {}", state.num_players())));
        }
        if len != n * n {
            return Err(Failure::invalid(format!("buffer holds {len} values, need {}", n * n)));
        }
        if out.is_null() {
            return Err(Failure::new(OnuwStatus::NullPointer, "output buffer is null"));
        }
        let tokens = dialogue_tokens(&state.dialogue);
        let belief = match params.forward(&tokens)?.pop() {
            Some(b) => b,
            None => BeliefMatrix::uniform(n),
        };
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (i, row) in belief.rows().iter().enumerate() {
            dst[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(())
    })
}

/// Plans `agent`'s next statement after the game's dialogue with MCTS.
/// The result is JSON with `text`, `actions`, `face`, `tone` and `reward`.
///
/// # Safety
/// Handles must be valid; free the string with [`onuw_string_free`].
#[no_mangle]
pub unsafe extern "C" fn onuw_plan_json(
    model: *const OnuwModel,
    game: *const OnuwGame,
    agent: usize,
    iterations: usize,
    seed: u64,
    out: *mut *mut c_char,
) -> OnuwStatus {
    run(|| {
        let params = &get_ref(model, "model")?.params;
        let state = &get_ref(game, "game")?.state;
        let agent = player(state, agent)?;
        let cfg = MctsConfig { iterations, rng_seed: seed, ..MctsConfig::default() };
        let plan = plan_tokens(&dialogue_tokens(&state.dialogue), params, agent, &cfg)?;
        let text = ActionSpace::new(state.num_players())
            .render(&plan.actions)
            .map_err(|e| Failure::new(OnuwStatus::Planner, e))?;
        let json = serde_json::json!({
            "text": text,
            "actions": plan.actions,
            "face": plan.face,
            "tone": plan.tone,
            "reward": plan.reward,
        });
        put_string(out, json.to_string())
    })
}

/// Runs a team-mode tournament of offline agents and returns the match
/// report as JSON. Kinds are `"scripted"` or `"react"`.
///
/// # Safety
/// Strings must be nul-terminated; free the result with
/// [`onuw_string_free`].
#[no_mangle]
pub unsafe extern "C" fn onuw_simulate_json(
    games: usize,
    seed: u64,
    village_agent: *const c_char,
    werewolf_agent: *const c_char,
    out: *mut *mut c_char,
) -> OnuwStatus {
    run(|| {
        let kind = |p, what| -> Result<AgentKind, Failure> { get_str(p, what)?.parse().map_err(Failure::invalid) };
        let spec = MatchSpec::teams(games, kind(village_agent, "village_agent")?, kind(werewolf_agent, "werewolf_agent")?, seed);
        let report = run_match(&spec).map_err(Failure::invalid)?;
        put_string(out, serde_json::to_string(&report).expect("report serializes"))
    })
}
