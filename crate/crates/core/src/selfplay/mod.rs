//! Self-play corpus generation for the belief model.
//!
//! Each dataset line is one game ([`DatasetRecord`]):
//!
//! | field         | content                                                        |
//! |---------------|----------------------------------------------------------------|
//! | `game_id`     | index of the game within the run                               |
//! | `seed`        | game seed (deal, night and agent streams derive from it)       |
//! | `num_players` | seats                                                          |
//! | `events`      | `(subject, predicate, object, face, tone)` tokens in order      |
//! | `statements`  | per statement: speaker, text, labels, token span, reports      |
//! | `targets`     | `{index, belief}`: ground truth at statement-final tokens      |
//! | `metadata`    | source, dealt and final roles, agent kinds, outcome            |
//!
//! A target's belief is [`gt_belief`] of the reports stored on its
//! statement, so the validator can recompute it.

mod human;
mod split;
mod validate;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionTriplet, EmotionLabel};
use crate::agents::llm::ChatBackend;
use crate::agents::{AgentKind, SuspicionReport};
use crate::driver::{play_game, sample_seating, AgentSetup, PlayedGame};
use crate::game::{GameConfig, Outcome, PlayerId, Role};
use crate::rng::derive_seed;
use crate::tom::{statement_tokens, BeliefMatrix, EventToken, Target, TrainingSample};

pub use human::{ingest_human_format, HumanIngest, SegmentIssue};
pub use split::{split_dataset, SplitSpec};
pub use validate::{check_record, validate_dataset, ValidationReport, Violation};

#[derive(Debug, Error)]
pub enum SelfplayError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("report from {reporter} names player {player}, out of range for {num_players} players")]
    OutOfRange { reporter: usize, player: usize, num_players: usize },
    #[error("expected one report per player: {0}")]
    Reports(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("too few games to split: {games} games give {train} train and {val} validation")]
    TooFewGames { games: usize, train: usize, val: usize },
    #[error("{0}")]
    Schema(String),
}

/// Ground-truth belief from one report per player: `1/|S_i|` on each
/// suspected player, or `1/|P|` on every column (self included) when `S_i`
/// is empty.
pub fn gt_belief(reports: &[SuspicionReport], num_players: usize) -> Result<BeliefMatrix, SelfplayError> {
    if reports.len() != num_players {
        return Err(SelfplayError::Reports(format!("{} reports for {num_players} players", reports.len())));
    }
    let mut m = BeliefMatrix::zeros(num_players);
    let mut seen = vec![false; num_players];
    for r in reports {
        let i = r.reporter.index();
        if i >= num_players {
            return Err(SelfplayError::OutOfRange { reporter: i, player: i, num_players });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(SelfplayError::Reports(format!("two reports from player {i}")));
        }
        if let Some(bad) = r.suspected.iter().find(|p| p.index() >= num_players) {
            return Err(SelfplayError::OutOfRange { reporter: i, player: bad.index(), num_players });
        }
        let mut set: Vec<usize> = r.suspected.iter().map(|p| p.index()).collect();
        set.sort_unstable();
        set.dedup();
        if set.is_empty() {
            m.row_mut(i).fill(1.0 / num_players as f64);
        } else {
            let w = 1.0 / set.len() as f64;
            for j in set {
                m.set(i, j, w);
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementRecord {
    pub t: usize,
    pub speaker: PlayerId,
    pub text: String,
    pub face: EmotionLabel,
    pub tone: EmotionLabel,
    /// First token of this statement in `events`.
    pub first_token: usize,
    pub num_tokens: usize,
    /// Every player's report right after this statement.
    pub reports: Vec<SuspicionReport>,
}

impl StatementRecord {
    /// Index of the statement-final token, if the statement has any.
    pub fn final_token(&self) -> Option<usize> {
        (self.num_tokens > 0).then(|| self.first_token + self.num_tokens - 1)
    }
}

/// One statement before tokenization.
struct Spoken {
    speaker: PlayerId,
    text: String,
    triplets: Vec<ActionTriplet>,
    face: EmotionLabel,
    tone: EmotionLabel,
    reports: Vec<SuspicionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    /// `selfplay` or `human`.
    pub source: String,
    #[serde(default)]
    pub roles: Vec<Role>,
    #[serde(default)]
    pub final_roles: Vec<Role>,
    #[serde(default)]
    pub agents: Vec<AgentKind>,
    #[serde(default)]
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub game_id: u64,
    pub seed: u64,
    pub num_players: usize,
    pub events: Vec<EventToken>,
    pub statements: Vec<StatementRecord>,
    pub targets: Vec<Target>,
    pub metadata: RecordMetadata,
}

impl DatasetRecord {
    pub fn to_sample(&self) -> TrainingSample {
        TrainingSample { tokens: self.events.clone(), targets: self.targets.clone() }
    }

    fn from_parts(
        game_id: u64,
        seed: u64,
        num_players: usize,
        statements: impl IntoIterator<Item = Spoken>,
        metadata: RecordMetadata,
    ) -> Result<Self, SelfplayError> {
        let mut events = Vec::new();
        let mut records = Vec::new();
        let mut targets = Vec::new();
        for (t, Spoken { speaker, text, triplets, face, tone, reports }) in statements.into_iter().enumerate() {
            let first_token = events.len();
            events.extend(statement_tokens(&triplets, face, tone));
            let rec = StatementRecord { t, speaker, text, face, tone, first_token, num_tokens: triplets.len(), reports };
            if let Some(index) = rec.final_token() {
                targets.push(Target { index, belief: gt_belief(&rec.reports, num_players)? });
            }
            records.push(rec);
        }
        Ok(Self { game_id, seed, num_players, events, statements: records, targets, metadata })
    }

    /// Builds the record of a game played with reports collected.
    pub fn from_game(game_id: u64, game: &PlayedGame) -> Result<Self, SelfplayError> {
        let s = &game.state;
        if game.reports.len() != s.dialogue.len() {
            return Err(SelfplayError::Reports(format!(
                "{} report rounds for {} statements",
                game.reports.len(),
                s.dialogue.len()
            )));
        }
        let metadata = RecordMetadata {
            source: "selfplay".into(),
            roles: s.initial_cards.clone(),
            final_roles: s.current_cards.clone(),
            agents: game.kinds.clone(),
            outcome: s.outcome.clone(),
        };
        let statements = s
            .dialogue
            .iter()
            .zip(&game.reports)
            .map(|(e, r)| Spoken {
                speaker: e.speaker,
                text: e.text.clone(),
                triplets: e.triplets.clone(),
                face: e.face,
                tone: e.tone,
                reports: r.clone(),
            });
        Self::from_parts(game_id, s.config.rng_seed, s.num_players(), statements, metadata)
    }
}

/// Reads every record of a dataset file, failing on the first bad line.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, SelfplayError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l).map_err(|e| SelfplayError::Schema(format!("{}:{}: {e}", path.display(), k + 1)))
        })
        .collect()
}

pub fn read_samples(path: &Path) -> Result<Vec<TrainingSample>, SelfplayError> {
    Ok(read_dataset(path)?.iter().map(DatasetRecord::to_sample).collect())
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<(), SelfplayError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Which agents fill the seats of self-play games.
#[derive(Clone)]
pub struct AgentMix {
    /// Each seat draws uniformly from this pool.
    pub pool: Vec<AgentKind>,
    /// Endpoint for language-model agents; they play scripted without one.
    pub llm: Option<Arc<dyn ChatBackend>>,
}

impl AgentMix {
    pub fn scripted() -> Self {
        Self { pool: vec![AgentKind::Scripted], llm: None }
    }
}

impl std::fmt::Debug for AgentMix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentMix").field("pool", &self.pool).field("llm", &self.llm.is_some()).finish()
    }
}

#[derive(Debug, Clone)]
pub struct SelfplayConfig {
    pub n_games: usize,
    pub seed: u64,
    pub mix: AgentMix,
    pub game: GameConfig,
}

impl SelfplayConfig {
    pub fn scripted(n_games: usize, seed: u64) -> Self {
        Self { n_games, seed, mix: AgentMix::scripted(), game: GameConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfplaySummary {
    pub games: usize,
    pub skipped: usize,
    pub statements: usize,
    pub tokens: usize,
    pub targets: usize,
}

/// Seed of game `game_id` in a run seeded with `seed`.
pub fn game_seed(seed: u64, game_id: u64) -> u64 {
    derive_seed(seed, game_id)
}

/// Plays one self-play game and returns its record.
pub fn selfplay_game(cfg: &SelfplayConfig, game_id: u64) -> Result<DatasetRecord, SelfplayError> {
    let game = GameConfig { rng_seed: game_seed(cfg.seed, game_id), ..cfg.game.clone() };
    let setup = AgentSetup { llm: cfg.mix.llm.clone(), ..AgentSetup::default() };
    let played = play_game(
        game,
        |s| setup.seat(&sample_seating(&cfg.mix.pool, s.config.rng_seed, s.num_players()), s),
        true,
    )
    .map_err(|e| SelfplayError::Schema(e.to_string()))?;
    DatasetRecord::from_game(game_id, &played)
}

const CHUNK: usize = 256;

/// Plays `n_games` games in parallel and writes their records in game-id
/// order. A game that fails is logged and skipped.
pub fn run_selfplay(cfg: &SelfplayConfig, out_path: &Path) -> Result<SelfplaySummary, SelfplayError> {
    if cfg.n_games == 0 {
        return Err(SelfplayError::Config("n_games must be >= 1".into()));
    }
    if cfg.mix.pool.is_empty() {
        return Err(SelfplayError::Config("agent pool is empty".into()));
    }
    if cfg.mix.pool.contains(&AgentKind::MultiMind) {
        return Err(SelfplayError::Config("self-play supports scripted and react agents".into()));
    }
    cfg.game.validate().map_err(|e| SelfplayError::Config(e.to_string()))?;
    let mut w = BufWriter::new(File::create(out_path)?);
    let mut summary = SelfplaySummary { games: 0, skipped: 0, statements: 0, tokens: 0, targets: 0 };
    let ids: Vec<u64> = (0..cfg.n_games as u64).collect();
    for chunk in ids.chunks(CHUNK) {
        let results: Vec<Result<DatasetRecord, SelfplayError>> =
            chunk.par_iter().map(|&id| selfplay_game(cfg, id)).collect();
        for (id, r) in chunk.iter().zip(results) {
            match r {
                Ok(rec) => {
                    summary.games += 1;
                    summary.statements += rec.statements.len();
                    summary.tokens += rec.events.len();
                    summary.targets += rec.targets.len();
                    serde_json::to_writer(&mut w, &rec)?;
                    w.write_all(b"\n")?;
                }
                Err(e) => {
                    log::warn!("skipping self-play game {id}: {e}");
                    summary.skipped += 1;
                }
            }
        }
    }
    w.flush()?;
    Ok(summary)
}
