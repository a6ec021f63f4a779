//! Plays complete headless games with a set of agents.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::agents::llm::ChatBackend;
use crate::agents::{
    random_night_choice, Agent, AgentError, AgentKind, MultiMindAgent, ReActAgent, ScriptedAgent, SuspicionReport,
};
use crate::game::{GameConfig, GameError, GameState, Phase, PlayerId};
use crate::planner::MctsConfig;
use crate::rng::{derive_seed, rng_from_seed};
use crate::tom::ModelParams;

/// Stream index of the night policy within a game seed.
pub const NIGHT_STREAM: u64 = 0x6e69_6768_74;

/// Stream index of seat `seat`'s agent within a game seed.
pub fn agent_seed(game_seed: u64, seat: usize) -> u64 {
    derive_seed(game_seed, 1000 + seat as u64)
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("agent {player} failed: {source}")]
    Agent { player: PlayerId, source: AgentError },
    #[error("agent setup failed: {0}")]
    Setup(String),
    #[error("game exceeded the cap of {0} statements")]
    StatementCap(usize),
}

#[derive(Debug, Clone)]
pub struct PlayedGame {
    pub state: GameState,
    pub kinds: Vec<AgentKind>,
    /// Every seat's report after each statement, indexed like the dialogue.
    /// Empty unless reports were requested.
    pub reports: Vec<Vec<SuspicionReport>>,
}

/// Resolves the night with independent uniform choices for every seat.
pub fn resolve_random_night(state: &mut GameState) -> Result<(), GameError> {
    let mut rng = rng_from_seed(derive_seed(state.config.rng_seed, NIGHT_STREAM));
    for p in state.players().collect::<Vec<_>>() {
        let view = state.player_view(p);
        let choice = random_night_choice(&view, &mut rng);
        state.submit_night_choice(p, choice)?;
    }
    state.resolve_pending_night()
}

/// Deals, resolves the night, then hands the post-night state to
/// `make_agents` so seats can be assigned by final team. Discussion runs in
/// seat order; every agent observes every statement.
pub fn play_game<F>(config: GameConfig, make_agents: F, collect_reports: bool) -> Result<PlayedGame, DriverError>
where
    F: FnOnce(&GameState) -> Result<Vec<Box<dyn Agent>>, DriverError>,
{
    let mut state = GameState::new(config)?;
    resolve_random_night(&mut state)?;
    let mut agents = make_agents(&state)?;
    let n = state.num_players();
    if agents.len() != n {
        return Err(DriverError::Setup(format!("{} agents for {n} seats", agents.len())));
    }
    for (seat, a) in agents.iter_mut().enumerate() {
        if a.player() != PlayerId(seat) {
            return Err(DriverError::Setup(format!("agent for seat {seat} plays {}", a.player())));
        }
        a.begin_day(&state.player_view(PlayerId(seat)));
    }
    let cap = n * state.config.discussion_rounds;
    let mut reports = Vec::new();
    while let Some(speaker) = state.current_speaker() {
        if state.dialogue.len() >= cap {
            return Err(DriverError::StatementCap(cap));
        }
        let utt = agents[speaker.index()]
            .speak()
            .map_err(|source| DriverError::Agent { player: speaker, source })?;
        let event = state.record_statement(speaker, utt.text, utt.triplets, utt.face, utt.tone)?.clone();
        for a in agents.iter_mut() {
            a.observe(&event);
        }
        if collect_reports {
            reports.push(agents.iter().map(|a| a.report()).collect());
        }
    }
    debug_assert_eq!(state.phase, Phase::Voting);
    for (seat, a) in agents.iter_mut().enumerate() {
        let target = a.vote();
        state.cast_vote(PlayerId(seat), target)?;
    }
    Ok(PlayedGame { state, kinds: agents.iter().map(|a| a.kind()).collect(), reports })
}

/// Shared resources for building agents of any kind.
#[derive(Clone, Default)]
pub struct AgentSetup {
    /// Belief model of MultiMind seats.
    pub model: Option<Arc<ModelParams>>,
    /// Planner settings of MultiMind seats; the seed is replaced per seat.
    pub mcts: MctsConfig,
    /// Chat endpoint for the language-model paths.
    pub llm: Option<Arc<dyn ChatBackend>>,
}

impl std::fmt::Debug for AgentSetup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentSetup")
            .field("model", &self.model.as_ref().map(|m| m.config().clone()))
            .field("mcts", &self.mcts)
            .field("llm", &self.llm.is_some())
            .finish()
    }
}

impl AgentSetup {
    pub fn build(&self, kind: AgentKind, player: PlayerId, num_players: usize, seed: u64) -> Result<Box<dyn Agent>, DriverError> {
        Ok(match kind {
            AgentKind::Scripted => Box::new(ScriptedAgent::new(player, num_players, seed)),
            AgentKind::ReActLlm => Box::new(ReActAgent::new(player, num_players, seed, self.llm.clone())),
            AgentKind::MultiMind => {
                let model = self
                    .model
                    .clone()
                    .ok_or_else(|| DriverError::Setup("checkpoint missing for MultiMind seats".into()))?;
                if model.config().num_players != num_players {
                    return Err(DriverError::Setup(format!(
                        "belief model is for {} players, game has {num_players}",
                        model.config().num_players
                    )));
                }
                let mcts = MctsConfig { rng_seed: seed, ..self.mcts.clone() };
                Box::new(MultiMindAgent::new(player, model, mcts, self.llm.clone()))
            }
        })
    }

    /// One agent per seat, seat `i` of kind `kinds[i]`.
    pub fn seat(&self, kinds: &[AgentKind], state: &GameState) -> Result<Vec<Box<dyn Agent>>, DriverError> {
        let n = state.num_players();
        kinds
            .iter()
            .enumerate()
            .map(|(i, &k)| self.build(k, PlayerId(i), n, agent_seed(state.config.rng_seed, i)))
            .collect()
    }
}

/// Stream index of per-seat kind sampling within a game seed.
pub const SEATING_STREAM: u64 = 999;

/// Kinds of every seat drawn i.i.d. uniformly from `pool`.
pub fn sample_seating(pool: &[AgentKind], game_seed: u64, num_players: usize) -> Vec<AgentKind> {
    let mut rng = rng_from_seed(derive_seed(game_seed, SEATING_STREAM));
    (0..num_players).map(|_| sample_kind(pool, &mut rng)).collect()
}

/// Draws a seat's agent kind uniformly from a pool.
pub fn sample_kind<R: Rng + ?Sized>(pool: &[AgentKind], rng: &mut R) -> AgentKind {
    pool[rng.random_range(0..pool.len())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::ScriptedAgent;

    fn scripted(state: &GameState) -> Result<Vec<Box<dyn Agent>>, DriverError> {
        let n = state.num_players();
        Ok((0..n)
            .map(|i| Box::new(ScriptedAgent::new(PlayerId(i), n, agent_seed(state.config.rng_seed, i))) as Box<dyn Agent>)
            .collect())
    }

    #[test]
    fn full_game_has_fifteen_statements_and_an_outcome() {
        let g = play_game(GameConfig::with_seed(4), scripted, true).unwrap();
        assert_eq!(g.state.dialogue.len(), 15);
        assert_eq!(g.reports.len(), 15);
        assert!(g.reports.iter().all(|r| r.len() == 5));
        assert_eq!(g.state.phase, Phase::Finished);
        let outcome = g.state.outcome.as_ref().unwrap();
        assert_eq!(outcome.vote_counts.iter().sum::<usize>(), 5);
        assert_eq!(g.kinds, vec![AgentKind::Scripted; 5]);
    }

    #[test]
    fn games_are_reproducible() {
        let a = play_game(GameConfig::with_seed(11), scripted, false).unwrap();
        let b = play_game(GameConfig::with_seed(11), scripted, false).unwrap();
        assert_eq!(a.state, b.state);
        assert!(a.reports.is_empty());
    }

    #[test]
    fn wrong_agent_count_is_rejected() {
        let r = play_game(GameConfig::with_seed(1), |_| Ok(Vec::new()), false);
        assert!(matches!(r, Err(DriverError::Setup(_))));
    }

    #[test]
    fn reports_follow_the_planted_rule() {
        use crate::agents::SuspicionScores;
        let g = play_game(GameConfig::with_seed(21), scripted, true).unwrap();
        for (t, reports) in g.reports.iter().enumerate() {
            for (i, r) in reports.iter().enumerate() {
                let mut s = SuspicionScores::new(PlayerId(i), 5);
                for e in &g.state.dialogue[..=t] {
                    s.observe(e.speaker, &e.triplets, e.face, e.tone);
                }
                assert_eq!(*r, s.report());
            }
        }
    }
}
