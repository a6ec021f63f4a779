//! One live game: a human seat, agent seats and the human's event feed.
//! Everything here is synchronous; the HTTP layer adds locking and
//! long-polling around it.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::action::{ActionTriplet, EmotionLabel, EMPTY_STATEMENT};
use crate::agents::{Agent, AgentError, AgentKind, Utterance};
use crate::driver::{agent_seed, AgentSetup};
use crate::game::{GameConfig, GameError, GameLog, GameState, NightChoice, Outcome, Phase, PlayerId, PlayerView};
use crate::tom::BeliefMatrix;

use super::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireKind {
    PhaseChange,
    Statement,
    YourTurn,
    VoteRecorded,
    GameOver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireEvent {
    pub seq: u64,
    pub kind: WireKind,
    pub payload: Value,
}

/// What the human seat is expected to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Awaiting {
    NightChoice,
    Statement,
    Vote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeatInfo {
    pub seat: PlayerId,
    /// `human` or an agent kind.
    pub kind: String,
}

/// The human seat's view of the game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub game_id: String,
    pub seed: u64,
    pub phase: Phase,
    pub human_seat: PlayerId,
    pub seats: Vec<SeatInfo>,
    pub you: PlayerView,
    pub dialogue: Vec<crate::action::StatementEvent>,
    pub current_speaker: Option<PlayerId>,
    pub voted: Vec<bool>,
    pub awaiting: Option<Awaiting>,
    pub legal_night_choices: Vec<NightChoice>,
    pub outcome: Option<Outcome>,
    /// Full log, revealed once the game is over.
    pub log: Option<GameLog>,
    pub last_seq: u64,
}

pub struct Session {
    pub id: String,
    pub token: String,
    pub human: PlayerId,
    kinds: Vec<Option<AgentKind>>,
    pub state: GameState,
    agents: Vec<Option<Box<dyn Agent>>>,
    events: Vec<WireEvent>,
    prompted: Option<(Awaiting, usize)>,
    pub driving: bool,
}

/// Next unit of agent work.
pub enum Step {
    Speak(PlayerId, Box<dyn Agent>),
    Idle,
}

impl Session {
    pub fn new(
        id: String,
        token: String,
        human: PlayerId,
        agent_kinds: &[AgentKind],
        seed: u64,
        setup: &AgentSetup,
    ) -> Result<Self, ApiError> {
        let config = GameConfig::with_seed(seed);
        let n = config.num_players;
        if human.index() >= n {
            return Err(ApiError::bad_config(format!("human seat {} out of range", human.index())));
        }
        if agent_kinds.len() != n - 1 {
            return Err(ApiError::bad_config(format!("need {} agent kinds, got {}", n - 1, agent_kinds.len())));
        }
        let mut kinds = Vec::with_capacity(n);
        let mut it = agent_kinds.iter();
        for i in 0..n {
            kinds.push(if i == human.index() { None } else { it.next().copied() });
        }
        let state = GameState::new(config).map_err(|e| ApiError::bad_config(e.to_string()))?;
        let mut agents = Vec::with_capacity(n);
        for (i, k) in kinds.iter().enumerate() {
            agents.push(match k {
                Some(k) => Some(
                    setup
                        .build(*k, PlayerId(i), n, agent_seed(seed, i))
                        .map_err(|e| ApiError::bad_config(e.to_string()))?,
                ),
                None => None,
            });
        }
        let mut s = Self { id, token, human, kinds, state, agents, events: Vec::new(), prompted: None, driving: false };
        s.push(WireKind::PhaseChange, json!({ "phase": s.state.phase }));
        for i in 0..n {
            if let Some(agent) = s.agents[i].as_mut() {
                let view = s.state.player_view(PlayerId(i));
                let choice = agent.decide_night(&view);
                s.state.submit_night_choice(PlayerId(i), choice).map_err(ApiError::from)?;
            }
        }
        // the human confirms even a no-op night so the game always opens at night
        let legal = s.state.legal_night_choices(human).map_err(ApiError::from)?;
        s.prompt(Awaiting::NightChoice, json!({ "options": legal }));
        Ok(s)
    }

    fn push(&mut self, kind: WireKind, payload: Value) {
        let seq = self.events.len() as u64 + 1;
        self.events.push(WireEvent { seq, kind, payload });
    }

    fn prompt(&mut self, what: Awaiting, extra: Value) {
        let key = (what, self.state.dialogue.len());
        if self.prompted == Some(key) {
            return;
        }
        self.prompted = Some(key);
        let mut payload = json!({ "action": what });
        if let (Value::Object(p), Value::Object(e)) = (&mut payload, extra) {
            p.extend(e);
        }
        self.push(WireKind::YourTurn, payload);
    }

    pub fn last_seq(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn events_since(&self, since: u64) -> Vec<WireEvent> {
        self.events.iter().filter(|e| e.seq > since).cloned().collect()
    }

    pub fn check_token(&self, token: Option<&str>) -> Result<(), ApiError> {
        match token {
            Some(t) if t == self.token => Ok(()),
            _ => Err(ApiError::bad_token()),
        }
    }

    pub fn awaiting(&self) -> Option<Awaiting> {
        match self.state.phase {
            Phase::Night if self.state.night_choices[self.human.index()].is_none() => Some(Awaiting::NightChoice),
            Phase::Discussion { .. } if self.state.current_speaker() == Some(self.human) => Some(Awaiting::Statement),
            Phase::Voting if self.state.votes[self.human.index()].is_none() => Some(Awaiting::Vote),
            _ => None,
        }
    }

    pub fn view(&self) -> StateView {
        let finished = self.state.phase == Phase::Finished;
        StateView {
            game_id: self.id.clone(),
            seed: self.state.config.rng_seed,
            phase: self.state.phase,
            human_seat: self.human,
            seats: self
                .kinds
                .iter()
                .enumerate()
                .map(|(i, k)| SeatInfo {
                    seat: PlayerId(i),
                    kind: k.map_or_else(|| "human".to_owned(), |k| k.canonical().to_owned()),
                })
                .collect(),
            you: self.state.player_view(self.human),
            dialogue: self.state.dialogue.clone(),
            current_speaker: self.state.current_speaker(),
            voted: self.state.votes.iter().map(Option::is_some).collect(),
            awaiting: self.awaiting(),
            legal_night_choices: self.state.legal_night_choices(self.human).unwrap_or_default(),
            outcome: self.state.outcome.clone(),
            log: finished.then(|| self.state.to_log()),
            last_seq: self.last_seq(),
        }
    }

    fn finish_night(&mut self) -> Result<(), ApiError> {
        self.state.resolve_pending_night().map_err(ApiError::from)?;
        for i in 0..self.state.num_players() {
            let view = self.state.player_view(PlayerId(i));
            if let Some(a) = self.agents[i].as_mut() {
                a.begin_day(&view);
            }
        }
        self.push(WireKind::PhaseChange, json!({ "phase": self.state.phase }));
        Ok(())
    }

    pub fn submit_night_choice(&mut self, choice: NightChoice) -> Result<(), ApiError> {
        self.state.submit_night_choice(self.human, choice).map_err(ApiError::from)?;
        self.finish_night()
    }

    /// Records a statement and lets every agent hear it.
    fn record(&mut self, speaker: PlayerId, text: String, triplets: Vec<ActionTriplet>, face: EmotionLabel, tone: EmotionLabel) -> Result<Vec<ActionTriplet>, ApiError> {
        let before = self.state.phase;
        let event = self.state.record_statement(speaker, text, triplets, face, tone).map_err(ApiError::from)?.clone();
        for a in self.agents.iter_mut().flatten() {
            a.observe(&event);
        }
        self.push(
            WireKind::Statement,
            json!({
                "t": event.t,
                "speaker": event.speaker,
                "text": event.text,
                "face": event.face,
                "tone": event.tone,
                "triplets": event.triplets,
            }),
        );
        if self.state.phase != before {
            self.push(WireKind::PhaseChange, json!({ "phase": self.state.phase }));
        }
        Ok(event.triplets)
    }

    /// The human's statement, already perceived into triplets.
    pub fn submit_statement(
        &mut self,
        text: String,
        triplets: Vec<ActionTriplet>,
        face: EmotionLabel,
        tone: EmotionLabel,
    ) -> Result<Vec<ActionTriplet>, ApiError> {
        if self.awaiting() != Some(Awaiting::Statement) {
            return Err(match self.state.phase {
                Phase::Discussion { .. } => ApiError::from(GameError::OutOfTurn {
                    expected: self.state.current_speaker().expect("discussion"),
                    actual: self.human,
                }),
                actual => ApiError::from(GameError::WrongPhase { expected: "discussion", actual }),
            });
        }
        self.record(self.human, text, triplets, face, tone)
    }

    pub fn submit_vote(&mut self, target: PlayerId) -> Result<(), ApiError> {
        self.state.cast_vote(self.human, target).map_err(ApiError::from)?;
        self.push(WireKind::VoteRecorded, json!({ "voter": self.human }));
        self.after_vote();
        Ok(())
    }

    fn after_vote(&mut self) {
        if self.state.phase == Phase::Finished {
            let outcome = self.state.outcome.clone().expect("finished");
            self.push(
                WireKind::GameOver,
                json!({
                    "outcome": outcome,
                    "votes": self.state.votes,
                    "initial_cards": self.state.initial_cards,
                    "final_cards": self.state.current_cards,
                }),
            );
        }
    }

    /// Takes the next agent action out of the session, or performs the
    /// cheap ones (votes) in place. Returns `Idle` when the human must act
    /// or the game is over.
    pub fn next_step(&mut self) -> Step {
        match self.state.phase {
            Phase::Discussion { .. } => {
                let speaker = self.state.current_speaker().expect("discussion");
                if speaker == self.human {
                    self.prompt(Awaiting::Statement, json!({}));
                    return Step::Idle;
                }
                match self.agents[speaker.index()].take() {
                    Some(agent) => Step::Speak(speaker, agent),
                    None => Step::Idle,
                }
            }
            Phase::Voting => {
                for i in 0..self.state.num_players() {
                    if self.state.votes[i].is_some() {
                        continue;
                    }
                    if let Some(agent) = self.agents[i].as_mut() {
                        let target = agent.vote();
                        if let Err(e) = self.state.cast_vote(PlayerId(i), target) {
                            log::error!("agent vote rejected: {e}");
                            continue;
                        }
                        self.push(WireKind::VoteRecorded, json!({ "voter": PlayerId(i) }));
                        self.after_vote();
                    }
                }
                if self.awaiting() == Some(Awaiting::Vote) {
                    let options: Vec<PlayerId> = self.state.players().filter(|&p| p != self.human).collect();
                    self.prompt(Awaiting::Vote, json!({ "options": options }));
                }
                Step::Idle
            }
            Phase::Night | Phase::Finished => Step::Idle,
        }
    }

    /// Returns a speaking agent to its seat and records what it said. A
    /// failed plan becomes an empty statement.
    pub fn finish_speak(&mut self, player: PlayerId, agent: Box<dyn Agent>, said: Result<Utterance, AgentError>) {
        self.agents[player.index()] = Some(agent);
        let u = said.unwrap_or_else(|e| {
            log::warn!("agent {player} could not speak ({e}); recording an empty statement");
            Utterance {
                text: EMPTY_STATEMENT.to_owned(),
                triplets: Vec::new(),
                face: EmotionLabel::Neutral,
                tone: EmotionLabel::Neutral,
            }
        });
        if let Err(e) = self.record(player, u.text, u.triplets, u.face, u.tone) {
            log::error!("agent statement rejected: {}", e.message);
        }
    }

    /// Belief of the first seat whose agent keeps one.
    pub fn belief(&self) -> Option<(PlayerId, BeliefMatrix)> {
        self.agents
            .iter()
            .enumerate()
            .find_map(|(i, a)| a.as_ref().and_then(|a| a.belief_matrix()).map(|b| (PlayerId(i), b)))
    }

    pub fn has_belief_agent(&self) -> bool {
        self.kinds.contains(&Some(AgentKind::MultiMind))
    }
}
