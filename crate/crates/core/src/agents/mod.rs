//! Players: the scripted baseline, the planning agent, and the language-model
//! agents.

pub mod llm;
mod multimind;
mod react;
pub mod scripted;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionTriplet, EmotionLabel, StatementEvent};
use crate::game::{NightChoice, PlayerId, PlayerView};
use crate::planner::PlanError;
use crate::tom::BeliefMatrix;
use crate::rng::{rng_from_seed, GameRng};

pub use multimind::MultiMindAgent;
pub use react::ReActAgent;
pub use scripted::{SuspicionReport, SuspicionScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    #[serde(rename = "multimind")]
    MultiMind,
    Scripted,
    #[serde(rename = "react")]
    ReActLlm,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::MultiMind, AgentKind::Scripted, AgentKind::ReActLlm];

    pub fn canonical(self) -> &'static str {
        match self {
            AgentKind::MultiMind => "multimind",
            AgentKind::Scripted => "scripted",
            AgentKind::ReActLlm => "react",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "multimind" => Ok(AgentKind::MultiMind),
            "scripted" => Ok(AgentKind::Scripted),
            "react" | "reactllm" | "react-llm" => Ok(AgentKind::ReActLlm),
            other => Err(format!("unknown agent kind {other:?} (expected multimind, scripted or react)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// What a player says on its turn. `triplets` are the logged intentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub triplets: Vec<ActionTriplet>,
    pub face: EmotionLabel,
    pub tone: EmotionLabel,
}

/// One seat's policy for a whole game. The driver calls `begin_day` once
/// after the night, `observe` for every statement (including the agent's
/// own), `speak` on the agent's turns, and `vote` once.
pub trait Agent: Send {
    fn kind(&self) -> AgentKind;

    fn player(&self) -> PlayerId;

    fn decide_night(&mut self, view: &PlayerView) -> NightChoice;

    fn begin_day(&mut self, view: &PlayerView);

    fn observe(&mut self, event: &StatementEvent);

    fn speak(&mut self) -> Result<Utterance, AgentError>;

    fn report(&self) -> SuspicionReport;

    fn vote(&mut self) -> PlayerId;

    /// Current belief matrix, for agents that keep one.
    fn belief_matrix(&self) -> Option<BeliefMatrix> {
        None
    }
}

/// The rule-based player.
pub struct ScriptedAgent {
    player: PlayerId,
    scores: SuspicionScores,
    view: Option<PlayerView>,
    claimed: bool,
    rng: GameRng,
}

impl ScriptedAgent {
    pub fn new(player: PlayerId, num_players: usize, seed: u64) -> Self {
        Self { player, scores: SuspicionScores::new(player, num_players), view: None, claimed: false, rng: rng_from_seed(seed) }
    }

    pub fn scores(&self) -> &SuspicionScores {
        &self.scores
    }
}

impl Agent for ScriptedAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Scripted
    }

    fn player(&self) -> PlayerId {
        self.player
    }

    fn decide_night(&mut self, view: &PlayerView) -> NightChoice {
        scripted::decide_night(view, &mut self.rng)
    }

    fn begin_day(&mut self, view: &PlayerView) {
        self.view = Some(view.clone());
    }

    fn observe(&mut self, event: &StatementEvent) {
        self.scores.observe(event.speaker, &event.triplets, event.face, event.tone);
    }

    fn speak(&mut self) -> Result<Utterance, AgentError> {
        let claim = match (&self.view, self.claimed) {
            (Some(view), false) => Some(scripted::claimed_role(view, &mut self.rng)),
            _ => None,
        };
        self.claimed = true;
        let (triplets, face, tone) = scripted::speak(&self.scores, claim, &mut self.rng);
        let space = crate::action::ActionSpace::new(self.scores.num_players());
        let text = space.render(&triplets).expect("scripted statements are renderable");
        Ok(Utterance { text, triplets, face, tone })
    }

    fn report(&self) -> SuspicionReport {
        self.scores.report()
    }

    fn vote(&mut self) -> PlayerId {
        self.scores.vote()
    }
}

/// Uniform random legal night choice, shared by every agent kind.
pub fn random_night_choice<R: Rng + ?Sized>(view: &PlayerView, rng: &mut R) -> NightChoice {
    scripted::decide_night(view, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Predicate;
    use crate::game::Role;

    #[test]
    fn kind_names_round_trip() {
        for k in AgentKind::ALL {
            assert_eq!(k.canonical().parse::<AgentKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
        assert!("human".parse::<AgentKind>().is_err());
    }

    #[test]
    fn scripted_agent_claims_once() {
        let view = PlayerView {
            player: PlayerId(0),
            num_players: 5,
            initial_role: Role::Seer,
            observations: vec![],
            roles_in_play: Role::ALL.to_vec(),
        };
        let mut a = ScriptedAgent::new(PlayerId(0), 5, 1);
        a.begin_day(&view);
        let first = a.speak().unwrap();
        assert_eq!(first.triplets[0], ActionTriplet::new(PlayerId(0), Predicate::AccuseAs(Role::Seer), PlayerId(0)));
        assert!(first.text.starts_with("I am the Seer."));
        let second = a.speak().unwrap();
        assert_eq!(second.triplets.len(), 1);
    }

    #[test]
    fn identical_dialogues_give_identical_reports() {
        let events: Vec<StatementEvent> = (0..6)
            .map(|t| StatementEvent {
                t,
                speaker: PlayerId(t % 5),
                text: String::new(),
                triplets: vec![ActionTriplet::new(PlayerId(t % 5), Predicate::Suspect, PlayerId((t + 2) % 5))],
                face: if t % 3 == 0 { EmotionLabel::Fear } else { EmotionLabel::Neutral },
                tone: EmotionLabel::Neutral,
            })
            .collect();
        let run = |seed| {
            let mut agents: Vec<ScriptedAgent> = (0..5).map(|i| ScriptedAgent::new(PlayerId(i), 5, seed + i as u64)).collect();
            for e in &events {
                agents.iter_mut().for_each(|a| a.observe(e));
            }
            agents.iter().map(|a| a.report()).collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(99));
    }
}
