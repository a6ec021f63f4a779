//! Utterance planning: pick the emotion pair and up to three action triplets
//! that minimize the total suspicion other players hold toward the agent.
//!
//! The search tree has the emotion pairs at its first level and one action
//! per level below, each action node offering every triplet plus Stop.

mod exhaustive;
mod mcts;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionSpace, ActionTriplet, EmotionLabel};
use crate::game::PlayerId;
use crate::tom::{statement_tokens, BeliefMatrix, BeliefModel, EventToken, TomError};

pub use exhaustive::{exhaustive_plan, terminal_count, MAX_EXHAUSTIVE_TERMINALS};
pub use mcts::{plan, plan_tokens, plan_with_trace, TraceRecord};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("emotion alphabet is empty")]
    EmptyAlphabet,
    #[error("iterations must be at least 1")]
    ZeroIterations,
    #[error("search space has {terminals} terminals, limit is {limit}")]
    SpaceTooLarge { terminals: u128, limit: u128 },
    #[error("agent {agent} is not seated at a {num_players}-player table")]
    UnknownAgent { agent: PlayerId, num_players: usize },
    #[error(transparent)]
    Tom(#[from] TomError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MctsConfig {
    pub iterations: usize,
    pub exploration_c: f64,
    pub max_action_depth: usize,
    pub rng_seed: u64,
    /// Labels searched on the face channel.
    pub faces: Vec<EmotionLabel>,
    /// Labels searched on the tone channel.
    pub tones: Vec<EmotionLabel>,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            exploration_c: 1.414,
            max_action_depth: 3,
            rng_seed: 0,
            faces: EmotionLabel::ALL.to_vec(),
            tones: EmotionLabel::ALL.to_vec(),
        }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.faces.is_empty() || self.tones.is_empty() {
            return Err(PlanError::EmptyAlphabet);
        }
        if self.iterations == 0 {
            return Err(PlanError::ZeroIterations);
        }
        Ok(())
    }

    pub fn num_pairs(&self) -> usize {
        self.faces.len() * self.tones.len()
    }

    fn pair(&self, index: usize) -> (EmotionLabel, EmotionLabel) {
        (self.faces[index / self.tones.len()], self.tones[index % self.tones.len()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub actions: Vec<ActionTriplet>,
    pub face: EmotionLabel,
    pub tone: EmotionLabel,
    pub reward: f64,
}

/// `R = -sum_{j != agent} belief[j, agent]`
pub fn reward(belief: &BeliefMatrix, agent: PlayerId) -> f64 {
    -(0..belief.num_players()).filter(|&j| j != agent.index()).map(|j| belief.get(j, agent.index())).sum::<f64>()
}

/// Upper confidence bound of a visited node. Unvisited nodes have no score.
pub fn uct(q: f64, n: u32, parent_visits: u32, c: f64) -> Option<f64> {
    if n == 0 {
        return None;
    }
    let n = f64::from(n);
    Some(q / n + c * (f64::from(parent_visits).ln() / n).sqrt())
}

/// Scores candidate statements against a fixed history.
pub(crate) struct Evaluator<'a, M: BeliefModel> {
    model: &'a M,
    context: M::Context,
    space: ActionSpace,
    agent: PlayerId,
}

impl<'a, M: BeliefModel> Evaluator<'a, M> {
    pub(crate) fn new(model: &'a M, history: &[EventToken], agent: PlayerId) -> Result<Self, PlanError> {
        let n = model.num_players();
        if agent.index() >= n {
            return Err(PlanError::UnknownAgent { agent, num_players: n });
        }
        Ok(Self { model, context: model.condition(history)?, space: ActionSpace::new(n), agent })
    }

    pub(crate) fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub(crate) fn triplets(&self, actions: &[usize]) -> Vec<ActionTriplet> {
        actions.iter().map(|&a| self.space.index_triplet(a, self.agent).expect("index below stop")).collect()
    }

    pub(crate) fn reward(&self, face: EmotionLabel, tone: EmotionLabel, actions: &[usize]) -> Result<f64, PlanError> {
        let tokens = statement_tokens(&self.triplets(actions), face, tone);
        let belief = self.model.predict(&self.context, &tokens)?;
        Ok(reward(&belief, self.agent))
    }
}

#[cfg(test)]
mod tests;
