//! Theory-of-mind belief model.
//!
//! Each triplet of the dialogue becomes one input token whose vector is the
//! sum of subject, predicate, object, face-emotion and tone-emotion
//! embeddings plus a learned position embedding. A pre-norm causal decoder
//! processes the sequence, and one linear head per player turns the hidden
//! state at each position into that player's softmax row of the belief
//! matrix.

mod belief;
pub mod checkpoint;
mod config;
pub mod gradcheck;
mod model;
mod ops;
mod params;
pub mod rule;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionTriplet, EmotionLabel, StatementEvent};

pub use belief::BeliefMatrix;
pub use config::ModelConfig;
pub use model::{cross_entropy, KvCache, LOG_EPS};
pub use params::{ModelParams, TensorSpec};

#[derive(Debug, Error)]
pub enum TomError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of {len} tokens exceeds max_seq {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token {token:?} at position {position} is out of range")]
    TokenOutOfRange { position: usize, token: EventToken },
    #[error("invalid training sample: {0}")]
    InvalidSample(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint blob truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed checkpoint manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Integer-coded input token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventToken {
    pub subject: usize,
    pub predicate: usize,
    pub object: usize,
    pub face: usize,
    pub tone: usize,
}

impl EventToken {
    pub fn new(triplet: &ActionTriplet, face: EmotionLabel, tone: EmotionLabel) -> Self {
        Self {
            subject: triplet.subject.index(),
            predicate: triplet.predicate.index(),
            object: triplet.object.index(),
            face: face.index(),
            tone: tone.index(),
        }
    }
}

/// Tokens of one statement; all share the statement's emotion labels.
pub fn statement_tokens(triplets: &[ActionTriplet], face: EmotionLabel, tone: EmotionLabel) -> Vec<EventToken> {
    triplets.iter().map(|t| EventToken::new(t, face, tone)).collect()
}

/// Token sequence of a dialogue, in order.
pub fn dialogue_tokens(dialogue: &[StatementEvent]) -> Vec<EventToken> {
    dialogue.iter().flat_map(|s| statement_tokens(&s.triplets, s.face, s.tone)).collect()
}

/// Ground-truth belief attached to one token position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub index: usize,
    pub belief: BeliefMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub tokens: Vec<EventToken>,
    pub targets: Vec<Target>,
}

impl TrainingSample {
    pub fn validate(&self, num_players: usize) -> Result<(), TomError> {
        for t in &self.targets {
            if t.index >= self.tokens.len() {
                return Err(TomError::InvalidSample(format!(
                    "target index {} beyond {} tokens",
                    t.index,
                    self.tokens.len()
                )));
            }
            if t.belief.num_players() != num_players {
                return Err(TomError::InvalidSample(format!(
                    "target matrix is {0}x{0}, model has {1} players",
                    t.belief.num_players(),
                    num_players
                )));
            }
        }
        Ok(())
    }
}

/// Anything that maps a dialogue prefix plus a candidate statement to a
/// belief matrix. The planner is generic over this.
pub trait BeliefModel: Sync {
    /// Precomputed state of a history prefix.
    type Context: Clone + Send;

    fn num_players(&self) -> usize;

    fn condition(&self, history: &[EventToken]) -> Result<Self::Context, TomError>;

    /// Belief after the history followed by `candidate`.
    fn predict(&self, context: &Self::Context, candidate: &[EventToken]) -> Result<BeliefMatrix, TomError>;
}

impl BeliefModel for ModelParams {
    type Context = KvCache;

    fn num_players(&self) -> usize {
        self.config().num_players
    }

    fn condition(&self, history: &[EventToken]) -> Result<KvCache, TomError> {
        let mut cache = self.empty_cache();
        self.extend_cache(&mut cache, history)?;
        Ok(cache)
    }

    fn predict(&self, context: &KvCache, candidate: &[EventToken]) -> Result<BeliefMatrix, TomError> {
        if candidate.is_empty() {
            return Ok(self.cache_belief(context));
        }
        let mut cache = context.clone();
        self.extend_cache(&mut cache, candidate)?;
        Ok(self.cache_belief(&cache))
    }
}

impl<M: BeliefModel + Send> BeliefModel for std::sync::Arc<M> {
    type Context = M::Context;

    fn num_players(&self) -> usize {
        (**self).num_players()
    }

    fn condition(&self, history: &[EventToken]) -> Result<Self::Context, TomError> {
        (**self).condition(history)
    }

    fn predict(&self, context: &Self::Context, candidate: &[EventToken]) -> Result<BeliefMatrix, TomError> {
        (**self).predict(context, candidate)
    }
}
