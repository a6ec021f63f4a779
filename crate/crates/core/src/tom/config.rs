use serde::{Deserialize, Serialize};

use crate::action::{EmotionLabel, NUM_PREDICATES};

use super::TomError;

/// Shape of the belief model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_players: usize,
    pub num_predicates: usize,
    pub num_emotions: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub max_seq: usize,
    /// When false the face and tone embeddings are dropped from the input sum
    /// (text-only ablation).
    #[serde(default = "default_true")]
    pub use_emotions: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_players: 5,
            num_predicates: NUM_PREDICATES,
            num_emotions: EmotionLabel::COUNT,
            hidden: 64,
            layers: 2,
            heads: 4,
            ffn_mult: 4,
            max_seq: 512,
            use_emotions: true,
        }
    }
}

impl ModelConfig {
    /// 512 hidden, 8 decoder layers.
    pub fn large() -> Self {
        Self { hidden: 512, layers: 8, heads: 8, ..Self::default() }
    }

    pub fn tiny(num_players: usize) -> Self {
        Self { num_players, hidden: 8, layers: 2, heads: 2, ffn_mult: 2, max_seq: 32, ..Self::default() }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn ffn_dim(&self) -> usize {
        self.hidden * self.ffn_mult
    }

    pub fn validate(&self) -> Result<(), TomError> {
        let bad = |m: &str| Err(TomError::InvalidConfig(m.to_owned()));
        if self.num_players < 2 {
            return bad("num_players must be >= 2");
        }
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return bad("hidden must be a positive multiple of heads");
        }
        if self.layers == 0 || self.ffn_mult == 0 || self.max_seq == 0 {
            return bad("layers, ffn_mult and max_seq must be positive");
        }
        if self.num_predicates == 0 || self.num_emotions == 0 {
            return bad("empty predicate or emotion alphabet");
        }
        Ok(())
    }
}
