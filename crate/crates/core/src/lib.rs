//! One Night Ultimate Werewolf agents that model every player's suspicions
//! with a causal-attention belief model and plan their utterances with Monte
//! Carlo Tree Search.

pub mod action;
pub mod agents;
pub mod arena;
pub mod cli;
pub mod driver;
pub mod game;
pub mod planner;
pub mod rng;
pub mod selfplay;
pub mod service;
pub mod tom;

pub use action::{ActionSpace, ActionTriplet, EmotionLabel, Predicate, StatementEvent};
pub use game::{GameConfig, GameState, NightChoice, Phase, PlayerId, Role, Team};
