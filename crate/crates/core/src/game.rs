//! One Night Ultimate Werewolf rules engine.
//!
//! All cards are dealt to players (no center cards). The night resolves in
//! the fixed order Werewolf, Seer, Robber, Troublemaker, Insomniac, each
//! ability acting on the cards as they stand at that role's turn. Teams and
//! the win rule use the final card each player holds.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionError, ActionTriplet, EmotionLabel, StatementEvent, MAX_TRIPLETS};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub usize);

impl PlayerId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Player {}", self.0)
    }
}

/// Role cards. The discriminant is the stable integer encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Werewolf = 0,
    Seer = 1,
    Robber = 2,
    Troublemaker = 3,
    Insomniac = 4,
}

impl Role {
    pub const COUNT: usize = 5;
    pub const ALL: [Role; Self::COUNT] =
        [Role::Werewolf, Role::Seer, Role::Robber, Role::Troublemaker, Role::Insomniac];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Role> {
        Self::ALL.get(index).copied()
    }

    pub fn canonical(self) -> &'static str {
        match self {
            Role::Werewolf => "werewolf",
            Role::Seer => "seer",
            Role::Robber => "robber",
            Role::Troublemaker => "troublemaker",
            Role::Insomniac => "insomniac",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Role::Werewolf => "Werewolf",
            Role::Seer => "Seer",
            Role::Robber => "Robber",
            Role::Troublemaker => "Troublemaker",
            Role::Insomniac => "Insomniac",
        }
    }

    pub fn team(self) -> Team {
        if self == Role::Werewolf {
            Team::Werewolf
        } else {
            Team::Village
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

impl FromStr for Role {
    type Err = ActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lowered = s.trim().to_ascii_lowercase();
        Role::ALL
            .into_iter()
            .find(|r| r.canonical() == lowered)
            .ok_or_else(|| ActionError::UnknownIdentifier(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Team {
    Village,
    Werewolf,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GameError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("operation requires phase {expected}, game is in {actual:?}")]
    WrongPhase { expected: &'static str, actual: Phase },
    #[error("{0} has already acted this night")]
    AlreadyActed(PlayerId),
    #[error("illegal night choice {choice:?} for {player} holding {role}")]
    IllegalChoice { player: PlayerId, role: Role, choice: NightChoice },
    #[error("missing night choice for {0}")]
    MissingChoice(PlayerId),
    #[error("player {0} out of range")]
    UnknownPlayer(usize),
    #[error("it is {expected}'s turn to speak, not {actual}")]
    OutOfTurn { expected: PlayerId, actual: PlayerId },
    #[error("invalid statement: {0}")]
    InvalidStatement(String),
    #[error("{0} cannot vote for themselves")]
    SelfVote(PlayerId),
    #[error("{0} has already voted")]
    DoubleVote(PlayerId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameConfig {
    pub num_players: usize,
    pub roles: Vec<Role>,
    pub discussion_rounds: usize,
    pub rng_seed: u64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self { num_players: 5, roles: Role::ALL.to_vec(), discussion_rounds: 3, rng_seed: 0 }
    }
}

impl GameConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { rng_seed: seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.num_players < 3 {
            return Err(GameError::InvalidConfig(format!(
                "need at least 3 players, got {}",
                self.num_players
            )));
        }
        if self.roles.len() != self.num_players {
            return Err(GameError::InvalidConfig(format!(
                "{} roles for {} players",
                self.roles.len(),
                self.num_players
            )));
        }
        if self.discussion_rounds == 0 {
            return Err(GameError::InvalidConfig("discussion_rounds must be >= 1".into()));
        }
        Ok(())
    }

    pub fn players(&self) -> impl Iterator<Item = PlayerId> {
        (0..self.num_players).map(PlayerId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NightChoice {
    NoOp,
    View { target: PlayerId },
    SwapWith { target: PlayerId },
    /// Canonical form keeps `first < second`.
    SwapPair { first: PlayerId, second: PlayerId },
}

/// Private information a player learns at night.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NightObservation {
    /// The werewolf wakes and finds no partner.
    Alone,
    Saw { target: PlayerId, role: Role },
    Robbed { target: PlayerId, new_role: Role },
    Swapped { first: PlayerId, second: PlayerId },
    WokeAs { role: Role },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    Night,
    Discussion { round: usize },
    Voting,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub winner: Team,
    pub vote_counts: Vec<usize>,
    pub max_vote_set: Vec<PlayerId>,
}

/// Who ended the night holding a werewolf card.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WerewolfHolders {
    None,
    One(PlayerId),
    Many(Vec<PlayerId>),
}

impl WerewolfHolders {
    pub fn as_vec(&self) -> Vec<PlayerId> {
        match self {
            WerewolfHolders::None => Vec::new(),
            WerewolfHolders::One(p) => vec![*p],
            WerewolfHolders::Many(v) => v.clone(),
        }
    }
}

/// Tallies a complete vote vector. Village wins iff some werewolf holder is
/// in the max-vote set; with no werewolf card in play Village wins.
pub fn tally(votes: &[PlayerId], holders: &WerewolfHolders) -> Outcome {
    let mut vote_counts = vec![0usize; votes.len()];
    for target in votes {
        vote_counts[target.index()] += 1;
    }
    let max = vote_counts.iter().copied().max().unwrap_or(0);
    let max_vote_set: Vec<PlayerId> = vote_counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c == max)
        .map(|(i, _)| PlayerId(i))
        .collect();
    let winner = match holders {
        WerewolfHolders::None => Team::Village,
        other if other.as_vec().iter().any(|h| max_vote_set.contains(h)) => Team::Village,
        _ => Team::Werewolf,
    };
    Outcome { winner, vote_counts, max_vote_set }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameState {
    pub config: GameConfig,
    pub initial_cards: Vec<Role>,
    pub current_cards: Vec<Role>,
    pub phase: Phase,
    pub night_choices: Vec<Option<NightChoice>>,
    pub night_log: Vec<Vec<NightObservation>>,
    pub dialogue: Vec<StatementEvent>,
    pub votes: Vec<Option<PlayerId>>,
    pub outcome: Option<Outcome>,
}

impl GameState {
    /// Deals the configured roles with a seeded Fisher-Yates shuffle.
    pub fn new(config: GameConfig) -> Result<Self, GameError> {
        config.validate()?;
        let mut cards = config.roles.clone();
        let mut rng = rng_from_seed(config.rng_seed);
        cards.shuffle(&mut rng);
        let n = config.num_players;
        Ok(Self {
            initial_cards: cards.clone(),
            current_cards: cards,
            phase: Phase::Night,
            night_choices: vec![None; n],
            night_log: vec![Vec::new(); n],
            dialogue: Vec::new(),
            votes: vec![None; n],
            outcome: None,
            config,
        })
    }

    /// Builds a game with an explicit deal, bypassing the shuffle.
    pub fn with_cards(config: GameConfig, cards: Vec<Role>) -> Result<Self, GameError> {
        let mut sorted_cfg = config.roles.clone();
        let mut sorted_cards = cards.clone();
        sorted_cfg.sort();
        sorted_cards.sort();
        if sorted_cfg != sorted_cards {
            return Err(GameError::InvalidConfig("cards do not match configured roles".into()));
        }
        let mut state = Self::new(config)?;
        state.initial_cards = cards.clone();
        state.current_cards = cards;
        Ok(state)
    }

    pub fn num_players(&self) -> usize {
        self.config.num_players
    }

    pub fn players(&self) -> impl Iterator<Item = PlayerId> {
        self.config.players()
    }

    fn check_player(&self, p: PlayerId) -> Result<(), GameError> {
        if p.index() < self.num_players() {
            Ok(())
        } else {
            Err(GameError::UnknownPlayer(p.index()))
        }
    }

    fn require(&self, ok: bool, expected: &'static str) -> Result<(), GameError> {
        if ok {
            Ok(())
        } else {
            Err(GameError::WrongPhase { expected, actual: self.phase })
        }
    }

    /// Night abilities available to `player`, keyed by the card they were dealt.
    pub fn legal_night_choices(&self, player: PlayerId) -> Result<Vec<NightChoice>, GameError> {
        self.require(self.phase == Phase::Night, "night")?;
        self.check_player(player)?;
        if self.night_choices[player.index()].is_some() {
            return Err(GameError::AlreadyActed(player));
        }
        Ok(night_choices_for(self.initial_cards[player.index()], player, self.num_players()))
    }

    pub fn submit_night_choice(&mut self, player: PlayerId, choice: NightChoice) -> Result<(), GameError> {
        let legal = self.legal_night_choices(player)?;
        if !legal.contains(&choice) {
            return Err(GameError::IllegalChoice {
                player,
                role: self.initial_cards[player.index()],
                choice,
            });
        }
        self.night_choices[player.index()] = Some(choice);
        Ok(())
    }

    pub fn pending_night_players(&self) -> Vec<PlayerId> {
        self.players().filter(|p| self.night_choices[p.index()].is_none()).collect()
    }

    /// Applies one choice per player and resolves the night.
    pub fn resolve_night(&mut self, choices: &[NightChoice]) -> Result<(), GameError> {
        self.require(self.phase == Phase::Night, "night")?;
        if choices.len() != self.num_players() {
            let missing = choices.len().min(self.num_players());
            return Err(GameError::MissingChoice(PlayerId(missing)));
        }
        let mut staged = self.clone();
        for (i, &choice) in choices.iter().enumerate() {
            staged.submit_night_choice(PlayerId(i), choice)?;
        }
        staged.resolve_pending_night()?;
        *self = staged;
        Ok(())
    }

    /// Resolves the night once every player has submitted a choice.
    pub fn resolve_pending_night(&mut self) -> Result<(), GameError> {
        self.require(self.phase == Phase::Night, "night")?;
        if let Some(p) = self.pending_night_players().first() {
            return Err(GameError::MissingChoice(*p));
        }
        for role in Role::ALL {
            for p in 0..self.num_players() {
                if self.initial_cards[p] != role {
                    continue;
                }
                let choice = self.night_choices[p].expect("checked above");
                self.apply_ability(PlayerId(p), role, choice);
            }
        }
        self.phase = Phase::Discussion { round: 1 };
        Ok(())
    }

    fn apply_ability(&mut self, player: PlayerId, role: Role, choice: NightChoice) {
        let p = player.index();
        let obs = match (role, choice) {
            (Role::Werewolf, _) => {
                let partners = self
                    .players()
                    .filter(|q| *q != player && self.initial_cards[q.index()] == Role::Werewolf)
                    .collect::<Vec<_>>();
                match partners.first() {
                    Some(&q) => NightObservation::Saw { target: q, role: Role::Werewolf },
                    None => NightObservation::Alone,
                }
            }
            (Role::Seer, NightChoice::View { target }) => {
                NightObservation::Saw { target, role: self.current_cards[target.index()] }
            }
            (Role::Robber, NightChoice::SwapWith { target }) => {
                self.current_cards.swap(p, target.index());
                NightObservation::Robbed { target, new_role: self.current_cards[p] }
            }
            (Role::Troublemaker, NightChoice::SwapPair { first, second }) => {
                self.current_cards.swap(first.index(), second.index());
                NightObservation::Swapped { first, second }
            }
            (Role::Insomniac, _) => NightObservation::WokeAs { role: self.current_cards[p] },
            _ => unreachable!("choice validated against role"),
        };
        self.night_log[p].push(obs);
    }

    /// Who speaks next, or `None` outside the discussion phase.
    pub fn current_speaker(&self) -> Option<PlayerId> {
        match self.phase {
            Phase::Discussion { .. } => Some(PlayerId(self.dialogue.len() % self.num_players())),
            _ => None,
        }
    }

    /// Appends the current speaker's statement and advances the turn.
    pub fn record_statement(
        &mut self,
        speaker: PlayerId,
        text: impl Into<String>,
        triplets: Vec<ActionTriplet>,
        face: EmotionLabel,
        tone: EmotionLabel,
    ) -> Result<&StatementEvent, GameError> {
        self.require(matches!(self.phase, Phase::Discussion { .. }), "discussion")?;
        self.check_player(speaker)?;
        let expected = self.current_speaker().expect("discussion phase");
        if speaker != expected {
            return Err(GameError::OutOfTurn { expected, actual: speaker });
        }
        if triplets.len() > MAX_TRIPLETS {
            return Err(GameError::InvalidStatement(format!("{} triplets", triplets.len())));
        }
        for t in &triplets {
            if t.subject != speaker {
                return Err(GameError::InvalidStatement(format!("triplet {t} not spoken by {speaker}")));
            }
            if t.object.index() >= self.num_players() {
                return Err(GameError::InvalidStatement(format!("triplet {t} names unknown player")));
            }
        }
        let event = StatementEvent {
            t: self.dialogue.len(),
            speaker,
            text: text.into(),
            triplets,
            face,
            tone,
        };
        self.dialogue.push(event);
        let n = self.num_players();
        let spoken = self.dialogue.len();
        self.phase = if spoken == n * self.config.discussion_rounds {
            Phase::Voting
        } else {
            Phase::Discussion { round: spoken / n + 1 }
        };
        Ok(self.dialogue.last().expect("just pushed"))
    }

    pub fn cast_vote(&mut self, voter: PlayerId, target: PlayerId) -> Result<(), GameError> {
        self.require(self.phase == Phase::Voting, "voting")?;
        self.check_player(voter)?;
        self.check_player(target)?;
        if voter == target {
            return Err(GameError::SelfVote(voter));
        }
        if self.votes[voter.index()].is_some() {
            return Err(GameError::DoubleVote(voter));
        }
        self.votes[voter.index()] = Some(target);
        if self.votes.iter().all(Option::is_some) {
            let votes: Vec<PlayerId> = self.votes.iter().map(|v| v.expect("all cast")).collect();
            self.outcome = Some(tally(&votes, &self.final_werewolf_holder()));
            self.phase = Phase::Finished;
        }
        Ok(())
    }

    pub fn final_werewolf_holder(&self) -> WerewolfHolders {
        let holders: Vec<PlayerId> =
            self.players().filter(|p| self.current_cards[p.index()] == Role::Werewolf).collect();
        match holders.len() {
            0 => WerewolfHolders::None,
            1 => WerewolfHolders::One(holders[0]),
            _ => WerewolfHolders::Many(holders),
        }
    }

    pub fn final_team(&self, player: PlayerId) -> Team {
        self.current_cards[player.index()].team()
    }

    pub fn card_multiset(cards: &[Role]) -> Vec<Role> {
        let mut v = cards.to_vec();
        v.sort();
        v
    }

    /// Private knowledge of one seat: dealt card plus night observations.
    pub fn player_view(&self, player: PlayerId) -> PlayerView {
        PlayerView {
            player,
            num_players: self.num_players(),
            initial_role: self.initial_cards[player.index()],
            observations: self.night_log[player.index()].clone(),
            roles_in_play: self.config.roles.clone(),
        }
    }

    pub fn to_log(&self) -> GameLog {
        GameLog {
            seed: self.config.rng_seed,
            config: self.config.clone(),
            initial_cards: self.initial_cards.clone(),
            final_cards: self.current_cards.clone(),
            night_events: self
                .players()
                .map(|p| NightRecord {
                    player: p,
                    role: self.initial_cards[p.index()],
                    choice: self.night_choices[p.index()],
                    observations: self.night_log[p.index()].clone(),
                })
                .collect(),
            statements: self.dialogue.clone(),
            votes: self.votes.clone(),
            outcome: self.outcome.clone(),
        }
    }
}

pub fn night_choices_for(role: Role, player: PlayerId, num_players: usize) -> Vec<NightChoice> {
    let others = || (0..num_players).map(PlayerId).filter(move |q| *q != player);
    match role {
        Role::Werewolf | Role::Insomniac => vec![NightChoice::NoOp],
        Role::Seer => others().map(|target| NightChoice::View { target }).collect(),
        Role::Robber => others().map(|target| NightChoice::SwapWith { target }).collect(),
        Role::Troublemaker => {
            let v: Vec<PlayerId> = others().collect();
            let mut out = Vec::new();
            for (i, &first) in v.iter().enumerate() {
                for &second in &v[i + 1..] {
                    out.push(NightChoice::SwapPair { first, second });
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerView {
    pub player: PlayerId,
    pub num_players: usize,
    pub initial_role: Role,
    pub observations: Vec<NightObservation>,
    pub roles_in_play: Vec<Role>,
}

impl PlayerView {
    /// The card this player believes they hold after the night.
    pub fn believed_role(&self) -> Role {
        self.observations
            .iter()
            .rev()
            .find_map(|o| match o {
                NightObservation::Robbed { new_role, .. } => Some(*new_role),
                NightObservation::WokeAs { role } => Some(*role),
                _ => None,
            })
            .unwrap_or(self.initial_role)
    }

    /// Players this seat knows to have held a werewolf card at night.
    pub fn known_werewolves(&self) -> BTreeSet<PlayerId> {
        self.observations
            .iter()
            .filter_map(|o| match o {
                NightObservation::Saw { target, role: Role::Werewolf } => Some(*target),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NightRecord {
    pub player: PlayerId,
    pub role: Role,
    pub choice: Option<NightChoice>,
    pub observations: Vec<NightObservation>,
}

/// One line of the game log file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameLog {
    pub seed: u64,
    pub config: GameConfig,
    pub initial_cards: Vec<Role>,
    pub final_cards: Vec<Role>,
    pub night_events: Vec<NightRecord>,
    pub statements: Vec<StatementEvent>,
    pub votes: Vec<Option<PlayerId>>,
    pub outcome: Option<Outcome>,
}
