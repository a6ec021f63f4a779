//! Rule-based player: uniform night choices, an additive suspicion score per
//! other player, and a fixed speaking and voting policy.
//!
//! Score updates for an observer, per statement:
//!
//! | event                                   | effect                  |
//! |-----------------------------------------|-------------------------|
//! | `accuse_as:werewolf` on q               | score(q) += 2           |
//! | `suspect` q                             | score(q) += 1           |
//! | `support` q                             | score(q) -= 1           |
//! | speaker claims Seer (object == subject) | score(speaker) -= 1     |
//! | face or tone is `fear` (once)           | score(speaker) += 1     |
//!
//! Observers never keep a score about themselves.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{ActionTriplet, EmotionLabel, Predicate};
use crate::game::{night_choices_for, NightChoice, PlayerId, PlayerView, Role};

/// The set of players one agent suspects of holding the werewolf card.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuspicionReport {
    pub reporter: PlayerId,
    pub suspected: Vec<PlayerId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuspicionScores {
    observer: PlayerId,
    scores: Vec<i32>,
}

impl SuspicionScores {
    pub fn new(observer: PlayerId, num_players: usize) -> Self {
        Self { observer, scores: vec![0; num_players] }
    }

    /// Scores with explicit values; the observer's own entry is ignored.
    pub fn from_scores(observer: PlayerId, scores: Vec<i32>) -> Self {
        let mut s = Self { observer, scores };
        s.scores[observer.index()] = 0;
        s
    }

    pub fn observer(&self) -> PlayerId {
        self.observer
    }

    pub fn num_players(&self) -> usize {
        self.scores.len()
    }

    pub fn get(&self, player: PlayerId) -> Option<i32> {
        (player != self.observer).then(|| self.scores[player.index()])
    }

    fn bump(&mut self, player: PlayerId, delta: i32) {
        if player != self.observer && player.index() < self.scores.len() {
            self.scores[player.index()] += delta;
        }
    }

    /// Applies the planted update rule for one statement.
    pub fn observe(&mut self, speaker: PlayerId, triplets: &[ActionTriplet], face: EmotionLabel, tone: EmotionLabel) {
        for t in triplets {
            match t.predicate {
                Predicate::AccuseAs(Role::Werewolf) => self.bump(t.object, 2),
                Predicate::Suspect => self.bump(t.object, 1),
                Predicate::Support => self.bump(t.object, -1),
                Predicate::AccuseAs(Role::Seer) if t.object == t.subject => self.bump(t.subject, -1),
                Predicate::AccuseAs(_) => {}
            }
        }
        if face == EmotionLabel::Fear || tone == EmotionLabel::Fear {
            self.bump(speaker, 1);
        }
    }

    fn others(&self) -> impl Iterator<Item = PlayerId> + '_ {
        (0..self.scores.len()).map(PlayerId).filter(move |&p| p != self.observer)
    }

    fn max_other(&self) -> i32 {
        self.others().map(|p| self.scores[p.index()]).max().unwrap_or(0)
    }

    /// Argmax set over other players when the maximum is positive, else empty.
    pub fn report(&self) -> SuspicionReport {
        let max = self.max_other();
        let suspected = if max > 0 {
            self.others().filter(|p| self.scores[p.index()] == max).collect()
        } else {
            Vec::new()
        };
        SuspicionReport { reporter: self.observer, suspected }
    }

    /// Highest positive score, lowest id on ties.
    pub fn top_suspect(&self) -> Option<PlayerId> {
        let max = self.max_other();
        (max > 0).then(|| self.others().find(|p| self.scores[p.index()] == max).expect("max exists"))
    }

    fn lowest_other(&self) -> PlayerId {
        self.others().next().expect("at least two players")
    }

    /// Argmax-scored other player, lowest id on ties; lowest-id other player
    /// when no score is positive.
    pub fn vote(&self) -> PlayerId {
        self.top_suspect().unwrap_or_else(|| self.lowest_other())
    }
}

/// Neutral with probability 0.5, each other label 0.5 / 7.
pub fn sample_emotion<R: Rng + ?Sized>(rng: &mut R) -> EmotionLabel {
    let weights: Vec<f64> = EmotionLabel::ALL
        .iter()
        .map(|&e| if e == EmotionLabel::Neutral { 0.5 } else { 0.5 / 7.0 })
        .collect();
    let dist = WeightedIndex::new(&weights).expect("positive weights");
    EmotionLabel::ALL[dist.sample(rng)]
}

/// Uniform choice among the legal night abilities of the dealt card.
pub fn decide_night<R: Rng + ?Sized>(view: &PlayerView, rng: &mut R) -> NightChoice {
    let choices = night_choices_for(view.initial_role, view.player, view.num_players);
    *choices.choose(rng).expect("every role has at least one choice")
}

/// Role a player announces. Werewolves bluff a uniformly drawn village role
/// that is in play.
pub fn claimed_role<R: Rng + ?Sized>(view: &PlayerView, rng: &mut R) -> Role {
    let believed = view.believed_role();
    if believed != Role::Werewolf {
        return believed;
    }
    let mut village: Vec<Role> = view.roles_in_play.iter().copied().filter(|&r| r != Role::Werewolf).collect();
    village.sort();
    village.dedup();
    village.choose(rng).copied().unwrap_or(Role::Seer)
}

/// The scripted speaking policy.
///
/// Claims a role on the first turn, then suspects the current top-scored
/// player, or supports the lowest-id other player when nobody has a positive
/// score.
pub fn speak<R: Rng + ?Sized>(
    scores: &SuspicionScores,
    claim: Option<Role>,
    rng: &mut R,
) -> (Vec<ActionTriplet>, EmotionLabel, EmotionLabel) {
    let me = scores.observer();
    let mut triplets = Vec::with_capacity(2);
    if let Some(role) = claim {
        triplets.push(ActionTriplet::new(me, Predicate::AccuseAs(role), me));
    }
    triplets.push(match scores.top_suspect() {
        Some(q) => ActionTriplet::new(me, Predicate::Suspect, q),
        None => ActionTriplet::new(me, Predicate::Support, scores.lowest_other()),
    });
    let face = sample_emotion(rng);
    let tone = sample_emotion(rng);
    (triplets, face, tone)
}
