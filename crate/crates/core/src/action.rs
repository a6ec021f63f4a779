//! The communicative action space and its surface grammar.
//!
//! Every utterance is reduced to an ordered list of (subject, predicate,
//! object) triplets whose subject is the speaker. The grammar below is the
//! deterministic codec between those triplets and text:
//!
//! ```text
//! I support Player <k>.
//! I suspect Player <k>.
//! I think Player <k> is the <Role>.
//! I am the <Role>.
//! I have nothing to add.          (empty action list)
//! ```
//!
//! Parsing is total: sentences that do not match contribute nothing, and at
//! most [`MAX_TRIPLETS`] triplets are kept per statement.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::game::{PlayerId, Role};

/// Upper bound on triplets per statement (the planner's depth bound).
pub const MAX_TRIPLETS: usize = 3;

/// `Support`, `Suspect`, and one `AccuseAs` per role.
pub const NUM_PREDICATES: usize = 2 + Role::COUNT;

pub const EMPTY_STATEMENT: &str = "I have nothing to add.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ActionError {
    #[error("triplets have mixed subjects ({0} and {1})")]
    MixedSubjects(PlayerId, PlayerId),
    #[error("statement has {0} triplets, at most {MAX_TRIPLETS} allowed")]
    TooManyTriplets(usize),
    #[error("triplet subject {subject} is not the agent {agent}")]
    WrongSubject { subject: PlayerId, agent: PlayerId },
    #[error("action index {index} out of range [0, {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("player {0} out of range")]
    PlayerOutOfRange(PlayerId),
    #[error("unknown identifier {0:?}")]
    UnknownIdentifier(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predicate {
    Support,
    Suspect,
    AccuseAs(Role),
}

impl Predicate {
    pub const ALL: [Predicate; NUM_PREDICATES] = [
        Predicate::Support,
        Predicate::Suspect,
        Predicate::AccuseAs(Role::Werewolf),
        Predicate::AccuseAs(Role::Seer),
        Predicate::AccuseAs(Role::Robber),
        Predicate::AccuseAs(Role::Troublemaker),
        Predicate::AccuseAs(Role::Insomniac),
    ];

    pub fn index(self) -> usize {
        match self {
            Predicate::Support => 0,
            Predicate::Suspect => 1,
            Predicate::AccuseAs(role) => 2 + role.index(),
        }
    }

    pub fn from_index(index: usize) -> Option<Predicate> {
        Self::ALL.get(index).copied()
    }

    /// Stable lowercase identifier used in logs and on the wire.
    pub fn canonical(self) -> String {
        match self {
            Predicate::Support => "support".to_owned(),
            Predicate::Suspect => "suspect".to_owned(),
            Predicate::AccuseAs(role) => format!("accuse_as:{}", role.canonical()),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for Predicate {
    type Err = ActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lowered = s.trim().to_ascii_lowercase();
        match lowered.as_str() {
            "support" => Ok(Predicate::Support),
            "suspect" => Ok(Predicate::Suspect),
            other => other
                .strip_prefix("accuse_as:")
                .and_then(|r| r.parse::<Role>().ok())
                .map(Predicate::AccuseAs)
                .ok_or_else(|| ActionError::UnknownIdentifier(s.to_owned())),
        }
    }
}

impl Serialize for Predicate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical())
    }
}

impl<'de> Deserialize<'de> for Predicate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionTriplet {
    pub subject: PlayerId,
    pub predicate: Predicate,
    pub object: PlayerId,
}

impl ActionTriplet {
    pub fn new(subject: PlayerId, predicate: Predicate, object: PlayerId) -> Self {
        Self { subject, predicate, object }
    }
}

impl fmt::Display for ActionTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject.index(), self.predicate, self.object.index())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Happy,
    Sad,
    Neutral,
    Angry,
    Surprise,
    Disgust,
    Fear,
    Other,
}

impl EmotionLabel {
    pub const COUNT: usize = 8;
    pub const ALL: [EmotionLabel; Self::COUNT] = [
        EmotionLabel::Happy,
        EmotionLabel::Sad,
        EmotionLabel::Neutral,
        EmotionLabel::Angry,
        EmotionLabel::Surprise,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn canonical(self) -> &'static str {
        match self {
            EmotionLabel::Happy => "happy",
            EmotionLabel::Sad => "sad",
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Angry => "angry",
            EmotionLabel::Surprise => "surprise",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Fear => "fear",
            EmotionLabel::Other => "other",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical())
    }
}

impl FromStr for EmotionLabel {
    type Err = ActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lowered = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|e| e.canonical() == lowered)
            .ok_or_else(|| ActionError::UnknownIdentifier(s.to_owned()))
    }
}

/// One utterance on the game timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementEvent {
    pub t: usize,
    pub speaker: PlayerId,
    pub text: String,
    pub triplets: Vec<ActionTriplet>,
    pub face: EmotionLabel,
    pub tone: EmotionLabel,
}

static SENTENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[^.!?]+[.!?]*").unwrap());
static SUPPORT_SUSPECT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^i\s+(support|suspect)\s+player\s+(\d+)$").unwrap()
});
static THINK_IS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^i\s+think\s+player\s+(\d+)\s+is\s+(?:the\s+|a\s+|an\s+)?(werewolf|seer|robber|troublemaker|insomniac)$",
    )
    .unwrap()
});
static I_AM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^i\s+am\s+(?:the\s+|a\s+|an\s+)?(werewolf|seer|robber|troublemaker|insomniac)$")
        .unwrap()
});

/// The finite action space for a table of `num_players` seats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    num_players: usize,
}

impl ActionSpace {
    pub fn new(num_players: usize) -> Self {
        Self { num_players }
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    /// Number of agent-subject triplets, `7 * |P|`.
    pub fn num_actions(&self) -> usize {
        NUM_PREDICATES * self.num_players
    }

    /// Index reserved for the Stop action.
    pub fn stop_index(&self) -> usize {
        self.num_actions()
    }

    /// Children of every non-terminal action node: all triplets plus Stop.
    pub fn branching(&self) -> usize {
        self.num_actions() + 1
    }

    pub fn triplet_index(&self, triplet: ActionTriplet, agent: PlayerId) -> Result<usize, ActionError> {
        if triplet.subject != agent {
            return Err(ActionError::WrongSubject { subject: triplet.subject, agent });
        }
        if triplet.object.index() >= self.num_players {
            return Err(ActionError::PlayerOutOfRange(triplet.object));
        }
        Ok(triplet.predicate.index() * self.num_players + triplet.object.index())
    }

    pub fn index_triplet(&self, index: usize, agent: PlayerId) -> Result<ActionTriplet, ActionError> {
        if index >= self.num_actions() {
            return Err(ActionError::IndexOutOfRange { index, bound: self.num_actions() });
        }
        let predicate = Predicate::from_index(index / self.num_players).expect("bounded above");
        Ok(ActionTriplet::new(agent, predicate, PlayerId(index % self.num_players)))
    }

    /// All agent-subject triplets in index order.
    pub fn triplets_for(&self, agent: PlayerId) -> impl Iterator<Item = ActionTriplet> + '_ {
        (0..self.num_actions()).map(move |i| self.index_triplet(i, agent).expect("in range"))
    }

    /// Extracts triplets from free text. Never fails.
    pub fn parse(&self, text: &str, speaker: PlayerId) -> Vec<ActionTriplet> {
        let mut out = Vec::new();
        for sentence in SENTENCE.find_iter(text) {
            if out.len() == MAX_TRIPLETS {
                break;
            }
            let body = sentence.as_str().trim().trim_end_matches(['.', '!', '?']).trim();
            let body = collapse_whitespace(body);
            if let Some(triplet) = self.parse_sentence(&body, speaker) {
                out.push(triplet);
            }
        }
        out
    }

    fn parse_sentence(&self, body: &str, speaker: PlayerId) -> Option<ActionTriplet> {
        if let Some(c) = SUPPORT_SUSPECT.captures(body) {
            let predicate = if c[1].eq_ignore_ascii_case("support") {
                Predicate::Support
            } else {
                Predicate::Suspect
            };
            let object = self.player(&c[2])?;
            return Some(ActionTriplet::new(speaker, predicate, object));
        }
        if let Some(c) = THINK_IS.captures(body) {
            let object = self.player(&c[1])?;
            let role: Role = c[2].parse().ok()?;
            return Some(ActionTriplet::new(speaker, Predicate::AccuseAs(role), object));
        }
        if let Some(c) = I_AM.captures(body) {
            let role: Role = c[1].parse().ok()?;
            return Some(ActionTriplet::new(speaker, Predicate::AccuseAs(role), speaker));
        }
        None
    }

    fn player(&self, digits: &str) -> Option<PlayerId> {
        let k: usize = digits.parse().ok()?;
        (k < self.num_players).then_some(PlayerId(k))
    }

    /// Template realization of an action list; inverse of [`ActionSpace::parse`].
    pub fn render(&self, triplets: &[ActionTriplet]) -> Result<String, ActionError> {
        if triplets.len() > MAX_TRIPLETS {
            return Err(ActionError::TooManyTriplets(triplets.len()));
        }
        let Some(first) = triplets.first() else {
            return Ok(EMPTY_STATEMENT.to_owned());
        };
        let mut sentences = Vec::with_capacity(triplets.len());
        for t in triplets {
            if t.subject != first.subject {
                return Err(ActionError::MixedSubjects(first.subject, t.subject));
            }
            if t.object.index() >= self.num_players {
                return Err(ActionError::PlayerOutOfRange(t.object));
            }
            sentences.push(render_sentence(t));
        }
        Ok(sentences.join(" "))
    }
}

fn render_sentence(t: &ActionTriplet) -> String {
    match t.predicate {
        Predicate::Support => format!("I support Player {}.", t.object.index()),
        Predicate::Suspect => format!("I suspect Player {}.", t.object.index()),
        Predicate::AccuseAs(role) if t.object == t.subject => format!("I am the {}.", role.title()),
        Predicate::AccuseAs(role) => {
            format!("I think Player {} is the {}.", t.object.index(), role.title())
        }
    }
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
