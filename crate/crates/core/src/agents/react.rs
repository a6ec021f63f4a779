use std::str::FromStr;
use std::sync::Arc;

use crate::action::{ActionSpace, EmotionLabel, StatementEvent};
use crate::game::{NightChoice, NightObservation, PlayerId, PlayerView};

use super::llm::{extract_json, fill, ChatBackend, ChatMessage, REACT_TEMPLATE};
use super::{Agent, AgentError, AgentKind, ScriptedAgent, SuspicionReport, Utterance};

/// A prompt loop over a chat endpoint. The model is shown the game so far
/// and asked for a thought, a statement, emotion labels, suspects and a
/// vote. Without an endpoint, or whenever a reply is unusable, it plays the
/// scripted policy, whose suspicion scores it keeps up to date regardless.
pub struct ReActAgent {
    inner: ScriptedAgent,
    backend: Option<Arc<dyn ChatBackend>>,
    view: Option<PlayerView>,
    dialogue: Vec<StatementEvent>,
    suspects: Option<Vec<PlayerId>>,
    vote: Option<PlayerId>,
}

impl ReActAgent {
    pub fn new(player: PlayerId, num_players: usize, seed: u64, backend: Option<Arc<dyn ChatBackend>>) -> Self {
        Self {
            inner: ScriptedAgent::new(player, num_players, seed),
            backend,
            view: None,
            dialogue: Vec::new(),
            suspects: None,
            vote: None,
        }
    }

    fn num_players(&self) -> usize {
        self.inner.scores().num_players()
    }

    fn prompt(&self) -> String {
        let view = self.view.as_ref();
        let night = view
            .map(|v| v.observations.iter().map(describe).collect::<Vec<_>>().join("; "))
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| "nothing".into());
        let dialogue = if self.dialogue.is_empty() {
            "(nobody has spoken yet)".to_owned()
        } else {
            self.dialogue
                .iter()
                .map(|e| format!("{} [face: {}, tone: {}]: {}", e.speaker, e.face, e.tone, e.text))
                .collect::<Vec<_>>()
                .join("\n")
        };
        fill(
            REACT_TEMPLATE,
            &[
                ("speaker", self.player().index().to_string()),
                ("num_players", self.num_players().to_string()),
                (
                    "roles",
                    view.map(|v| v.roles_in_play.iter().map(|r| r.title()).collect::<Vec<_>>().join(", "))
                        .unwrap_or_default(),
                ),
                ("initial_role", view.map(|v| v.initial_role.title().to_owned()).unwrap_or_default()),
                ("night", night),
                ("dialogue", dialogue),
            ],
        )
    }

    fn valid_other(&self, v: &serde_json::Value) -> Option<PlayerId> {
        let k = v.as_u64()? as usize;
        (k < self.num_players() && k != self.player().index()).then_some(PlayerId(k))
    }

    fn ask(&mut self) -> Option<Utterance> {
        let backend = self.backend.as_ref()?;
        let reply = match backend.chat(&[ChatMessage::user(self.prompt())]) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("react agent {} fell back to scripted play: {e}", self.player());
                return None;
            }
        };
        let v = match extract_json(&reply) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("react agent {} got an unusable reply: {e}", self.player());
                return None;
            }
        };
        let text = v["statement"].as_str()?.trim().to_owned();
        let label = |k: &str| v[k].as_str().and_then(|s| EmotionLabel::from_str(s).ok()).unwrap_or(EmotionLabel::Neutral);
        self.vote = self.valid_other(&v["vote"]).or(self.vote);
        if let Some(list) = v["suspects"].as_array() {
            let mut s: Vec<PlayerId> = list.iter().filter_map(|x| self.valid_other(x)).collect();
            s.sort();
            s.dedup();
            self.suspects = Some(s);
        }
        let triplets = ActionSpace::new(self.num_players()).parse(&text, self.player());
        Some(Utterance { text, triplets, face: label("face"), tone: label("tone") })
    }
}

fn describe(o: &NightObservation) -> String {
    match o {
        NightObservation::Alone => "you were the only Werewolf".into(),
        NightObservation::Saw { target, role } => format!("you saw that {target} is the {}", role.title()),
        NightObservation::Robbed { target, new_role } => {
            format!("you swapped with {target} and are now the {}", new_role.title())
        }
        NightObservation::Swapped { first, second } => format!("you swapped {first} and {second}"),
        NightObservation::WokeAs { role } => format!("you woke up as the {}", role.title()),
    }
}

impl Agent for ReActAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::ReActLlm
    }

    fn player(&self) -> PlayerId {
        self.inner.player()
    }

    fn decide_night(&mut self, view: &PlayerView) -> NightChoice {
        self.inner.decide_night(view)
    }

    fn begin_day(&mut self, view: &PlayerView) {
        self.view = Some(view.clone());
        self.inner.begin_day(view);
    }

    fn observe(&mut self, event: &StatementEvent) {
        self.dialogue.push(event.clone());
        self.inner.observe(event);
    }

    fn speak(&mut self) -> Result<Utterance, AgentError> {
        match self.ask() {
            Some(u) => Ok(u),
            None => self.inner.speak(),
        }
    }

    fn report(&self) -> SuspicionReport {
        match &self.suspects {
            Some(s) => SuspicionReport { reporter: self.player(), suspected: s.clone() },
            None => self.inner.report(),
        }
    }

    fn vote(&mut self) -> PlayerId {
        self.vote.unwrap_or_else(|| self.inner.vote())
    }
}
