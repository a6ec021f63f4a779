use std::sync::Arc;

use crate::action::{ActionSpace, StatementEvent, EMPTY_STATEMENT};
use crate::game::{NightChoice, PlayerId, PlayerView};
use crate::planner::{plan_tokens, MctsConfig, PlanResult};
use crate::rng::{derive_seed, rng_from_seed, GameRng};
use crate::tom::{statement_tokens, BeliefMatrix, BeliefModel, EventToken};

use super::llm::{llm_act, ChatBackend};
use super::{scripted, Agent, AgentError, AgentKind, SuspicionReport, Utterance};

/// Perceiver, reasoner (belief model), planner (MCTS) and actor.
///
/// Statements of others arrive already perceived as triplets. The agent
/// plans its own statements against its belief model, renders them with the
/// template grammar or an optional language-model actor, and votes for the
/// player its own row of the belief matrix suspects most.
pub struct MultiMindAgent<M: BeliefModel> {
    player: PlayerId,
    model: Arc<M>,
    cfg: MctsConfig,
    actor: Option<Arc<dyn ChatBackend>>,
    history: Vec<EventToken>,
    turns: u64,
    rng: GameRng,
    last_plan: Option<PlanResult>,
}

impl<M: BeliefModel + Send + 'static> MultiMindAgent<M> {
    pub fn new(player: PlayerId, model: Arc<M>, cfg: MctsConfig, actor: Option<Arc<dyn ChatBackend>>) -> Self {
        let rng = rng_from_seed(derive_seed(cfg.rng_seed, u64::MAX));
        Self { player, model, cfg, actor, history: Vec::new(), turns: 0, rng, last_plan: None }
    }

    /// Belief after everything observed so far.
    pub fn belief(&self) -> BeliefMatrix {
        self.model
            .condition(&self.history)
            .and_then(|ctx| self.model.predict(&ctx, &[]))
            .unwrap_or_else(|e| {
                log::warn!("belief model failed ({e}); using uniform belief");
                BeliefMatrix::uniform(self.model.num_players())
            })
    }

    pub fn last_plan(&self) -> Option<&PlanResult> {
        self.last_plan.as_ref()
    }

    fn own_row_ranking(&self) -> (f64, Vec<PlayerId>) {
        let b = self.belief();
        let row = b.row(self.player.index());
        let others = (0..row.len()).filter(|&j| j != self.player.index());
        let max = others.clone().map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
        (max, others.filter(|&j| row[j] == max).map(PlayerId).collect())
    }
}

impl<M: BeliefModel + Send + Sync + 'static> Agent for MultiMindAgent<M> {
    fn kind(&self) -> AgentKind {
        AgentKind::MultiMind
    }

    fn player(&self) -> PlayerId {
        self.player
    }

    fn decide_night(&mut self, view: &PlayerView) -> NightChoice {
        scripted::decide_night(view, &mut self.rng)
    }

    fn begin_day(&mut self, _view: &PlayerView) {}

    fn observe(&mut self, event: &StatementEvent) {
        self.history.extend(statement_tokens(&event.triplets, event.face, event.tone));
    }

    fn speak(&mut self) -> Result<Utterance, AgentError> {
        let cfg = MctsConfig { rng_seed: derive_seed(self.cfg.rng_seed, self.turns), ..self.cfg.clone() };
        self.turns += 1;
        let plan = plan_tokens(&self.history, self.model.as_ref(), self.player, &cfg)?;
        let n = self.model.num_players();
        let text = match &self.actor {
            Some(actor) => llm_act(&plan.actions, self.player, plan.face, plan.tone, n, actor.as_ref()).0,
            None => ActionSpace::new(n).render(&plan.actions).unwrap_or_else(|_| EMPTY_STATEMENT.to_owned()),
        };
        let utt = Utterance { text, triplets: plan.actions.clone(), face: plan.face, tone: plan.tone };
        self.last_plan = Some(plan);
        Ok(utt)
    }

    fn report(&self) -> SuspicionReport {
        let (_, suspected) = self.own_row_ranking();
        SuspicionReport { reporter: self.player, suspected }
    }

    /// Argmax of the agent's own belief row over other players, lowest id
    /// on ties.
    fn vote(&mut self) -> PlayerId {
        self.own_row_ranking().1[0]
    }

    fn belief_matrix(&self) -> Option<BeliefMatrix> {
        Some(self.belief())
    }
}
