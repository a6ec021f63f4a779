use super::mcts::{argmax_random_tie, introspect};
use super::*;
use crate::action::{Predicate, StatementEvent};
use crate::game::Role;
use crate::rng::rng_from_seed;
use crate::tom::rule::RuleBeliefModel;
use crate::tom::{ModelConfig, ModelParams};

/// Suspicion of every other player toward `agent` grows with self-accusation
/// as Werewolf, shrinks with support of others, and grows a little with a
/// fearful face.
struct Stub {
    n: usize,
    agent: usize,
}

impl BeliefModel for Stub {
    type Context = ();

    fn num_players(&self) -> usize {
        self.n
    }

    fn condition(&self, _: &[EventToken]) -> Result<(), TomError> {
        Ok(())
    }

    fn predict(&self, _: &(), candidate: &[EventToken]) -> Result<BeliefMatrix, TomError> {
        let wolf = Predicate::AccuseAs(Role::Werewolf).index();
        let support = Predicate::Support.index();
        let mut score = 0.0;
        for t in candidate {
            if t.predicate == wolf && t.object == self.agent {
                score += 2.0;
            }
            if t.predicate == support && t.object != self.agent {
                score -= 0.7;
            }
        }
        if candidate.first().is_some_and(|t| t.face == EmotionLabel::Fear.index()) {
            score += 0.3;
        }
        let x = f64::exp(score);
        let mut m = BeliefMatrix::zeros(self.n);
        for j in 0..self.n {
            let z = x + (self.n - 1) as f64;
            for k in 0..self.n {
                m.set(j, k, if k == self.agent { x / z } else { 1.0 / z });
            }
        }
        Ok(m)
    }
}

fn p(i: usize) -> PlayerId {
    PlayerId(i)
}

fn reduced_cfg(iterations: usize, seed: u64) -> MctsConfig {
    MctsConfig {
        iterations,
        exploration_c: 1.414,
        max_action_depth: 2,
        rng_seed: seed,
        faces: vec![EmotionLabel::Neutral, EmotionLabel::Fear],
        tones: vec![EmotionLabel::Neutral, EmotionLabel::Fear],
    }
}

fn history() -> Vec<StatementEvent> {
    vec![StatementEvent {
        t: 0,
        speaker: p(1),
        text: String::new(),
        triplets: vec![crate::action::ActionTriplet::new(p(1), Predicate::Suspect, p(0))],
        face: EmotionLabel::Angry,
        tone: EmotionLabel::Neutral,
    }]
}

#[test]
fn reward_examples() {
    assert!((reward(&BeliefMatrix::uniform(5), p(0)) + 0.8).abs() < 1e-15);
    let mut m = BeliefMatrix::zeros(5);
    for j in 0..5 {
        m.set(j, if j == 0 { 1 } else { 0 }, 1.0);
    }
    assert_eq!(reward(&m, p(0)), -4.0);
    let mut m = BeliefMatrix::zeros(5);
    for j in 0..5 {
        m.set(j, if j == 4 { 3 } else { 4 }, 1.0);
    }
    assert_eq!(reward(&m, p(0)), 0.0);
}

#[test]
fn uct_examples() {
    let v = uct(-1.0, 2, 10, 1.414).unwrap();
    // -0.5 + 1.414 * sqrt(ln(10) / 2)
    let by_hand = -0.5 + 1.414 * (2.302_585_093 / 2.0f64).sqrt();
    assert!((v - by_hand).abs() < 1e-9);
    assert!((v - 1.0172).abs() < 1e-4);
    assert_eq!(uct(-3.0, 4, 9, 0.0), Some(-0.75));
    assert_eq!(uct(0.0, 0, 9, 1.0), None);
}

#[test]
fn tie_break_is_even() {
    let mut rng = rng_from_seed(123);
    let mut first = 0;
    for _ in 0..10_000 {
        if argmax_random_tie(&[0.5, 0.5, 0.1], &mut rng) == 0 {
            first += 1;
        }
    }
    let frac = f64::from(first) / 10_000.0;
    assert!((frac - 0.5).abs() < 0.02, "{frac}");
    assert_eq!(argmax_random_tie(&[0.1, 0.7, 0.2], &mut rng), 1);
}

/// Counts terminals by walking the tree, independent of the closed form.
fn walk_count(m: u128, depth: usize) -> u128 {
    if depth == 0 {
        1
    } else {
        1 + m * walk_count(m, depth - 1)
    }
}

#[test]
fn terminal_counts() {
    assert_eq!(terminal_count(5, 3, 64), 2_824_704);
    assert_eq!(walk_count(35, 3) * 64, 2_824_704);
    assert_eq!(terminal_count(5, 3, 1), 44_136);
    assert_eq!(terminal_count(3, 2, 4), 1_852);
    assert_eq!(walk_count(21, 2) * 4, 1_852);
    assert_eq!(terminal_count(5, 0, 64), 64);
}

#[test]
fn exhaustive_visits_every_terminal_once() {
    let model = RuleBeliefModel::new(3, 1.0);
    let (_, visited) = exhaustive_plan(&history(), &model, p(0), &reduced_cfg(1, 0)).unwrap();
    assert_eq!(visited, 1_852);
    let cfg = MctsConfig { max_action_depth: 0, ..reduced_cfg(1, 0) };
    let (res, visited) = exhaustive_plan(&history(), &model, p(0), &cfg).unwrap();
    assert_eq!(visited, 4);
    assert!(res.actions.is_empty());
}

#[test]
fn exhaustive_rejects_full_space() {
    let model = RuleBeliefModel::new(5, 1.0);
    let err = exhaustive_plan(&[], &model, p(0), &MctsConfig::default()).unwrap_err();
    assert!(matches!(err, PlanError::SpaceTooLarge { terminals: 2_824_704, .. }));
}

#[test]
fn exhaustive_optimum_on_stub() {
    let model = Stub { n: 3, agent: 0 };
    let (res, _) = exhaustive_plan(&[], &model, p(0), &reduced_cfg(1, 0)).unwrap();
    // two supports of others, and no fear on the face
    assert_eq!(res.actions.len(), 2);
    assert!(res.actions.iter().all(|t| t.predicate == Predicate::Support && t.object != p(0)));
    assert_eq!(res.face, EmotionLabel::Neutral);
    // lexicographic tie-break: first neutral tone, lowest indices
    assert_eq!(res.tone, EmotionLabel::Neutral);
    assert_eq!(res.actions[0].object, p(1));
    assert_eq!(res.actions[1].object, p(1));
}

#[test]
fn plan_never_self_accuses_against_stub() {
    let model = Stub { n: 5, agent: 2 };
    for seed in 0..100 {
        let cfg = MctsConfig { rng_seed: seed, iterations: 200, ..Default::default() };
        let res = plan(&[], &model, p(2), &cfg).unwrap();
        assert!(!res.actions.iter().any(|t| t.predicate == Predicate::AccuseAs(Role::Werewolf) && t.object == p(2)));
        assert!(res.actions.iter().all(|t| t.subject == p(2)));
        assert!(res.actions.len() <= 3);
    }
}

#[test]
fn single_iteration_is_consistent() {
    let model = RuleBeliefModel::new(5, 1.0);
    let cfg = MctsConfig { iterations: 1, rng_seed: 9, ..Default::default() };
    let res = plan(&history(), &model, p(0), &cfg).unwrap();
    let mut tokens = crate::tom::dialogue_tokens(&history());
    tokens.extend(crate::tom::statement_tokens(&res.actions, res.face, res.tone));
    let ctx = model.condition(&[]).unwrap();
    let direct = reward(&model.predict(&ctx, &tokens).unwrap(), p(0));
    assert_eq!(res.reward, direct);
}

#[test]
fn plan_is_deterministic() {
    let model = ModelParams::init_all(ModelConfig::tiny(5), 1, 0.5).unwrap();
    let cfg = MctsConfig { iterations: 100, rng_seed: 4, ..Default::default() };
    let a = plan(&history(), &model, p(0), &cfg).unwrap();
    let b = plan(&history(), &model, p(0), &cfg).unwrap();
    assert_eq!(a, b);
    let c = plan(&history(), &model, p(0), &MctsConfig { rng_seed: 5, ..cfg }).unwrap();
    assert!(c.reward <= 0.0);
}

#[test]
fn tree_invariants_hold_every_iteration() {
    let model = RuleBeliefModel::new(4, 0.5);
    let cfg = MctsConfig { iterations: 400, rng_seed: 2, ..Default::default() };
    let tokens = crate::tom::dialogue_tokens(&history());
    let stats = introspect::run_and_inspect(&tokens, &model, p(0), &cfg);
    for (k, s) in stats.iter().enumerate() {
        assert_eq!(s.root_n as usize, k + 1);
        assert!(s.parent_dominates);
        assert!(s.rewards_in_bounds);
        assert_eq!(s.root_children, 64);
        assert!(s.max_children <= 7 * 4 + 1);
    }
    assert_eq!(stats.last().unwrap().max_children, 29);
}

#[test]
fn trace_reports_every_iteration() {
    let model = RuleBeliefModel::new(3, 1.0);
    let mut lines = Vec::new();
    let res = plan_with_trace(&history(), &model, p(0), &reduced_cfg(50, 1), &mut |r| {
        lines.push(serde_json::to_string(r).unwrap())
    })
    .unwrap();
    assert_eq!(lines.len(), 50);
    let last: serde_json::Value = serde_json::from_str(lines.last().unwrap()).unwrap();
    assert_eq!(last["best_so_far"].as_f64().unwrap(), res.reward);
    assert!(last["path"][0].as_str().unwrap().contains('/'));
}

#[test]
fn mcts_finds_exhaustive_optimum_on_reduced_space() {
    let model = RuleBeliefModel::new(3, 1.0);
    let (best, _) = exhaustive_plan(&history(), &model, p(0), &reduced_cfg(1, 0)).unwrap();
    let mut hits = 0;
    for seed in 0..10 {
        let res = plan(&history(), &model, p(0), &reduced_cfg(10_000, seed)).unwrap();
        assert!(res.reward <= best.reward + 1e-12);
        if res.reward == best.reward {
            hits += 1;
        }
    }
    assert!(hits >= 9, "{hits}/10");
}

#[test]
fn config_errors() {
    let model = RuleBeliefModel::new(3, 1.0);
    let cfg = MctsConfig { faces: vec![], ..Default::default() };
    assert!(matches!(plan(&[], &model, p(0), &cfg), Err(PlanError::EmptyAlphabet)));
    let cfg = MctsConfig { iterations: 0, ..Default::default() };
    assert!(matches!(plan(&[], &model, p(0), &cfg), Err(PlanError::ZeroIterations)));
    assert!(matches!(
        plan(&[], &model, p(7), &MctsConfig::default()),
        Err(PlanError::UnknownAgent { .. })
    ));
}

#[test]
fn depth_zero_plans_empty_statement() {
    // an empty statement adds no tokens, so every emotion pair scores the same
    let model = Stub { n: 4, agent: 0 };
    let cfg = MctsConfig { max_action_depth: 0, iterations: 200, ..Default::default() };
    let res = plan(&[], &model, p(0), &cfg).unwrap();
    assert!(res.actions.is_empty());
    assert!((res.reward + 3.0 * 0.25).abs() < 1e-12);
}
