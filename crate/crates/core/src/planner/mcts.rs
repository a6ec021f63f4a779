use rand::seq::IndexedRandom;
use rand::Rng;
use serde::Serialize;

use crate::action::StatementEvent;
use crate::game::PlayerId;
use crate::rng::{rng_from_seed, GameRng};
use crate::tom::{dialogue_tokens, BeliefModel, EventToken};

use super::{uct, Evaluator, MctsConfig, PlanError, PlanResult};

/// One line of the optional planner trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// Moves from the root to the evaluated terminal: the emotion pair as
    /// `face/tone`, then triplets in canonical form, then `stop` if taken.
    pub path: Vec<String>,
    #[serde(rename = "R")]
    pub r: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Pair(usize),
    Action(usize),
    Stop,
}

#[derive(Debug)]
struct Node {
    parent: Option<usize>,
    mv: Option<Move>,
    /// Emotion pair of the branch; `None` at the root.
    pair: Option<usize>,
    actions: Vec<usize>,
    terminal: bool,
    q: f64,
    n: u32,
    children: Vec<usize>,
    untried: Vec<Move>,
    cached_reward: Option<f64>,
}

/// Index of the largest score; equal maxima are broken uniformly at random.
pub(crate) fn argmax_random_tie<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> usize {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == best).collect();
    *ties.choose(rng).expect("non-empty scores")
}

struct Search<'e, 'm, M: BeliefModel> {
    cfg: &'e MctsConfig,
    eval: &'e Evaluator<'m, M>,
    nodes: Vec<Node>,
    rng: GameRng,
    best: Option<(f64, usize, Vec<usize>)>,
}

impl<M: BeliefModel> Search<'_, '_, M> {
    fn m(&self) -> usize {
        self.eval.space().num_actions()
    }

    fn moves_below(&self, actions_len: usize) -> Vec<Move> {
        if actions_len >= self.cfg.max_action_depth {
            return Vec::new();
        }
        (0..self.m()).map(Move::Action).chain(std::iter::once(Move::Stop)).collect()
    }

    fn add_child(&mut self, parent: usize, mv: Move) -> usize {
        let p = &self.nodes[parent];
        let (pair, mut actions) = (p.pair, p.actions.clone());
        let (pair, terminal) = match mv {
            Move::Pair(k) => (Some(k), self.cfg.max_action_depth == 0),
            Move::Action(a) => {
                actions.push(a);
                (pair, actions.len() == self.cfg.max_action_depth)
            }
            Move::Stop => (pair, true),
        };
        let untried = if terminal { Vec::new() } else { self.moves_below(actions.len()) };
        let id = self.nodes.len();
        self.nodes.push(Node {
            parent: Some(parent),
            mv: Some(mv),
            pair,
            actions,
            terminal,
            q: 0.0,
            n: 0,
            children: Vec::new(),
            untried,
            cached_reward: None,
        });
        self.nodes[parent].children.push(id);
        id
    }

    fn select(&mut self) -> usize {
        let mut id = 0;
        loop {
            let node = &self.nodes[id];
            if node.terminal || !node.untried.is_empty() || node.children.is_empty() {
                return id;
            }
            let parent_n = node.n;
            let scores: Vec<f64> = node
                .children
                .iter()
                .map(|&c| {
                    let child = &self.nodes[c];
                    uct(child.q, child.n, parent_n, self.cfg.exploration_c).expect("expanded children are visited")
                })
                .collect();
            id = node.children[argmax_random_tie(&scores, &mut self.rng)];
        }
    }

    fn expand(&mut self, id: usize) -> usize {
        if self.nodes[id].untried.is_empty() {
            return id;
        }
        let k = self.rng.random_range(0..self.nodes[id].untried.len());
        let mv = self.nodes[id].untried.swap_remove(k);
        self.add_child(id, mv)
    }

    /// Uniform random descent from `id` to a terminal; returns the terminal's
    /// emotion pair and actions.
    fn simulate(&mut self, id: usize) -> (usize, Vec<usize>) {
        let node = &self.nodes[id];
        let mut pair = node.pair;
        let mut actions = node.actions.clone();
        let mut terminal = node.terminal;
        while !terminal {
            match pair {
                None => {
                    pair = Some(self.rng.random_range(0..self.cfg.num_pairs()));
                    terminal = self.cfg.max_action_depth == 0;
                }
                Some(_) => {
                    let k = self.rng.random_range(0..=self.m());
                    if k == self.m() {
                        terminal = true;
                    } else {
                        actions.push(k);
                        terminal = actions.len() == self.cfg.max_action_depth;
                    }
                }
            }
        }
        (pair.expect("terminal has a pair"), actions)
    }

    fn evaluate(&mut self, pair: usize, actions: &[usize]) -> Result<f64, PlanError> {
        let (face, tone) = self.cfg.pair(pair);
        let r = self.eval.reward(face, tone, actions)?;
        if self.best.as_ref().is_none_or(|(b, _, _)| r > *b) {
            self.best = Some((r, pair, actions.to_vec()));
        }
        Ok(r)
    }

    fn backpropagate(&mut self, mut id: usize, r: f64) {
        loop {
            let node = &mut self.nodes[id];
            node.q += r;
            node.n += 1;
            match node.parent {
                Some(p) => id = p,
                None => break,
            }
        }
    }

    fn path_labels(&self, pair: usize, actions: &[usize], stopped: bool) -> Vec<String> {
        let (face, tone) = self.cfg.pair(pair);
        let mut path = vec![format!("{face}/{tone}")];
        path.extend(self.eval.triplets(actions).iter().map(|t| format!("{}:{}", t.predicate.canonical(), t.object.index())));
        if stopped {
            path.push("stop".into());
        }
        path
    }

    fn iterate(&mut self, iter: usize, trace: &mut Option<&mut dyn FnMut(&TraceRecord)>) -> Result<(), PlanError> {
        let selected = self.select();
        let leaf = self.expand(selected);
        let (r, pair, actions) = if self.nodes[leaf].terminal {
            let node = &self.nodes[leaf];
            let (pair, actions) = (node.pair.expect("terminal has a pair"), node.actions.clone());
            let r = match node.cached_reward {
                Some(r) => r,
                None => {
                    let r = self.evaluate(pair, &actions)?;
                    self.nodes[leaf].cached_reward = Some(r);
                    r
                }
            };
            (r, pair, actions)
        } else {
            let (pair, actions) = self.simulate(leaf);
            (self.evaluate(pair, &actions)?, pair, actions)
        };
        self.backpropagate(leaf, r);
        if let Some(f) = trace.as_mut() {
            let stopped = actions.len() < self.cfg.max_action_depth;
            f(&TraceRecord {
                iter,
                path: self.path_labels(pair, &actions, stopped),
                r,
                best_so_far: self.best.as_ref().map_or(r, |b| b.0),
            });
        }
        Ok(())
    }
}

fn run<M: BeliefModel>(
    history: &[EventToken],
    model: &M,
    agent: PlayerId,
    cfg: &MctsConfig,
    mut trace: Option<&mut dyn FnMut(&TraceRecord)>,
) -> Result<PlanResult, PlanError> {
    cfg.validate()?;
    let eval = Evaluator::new(model, history, agent)?;
    let root = Node {
        parent: None,
        mv: None,
        pair: None,
        actions: Vec::new(),
        terminal: false,
        q: 0.0,
        n: 0,
        children: Vec::new(),
        untried: (0..cfg.num_pairs()).map(Move::Pair).collect(),
        cached_reward: None,
    };
    let mut search = Search { cfg, eval: &eval, nodes: vec![root], rng: rng_from_seed(cfg.rng_seed), best: None };
    for iter in 0..cfg.iterations {
        search.iterate(iter, &mut trace)?;
    }
    debug_assert!(search.nodes.iter().all(|n| n.mv.is_some() || n.parent.is_none()));
    let (reward, pair, actions) = search.best.expect("iterations >= 1");
    let (face, tone) = cfg.pair(pair);
    Ok(PlanResult { actions: eval.triplets(&actions), face, tone, reward })
}

/// Plans the agent's next statement after `history`.
///
/// Each iteration selects by UCT (random tie-break), expands one random
/// untried child, finishes with a uniform random descent, and backs the
/// reward up the in-tree path. The answer is the best terminal seen in any
/// iteration, not the most visited child.
pub fn plan<M: BeliefModel>(
    history: &[StatementEvent],
    model: &M,
    agent: PlayerId,
    cfg: &MctsConfig,
) -> Result<PlanResult, PlanError> {
    run(&dialogue_tokens(history), model, agent, cfg, None)
}

/// [`plan`] over an already tokenized history.
pub fn plan_tokens<M: BeliefModel>(
    history: &[EventToken],
    model: &M,
    agent: PlayerId,
    cfg: &MctsConfig,
) -> Result<PlanResult, PlanError> {
    run(history, model, agent, cfg, None)
}

/// [`plan`] with a callback invoked after every iteration.
pub fn plan_with_trace<M: BeliefModel>(
    history: &[StatementEvent],
    model: &M,
    agent: PlayerId,
    cfg: &MctsConfig,
    trace: &mut dyn FnMut(&TraceRecord),
) -> Result<PlanResult, PlanError> {
    run(&dialogue_tokens(history), model, agent, cfg, Some(trace))
}
