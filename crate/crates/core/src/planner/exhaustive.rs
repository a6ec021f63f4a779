use crate::action::StatementEvent;
use crate::game::PlayerId;
use crate::tom::{dialogue_tokens, BeliefModel};

use super::{Evaluator, MctsConfig, PlanError, PlanResult};

pub const MAX_EXHAUSTIVE_TERMINALS: u128 = 1_000_000;

/// Terminals per emotion pair times pairs: `pairs * (sum_{d<D} m^d + m^D)`
/// with `m = 7 |P|` actions.
pub fn terminal_count(num_players: usize, max_depth: usize, pairs: usize) -> u128 {
    let m = (crate::action::NUM_PREDICATES * num_players) as u128;
    let per_pair: u128 = (0..max_depth).map(|d| m.pow(d as u32)).sum::<u128>() + m.pow(max_depth as u32);
    per_pair * pairs as u128
}

/// Enumerates every terminal once and returns the best by reward.
///
/// Order: emotion pairs as listed in `cfg` (faces outer), then depth-first
/// with Stop before triplets and triplets ascending by index. Ties keep the
/// first terminal found. Uses `cfg.faces`, `cfg.tones` and
/// `cfg.max_action_depth`.
pub fn exhaustive_plan<M: BeliefModel>(
    history: &[StatementEvent],
    model: &M,
    agent: PlayerId,
    cfg: &MctsConfig,
) -> Result<(PlanResult, u128), PlanError> {
    if cfg.faces.is_empty() || cfg.tones.is_empty() {
        return Err(PlanError::EmptyAlphabet);
    }
    let terminals = terminal_count(model.num_players(), cfg.max_action_depth, cfg.num_pairs());
    if terminals > MAX_EXHAUSTIVE_TERMINALS {
        return Err(PlanError::SpaceTooLarge { terminals, limit: MAX_EXHAUSTIVE_TERMINALS });
    }
    let eval = Evaluator::new(model, &dialogue_tokens(history), agent)?;
    let m = eval.space().num_actions();
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    let mut visited: u128 = 0;
    let mut actions = Vec::with_capacity(cfg.max_action_depth);

    struct Walk<'e, 'm, M: BeliefModel> {
        eval: &'e Evaluator<'m, M>,
        m: usize,
        depth: usize,
    }

    impl<M: BeliefModel> Walk<'_, '_, M> {
        fn visit(
            &self,
            cfg: &MctsConfig,
            pair: usize,
            actions: &mut Vec<usize>,
            best: &mut Option<(f64, usize, Vec<usize>)>,
            visited: &mut u128,
        ) -> Result<(), PlanError> {
            let (face, tone) = cfg.pair(pair);
            let mut score = |actions: &[usize], best: &mut Option<(f64, usize, Vec<usize>)>| -> Result<(), PlanError> {
                *visited += 1;
                let r = self.eval.reward(face, tone, actions)?;
                if best.as_ref().is_none_or(|(b, _, _)| r > *b) {
                    *best = Some((r, pair, actions.to_vec()));
                }
                Ok(())
            };
            if actions.len() == self.depth {
                return score(actions, best);
            }
            // Stop here
            score(actions, best)?;
            for a in 0..self.m {
                actions.push(a);
                self.visit(cfg, pair, actions, best, visited)?;
                actions.pop();
            }
            Ok(())
        }
    }

    let walk = Walk { eval: &eval, m, depth: cfg.max_action_depth };
    for pair in 0..cfg.num_pairs() {
        walk.visit(cfg, pair, &mut actions, &mut best, &mut visited)?;
    }
    let (r, pair, acts) = best.expect("at least one terminal");
    let (face, tone) = cfg.pair(pair);
    Ok((PlanResult { actions: eval.triplets(&acts), face, tone, reward: r }, visited))
}
