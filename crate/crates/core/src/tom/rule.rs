//! A belief model with no learned parameters: each observer applies the
//! scripted suspicion rule to the dialogue, and its row is a softmax of the
//! resulting scores over the other players.

use crate::action::{ActionTriplet, EmotionLabel, Predicate};
use crate::agents::scripted::SuspicionScores;
use crate::game::PlayerId;

use super::{BeliefMatrix, BeliefModel, EventToken, TomError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleBeliefModel {
    num_players: usize,
    temperature: f64,
}

impl RuleBeliefModel {
    pub fn new(num_players: usize, temperature: f64) -> Self {
        assert!(num_players >= 2, "need at least two players");
        assert!(temperature > 0.0, "temperature must be positive");
        Self { num_players, temperature }
    }

    fn decode(&self, token: &EventToken, position: usize) -> Result<(ActionTriplet, EmotionLabel, EmotionLabel), TomError> {
        let n = self.num_players;
        let bad = || TomError::TokenOutOfRange { position, token: *token };
        if token.subject >= n || token.object >= n {
            return Err(bad());
        }
        let predicate = Predicate::from_index(token.predicate).ok_or_else(bad)?;
        let face = EmotionLabel::from_index(token.face).ok_or_else(bad)?;
        let tone = EmotionLabel::from_index(token.tone).ok_or_else(bad)?;
        Ok((ActionTriplet::new(PlayerId(token.subject), predicate, PlayerId(token.object)), face, tone))
    }

    /// Splits tokens into statements: maximal runs sharing speaker and
    /// emotion labels.
    fn statements(&self, tokens: &[EventToken], offset: usize) -> Result<Vec<Statement>, TomError> {
        let mut out: Vec<Statement> = Vec::new();
        for (k, token) in tokens.iter().enumerate() {
            let (triplet, face, tone) = self.decode(token, offset + k)?;
            match out.last_mut() {
                Some(s) if s.speaker == triplet.subject && s.face == face && s.tone == tone => s.triplets.push(triplet),
                _ => out.push(Statement { speaker: triplet.subject, triplets: vec![triplet], face, tone }),
            }
        }
        Ok(out)
    }

    fn belief(&self, statements: &[Statement]) -> BeliefMatrix {
        let n = self.num_players;
        let mut m = BeliefMatrix::zeros(n);
        for i in 0..n {
            let mut scores = SuspicionScores::new(PlayerId(i), n);
            for s in statements {
                scores.observe(s.speaker, &s.triplets, s.face, s.tone);
            }
            let logits: Vec<f64> = (0..n)
                .map(|j| scores.get(PlayerId(j)).map_or(f64::NEG_INFINITY, |v| v as f64 / self.temperature))
                .collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&l| if l.is_finite() { (l - max).exp() } else { 0.0 }).collect();
            let z: f64 = exps.iter().sum();
            for (j, e) in exps.into_iter().enumerate() {
                m.set(i, j, e / z);
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
struct Statement {
    speaker: PlayerId,
    triplets: Vec<ActionTriplet>,
    face: EmotionLabel,
    tone: EmotionLabel,
}

#[derive(Debug, Clone)]
pub struct RuleContext {
    statements: Vec<Statement>,
    len: usize,
}

impl BeliefModel for RuleBeliefModel {
    type Context = RuleContext;

    fn num_players(&self) -> usize {
        self.num_players
    }

    fn condition(&self, history: &[EventToken]) -> Result<RuleContext, TomError> {
        Ok(RuleContext { statements: self.statements(history, 0)?, len: history.len() })
    }

    /// The candidate starts a new statement even when it continues a run of
    /// the history's last speaker.
    fn predict(&self, context: &RuleContext, candidate: &[EventToken]) -> Result<BeliefMatrix, TomError> {
        if context.len == 0 && candidate.is_empty() {
            return Ok(BeliefMatrix::uniform(self.num_players));
        }
        let mut statements = context.statements.clone();
        statements.extend(self.statements(candidate, context.len)?);
        Ok(self.belief(&statements))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tom::statement_tokens;
    use EmotionLabel::{Fear, Neutral};

    fn p(i: usize) -> PlayerId {
        PlayerId(i)
    }

    #[test]
    fn rows_are_stochastic_with_zero_diagonal() {
        let m = RuleBeliefModel::new(5, 1.0);
        let toks = statement_tokens(&[ActionTriplet::new(p(1), Predicate::Suspect, p(3))], Neutral, Fear);
        let ctx = m.condition(&[]).unwrap();
        let b = m.predict(&ctx, &toks).unwrap();
        assert!(b.is_row_stochastic(1e-12));
        for i in 0..5 {
            assert_eq!(b.get(i, i), 0.0);
        }
        // observer 0 now scores players 1 and 3 at +1
        assert_eq!(b.top_suspect(0), p(1));
        assert!((b.get(0, 1) - b.get(0, 3)).abs() < 1e-15);
        assert!(b.get(0, 1) > b.get(0, 2));
    }

    #[test]
    fn empty_everything_is_uniform() {
        let m = RuleBeliefModel::new(4, 1.0);
        let ctx = m.condition(&[]).unwrap();
        assert_eq!(m.predict(&ctx, &[]).unwrap(), BeliefMatrix::uniform(4));
    }

    #[test]
    fn candidate_starts_a_new_statement() {
        let m = RuleBeliefModel::new(3, 1.0);
        let t = [
            ActionTriplet::new(p(0), Predicate::Suspect, p(1)),
            ActionTriplet::new(p(0), Predicate::Suspect, p(2)),
        ];
        let toks = statement_tokens(&t, Fear, Neutral);
        let ctx = m.condition(&toks[..1]).unwrap();
        // the split candidate continues the history statement; fear counts
        // once for the history and once for the candidate
        let b = m.predict(&ctx, &toks[1..]).unwrap();
        let whole = m.predict(&m.condition(&[]).unwrap(), &toks).unwrap();
        assert!(b.get(1, 0) > whole.get(1, 0));
    }

    #[test]
    fn rejects_bad_tokens() {
        let m = RuleBeliefModel::new(3, 1.0);
        let bad = EventToken { subject: 5, predicate: 0, object: 0, face: 0, tone: 0 };
        assert!(m.condition(&[bad]).is_err());
    }
}
