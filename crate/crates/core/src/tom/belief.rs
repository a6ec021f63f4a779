use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::game::PlayerId;

/// Row-stochastic `|P| x |P|` matrix; entry `[i, j]` is player i's
/// probability that player j holds the werewolf card.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMatrix {
    n: usize,
    data: Vec<f64>,
}

impl BeliefMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "belief matrix must be square");
        Self { n, data: rows.into_iter().flatten().collect() }
    }

    pub fn from_flat(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    pub fn uniform(n: usize) -> Self {
        Self { n, data: vec![1.0 / n as f64; n * n] }
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn num_players(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        self.data.iter().all(|&x| (-tol..=1.0 + tol).contains(&x))
            && self.data.chunks(self.n).all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= tol)
    }

    /// Total suspicion the other players direct at `agent`.
    pub fn suspicion_toward(&self, agent: PlayerId) -> f64 {
        (0..self.n).filter(|&j| j != agent.index()).map(|j| self.get(j, agent.index())).sum()
    }

    /// Most-suspected other player in row `i`, lowest index on ties.
    pub fn top_suspect(&self, i: usize) -> PlayerId {
        let mut best = if i == 0 { 1 } else { 0 };
        for j in 0..self.n {
            if j != i && self.get(i, j) > self.get(i, best) {
                best = j;
            }
        }
        PlayerId(best)
    }
}

impl Serialize for BeliefMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BeliefMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("belief matrix must be square"));
        }
        Ok(Self::from_rows(rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_stochastic() {
        let b = BeliefMatrix::uniform(5);
        assert!(b.is_row_stochastic(1e-12));
        assert!((b.suspicion_toward(PlayerId(0)) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn rejects_ragged_json() {
        assert!(serde_json::from_str::<BeliefMatrix>("[[1.0],[0.5,0.5]]").is_err());
        let b: BeliefMatrix = serde_json::from_str("[[0.0,1.0],[1.0,0.0]]").unwrap();
        assert_eq!(b.get(0, 1), 1.0);
        assert_eq!(b.top_suspect(0), PlayerId(1));
    }
}
