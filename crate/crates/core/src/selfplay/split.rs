use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;

use super::SelfplayError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, val_fraction: f64, seed: u64) -> Self {
        Self { train_fraction, val_fraction, seed }
    }

    pub fn validate(&self) -> Result<(), SelfplayError> {
        let ok = |f: f64| f.is_finite() && (0.0..=1.0).contains(&f);
        if !ok(self.train_fraction) || !ok(self.val_fraction) {
            return Err(SelfplayError::Config("split fractions must lie in [0, 1]".into()));
        }
        if (self.train_fraction + self.val_fraction - 1.0).abs() > 1e-9 {
            return Err(SelfplayError::Config(format!(
                "split fractions sum to {}, not 1",
                self.train_fraction + self.val_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct GameIdOnly {
    game_id: u64,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    path.with_file_name(format!("{stem}.{suffix}.jsonl"))
}

/// Splits a dataset by whole games. Game ids are shuffled with the spec's
/// seed; the first `round(train_fraction * games)` go to training. Records
/// keep their original file order within each output, written next to the
/// input as `<stem>.train.jsonl` and `<stem>.val.jsonl`.
pub fn split_dataset(path: &Path, spec: &SplitSpec) -> Result<(PathBuf, PathBuf), SelfplayError> {
    spec.validate()?;
    let lines: Vec<String> = BufReader::new(File::open(path)?)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .collect::<Result<_, _>>()?;
    let mut ids = Vec::with_capacity(lines.len());
    for (k, l) in lines.iter().enumerate() {
        let g: GameIdOnly = serde_json::from_str(l)
            .map_err(|e| SelfplayError::Schema(format!("{}:{}: {e}", path.display(), k + 1)))?;
        ids.push(g.game_id);
    }
    let mut unique: Vec<u64> = ids.clone();
    unique.sort_unstable();
    unique.dedup();
    let games = unique.len();
    let train_n = (spec.train_fraction * games as f64).round() as usize;
    let val_n = games - train_n.min(games);
    if train_n == 0 || val_n == 0 {
        return Err(SelfplayError::TooFewGames { games, train: train_n.min(games), val: val_n });
    }
    unique.shuffle(&mut rng_from_seed(spec.seed));
    let train_ids: HashSet<u64> = unique[..train_n].iter().copied().collect();
    let (train_path, val_path) = (sibling(path, "train"), sibling(path, "val"));
    let mut train_w = BufWriter::new(File::create(&train_path)?);
    let mut val_w = BufWriter::new(File::create(&val_path)?);
    for (l, id) in lines.iter().zip(&ids) {
        let w = if train_ids.contains(id) { &mut train_w } else { &mut val_w };
        w.write_all(l.as_bytes())?;
        w.write_all(b"\n")?;
    }
    train_w.flush()?;
    val_w.flush()?;
    Ok((train_path, val_path))
}
