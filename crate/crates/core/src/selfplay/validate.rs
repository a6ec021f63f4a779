use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::{EmotionLabel, NUM_PREDICATES, MAX_TRIPLETS};

use super::{gt_belief, DatasetRecord, SelfplayError};

const ROW_SUM_TOL: f64 = 1e-9;
const GT_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based line number in the file.
    pub line: usize,
    pub game_id: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub lines: usize,
    /// Lines that parsed as records, valid or not.
    pub records: usize,
    pub targets: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every line of a dataset file independently, so one malformed line
/// does not hide problems elsewhere.
pub fn validate_dataset(path: &Path) -> Result<ValidationReport, SelfplayError> {
    let reader = BufReader::new(File::open(path)?);
    let mut report = ValidationReport::default();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        match serde_json::from_str::<DatasetRecord>(&line) {
            Ok(rec) => {
                report.records += 1;
                report.targets += rec.targets.len();
                for message in check_record(&rec) {
                    report.violations.push(Violation { line: lineno, game_id: Some(rec.game_id), message });
                }
            }
            Err(e) => report.violations.push(Violation {
                line: lineno,
                game_id: None,
                message: format!("malformed record: {e}"),
            }),
        }
    }
    Ok(report)
}

/// Every problem found in one record.
pub fn check_record(rec: &DatasetRecord) -> Vec<String> {
    let mut out = Vec::new();
    let n = rec.num_players;
    if n < 2 {
        out.push(format!("num_players {n} is below 2"));
        return out;
    }
    for (k, tok) in rec.events.iter().enumerate() {
        if tok.subject >= n
            || tok.object >= n
            || tok.predicate >= NUM_PREDICATES
            || tok.face >= EmotionLabel::COUNT
            || tok.tone >= EmotionLabel::COUNT
        {
            out.push(format!("token {k} out of range: {tok:?}"));
        }
    }
    let mut offset = 0;
    let mut finals = Vec::new();
    for (t, s) in rec.statements.iter().enumerate() {
        if s.t != t {
            out.push(format!("statement {t} is numbered {}", s.t));
        }
        if s.first_token != offset {
            out.push(format!("statement {t} starts at token {} instead of {offset}", s.first_token));
        }
        if s.num_tokens > MAX_TRIPLETS {
            out.push(format!("statement {t} has {} tokens", s.num_tokens));
        }
        let span = s.first_token..s.first_token + s.num_tokens;
        match rec.events.get(span.clone()) {
            Some(tokens) => {
                for (k, tok) in span.clone().zip(tokens) {
                    if tok.subject != s.speaker.index() || tok.face != s.face.index() || tok.tone != s.tone.index() {
                        out.push(format!("token {k} does not match statement {t}'s speaker and labels"));
                    }
                }
            }
            None => out.push(format!("statement {t} spans tokens {span:?} beyond {} events", rec.events.len())),
        }
        offset = span.end;
        finals.push(s.final_token());
    }
    if offset != rec.events.len() {
        out.push(format!("statements cover {offset} of {} tokens", rec.events.len()));
    }
    let mut previous: Option<usize> = None;
    let mut covered = vec![false; rec.statements.len()];
    for target in &rec.targets {
        let idx = target.index;
        if previous.is_some_and(|p| idx <= p) {
            out.push(format!("target {idx} is out of order"));
        }
        previous = Some(idx);
        let m = &target.belief;
        if m.num_players() != n || m.as_flat().len() != n * n {
            out.push(format!("target {idx}: matrix is not {n}x{n}"));
            continue;
        }
        for i in 0..n {
            let row = m.row(i);
            if row.iter().any(|&x| !x.is_finite() || x < 0.0) {
                out.push(format!("target {idx}: row {i} has a negative or non-finite entry"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                out.push(format!("target {idx}: row {i} sums to {sum}"));
            }
        }
        let Some(t) = finals.iter().position(|&f| f == Some(idx)) else {
            out.push(format!("target {idx} is not at a statement-final token"));
            continue;
        };
        covered[t] = true;
        match gt_belief(&rec.statements[t].reports, n) {
            Ok(expected) => {
                let worst = expected
                    .as_flat()
                    .iter()
                    .zip(m.as_flat())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if worst > GT_MATCH_TOL {
                    out.push(format!("target {idx} differs from the reports of statement {t} by {worst:e}"));
                }
            }
            Err(e) => out.push(format!("statement {t}: {e}")),
        }
    }
    for (t, s) in rec.statements.iter().enumerate() {
        if s.num_tokens > 0 && !covered[t] {
            out.push(format!("statement {t} has tokens but no target"));
        }
    }
    out
}
