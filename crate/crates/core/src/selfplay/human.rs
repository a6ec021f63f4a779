//! Ingest of externally annotated human games.
//!
//! Input is one JSON document:
//!
//! ```json
//! {
//!   "games": [
//!     {
//!       "game_id": 1,
//!       "num_players": 5,
//!       "roles": ["seer", "werewolf", "robber", "troublemaker", "insomniac"],
//!       "segments": [
//!         {
//!           "start": 12.5, "end": 15.0, "speaker": 0,
//!           "text": "I am the Seer. I suspect Player 1.",
//!           "face": "neutral", "tone": "fear",
//!           "intentions": [{"player": 2, "suspects": [1]}]
//!         }
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! `roles` and `intentions` are optional. Segments are ordered by `start`.
//! A player absent from a segment's `intentions` (or a segment without
//! them) gets an empty suspicion set, hence a uniform ground-truth row.
//! Triplets come from the template parser; a segment it cannot read
//! becomes a statement with no tokens and no target.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::action::{ActionSpace, EmotionLabel};
use crate::agents::SuspicionReport;
use crate::game::{PlayerId, Role};

use super::{DatasetRecord, RecordMetadata, SelfplayError, Spoken};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentIssue {
    pub game_id: Option<u64>,
    /// Position of the segment in the input, before sorting.
    pub segment: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanIngest {
    pub records: Vec<DatasetRecord>,
    pub segments: usize,
    /// Segments whose text yielded no triplets.
    pub unparsed: usize,
    pub issues: Vec<SegmentIssue>,
}

#[derive(Debug, Deserialize)]
struct RawGame {
    game_id: u64,
    num_players: usize,
    #[serde(default)]
    roles: Vec<Role>,
    segments: Vec<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    start: f64,
    end: f64,
    speaker: usize,
    text: String,
    face: String,
    tone: String,
    #[serde(default)]
    intentions: Vec<RawIntention>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntention {
    player: usize,
    suspects: Vec<usize>,
}

struct Segment {
    start: f64,
    speaker: PlayerId,
    text: String,
    face: EmotionLabel,
    tone: EmotionLabel,
    reports: Vec<SuspicionReport>,
}

fn label(s: &str, field: &str) -> Result<EmotionLabel, String> {
    EmotionLabel::from_str(s).map_err(|_| format!("unknown {field} label {s:?}"))
}

fn check_segment(raw: Value, n: usize) -> Result<Segment, String> {
    let seg: RawSegment = serde_json::from_value(raw).map_err(|e| e.to_string())?;
    if !(seg.start.is_finite() && seg.end.is_finite()) || seg.end < seg.start {
        return Err(format!("bad time span {}..{}", seg.start, seg.end));
    }
    if seg.speaker >= n {
        return Err(format!("speaker {} out of range", seg.speaker));
    }
    let face = label(&seg.face, "face")?;
    let tone = label(&seg.tone, "tone")?;
    let mut reports: Vec<SuspicionReport> =
        (0..n).map(|i| SuspicionReport { reporter: PlayerId(i), suspected: Vec::new() }).collect();
    let mut annotated = vec![false; n];
    for it in seg.intentions {
        if it.player >= n {
            return Err(format!("intention for player {} out of range", it.player));
        }
        if std::mem::replace(&mut annotated[it.player], true) {
            return Err(format!("two intentions for player {}", it.player));
        }
        if let Some(&bad) = it.suspects.iter().find(|&&q| q >= n || q == it.player) {
            return Err(format!("player {} cannot suspect {bad}", it.player));
        }
        let mut s: Vec<PlayerId> = it.suspects.into_iter().map(PlayerId).collect();
        s.sort();
        s.dedup();
        reports[it.player].suspected = s;
    }
    Ok(Segment { start: seg.start, speaker: PlayerId(seg.speaker), text: seg.text, face, tone, reports })
}

pub fn ingest_human_format(path: &Path) -> Result<HumanIngest, SelfplayError> {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let games = doc
        .get("games")
        .and_then(Value::as_array)
        .ok_or_else(|| SelfplayError::Schema("top-level \"games\" array missing".into()))?;
    let mut out = HumanIngest { records: Vec::new(), segments: 0, unparsed: 0, issues: Vec::new() };
    for (g, raw) in games.iter().enumerate() {
        let game: RawGame = serde_json::from_value(raw.clone())
            .map_err(|e| SelfplayError::Schema(format!("game {g}: {e}")))?;
        let n = game.num_players;
        if n < 2 {
            return Err(SelfplayError::Schema(format!("game {}: num_players {n} is below 2", game.game_id)));
        }
        let space = ActionSpace::new(n);
        let mut segments = Vec::new();
        for (k, seg) in game.segments.into_iter().enumerate() {
            match check_segment(seg, n) {
                Ok(s) => segments.push(s),
                Err(message) => out.issues.push(SegmentIssue { game_id: Some(game.game_id), segment: k, message }),
            }
        }
        segments.sort_by(|a, b| a.start.total_cmp(&b.start));
        out.segments += segments.len();
        let statements: Vec<Spoken> = segments
            .into_iter()
            .map(|s| {
                let triplets = space.parse(&s.text, s.speaker);
                if triplets.is_empty() {
                    out.unparsed += 1;
                }
                Spoken { speaker: s.speaker, text: s.text, triplets, face: s.face, tone: s.tone, reports: s.reports }
            })
            .collect();
        let metadata = RecordMetadata {
            source: "human".into(),
            roles: game.roles,
            final_roles: Vec::new(),
            agents: Vec::new(),
            outcome: None,
        };
        out.records.push(DatasetRecord::from_parts(game.game_id, 0, n, statements, metadata)?);
    }
    Ok(out)
}
