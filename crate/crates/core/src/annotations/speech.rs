use serde::{Deserialize, Serialize};

use super::{jsonl, AnnotationError};
use crate::blockworld::{RawRelation, RelationAtom, Side, Term};
use crate::participants::{Participant, SideAssignment};

const FORMAT: &str = "speech";

/// A relational claim extracted from one utterance.
///
/// Arguments may still be descriptors (`BlueShort`) until grounding replaces
/// them with block ids. `side` is the speaker's perspective; side-relative
/// relations also carry it inside `relation`.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposition {
    pub id: String,
    pub timestamp: f64,
    pub speaker: Participant,
    pub relation: RelationAtom,
    pub side: Option<Side>,
}

impl Proposition {
    pub fn layer(&self) -> Option<u8> {
        self.relation.layer
    }

    pub fn is_grounded(&self) -> bool {
        self.relation.is_grounded()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpeechRecord {
    id: String,
    t: f64,
    speaker: String,
    relation: String,
    arg1: String,
    arg2: String,
    #[serde(default)]
    side: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layer: Option<u8>,
}

fn term(line: usize, raw: &str) -> Result<Term, AnnotationError> {
    raw.parse::<Term>()
        .map_err(|e| AnnotationError::schema(line, e.to_string()))
}

/// Parses `speech.jsonl`. Relations are canonicalized; a missing `side`
/// defaults to the speaking director's side.
pub fn parse_speech_props(
    text: &str,
    sides: &SideAssignment,
) -> Result<Vec<Proposition>, AnnotationError> {
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (line, rec) in jsonl::records::<SpeechRecord>(text, FORMAT)? {
        let speaker = Participant::normalize(&rec.speaker).ok_or_else(|| {
            AnnotationError::UnknownParticipant {
                line,
                name: rec.speaker.clone(),
            }
        })?;
        let raw: RawRelation =
            rec.relation
                .parse()
                .map_err(|_| AnnotationError::UnknownRelation {
                    line,
                    name: rec.relation.clone(),
                })?;
        let side = match rec.side.as_deref() {
            Some(tok) => Some(sides.resolve(tok).ok_or_else(|| {
                AnnotationError::schema(line, format!("unknown side `{tok}`"))
            })?),
            None => sides.side_of(speaker),
        };
        if !seen.insert(rec.id.clone()) {
            return Err(AnnotationError::schema(
                line,
                format!("duplicate proposition id `{}`", rec.id),
            ));
        }
        out.push(Proposition {
            id: rec.id,
            timestamp: rec.t,
            speaker,
            relation: RelationAtom::new(
                raw,
                term(line, &rec.arg1)?,
                term(line, &rec.arg2)?,
                side,
                rec.layer,
            ),
            side,
        });
    }
    Ok(out)
}

pub fn serialize_speech_props(props: &[Proposition]) -> String {
    jsonl::write(
        FORMAT,
        props.iter().map(|p| SpeechRecord {
            id: p.id.clone(),
            t: p.timestamp,
            speaker: p.speaker.to_string(),
            relation: p.relation.relation.name().to_string(),
            arg1: p.relation.arg1.to_string(),
            arg2: p.relation.arg2.to_string(),
            side: p.side.map(|s| s.to_string()),
            layer: p.relation.layer,
        }),
    )
}
