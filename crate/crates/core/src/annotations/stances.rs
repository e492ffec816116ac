use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{jsonl, AnnotationError};
use crate::participants::Participant;

const FORMAT: &str = "stances";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Accept,
    Doubt,
    Negate,
}

impl Stance {
    pub fn as_str(self) -> &'static str {
        match self {
            Stance::Accept => "accept",
            Stance::Doubt => "doubt",
            Stance::Negate => "negate",
        }
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stance {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accept" | "accepted" => Ok(Stance::Accept),
            "doubt" | "doubted" => Ok(Stance::Doubt),
            "negate" | "negated" => Ok(Stance::Negate),
            _ => Err(()),
        }
    }
}

/// A participant's stance toward one proposition, or toward several at once
/// (a multi-clause stance, applied to every conjunct).
#[derive(Debug, Clone, PartialEq)]
pub struct StanceLabel {
    pub id: String,
    pub timestamp: f64,
    pub participant: Participant,
    pub props: Vec<String>,
    pub stance: Stance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum PropRef {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StanceRecord {
    t: f64,
    participant: String,
    prop_id: PropRef,
    stance: String,
}

/// Parses `stances.jsonl`; every referenced id must be in `known_props`.
/// Labels get ids `s1`, `s2`, … in file order.
pub fn parse_stances(
    text: &str,
    known_props: &BTreeSet<String>,
) -> Result<Vec<StanceLabel>, AnnotationError> {
    let mut out = Vec::new();
    for (n, (line, rec)) in jsonl::records::<StanceRecord>(text, FORMAT)?.into_iter().enumerate() {
        let participant = Participant::normalize(&rec.participant).ok_or_else(|| {
            AnnotationError::UnknownParticipant {
                line,
                name: rec.participant.clone(),
            }
        })?;
        let stance = rec
            .stance
            .parse::<Stance>()
            .map_err(|_| AnnotationError::UnknownStance {
                line,
                value: rec.stance.clone(),
            })?;
        let props = match rec.prop_id {
            PropRef::One(p) => vec![p],
            PropRef::Many(ps) if !ps.is_empty() => ps,
            PropRef::Many(_) => return Err(AnnotationError::schema(line, "empty prop_id list")),
        };
        if let Some(missing) = props.iter().find(|p| !known_props.contains(*p)) {
            return Err(AnnotationError::DanglingPropositionRef {
                line,
                prop_id: missing.clone(),
            });
        }
        out.push(StanceLabel {
            id: format!("s{}", n + 1),
            timestamp: rec.t,
            participant,
            props,
            stance,
        });
    }
    Ok(out)
}

pub fn serialize_stances(labels: &[StanceLabel]) -> String {
    jsonl::write(
        FORMAT,
        labels.iter().map(|l| StanceRecord {
            t: l.timestamp,
            participant: l.participant.to_string(),
            prop_id: if l.props.len() == 1 {
                PropRef::One(l.props[0].clone())
            } else {
                PropRef::Many(l.props.clone())
            },
            stance: l.stance.to_string(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn known() -> BTreeSet<String> {
        ["p3", "p4"].into_iter().map(String::from).collect()
    }

    fn doc(line: &str) -> String {
        format!("{}\n{line}\n", jsonl::header(FORMAT))
    }

    #[test]
    fn accept_label() {
        let labels =
            parse_stances(&doc(r#"{"t":3.0,"participant":"D1","prop_id":"p3","stance":"accept"}"#), &known())
                .unwrap();
        assert_eq!(labels[0].participant, Participant::D1);
        assert_eq!(labels[0].props, ["p3"]);
        assert_eq!(labels[0].stance, Stance::Accept);
    }

    #[test]
    fn unknown_stance_and_dangling_ref() {
        assert!(matches!(
            parse_stances(&doc(r#"{"t":3.0,"participant":"D1","prop_id":"p3","stance":"maybe"}"#), &known()),
            Err(AnnotationError::UnknownStance { .. })
        ));
        assert!(matches!(
            parse_stances(&doc(r#"{"t":3.0,"participant":"D1","prop_id":"p99","stance":"accept"}"#), &known()),
            Err(AnnotationError::DanglingPropositionRef { .. })
        ));
    }

    #[test]
    fn multi_clause_round_trip() {
        let text = doc(r#"{"t":3.0,"participant":"D2","prop_id":["p3","p4"],"stance":"accept"}"#);
        let labels = parse_stances(&text, &known()).unwrap();
        assert_eq!(labels[0].props.len(), 2);
        assert_eq!(serialize_stances(&labels), text);
    }
}
