//! Descriptor grounding, action attachment, layer attachment and the merge
//! of all annotation streams into one ordered timeline.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::actionlog::{state_at, ActionEvent};
use crate::annotations::{
    jsonl_header, jsonl_records, jsonl_write, AnnotationError, GestureEvent, GestureKind,
    Polarity, Proposition, Stance, StanceLabel,
};
use crate::blockworld::{BlockId, Relation, RelationAtom, StructureState, Term};
use crate::participants::Participant;
use crate::warning::{Warning, WarningKind};

pub const DEFAULT_GROUNDING_WINDOW: f64 = 30.0;
pub const DEFAULT_WINDOW_BEFORE: f64 = 10.0;
pub const DEFAULT_WINDOW_AFTER: f64 = 10.0;
pub const DEFAULT_EMBLEM_WINDOW: f64 = 15.0;

const ALIGNED_FORMAT: &str = "aligned";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub grounding_window: f64,
    pub window_before: f64,
    pub window_after: f64,
    pub emblem_window: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            grounding_window: DEFAULT_GROUNDING_WINDOW,
            window_before: DEFAULT_WINDOW_BEFORE,
            window_after: DEFAULT_WINDOW_AFTER,
            emblem_window: DEFAULT_EMBLEM_WINDOW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Speech,
    Gesture,
    Action,
    Stance,
}

/// A proposition after descriptor grounding.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedProp {
    pub prop: Proposition,
    /// Substitutions applied, e.g. `RedShort -> rs2 (a4 at t=14)`.
    pub notes: Vec<String>,
    /// Latest time among the proposition and the actions used to ground it.
    pub anchor_time: f64,
}

fn future_candidate(
    actions: &[ActionEvent],
    t: f64,
    window: f64,
    matches: impl Fn(&BlockId) -> bool,
) -> Option<&ActionEvent> {
    actions
        .iter()
        .filter(|a| a.timestamp >= t && a.timestamp - t <= window && matches(&a.block))
        .min_by(|x, y| {
            x.timestamp
                .total_cmp(&y.timestamp)
                .then_with(|| x.block.cmp(&y.block))
        })
}

/// Replaces color+shape descriptors with the block of the nearest future
/// action on a matching block within `window` seconds. Each argument is
/// grounded independently, but the two arguments never resolve to the same
/// block. Unmatched descriptors stay and raise `UnresolvedDescriptor`.
pub fn ground_descriptors(
    props: &[Proposition],
    actions: &[ActionEvent],
    window: f64,
) -> (Vec<GroundedProp>, Vec<Warning>) {
    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(props.len());
    for p in props {
        let mut notes = Vec::new();
        let mut anchor = p.timestamp;
        let rel = p.relation;
        let mut args = [rel.arg1, rel.arg2];
        for i in 0..2 {
            let Term::Descriptor(d) = args[i] else { continue };
            let other = args[1 - i].block();
            match future_candidate(actions, p.timestamp, window, |b| {
                d.matches(b) && Some(*b) != other
            }) {
                Some(a) => {
                    args[i] = Term::Block(a.block);
                    anchor = anchor.max(a.timestamp);
                    notes.push(format!("{d} -> {} ({} at t={})", a.block, a.id, a.timestamp));
                }
                None => warnings.push(Warning::new(
                    WarningKind::UnresolvedDescriptor,
                    format!(
                        "{}: no future action on a {d} within {window} s of t={}",
                        p.id, p.timestamp
                    ),
                )),
            }
        }
        let relation = RelationAtom {
            arg1: args[0],
            arg2: args[1],
            ..rel
        }
        .canonical();
        out.push(GroundedProp {
            prop: Proposition {
                relation,
                ..p.clone()
            },
            notes,
            anchor_time: anchor,
        });
    }
    (out, warnings)
}

/// Something with an id and a time span that actions can be linked to.
#[derive(Debug, Clone, PartialEq)]
pub struct Span {
    pub id: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLink {
    pub action: String,
    /// Action time minus event start.
    pub offset: f64,
}

/// Links each event to every action in `[start − before, end + after]`.
pub fn attach_actions(
    events: &[Span],
    actions: &[ActionEvent],
    before: f64,
    after: f64,
) -> BTreeMap<String, Vec<ActionLink>> {
    events
        .iter()
        .map(|e| {
            let links = actions
                .iter()
                .filter(|a| a.timestamp >= e.start - before && a.timestamp <= e.end + after)
                .map(|a| ActionLink {
                    action: a.id.clone(),
                    offset: a.timestamp - e.start,
                })
                .collect();
            (e.id.clone(), links)
        })
        .collect()
}

fn expected_layer(rel: &RelationAtom, state: &StructureState) -> Option<u8> {
    let layer = |t: Term| match t {
        Term::Base => Some(None),
        Term::Block(b) => state.layer_of(&b).map(Some),
        _ => None,
    };
    let (a, b) = (layer(rel.arg1)?, layer(rel.arg2)?);
    match rel.relation {
        Relation::On => match b {
            None => Some(0),
            Some(lb) => Some(lb),
        },
        _ => match (a, b) {
            (Some(la), Some(lb)) if la == lb => Some(la),
            _ => None,
        },
    }
}

/// Fills in a missing layer from the board. An annotated layer is never
/// changed; a disagreeing board only raises `LayerConflict`.
pub fn attach_layer(prop: &Proposition, state: &StructureState) -> (Proposition, Option<Warning>) {
    let expected = expected_layer(&prop.relation, state);
    match (prop.relation.layer, expected) {
        (None, Some(l)) => (
            Proposition {
                relation: prop.relation.with_layer(Some(l)),
                ..prop.clone()
            },
            None,
        ),
        (Some(annotated), Some(found)) if annotated != found => (
            prop.clone(),
            Some(Warning::new(
                WarningKind::LayerConflict,
                format!(
                    "{}: annotated layer {} but the board puts {} at layer {}",
                    prop.id,
                    annotated + 1,
                    prop.relation,
                    found + 1
                ),
            )),
        ),
        _ => (prop.clone(), None),
    }
}

/// One entry of the merged timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedEvent {
    /// Id of the raw event (`p3`, `g1`, `a2`, `s4`).
    pub id: String,
    #[serde(rename = "t")]
    pub timestamp: f64,
    pub source: Source,
    pub participant: Participant,
    /// Grounded atom, absent for pointing and iconic gestures, inert emblems
    /// and actions that changed no relation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposition: Option<RelationAtom>,
    /// The speech proposition this event is about, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prop_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<Stance>,
    #[serde(default)]
    pub provenance: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grounding_notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<ActionLink>,
}

/// `p10` sorts after `p9`.
fn natural_key(id: &str) -> (&str, u64, &str) {
    let split = id.find(|c: char| c.is_ascii_digit()).unwrap_or(id.len());
    let (prefix, rest) = id.split_at(split);
    let digits = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    (prefix, rest[..digits].parse().unwrap_or(0), &rest[digits..])
}

/// Total order: time, then speech < gesture < action < stance, then raw id,
/// then the atom itself.
pub fn timeline_order(a: &AlignedEvent, b: &AlignedEvent) -> Ordering {
    a.timestamp
        .total_cmp(&b.timestamp)
        .then_with(|| a.source.cmp(&b.source))
        .then_with(|| natural_key(&a.id).cmp(&natural_key(&b.id)))
        .then_with(|| a.proposition.cmp(&b.proposition))
        .then_with(|| a.stance.cmp(&b.stance))
        .then_with(|| a.prop_id.cmp(&b.prop_id))
}

fn polarity_stance(p: Polarity) -> Stance {
    match p {
        Polarity::Confirm => Stance::Accept,
        Polarity::Deny => Stance::Negate,
    }
}

/// Builds the ordered timeline. Speech propositions that are still not
/// grounded are left out with a warning, and so are stances on them. Emblems
/// take as target the latest proposition asserted in the preceding
/// `emblem_window` seconds by someone other than the gesturer; without one
/// they stay on the timeline without a stance.
pub fn merge_timeline(
    props: &[GroundedProp],
    gestures: &[GestureEvent],
    actions: &[ActionEvent],
    stances: &[StanceLabel],
    config: &AlignConfig,
) -> (Vec<AlignedEvent>, Vec<Warning>) {
    let mut warnings = Vec::new();
    let mut events = Vec::new();
    let mut spans: Vec<Span> = Vec::new();

    let mut grounded: BTreeMap<&str, &GroundedProp> = BTreeMap::new();
    for g in props {
        if !g.prop.is_grounded() {
            warnings.push(Warning::new(
                WarningKind::UngroundedProposition,
                format!("{} ({}) left out of the timeline", g.prop.id, g.prop.relation),
            ));
            continue;
        }
        grounded.insert(&g.prop.id, g);
        spans.push(Span {
            id: g.prop.id.clone(),
            start: g.prop.timestamp,
            end: g.prop.timestamp,
        });
        events.push(AlignedEvent {
            id: g.prop.id.clone(),
            timestamp: g.prop.timestamp,
            source: Source::Speech,
            participant: g.prop.speaker,
            proposition: Some(g.prop.relation),
            prop_id: Some(g.prop.id.clone()),
            stance: Some(Stance::Accept),
            provenance: vec![g.prop.id.clone()],
            grounding_notes: g.notes.clone(),
            links: Vec::new(),
        });
    }

    for g in gestures {
        spans.push(Span {
            id: g.id.clone(),
            start: g.start,
            end: g.end,
        });
        let sem = &g.semantics;
        let mut ev = AlignedEvent {
            id: g.id.clone(),
            timestamp: g.start,
            source: Source::Gesture,
            participant: sem.gesturer,
            proposition: None,
            prop_id: None,
            stance: None,
            provenance: vec![g.id.clone()],
            grounding_notes: Vec::new(),
            links: Vec::new(),
        };
        if sem.kind == GestureKind::Emblem {
            let polarity = sem.polarity().expect("emblems carry a polarity");
            let target = props
                .iter()
                .filter(|p| grounded.contains_key(p.prop.id.as_str()))
                .filter(|p| p.prop.speaker != sem.gesturer)
                .filter(|p| p.prop.timestamp <= g.start && g.start - p.prop.timestamp <= config.emblem_window)
                .max_by(|x, y| {
                    x.prop
                        .timestamp
                        .total_cmp(&y.prop.timestamp)
                        .then_with(|| natural_key(&x.prop.id).cmp(&natural_key(&y.prop.id)))
                });
            match target {
                Some(p) => {
                    ev.proposition = Some(p.prop.relation);
                    ev.prop_id = Some(p.prop.id.clone());
                    ev.stance = Some(polarity_stance(polarity));
                    ev.provenance.push(p.prop.id.clone());
                }
                None => warnings.push(Warning::new(
                    WarningKind::InertEmblem,
                    format!(
                        "{}: no proposition by another participant in the {} s before t={}",
                        g.id, config.emblem_window, g.start
                    ),
                )),
            }
        }
        events.push(ev);
    }

    for a in actions {
        let base = AlignedEvent {
            id: a.id.clone(),
            timestamp: a.timestamp,
            source: Source::Action,
            participant: Participant::Builder,
            proposition: None,
            prop_id: None,
            stance: None,
            provenance: vec![a.id.clone()],
            grounding_notes: Vec::new(),
            links: Vec::new(),
        };
        if a.relation_summary.is_empty() && a.retracted.is_empty() {
            events.push(base);
            continue;
        }
        for (atoms, stance) in [(&a.retracted, Stance::Negate), (&a.relation_summary, Stance::Accept)] {
            for atom in atoms {
                events.push(AlignedEvent {
                    proposition: Some(*atom),
                    stance: Some(stance),
                    ..base.clone()
                });
            }
        }
    }

    for s in stances {
        for pid in &s.props {
            let Some(g) = grounded.get(pid.as_str()) else {
                warnings.push(Warning::new(
                    WarningKind::UngroundedProposition,
                    format!("{}: stance on ungrounded {pid} dropped", s.id),
                ));
                continue;
            };
            events.push(AlignedEvent {
                id: s.id.clone(),
                timestamp: s.timestamp,
                source: Source::Stance,
                participant: s.participant,
                proposition: Some(g.prop.relation),
                prop_id: Some(pid.clone()),
                stance: Some(s.stance),
                provenance: vec![s.id.clone(), pid.clone()],
                grounding_notes: Vec::new(),
                links: Vec::new(),
            });
        }
    }

    let mut links = attach_actions(&spans, actions, config.window_before, config.window_after);
    for ev in &mut events {
        if matches!(ev.source, Source::Speech | Source::Gesture) {
            ev.links = links.remove(&ev.id).unwrap_or_default();
        }
    }
    events.sort_by(timeline_order);
    (events, warnings)
}

/// The full alignment stage: grounding, layer attachment and the merge.
/// Layers are read from the board at the proposition's anchor time, so a
/// proposition grounded by a later action sees that action's result.
pub fn align(
    props: &[Proposition],
    gestures: &[GestureEvent],
    actions: &[ActionEvent],
    stances: &[StanceLabel],
    config: &AlignConfig,
) -> (Vec<AlignedEvent>, Vec<Warning>) {
    let (mut grounded, mut warnings) = ground_descriptors(props, actions, config.grounding_window);
    for g in &mut grounded {
        let state = match state_at(actions, g.anchor_time) {
            Ok(s) => s,
            Err(e) => {
                warnings.push(Warning::new(
                    WarningKind::ReplayFailure,
                    format!("{}: board replay failed ({e}); layer left as annotated", g.prop.id),
                ));
                continue;
            }
        };
        let (p, w) = attach_layer(&g.prop, &state);
        g.prop = p;
        warnings.extend(w);
    }
    let (timeline, w) = merge_timeline(&grounded, gestures, actions, stances, config);
    warnings.extend(w);
    (timeline, warnings)
}

pub fn serialize_timeline(events: &[AlignedEvent]) -> String {
    jsonl_write(ALIGNED_FORMAT, events)
}

pub fn parse_timeline(text: &str) -> Result<Vec<AlignedEvent>, AnnotationError> {
    Ok(jsonl_records::<AlignedEvent>(text, ALIGNED_FORMAT)?
        .into_iter()
        .map(|(_, e)| e)
        .collect())
}

pub fn timeline_header() -> String {
    jsonl_header(ALIGNED_FORMAT)
}
