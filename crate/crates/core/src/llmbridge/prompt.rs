use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::{CgKey, Experiment, LlmError};
use crate::actionlog::{ActionEvent, ActionKind};
use crate::alignment::{AlignedEvent, Source};
use crate::annotations::Stance;
use crate::blockworld::RelationAtom;
use crate::warning::{Warning, WarningKind};

/// What happened during one turn.
#[derive(Debug, Clone, Copy)]
pub enum TurnContext<'a> {
    Actions(&'a [ActionEvent]),
    Events(&'a [AlignedEvent]),
}

impl TurnContext<'_> {
    fn is_empty(&self) -> bool {
        match self {
            TurnContext::Actions(a) => a.is_empty(),
            TurnContext::Events(e) => e.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub text: String,
    pub warnings: Vec<Warning>,
}

const BOARD: &str = "The board is a 3x3 grid with up to 3 layers (layer 0 is the bottom). \
Blocks are short (one cell) or long (two cells). Block ids combine a color initial \
(r red, g green, b blue, y yellow, o orange, p purple), a shape initial (s short, l long) \
and an index, e.g. rs1 or yl2. Directors D1, D2 and D3 each see one side of the \
structure (front, left, right); the Builder places the blocks.";

const RELATIONS: &str = "Relations: on(a, b) means a rests directly on b (b may be base); \
leftof(a, b, side) means a is left of b as seen from that side; behind(a, b, side) means \
a is farther from that side's viewer than b; nextto(a, b) means a and b touch on the same layer. \
Horizontal relations and on() carry the layer they hold on.";

/// `on(gs3, rs2, layer=1)`, with 0-indexed layers.
pub(crate) fn render_atom(a: &RelationAtom) -> String {
    let mut s = format!("{}({}, {}", a.relation, a.arg1, a.arg2);
    if let Some(side) = a.side {
        let _ = write!(s, ", {side}");
    }
    if let Some(l) = a.layer {
        let _ = write!(s, ", layer={l}");
    }
    s.push(')');
    s
}

/// One atom per line, in canonical order.
pub fn render_relations(atoms: &BTreeSet<RelationAtom>) -> String {
    if atoms.is_empty() {
        return "(none)\n".into();
    }
    atoms.iter().map(|a| format!("- {}\n", render_atom(a))).collect()
}

/// One shared belief per line, as `- CG{D1,D2}: on(rs1, base, layer=0)`.
pub fn render_cg(keys: &BTreeSet<CgKey>) -> String {
    if keys.is_empty() {
        return "(no common ground)\n".into();
    }
    keys.iter()
        .map(|(g, a)| {
            let names: Vec<&str> = g.iter().map(|p| p.as_str()).collect();
            format!("- CG{{{}}}: {}\n", names.join(","), render_atom(a))
        })
        .collect()
}

fn render_action(a: &ActionEvent) -> String {
    let mut line = format!("- t={:.2} {}", a.timestamp, a.kind);
    match (a.kind, a.origin, a.target) {
        (ActionKind::Move, Some(o), Some(t)) => {
            let _ = write!(line, " {o} -> {t}");
        }
        (_, _, Some(t)) => {
            let _ = write!(line, " {t}");
        }
        (_, Some(o), None) => {
            let _ = write!(line, " {o}");
        }
        _ => {
            let _ = write!(line, " {}", a.block);
        }
    }
    line
}

fn verb(s: Option<Stance>) -> &'static str {
    match s {
        Some(Stance::Accept) | None => "accepts",
        Some(Stance::Doubt) => "doubts",
        Some(Stance::Negate) => "rejects",
    }
}

fn render_event(e: &AlignedEvent) -> String {
    let t = e.timestamp;
    let who = e.participant;
    let prop = e.proposition.as_ref().map(render_atom).unwrap_or_default();
    let pid = e.prop_id.as_deref().unwrap_or("?");
    match e.source {
        Source::Speech => format!("- t={t:.2} {who} says [{pid}]: {prop}"),
        Source::Stance => format!("- t={t:.2} {who} {} [{pid}]: {prop}", verb(e.stance)),
        Source::Gesture => match e.stance {
            Some(s) => format!("- t={t:.2} {who} gestures, {} [{pid}]: {prop}", verb(Some(s))),
            None => format!("- t={t:.2} {who} gestures ({})", e.id),
        },
        Source::Action => match (e.stance, e.proposition) {
            (Some(Stance::Negate), Some(_)) => {
                format!("- t={t:.2} Builder action {}: no longer {prop}", e.id)
            }
            (_, Some(_)) => format!("- t={t:.2} Builder action {}: now {prop}", e.id),
            _ => format!("- t={t:.2} Builder action {}", e.id),
        },
    }
}

const GRID_SCHEMA: &str = r#"{"front": [[c, c, c], [c, c, c], [c, c, c]], "left": [...], "right": [...]}"#;
const RELATION_SCHEMA: &str = r#"{"relations": [{"relation": "on|leftof|behind|nextto", "arg1": "<block id>", "arg2": "<block id or base>", "side": "front|left|right|null", "layer": 0}]}"#;
const CG_SCHEMA: &str = r#"{"beliefs": {"D1": [<relation>], "D2": [...], "D3": [...], "Builder": [...]}, "common_ground": [{"participants": ["D1", "D2"], "relation": <relation>}]}"#;

/// Deterministic prompt for one turn. `prior` summarises the state before
/// the turn in the experiment's own terms (views, relations or common
/// ground). An empty turn still yields a prompt, with an `EmptyTurn` warning.
pub fn build_prompt(
    experiment: Experiment,
    context: TurnContext<'_>,
    prior: &str,
) -> Result<Prompt, LlmError> {
    let mut warnings = Vec::new();
    if context.is_empty() {
        warnings.push(Warning::new(
            WarningKind::EmptyTurn,
            format!("experiment {experiment}: turn has no events"),
        ));
    }
    let mut text = String::new();
    text.push_str(BOARD);
    text.push_str("\n\n");
    match experiment {
        Experiment::ActionsToStructure => text.push_str(
            "Task: given the structure before this turn and the Builder's actions during \
             the turn, output the status of the structure after the turn as three side views.\n",
        ),
        Experiment::EventsToStructure => {
            text.push_str(RELATIONS);
            text.push_str(
                "\n\nTask: given the structure before this turn and what was said, gestured \
                 and done during the turn, output the status of the structure after the turn \
                 as a list of relations between block ids.\n",
            );
        }
        Experiment::EventsToCg => {
            text.push_str(RELATIONS);
            text.push_str(
                "\n\nTask: given the common ground before this turn and what was said, \
                 gestured and done during the turn, output what each participant believes \
                 after the turn and the common ground (shared belief set): every relation \
                 accepted by at least two participants, with the group sharing it.\n",
            );
        }
        Experiment::CgcToStructure => return Err(LlmError::NoPrompt(experiment)),
    }

    text.push_str("\nBefore this turn:\n");
    let prior = prior.trim_end();
    if prior.is_empty() {
        text.push_str("(nothing)\n");
    } else {
        text.push_str(prior);
        text.push('\n');
    }

    text.push_str("\nDuring this turn:\n");
    let lines: Vec<String> = match context {
        TurnContext::Actions(actions) => actions.iter().map(render_action).collect(),
        TurnContext::Events(events) => events.iter().map(render_event).collect(),
    };
    if lines.is_empty() {
        text.push_str("(nothing happened)\n");
    }
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }

    text.push_str("\nAnswer with a single JSON object and nothing else, in this form:\n");
    match experiment {
        Experiment::ActionsToStructure => {
            text.push_str(GRID_SCHEMA);
            text.push_str(
                "\nEach view is a 3x3 list of blocks: three rows, top layer first, columns \
                 left to right as that director sees them; c is a color name (red, green, \
                 blue, yellow, orange, purple) or \"empty\".\n",
            );
        }
        Experiment::EventsToStructure => {
            text.push_str(RELATION_SCHEMA);
            text.push('\n');
        }
        Experiment::EventsToCg => {
            text.push_str(CG_SCHEMA);
            text.push_str("\nwhere <relation> has the form ");
            text.push_str(r#"{"relation": ..., "arg1": ..., "arg2": ..., "side": ..., "layer": ...}"#);
            text.push_str(
                ". The beliefs part is each participant's personal grounding; the \
                 common_ground part lists the shared beliefs.\n",
            );
        }
        Experiment::CgcToStructure => unreachable!(),
    }
    Ok(Prompt { text, warnings })
}
