//! Canonical annotation formats.
//!
//! Every group directory holds four files:
//!
//! * `speech.jsonl`: `{id, t, speaker, relation, arg1, arg2, side, layer?}`
//! * `sat_log.json`: `{schema_version, rows: [{t, block, x, y, z, orientation?}]}`
//! * `gestures.jsonl`: `{t_start, t_end, gamr}`
//! * `stances.jsonl`: `{t, participant, prop_id, stance}`
//!
//! JSONL files open with a header line carrying `schema_version`. Times are
//! seconds from session start; layers are 0-indexed.

mod gamr;
mod jsonl;
mod sat;
mod speech;
mod stances;

pub use gamr::{
    parse_gamr, parse_gestures, serialize_gestures, Addressee, GestureEvent, GestureKind,
    GestureMeaning, GestureSemantics, GestureTarget, Polarity,
};
pub use jsonl::SCHEMA_VERSION;
pub(crate) use jsonl::{header as jsonl_header, records as jsonl_records, write as jsonl_write};
pub use sat::{parse_sat_log, ParsedSatLog, SatLog, SatRow};
pub use speech::{parse_speech_props, serialize_speech_props, Proposition};
pub use stances::{parse_stances, serialize_stances, Stance, StanceLabel};

pub const SPEECH_FILE: &str = "speech.jsonl";
pub const SAT_FILE: &str = "sat_log.json";
pub const GESTURE_FILE: &str = "gestures.jsonl";
pub const STANCE_FILE: &str = "stances.jsonl";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnnotationError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: unknown relation `{name}`")]
    UnknownRelation { line: usize, name: String },
    #[error("line {line}: unknown participant `{name}`")]
    UnknownParticipant { line: usize, name: String },
    #[error("line {line}: unknown stance `{value}`")]
    UnknownStance { line: usize, value: String },
    #[error("line {line}: stance refers to undefined proposition `{prop_id}`")]
    DanglingPropositionRef { line: usize, prop_id: String },
    #[error("row {row}: timestamps decrease ({previous} then {next})")]
    NonMonotonicTimestamps { row: usize, previous: f64, next: f64 },
    #[error("malformed gesture graph: {0}")]
    MalformedGraph(String),
    #[error("gesture graph lacks required role :{0}")]
    MissingRole(String),
}

impl AnnotationError {
    pub(crate) fn schema(line: usize, message: impl Into<String>) -> Self {
        AnnotationError::Schema {
            line,
            message: message.into(),
        }
    }
}
