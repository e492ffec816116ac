use std::fmt;

use serde::{Deserialize, Serialize};

/// Non-fatal findings collected while parsing, aligning or scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WarningKind {
    OccupancyConflict,
    UnsupportedPlacement,
    OutOfBounds,
    UnknownBlock,
    UnresolvedDescriptor,
    LayerConflict,
    DegenerateMarginals,
    ParseFailure,
    DroppedItem,
    EmptyTurn,
    InertEmblem,
    UngroundedProposition,
    ReplayFailure,
}

impl fmt::Display for WarningKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub kind: WarningKind,
    pub message: String,
}

impl Warning {
    pub fn new(kind: WarningKind, message: impl Into<String>) -> Self {
        Warning {
            kind,
            message: message.into(),
        }
    }

    /// Prefixes the message with a turn index.
    pub fn in_turn(mut self, turn: usize) -> Self {
        self.message = format!("turn {turn}: {}", self.message);
        self
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}
