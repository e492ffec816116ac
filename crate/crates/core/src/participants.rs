use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::blockworld::Side;

/// One of the four people at the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Participant {
    D1,
    D2,
    D3,
    Builder,
}

impl Participant {
    pub const ALL: [Participant; 4] = [
        Participant::D1,
        Participant::D2,
        Participant::D3,
        Participant::Builder,
    ];

    pub const DIRECTORS: [Participant; 3] = [Participant::D1, Participant::D2, Participant::D3];

    pub fn as_str(self) -> &'static str {
        match self {
            Participant::D1 => "D1",
            Participant::D2 => "D2",
            Participant::D3 => "D3",
            Participant::Builder => "Builder",
        }
    }

    /// Lenient name normalization: accepts `D2`, `d2`, `Director 2`,
    /// `director-2`, `director_2`, `builder`, `B`.
    pub fn normalize(raw: &str) -> Option<Participant> {
        let squashed: String = raw
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '-' && *c != '_' && *c != '\'')
            .collect::<String>()
            .to_ascii_lowercase();
        match squashed.as_str() {
            "d1" | "director1" | "dir1" => Some(Participant::D1),
            "d2" | "director2" | "dir2" => Some(Participant::D2),
            "d3" | "director3" | "dir3" => Some(Participant::D3),
            "builder" | "b" | "thebuilder" => Some(Participant::Builder),
            _ => None,
        }
    }
}

impl fmt::Display for Participant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown participant `{0}`")]
pub struct UnknownParticipant(pub String);

impl FromStr for Participant {
    type Err = UnknownParticipant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Participant::normalize(s).ok_or_else(|| UnknownParticipant(s.to_string()))
    }
}

impl Serialize for Participant {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Participant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Bijection from the three directors to the three side views.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SideAssignment {
    sides: [Side; 3],
}

impl Default for SideAssignment {
    fn default() -> Self {
        SideAssignment {
            sides: [Side::Front, Side::Left, Side::Right],
        }
    }
}

impl SideAssignment {
    /// Returns `None` unless the three sides are pairwise distinct.
    pub fn new(d1: Side, d2: Side, d3: Side) -> Option<Self> {
        if d1 == d2 || d1 == d3 || d2 == d3 {
            return None;
        }
        Some(SideAssignment { sides: [d1, d2, d3] })
    }

    /// Sides of D1, D2 and D3 in that order.
    pub fn sides(&self) -> [Side; 3] {
        self.sides
    }

    pub fn side_of(&self, participant: Participant) -> Option<Side> {
        match participant {
            Participant::D1 => Some(self.sides[0]),
            Participant::D2 => Some(self.sides[1]),
            Participant::D3 => Some(self.sides[2]),
            Participant::Builder => None,
        }
    }

    pub fn director_of(&self, side: Side) -> Participant {
        let idx = self.sides.iter().position(|s| *s == side).expect("bijection");
        Participant::DIRECTORS[idx]
    }

    /// Resolves a side token that may be either a side name or a director alias.
    pub fn resolve(&self, token: &str) -> Option<Side> {
        if let Ok(side) = token.parse::<Side>() {
            return Some(side);
        }
        let token = token
            .trim()
            .trim_end_matches("side")
            .trim_end_matches(['\'', 's', ' ', '’']);
        Participant::normalize(token).and_then(|p| self.side_of(p))
    }
}
