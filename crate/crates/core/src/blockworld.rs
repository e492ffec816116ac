//! Board model for the 3×3×3 construction task.
//!
//! Axis conventions: `x` is width (increasing rightward in the front view),
//! `y` is depth (increasing away from the front viewer) and `z` is the layer,
//! with `z = 0` resting on the base. Each [`Side`] maps a cell to a view
//! column (left to right as seen by that viewer) and a depth (0 = nearest):
//!
//! | side  | view column | depth   |
//! |-------|-------------|---------|
//! | front | `x`         | `y`     |
//! | left  | `2 - y`     | `x`     |
//! | right | `y`         | `2 - x` |
//!
//! Layers are stored 0-indexed and displayed 1-indexed.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::actionlog::{ActionEvent, ActionKind};

/// Board extent along every axis.
pub const DIM: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Orange,
    Purple,
}

impl Color {
    pub const ALL: [Color; 6] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Orange,
        Color::Purple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Orange => "orange",
            Color::Purple => "purple",
        }
    }

    pub fn initial(self) -> char {
        self.name().chars().next().unwrap()
    }

    pub fn from_initial(c: char) -> Option<Color> {
        Color::ALL
            .into_iter()
            .find(|col| col.initial() == c.to_ascii_lowercase())
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Color {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Color::ALL
            .into_iter()
            .find(|c| c.name() == lower)
            .ok_or_else(|| ParseError::Color(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Shape {
    /// One cell, the square brick.
    Short,
    /// Two cells, the rectangular brick.
    Long,
}

impl Shape {
    pub fn initial(self) -> char {
        match self {
            Shape::Short => 's',
            Shape::Long => 'l',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Short => "short",
            Shape::Long => "long",
        }
    }

    /// Accepts `short`/`square`/`small` and `long`/`rectangle`/`rectangular`.
    pub fn from_word(word: &str) -> Option<Shape> {
        match word.to_ascii_lowercase().as_str() {
            "short" | "square" | "small" | "s" => Some(Shape::Short),
            "long" | "rectangle" | "rectangular" | "rect" | "l" => Some(Shape::Long),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("unknown color `{0}`")]
    Color(String),
    #[error("malformed block id `{0}` (expected e.g. rs1, gl2)")]
    BlockId(String),
    #[error("unknown side `{0}`")]
    Side(String),
    #[error("unknown relation `{0}`")]
    Relation(String),
    #[error("malformed term `{0}`")]
    Term(String),
    #[error("unknown orientation `{0}`")]
    Orientation(String),
}

/// Block identity, written `<color-initial><shape-initial><index>` (`rs1`, `gl2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockId {
    pub color: Color,
    pub shape: Shape,
    pub index: u32,
}

impl BlockId {
    pub fn new(color: Color, shape: Shape, index: u32) -> Self {
        assert!(index >= 1, "block index is 1-based");
        BlockId {
            color,
            shape,
            index,
        }
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}{}",
            self.color.initial(),
            self.shape.initial(),
            self.index
        )
    }
}

// Ordered by textual form so that sorted output matches the spelled ids.
impl Ord for BlockId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        fn digits(mut n: u32, buf: &mut [u8; 10]) -> &[u8] {
            let mut i = buf.len();
            loop {
                i -= 1;
                buf[i] = b'0' + (n % 10) as u8;
                n /= 10;
                if n == 0 {
                    return &buf[i..];
                }
            }
        }
        let (mut l, mut r) = ([0u8; 10], [0u8; 10]);
        (self.color.initial(), self.shape.initial())
            .cmp(&(other.color.initial(), other.shape.initial()))
            .then_with(|| digits(self.index, &mut l).cmp(digits(other.index, &mut r)))
    }
}

impl PartialOrd for BlockId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl FromStr for BlockId {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseError::BlockId(s.to_string());
        let mut chars = s.chars();
        let color = chars.next().and_then(Color::from_initial).ok_or_else(err)?;
        let shape = match chars.next() {
            Some('s') | Some('S') => Shape::Short,
            Some('l') | Some('L') => Shape::Long,
            _ => return Err(err()),
        };
        let digits = chars.as_str();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let index: u32 = digits.parse().map_err(|_| err())?;
        if index == 0 || digits.starts_with('0') {
            return Err(err());
        }
        Ok(BlockId {
            color,
            shape,
            index,
        })
    }
}

impl Serialize for BlockId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BlockId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: u8,
    pub y: u8,
    pub z: u8,
}

impl Cell {
    pub const fn new(x: u8, y: u8, z: u8) -> Self {
        Cell { x, y, z }
    }

    pub fn in_bounds(self) -> bool {
        self.x < DIM && self.y < DIM && self.z < DIM
    }

    pub fn below(self) -> Option<Cell> {
        self.z.checked_sub(1).map(|z| Cell { z, ..self })
    }

    /// Face neighbours inside the board volume.
    pub fn neighbours(self) -> impl Iterator<Item = Cell> {
        let Cell { x, y, z } = self;
        let deltas: [(i8, i8, i8); 6] = [
            (1, 0, 0),
            (-1, 0, 0),
            (0, 1, 0),
            (0, -1, 0),
            (0, 0, 1),
            (0, 0, -1),
        ];
        deltas.into_iter().filter_map(move |(dx, dy, dz)| {
            let nx = x as i8 + dx;
            let ny = y as i8 + dy;
            let nz = z as i8 + dz;
            let c = Cell::new(nx as u8, ny as u8, nz as u8);
            (nx >= 0 && ny >= 0 && nz >= 0 && c.in_bounds()).then_some(c)
        })
    }

    /// Every cell of the board, x fastest.
    pub fn all() -> impl Iterator<Item = Cell> {
        (0..DIM).flat_map(|z| (0..DIM).flat_map(move |y| (0..DIM).map(move |x| Cell::new(x, y, z))))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Orientation {
    #[default]
    AlongX,
    AlongY,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::AlongX => "x",
            Orientation::AlongY => "y",
        }
    }
}

impl FromStr for Orientation {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" | "along-x" | "alongx" | "along_x" => Ok(Orientation::AlongX),
            "y" | "along-y" | "alongy" | "along_y" => Ok(Orientation::AlongY),
            _ => Err(ParseError::Orientation(s.to_string())),
        }
    }
}

impl Serialize for Orientation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Orientation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// A block resting at an anchor cell. Long blocks also occupy the next cell
/// in the orientation direction; short blocks always carry `AlongX`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub block: BlockId,
    pub anchor: Cell,
    pub orientation: Orientation,
}

impl Placement {
    pub fn new(block: BlockId, anchor: Cell, orientation: Orientation) -> Self {
        let orientation = match block.shape {
            Shape::Short => Orientation::AlongX,
            Shape::Long => orientation,
        };
        Placement {
            block,
            anchor,
            orientation,
        }
    }

    pub fn short(block: BlockId, x: u8, y: u8, z: u8) -> Self {
        Placement::new(block, Cell::new(x, y, z), Orientation::AlongX)
    }

    /// Occupied cells; may fall outside the board for invalid placements.
    pub fn cells(&self) -> Vec<Cell> {
        let a = self.anchor;
        match (self.block.shape, self.orientation) {
            (Shape::Short, _) => vec![a],
            (Shape::Long, Orientation::AlongX) => vec![a, Cell { x: a.x + 1, ..a }],
            (Shape::Long, Orientation::AlongY) => vec![a, Cell { y: a.y + 1, ..a }],
        }
    }

    pub fn layer(&self) -> u8 {
        self.anchor.z
    }

    pub fn in_bounds(&self) -> bool {
        self.cells().iter().all(|c| c.in_bounds())
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.block, self.anchor)?;
        if self.block.shape == Shape::Long {
            write!(f, "/{}", self.orientation.as_str())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BoardError {
    #[error("cell {cell} needed by {block} is occupied by {occupant}")]
    OccupiedCell {
        cell: Cell,
        block: BlockId,
        occupant: BlockId,
    },
    #[error("{block} would float: no occupied cell under any of its cells at layer {layer}")]
    UnsupportedPlacement { block: BlockId, layer: u8 },
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("{block} reaches outside the board at {cell}")]
    OutOfBounds { block: BlockId, cell: Cell },
    #[error("{0} is already on the board")]
    DuplicateBlock(BlockId),
}

impl BoardError {
    pub fn warning_kind(&self) -> crate::WarningKind {
        use crate::WarningKind as W;
        match self {
            BoardError::OccupiedCell { .. } | BoardError::DuplicateBlock(_) => W::OccupancyConflict,
            BoardError::UnsupportedPlacement { .. } => W::UnsupportedPlacement,
            BoardError::UnknownBlock(_) => W::UnknownBlock,
            BoardError::OutOfBounds { .. } => W::OutOfBounds,
        }
    }
}

/// A board primitive, the geometric core of an [`ActionEvent`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoardAction {
    Put(Placement),
    Remove(BlockId),
    Move { block: BlockId, to: Placement },
}

/// Set of placements on the board. Value semantics: every transition
/// returns a new state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StructureState {
    placements: BTreeMap<BlockId, Placement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
}

impl StructureState {
    pub fn empty() -> Self {
        StructureState::default()
    }

    /// Builds a state, checking bounds, occupancy and support.
    pub fn from_placements(
        placements: impl IntoIterator<Item = Placement>,
        timestamp: Option<f64>,
    ) -> Result<Self, BoardError> {
        let state = StructureState::unchecked(placements, timestamp)?;
        state.validate()?;
        Ok(state)
    }

    /// Builds a state without occupancy or support checks; only duplicate
    /// block ids are rejected.
    pub fn unchecked(
        placements: impl IntoIterator<Item = Placement>,
        timestamp: Option<f64>,
    ) -> Result<Self, BoardError> {
        let mut map = BTreeMap::new();
        for p in placements {
            if map.insert(p.block, p).is_some() {
                return Err(BoardError::DuplicateBlock(p.block));
            }
        }
        Ok(StructureState {
            placements: map,
            timestamp,
        })
    }

    /// Checks every invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), BoardError> {
        self.violations().into_iter().next().map_or(Ok(()), Err)
    }

    /// All invariant violations, in block order.
    pub fn violations(&self) -> Vec<BoardError> {
        let mut out = Vec::new();
        let mut occupied: BTreeMap<Cell, BlockId> = BTreeMap::new();
        for p in self.placements.values() {
            for cell in p.cells() {
                if !cell.in_bounds() {
                    out.push(BoardError::OutOfBounds {
                        block: p.block,
                        cell,
                    });
                } else if let Some(prev) = occupied.insert(cell, p.block) {
                    out.push(BoardError::OccupiedCell {
                        cell,
                        block: p.block,
                        occupant: prev,
                    });
                }
            }
        }
        for p in self.placements.values() {
            if p.in_bounds() && !self.is_supported(p, &occupied) {
                out.push(BoardError::UnsupportedPlacement {
                    block: p.block,
                    layer: p.layer(),
                });
            }
        }
        out
    }

    fn is_supported(&self, p: &Placement, occupied: &BTreeMap<Cell, BlockId>) -> bool {
        p.layer() == 0
            || p.cells().iter().any(|c| {
                c.below()
                    .and_then(|b| occupied.get(&b))
                    .is_some_and(|owner| *owner != p.block)
            })
    }

    pub fn placements(&self) -> impl Iterator<Item = &Placement> {
        self.placements.values()
    }

    pub fn placement(&self, block: &BlockId) -> Option<&Placement> {
        self.placements.get(block)
    }

    pub fn contains(&self, block: &BlockId) -> bool {
        self.placements.contains_key(block)
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    /// Cell → owning block.
    pub fn occupancy(&self) -> BTreeMap<Cell, BlockId> {
        let mut map = BTreeMap::new();
        for p in self.placements.values() {
            for c in p.cells() {
                map.insert(c, p.block);
            }
        }
        map
    }

    /// Same placements, ignoring the timestamp.
    pub fn same_board(&self, other: &StructureState) -> bool {
        self.placements == other.placements
    }

    fn check_target(&self, p: &Placement) -> Result<(), BoardError> {
        for cell in p.cells() {
            if !cell.in_bounds() {
                return Err(BoardError::OutOfBounds {
                    block: p.block,
                    cell,
                });
            }
        }
        let occupied = self.occupancy();
        for cell in p.cells() {
            if let Some(owner) = occupied.get(&cell) {
                return Err(BoardError::OccupiedCell {
                    cell,
                    block: p.block,
                    occupant: *owner,
                });
            }
        }
        if !self.is_supported(p, &occupied) {
            return Err(BoardError::UnsupportedPlacement {
                block: p.block,
                layer: p.layer(),
            });
        }
        Ok(())
    }

    /// Applies one primitive. Puts and move targets must be in bounds, free
    /// and supported. Removal only requires the block to be present; blocks
    /// resting on it stay in place until later actions settle them.
    pub fn apply(&self, action: &BoardAction) -> Result<StructureState, BoardError> {
        let mut next = self.clone();
        match *action {
            BoardAction::Put(p) => {
                if self.contains(&p.block) {
                    return Err(BoardError::DuplicateBlock(p.block));
                }
                self.check_target(&p)?;
                next.placements.insert(p.block, p);
            }
            BoardAction::Remove(block) => {
                if next.placements.remove(&block).is_none() {
                    return Err(BoardError::UnknownBlock(block));
                }
            }
            BoardAction::Move { block, to } => {
                if next.placements.remove(&block).is_none() {
                    return Err(BoardError::UnknownBlock(block));
                }
                next.check_target(&to)?;
                next.placements.insert(block, to);
            }
        }
        Ok(next)
    }

    pub fn layer_of(&self, block: &BlockId) -> Option<u8> {
        self.placements.get(block).map(Placement::layer)
    }
}

/// Applies an extracted action; the input state is left untouched and the
/// result carries the action's timestamp.
pub fn apply_action(state: &StructureState, action: &ActionEvent) -> Result<StructureState, BoardError> {
    let primitive = match action.kind {
        ActionKind::Put => BoardAction::Put(action.target.expect("put carries a target")),
        ActionKind::Remove => BoardAction::Remove(action.block),
        ActionKind::Move => BoardAction::Move {
            block: action.block,
            to: action.target.expect("move carries a target"),
        },
    };
    let mut next = state.apply(&primitive)?;
    next.timestamp = Some(action.timestamp);
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Front,
    Left,
    Right,
}

impl Side {
    pub const ALL: [Side; 3] = [Side::Front, Side::Left, Side::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Front => "front",
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    /// View column, 0 at the viewer's left.
    pub fn column(self, c: Cell) -> u8 {
        match self {
            Side::Front => c.x,
            Side::Left => DIM - 1 - c.y,
            Side::Right => c.y,
        }
    }

    /// Distance from the viewer, 0 nearest.
    pub fn depth(self, c: Cell) -> u8 {
        match self {
            Side::Front => c.y,
            Side::Left => c.x,
            Side::Right => DIM - 1 - c.x,
        }
    }

    /// Inverse of (`column`, `depth`) at a given layer.
    pub fn cell_at(self, column: u8, depth: u8, layer: u8) -> Cell {
        match self {
            Side::Front => Cell::new(column, depth, layer),
            Side::Left => Cell::new(depth, DIM - 1 - column, layer),
            Side::Right => Cell::new(DIM - 1 - depth, column, layer),
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "front" => Ok(Side::Front),
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            _ => Err(ParseError::Side(s.to_string())),
        }
    }
}

impl Serialize for Side {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Side {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Ungrounded color+shape reference such as `RedShort`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Descriptor {
    pub color: Color,
    pub shape: Shape,
}

impl Descriptor {
    pub fn matches(&self, block: &BlockId) -> bool {
        block.color == self.color && block.shape == self.shape
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cap = |s: &str| {
            let mut c = s.chars();
            c.next()
                .map(|h| h.to_ascii_uppercase().to_string() + c.as_str())
                .unwrap_or_default()
        };
        write!(f, "{}{}", cap(self.color.name()), cap(self.shape.name()))
    }
}

impl FromStr for Descriptor {
    type Err = ParseError;

    /// `<Color><Short|Long>`, case-insensitive, optional `Block` suffix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let lower = lower.strip_suffix("block").unwrap_or(&lower);
        for color in Color::ALL {
            if let Some(rest) = lower.strip_prefix(color.name()) {
                let shape = match rest {
                    "short" => Shape::Short,
                    "long" => Shape::Long,
                    _ => continue,
                };
                return Ok(Descriptor { color, shape });
            }
        }
        Err(ParseError::Term(s.to_string()))
    }
}

/// Argument of a relation atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Base,
    Block(BlockId),
    Descriptor(Descriptor),
    /// Bare color token, used when translating view grids.
    Color(Color),
}

impl Term {
    pub fn is_grounded(&self) -> bool {
        matches!(self, Term::Base | Term::Block(_))
    }

    pub fn block(&self) -> Option<BlockId> {
        match self {
            Term::Block(b) => Some(*b),
            _ => None,
        }
    }

    /// Drops block identity, keeping only the color.
    pub fn to_token(self) -> Term {
        match self {
            Term::Block(b) => Term::Color(b.color),
            Term::Descriptor(d) => Term::Color(d.color),
            other => other,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Base => f.write_str("base"),
            Term::Block(b) => b.fmt(f),
            Term::Descriptor(d) => d.fmt(f),
            Term::Color(c) => c.fmt(f),
        }
    }
}

impl FromStr for Term {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("base") || t.eq_ignore_ascii_case("table") {
            return Ok(Term::Base);
        }
        if let Ok(b) = t.parse::<BlockId>() {
            return Ok(Term::Block(b));
        }
        if let Ok(d) = t.parse::<Descriptor>() {
            return Ok(Term::Descriptor(d));
        }
        if let Ok(c) = t.parse::<Color>() {
            return Ok(Term::Color(c));
        }
        Err(ParseError::Term(s.to_string()))
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Relation names accepted on input, before canonicalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RawRelation {
    On,
    Below,
    LeftOf,
    RightOf,
    NextTo,
    Behind,
    InFrontOf,
}

impl FromStr for RawRelation {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let squashed: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match squashed.as_str() {
            "on" | "ontopof" | "above" => RawRelation::On,
            "below" | "under" | "beneath" => RawRelation::Below,
            "leftof" | "left" => RawRelation::LeftOf,
            "rightof" | "right" => RawRelation::RightOf,
            "nextto" | "beside" | "adjacent" => RawRelation::NextTo,
            "behind" => RawRelation::Behind,
            "infrontof" | "infront" => RawRelation::InFrontOf,
            _ => return Err(ParseError::Relation(s.to_string())),
        })
    }
}

/// Canonical relation vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    On,
    LeftOf,
    NextTo,
    Behind,
}

impl Relation {
    pub fn name(self) -> &'static str {
        match self {
            Relation::On => "on",
            Relation::LeftOf => "leftof",
            Relation::NextTo => "nextto",
            Relation::Behind => "behind",
        }
    }

    /// Whether the relation is relative to a viewer.
    pub fn is_side_relative(self) -> bool {
        matches!(self, Relation::LeftOf | Relation::Behind)
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A spatial relation between two terms in canonical form: `below`,
/// `rightof` and `infrontof` never appear, `nextto` arguments are ordered by
/// their text, and side-invariant relations never carry a side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationAtom {
    pub relation: Relation,
    pub arg1: Term,
    pub arg2: Term,
    pub side: Option<Side>,
    /// 0-indexed layer.
    pub layer: Option<u8>,
}

impl RelationAtom {
    pub fn new(raw: RawRelation, a: Term, b: Term, side: Option<Side>, layer: Option<u8>) -> Self {
        let (relation, arg1, arg2) = match raw {
            RawRelation::On => (Relation::On, a, b),
            RawRelation::Below => (Relation::On, b, a),
            RawRelation::LeftOf => (Relation::LeftOf, a, b),
            RawRelation::RightOf => (Relation::LeftOf, b, a),
            RawRelation::Behind => (Relation::Behind, a, b),
            RawRelation::InFrontOf => (Relation::Behind, b, a),
            RawRelation::NextTo => {
                if b.to_string() < a.to_string() {
                    (Relation::NextTo, b, a)
                } else {
                    (Relation::NextTo, a, b)
                }
            }
        };
        let side = if relation.is_side_relative() { side } else { None };
        RelationAtom {
            relation,
            arg1,
            arg2,
            side,
            layer,
        }
    }

    pub fn on(top: Term, bottom: Term, layer: Option<u8>) -> Self {
        RelationAtom::new(RawRelation::On, top, bottom, None, layer)
    }

    pub fn nextto(a: Term, b: Term, layer: Option<u8>) -> Self {
        RelationAtom::new(RawRelation::NextTo, a, b, None, layer)
    }

    pub fn leftof(a: Term, b: Term, side: Side, layer: Option<u8>) -> Self {
        RelationAtom::new(RawRelation::LeftOf, a, b, Some(side), layer)
    }

    pub fn behind(a: Term, b: Term, side: Side, layer: Option<u8>) -> Self {
        RelationAtom::new(RawRelation::Behind, a, b, Some(side), layer)
    }

    fn raw(&self) -> RawRelation {
        match self.relation {
            Relation::On => RawRelation::On,
            Relation::LeftOf => RawRelation::LeftOf,
            Relation::NextTo => RawRelation::NextTo,
            Relation::Behind => RawRelation::Behind,
        }
    }

    /// Re-applies canonicalization, e.g. after argument substitution.
    pub fn canonical(self) -> Self {
        RelationAtom::new(self.raw(), self.arg1, self.arg2, self.side, self.layer)
    }

    pub fn is_grounded(&self) -> bool {
        self.arg1.is_grounded() && self.arg2.is_grounded()
    }

    pub fn mentions(&self, block: &BlockId) -> bool {
        self.arg1.block() == Some(*block) || self.arg2.block() == Some(*block)
    }

    /// Block arguments replaced by their color tokens.
    pub fn to_tokens(self) -> Self {
        RelationAtom::new(
            self.raw(),
            self.arg1.to_token(),
            self.arg2.to_token(),
            self.side,
            self.layer,
        )
    }

    pub fn with_layer(self, layer: Option<u8>) -> Self {
        RelationAtom { layer, ..self }
    }

    pub fn map_terms(self, mut f: impl FnMut(Term) -> Term) -> Self {
        RelationAtom::new(self.raw(), f(self.arg1), f(self.arg2), self.side, self.layer)
    }
}

impl fmt::Display for RelationAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {}", self.relation, self.arg1, self.arg2)?;
        if let Some(side) = self.side {
            write!(f, ", {side}")?;
        }
        if let Some(layer) = self.layer {
            write!(f, ", layer {}", layer + 1)?;
        }
        f.write_str(")")
    }
}

/// Wire form of a relation atom, shared by every JSON format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationRecord {
    pub relation: String,
    pub arg1: String,
    pub arg2: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<u8>,
}

impl RelationRecord {
    pub fn to_atom(&self) -> Result<RelationAtom, ParseError> {
        let raw: RawRelation = self.relation.parse()?;
        let a: Term = self.arg1.parse()?;
        let b: Term = self.arg2.parse()?;
        let side = self.side.as_deref().map(str::parse::<Side>).transpose()?;
        Ok(RelationAtom::new(raw, a, b, side, self.layer))
    }
}

impl From<&RelationAtom> for RelationRecord {
    fn from(atom: &RelationAtom) -> Self {
        RelationRecord {
            relation: atom.relation.name().to_string(),
            arg1: atom.arg1.to_string(),
            arg2: atom.arg2.to_string(),
            side: atom.side.map(|s| s.as_str().to_string()),
            layer: atom.layer,
        }
    }
}

impl Serialize for RelationAtom {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RelationRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for RelationAtom {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        RelationRecord::deserialize(d)?
            .to_atom()
            .map_err(serde::de::Error::custom)
    }
}

struct BlockGeometry {
    block: BlockId,
    layer: u8,
    cells: Vec<Cell>,
}

fn geometry(state: &StructureState) -> Vec<BlockGeometry> {
    state
        .placements()
        .map(|p| BlockGeometry {
            block: p.block,
            layer: p.layer(),
            cells: p.cells(),
        })
        .collect()
}

/// Canonical relation atoms holding in `state` as seen from `side`.
///
/// * `on(a, b)` at b's layer when a cell of `a` sits directly above a cell of `b`;
///   `on(a, base)` at layer 0 for blocks on the base.
/// * `nextto(a, b)` when both share a layer and have face-adjacent cells.
/// * `leftof(a, b, side)` when both share a layer and a's leftmost view column
///   is strictly smaller than b's.
/// * `behind(a, b, side)` when both share a layer and a's nearest depth is
///   strictly greater than b's.
pub fn derive_relations(state: &StructureState, side: Side) -> BTreeSet<RelationAtom> {
    let blocks = geometry(state);
    let mut out = BTreeSet::new();
    for a in &blocks {
        if a.layer == 0 {
            out.insert(RelationAtom::on(Term::Block(a.block), Term::Base, Some(0)));
        }
        let min_col_a = a.cells.iter().map(|c| side.column(*c)).min().unwrap();
        let min_depth_a = a.cells.iter().map(|c| side.depth(*c)).min().unwrap();
        for b in &blocks {
            if a.block == b.block {
                continue;
            }
            let (ta, tb) = (Term::Block(a.block), Term::Block(b.block));
            if a.layer == b.layer + 1
                && a.cells
                    .iter()
                    .any(|ca| b.cells.iter().any(|cb| ca.x == cb.x && ca.y == cb.y))
            {
                out.insert(RelationAtom::on(ta, tb, Some(b.layer)));
            }
            if a.layer != b.layer {
                continue;
            }
            let layer = Some(a.layer);
            let adjacent = a.cells.iter().any(|ca| {
                b.cells
                    .iter()
                    .any(|cb| ca.x.abs_diff(cb.x) + ca.y.abs_diff(cb.y) == 1)
            });
            if adjacent {
                out.insert(RelationAtom::nextto(ta, tb, layer));
            }
            let min_col_b = b.cells.iter().map(|c| side.column(*c)).min().unwrap();
            if min_col_a < min_col_b {
                out.insert(RelationAtom::leftof(ta, tb, side, layer));
            }
            let min_depth_b = b.cells.iter().map(|c| side.depth(*c)).min().unwrap();
            if min_depth_a > min_depth_b {
                out.insert(RelationAtom::behind(ta, tb, side, layer));
            }
        }
    }
    out
}

/// Union of [`derive_relations`] over the three sides.
pub fn derive_all_relations(state: &StructureState) -> BTreeSet<RelationAtom> {
    Side::ALL
        .into_iter()
        .flat_map(|s| derive_relations(state, s))
        .collect()
}

/// Atoms of [`derive_all_relations`] that mention `block`.
pub fn relations_involving(state: &StructureState, block: &BlockId) -> BTreeSet<RelationAtom> {
    derive_all_relations(state)
        .into_iter()
        .filter(|a| a.mentions(block))
        .collect()
}

/// 3×3 projection of the board seen from one side; cells hold the color of
/// the nearest block in that column and layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SideView {
    pub side: Side,
    /// Indexed `[layer][column]`.
    pub cells: [[Option<Color>; DIM as usize]; DIM as usize],
}

impl SideView {
    pub fn empty(side: Side) -> Self {
        SideView {
            side,
            cells: [[None; DIM as usize]; DIM as usize],
        }
    }

    pub fn get(&self, column: u8, layer: u8) -> Option<Color> {
        self.cells[layer as usize][column as usize]
    }

    pub fn filled(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }

    /// Rows of tokens, top layer first; empty cells are `"empty"`.
    pub fn rows(&self) -> Vec<Vec<String>> {
        (0..DIM)
            .rev()
            .map(|layer| {
                (0..DIM)
                    .map(|col| {
                        self.get(col, layer)
                            .map_or_else(|| "empty".to_string(), |c| c.name().to_string())
                    })
                    .collect()
            })
            .collect()
    }

    /// Fixed-width text: one color initial per cell (`.` when empty), top layer first.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for layer in (0..DIM).rev() {
            let row: Vec<String> = (0..DIM)
                .map(|col| self.get(col, layer).map_or('.', Color::initial).to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

pub fn project_side_view(state: &StructureState, side: Side) -> SideView {
    let occupancy = state.occupancy();
    let mut view = SideView::empty(side);
    for layer in 0..DIM {
        for col in 0..DIM {
            view.cells[layer as usize][col as usize] = (0..DIM)
                .map(|depth| side.cell_at(col, depth, layer))
                .find_map(|cell| occupancy.get(&cell))
                .map(|b| b.color);
        }
    }
    view
}

/// True when the occupied cells form one 6-connected component.
/// The empty board counts as contiguous.
pub fn check_contiguity(state: &StructureState) -> bool {
    let occupied: BTreeSet<Cell> = state.occupancy().into_keys().collect();
    let Some(start) = occupied.iter().next().copied() else {
        return true;
    };
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for n in c.neighbours() {
            if occupied.contains(&n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen.len() == occupied.len()
}
