//! Discrete builder actions recovered from time-ordered board snapshots.
//!
//! A block present only in the later snapshot is a put, one present only in
//! the earlier snapshot is a remove, and one present in both at different
//! placements (including an orientation change) is a move. Across
//! snapshots, a remove followed by a put of the same block within
//! `tau_move` seconds is fused into a single move when doing so keeps the
//! log replayable.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::blockworld::{
    apply_action, relations_involving, BlockId, BoardError, Placement, Side, StructureState,
};

pub const DEFAULT_TAU_MOVE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Remove,
    Move,
    Put,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Put => "put",
            ActionKind::Remove => "remove",
            ActionKind::Move => "move",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Board contents at one instant, as logged by the annotators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub timestamp: f64,
    pub placements: Vec<Placement>,
}

impl Snapshot {
    pub fn new(timestamp: f64, placements: Vec<Placement>) -> Self {
        Snapshot {
            timestamp,
            placements,
        }
    }

    pub fn to_state(&self) -> Result<StructureState, BoardError> {
        StructureState::from_placements(self.placements.iter().copied(), Some(self.timestamp))
    }
}

/// A timestamped put, remove or move.
///
/// `relation_summary` holds the atoms mentioning the block right after the
/// action; `retracted` holds the atoms mentioning it that stopped holding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEvent {
    pub id: String,
    pub timestamp: f64,
    pub kind: ActionKind,
    pub block: BlockId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Placement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Placement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    #[serde(default)]
    pub relation_summary: BTreeSet<crate::RelationAtom>,
    #[serde(default)]
    pub retracted: BTreeSet<crate::RelationAtom>,
}

impl ActionEvent {
    pub fn put(timestamp: f64, target: Placement) -> Self {
        ActionEvent::bare(timestamp, ActionKind::Put, target.block, Some(target), None)
    }

    pub fn remove(timestamp: f64, origin: Placement) -> Self {
        ActionEvent::bare(timestamp, ActionKind::Remove, origin.block, None, Some(origin))
    }

    pub fn moved(timestamp: f64, origin: Placement, target: Placement) -> Self {
        ActionEvent::bare(timestamp, ActionKind::Move, origin.block, Some(target), Some(origin))
    }

    fn bare(
        timestamp: f64,
        kind: ActionKind,
        block: BlockId,
        target: Option<Placement>,
        origin: Option<Placement>,
    ) -> Self {
        ActionEvent {
            id: String::new(),
            timestamp,
            kind,
            block,
            target,
            origin,
            side: None,
            relation_summary: BTreeSet::new(),
            retracted: BTreeSet::new(),
        }
    }

    fn sort_key(&self) -> (ActionKind, BlockId) {
        (self.kind, self.block)
    }

    /// Fills `relation_summary` and `retracted` from the states around the action.
    fn summarize(&mut self, before: &StructureState, after: &StructureState) {
        let then = relations_involving(before, &self.block);
        let now = relations_involving(after, &self.block);
        let keep = |a: &crate::RelationAtom| self.side.is_none_or(|s| a.side.is_none_or(|x| x == s));
        self.relation_summary = now.iter().filter(|a| keep(a)).copied().collect();
        self.retracted = then.difference(&now).filter(|a| keep(a)).copied().collect();
    }
}

impl fmt::Display for ActionEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={:.2} {} {}", self.timestamp, self.kind, self.block)?;
        if let Some(o) = self.origin.filter(|_| self.kind == ActionKind::Move) {
            write!(f, " from {}", o.anchor)?;
        }
        if let Some(t) = self.target {
            write!(f, " to {}", t.anchor)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActionLogError {
    #[error("block {block} appears twice in the snapshot at t={timestamp}")]
    DuplicateBlockId { block: BlockId, timestamp: f64 },
    #[error("snapshot timestamps must strictly increase: {previous} then {next}")]
    NonMonotonicTimestamps { previous: f64, next: f64 },
    #[error("snapshot at t={timestamp} is not a valid board: {source}")]
    InvalidSnapshot { timestamp: f64, source: BoardError },
    #[error("replay diverged at t={timestamp}: {detail}")]
    ReplayMismatch { timestamp: f64, detail: String },
}

fn index_snapshot(s: &Snapshot) -> Result<BTreeMap<BlockId, Placement>, ActionLogError> {
    let mut map = BTreeMap::new();
    for p in &s.placements {
        if map.insert(p.block, *p).is_some() {
            return Err(ActionLogError::DuplicateBlockId {
                block: p.block,
                timestamp: s.timestamp,
            });
        }
    }
    Ok(map)
}

fn diff_maps(
    prev: &BTreeMap<BlockId, Placement>,
    next: &BTreeMap<BlockId, Placement>,
    timestamp: f64,
) -> Vec<ActionEvent> {
    let mut out = Vec::new();
    for (block, origin) in prev {
        match next.get(block) {
            None => out.push(ActionEvent::remove(timestamp, *origin)),
            Some(target) if target != origin => {
                out.push(ActionEvent::moved(timestamp, *origin, *target))
            }
            Some(_) => {}
        }
    }
    for (block, target) in next {
        if !prev.contains_key(block) {
            out.push(ActionEvent::put(timestamp, *target));
        }
    }
    out.sort_by_key(ActionEvent::sort_key);
    out
}

/// Actions turning `prev` into `next`, ordered remove, move, put and then by
/// block id, all stamped with `next.timestamp`.
pub fn diff_snapshots(prev: &Snapshot, next: &Snapshot) -> Result<Vec<ActionEvent>, ActionLogError> {
    if prev.timestamp >= next.timestamp {
        return Err(ActionLogError::NonMonotonicTimestamps {
            previous: prev.timestamp,
            next: next.timestamp,
        });
    }
    let before = index_snapshot(prev)?;
    let after = index_snapshot(next)?;
    let mut actions = diff_maps(&before, &after, next.timestamp);
    let prev_state = StructureState::unchecked(before.values().copied(), Some(prev.timestamp))
        .expect("indexed");
    let next_state = StructureState::unchecked(after.values().copied(), Some(next.timestamp))
        .expect("indexed");
    for (i, a) in actions.iter_mut().enumerate() {
        a.id = format!("a{}", i + 1);
        a.summarize(&prev_state, &next_state);
    }
    Ok(actions)
}

/// Orders one snapshot's diff so that every action applies to the running
/// board. Actions are taken in diff order whenever they apply; when nothing
/// applies, the first pending move is split into a remove and a later put.
fn schedule(
    state: &StructureState,
    mut pending: Vec<ActionEvent>,
) -> Result<(Vec<ActionEvent>, StructureState), ActionLogError> {
    let mut board = state.clone();
    let mut out = Vec::with_capacity(pending.len());
    while !pending.is_empty() {
        let applied = pending
            .iter()
            .enumerate()
            .find_map(|(i, a)| apply_action(&board, a).ok().map(|next| (i, next)));
        if let Some((i, next)) = applied {
            out.push(pending.remove(i));
            board = next;
            continue;
        }
        let Some(i) = pending.iter().position(|a| a.kind == ActionKind::Move) else {
            let a = &pending[0];
            let detail = apply_action(&board, a)
                .err()
                .map(|e| format!("{} {} cannot be applied: {e}", a.kind, a.block))
                .unwrap_or_default();
            return Err(ActionLogError::ReplayMismatch {
                timestamp: a.timestamp,
                detail,
            });
        };
        let mv = pending.remove(i);
        let origin = mv.origin.expect("move carries origin");
        let target = mv.target.expect("move carries target");
        let remove = ActionEvent::remove(mv.timestamp, origin);
        board = apply_action(&board, &remove).map_err(|e| ActionLogError::ReplayMismatch {
            timestamp: mv.timestamp,
            detail: e.to_string(),
        })?;
        out.push(remove);
        let put = ActionEvent::put(mv.timestamp, target);
        let at = pending
            .iter()
            .position(|a| a.sort_key() > put.sort_key())
            .unwrap_or(pending.len());
        pending.insert(at, put);
    }
    Ok((out, board))
}

fn replay(
    start: &StructureState,
    actions: &[ActionEvent],
) -> Result<StructureState, (usize, BoardError)> {
    let mut board = start.clone();
    for (i, a) in actions.iter().enumerate() {
        board = apply_action(&board, a).map_err(|e| (i, e))?;
    }
    Ok(board)
}

/// Fuses remove/put pairs of the same block that are at most `tau_move`
/// seconds apart, keeping only fusions that leave the log replayable.
fn fuse_moves(mut actions: Vec<ActionEvent>, tau_move: f64) -> Vec<ActionEvent> {
    let mut i = 0;
    while i < actions.len() {
        if actions[i].kind != ActionKind::Remove {
            i += 1;
            continue;
        }
        let block = actions[i].block;
        let next_touch = actions[i + 1..]
            .iter()
            .position(|a| a.block == block)
            .map(|off| i + 1 + off);
        let Some(j) = next_touch else {
            i += 1;
            continue;
        };
        let (remove, put) = (&actions[i], &actions[j]);
        if put.kind != ActionKind::Put || put.timestamp - remove.timestamp > tau_move {
            i += 1;
            continue;
        }
        let fused = ActionEvent::moved(
            put.timestamp,
            remove.origin.expect("remove carries origin"),
            put.target.expect("put carries target"),
        );
        let before = replay(&StructureState::empty(), &actions[..i]).expect("log replays");
        let mut window: Vec<ActionEvent> = actions[i + 1..j].to_vec();
        window.push(fused.clone());
        let unfused_after = replay(&before, &actions[i..=j]).expect("log replays");
        match replay(&before, &window) {
            Ok(after) if after.same_board(&unfused_after) => {
                actions[j] = fused;
                actions.remove(i);
            }
            _ => i += 1,
        }
    }
    actions
}

/// Concatenated, replay-ordered diffs of a snapshot log, with cross-snapshot
/// move fusion. Replaying the result from the empty board reproduces the
/// last snapshot; action ids are `a1`, `a2`, … in log order.
pub fn extract_actions(log: &[Snapshot], tau_move: f64) -> Result<Vec<ActionEvent>, ActionLogError> {
    for w in log.windows(2) {
        if w[0].timestamp >= w[1].timestamp {
            return Err(ActionLogError::NonMonotonicTimestamps {
                previous: w[0].timestamp,
                next: w[1].timestamp,
            });
        }
    }
    let mut board = StructureState::empty();
    let mut current: BTreeMap<BlockId, Placement> = BTreeMap::new();
    let mut actions = Vec::new();
    for snap in log {
        let target = index_snapshot(snap)?;
        snap.to_state()
            .map_err(|source| ActionLogError::InvalidSnapshot {
                timestamp: snap.timestamp,
                source,
            })?;
        let diff = diff_maps(&current, &target, snap.timestamp);
        let (ordered, next) = schedule(&board, diff)?;
        actions.extend(ordered);
        board = next;
        current = target;
    }
    let mut actions = fuse_moves(actions, tau_move);

    let mut board = StructureState::empty();
    for (i, a) in actions.iter_mut().enumerate() {
        a.id = format!("a{}", i + 1);
        let next = apply_action(&board, a).map_err(|e| ActionLogError::ReplayMismatch {
            timestamp: a.timestamp,
            detail: e.to_string(),
        })?;
        a.summarize(&board, &next);
        board = next;
    }
    if let Some(last) = log.last() {
        let expected = StructureState::unchecked(last.placements.iter().copied(), None)
            .expect("indexed above");
        if !board.same_board(&expected) {
            return Err(ActionLogError::ReplayMismatch {
                timestamp: last.timestamp,
                detail: "replayed board differs from the final snapshot".into(),
            });
        }
    }
    Ok(actions)
}

/// Board after replaying every action with `timestamp <= at`.
pub fn state_at(actions: &[ActionEvent], at: f64) -> Result<StructureState, BoardError> {
    let mut board = StructureState::empty();
    for a in actions.iter().take_while(|a| a.timestamp <= at) {
        board = apply_action(&board, a)?;
    }
    Ok(board)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockworld::Cell;

    fn id(s: &str) -> BlockId {
        s.parse().unwrap()
    }

    fn snap(t: f64, ps: &[(&str, u8, u8, u8)]) -> Snapshot {
        Snapshot::new(
            t,
            ps.iter()
                .map(|(b, x, y, z)| Placement::short(id(b), *x, *y, *z))
                .collect(),
        )
    }

    #[test]
    fn single_put() {
        let acts = diff_snapshots(&snap(0.0, &[]), &snap(1.0, &[("rs1", 0, 0, 0)])).unwrap();
        assert_eq!(acts.len(), 1);
        assert_eq!(acts[0].kind, ActionKind::Put);
        assert_eq!(acts[0].target.unwrap().anchor, Cell::new(0, 0, 0));
        assert_eq!(acts[0].timestamp, 1.0);
    }

    #[test]
    fn single_move() {
        let acts =
            diff_snapshots(&snap(0.0, &[("rs1", 0, 0, 0)]), &snap(1.0, &[("rs1", 1, 0, 0)])).unwrap();
        assert_eq!(acts.len(), 1);
        assert_eq!(acts[0].kind, ActionKind::Move);
        assert_eq!(acts[0].origin.unwrap().anchor, Cell::new(0, 0, 0));
        assert_eq!(acts[0].target.unwrap().anchor, Cell::new(1, 0, 0));
    }

    #[test]
    fn single_remove() {
        let acts = diff_snapshots(
            &snap(0.0, &[("rs1", 0, 0, 0), ("gs1", 1, 0, 0)]),
            &snap(1.0, &[("gs1", 1, 0, 0)]),
        )
        .unwrap();
        assert_eq!(acts.len(), 1);
        assert_eq!(acts[0].kind, ActionKind::Remove);
        assert_eq!(acts[0].block, id("rs1"));
    }

    #[test]
    fn diff_ordering_and_duplicates() {
        let acts = diff_snapshots(
            &snap(0.0, &[("rs1", 0, 0, 0), ("gs1", 1, 0, 0)]),
            &snap(1.0, &[("gs1", 2, 0, 0), ("bs1", 0, 1, 0)]),
        )
        .unwrap();
        let kinds: Vec<_> = acts.iter().map(|a| a.kind).collect();
        assert_eq!(kinds, [ActionKind::Remove, ActionKind::Move, ActionKind::Put]);
        let dup = snap(1.0, &[("rs1", 0, 0, 0), ("rs1", 1, 0, 0)]);
        assert!(matches!(
            diff_snapshots(&snap(0.0, &[]), &dup),
            Err(ActionLogError::DuplicateBlockId { .. })
        ));
        assert!(matches!(
            diff_snapshots(&snap(2.0, &[]), &snap(1.0, &[])),
            Err(ActionLogError::NonMonotonicTimestamps { .. })
        ));
    }

    #[test]
    fn fusion_respects_threshold() {
        let log = [
            snap(0.0, &[("rs1", 0, 0, 0)]),
            snap(10.0, &[]),
            snap(12.0, &[("rs1", 2, 2, 0)]),
        ];
        let fused = extract_actions(&log, 5.0).unwrap();
        assert_eq!(fused.len(), 2);
        assert_eq!(fused[1].kind, ActionKind::Move);
        assert_eq!(fused[1].timestamp, 12.0);
        assert_eq!(fused[1].origin.unwrap().anchor, Cell::new(0, 0, 0));

        let unfused = extract_actions(&log, 1.0).unwrap();
        let kinds: Vec<_> = unfused.iter().map(|a| a.kind).collect();
        assert_eq!(kinds, [ActionKind::Put, ActionKind::Remove, ActionKind::Put]);
    }

    #[test]
    fn fusion_skipped_when_origin_is_reused() {
        // rs1 leaves (0,0,0) at t=10, gs1 takes the cell at t=11, rs1 returns at t=12.
        let log = [
            snap(0.0, &[("rs1", 0, 0, 0)]),
            snap(10.0, &[]),
            snap(11.0, &[("gs1", 0, 0, 0)]),
            snap(12.0, &[("gs1", 0, 0, 0), ("rs1", 1, 0, 0)]),
        ];
        let acts = extract_actions(&log, 5.0).unwrap();
        assert!(acts.iter().all(|a| a.kind != ActionKind::Move));
    }

    #[test]
    fn swap_under_a_resting_block_replays() {
        // rs1 is replaced underneath gs1 by bs1 within one snapshot.
        let log = [
            snap(0.0, &[("rs1", 0, 0, 0), ("gs1", 0, 0, 1)]),
            snap(5.0, &[("bs1", 0, 0, 0), ("gs1", 0, 0, 1)]),
        ];
        let acts = extract_actions(&log, 5.0).unwrap();
        let end = state_at(&acts, f64::INFINITY).unwrap();
        assert!(end.same_board(&log[1].to_state().unwrap()));
    }

    #[test]
    fn cyclic_move_is_split() {
        // rs1 climbs onto bs1, which takes rs1's former cell.
        let log = [
            snap(0.0, &[("rs1", 0, 0, 0)]),
            snap(5.0, &[("bs1", 0, 0, 0), ("rs1", 0, 0, 1)]),
        ];
        let acts = extract_actions(&log, 0.0).unwrap();
        let kinds: Vec<_> = acts.iter().map(|a| a.kind).collect();
        assert_eq!(
            kinds,
            [ActionKind::Put, ActionKind::Remove, ActionKind::Put, ActionKind::Put]
        );
    }

    #[test]
    fn summaries_follow_the_board() {
        let log = [
            snap(1.0, &[("gs1", 0, 0, 0)]),
            snap(2.0, &[("gs1", 0, 0, 0), ("rs1", 0, 0, 1)]),
            snap(3.0, &[("gs1", 0, 0, 0)]),
        ];
        let acts = extract_actions(&log, 0.0).unwrap();
        let on = crate::RelationAtom::on(
            crate::Term::Block(id("rs1")),
            crate::Term::Block(id("gs1")),
            Some(0),
        );
        assert!(acts[1].relation_summary.contains(&on));
        assert!(acts[2].relation_summary.is_empty());
        assert!(acts[2].retracted.contains(&on));
    }
}
