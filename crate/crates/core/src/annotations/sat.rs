use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AnnotationError, SCHEMA_VERSION};
use crate::actionlog::Snapshot;
use crate::blockworld::{BlockId, Cell, Orientation, Placement, StructureState};
use crate::warning::{Warning, WarningKind};

/// One structure-annotation row. A row without coordinates and with
/// `removed: true` takes the block off the board.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatRow {
    pub t: f64,
    pub block: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub removed: bool,
}

/// The rows exactly as logged; snapshots are derived, never written back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatLog {
    pub schema_version: u32,
    pub rows: Vec<SatRow>,
}

impl SatLog {
    pub fn new(rows: Vec<SatRow>) -> Self {
        SatLog {
            schema_version: SCHEMA_VERSION,
            rows,
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("serializable");
        out.push('\n');
        out
    }

    /// Log whose replay yields the given snapshots, one row per change.
    pub fn from_snapshots(snapshots: &[Snapshot]) -> Self {
        let mut rows = Vec::new();
        let mut current: BTreeMap<BlockId, Placement> = BTreeMap::new();
        for s in snapshots {
            let next: BTreeMap<BlockId, Placement> =
                s.placements.iter().map(|p| (p.block, *p)).collect();
            for b in current.keys().filter(|b| !next.contains_key(b)) {
                rows.push(SatRow {
                    t: s.timestamp,
                    block: b.to_string(),
                    x: None,
                    y: None,
                    z: None,
                    orientation: None,
                    removed: true,
                });
            }
            for (b, p) in &next {
                if current.get(b) != Some(p) {
                    rows.push(SatRow {
                        t: s.timestamp,
                        block: b.to_string(),
                        x: Some(p.anchor.x as i64),
                        y: Some(p.anchor.y as i64),
                        z: Some(p.anchor.z as i64),
                        orientation: (b.shape == crate::Shape::Long)
                            .then(|| p.orientation.as_str().to_string()),
                        removed: false,
                    });
                }
            }
            current = next;
        }
        SatLog::new(rows)
    }
}

#[derive(Debug, Clone)]
pub struct ParsedSatLog {
    pub log: SatLog,
    /// One snapshot per distinct row timestamp, in time order.
    pub snapshots: Vec<Snapshot>,
    pub warnings: Vec<Warning>,
}

fn row_placement(row: &SatRow) -> Result<Option<Placement>, String> {
    let block: BlockId = row.block.parse().map_err(|e| format!("{e}"))?;
    if row.removed {
        return Ok(None);
    }
    let (Some(x), Some(y), Some(z)) = (row.x, row.y, row.z) else {
        return Err("missing coordinates".into());
    };
    let coord = |v: i64| u8::try_from(v).map_err(|_| format!("coordinate {v} outside the board"));
    let orientation = match &row.orientation {
        Some(o) => o.parse::<Orientation>().map_err(|e| e.to_string())?,
        None => Orientation::AlongX,
    };
    Ok(Some(Placement::new(
        block,
        Cell::new(coord(x)?, coord(y)?, coord(z)?),
        orientation,
    )))
}

/// Parses `sat_log.json` and derives the snapshot sequence. Only unparseable
/// JSON, a wrong schema version or decreasing timestamps are fatal; invalid
/// rows and invalid boards become warnings citing row numbers (1-based).
pub fn parse_sat_log(text: &str) -> Result<ParsedSatLog, AnnotationError> {
    let log: SatLog = serde_json::from_str(text).map_err(|e| AnnotationError::Schema {
        line: e.line(),
        message: e.to_string(),
    })?;
    if log.schema_version != SCHEMA_VERSION {
        return Err(AnnotationError::schema(
            1,
            format!("unsupported schema_version {}", log.schema_version),
        ));
    }
    for (i, w) in log.rows.windows(2).enumerate() {
        if w[1].t < w[0].t {
            return Err(AnnotationError::NonMonotonicTimestamps {
                row: i + 2,
                previous: w[0].t,
                next: w[1].t,
            });
        }
    }

    let mut warnings = Vec::new();
    let mut reported: BTreeSet<(WarningKind, Vec<usize>)> = BTreeSet::new();
    // block → (placement, row number that set it)
    let mut board: BTreeMap<BlockId, (Placement, usize)> = BTreeMap::new();
    let mut snapshots = Vec::new();
    let mut i = 0;
    while i < log.rows.len() {
        let t = log.rows[i].t;
        while i < log.rows.len() && log.rows[i].t == t {
            let row_no = i + 1;
            match row_placement(&log.rows[i]) {
                Ok(Some(p)) => {
                    board.insert(p.block, (p, row_no));
                }
                Ok(None) => {
                    let block: BlockId = log.rows[i].block.parse().expect("checked");
                    if board.remove(&block).is_none() {
                        warnings.push(Warning::new(
                            WarningKind::UnknownBlock,
                            format!("row {row_no}: removal of {block}, which is not on the board"),
                        ));
                    }
                }
                Err(e) => {
                    let kind = if e.contains("outside") {
                        WarningKind::OutOfBounds
                    } else {
                        WarningKind::DroppedItem
                    };
                    warnings.push(Warning::new(kind, format!("row {row_no}: {e}; row ignored")));
                }
            }
            i += 1;
        }
        check_board(&board, t, &mut warnings, &mut reported);
        snapshots.push(Snapshot::new(t, board.values().map(|(p, _)| *p).collect()));
    }
    Ok(ParsedSatLog {
        log,
        snapshots,
        warnings,
    })
}

fn check_board(
    board: &BTreeMap<BlockId, (Placement, usize)>,
    t: f64,
    warnings: &mut Vec<Warning>,
    reported: &mut BTreeSet<(WarningKind, Vec<usize>)>,
) {
    let state = StructureState::unchecked(board.values().map(|(p, _)| *p), None).expect("keyed");
    let row_of = |b: &BlockId| board[b].1;
    for v in state.violations() {
        use crate::blockworld::BoardError as E;
        let (kind, rows, msg) = match &v {
            E::OccupiedCell {
                cell,
                block,
                occupant,
            } => {
                let mut rows = vec![row_of(occupant), row_of(block)];
                rows.sort_unstable();
                (
                    WarningKind::OccupancyConflict,
                    rows.clone(),
                    format!(
                        "rows {} and {}: {occupant} and {block} both occupy {cell}",
                        rows[0], rows[1]
                    ),
                )
            }
            E::UnsupportedPlacement { block, .. } => (
                WarningKind::UnsupportedPlacement,
                vec![row_of(block)],
                format!("row {}: {v}", row_of(block)),
            ),
            E::OutOfBounds { block, .. } => (
                WarningKind::OutOfBounds,
                vec![row_of(block)],
                format!("row {}: {v}", row_of(block)),
            ),
            E::UnknownBlock(_) | E::DuplicateBlock(_) => continue,
        };
        if reported.insert((kind, rows)) {
            warnings.push(Warning::new(kind, format!("{msg} (board at t={t})")));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(rows: &str) -> String {
        format!("{{\"schema_version\":1,\"rows\":[{rows}]}}")
    }

    #[test]
    fn minimal_log() {
        let p = parse_sat_log(&log(r#"{"t":12.5,"block":"rs1","x":0,"y":0,"z":0}"#)).unwrap();
        assert_eq!(p.snapshots.len(), 1);
        assert_eq!(p.snapshots[0].timestamp, 12.5);
        assert_eq!(p.snapshots[0].placements.len(), 1);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn occupancy_conflict_cites_both_rows() {
        let p = parse_sat_log(&log(
            r#"{"t":1.0,"block":"rs1","x":0,"y":0,"z":0},{"t":2.0,"block":"gs1","x":0,"y":0,"z":0}"#,
        ))
        .unwrap();
        assert_eq!(p.warnings.len(), 1);
        let w = &p.warnings[0];
        assert_eq!(w.kind, WarningKind::OccupancyConflict);
        assert!(w.message.contains("rows 1 and 2"), "{}", w.message);
        // the data is kept as logged
        assert_eq!(p.snapshots[1].placements.len(), 2);
    }

    #[test]
    fn decreasing_timestamps_are_fatal() {
        let err = parse_sat_log(&log(
            r#"{"t":5.0,"block":"rs1","x":0,"y":0,"z":0},{"t":4.0,"block":"gs1","x":1,"y":0,"z":0}"#,
        ))
        .unwrap_err();
        assert!(matches!(err, AnnotationError::NonMonotonicTimestamps { row: 2, .. }));
    }

    #[test]
    fn unparseable_json_is_fatal() {
        assert!(matches!(
            parse_sat_log("{\"schema_version\":1,\"rows\":["),
            Err(AnnotationError::Schema { .. })
        ));
    }

    #[test]
    fn floating_block_and_removal() {
        let p = parse_sat_log(&log(
            r#"{"t":1.0,"block":"rs1","x":0,"y":0,"z":1},{"t":2.0,"block":"rs1","removed":true}"#,
        ))
        .unwrap();
        assert_eq!(p.warnings[0].kind, WarningKind::UnsupportedPlacement);
        assert!(p.snapshots[1].placements.is_empty());
    }

    #[test]
    fn round_trips_and_rebuilds_from_snapshots() {
        let text = log(
            r#"{"t":1.0,"block":"rs1","x":0,"y":0,"z":0},{"t":2.0,"block":"gl1","x":1,"y":0,"z":0,"orientation":"y"},{"t":3.0,"block":"rs1","removed":true}"#,
        );
        let p = parse_sat_log(&text).unwrap();
        let again = parse_sat_log(&p.log.to_json()).unwrap();
        assert_eq!(again.log, p.log);
        assert_eq!(again.log.to_json(), p.log.to_json());
        assert_eq!(SatLog::from_snapshots(&p.snapshots), p.log);
    }
}
