//! Shared generators and brute-force oracles for the integration tests.
//! The oracles work on raw cells and never call the library's geometry.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use cgtrack::blockworld::{BoardAction, DIM};
use cgtrack::{
    BlockId, Cell, Color, Orientation, Placement, Relation, RelationAtom, Shape, Side, Snapshot,
    StructureState, Term,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture_groups() -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(fixtures().join("groups"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const COLORS: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Yellow];

pub fn random_block(r: &mut impl Rng) -> BlockId {
    let shape = if r.gen_bool(0.3) { Shape::Long } else { Shape::Short };
    BlockId::new(*COLORS.choose(r).unwrap(), shape, r.gen_range(1..=3))
}

pub fn random_placement(r: &mut impl Rng, block: BlockId) -> Placement {
    let orientation = if r.gen_bool(0.5) {
        Orientation::AlongX
    } else {
        Orientation::AlongY
    };
    Placement::new(
        block,
        Cell::new(r.gen_range(0..DIM), r.gen_range(0..DIM), r.gen_range(0..DIM)),
        orientation,
    )
}

/// A valid board built from random put attempts; invalid attempts are skipped.
pub fn random_state(r: &mut impl Rng, attempts: usize) -> StructureState {
    let mut s = StructureState::empty();
    for _ in 0..attempts {
        let b = random_block(r);
        if s.contains(&b) {
            continue;
        }
        if let Ok(next) = s.apply(&BoardAction::Put(random_placement(r, b))) {
            s = next;
        }
    }
    s
}

/// Random valid edit of a board: removals, moves and puts that keep it valid.
pub fn mutate(r: &mut impl Rng, s: &StructureState, edits: usize) -> StructureState {
    let mut s = s.clone();
    for _ in 0..edits {
        let blocks: Vec<BlockId> = s.placements().map(|p| p.block).collect();
        let action = match r.gen_range(0..3) {
            0 if !blocks.is_empty() => BoardAction::Remove(*blocks.choose(r).unwrap()),
            1 if !blocks.is_empty() => {
                let b = *blocks.choose(r).unwrap();
                BoardAction::Move {
                    block: b,
                    to: random_placement(r, b),
                }
            }
            _ => {
                let b = random_block(r);
                if s.contains(&b) {
                    continue;
                }
                BoardAction::Put(random_placement(r, b))
            }
        };
        // Removal does not check what rests on the block, so validate.
        if let Ok(next) = s.apply(&action) {
            if next.validate().is_ok() {
                s = next;
            }
        }
    }
    s
}

/// Snapshot log mixing small edits with wholesale rebuilds of the board.
pub fn random_log(r: &mut impl Rng, len: usize) -> Vec<Snapshot> {
    let mut t = 0.0;
    let mut s = StructureState::empty();
    let mut log = Vec::with_capacity(len);
    for _ in 0..len {
        t += r.gen_range(1..16) as f64 * 0.5;
        s = if r.gen_bool(0.2) {
            random_state(r, 12)
        } else {
            let edits = r.gen_range(1..4);
            mutate(r, &s, edits)
        };
        log.push(Snapshot::new(t, s.placements().copied().collect()));
    }
    log
}

/// Cells of a placement, computed from scratch.
pub fn cells_of(p: &Placement) -> Vec<(u8, u8, u8)> {
    let a = p.anchor;
    let mut out = vec![(a.x, a.y, a.z)];
    if p.block.shape == Shape::Long {
        match p.orientation {
            Orientation::AlongX => out.push((a.x + 1, a.y, a.z)),
            Orientation::AlongY => out.push((a.x, a.y + 1, a.z)),
        }
    }
    out
}

/// (view column, depth) of a cell for each viewer.
pub fn view_coords(side: Side, (x, y, _): (u8, u8, u8)) -> (u8, u8) {
    match side {
        Side::Front => (x, y),
        Side::Left => (2 - y, x),
        Side::Right => (y, 2 - x),
    }
}

fn atom(relation: Relation, a: Term, b: Term, side: Option<Side>, layer: u8) -> RelationAtom {
    let (arg1, arg2) = if relation == Relation::NextTo && b.to_string() < a.to_string() {
        (b, a)
    } else {
        (a, b)
    };
    RelationAtom {
        relation,
        arg1,
        arg2,
        side,
        layer: Some(layer),
    }
}

/// All relations from one side by enumerating every pair of occupied cells.
pub fn brute_relations(state: &StructureState, side: Side) -> BTreeSet<RelationAtom> {
    let blocks: Vec<_> =
        state.placements().map(|p| (p.block, cells_of(p))).collect();
    let mut out = BTreeSet::new();
    for (a, ca) in &blocks {
        for &(_, _, z) in ca {
            if z == 0 {
                out.insert(atom(Relation::On, Term::Block(*a), Term::Base, None, 0));
            }
        }
        for (b, cb) in &blocks {
            if a == b {
                continue;
            }
            let (ta, tb) = (Term::Block(*a), Term::Block(*b));
            let min_col = |cs: &[(u8, u8, u8)]| cs.iter().map(|c| view_coords(side, *c).0).min().unwrap();
            let min_dep = |cs: &[(u8, u8, u8)]| cs.iter().map(|c| view_coords(side, *c).1).min().unwrap();
            for &p in ca {
                for &q in cb {
                    if p.2 == q.2 + 1 && p.0 == q.0 && p.1 == q.1 {
                        out.insert(atom(Relation::On, ta, tb, None, q.2));
                    }
                    if p.2 != q.2 {
                        continue;
                    }
                    if p.0.abs_diff(q.0) + p.1.abs_diff(q.1) == 1 {
                        out.insert(atom(Relation::NextTo, ta, tb, None, p.2));
                    }
                    if min_col(ca) < min_col(cb) {
                        out.insert(atom(Relation::LeftOf, ta, tb, Some(side), p.2));
                    }
                    if min_dep(ca) > min_dep(cb) {
                        out.insert(atom(Relation::Behind, ta, tb, Some(side), p.2));
                    }
                }
            }
        }
    }
    out
}

/// Nearest color per (column, layer), scanning every cell of the board.
pub fn brute_view(state: &StructureState, side: Side) -> BTreeMap<(u8, u8), Color> {
    let mut best: BTreeMap<(u8, u8), (u8, Color)> = BTreeMap::new();
    for p in state.placements() {
        for c in cells_of(p) {
            let (col, depth) = view_coords(side, c);
            let e = best.entry((col, c.2)).or_insert((depth, p.block.color));
            if depth < e.0 {
                *e = (depth, p.block.color);
            }
        }
    }
    best.into_iter().map(|(k, (_, c))| (k, c)).collect()
}

/// Connectivity of the occupied cells with a union-find over all cell pairs.
pub fn union_find_connected(state: &StructureState) -> bool {
    let cells: Vec<(u8, u8, u8)> = state.placements().flat_map(cells_of).collect();
    let mut parent: Vec<usize> = (0..cells.len()).collect();
    fn find(p: &mut Vec<usize>, i: usize) -> usize {
        if p[i] != i {
            let r = find(p, p[i]);
            p[i] = r;
        }
        p[i]
    }
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            let (a, b) = (cells[i], cells[j]);
            if a.0.abs_diff(b.0) + a.1.abs_diff(b.1) + a.2.abs_diff(b.2) == 1 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let roots: BTreeSet<usize> = (0..cells.len()).map(|i| find(&mut parent, i)).collect();
    roots.len() <= 1
}

pub mod session {
    //! Random multimodal sessions: a snapshot log plus speech, gesture and
    //! stance annotations that refer to it.

    use super::*;
    use cgtrack::annotations::{parse_gestures, GestureEvent, Proposition, Stance, StanceLabel};
    use cgtrack::{extract_actions, ActionEvent, Participant};

    pub const PEOPLE: [Participant; 4] = [
        Participant::D1,
        Participant::D2,
        Participant::D3,
        Participant::Builder,
    ];

    pub struct Session {
        pub actions: Vec<ActionEvent>,
        pub props: Vec<Proposition>,
        pub gestures: Vec<GestureEvent>,
        pub stances: Vec<StanceLabel>,
    }

    fn random_term(r: &mut impl Rng, actions: &[ActionEvent]) -> Term {
        match r.gen_range(0..4) {
            0 => Term::Base,
            1 => Term::Descriptor(cgtrack::blockworld::Descriptor {
                color: *COLORS.choose(r).unwrap(),
                shape: if r.gen_bool(0.3) { Shape::Long } else { Shape::Short },
            }),
            _ => match actions.choose(r) {
                Some(a) => Term::Block(a.block),
                None => Term::Block(random_block(r)),
            },
        }
    }

    pub fn random_session(seed: u64) -> Session {
        let mut r = rng(seed);
        let len = r.gen_range(0..8);
        let log = random_log(&mut r, len);
        let actions = extract_actions(&log, 5.0).unwrap();
        let horizon = log.last().map_or(10.0, |s| s.timestamp + 5.0);
        let time = |r: &mut ChaCha8Rng| (r.gen_range(0.0..horizon) * 2.0f64).round() / 2.0;
        let mut props = Vec::new();
        for i in 0..r.gen_range(0..8) {
            let relations = [
                cgtrack::blockworld::RawRelation::On,
                cgtrack::blockworld::RawRelation::NextTo,
                cgtrack::blockworld::RawRelation::LeftOf,
                cgtrack::blockworld::RawRelation::Behind,
            ];
            let side = *Side::ALL.choose(&mut r).unwrap();
            let a = random_term(&mut r, &actions);
            let b = random_term(&mut r, &actions);
            if a == b {
                continue;
            }
            let layer = r.gen_bool(0.2).then(|| r.gen_range(0..3));
            props.push(Proposition {
                id: format!("p{}", i + 1),
                timestamp: time(&mut r),
                speaker: *PEOPLE.choose(&mut r).unwrap(),
                relation: RelationAtom::new(*relations.choose(&mut r).unwrap(), a, b, Some(side), layer),
                side: Some(side),
            });
        }
        props.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let mut gtext = String::from("{\"schema_version\":1,\"format\":\"gestures\"}\n");
        for _ in 0..r.gen_range(0..5) {
            let who = ["director-1", "director-2", "director-3", "builder"].choose(&mut r).unwrap();
            let frame = ["nod", "shake", "thumbs-up"].choose(&mut r).unwrap();
            let t = time(&mut r);
            gtext.push_str(&format!(
                "{{\"t_start\":{t},\"t_end\":{},\"gamr\":\"(g / {frame}-GA :ARG0 (p / {who}))\"}}\n",
                t + 1.0
            ));
        }
        let gestures = parse_gestures(&gtext).unwrap();
        let mut stances = Vec::new();
        if !props.is_empty() {
            for i in 0..r.gen_range(0..8) {
                let n = r.gen_range(1..=2.min(props.len()));
                let chosen: Vec<String> = props.choose_multiple(&mut r, n).map(|p| p.id.clone()).collect();
                stances.push(StanceLabel {
                    id: format!("s{}", i + 1),
                    timestamp: time(&mut r),
                    participant: *PEOPLE.choose(&mut r).unwrap(),
                    props: chosen,
                    stance: *[Stance::Accept, Stance::Doubt, Stance::Negate].choose(&mut r).unwrap(),
                });
            }
        }
        Session {
            actions,
            props,
            gestures,
            stances,
        }
    }
}
