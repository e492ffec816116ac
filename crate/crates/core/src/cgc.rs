//! Belief states, common-ground records and turn segmentation.
//!
//! Beliefs evolve event by event over an aligned timeline:
//!
//! * a speaker accepts what they assert;
//! * a builder action is seen by everyone, so all four participants accept
//!   the relations it creates and drop the ones it destroys;
//! * stances and emblems accept, doubt or negate for one participant, and a
//!   negation removes the proposition from every belief set.
//!
//! A proposition is common ground for a group of at least two participants
//! who all accept it at the same time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignedEvent, Source};
use crate::annotations::{jsonl_records, jsonl_write, AnnotationError, Stance};
use crate::blockworld::RelationAtom;
use crate::participants::Participant;

const CG_FORMAT: &str = "cg";
const TURN_FORMAT: &str = "turns";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CgcError {
    #[error("event {id} at t={timestamp} carries ungrounded proposition {proposition}")]
    UngroundedProposition {
        id: String,
        timestamp: f64,
        proposition: RelationAtom,
    },
    #[error("{beliefs} belief states for {events} events")]
    LengthMismatch { events: usize, beliefs: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefState {
    pub accepted: BTreeSet<RelationAtom>,
    pub doubted: BTreeSet<RelationAtom>,
}

impl BeliefState {
    fn accept(&mut self, p: RelationAtom) {
        self.doubted.remove(&p);
        self.accepted.insert(p);
    }

    fn doubt(&mut self, p: RelationAtom) {
        self.accepted.remove(&p);
        self.doubted.insert(p);
    }

    fn forget(&mut self, p: &RelationAtom) {
        self.accepted.remove(p);
        self.doubted.remove(p);
    }
}

pub type Beliefs = BTreeMap<Participant, BeliefState>;

fn initial_beliefs() -> Beliefs {
    Participant::ALL
        .into_iter()
        .map(|p| (p, BeliefState::default()))
        .collect()
}

/// Applies one event in place.
pub fn apply_event(beliefs: &mut Beliefs, ev: &AlignedEvent) -> Result<(), CgcError> {
    let (Some(p), Some(stance)) = (ev.proposition, ev.stance) else {
        return Ok(());
    };
    if !p.is_grounded() {
        return Err(CgcError::UngroundedProposition {
            id: ev.id.clone(),
            timestamp: ev.timestamp,
            proposition: p,
        });
    }
    match stance {
        Stance::Negate => beliefs.values_mut().for_each(|b| b.forget(&p)),
        Stance::Accept if ev.source == Source::Action => {
            beliefs.values_mut().for_each(|b| b.accept(p))
        }
        Stance::Accept => beliefs.entry(ev.participant).or_default().accept(p),
        Stance::Doubt => beliefs.entry(ev.participant).or_default().doubt(p),
    }
    Ok(())
}

/// Belief states of all four participants after each event.
pub fn update_beliefs(timeline: &[AlignedEvent]) -> Result<Vec<Beliefs>, CgcError> {
    let mut current = initial_beliefs();
    let mut out = Vec::with_capacity(timeline.len());
    for ev in timeline {
        apply_event(&mut current, ev)?;
        out.push(current.clone());
    }
    Ok(out)
}

/// Participants currently accepting `p`.
pub fn acceptors(beliefs: &Beliefs, p: &RelationAtom) -> BTreeSet<Participant> {
    beliefs
        .iter()
        .filter(|(_, b)| b.accepted.contains(p))
        .map(|(who, _)| *who)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CgEventKind {
    Formed,
    Expanded,
    Shrunk,
    Deleted,
}

/// A change in who shares a proposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CGRecord {
    pub id: String,
    #[serde(rename = "t")]
    pub timestamp: f64,
    /// The timeline event that caused the change.
    pub event: String,
    pub kind: CgEventKind,
    /// Acceptors after the change. A shrink may leave a single participant,
    /// which ends the common ground; a deletion leaves none.
    pub participants: BTreeSet<Participant>,
    pub proposition: RelationAtom,
}

impl CGRecord {
    pub fn is_common_ground(&self) -> bool {
        self.participants.len() >= 2
    }
}

impl fmt::Display for CGRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.participants.iter().map(|p| p.as_str()).collect();
        write!(
            f,
            "{:?} CG_{{{}}}: {} at t={}",
            self.kind,
            names.join(","),
            self.proposition,
            self.timestamp
        )
    }
}

fn classify(prev: &BTreeSet<Participant>, next: &BTreeSet<Participant>) -> Option<CgEventKind> {
    if prev == next {
        return None;
    }
    match (prev.len() >= 2, next.len()) {
        (false, n) if n >= 2 => Some(CgEventKind::Formed),
        (true, 0) => Some(CgEventKind::Deleted),
        (true, n) if n >= 2 && next.is_superset(prev) => Some(CgEventKind::Expanded),
        (true, _) => Some(CgEventKind::Shrunk),
        _ => None,
    }
}

/// Records every change of a proposition's acceptor set that starts, alters
/// or ends a common ground. `beliefs[i]` must be the state after `timeline[i]`.
pub fn infer_common_ground(
    timeline: &[AlignedEvent],
    beliefs: &[Beliefs],
) -> Result<Vec<CGRecord>, CgcError> {
    if timeline.len() != beliefs.len() {
        return Err(CgcError::LengthMismatch {
            events: timeline.len(),
            beliefs: beliefs.len(),
        });
    }
    let start = initial_beliefs();
    let mut records = Vec::new();
    for (i, ev) in timeline.iter().enumerate() {
        let Some(p) = ev.proposition else { continue };
        let before = if i == 0 { &start } else { &beliefs[i - 1] };
        let (prev, next) = (acceptors(before, &p), acceptors(&beliefs[i], &p));
        if let Some(kind) = classify(&prev, &next) {
            records.push(CGRecord {
                id: format!("cg{}", records.len() + 1),
                timestamp: ev.timestamp,
                event: ev.id.clone(),
                kind,
                participants: next,
                proposition: p,
            });
        }
    }
    Ok(records)
}

/// Common ground after all records up to and including `at`: each shared
/// proposition with its group.
pub fn cg_state_at(records: &[CGRecord], at: f64) -> BTreeMap<RelationAtom, BTreeSet<Participant>> {
    let mut state = BTreeMap::new();
    for r in records.iter().filter(|r| r.timestamp <= at) {
        if r.is_common_ground() {
            state.insert(r.proposition, r.participants.clone());
        } else {
            state.remove(&r.proposition);
        }
    }
    state
}

/// Propositions in common ground at `at`.
pub fn cg_relation_set(records: &[CGRecord], at: f64) -> BTreeSet<RelationAtom> {
    cg_state_at(records, at).into_keys().collect()
}

/// `(group, proposition)` keys of the common ground at `at`, the unit of
/// comparison when scoring predicted common ground.
pub fn cg_keys(records: &[CGRecord], at: f64) -> BTreeSet<(BTreeSet<Participant>, RelationAtom)> {
    cg_state_at(records, at)
        .into_iter()
        .map(|(p, g)| (g, p))
        .collect()
}

/// Largest group sharing every conjunct of a multi-clause proposition, when
/// that group has at least two members.
pub fn composite_group(
    state: &BTreeMap<RelationAtom, BTreeSet<Participant>>,
    conjuncts: &[RelationAtom],
) -> Option<BTreeSet<Participant>> {
    let mut iter = conjuncts.iter();
    let mut group = state.get(iter.next()?)?.clone();
    for c in iter {
        group = group.intersection(state.get(c)?).copied().collect();
    }
    (group.len() >= 2).then_some(group)
}

/// A stretch of the timeline closed by one or more common-ground updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    /// Positions in the timeline.
    pub events: Vec<usize>,
    /// Last record at the closing timestamp; absent for a trailing turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<String>,
}

/// Splits the timeline at each distinct record timestamp: turn k covers
/// `(b[k-1], b[k]]` with the session start (time 0, or the first event if
/// earlier) as `b[0]`. Events after the last boundary form a trailing turn.
pub fn segment_turns(timeline: &[AlignedEvent], records: &[CGRecord]) -> Vec<Turn> {
    let mut boundaries: Vec<(f64, &str)> = Vec::new();
    for r in records {
        match boundaries.last_mut() {
            Some((t, id)) if *t == r.timestamp => *id = &r.id,
            _ => boundaries.push((r.timestamp, &r.id)),
        }
    }
    let session_start = timeline.first().map_or(0.0, |e| e.timestamp.min(0.0));
    let mut turns = Vec::new();
    let mut start = session_start;
    let mut next_event = 0;
    for (b, id) in &boundaries {
        let mut events = Vec::new();
        while next_event < timeline.len() && timeline[next_event].timestamp <= *b {
            events.push(next_event);
            next_event += 1;
        }
        turns.push(Turn {
            index: turns.len(),
            start,
            end: *b,
            events,
            boundary: Some(id.to_string()),
        });
        start = *b;
    }
    if next_event < timeline.len() {
        turns.push(Turn {
            index: turns.len(),
            start,
            end: timeline.last().expect("non-empty").timestamp,
            events: (next_event..timeline.len()).collect(),
            boundary: None,
        });
    }
    turns
}

/// Everything the fold produces for one timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct CgcOutput {
    pub beliefs: Vec<Beliefs>,
    pub records: Vec<CGRecord>,
    pub turns: Vec<Turn>,
}

pub fn run_cgc(timeline: &[AlignedEvent]) -> Result<CgcOutput, CgcError> {
    let beliefs = update_beliefs(timeline)?;
    let records = infer_common_ground(timeline, &beliefs)?;
    let turns = segment_turns(timeline, &records);
    Ok(CgcOutput {
        beliefs,
        records,
        turns,
    })
}

pub fn serialize_records(records: &[CGRecord]) -> String {
    jsonl_write(CG_FORMAT, records)
}

pub fn parse_records(text: &str) -> Result<Vec<CGRecord>, AnnotationError> {
    Ok(jsonl_records(text, CG_FORMAT)?.into_iter().map(|(_, r)| r).collect())
}

pub fn serialize_turns(turns: &[Turn]) -> String {
    jsonl_write(TURN_FORMAT, turns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockworld::{BlockId, Side, Term};
    use Participant::*;

    fn t(b: &str) -> Term {
        Term::Block(b.parse::<BlockId>().unwrap())
    }

    fn p() -> RelationAtom {
        RelationAtom::nextto(t("gs1"), t("rs2"), Some(0))
    }

    fn q() -> RelationAtom {
        RelationAtom::leftof(t("gs1"), t("rs2"), Side::Front, Some(0))
    }

    fn ev(id: &str, ts: f64, source: Source, who: Participant, prop: RelationAtom, stance: Stance) -> AlignedEvent {
        AlignedEvent {
            id: id.into(),
            timestamp: ts,
            source,
            participant: who,
            proposition: Some(prop),
            prop_id: None,
            stance: Some(stance),
            provenance: vec![id.into()],
            grounding_notes: vec![],
            links: vec![],
        }
    }

    fn say(id: &str, ts: f64, who: Participant, prop: RelationAtom) -> AlignedEvent {
        ev(id, ts, Source::Speech, who, prop, Stance::Accept)
    }

    fn stance(id: &str, ts: f64, who: Participant, prop: RelationAtom, s: Stance) -> AlignedEvent {
        ev(id, ts, Source::Stance, who, prop, s)
    }

    fn group(ps: &[Participant]) -> BTreeSet<Participant> {
        ps.iter().copied().collect()
    }

    #[test]
    fn saying_only_updates_the_speaker() {
        let b = update_beliefs(&[say("p1", 1.0, D2, p())]).unwrap();
        assert!(b[0][&D2].accepted.contains(&p()));
        for who in [D1, D3, Builder] {
            assert!(b[0][&who].accepted.is_empty());
        }
    }

    #[test]
    fn actions_are_seen_by_everyone() {
        let tl = [
            ev("a1", 1.0, Source::Action, Builder, p(), Stance::Accept),
            ev("a1", 1.0, Source::Action, Builder, q(), Stance::Accept),
        ];
        let out = run_cgc(&tl).unwrap();
        for who in Participant::ALL {
            assert!(out.beliefs[1][&who].accepted.contains(&p()));
        }
        assert_eq!(out.records.len(), 2);
        for r in &out.records {
            assert_eq!(r.kind, CgEventKind::Formed);
            assert_eq!(r.participants, group(&Participant::ALL));
        }
    }

    #[test]
    fn negation_deletes_everywhere() {
        let tl = [
            say("p1", 1.0, D1, p()),
            stance("s1", 2.0, D2, p(), Stance::Accept),
            stance("s2", 3.0, D3, p(), Stance::Negate),
        ];
        let out = run_cgc(&tl).unwrap();
        for who in Participant::ALL {
            assert!(!out.beliefs[2][&who].accepted.contains(&p()));
        }
        let kinds: Vec<_> = out.records.iter().map(|r| r.kind).collect();
        assert_eq!(kinds, [CgEventKind::Formed, CgEventKind::Deleted]);
        assert_eq!(out.records[0].participants, group(&[D1, D2]));
        assert!(out.records[1].participants.is_empty());
    }

    #[test]
    fn doubt_shrinks_and_reacceptance_restores() {
        let tl = [
            say("p1", 1.0, D1, p()),
            stance("s1", 2.0, D2, p(), Stance::Accept),
            stance("s2", 3.0, Builder, p(), Stance::Accept),
            stance("s3", 4.0, D2, p(), Stance::Doubt),
            stance("s4", 5.0, D2, p(), Stance::Accept),
        ];
        let out = run_cgc(&tl).unwrap();
        let r: Vec<_> = out.records.iter().map(|r| (r.kind, r.participants.clone())).collect();
        assert_eq!(
            r,
            [
                (CgEventKind::Formed, group(&[D1, D2])),
                (CgEventKind::Expanded, group(&[D1, D2, Builder])),
                (CgEventKind::Shrunk, group(&[D1, Builder])),
                (CgEventKind::Expanded, group(&[D1, D2, Builder])),
            ]
        );
        assert!(out.beliefs[3][&D2].doubted.contains(&p()));
    }

    #[test]
    fn relation_set_tracks_size_threshold() {
        let tl = [
            say("p1", 1.0, D1, p()),
            stance("s1", 2.0, D2, p(), Stance::Accept),
            say("p2", 3.0, D1, q()),
            stance("s2", 4.0, D3, q(), Stance::Accept),
            stance("s3", 5.0, D2, p(), Stance::Doubt),
        ];
        let out = run_cgc(&tl).unwrap();
        assert_eq!(cg_relation_set(&out.records, 2.0), BTreeSet::from([p()]));
        assert_eq!(cg_relation_set(&out.records, 5.0), BTreeSet::from([q()]));
        let last = out.records.last().unwrap();
        assert_eq!((last.kind, last.participants.len()), (CgEventKind::Shrunk, 1));

        let tl = [
            say("p1", 1.0, D1, p()),
            stance("s1", 2.0, D2, p(), Stance::Accept),
            stance("s2", 3.0, D2, p(), Stance::Negate),
        ];
        let out = run_cgc(&tl).unwrap();
        assert!(cg_relation_set(&out.records, 3.0).is_empty());
    }

    #[test]
    fn composite_needs_every_conjunct() {
        let mut state = BTreeMap::new();
        state.insert(p(), group(&[D1, D2, Builder]));
        state.insert(q(), group(&[D1, D2, D3]));
        assert_eq!(composite_group(&state, &[p(), q()]), Some(group(&[D1, D2])));
        let r = RelationAtom::on(t("rs2"), Term::Base, Some(0));
        assert_eq!(composite_group(&state, &[p(), r]), None);
    }

    fn marker(ts: f64) -> AlignedEvent {
        AlignedEvent {
            proposition: None,
            stance: None,
            ..say("g", ts, D1, p())
        }
    }

    fn record(ts: f64, id: &str) -> CGRecord {
        CGRecord {
            id: id.into(),
            timestamp: ts,
            event: "x".into(),
            kind: CgEventKind::Formed,
            participants: group(&[D1, D2]),
            proposition: p(),
        }
    }

    #[test]
    fn turn_segmentation() {
        let tl: Vec<_> = (1..=12).map(|i| marker(i as f64 * 10.0)).collect();
        let turns = segment_turns(&tl, &[record(50.0, "cg1"), record(90.0, "cg2")]);
        assert_eq!(turns.len(), 3);
        assert_eq!(turns[0].events.len(), 5);
        assert_eq!(turns[2].boundary, None);

        assert_eq!(segment_turns(&tl, &[]).len(), 1);

        let tl: Vec<_> = (1..=6).map(|i| marker(i as f64 * 10.0)).collect();
        let turns = segment_turns(&tl, &[record(50.0, "cg1"), record(50.0, "cg2")]);
        assert_eq!(turns.len(), 2);
        assert_eq!(turns[0].boundary.as_deref(), Some("cg2"));
    }

    #[test]
    fn ungrounded_is_an_error() {
        let bad = RelationAtom::nextto("RedShort".parse().unwrap(), t("gs1"), None);
        assert!(matches!(
            update_beliefs(&[say("p1", 1.0, D1, bad)]),
            Err(CgcError::UngroundedProposition { .. })
        ));
    }

    #[test]
    fn records_round_trip() {
        let recs = vec![record(1.5, "cg1")];
        let text = serialize_records(&recs);
        assert_eq!(parse_records(&text).unwrap(), recs);
    }
}
