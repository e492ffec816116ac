mod common;

use std::collections::BTreeMap;

use cgtrack::blockworld::BoardAction;
use cgtrack::{
    check_contiguity, derive_relations, project_side_view, BlockId, Placement, Relation,
    RelationAtom, Side, StructureState, Term,
};
use common::*;
use proptest::prelude::*;

fn id(s: &str) -> BlockId {
    s.parse().unwrap()
}

#[test]
fn front_example_matches_brute_force() {
    let s = StructureState::from_placements(
        [Placement::short(id("gs1"), 0, 0, 0), Placement::short(id("rs2"), 1, 0, 0)],
        None,
    )
    .unwrap();
    let got = derive_relations(&s, Side::Front);
    assert_eq!(got, brute_relations(&s, Side::Front));
    let (g, r) = (Term::Block(id("gs1")), Term::Block(id("rs2")));
    let expected = [
        RelationAtom::on(g, Term::Base, Some(0)),
        RelationAtom::on(r, Term::Base, Some(0)),
        RelationAtom::nextto(g, r, Some(0)),
        RelationAtom::leftof(g, r, Side::Front, Some(0)),
    ];
    assert_eq!(got, expected.into_iter().collect());
}

#[test]
fn occlusion_example_matches_brute_force() {
    let s = StructureState::from_placements(
        [Placement::short(id("rs1"), 0, 0, 0), Placement::short(id("gs1"), 0, 1, 0)],
        None,
    )
    .unwrap();
    for side in Side::ALL {
        let v = project_side_view(&s, side);
        let oracle = brute_view(&s, side);
        for col in 0..3 {
            for layer in 0..3 {
                assert_eq!(v.get(col, layer), oracle.get(&(col, layer)).copied());
            }
        }
    }
}

fn any_state() -> impl Strategy<Value = StructureState> {
    (any::<u64>(), 0usize..40).prop_map(|(seed, n)| random_state(&mut rng(seed), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn put_then_remove_is_identity(s in any_state(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let b = random_block(&mut r);
        prop_assume!(!s.contains(&b));
        let p = random_placement(&mut r, b);
        if let Ok(with) = s.apply(&BoardAction::Put(p)) {
            let back = with.apply(&BoardAction::Remove(b)).unwrap();
            prop_assert_eq!(back, s);
        }
    }

    #[test]
    fn relations_match_brute_force(s in any_state()) {
        for side in Side::ALL {
            prop_assert_eq!(derive_relations(&s, side), brute_relations(&s, side));
        }
    }

    #[test]
    fn derived_atoms_are_canonical(s in any_state()) {
        for side in Side::ALL {
            for a in derive_relations(&s, side) {
                prop_assert_eq!(a, a.canonical());
                prop_assert_eq!(a.side.is_some(), a.relation.is_side_relative());
                if a.relation == Relation::NextTo {
                    prop_assert!(a.arg1.to_string() <= a.arg2.to_string());
                }
            }
        }
    }

    #[test]
    fn views_never_show_more_colors_than_blocks(s in any_state()) {
        let mut present: BTreeMap<cgtrack::Color, usize> = BTreeMap::new();
        for p in s.placements() {
            *present.entry(p.block.color).or_default() += cells_of(p).len();
        }
        for side in Side::ALL {
            let v = project_side_view(&s, side);
            for col in 0..3 {
                let mut seen: BTreeMap<cgtrack::Color, usize> = BTreeMap::new();
                for layer in 0..3 {
                    if let Some(c) = v.get(col, layer) {
                        *seen.entry(c).or_default() += 1;
                    }
                }
                for (c, n) in seen {
                    prop_assert!(n <= present.get(&c).copied().unwrap_or(0));
                }
            }
            let oracle = brute_view(&s, side);
            for col in 0..3 {
                for layer in 0..3 {
                    prop_assert_eq!(v.get(col, layer), oracle.get(&(col, layer)).copied());
                }
            }
        }
    }

    /// For short blocks the left and right viewers see mirrored columns, so
    /// leftof flips its arguments between them.
    #[test]
    fn lateral_views_mirror_leftof(s in any_state()) {
        let shorts = StructureState::from_placements(
            s.placements().filter(|p| p.block.shape == cgtrack::Shape::Short && p.layer() == 0).copied(),
            None,
        ).unwrap();
        let left = derive_relations(&shorts, Side::Left);
        let right = derive_relations(&shorts, Side::Right);
        let flip = |side: Side, atoms: &std::collections::BTreeSet<RelationAtom>| -> std::collections::BTreeSet<(Term, Term)> {
            atoms.iter().filter(|a| a.relation == Relation::LeftOf && a.side == Some(side)).map(|a| (a.arg1, a.arg2)).collect()
        };
        let l = flip(Side::Left, &left);
        let r: std::collections::BTreeSet<(Term, Term)> = flip(Side::Right, &right).into_iter().map(|(a, b)| (b, a)).collect();
        prop_assert_eq!(l, r);
    }
}

#[test]
fn contiguity_agrees_with_union_find_on_1000_states() {
    let mut r = rng(7);
    for i in 0..1000 {
        // Sparse boards are needed to see disconnected ones.
        let s = random_state(&mut r, 1 + i % 12);
        assert_eq!(check_contiguity(&s), union_find_connected(&s), "{s:?}");
    }
}
