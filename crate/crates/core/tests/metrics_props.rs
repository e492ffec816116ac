mod common;

use std::collections::{BTreeMap, BTreeSet};

use cgtrack::goalgen::{generate_goal, Palette};
use cgtrack::metrics::{cohen_kappa, dice, token_projection, view_grid_to_relations};
use cgtrack::{derive_relations, project_side_view, Color, RelationAtom, Side, SideView, Term};
use proptest::prelude::*;

fn oracle_dice(a: &[u8], b: &[u8]) -> f64 {
    let a: BTreeSet<u8> = a.iter().copied().collect();
    let b: BTreeSet<u8> = b.iter().copied().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let both = a.iter().filter(|x| b.contains(x)).count();
    2.0 * both as f64 / (a.len() + b.len()) as f64
}

fn oracle_kappa(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    let po = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let labels: BTreeSet<u8> = a.iter().chain(b).copied().collect();
    let pe: f64 = labels
        .iter()
        .map(|l| {
            let ca = a.iter().filter(|x| *x == l).count() as f64;
            let cb = b.iter().filter(|x| *x == l).count() as f64;
            ca * cb / (n * n)
        })
        .sum();
    (po - pe) / (1.0 - pe)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn dice_matches_oracle_and_is_symmetric(a in prop::collection::vec(0u8..12, 0..10), b in prop::collection::vec(0u8..12, 0..10)) {
        let sa: BTreeSet<u8> = a.iter().copied().collect();
        let sb: BTreeSet<u8> = b.iter().copied().collect();
        let d = dice(&sa, &sb);
        prop_assert!((d - oracle_dice(&a, &b)).abs() < 1e-12);
        prop_assert_eq!(d, dice(&sb, &sa));
        prop_assert!((0.0..=1.0).contains(&d));
        if !sa.is_empty() || !sb.is_empty() {
            prop_assert_eq!(d == 1.0, sa == sb);
        }
    }

    #[test]
    fn kappa_matches_oracle_and_ignores_label_names(
        pairs in prop::collection::vec((0u8..4, 0u8..4), 1..30),
        perm in Just([0u8, 1, 2, 3]).prop_shuffle(),
    ) {
        let a: Vec<u8> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        let k = cohen_kappa(&a, &b).unwrap();
        if k.warning.is_none() {
            prop_assert!((k.value - oracle_kappa(&a, &b)).abs() < 1e-12);
        }
        let ra: Vec<u8> = a.iter().map(|x| perm[*x as usize]).collect();
        let rb: Vec<u8> = b.iter().map(|x| perm[*x as usize]).collect();
        let k2 = cohen_kappa(&ra, &rb).unwrap();
        prop_assert!((k.value - k2.value).abs() < 1e-12);
    }
}

/// The grid reading rule applied to every ordered pair of cells, kept as a
/// list so duplicate atoms stay visible.
fn brute_grid_atoms(v: &SideView) -> Vec<RelationAtom> {
    let cells: Vec<(u8, u8, Color)> = (0..3)
        .flat_map(|l| (0..3).map(move |c| (c, l)))
        .filter_map(|(c, l)| v.get(c, l).map(|col| (c, l, col)))
        .collect();
    let mut out = Vec::new();
    for &(c1, l1, k1) in &cells {
        if l1 == 0 {
            out.push(RelationAtom::on(Term::Color(k1), Term::Base, Some(0)));
        }
        for &(c2, l2, k2) in &cells {
            if c1 == c2 && l1 == l2 + 1 {
                out.push(RelationAtom::on(Term::Color(k1), Term::Color(k2), Some(l2)));
            }
            if l1 == l2 && c1 < c2 && !(c2 == c1 + 1 && k1 == k2) {
                out.push(RelationAtom::leftof(Term::Color(k1), Term::Color(k2), v.side, Some(l1)));
                if c2 == c1 + 1 {
                    out.push(RelationAtom::nextto(Term::Color(k1), Term::Color(k2), Some(l1)));
                }
            }
        }
    }
    out
}

#[test]
fn full_single_color_view() {
    let v = SideView {
        side: Side::Front,
        cells: [[Some(Color::Red); 3]; 3],
    };
    let atoms = brute_grid_atoms(&v);
    let count = |r| atoms.iter().filter(|a| a.relation == r).count();
    // 3 on the base, 6 stacked, and per layer only the two outer columns.
    assert_eq!(count(cgtrack::Relation::On), 3 + 6);
    assert_eq!(count(cgtrack::Relation::LeftOf), 3);
    assert_eq!(count(cgtrack::Relation::NextTo), 0);
    assert_eq!(view_grid_to_relations(&[v]), atoms.into_iter().collect());
}

#[test]
fn grid_reading_matches_brute_force_on_generated_views() {
    for seed in 0..200 {
        let goal = generate_goal(seed, &Palette::default());
        let mut all = BTreeSet::new();
        for side in Side::ALL {
            let v = project_side_view(&goal, side);
            let expected: BTreeSet<RelationAtom> = brute_grid_atoms(&v).into_iter().collect();
            assert_eq!(view_grid_to_relations(&[v]), expected);
            all.extend(expected);
        }
        let views: Vec<SideView> = Side::ALL.iter().map(|s| project_side_view(&goal, *s)).collect();
        assert_eq!(view_grid_to_relations(&views), all);
    }
}

#[test]
fn grid_reading_is_sound_on_200_goals() {
    for seed in 0..200 {
        let goal = generate_goal(seed, &Palette::default());
        for side in Side::ALL {
            let from_grid = view_grid_to_relations(&[project_side_view(&goal, side)]);
            let truth = token_projection(&derive_relations(&goal, side));
            let extra: Vec<_> = from_grid.difference(&truth).collect();
            assert!(extra.is_empty(), "seed {seed} {side}: {extra:?}");
        }
    }
}

#[test]
fn kappa_label_counts() {
    let a = ["x", "x", "y", "y"];
    let b = ["x", "y", "x", "y"];
    let k = cohen_kappa(&a, &b).unwrap();
    let counts: BTreeMap<&str, usize> = a.iter().fold(BTreeMap::new(), |mut m, l| {
        *m.entry(*l).or_default() += 1;
        m
    });
    assert_eq!(counts["x"], 2);
    assert!((k.observed - 0.5).abs() < 1e-12 && (k.expected - 0.5).abs() < 1e-12);
    assert!(k.value.abs() < 1e-12);
}
