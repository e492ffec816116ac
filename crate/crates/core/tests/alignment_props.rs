mod common;

use cgtrack::alignment::{align, attach_layer, ground_descriptors, merge_timeline, AlignConfig};
use cgtrack::annotations::Proposition;
use cgtrack::{Participant, RelationAtom, Term, WarningKind};
use common::session::random_session;
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn merge_ignores_input_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let s = random_session(seed);
        let cfg = AlignConfig::default();
        let (grounded, _) = ground_descriptors(&s.props, &s.actions, cfg.grounding_window);
        let (a, _) = merge_timeline(&grounded, &s.gestures, &s.actions, &s.stances, &cfg);
        let mut r = rng(shuffle);
        let (mut g2, mut ge2, mut st2) = (grounded.clone(), s.gestures.clone(), s.stances.clone());
        g2.shuffle(&mut r);
        ge2.shuffle(&mut r);
        st2.shuffle(&mut r);
        let (b, _) = merge_timeline(&g2, &ge2, &s.actions, &st2, &cfg);
        prop_assert_eq!(&a, &b);
        for w in a.windows(2) {
            prop_assert!(cgtrack::alignment::timeline_order(&w[0], &w[1]).is_le());
        }
    }

    #[test]
    fn unbounded_window_resolves_every_acted_on_descriptor(seed in any::<u64>()) {
        let s = random_session(seed);
        // One descriptor per action, mentioned before the action happens.
        let props: Vec<Proposition> = s.actions.iter().enumerate().map(|(i, a)| Proposition {
            id: format!("p{}", i + 1),
            timestamp: a.timestamp - 1.0,
            speaker: Participant::D1,
            relation: RelationAtom::on(
                Term::Descriptor(cgtrack::blockworld::Descriptor { color: a.block.color, shape: a.block.shape }),
                Term::Base,
                None,
            ),
            side: None,
        }).collect();
        let (_, warnings) = ground_descriptors(&props, &s.actions, f64::INFINITY);
        prop_assert!(warnings.iter().all(|w| w.kind != WarningKind::UnresolvedDescriptor), "{:?}", warnings);
    }

    #[test]
    fn annotated_layers_are_never_changed(seed in any::<u64>(), at in 0.0f64..60.0) {
        let s = random_session(seed);
        let state = cgtrack::actionlog::state_at(&s.actions, at).unwrap();
        for p in s.props.iter().filter(|p| p.layer().is_some()) {
            let (out, _) = attach_layer(p, &state);
            prop_assert_eq!(&out, p);
        }
    }

    #[test]
    fn alignment_is_deterministic(seed in any::<u64>()) {
        let s = random_session(seed);
        let cfg = AlignConfig::default();
        let a = align(&s.props, &s.gestures, &s.actions, &s.stances, &cfg);
        let b = align(&s.props, &s.gestures, &s.actions, &s.stances, &cfg);
        prop_assert_eq!(a, b);
    }
}
