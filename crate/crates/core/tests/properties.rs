mod common;

use proptest::prelude::*;

use vtg::analysis::gini_coefficient;
use vtg::auction::{bids_from_probabilities, win_probabilities};
use vtg::explorer::{
    encounters, enumerate_initial_configs, equivalence_class_of, initial_state, tree_stats, PriorityRule, TreeSettings,
};
use vtg::game::resolve_step;
use vtg::{Circuit, FuelParameters, ProtocolOptions, TieBreak};

use common::{forest_shape, gini_pairs, rk4_fuel};

fn simplex(k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.02f64..1.0, k).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn tie_break() -> impl Strategy<Value = TieBreak> {
    prop_oneof![Just(TieBreak::LowestId), Just(TieBreak::HighestId)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn branch_and_leaf_mass_is_one(
        pick in 0usize..648,
        w in prop::array::uniform3(0.0f64..=1.0),
        hold in any::<bool>(),
        tie in tie_break(),
    ) {
        let c = Circuit::tetrahedral(hold);
        let init = &enumerate_initial_configs(&c, 3, true)[pick];
        let opts = ProtocolOptions { tie_break: tie, ..Default::default() };
        let root = initial_state(init, &w, &[0.0; 3]);
        let branches = resolve_step(&c, &root, None, &opts).unwrap();
        let p: f64 = branches.iter().map(|b| b.p).sum();
        prop_assert!((p - 1.0).abs() < 1e-9);
        let settings = TreeSettings::unlimited(&c, opts);
        let s = tree_stats(&c, root, &PriorityRule::Fixed(w.to_vec()), &settings).unwrap();
        prop_assert!((s.mass - 1.0).abs() < 1e-9);
        prop_assert_eq!(s.encounters, 0);
    }

    #[test]
    fn grid_steps_are_safe(pick in 0usize..258_048, w in prop::array::uniform3(0.0f64..=1.0)) {
        let c = Circuit::grid(3, 3, false).unwrap();
        let init = &enumerate_initial_configs(&c, 3, true)[pick];
        let root = initial_state(init, &w, &[0.0; 3]);
        let branches = resolve_step(&c, &root, None, &ProtocolOptions::default()).unwrap();
        let p: f64 = branches.iter().map(|b| b.p).sum();
        prop_assert!((p - 1.0).abs() < 1e-9);
        for b in &branches {
            prop_assert_eq!(encounters(&root, b), 0);
        }
    }

    #[test]
    fn auction_round_trip(w in simplex(1..=5)) {
        let b = bids_from_probabilities(&w).unwrap();
        prop_assert!(b.iter().all(|&x| x > 0.0 && x <= 1.0));
        let back = win_probabilities(&b).unwrap();
        for (x, y) in w.iter().zip(&back) {
            prop_assert!((x - y).abs() < 1e-6, "{:?} -> {:?}", w, back);
        }
    }

    #[test]
    fn fuel_closed_form_matches_ode(
        rho in 0.1f64..2.0,
        lambda in 0.001f64..0.3,
        phi0 in 3.0f64..10.0,
        t in 0.0f64..1.0,
    ) {
        let f = FuelParameters { rho, lambda, tank: 10.0, ..Default::default() };
        prop_assert!((f.fuel_at(phi0, t) - rk4_fuel(&f, phi0, t, 2000)).abs() < 1e-9);
    }

    #[test]
    fn min_fuel_lands_empty(rho in 0.1f64..2.0, lambda in 0.001f64..0.3, t in 0.1f64..4.0) {
        let f = FuelParameters { rho, lambda, tank: 100.0, ..Default::default() };
        prop_assert!(f.fuel_at(f.min_fuel(t), t).abs() < 1e-9);
    }

    #[test]
    fn dispatch_inverts_priority(w in 0.0f64..=1.0, star in 0.0f64..4.9, eps in 0.25f64..4.0) {
        let f = FuelParameters { epsilon: eps, ..Default::default() };
        let phi = f.dispatch_fuel(w, star).unwrap();
        prop_assert!((f.priority_from_fuel(phi, star).unwrap() - w).abs() < 1e-12);
    }

    #[test]
    fn gini_is_scale_invariant(xs in prop::collection::vec(0.0f64..5.0, 1..10), k in 0.01f64..100.0) {
        let scaled: Vec<f64> = xs.iter().map(|x| x * k).collect();
        let g = gini_coefficient(&xs).unwrap();
        prop_assert!((g - gini_coefficient(&scaled).unwrap()).abs() < 1e-12);
        prop_assert!((g - gini_pairs(&xs)).abs() < 1e-12);
        prop_assert!((0.0..1.0).contains(&g));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn class_members_share_tree_shapes(
        w in prop::array::uniform3(prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0])),
        hold in any::<bool>(),
    ) {
        let c = Circuit::tetrahedral(hold);
        let configs = enumerate_initial_configs(&c, 3, true);
        let rep = equivalence_class_of(&w).representative();
        prop_assert_eq!(forest_shape(&c, &configs, w), forest_shape(&c, &configs, rep));
    }
}
