mod common;

use approx::assert_abs_diff_eq;

use vtg::analysis::{
    centralized_optimum, expected_costs, gini_coefficient, mixed_equilibrium, optimize_uplift, optimize_uplift_with,
    payoff_table, symmetric_nash, PayoffTable, Scenario, ScenarioConfig, UpliftInformation,
};
use vtg::explorer::{enumerate_initial_configs, initial_state, tree_stats, PriorityRule, TreeSettings};
use vtg::montecarlo::compare_with_exact;
use vtg::{Circuit, InitialConfiguration, ProtocolOptions};

use common::gini_pairs;

fn tetra_table() -> (Scenario, PayoffTable) {
    let sc = Scenario::new(ScenarioConfig::tetrahedral()).unwrap();
    let pt = payoff_table(&sc, &[0.0, 0.51]).unwrap();
    (sc, pt)
}

#[test]
fn gini_examples() {
    assert_eq!(gini_coefficient(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
    assert_abs_diff_eq!(gini_coefficient(&[0.4, 0.4, 0.4]).unwrap(), 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(gini_coefficient(&[0.0, 0.0, 1.0]).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
    assert_abs_diff_eq!(gini_pairs(&[0.0, 0.0, 1.0]), 2.0 / 3.0, epsilon = 1e-15);
    assert!(gini_coefficient(&[0.1, -0.1]).is_err());
}

#[test]
fn payoff_table_is_permutation_symmetric() {
    let (_, pt) = tetra_table();
    for cell in &pt.cells {
        let mut sorted = cell.profile.clone();
        sorted.sort_by(f64::total_cmp);
        let base = pt.cells.iter().find(|c| c.profile == sorted).unwrap();
        assert_abs_diff_eq!(cell.cost.collective, base.cost.collective, epsilon = 0.01);
    }
}

#[test]
fn symmetric_nash_has_no_profitable_deviation() {
    let (_, pt) = tetra_table();
    let eq = symmetric_nash(&pt);
    assert!(eq.deviation_gain <= 1e-6, "{}", eq.deviation_gain);
    assert_abs_diff_eq!(eq.probabilities.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
}

#[test]
fn symmetric_optimum_on_published_table() {
    // the published payoff table itself, as an oracle for the solver
    let costs = vec![
        vec![2.68, 2.60, 2.56],
        vec![2.21, 2.22, 2.21],
        vec![2.22, 2.21, 2.21],
        vec![1.32, 1.83, 1.83],
        vec![2.21, 2.21, 2.22],
        vec![1.83, 1.32, 1.83],
        vec![1.83, 1.83, 1.32],
        vec![1.87, 1.82, 1.80],
    ];
    let pt = PayoffTable::from_costs(vec![0.0, 0.51], 3, costs);
    let m = mixed_equilibrium(&pt);
    // brute force over p on a fine grid
    let cost = |p: f64| {
        let mut total = 0.0;
        for cell in &pt.cells {
            let pr: f64 = cell.profile.iter().map(|&x| if x == 0.0 { p } else { 1.0 - p }).product();
            total += pr * cell.cost.collective;
        }
        total / 3.0
    };
    let best = (0..=100_000).map(|i| i as f64 / 100_000.0).min_by(|a, b| cost(*a).total_cmp(&cost(*b))).unwrap();
    assert_abs_diff_eq!(m.probabilities[0], best, epsilon = 1e-4);
    assert_abs_diff_eq!(m.individual, cost(best), epsilon = 1e-9);
    let nash = symmetric_nash(&pt);
    assert!(nash.deviation_gain <= 1e-6);
}

#[test]
fn resolution_modes_are_ordered() {
    let (sc, pt) = tetra_table();
    let nd = mixed_equilibrium(&pt).collective;
    let cd = pt.cells.iter().map(|c| c.cost.collective).fold(f64::INFINITY, f64::min);
    let cc = optimize_uplift(&sc, 20).unwrap().cost.collective;
    assert!(cc <= cd && cd <= nd, "{cc} {cd} {nd}");
}

#[test]
fn uplift_extremes_are_not_better() {
    let sc = Scenario::new(ScenarioConfig::tetrahedral()).unwrap();
    let best = optimize_uplift(&sc, 30).unwrap();
    let minimum = centralized_optimum(&sc, 0.0).unwrap().collective;
    let full = centralized_optimum(&sc, 1.0).unwrap().collective;
    assert!(minimum > best.cost.collective);
    assert!(full >= best.cost.collective);
}

#[test]
fn knowing_all_missions_is_not_worse() {
    let sc = Scenario::new(ScenarioConfig::tetrahedral()).unwrap();
    let own = optimize_uplift_with(&sc, 20, UpliftInformation::OwnMission).unwrap();
    let all = optimize_uplift_with(&sc, 20, UpliftInformation::AllMissions).unwrap();
    assert!(all.cost.collective <= own.cost.collective + 1e-12);
    assert!((0.0..=1.0).contains(&all.uplift));
}

#[test]
fn costs_do_not_depend_on_worker_count() {
    let mut cfg = ScenarioConfig::grid();
    cfg.configs_sample = Some(300);
    let sc = Scenario::new(cfg).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| expected_costs(&sc, &[0.0, 0.32, 0.54]).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
}

#[test]
fn linear_trip_on_grid() {
    let c = Circuit::grid(3, 3, false).unwrap();
    let init = InitialConfiguration { vehicles: vec![(0, 1, 8)] };
    let settings = TreeSettings::unlimited(&c, ProtocolOptions::default());
    let s = tree_stats(&c, initial_state(&init, &[0.5], &[0.0]), &PriorityRule::Fixed(vec![0.5]), &settings).unwrap();
    assert_eq!(s.leaves, 1);
    assert_eq!(s.max_finished_len, 4);
    assert_eq!(s.entropy, 0.0);
}

#[test]
fn first_step_frequencies_match_exact() {
    let c = Circuit::tetrahedral(false);
    let configs = enumerate_initial_configs(&c, 3, true);
    let settings = TreeSettings::unlimited(&c, ProtocolOptions::default());
    // all three vehicles aim at vertex 3
    let init = configs.iter().find(|i| i.vehicles.iter().all(|v| v.1 == 3)).unwrap();
    let chk = compare_with_exact(&c, init, &[0.5, 0.5, 0.5], &settings, 20_000, 99).unwrap();
    assert_eq!(chk.unmatched, 0);
    assert!(chk.max_z <= 3.0, "{}", chk.max_z);
}
