use criterion::{black_box, criterion_group, criterion_main, Criterion};

use vtg::analysis::{expected_costs, Scenario, ScenarioConfig};
use vtg::auction::{bids_from_probabilities, win_probabilities};
use vtg::explorer::{enumerate_initial_configs, initial_state, tree_stats, PriorityRule, TreeSettings};
use vtg::{Circuit, ProtocolOptions};

fn trees(c: &mut Criterion) {
    let circuit = Circuit::tetrahedral(false);
    let configs = enumerate_initial_configs(&circuit, 3, true);
    let settings = TreeSettings::unlimited(&circuit, ProtocolOptions::default());
    let w = [0.5, 0.5, 0.5];
    let rule = PriorityRule::Fixed(w.to_vec());
    c.bench_function("tetrahedral trees class 1", |b| {
        b.iter(|| {
            for init in &configs {
                let root = initial_state(init, &w, &[0.0; 3]);
                black_box(tree_stats(&circuit, root, &rule, &settings).unwrap());
            }
        })
    });
}

fn payoff_cell(c: &mut Criterion) {
    let sc = Scenario::new(ScenarioConfig::tetrahedral()).unwrap();
    c.bench_function("tetrahedral payoff cell", |b| {
        b.iter(|| black_box(expected_costs(&sc, &[0.0, 0.51, 0.51]).unwrap()))
    });
}

fn auction(c: &mut Criterion) {
    c.bench_function("auction forward", |b| b.iter(|| win_probabilities(black_box(&[0.3, 0.8, 1.0]))));
    c.bench_function("auction inverse", |b| b.iter(|| bids_from_probabilities(black_box(&[0.2, 0.3, 0.5]))));
}

criterion_group!(benches, trees, payoff_cell, auction);
criterion_main!(benches);
