use rayon::prelude::*;
use serde_json::{json, Value};

use vtg::analysis::{
    centralized_optimum, expected_costs, mixed_equilibrium, optimize_strategy, optimize_uplift_with, payoff_table,
    price_of_anarchy, scenario_summary, symmetric_nash, CellCost, PayoffTable, Scenario,
};
use vtg::explorer::{
    build_trajectory_tree, class_metrics, count_initial_configs, initial_state, nontermination_bound, priority_grid,
    ClassMetrics, TreeSettings,
};
use vtg::montecarlo::{run_scenario_episode, split_seed};
use vtg::{EquivalenceClass, FuelParameters, InitialConfiguration, PriorityRule};

use crate::config::{Command, Experiment};
use crate::output::{Field, Table};
use crate::CliError;

pub struct Outcome {
    pub table: Table,
    pub results: Value,
}

pub fn run(cmd: Command, sc: &Scenario, ex: &Experiment) -> Result<Outcome, CliError> {
    match cmd {
        Command::Enumerate => enumerate(sc),
        Command::Tree => tree(sc, ex),
        Command::Audit => audit(sc),
        Command::Starvation => sweep(sc, ex, "starvation", |m| m.starvation),
        Command::Nontermination => sweep(sc, ex, "nontermination", |m| m.mean_cycle_mass),
        Command::Entropy => sweep(sc, ex, "entropy", |m| m.max_entropy),
        Command::Payoff => payoff(sc, ex),
        Command::Equilibrium => equilibrium(sc, ex),
        Command::Optimize => optimize(sc, ex),
        Command::Centralized => centralized(sc, ex),
        Command::Summary => summary(sc, ex),
        Command::Montecarlo => montecarlo(sc, ex),
    }
}

fn per_vehicle(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

fn header(parts: &[Vec<String>]) -> Vec<String> {
    parts.concat()
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn nums(xs: &[f64]) -> Vec<Field> {
    xs.iter().map(|&x| Field::Num(x)).collect()
}

fn three_vehicles(sc: &Scenario, what: &str) -> Result<(), CliError> {
    if sc.config.vehicles != 3 {
        return Err(CliError::Config(format!("{what} needs scenario.vehicles = 3, got {}", sc.config.vehicles)));
    }
    Ok(())
}

fn unlimited(sc: &Scenario) -> TreeSettings {
    TreeSettings {
        fuel: None,
        protocol: sc.config.protocol,
        max_depth: nontermination_bound(&sc.circuit, sc.config.vehicles).min(u64::from(u32::MAX)) as u32,
    }
}

fn class_label(c: EquivalenceClass) -> &'static str {
    match c {
        EquivalenceClass::One => "1",
        EquivalenceClass::TwoStar => "2*",
        EquivalenceClass::Two => "2",
        EquivalenceClass::ThreeStar => "3*",
        EquivalenceClass::Three => "3",
    }
}

fn enumerate(sc: &Scenario) -> Result<Outcome, CliError> {
    let n = sc.config.vehicles;
    let mut t = Table::new(header(&[
        names(&["config"]),
        (1..=n).flat_map(|i| [format!("start_{i}"), format!("intent_{i}"), format!("dest_{i}")]).collect(),
    ]));
    for (k, init) in sc.configs.iter().enumerate() {
        let mut row = vec![Field::from(k)];
        for &(u, nu, d) in &init.vehicles {
            row.extend([Field::from(u), Field::from(nu), Field::from(d)]);
        }
        t.push(row);
    }
    let results = json!({
        "listed": sc.configs.len(),
        "ordered_ids": count_initial_configs(&sc.circuit, n, true),
        "unordered": count_initial_configs(&sc.circuit, n, false),
    });
    Ok(Outcome { table: t, results })
}

fn pick(sc: &Scenario, ex: &Experiment) -> Result<InitialConfiguration, CliError> {
    sc.configs.get(ex.config_index).cloned().ok_or_else(|| {
        CliError::Config(format!("experiment.config_index {} out of range 0..{}", ex.config_index, sc.configs.len()))
    })
}

fn tree(sc: &Scenario, ex: &Experiment) -> Result<Outcome, CliError> {
    let init = pick(sc, ex)?;
    let rule = PriorityRule::Fixed(ex.priorities.clone());
    let root = initial_state(&init, &ex.priorities, &vec![0.0; init.len()]);
    let tree = build_trajectory_tree(&sc.circuit, root, &rule, &unlimited(sc))?;
    let mut parent = vec![None; tree.nodes.len()];
    for (i, node) in tree.nodes.iter().enumerate() {
        for &ch in &node.children {
            parent[ch] = Some(i);
        }
    }
    let mut t = Table::new(names(&["node", "parent", "depth", "p_branch", "p_trajectory", "terminal", "positions"]));
    let mut entropy = 0.0;
    let mut leaves = 0;
    for (i, node) in tree.nodes.iter().enumerate() {
        let positions: Vec<String> =
            node.state.vehicles.iter().map(|v| format!("{}:{}>{}", v.id, v.u, v.nu)).collect();
        let terminal = match node.terminal {
            Some(k) => {
                leaves += 1;
                if node.p_traj > 0.0 {
                    entropy -= node.p_traj * node.p_traj.log2();
                }
                serde_json::to_value(k).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
            }
            None => String::new(),
        };
        t.push(vec![
            i.into(),
            parent[i].map_or(Field::from(""), Field::from),
            node.state.time.into(),
            node.p_b.into(),
            node.p_traj.into(),
            terminal.into(),
            positions.join(" ").into(),
        ]);
    }
    let results = json!({
        "config": init.vehicles,
        "nodes": tree.nodes.len(),
        "leaves": leaves,
        "entropy_bits": entropy,
    });
    Ok(Outcome { table: t, results })
}

fn audit(sc: &Scenario) -> Result<Outcome, CliError> {
    three_vehicles(sc, "audit")?;
    let settings = unlimited(sc);
    let mut t = Table::new(names(&[
        "class", "w1", "w2", "w3", "trees", "violations", "max_length", "has_cycles", "max_entropy",
    ]));
    let (mut trees, mut violations) = (0, 0);
    for class in EquivalenceClass::ALL {
        let w = class.representative();
        let m = class_metrics(&sc.circuit, &sc.configs, &w, 0.0, &settings)?;
        trees += m.trees;
        violations += m.encounters;
        let mut row = vec![Field::from(class_label(class))];
        row.extend(nums(&w));
        row.extend([
            m.trees.into(),
            m.encounters.into(),
            m.max_len.into(),
            m.has_cycles.into(),
            m.max_entropy.into(),
        ]);
        t.push(row);
    }
    Ok(Outcome { table: t, results: json!({ "trees": trees, "violations": violations }) })
}

fn sweep(sc: &Scenario, ex: &Experiment, metric: &str, f: fn(&ClassMetrics) -> f64) -> Result<Outcome, CliError> {
    three_vehicles(sc, metric)?;
    if !(ex.grid_step > 0.0 && ex.grid_step <= 1.0) {
        return Err(CliError::Config(format!("grid step must be in (0, 1], got {}", ex.grid_step)));
    }
    let (settings, phi0) = if metric == "starvation" {
        let mut s = unlimited(sc);
        s.fuel = Some(FuelParameters::simple(ex.phi0.max(1.0)));
        (s, ex.phi0)
    } else {
        (unlimited(sc), 0.0)
    };
    let mut t = Table::new(names(&["w1", "w2", "w3", metric]));
    let mut peak: f64 = 0.0;
    for w in priority_grid(ex.grid_step) {
        let m = class_metrics(&sc.circuit, &sc.configs, &w, phi0, &settings)?;
        let v = f(&m);
        peak = peak.max(v);
        let mut row = nums(&w);
        row.push(v.into());
        t.push(row);
    }
    let results = json!({ "points": t.rows.len(), "max": peak });
    Ok(Outcome { table: t, results })
}

fn cost_fields(c: &CellCost) -> Vec<Field> {
    let mut row = nums(&c.individual);
    row.push(c.collective.into());
    row.push(c.gini.into());
    row
}

fn payoff_rows(pt: &PayoffTable) -> Table {
    let n = pt.players;
    let mut t = Table::new(header(&[per_vehicle("w", n), per_vehicle("cost", n), names(&["collective", "gini"])]));
    for cell in &pt.cells {
        let mut row = nums(&cell.profile);
        row.extend(cost_fields(&cell.cost));
        t.push(row);
    }
    t
}

fn table_for(sc: &Scenario, ex: &Experiment) -> Result<PayoffTable, CliError> {
    if ex.values.is_empty() {
        return Err(CliError::Config("experiment.values must not be empty".into()));
    }
    Ok(payoff_table(sc, &ex.values)?)
}

fn payoff(sc: &Scenario, ex: &Experiment) -> Result<Outcome, CliError> {
    let pt = table_for(sc, ex)?;
    let best = pt.cells.iter().map(|c| c.cost.collective).fold(f64::INFINITY, f64::min);
    Ok(Outcome { table: payoff_rows(&pt), results: json!({ "cells": pt.cells.len(), "best_collective": best }) })
}

fn equilibrium(sc: &Scenario, ex: &Experiment) -> Result<Outcome, CliError> {
    let pt = table_for(sc, ex)?;
    let best = pt.cells.iter().map(|c| c.cost.collective).fold(f64::INFINITY, f64::min);
    let probs: Vec<String> = pt.values.iter().map(|v| format!("p_{v}")).collect();
    let mut t = Table::new(header(&[
        names(&["solution"]),
        probs,
        names(&["individual", "collective", "gini", "deviation_gain", "price_of_anarchy"]),
    ]));
    let mut results = serde_json::Map::new();
    for (name, m) in [("symmetric_optimum", mixed_equilibrium(&pt)), ("symmetric_nash", symmetric_nash(&pt))] {
        let poa = price_of_anarchy(m.collective, best)?;
        let mut row = vec![Field::from(name)];
        row.extend(nums(&m.probabilities));
        row.extend(nums(&[m.individual, m.collective, m.gini, m.deviation_gain, poa]));
        t.push(row);
        results.insert(name.into(), json!({ "outcome": m, "price_of_anarchy": poa }));
    }
    results.insert("best_cell_collective".into(), json!(best));
    Ok(Outcome { table: t, results: Value::Object(results) })
}

fn optimize(sc: &Scenario, ex: &Experiment) -> Result<Outcome, CliError> {
    let n = sc.config.vehicles;
    let r = optimize_strategy(sc, ex.budget)?;
    let cost = expected_costs(sc, &r.x)?;
    let mut t = Table::new(header(&[
        per_vehicle("w", n),
        per_vehicle("cost", n),
        names(&["collective", "gini", "evaluations"]),
    ]));
    let mut row = nums(&r.x);
    row.extend(cost_fields(&cost));
    row.push(r.evaluations.into());
    t.push(row);
    Ok(Outcome { table: t, results: json!({ "search": r, "cost": cost }) })
}

fn centralized(sc: &Scenario, ex: &Experiment) -> Result<Outcome, CliError> {
    let n = sc.config.vehicles;
    let f = &sc.config.fuel;
    let (uplift, fuel, cost, evaluations) = match ex.uplift {
        Some(u) => (u, f.dispatch_fuel(u, f.min_fuel(1.0))?, centralized_optimum(sc, u)?, 1),
        None => {
            let r = optimize_uplift_with(sc, ex.budget, ex.uplift_information)?;
            (r.uplift, r.uplift_fuel_one_hop, r.cost, r.evaluations)
        }
    };
    let mut t = Table::new(header(&[
        names(&["uplift", "uplift_fuel_one_hop"]),
        per_vehicle("cost", n),
        names(&["collective", "gini", "evaluations"]),
    ]));
    let mut row = nums(&[uplift, fuel]);
    row.extend(cost_fields(&cost));
    row.push(evaluations.into());
    t.push(row);
    let results = json!({
        "uplift": uplift,
        "uplift_fuel_one_hop": fuel,
        "information": ex.uplift_information,
        "cost": cost,
        "evaluations": evaluations,
    });
    Ok(Outcome { table: t, results })
}

fn summary(sc: &Scenario, ex: &Experiment) -> Result<Outcome, CliError> {
    let pt = table_for(sc, ex)?;
    let eq = mixed_equilibrium(&pt);
    let cd = optimize_strategy(sc, ex.budget)?;
    let cooperative = expected_costs(sc, &cd.x)?;
    let cc = optimize_uplift_with(sc, ex.budget, ex.uplift_information)?;
    let rows = scenario_summary(&eq, &cooperative, &cc.cost);
    let mut t = Table::new(names(&["mode", "collective", "gini"]));
    for r in &rows {
        let mode = serde_json::to_value(r.mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        t.push(vec![mode.into(), r.collective.into(), r.gini.into()]);
    }
    let results = json!({
        "rows": rows,
        "equilibrium_mixture": eq.probabilities,
        "cooperative_strategy": cd.x,
        "centralized_uplift": cc.uplift,
    });
    Ok(Outcome { table: t, results })
}

fn montecarlo(sc: &Scenario, ex: &Experiment) -> Result<Outcome, CliError> {
    let seed = ex.seed.ok_or_else(|| CliError::Config("montecarlo requires a seed".into()))?;
    if sc.configs.is_empty() {
        return Err(CliError::Config("scenario has no configurations".into()));
    }
    let n = sc.config.vehicles;
    let pick_seed = split_seed(seed, u64::MAX);
    let episodes: Vec<_> = (0..ex.episodes as u64)
        .into_par_iter()
        .map(|e| {
            let k = (split_seed(pick_seed, e) % sc.configs.len() as u64) as usize;
            run_scenario_episode(sc, &sc.configs[k], &ex.priorities, split_seed(seed, e)).map(|r| (k, r))
        })
        .collect::<vtg::Result<_>>()?;
    let mut t = Table::new(header(&[
        names(&["episode", "config", "end", "steps"]),
        per_vehicle("cost", n),
        per_vehicle("excess_ratio", n),
    ]));
    let mut mean = vec![0.0; n];
    let mut finished = 0;
    for (e, (k, (ep, reports))) in episodes.iter().enumerate() {
        let end = serde_json::to_value(ep.end).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        if end == "finished" {
            finished += 1;
        }
        let mut row = vec![e.into(), (*k).into(), end.into(), (ep.signature.len() - 1).into()];
        row.extend(reports.iter().map(|r| Field::Num(r.incurred)));
        row.extend(reports.iter().map(|r| Field::Num(r.excess_ratio)));
        for (m, r) in mean.iter_mut().zip(reports) {
            *m += r.incurred;
        }
        t.push(row);
    }
    let count = episodes.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= count);
    let results = json!({
        "episodes": episodes.len(),
        "finished": finished,
        "mean_individual": mean,
        "mean_collective": mean.iter().sum::<f64>(),
    });
    Ok(Outcome { table: t, results })
}
