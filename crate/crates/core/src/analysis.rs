//! Fuel-game experiments: expected costs, payoff tables, symmetric mixtures,
//! price of anarchy, DIRECT search, centralized brute force and Gini equity.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::circuit::{Circuit, Vertex};
use crate::error::{Error, Result};
use crate::explorer::{
    enumerate_initial_configs, initial_state, nontermination_bound, walk_tree, InitialConfiguration, Leaf,
    PriorityRule, TreeSettings, TreeVisitor,
};
use crate::fuel::FuelParameters;
use crate::game::ProtocolOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionMode {
    #[default]
    NonCooperativeDistributed,
    CooperativeDistributed,
    CooperativeCentralized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CircuitSpec {
    Tetrahedral { hold: bool },
    Grid { rows: usize, cols: usize, hold: bool },
    Edges { vertices: usize, edges: Vec<(Vertex, Vertex)>, hold: bool },
}

impl CircuitSpec {
    pub fn build(&self) -> Result<Circuit> {
        match self {
            CircuitSpec::Tetrahedral { hold } => Ok(Circuit::tetrahedral(*hold)),
            CircuitSpec::Grid { rows, cols, hold } => Circuit::grid(*rows, *cols, *hold),
            CircuitSpec::Edges { vertices, edges, hold } => Circuit::from_edges(*vertices, edges, *hold),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub circuit: CircuitSpec,
    pub vehicles: usize,
    pub fuel: FuelParameters,
    pub protocol: ProtocolOptions,
    pub mode: ResolutionMode,
    /// Evaluate a seeded random subset of this many configurations.
    pub configs_sample: Option<usize>,
    pub sample_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::tetrahedral()
    }
}

impl ScenarioConfig {
    pub fn tetrahedral() -> Self {
        ScenarioConfig {
            circuit: CircuitSpec::Tetrahedral { hold: false },
            vehicles: 3,
            fuel: FuelParameters::default(),
            protocol: ProtocolOptions::default(),
            mode: ResolutionMode::NonCooperativeDistributed,
            configs_sample: None,
            sample_seed: 0,
        }
    }

    pub fn grid() -> Self {
        ScenarioConfig {
            circuit: CircuitSpec::Grid { rows: 3, cols: 3, hold: false },
            fuel: FuelParameters { tank: 10.0, ..FuelParameters::default() },
            ..Self::tetrahedral()
        }
    }
}

/// A scenario with its circuit and configuration set materialized.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub circuit: Circuit,
    pub configs: Vec<InitialConfiguration>,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.fuel.validate()?;
        if config.vehicles == 0 {
            return Err(Error::InvalidParameter("vehicles must be >= 1".into()));
        }
        let circuit = config.circuit.build()?;
        let mut configs = enumerate_initial_configs(&circuit, config.vehicles, true);
        if let Some(k) = config.configs_sample {
            if k < configs.len() {
                let mut rng = ChaCha8Rng::seed_from_u64(config.sample_seed);
                let mut idx = sample(&mut rng, configs.len(), k).into_vec();
                idx.sort_unstable();
                configs = idx.into_iter().map(|i| configs[i].clone()).collect();
            }
        }
        Ok(Scenario { config, circuit, configs })
    }

    fn settings(&self) -> TreeSettings {
        TreeSettings {
            fuel: Some(self.config.fuel),
            protocol: self.config.protocol,
            max_depth: nontermination_bound(&self.circuit, self.config.vehicles).min(u64::from(u32::MAX)) as u32,
        }
    }

    /// Minimum fuel for each vehicle's mission.
    pub fn mission_minimum(&self, init: &InitialConfiguration) -> Vec<f64> {
        init.vehicles.iter().map(|&(u, _, d)| self.config.fuel.min_fuel_hops(self.circuit.dist(u, d))).collect()
    }

    fn dispatch(&self, init: &InitialConfiguration, w0: &[f64]) -> Result<Vec<f64>> {
        self.mission_minimum(init)
            .iter()
            .enumerate()
            .map(|(i, &s)| self.config.fuel.dispatch_fuel(w0.get(i).copied().unwrap_or(0.0), s))
            .collect()
    }
}

/// Expected outcome of one strategy profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellCost {
    pub individual: Vec<f64>,
    pub collective: f64,
    /// Probability-weighted mean Gini of per-instantiation excess ratios.
    pub gini: f64,
}

/// Incurred cost per vehicle with the mission reference behind the excess ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub incurred: f64,
    pub mission_minimum: f64,
    pub excess: f64,
    pub excess_ratio: f64,
}

impl CostReport {
    pub fn new(incurred: f64, mission_minimum: f64) -> Self {
        let excess = (incurred - mission_minimum).max(0.0);
        let excess_ratio = if mission_minimum > 0.0 { excess / mission_minimum } else { 0.0 };
        CostReport { incurred, mission_minimum, excess, excess_ratio }
    }
}

struct CostVisitor {
    minimum: Vec<f64>,
    cost: Vec<f64>,
    gini: f64,
}

impl TreeVisitor for CostVisitor {
    fn leaf(&mut self, l: &Leaf<'_>) {
        let mut ratios = Vec::with_capacity(self.minimum.len());
        for (i, (&c, &m)) in l.cost.iter().zip(&self.minimum).enumerate() {
            self.cost[i] += l.p * c;
            ratios.push(CostReport::new(c, m).excess_ratio);
        }
        self.gini += l.p * gini_coefficient(&ratios).unwrap_or(0.0);
    }
}

/// Expected per-vehicle and collective cost for dispatch priorities `w0`,
/// averaged over the scenario's configurations.
pub fn expected_costs(sc: &Scenario, w0: &[f64]) -> Result<CellCost> {
    let settings = sc.settings();
    let n = sc.config.vehicles;
    let per: Vec<(Vec<f64>, f64)> = sc
        .configs
        .par_iter()
        .map(|init| {
            let phi0 = sc.dispatch(init, w0)?;
            let root = initial_state(init, w0, &phi0);
            let mut v = CostVisitor { minimum: sc.mission_minimum(init), cost: vec![0.0; n], gini: 0.0 };
            walk_tree(&sc.circuit, root, &PriorityRule::FuelCoupled, &settings, &mut v)?;
            Ok((v.cost, v.gini))
        })
        .collect::<Result<_>>()?;
    Ok(average(&per, n))
}

fn average(per: &[(Vec<f64>, f64)], n: usize) -> CellCost {
    let k = per.len().max(1) as f64;
    let mut individual = vec![0.0; n];
    let mut gini = 0.0;
    for (c, g) in per {
        for (a, b) in individual.iter_mut().zip(c) {
            *a += b;
        }
        gini += g;
    }
    individual.iter_mut().for_each(|x| *x /= k);
    CellCost { collective: individual.iter().sum(), individual, gini: gini / k }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PayoffCell {
    pub profile: Vec<f64>,
    pub cost: CellCost,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PayoffTable {
    pub values: Vec<f64>,
    pub players: usize,
    /// Profiles in lexicographic order of value indices, player 1 slowest.
    pub cells: Vec<PayoffCell>,
}

impl PayoffTable {
    /// Builds a table from given per-profile individual costs (same ordering as `cells`).
    pub fn from_costs(values: Vec<f64>, players: usize, costs: Vec<Vec<f64>>) -> Self {
        let cells = profiles(values.len(), players)
            .into_iter()
            .zip(costs)
            .map(|(idx, individual)| PayoffCell {
                profile: idx.iter().map(|&i| values[i]).collect(),
                cost: CellCost { collective: individual.iter().sum(), individual, gini: 0.0 },
            })
            .collect();
        PayoffTable { values, players, cells }
    }

    fn cell(&self, idx: &[usize]) -> &PayoffCell {
        let k = self.values.len();
        &self.cells[idx.iter().fold(0, |a, &i| a * k + i)]
    }
}

fn profiles(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out.into_iter().flat_map(|p| (0..k).map(move |i| [p.clone(), vec![i]].concat())).collect();
    }
    out
}

pub fn payoff_table(sc: &Scenario, values: &[f64]) -> Result<PayoffTable> {
    if values.is_empty() || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidParameter("strategy values must lie in [0, 1]".into()));
    }
    let n = sc.config.vehicles;
    let cells = profiles(values.len(), n)
        .into_iter()
        .map(|idx| {
            let profile: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
            let cost = expected_costs(sc, &profile)?;
            Ok(PayoffCell { profile, cost })
        })
        .collect::<Result<_>>()?;
    Ok(PayoffTable { values: values.to_vec(), players: n, cells })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedOutcome {
    pub probabilities: Vec<f64>,
    pub individual: f64,
    pub collective: f64,
    /// Largest cost reduction a single player gets by switching to a pure
    /// strategy; zero or less means no profitable deviation.
    pub deviation_gain: f64,
    pub gini: f64,
}

/// Expected (individual averaged over players, collective, gini) when every
/// player draws independently from `q`, plus each pure strategy's expected
/// cost for a player facing that mixture.
fn mixture_costs(pt: &PayoffTable, q: &[f64]) -> (f64, f64, f64, Vec<f64>) {
    let k = pt.values.len();
    let n = pt.players;
    let mut coll = 0.0;
    let mut gini = 0.0;
    let mut pure = vec![0.0; k];
    for idx in profiles(k, n) {
        let pr: f64 = idx.iter().map(|&i| q[i]).product();
        let c = pt.cell(&idx);
        coll += pr * c.cost.collective;
        gini += pr * c.cost.gini;
        // deviation: player j fixed at s, others drawn from q; averaged over j
        for j in 0..n {
            let others: f64 = idx.iter().enumerate().filter(|&(t, _)| t != j).map(|(_, &i)| q[i]).product();
            pure[idx[j]] += others * c.cost.individual[j] / n as f64;
        }
    }
    (coll / n as f64, coll, gini, pure)
}

/// Symmetric mixture over the table's values minimizing the expected cost of
/// each player when all players use it: dense simplex grid then refinement.
pub fn mixed_equilibrium(pt: &PayoffTable) -> MixedOutcome {
    let q = minimize_on_simplex(pt.values.len(), |q| mixture_costs(pt, q).0);
    outcome(pt, q)
}

/// Symmetric Nash mixture: no pure strategy does better against it than the
/// mixture itself. Found by minimizing that regret over the simplex.
pub fn symmetric_nash(pt: &PayoffTable) -> MixedOutcome {
    let q = minimize_on_simplex(pt.values.len(), |q| {
        let (ind, _, _, pure) = mixture_costs(pt, q);
        ind - pure.iter().copied().fold(f64::INFINITY, f64::min)
    });
    outcome(pt, q)
}

fn outcome(pt: &PayoffTable, q: Vec<f64>) -> MixedOutcome {
    let (ind, coll, gini, pure) = mixture_costs(pt, &q);
    let gain = pure.iter().map(|&c| ind - c).fold(f64::NEG_INFINITY, f64::max);
    MixedOutcome { probabilities: q, individual: ind, collective: coll, deviation_gain: gain, gini }
}

fn minimize_on_simplex(k: usize, eval: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut best = vec![1.0 / k as f64; k];
    let mut best_f = eval(&best);
    let grid = if k <= 3 { 1000 } else { 40 };
    for q in simplex_grid(k, grid) {
        let f = eval(&q);
        if f < best_f - 1e-15 {
            best_f = f;
            best = q;
        }
    }
    let mut h = 1.0 / grid as f64;
    while h > 1e-12 {
        let mut improved = false;
        for a in 0..k {
            for b in 0..k {
                if a == b || best[b] < h {
                    continue;
                }
                let mut q = best.clone();
                q[a] += h;
                q[b] -= h;
                let f = eval(&q);
                if f < best_f - 1e-15 {
                    best_f = f;
                    best = q;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    best
}

fn simplex_grid(k: usize, m: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == k - 1 {
            let mut q: Vec<f64> = cur.iter().map(|&x| x as f64 / m as f64).collect();
            q.push(left as f64 / m as f64);
            out.push(q);
            return;
        }
        for x in 0..=left {
            cur.push(x);
            rec(k, left - x, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, m, m, &mut Vec::new(), &mut out);
    out
}

pub fn price_of_anarchy(equilibrium_collective: f64, optimal_collective: f64) -> Result<f64> {
    if !(optimal_collective > 0.0) {
        return Err(Error::InvalidParameter("optimal collective cost must be > 0".into()));
    }
    Ok(equilibrium_collective / optimal_collective)
}

/// `sum_i sum_j |x_i - x_j| / (2 n^2 mean)`, zero when every value is zero.
pub fn gini_coefficient(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    if xs.iter().any(|&x| x < 0.0 || x.is_nan()) {
        return Err(Error::InvalidParameter("negative value in Gini input".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    // sum over pairs via the sorted form: sum_i (2i - n + 1) x_(i)
    let s: f64 = v.iter().enumerate().map(|(i, &x)| (2.0 * i as f64 - n + 1.0) * x).sum();
    Ok(s / (n * n * mean))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// DIRECT rectangle-subdivision search on the unit hypercube followed by a
/// coordinate polish. `budget` counts objective evaluations.
pub fn direct_minimize<F>(dim: usize, budget: usize, mut f: F) -> Result<OptimizeResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    let mut cache: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> Result<f64> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(&y) = cache.get(&key) {
            return Ok(y);
        }
        *evals += 1;
        let y = f(x)?;
        cache.insert(key, y);
        Ok(y)
    };
    let direct_budget = (budget * 3 / 4).max(1);

    struct Rect {
        c: Vec<f64>,
        level: Vec<u32>,
        f: f64,
    }
    let size = |r: &Rect| -> f64 { 0.5 * r.level.iter().map(|&l| 3f64.powi(-2 * l as i32)).sum::<f64>().sqrt() };
    let c0 = vec![0.5; dim];
    let f0 = eval(&c0, &mut evals)?;
    let mut rects = vec![Rect { c: c0, level: vec![0; dim], f: f0 }];

    while evals < direct_budget {
        let fmin = rects.iter().map(|r| r.f).fold(f64::INFINITY, f64::min);
        let sel = potentially_optimal(&rects.iter().map(|r| (size(r), r.f)).collect::<Vec<_>>(), fmin);
        let before = evals;
        for &ri in sel.iter().rev() {
            if evals >= direct_budget {
                break;
            }
            let minl = *rects[ri].level.iter().min().unwrap();
            let dims: Vec<usize> = (0..dim).filter(|&i| rects[ri].level[i] == minl).collect();
            let delta = 3f64.powi(-(minl as i32) - 1);
            let mut samples = Vec::new();
            for &i in &dims {
                let mut lo = rects[ri].c.clone();
                lo[i] -= delta;
                let mut hi = rects[ri].c.clone();
                hi[i] += delta;
                let fl = eval(&lo, &mut evals)?;
                let fh = eval(&hi, &mut evals)?;
                samples.push((fl.min(fh), i, lo, fl, hi, fh));
            }
            samples.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (_, i, lo, fl, hi, fh) in samples {
                rects[ri].level[i] += 1;
                let level = rects[ri].level.clone();
                rects.push(Rect { c: lo, level: level.clone(), f: fl });
                rects.push(Rect { c: hi, level, f: fh });
            }
        }
        if evals == before {
            break;
        }
    }

    let (mut x, mut fx) = rects
        .iter()
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .map(|r| (r.c.clone(), r.f))
        .unwrap();
    let mut h = 1.0 / 27.0;
    while evals < budget && h > 1e-3 {
        let mut improved = false;
        for i in 0..dim {
            for s in [-1.0, 1.0] {
                if evals >= budget {
                    break;
                }
                let mut y = x.clone();
                y[i] = (y[i] + s * h).clamp(0.0, 1.0);
                if y[i] == x[i] {
                    continue;
                }
                let fy = eval(&y, &mut evals)?;
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            h /= 3.0;
        }
    }
    Ok(OptimizeResult { x, value: fx, evaluations: evals })
}

/// Indices of potentially optimal rectangles given `(size, value)` pairs.
fn potentially_optimal(pts: &[(f64, f64)], fmin: f64) -> Vec<usize> {
    const EPS: f64 = 1e-4;
    // best rectangle for each distinct size
    let mut by_size: Vec<(f64, f64, usize)> = Vec::new();
    for (i, &(d, f)) in pts.iter().enumerate() {
        match by_size.iter_mut().find(|e| (e.0 - d).abs() <= 1e-12 * d.max(1.0)) {
            Some(e) if f < e.1 => {
                e.1 = f;
                e.2 = i;
            }
            Some(_) => {}
            None => by_size.push((d, f, i)),
        }
    }
    by_size.sort_by(|a, b| a.0.total_cmp(&b.0));
    let start = by_size
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.1 .0.total_cmp(&a.1 .0)))
        .map(|(i, _)| i)
        .unwrap();
    // lower-right convex hull from the best point to the largest rectangle
    let mut hull: Vec<(f64, f64, usize)> = Vec::new();
    for &p in &by_size[start..] {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut out = Vec::new();
    for (j, &(d, f, i)) in hull.iter().enumerate() {
        if j + 1 < hull.len() {
            let (d2, f2, _) = hull[j + 1];
            let k = (f2 - f) / (d2 - d);
            if f - k * d > fmin - EPS * fmin.abs() {
                continue;
            }
        }
        out.push(i);
    }
    out
}

/// DIRECT search of dispatch priorities minimizing collective expected cost.
pub fn optimize_strategy(sc: &Scenario, budget: usize) -> Result<OptimizeResult> {
    if budget < 30 {
        return Err(Error::InvalidParameter("optimizer budget must be >= 30".into()));
    }
    direct_minimize(sc.config.vehicles, budget, |x| Ok(expected_costs(sc, x)?.collective))
}

/// Centralized optimum for one configuration: per-vehicle costs of the
/// cheapest encounter-free joint plan.
pub fn centralized_config(sc: &Scenario, init: &InitialConfiguration, phi0: &[f64]) -> Result<Vec<f64>> {
    let start: Vec<Option<(Vertex, f64)>> = init.vehicles.iter().zip(phi0).map(|(&(u, _, _), &p)| Some((u, p))).collect();
    let f = &sc.config.fuel;
    let mut p = Planner {
        c: &sc.circuit,
        f,
        dests: init.vehicles.iter().map(|v| v.2).collect(),
        blocks: sc.config.protocol.arrival_blocks,
        best: f64::INFINITY,
        best_per: Vec::new(),
        per: vec![0.0; init.len()],
        seen: HashMap::new(),
    };
    let depth = endurance_steps(f, phi0.iter().copied().fold(0.0, f64::max)) + 1;
    p.search(&start, &[], 0.0, depth)?;
    if !p.best.is_finite() {
        return Err(Error::BudgetExceeded("no encounter-free joint plan".into()));
    }
    Ok(p.best_per)
}

// Steps a vehicle can fly before it starves; bounds every joint plan.
fn endurance_steps(f: &FuelParameters, phi0: f64) -> u32 {
    let mut phi = phi0;
    let mut k = 0;
    while k < 100_000 {
        let after = f.fuel_at(phi, 1.0);
        k += 1;
        if after + 1e-12 < need_after(f, after) || after >= phi {
            break;
        }
        phi = after;
    }
    k
}

fn need_after(f: &FuelParameters, phi: f64) -> f64 {
    match f.mode {
        crate::fuel::FuelMode::Simple => 1.0,
        crate::fuel::FuelMode::Ode => f.step_need(phi),
    }
}

/// Depth-first branch and bound over joint moves. Fuel falls every step, so
/// the state space is acyclic and finite.
struct Planner<'a> {
    c: &'a Circuit,
    f: &'a FuelParameters,
    dests: Vec<Vertex>,
    blocks: bool,
    best: f64,
    best_per: Vec<f64>,
    per: Vec<f64>,
    // cheapest cost-so-far with which each state was reached
    seen: HashMap<Vec<(Vertex, u64)>, f64>,
}

impl Planner<'_> {
    /// Cost no plan from here can beat: each vehicle either flies its
    /// shortest path or starves after at least one step.
    fn lower_bound(&self, state: &[Option<(Vertex, f64)>]) -> f64 {
        let starve = self.f.starvation_penalty(1);
        state
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|(u, phi)| (i, u, phi)))
            .map(|(i, u, phi)| {
                let hops = f64::from(self.c.dist(u, self.dests[i]));
                let fly = phi - self.f.fuel_at(phi, hops);
                fly.min(phi - self.f.fuel_at(phi, 1.0) + starve)
            })
            .sum()
    }

    fn search(&mut self, state: &[Option<(Vertex, f64)>], parked: &[Vertex], g: f64, depth: u32) -> Result<()> {
        let n = state.len();
        let active: Vec<usize> = (0..n).filter(|&i| state[i].is_some()).collect();
        if active.is_empty() {
            if g < self.best - 1e-12 {
                self.best = g;
                self.best_per = self.per.clone();
            }
            return Ok(());
        }
        if g + self.lower_bound(state) >= self.best - 1e-12 {
            return Ok(());
        }
        let mut key: Vec<(Vertex, u64)> =
            state.iter().map(|s| s.map_or((usize::MAX, 0), |(u, p)| (u, p.to_bits()))).collect();
        key.extend(parked.iter().map(|&v| (v, u64::MAX)));
        match self.seen.get(&key) {
            Some(&h) if h <= g + 1e-12 => return Ok(()),
            _ => {
                self.seen.insert(key, g);
            }
        }
        if depth == 0 {
            return Err(Error::BudgetExceeded("centralized search depth".into()));
        }
        // closest moves first so the first complete plan is usually optimal
        let options: Vec<Vec<Vertex>> = active
            .iter()
            .map(|&i| {
                let (u, _) = state[i].unwrap();
                let mut m: Vec<Vertex> = self.c.neighbors(u).to_vec();
                if self.c.hold() {
                    m.push(u);
                }
                m.sort_by_key(|&v| (self.c.dist(v, self.dests[i]), v));
                m
            })
            .collect();
        let mut choice = vec![0usize; active.len()];
        loop {
            let moves: Vec<(Vertex, Vertex)> =
                active.iter().zip(&choice).zip(&options).map(|((&i, &k), o)| (state[i].unwrap().0, o[k])).collect();
            if encounter_free(&moves, parked) {
                let mut next = vec![None; n];
                let mut step = vec![0.0; n];
                let mut arrived = Vec::new();
                for (&i, &(_, v)) in active.iter().zip(&moves) {
                    let (_, phi) = state[i].unwrap();
                    let after = self.f.fuel_at(phi, 1.0);
                    step[i] = phi - after;
                    if v == self.dests[i] {
                        arrived.push(v);
                    } else if after + 1e-12 < need_after(self.f, after) {
                        step[i] += self.f.starvation_penalty(self.c.dist(v, self.dests[i]));
                    } else {
                        next[i] = Some((v, after));
                    }
                }
                let park: Vec<Vertex> = if self.blocks { arrived } else { Vec::new() };
                for (a, b) in self.per.iter_mut().zip(&step) {
                    *a += b;
                }
                self.search(&next, &park, g + step.iter().sum::<f64>(), depth - 1)?;
                for (a, b) in self.per.iter_mut().zip(&step) {
                    *a -= b;
                }
            }
            let mut k = 0;
            loop {
                if k == choice.len() {
                    return Ok(());
                }
                choice[k] += 1;
                if choice[k] < options[k].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
        }
    }
}

fn encounter_free(moves: &[(Vertex, Vertex)], parked: &[Vertex]) -> bool {
    for (a, &(u1, v1)) in moves.iter().enumerate() {
        if parked.contains(&v1) {
            return false;
        }
        for &(u2, v2) in &moves[a + 1..] {
            if v1 == v2 || (u1 == v2 && u2 == v1) {
                return false;
            }
        }
    }
    true
}

/// Centralized expected costs when every vehicle dispatches with priority
/// `uplift` (fuel `phi* + uplift (tank - phi*)` for its own mission).
pub fn centralized_optimum(sc: &Scenario, uplift: f64) -> Result<CellCost> {
    let n = sc.config.vehicles;
    let per: Vec<(Vec<f64>, f64)> = sc
        .configs
        .par_iter()
        .map(|init| {
            let phi0 = sc.dispatch(init, &vec![uplift; n])?;
            let cost = centralized_config(sc, init, &phi0)?;
            let ratios: Vec<f64> = cost
                .iter()
                .zip(sc.mission_minimum(init))
                .map(|(&c, m)| CostReport::new(c, m).excess_ratio)
                .collect();
            Ok((cost, gini_coefficient(&ratios)?))
        })
        .collect::<Result<_>>()?;
    Ok(average(&per, n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpliftResult {
    /// Dispatch priority shared by all vehicles.
    pub uplift: f64,
    /// Fuel that priority loads on a one-hop mission.
    pub uplift_fuel_one_hop: f64,
    pub cost: CellCost,
    pub evaluations: usize,
}

/// How much the planner knows when fixing the fuel uplift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpliftInformation {
    /// One priority for every configuration.
    #[default]
    OwnMission,
    /// Each configuration picks its own shared priority, knowing all missions.
    AllMissions,
}

/// One-dimensional DIRECT search of the shared dispatch priority.
pub fn optimize_uplift(sc: &Scenario, budget: usize) -> Result<UpliftResult> {
    optimize_uplift_with(sc, budget, UpliftInformation::OwnMission)
}

pub fn optimize_uplift_with(sc: &Scenario, budget: usize, info: UpliftInformation) -> Result<UpliftResult> {
    let r = direct_minimize(1, budget.max(10), |x| Ok(centralized_optimum(sc, x[0])?.collective))?;
    let f = &sc.config.fuel;
    let (uplift, cost) = match info {
        UpliftInformation::OwnMission => (r.x[0], centralized_optimum(sc, r.x[0])?),
        UpliftInformation::AllMissions => informed_uplift(sc, r.x[0])?,
    };
    Ok(UpliftResult {
        uplift,
        uplift_fuel_one_hop: f.dispatch_fuel(uplift, f.min_fuel(1.0))?,
        cost,
        evaluations: r.evaluations,
    })
}

// per-configuration choice among a priority grid and the shared optimum; reports the mean chosen priority
fn informed_uplift(sc: &Scenario, shared: f64) -> Result<(f64, CellCost)> {
    let n = sc.config.vehicles;
    let mut candidates: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    candidates.push(shared);
    let per: Vec<(f64, Vec<f64>, f64)> = sc
        .configs
        .par_iter()
        .map(|init| {
            let mut best: Option<(f64, Vec<f64>)> = None;
            for &u in &candidates {
                let phi0 = sc.dispatch(init, &vec![u; n])?;
                let cost = centralized_config(sc, init, &phi0)?;
                let total: f64 = cost.iter().sum();
                if best.as_ref().map_or(true, |b| total < b.1.iter().sum::<f64>() - 1e-12) {
                    best = Some((u, cost));
                }
            }
            let (u, cost) = best.expect("non-empty candidates");
            let ratios: Vec<f64> = cost
                .iter()
                .zip(sc.mission_minimum(init))
                .map(|(&c, m)| CostReport::new(c, m).excess_ratio)
                .collect();
            Ok((u, cost, gini_coefficient(&ratios)?))
        })
        .collect::<Result<_>>()?;
    let mean_u = per.iter().map(|p| p.0).sum::<f64>() / per.len() as f64;
    let rest: Vec<(Vec<f64>, f64)> = per.into_iter().map(|(_, c, g)| (c, g)).collect();
    Ok((mean_u, average(&rest, n)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub mode: ResolutionMode,
    pub collective: f64,
    pub gini: f64,
}

/// Side-by-side comparison of the equilibrium, cooperative and centralized outcomes.
pub fn scenario_summary(equilibrium: &MixedOutcome, cooperative: &CellCost, centralized: &CellCost) -> Vec<SummaryRow> {
    vec![
        SummaryRow {
            mode: ResolutionMode::NonCooperativeDistributed,
            collective: equilibrium.collective,
            gini: equilibrium.gini,
        },
        SummaryRow {
            mode: ResolutionMode::CooperativeDistributed,
            collective: cooperative.collective,
            gini: cooperative.gini,
        },
        SummaryRow {
            mode: ResolutionMode::CooperativeCentralized,
            collective: centralized.collective,
            gini: centralized.gini,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn brute_gini(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mu = x.iter().sum::<f64>() / n;
        if mu == 0.0 {
            return 0.0;
        }
        let mut s = 0.0;
        for a in x {
            for b in x {
                s += (a - b).abs();
            }
        }
        s / (2.0 * n * n * mu)
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini_coefficient(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(gini_coefficient(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(gini_coefficient(&[0.0, 0.0, 1.0]).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        let x = [0.3, 1.7, 0.0, 4.2, 0.9];
        assert_abs_diff_eq!(gini_coefficient(&x).unwrap(), brute_gini(&x), epsilon = 1e-14);
        assert!(gini_coefficient(&[-1.0]).is_err());
        assert!(gini_coefficient(&[]).is_err());
    }

    #[test]
    fn poa() {
        assert_abs_diff_eq!(price_of_anarchy(5.38, 4.99).unwrap(), 1.0782, epsilon = 1e-4);
        assert_abs_diff_eq!(price_of_anarchy(8.00, 7.78).unwrap(), 1.0283, epsilon = 1e-4);
        assert_eq!(price_of_anarchy(3.0, 3.0).unwrap(), 1.0);
        assert!(price_of_anarchy(1.0, 0.0).is_err());
    }

    #[test]
    fn direct_on_separable_quadratic() {
        let t = [0.2, 0.71, 0.43];
        let r = direct_minimize(3, 300, |x| Ok(x.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum())).unwrap();
        for (a, b) in r.x.iter().zip(&t) {
            assert!((a - b).abs() < 0.01, "{:?}", r.x);
        }
        assert!(r.evaluations <= 300);
    }

    #[test]
    fn direct_is_deterministic() {
        let f = |x: &[f64]| Ok((x[0] - 0.3).abs() + (x[1] * 7.0).sin().abs());
        let a = direct_minimize(2, 80, f).unwrap();
        let b = direct_minimize(2, 80, f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_table_any_mixture() {
        let pt = PayoffTable::from_costs(vec![0.0, 0.5], 3, vec![vec![2.0; 3]; 8]);
        let m = mixed_equilibrium(&pt);
        assert_abs_diff_eq!(m.individual, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.collective, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn mixture_on_two_value_table() {
        // symmetric 3-player table where cost depends on own choice and count of "1" choices
        let cost = |own: usize, ones: usize| if own == 0 { 3.0 - ones as f64 } else { 1.0 + 0.8 * ones as f64 };
        let mut costs = Vec::new();
        for idx in profiles(2, 3) {
            let ones = idx.iter().filter(|&&i| i == 1).count();
            costs.push(idx.iter().map(|&o| cost(o, ones)).collect());
        }
        let pt = PayoffTable::from_costs(vec![0.0, 1.0], 3, costs);
        let m = mixed_equilibrium(&pt);
        // brute force over a fine grid
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=100_000 {
            let p = k as f64 / 100_000.0;
            let e = mixture_costs(&pt, &[p, 1.0 - p]).0;
            if e < best.0 {
                best = (e, p);
            }
        }
        assert_abs_diff_eq!(m.probabilities[0], best.1, epsilon = 1e-4);
        assert_abs_diff_eq!(m.individual, best.0, epsilon = 1e-9);
    }

    #[test]
    fn centralized_single_vehicle_is_shortest_path_burn() {
        let sc = Scenario::new(ScenarioConfig {
            circuit: CircuitSpec::Grid { rows: 3, cols: 3, hold: false },
            vehicles: 1,
            fuel: FuelParameters { tank: 10.0, ..Default::default() },
            ..ScenarioConfig::tetrahedral()
        })
        .unwrap();
        let init = InitialConfiguration { vehicles: vec![(0, 1, 8)] };
        let f = sc.config.fuel;
        let phi0 = 6.0;
        let cost = centralized_config(&sc, &init, &[phi0]).unwrap();
        assert_abs_diff_eq!(cost[0], phi0 - f.fuel_at(phi0, 4.0), epsilon = 1e-12);
    }
}
