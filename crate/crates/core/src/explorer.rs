//! Initial configurations, probabilistic trajectory trees and the tree-based
//! metrics: overlap audit, starvation, non-termination, entropy and lengths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::circuit::{Circuit, Resource, Vertex};
use crate::error::Result;
use crate::fuel::FuelParameters;
use crate::game::{resolve_step, Branch, GameState, ProtocolOptions, VehicleId, VehicleState};

/// Start, initial intent and destination of each vehicle; vehicle `i` has id `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InitialConfiguration {
    pub vehicles: Vec<(Vertex, Vertex, Vertex)>,
}

impl InitialConfiguration {
    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }
}

/// All placements of `n` vehicles on distinct vertices with a destination
/// other than the start. The initial intent is the routing choice towards the
/// destination, which on a complete graph is the destination itself. Without
/// distinct ids the vehicles are numbered by ascending start vertex.
pub fn enumerate_initial_configs(c: &Circuit, n: usize, distinct_ids: bool) -> Vec<InitialConfiguration> {
    let nv = c.vertex_count();
    if n > nv {
        return Vec::new();
    }
    let mut starts = Vec::new();
    let mut cur = Vec::with_capacity(n);
    placements(nv, n, distinct_ids, &mut cur, &mut starts);
    let mut out = Vec::new();
    for s in &starts {
        let mut dests = vec![0usize; n];
        fill_dests(c, s, 0, &mut dests, &mut out);
    }
    out
}

fn placements(nv: usize, n: usize, ordered: bool, cur: &mut Vec<Vertex>, out: &mut Vec<Vec<Vertex>>) {
    if cur.len() == n {
        out.push(cur.clone());
        return;
    }
    let from = if ordered { 0 } else { cur.last().map_or(0, |&v| v + 1) };
    for v in from..nv {
        if !cur.contains(&v) {
            cur.push(v);
            placements(nv, n, ordered, cur, out);
            cur.pop();
        }
    }
}

fn fill_dests(c: &Circuit, s: &[Vertex], i: usize, dests: &mut Vec<Vertex>, out: &mut Vec<InitialConfiguration>) {
    if i == s.len() {
        let vehicles = s.iter().zip(dests.iter()).map(|(&u, &d)| (u, c.next_hop(u, d), d)).collect();
        out.push(InitialConfiguration { vehicles });
        return;
    }
    for d in 0..c.vertex_count() {
        if d != s[i] {
            dests[i] = d;
            fill_dests(c, s, i + 1, dests, out);
        }
    }
}

/// Number of configurations without materializing them.
pub fn count_initial_configs(c: &Circuit, n: usize, distinct_ids: bool) -> u64 {
    let nv = c.vertex_count() as u64;
    let n64 = n as u64;
    if n64 > nv {
        return 0;
    }
    let perm: u64 = (0..n64).map(|k| nv - k).product();
    let fact: u64 = (1..=n64).product();
    let starts = if distinct_ids { perm } else { perm / fact };
    starts * (nv - 1).pow(n as u32)
}

/// How priorities are assigned at each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PriorityRule {
    /// Constant priority per vehicle (index = id - 1).
    Fixed(Vec<f64>),
    /// Priority recomputed each step from spare fuel.
    FuelCoupled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeSettings {
    /// `None` means unlimited fuel; fuel is then left out of the cycle key.
    pub fuel: Option<FuelParameters>,
    pub protocol: ProtocolOptions,
    /// Hard depth cap, normally the non-termination bound.
    pub max_depth: u32,
}

impl TreeSettings {
    pub fn unlimited(c: &Circuit, protocol: ProtocolOptions) -> Self {
        TreeSettings { fuel: None, protocol, max_depth: nontermination_bound(c, 3).min(u32::MAX as u64) as u32 }
    }
}

/// Root state for a configuration with per-vehicle initial fuel.
pub fn initial_state(init: &InitialConfiguration, w: &[f64], phi0: &[f64]) -> GameState {
    GameState::new(
        init.vehicles
            .iter()
            .enumerate()
            .map(|(i, &(u, nu, d))| VehicleState {
                id: (i + 1) as VehicleId,
                w: w.get(i).copied().unwrap_or(0.0),
                u,
                nu,
                d,
                phi: phi0.get(i).copied().unwrap_or(0.0),
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafKind {
    /// No vehicle left travelling.
    Finished,
    /// The state repeats an ancestor.
    Cycle,
    DepthLimit,
}

/// A finished trajectory as seen by a [`TreeVisitor`].
#[derive(Debug)]
pub struct Leaf<'a> {
    pub p: f64,
    pub depth: u32,
    pub kind: LeafKind,
    /// Fuel burned plus penalties, per vehicle slot.
    pub cost: &'a [f64],
    pub starved: &'a [bool],
    pub arrived: &'a [bool],
    /// Hops still to go for vehicles removed before arrival.
    pub hops_left: &'a [u32],
}

pub trait TreeVisitor {
    fn leaf(&mut self, leaf: &Leaf<'_>);
    /// Called for every resolved branch; `encounters` counts overlaps in it.
    fn branch(&mut self, _encounters: u32) {}
}

pub(crate) fn apply_priorities(s: &mut GameState, c: &Circuit, rule: &PriorityRule, fuel: Option<&FuelParameters>) {
    match rule {
        PriorityRule::Fixed(w) => {
            for v in &mut s.vehicles {
                v.w = w.get(v.id as usize - 1).copied().unwrap_or(0.0);
            }
        }
        PriorityRule::FuelCoupled => {
            let f = fuel.expect("fuel-coupled priorities need a fuel model");
            for v in &mut s.vehicles {
                let star = f.min_fuel_hops(c.dist(v.u, v.d));
                v.w = f.priority_from_fuel(v.phi, star).unwrap_or(0.0);
            }
        }
    }
}

#[derive(Clone, PartialEq)]
struct StateKey(Vec<(VehicleId, Vertex, Vertex, u64)>, Vec<(VehicleId, Vertex)>);

fn state_key(s: &GameState, with_fuel: bool) -> StateKey {
    StateKey(
        s.vehicles
            .iter()
            .map(|v| (v.id, v.u, v.d, if with_fuel { v.phi.to_bits() } else { 0 }))
            .collect(),
        s.parked.clone(),
    )
}

/// Vertex or edge overlaps created by a resolved branch.
pub fn encounters(from: &GameState, b: &Branch) -> u32 {
    let moves = from
        .parked
        .iter()
        .map(|&(_, v)| (v, v))
        .chain(from.vehicles.iter().zip(&b.intents).map(|(v, &to)| (v.u, to)));
    let mut seen: Vec<Resource> = Vec::new();
    let mut count = 0;
    for (u, v) in moves {
        let edge = (u != v).then(|| Resource::traversal(u, v));
        for r in std::iter::once(Resource::Vertex(v)).chain(edge) {
            if seen.contains(&r) {
                count += 1;
            } else {
                seen.push(r);
            }
        }
    }
    count + u32::from(b.violation)
}

struct Walker<'a, V: TreeVisitor> {
    c: &'a Circuit,
    rule: &'a PriorityRule,
    settings: &'a TreeSettings,
    visitor: &'a mut V,
    path: Vec<StateKey>,
    cost: Vec<f64>,
    starved: Vec<bool>,
    arrived: Vec<bool>,
    hops_left: Vec<u32>,
}

impl<V: TreeVisitor> Walker<'_, V> {
    fn emit(&mut self, p: f64, depth: u32, kind: LeafKind) {
        self.visitor.leaf(&Leaf {
            p,
            depth,
            kind,
            cost: &self.cost,
            starved: &self.starved,
            arrived: &self.arrived,
            hops_left: &self.hops_left,
        });
    }

    fn walk(&mut self, mut s: GameState, p: f64) -> Result<()> {
        let depth = s.time;
        if s.is_terminal() {
            self.emit(p, depth, LeafKind::Finished);
            return Ok(());
        }
        let key = state_key(&s, self.settings.fuel.is_some());
        if self.path.contains(&key) {
            self.emit(p, depth, LeafKind::Cycle);
            return Ok(());
        }
        if depth >= self.settings.max_depth {
            self.emit(p, depth, LeafKind::DepthLimit);
            return Ok(());
        }
        apply_priorities(&mut s, self.c, self.rule, self.settings.fuel.as_ref());
        let branches = resolve_step(self.c, &s, self.settings.fuel.as_ref(), &self.settings.protocol)?;
        self.path.push(key);
        for b in branches {
            self.visitor.branch(encounters(&s, &b));
            let saved = (self.cost.clone(), self.starved.clone(), self.arrived.clone(), self.hops_left.clone());
            for &(id, x) in &b.report.burned {
                self.cost[id as usize - 1] += x;
            }
            for &id in &b.report.arrived {
                self.arrived[id as usize - 1] = true;
            }
            for &(id, pen, hops) in &b.report.starved {
                let k = id as usize - 1;
                self.cost[k] += pen;
                self.starved[k] = true;
                self.hops_left[k] = hops;
            }
            self.walk(b.state, p * b.p)?;
            (self.cost, self.starved, self.arrived, self.hops_left) = saved;
        }
        self.path.pop();
        Ok(())
    }
}

/// Depth-first traversal of the trajectory tree rooted at `root`.
pub fn walk_tree<V: TreeVisitor>(
    c: &Circuit,
    root: GameState,
    rule: &PriorityRule,
    settings: &TreeSettings,
    visitor: &mut V,
) -> Result<()> {
    let n = root.vehicles.iter().map(|v| v.id as usize).max().unwrap_or(0);
    let mut w = Walker {
        c,
        rule,
        settings,
        visitor,
        path: Vec::new(),
        cost: vec![0.0; n],
        starved: vec![false; n],
        arrived: vec![false; n],
        hops_left: vec![0; n],
    };
    w.walk(root, 1.0)
}

/// A materialized trajectory tree. Node 0 is the root.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryTree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeNode {
    pub state: GameState,
    /// Probability of the branch leading here from the parent.
    pub p_b: f64,
    /// Product of branch probabilities from the root.
    pub p_traj: f64,
    pub children: Vec<usize>,
    pub terminal: Option<LeafKind>,
}

impl TrajectoryTree {
    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.terminal.is_some())
    }
}

pub fn build_trajectory_tree(
    c: &Circuit,
    root: GameState,
    rule: &PriorityRule,
    settings: &TreeSettings,
) -> Result<TrajectoryTree> {
    let mut nodes = vec![TreeNode { state: root, p_b: 1.0, p_traj: 1.0, children: Vec::new(), terminal: None }];
    let mut path: Vec<StateKey> = Vec::new();
    grow(c, rule, settings, &mut nodes, 0, &mut path)?;
    Ok(TrajectoryTree { nodes })
}

fn grow(
    c: &Circuit,
    rule: &PriorityRule,
    settings: &TreeSettings,
    nodes: &mut Vec<TreeNode>,
    at: usize,
    path: &mut Vec<StateKey>,
) -> Result<()> {
    let mut s = nodes[at].state.clone();
    if s.is_terminal() {
        nodes[at].terminal = Some(LeafKind::Finished);
        return Ok(());
    }
    let key = state_key(&s, settings.fuel.is_some());
    if path.contains(&key) {
        nodes[at].terminal = Some(LeafKind::Cycle);
        return Ok(());
    }
    if s.time >= settings.max_depth {
        nodes[at].terminal = Some(LeafKind::DepthLimit);
        return Ok(());
    }
    apply_priorities(&mut s, c, rule, settings.fuel.as_ref());
    nodes[at].state.vehicles = s.vehicles.clone();
    let branches = resolve_step(c, &s, settings.fuel.as_ref(), &settings.protocol)?;
    path.push(key);
    for b in branches {
        let idx = nodes.len();
        let p_traj = nodes[at].p_traj * b.p;
        nodes.push(TreeNode { state: b.state, p_b: b.p, p_traj, children: Vec::new(), terminal: None });
        nodes[at].children.push(idx);
        grow(c, rule, settings, nodes, idx, path)?;
    }
    path.pop();
    Ok(())
}

/// Structural classes of three-player priority vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EquivalenceClass {
    One,
    TwoStar,
    Two,
    ThreeStar,
    Three,
}

impl EquivalenceClass {
    pub const ALL: [EquivalenceClass; 5] = [
        EquivalenceClass::One,
        EquivalenceClass::TwoStar,
        EquivalenceClass::Two,
        EquivalenceClass::ThreeStar,
        EquivalenceClass::Three,
    ];

    pub fn representative(self) -> [f64; 3] {
        match self {
            EquivalenceClass::One => [0.5, 0.5, 0.5],
            EquivalenceClass::TwoStar => [0.0, 0.0, 0.5],
            EquivalenceClass::Two => [0.5, 1.0, 0.5],
            EquivalenceClass::ThreeStar => [0.0, 0.5, 1.0],
            EquivalenceClass::Three => [0.5, 1.0, 1.0],
        }
    }
}

impl fmt::Display for EquivalenceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EquivalenceClass::One => "1",
            EquivalenceClass::TwoStar => "2*",
            EquivalenceClass::Two => "2",
            EquivalenceClass::ThreeStar => "3*",
            EquivalenceClass::Three => "3",
        })
    }
}

pub fn equivalence_class_of(w: &[f64; 3]) -> EquivalenceClass {
    let [a, b, c] = *w;
    if a == b && b == c {
        return EquivalenceClass::One;
    }
    let has_zero = w.contains(&0.0);
    if a != b && b != c && a != c {
        return if has_zero { EquivalenceClass::ThreeStar } else { EquivalenceClass::Three };
    }
    // exactly one repeated value
    let (pair, single) = if a == b { (a, c) } else if a == c { (a, b) } else { (b, a) };
    if pair < single {
        if pair == 0.0 {
            EquivalenceClass::TwoStar
        } else if a == b {
            EquivalenceClass::One
        } else {
            EquivalenceClass::Two
        }
    } else if single == 0.0 {
        EquivalenceClass::ThreeStar
    } else {
        EquivalenceClass::Three
    }
}

/// Upper bound on the length of a non-cycling trajectory for `n` vehicles:
/// the number of distinct states with `k` travelling vehicles summed over
/// `k = n..2`, plus the single state of a lone vehicle.
pub fn nontermination_bound(c: &Circuit, n: usize) -> u64 {
    let nv = c.vertex_count() as u64;
    let m = (c.max_degree() + usize::from(c.hold())) as u64;
    let mut total = 1u64;
    for k in 2..=n as u64 {
        if k > nv {
            break;
        }
        let perm: u64 = (0..k).map(|i| nv - i).product();
        total += perm * m.pow(k as u32);
    }
    total
}

/// Tree statistics for one configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TreeStats {
    pub leaves: usize,
    pub mass: f64,
    pub entropy: f64,
    pub max_finished_len: u32,
    pub max_len: u32,
    pub cycle_mass: f64,
    pub has_cycle: bool,
    pub encounters: u64,
    pub branches: u64,
    /// Expected number of starved vehicles.
    pub starved: f64,
}

#[derive(Default)]
struct StatsVisitor(TreeStats);

impl TreeVisitor for StatsVisitor {
    fn leaf(&mut self, l: &Leaf<'_>) {
        let s = &mut self.0;
        s.leaves += 1;
        s.mass += l.p;
        if l.p > 0.0 {
            s.entropy -= l.p * l.p.log2();
        }
        s.max_len = s.max_len.max(l.depth);
        match l.kind {
            LeafKind::Finished => s.max_finished_len = s.max_finished_len.max(l.depth),
            LeafKind::Cycle | LeafKind::DepthLimit => {
                s.has_cycle = true;
                s.cycle_mass += l.p;
            }
        }
        s.starved += l.p * l.starved.iter().filter(|&&x| x).count() as f64;
    }

    fn branch(&mut self, e: u32) {
        self.0.branches += 1;
        self.0.encounters += u64::from(e);
    }
}

pub fn tree_stats(c: &Circuit, root: GameState, rule: &PriorityRule, settings: &TreeSettings) -> Result<TreeStats> {
    let mut v = StatsVisitor::default();
    walk_tree(c, root, rule, settings, &mut v)?;
    Ok(v.0)
}

/// Aggregate over all configurations for one priority vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub trees: usize,
    pub max_len: u32,
    pub has_cycles: bool,
    pub max_entropy: f64,
    pub mean_cycle_mass: f64,
    pub encounters: u64,
    /// Per-vehicle starvation probability averaged over vehicles and configurations.
    pub starvation: f64,
    pub max_mass_error: f64,
}

/// Metrics over `configs` for priority vector `w`, with `phi0` initial fuel
/// per vehicle when `settings.fuel` is set.
pub fn class_metrics(
    c: &Circuit,
    configs: &[InitialConfiguration],
    w: &[f64],
    phi0: f64,
    settings: &TreeSettings,
) -> Result<ClassMetrics> {
    let rule = PriorityRule::Fixed(w.to_vec());
    let stats: Vec<TreeStats> = configs
        .par_iter()
        .map(|init| {
            let root = initial_state(init, w, &vec![phi0; init.len()]);
            tree_stats(c, root, &rule, settings)
        })
        .collect::<Result<_>>()?;
    let n = stats.len().max(1) as f64;
    let nveh = configs.first().map_or(1, |x| x.len()).max(1) as f64;
    Ok(ClassMetrics {
        trees: stats.len(),
        max_len: stats.iter().map(|s| s.max_finished_len).max().unwrap_or(0),
        has_cycles: stats.iter().any(|s| s.has_cycle),
        max_entropy: stats.iter().map(|s| s.entropy).fold(0.0, f64::max),
        mean_cycle_mass: stats.iter().map(|s| s.cycle_mass).sum::<f64>() / n,
        encounters: stats.iter().map(|s| s.encounters).sum(),
        starvation: stats.iter().map(|s| s.starved).sum::<f64>() / n / nveh,
        max_mass_error: stats.iter().map(|s| (s.mass - 1.0).abs()).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub trees: usize,
    pub violations: u64,
}

/// Overlap audit across all configurations and the given priority vectors.
pub fn overlap_audit(c: &Circuit, reps: &[Vec<f64>], protocol: ProtocolOptions) -> Result<AuditReport> {
    let configs = enumerate_initial_configs(c, 3, true);
    let settings = TreeSettings::unlimited(c, protocol);
    let mut rep = AuditReport::default();
    for w in reps {
        let m = class_metrics(c, &configs, w, 0.0, &settings)?;
        rep.trees += m.trees;
        rep.violations += m.encounters;
    }
    Ok(rep)
}

/// Expected per-vehicle starvation probability with simple unit-cost fuel.
pub fn starvation_probability(c: &Circuit, w: &[f64; 3], phi0: f64, protocol: ProtocolOptions) -> Result<f64> {
    let configs = enumerate_initial_configs(c, 3, true);
    let settings = TreeSettings {
        fuel: Some(FuelParameters::simple(phi0.max(1.0))),
        protocol,
        max_depth: nontermination_bound(c, 3) as u32,
    };
    Ok(class_metrics(c, &configs, w, phi0, &settings)?.starvation)
}

/// Upper bound on the probability of non-termination: the cycle-truncated
/// leaf mass averaged over configurations, with unlimited fuel.
pub fn nontermination_probability(c: &Circuit, w: &[f64; 3], protocol: ProtocolOptions) -> Result<f64> {
    let configs = enumerate_initial_configs(c, 3, true);
    let settings = TreeSettings::unlimited(c, protocol);
    Ok(class_metrics(c, &configs, w, 0.0, &settings)?.mean_cycle_mass)
}

/// Maximum over configurations of the trajectory entropy in bits.
pub fn trajectory_entropy(c: &Circuit, w: &[f64; 3], protocol: ProtocolOptions) -> Result<f64> {
    let configs = enumerate_initial_configs(c, 3, true);
    let settings = TreeSettings::unlimited(c, protocol);
    Ok(class_metrics(c, &configs, w, 0.0, &settings)?.max_entropy)
}

/// Grid of priority vectors over `[0, 1]^3` with the given step.
pub fn priority_grid(step: f64) -> Vec<[f64; 3]> {
    let k = (1.0 / step).round() as usize;
    let val = |i: usize| ((i as f64 * step).min(1.0) * 1e9).round() / 1e9;
    let mut out = Vec::with_capacity((k + 1).pow(3));
    for a in 0..=k {
        for b in 0..=k {
            for c in 0..=k {
                out.push([val(a), val(b), val(c)]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_counts() {
        let t = Circuit::tetrahedral(false);
        assert_eq!(enumerate_initial_configs(&t, 3, false).len(), 108);
        assert_eq!(enumerate_initial_configs(&t, 3, true).len(), 648);
        assert_eq!(count_initial_configs(&t, 3, true), 648);
        let g = Circuit::grid(3, 3, false).unwrap();
        assert_eq!(count_initial_configs(&g, 3, true), 258_048);
        for init in enumerate_initial_configs(&t, 3, true) {
            for &(u, nu, d) in &init.vehicles {
                assert_ne!(u, nu);
                assert_eq!(nu, d);
            }
        }
    }

    #[test]
    fn bounds() {
        assert_eq!(nontermination_bound(&Circuit::tetrahedral(false), 3), 757);
        assert_eq!(nontermination_bound(&Circuit::tetrahedral(true), 3), 1729);
        assert_eq!(nontermination_bound(&Circuit::tetrahedral(false), 1), 1);
    }

    #[test]
    fn classes() {
        use EquivalenceClass::*;
        for (w, k) in [
            ([0.0, 0.0, 0.0], One),
            ([0.5, 0.5, 1.0], One),
            ([1.0, 1.0, 1.0], One),
            ([0.0, 0.0, 0.5], TwoStar),
            ([0.5, 0.0, 0.0], TwoStar),
            ([0.5, 1.0, 0.5], Two),
            ([1.0, 0.5, 0.5], Two),
            ([0.0, 0.5, 1.0], ThreeStar),
            ([0.5, 0.0, 0.5], ThreeStar),
            ([0.2, 0.5, 1.0], Three),
            ([0.5, 1.0, 1.0], Three),
        ] {
            assert_eq!(equivalence_class_of(&w), k, "{w:?}");
        }
        for k in EquivalenceClass::ALL {
            assert_eq!(equivalence_class_of(&k.representative()), k);
        }
    }

    #[test]
    fn single_vehicle_linear_tree() {
        let g = Circuit::grid(3, 3, false).unwrap();
        let init = InitialConfiguration { vehicles: vec![(0, 1, 8)] };
        let root = initial_state(&init, &[0.5], &[0.0]);
        let t = build_trajectory_tree(&g, root, &PriorityRule::Fixed(vec![0.5]), &TreeSettings::unlimited(&g, Default::default()))
            .unwrap();
        assert_eq!(t.nodes.len(), 5);
        let leaf = t.leaves().next().unwrap();
        assert_eq!(leaf.state.time, 4);
        assert_eq!(leaf.p_traj, 1.0);
    }

    #[test]
    fn grid_sweep_shape() {
        let g = priority_grid(0.5);
        assert_eq!(g.len(), 27);
        assert!(g.contains(&[0.0, 0.5, 1.0]));
    }
}
