//! Game state, conflict detection, routing strategy and the allocation
//! protocol, resolved exactly as a probability distribution over outcomes.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::circuit::{Circuit, Resource, Vertex};
use crate::error::{Error, Result};
use crate::fuel::{FuelMode, FuelParameters};

pub type VehicleId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    /// Min-priority: lower values win conflicts.
    pub w: f64,
    pub u: Vertex,
    pub nu: Vertex,
    pub d: Vertex,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GameState {
    pub time: u32,
    /// Vehicles still travelling, sorted by id.
    pub vehicles: Vec<VehicleState>,
    /// Vehicles that just arrived and still occupy their destination.
    pub parked: Vec<(VehicleId, Vertex)>,
    /// Resources allocated in the step that produced this state.
    pub allocation: BTreeMap<Resource, VehicleId>,
}

impl GameState {
    pub fn new(mut vehicles: Vec<VehicleState>) -> Self {
        vehicles.sort_by_key(|v| v.id);
        GameState { vehicles, ..Default::default() }
    }

    pub fn is_terminal(&self) -> bool {
        self.vehicles.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub resources: Vec<Resource>,
    pub parties: Vec<VehicleId>,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestId,
    HighestId,
}

impl std::str::FromStr for TieBreak {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lowest" | "lowest_id" => Ok(TieBreak::LowestId),
            "highest" | "highest_id" => Ok(TieBreak::HighestId),
            _ => Err(format!("unknown tie-break rule '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolOptions {
    pub tie_break: TieBreak,
    /// Vehicles outside every conflict and strictly more prioritary than all
    /// of them allocate before the auction runs.
    pub early_allocation: bool,
    /// Arrived vehicles keep their destination vertex for one more step.
    pub arrival_blocks: bool,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions { tie_break: TieBreak::LowestId, early_allocation: true, arrival_blocks: false }
    }
}

/// Probability vector for losing the alternation auction.
///
/// Uniform when every priority is zero, proportional otherwise, so a
/// zero-priority vehicle never alternates against a positive one.
pub fn normalized_priorities(ws: &[f64]) -> Result<Vec<f64>> {
    if ws.is_empty() {
        return Err(Error::InvalidParameter("no priorities to normalize".into()));
    }
    let s: f64 = ws.iter().sum();
    if s > 0.0 {
        Ok(ws.iter().map(|w| w / s).collect())
    } else {
        Ok(vec![1.0 / ws.len() as f64; ws.len()])
    }
}

/// Vertex and edge conflicts for the declared intents, one per disputed
/// resource. `parked` vehicles hold their vertex.
pub fn detect_conflicts(s: &GameState) -> Vec<Conflict> {
    let mut agents: Vec<Agent> = s.vehicles.iter().map(Agent::from).collect();
    agents.extend(s.parked.iter().map(|&(id, v)| Agent::parked(id, v)));
    let nu: Vec<Vertex> = s.vehicles.iter().map(|v| v.nu).chain(s.parked.iter().map(|p| p.1)).collect();
    raw_conflicts(&agents, &nu)
        .into_iter()
        .map(|(r, p)| Conflict {
            omega: p.iter().map(|&i| agents[i].w).fold(f64::INFINITY, f64::min),
            parties: p.iter().map(|&i| agents[i].id).collect(),
            resources: vec![r],
        })
        .collect()
}

/// The routing strategy: shortest-path hop, or the alternate route when that
/// hop is disputed or already taken.
pub fn routing_choice(
    c: &Circuit,
    v: &VehicleState,
    disputed: &[Resource],
    allocated: &[Resource],
) -> Vertex {
    let v0 = c.next_hop(v.u, v.d);
    let blocked = |r: &Resource| disputed.contains(r) || allocated.contains(r);
    if blocked(&Resource::Vertex(v0)) || blocked(&Resource::traversal(v.u, v0)) {
        alternate(c, v.u, v.d, v0, allocated)
    } else {
        v0
    }
}

/// Among free moves other than `nu`, the first hop of the shortest resulting
/// path to `d`; `nu` itself when nothing is free.
pub fn alternate(c: &Circuit, u: Vertex, d: Vertex, nu: Vertex, allocated: &[Resource]) -> Vertex {
    let loop_move = c.hold().then_some(u);
    let mut best: Option<(u32, Vertex)> = None;
    for v in c.neighbors(u).iter().copied().chain(loop_move) {
        if v == nu
            || allocated.contains(&Resource::traversal(u, v))
            || allocated.contains(&Resource::Vertex(v))
        {
            continue;
        }
        let cost = 1 + c.dist(v, d);
        if best.map_or(true, |(bc, bv)| cost < bc || (cost == bc && v < bv)) {
            best = Some((cost, v));
        }
    }
    best.map_or(nu, |(_, v)| v)
}

/// One outcome of the protocol for a step.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentBranch {
    /// Allocated next vertex per travelling vehicle, aligned with the input order.
    pub intents: Vec<Vertex>,
    pub p: f64,
    /// The protocol ended with a conflict among allocated vehicles only.
    pub violation: bool,
}

/// Order in which simultaneous conflicts resolve: lowest omega first; equal
/// omegas compare the remaining party priorities in ascending order, and only
/// then the party ids under the configured rule.
#[derive(Debug, Clone)]
pub(crate) struct ConflictKey {
    ws: Vec<f64>,
    ids: Vec<i64>,
}

impl ConflictKey {
    pub(crate) fn new(ws: &[f64], ids: &[VehicleId], tie: TieBreak) -> Self {
        let mut ws = ws.to_vec();
        ws.sort_by(f64::total_cmp);
        let mut ids: Vec<i64> = ids.iter().map(|&x| i64::from(x)).collect();
        ids.sort_unstable();
        // the id rule applies to each conflict's smallest party id first
        if tie == TieBreak::HighestId {
            ids.iter_mut().for_each(|x| *x = -*x);
        }
        ConflictKey { ws, ids }
    }

    pub(crate) fn cmp(&self, o: &Self) -> Ordering {
        self.ws
            .iter()
            .zip(&o.ws)
            .map(|(a, b)| a.total_cmp(b))
            .find(|x| x.is_ne())
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.ids.cmp(&o.ids))
    }
}

#[derive(Debug, Clone, Copy)]
struct Agent {
    id: VehicleId,
    u: Vertex,
    d: Vertex,
    w: f64,
    fixed: bool,
}

impl Agent {
    fn parked(id: VehicleId, v: Vertex) -> Self {
        Agent { id, u: v, d: v, w: 0.0, fixed: true }
    }
}

impl From<&VehicleState> for Agent {
    fn from(v: &VehicleState) -> Self {
        Agent { id: v.id, u: v.u, d: v.d, w: v.w, fixed: false }
    }
}

fn raw_conflicts(agents: &[Agent], nu: &[Vertex]) -> Vec<(Resource, Vec<usize>)> {
    let mut by: BTreeMap<Resource, Vec<usize>> = BTreeMap::new();
    for (i, a) in agents.iter().enumerate() {
        by.entry(Resource::Vertex(nu[i])).or_default().push(i);
        if nu[i] != a.u {
            by.entry(Resource::traversal(a.u, nu[i])).or_default().push(i);
        }
    }
    by.into_iter().filter(|(_, p)| p.len() > 1).collect()
}

/// Conflicts grouped by identical party set.
fn grouped_conflicts(agents: &[Agent], nu: &[Vertex]) -> Vec<(Vec<Resource>, Vec<usize>)> {
    let mut out: Vec<(Vec<Resource>, Vec<usize>)> = Vec::new();
    for (r, p) in raw_conflicts(agents, nu) {
        match out.iter_mut().find(|(_, q)| *q == p) {
            Some((rs, _)) => rs.push(r),
            None => out.push((vec![r], p)),
        }
    }
    out
}

struct Resolver<'a> {
    c: &'a Circuit,
    agents: Vec<Agent>,
    opts: ProtocolOptions,
    bound: usize,
    out: Vec<IntentBranch>,
}

impl Resolver<'_> {
    fn key(&self, parties: &[usize]) -> ConflictKey {
        let ws: Vec<f64> = parties.iter().map(|&i| self.agents[i].w).collect();
        let ids: Vec<VehicleId> = parties.iter().map(|&i| self.agents[i].id).collect();
        ConflictKey::new(&ws, &ids, self.opts.tie_break)
    }

    fn allocate(&self, i: usize, v: Vertex, res: &mut Vec<Resource>) {
        res.push(Resource::Vertex(v));
        res.push(Resource::traversal(self.agents[i].u, v));
    }

    fn rec(&mut self, nu: Vec<Vertex>, mut alloc: Vec<bool>, mut res: Vec<Resource>, p: f64, depth: usize) -> Result<()> {
        if depth > self.bound {
            return Err(Error::IterationBound(self.bound));
        }
        let confs = grouped_conflicts(&self.agents, &nu);
        if confs.is_empty() {
            self.out.push(IntentBranch { intents: nu, p, violation: false });
            return Ok(());
        }
        if self.opts.early_allocation {
            let omega = confs
                .iter()
                .flat_map(|(_, q)| q.iter().map(|&i| self.agents[i].w))
                .fold(f64::INFINITY, f64::min);
            for i in 0..self.agents.len() {
                let in_conflict = confs.iter().any(|(_, q)| q.contains(&i));
                if !alloc[i] && !in_conflict && self.agents[i].w < omega {
                    alloc[i] = true;
                    self.allocate(i, nu[i], &mut res);
                }
            }
        }
        let pick = confs
            .iter()
            .filter(|(_, q)| q.iter().any(|&i| !alloc[i]))
            .min_by(|a, b| self.key(&a.1).cmp(&self.key(&b.1)));
        let Some((disputed, parties)) = pick else {
            self.out.push(IntentBranch { intents: nu, p, violation: true });
            return Ok(());
        };
        let free: Vec<usize> = parties.iter().copied().filter(|&i| !alloc[i]).collect();
        let ws: Vec<f64> = free.iter().map(|&i| self.agents[i].w).collect();
        let lose = normalized_priorities(&ws)?;
        let disputed = disputed.clone();
        for (&m, &wm) in free.iter().zip(&lose) {
            if wm <= 0.0 {
                continue;
            }
            let a = self.agents[m];
            let v0 = self.c.next_hop(a.u, a.d);
            let mut nn = nu.clone();
            if disputed.contains(&Resource::Vertex(v0)) || disputed.contains(&Resource::traversal(a.u, v0)) {
                nn[m] = alternate(self.c, a.u, a.d, v0, &res);
            }
            let mut a2 = alloc.clone();
            a2[m] = true;
            let mut r2 = res.clone();
            self.allocate(m, nn[m], &mut r2);
            self.rec(nn, a2, r2, p * wm, depth + 1)?;
        }
        Ok(())
    }
}

/// Exact distribution of protocol outcomes for the travelling vehicles of `s`
/// (their `nu` is ignored; intents are recomputed by the routing strategy).
pub fn resolve_intents(c: &Circuit, s: &GameState, opts: &ProtocolOptions) -> Result<Vec<IntentBranch>> {
    let n = s.vehicles.len();
    let mut agents: Vec<Agent> = s.vehicles.iter().map(Agent::from).collect();
    let mut nu: Vec<Vertex> = s.vehicles.iter().map(|v| c.next_hop(v.u, v.d)).collect();
    let mut res = Vec::new();
    for &(id, v) in &s.parked {
        agents.push(Agent::parked(id, v));
        nu.push(v);
        res.push(Resource::Vertex(v));
        res.push(Resource::traversal(v, v));
    }
    let alloc: Vec<bool> = agents.iter().map(|a| a.fixed).collect();
    let mut r = Resolver {
        c,
        bound: agents.len().max(1) * c.vertex_count().max(1),
        agents,
        opts: *opts,
        out: Vec::new(),
    };
    r.rec(nu, alloc, res, 1.0, 0)?;
    let mut merged: Vec<IntentBranch> = Vec::new();
    for mut b in r.out {
        b.intents.truncate(n);
        match merged.iter_mut().find(|m| m.intents == b.intents) {
            Some(m) => {
                m.p += b.p;
                m.violation |= b.violation;
            }
            None => merged.push(b),
        }
    }
    Ok(merged)
}

/// Per-vehicle bookkeeping produced by [`advance`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    /// `(id, fuel burned)` for every vehicle that moved.
    pub burned: Vec<(VehicleId, f64)>,
    pub arrived: Vec<VehicleId>,
    /// `(id, penalty, hops left)` for vehicles removed as starved.
    pub starved: Vec<(VehicleId, f64, u32)>,
}

/// Moves every travelling vehicle to its allocated intent and applies fuel
/// burn, arrival and starvation. `fuel = None` means unlimited fuel.
pub fn advance(
    c: &Circuit,
    s: &GameState,
    intents: &[Vertex],
    fuel: Option<&FuelParameters>,
    opts: &ProtocolOptions,
) -> (GameState, StepReport) {
    let mut next = GameState { time: s.time + 1, ..Default::default() };
    let mut rep = StepReport::default();
    for (v, &to) in s.vehicles.iter().zip(intents) {
        next.allocation.insert(Resource::Vertex(to), v.id);
        next.allocation.insert(Resource::traversal(v.u, to), v.id);
        let mut nv = VehicleState { u: to, nu: to, ..*v };
        if let Some(f) = fuel {
            let after = f.fuel_at(v.phi, 1.0);
            rep.burned.push((v.id, v.phi - after));
            nv.phi = after;
        }
        if to == v.d {
            rep.arrived.push(v.id);
            if opts.arrival_blocks {
                next.parked.push((v.id, to));
            }
            continue;
        }
        if let Some(f) = fuel {
            let need = match f.mode {
                FuelMode::Simple => 1.0,
                FuelMode::Ode => f.step_need(nv.phi),
            };
            if nv.phi + 1e-12 < need {
                let hops = c.dist(to, v.d);
                rep.starved.push((v.id, f.starvation_penalty(hops), hops));
                continue;
            }
        }
        nv.nu = c.next_hop(to, v.d);
        next.vehicles.push(nv);
    }
    (next, rep)
}

/// Successor state with its probability and step bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub intents: Vec<Vertex>,
    pub state: GameState,
    pub p: f64,
    pub report: StepReport,
    pub violation: bool,
}

/// One full protocol step: exact outcome distribution, each advanced.
pub fn resolve_step(
    c: &Circuit,
    s: &GameState,
    fuel: Option<&FuelParameters>,
    opts: &ProtocolOptions,
) -> Result<Vec<Branch>> {
    Ok(resolve_intents(c, s, opts)?
        .into_iter()
        .map(|b| {
            let (state, report) = advance(c, s, &b.intents, fuel, opts);
            Branch { intents: b.intents, state, p: b.p, report, violation: b.violation }
        })
        .collect())
}
