//! Sampled execution of the protocol with real bid-response delays, used as
//! an independent check of the exact branching engine.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::HashMap;

use crate::auction::{bids_from_probabilities, first_to_alternate, sample_delay};
use crate::circuit::{Circuit, Resource, Vertex};
use crate::error::{Error, Result};
use crate::explorer::{
    apply_priorities, build_trajectory_tree, initial_state, InitialConfiguration, LeafKind, PriorityRule, TrajectoryTree,
    TreeSettings,
};
use crate::analysis::{CostReport, Scenario};
use crate::game::{advance, alternate, normalized_priorities, ConflictKey, GameState, ProtocolOptions, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    IntentBroadcast,
    DelayExpiry,
    AllocationBroadcast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEvent {
    pub step: u32,
    /// Logical time within the step, in `[0, 1)`.
    pub at: f64,
    pub kind: EventKind,
    pub vehicle: VehicleId,
}

/// Positions of the travelling vehicles after each step, starting with the root.
pub type Signature = Vec<Vec<(VehicleId, Vertex)>>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Episode {
    pub signature: Signature,
    pub end: LeafKind,
    pub events: Vec<SimEvent>,
    /// Fuel burned plus penalties per vehicle slot.
    pub cost: Vec<f64>,
}

/// SplitMix64 finalizer used to derive independent sub-seeds from counters.
pub fn split_seed(seed: u64, counter: u64) -> u64 {
    let mut z = seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn signature_row(s: &GameState) -> Vec<(VehicleId, Vertex)> {
    s.vehicles.iter().map(|v| (v.id, v.u)).collect()
}

/// Runs one step of the protocol with sampled delays and returns allocated intents.
fn sampled_step(
    c: &Circuit,
    s: &GameState,
    opts: &ProtocolOptions,
    seed: u64,
    events: &mut Vec<SimEvent>,
) -> Result<Vec<Vertex>> {
    let n = s.vehicles.len();
    let mut u: Vec<Vertex> = s.vehicles.iter().map(|v| v.u).collect();
    let mut d: Vec<Vertex> = s.vehicles.iter().map(|v| v.d).collect();
    let mut w: Vec<f64> = s.vehicles.iter().map(|v| v.w).collect();
    let mut ids: Vec<VehicleId> = s.vehicles.iter().map(|v| v.id).collect();
    let mut nu: Vec<Vertex> = (0..n).map(|i| c.next_hop(u[i], d[i])).collect();
    let mut alloc = vec![false; n];
    let mut res: Vec<Resource> = Vec::new();
    for &(id, v) in &s.parked {
        ids.push(id);
        u.push(v);
        d.push(v);
        w.push(0.0);
        nu.push(v);
        alloc.push(true);
        res.push(Resource::Vertex(v));
        res.push(Resource::traversal(v, v));
    }
    let m = ids.len();
    for i in 0..n {
        events.push(SimEvent { step: s.time, at: 0.0, kind: EventKind::IntentBroadcast, vehicle: ids[i] });
    }
    let mut now = 0.0f64;
    let bound = m.max(1) * c.vertex_count().max(1);
    for round in 0..=bound {
        if round == bound {
            return Err(Error::IterationBound(bound));
        }
        // conflicts grouped by identical party set
        let mut by: std::collections::BTreeMap<Resource, Vec<usize>> = Default::default();
        for i in 0..m {
            by.entry(Resource::Vertex(nu[i])).or_default().push(i);
            if nu[i] != u[i] {
                by.entry(Resource::traversal(u[i], nu[i])).or_default().push(i);
            }
        }
        let mut confs: Vec<(Vec<Resource>, Vec<usize>)> = Vec::new();
        for (r, p) in by.into_iter().filter(|(_, p)| p.len() > 1) {
            match confs.iter_mut().find(|(_, q)| *q == p) {
                Some((rs, _)) => rs.push(r),
                None => confs.push((vec![r], p)),
            }
        }
        if confs.is_empty() {
            break;
        }
        if opts.early_allocation {
            let omega = confs.iter().flat_map(|(_, q)| q.iter().map(|&i| w[i])).fold(f64::INFINITY, f64::min);
            for i in 0..m {
                if !alloc[i] && !confs.iter().any(|(_, q)| q.contains(&i)) && w[i] < omega {
                    alloc[i] = true;
                    res.push(Resource::Vertex(nu[i]));
                    res.push(Resource::traversal(u[i], nu[i]));
                    events.push(SimEvent { step: s.time, at: now, kind: EventKind::AllocationBroadcast, vehicle: ids[i] });
                }
            }
        }
        let key = |q: &[usize]| {
            let ws: Vec<f64> = q.iter().map(|&i| w[i]).collect();
            let qs: Vec<VehicleId> = q.iter().map(|&i| ids[i]).collect();
            ConflictKey::new(&ws, &qs, opts.tie_break)
        };
        let Some((disputed, parties)) = confs
            .iter()
            .filter(|(_, q)| q.iter().any(|&i| !alloc[i]))
            .min_by(|a, b| key(&a.1).cmp(&key(&b.1)))
        else {
            break;
        };
        let free: Vec<usize> = parties.iter().copied().filter(|&i| !alloc[i]).collect();
        let lose = normalized_priorities(&free.iter().map(|&i| w[i]).collect::<Vec<_>>())?;
        let bidders: Vec<usize> = (0..free.len()).filter(|&k| lose[k] > 0.0).collect();
        let winner = if bidders.len() == 1 {
            bidders[0]
        } else {
            let target: Vec<f64> = bidders.iter().map(|&k| lose[k]).collect();
            let b = bids_from_probabilities(&target)?;
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, round as u64));
            let delays: Vec<f64> = b.iter().map(|&x| sample_delay(x, &mut rng)).collect();
            let first = first_to_alternate(&delays);
            now += (1.0 - now) * delays[first];
            bidders[first]
        };
        let a = free[winner];
        events.push(SimEvent { step: s.time, at: now, kind: EventKind::DelayExpiry, vehicle: ids[a] });
        let v0 = c.next_hop(u[a], d[a]);
        if disputed.contains(&Resource::Vertex(v0)) || disputed.contains(&Resource::traversal(u[a], v0)) {
            nu[a] = alternate(c, u[a], d[a], v0, &res);
        }
        alloc[a] = true;
        res.push(Resource::Vertex(nu[a]));
        res.push(Resource::traversal(u[a], nu[a]));
        events.push(SimEvent { step: s.time, at: now, kind: EventKind::AllocationBroadcast, vehicle: ids[a] });
    }
    nu.truncate(n);
    Ok(nu)
}

/// Plays one trajectory from `root` with seeded sampled auctions.
pub fn run_episode(
    c: &Circuit,
    root: GameState,
    rule: &PriorityRule,
    settings: &TreeSettings,
    seed: u64,
) -> Result<Episode> {
    let slots = root.vehicles.iter().map(|v| v.id as usize).max().unwrap_or(0);
    let mut cost = vec![0.0; slots];
    let mut s = root;
    let mut signature = vec![signature_row(&s)];
    let mut seen: Vec<(Signature, Vec<u64>)> = Vec::new();
    let mut events = Vec::new();
    let with_fuel = settings.fuel.is_some();
    let end = loop {
        if s.is_terminal() {
            break LeafKind::Finished;
        }
        let key = (
            vec![s.vehicles.iter().map(|v| (v.id, v.u)).chain(s.parked.iter().copied()).collect()],
            s.vehicles.iter().map(|v| if with_fuel { v.phi.to_bits() } else { 0 }).collect(),
        );
        if seen.contains(&key) {
            break LeafKind::Cycle;
        }
        if s.time >= settings.max_depth {
            break LeafKind::DepthLimit;
        }
        seen.push(key);
        apply_priorities(&mut s, c, rule, settings.fuel.as_ref());
        let intents = sampled_step(c, &s, &settings.protocol, split_seed(seed, u64::from(s.time)), &mut events)?;
        let (next, rep) = advance(c, &s, &intents, settings.fuel.as_ref(), &settings.protocol);
        for (id, x) in rep.burned {
            cost[id as usize - 1] += x;
        }
        for (id, pen, _) in rep.starved {
            cost[id as usize - 1] += pen;
        }
        s = next;
        signature.push(signature_row(&s));
    };
    Ok(Episode { signature, end, events, cost })
}

/// Fuel-game episode for a scenario configuration: per-vehicle cost reports.
pub fn run_scenario_episode(
    sc: &Scenario,
    init: &InitialConfiguration,
    w0: &[f64],
    seed: u64,
) -> Result<(Episode, Vec<CostReport>)> {
    let f = sc.config.fuel;
    let minimum = sc.mission_minimum(init);
    let phi0 = minimum
        .iter()
        .enumerate()
        .map(|(i, &m)| f.dispatch_fuel(w0.get(i).copied().unwrap_or(0.0), m))
        .collect::<Result<Vec<_>>>()?;
    let settings = TreeSettings {
        fuel: Some(f),
        protocol: sc.config.protocol,
        max_depth: crate::explorer::nontermination_bound(&sc.circuit, init.len()) as u32,
    };
    let ep = run_episode(&sc.circuit, initial_state(init, w0, &phi0), &PriorityRule::FuelCoupled, &settings, seed)?;
    let reports = ep.cost.iter().zip(&minimum).map(|(&c, &m)| CostReport::new(c, m)).collect();
    Ok((ep, reports))
}

/// Leaf signatures of the exact tree with their probabilities.
pub fn exact_leaf_distribution(tree: &TrajectoryTree) -> Vec<(Signature, f64)> {
    let mut parent = vec![usize::MAX; tree.nodes.len()];
    for (i, n) in tree.nodes.iter().enumerate() {
        for &ch in &n.children {
            parent[ch] = i;
        }
    }
    let mut out = Vec::new();
    for (i, n) in tree.nodes.iter().enumerate() {
        if n.terminal.is_none() {
            continue;
        }
        let mut sig = Vec::new();
        let mut k = i;
        while k != usize::MAX {
            sig.push(signature_row(&tree.nodes[k].state));
            k = parent[k];
        }
        sig.reverse();
        out.push((sig, n.p_traj));
    }
    out
}

/// Result of comparing sampled episode frequencies to exact probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub episodes: usize,
    pub leaves: usize,
    /// Largest |freq - p| / sigma over exact leaves.
    pub max_z: f64,
    /// Episodes whose trajectory is not a leaf of the exact tree.
    pub unmatched: usize,
}

/// Samples `episodes` trajectories and compares them to the exact tree.
pub fn compare_with_exact(
    c: &Circuit,
    init: &InitialConfiguration,
    w: &[f64],
    settings: &TreeSettings,
    episodes: usize,
    seed: u64,
) -> Result<OracleCheck> {
    let rule = PriorityRule::Fixed(w.to_vec());
    let root = initial_state(init, w, &vec![0.0; init.len()]);
    let tree = build_trajectory_tree(c, root.clone(), &rule, settings)?;
    let exact = exact_leaf_distribution(&tree);
    let mut counts: HashMap<Signature, usize> = HashMap::new();
    for e in 0..episodes {
        let ep = run_episode(c, root.clone(), &rule, settings, split_seed(seed, e as u64))?;
        *counts.entry(ep.signature).or_default() += 1;
    }
    let n = episodes as f64;
    let mut max_z: f64 = 0.0;
    let mut matched = 0;
    for (sig, p) in &exact {
        let k = counts.get(sig).copied().unwrap_or(0);
        matched += k;
        let sd = (p * (1.0 - p) / n).sqrt().max(1e-12);
        max_z = max_z.max(((k as f64 / n) - p).abs() / sd);
    }
    Ok(OracleCheck { episodes, leaves: exact.len(), max_z, unmatched: episodes - matched })
}
