//! Graph circuits: vertices are locations, edges are unit-time travel segments.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Vertex id, dense from zero.
pub type Vertex = usize;

/// A disputable resource. Edges are stored with the smaller endpoint first so
/// `(u, v)` and `(v, u)` are the same resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Resource {
    Vertex(Vertex),
    Edge(Vertex, Vertex),
}

impl Resource {
    pub fn edge(a: Vertex, b: Vertex) -> Self {
        if a <= b {
            Resource::Edge(a, b)
        } else {
            Resource::Edge(b, a)
        }
    }

    /// The edge used to move from `u` to `v`; a hold uses the loop edge `(u, u)`.
    pub fn traversal(u: Vertex, v: Vertex) -> Self {
        Resource::edge(u, v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    n: usize,
    edges: Vec<(Vertex, Vertex)>,
    hold: bool,
    #[serde(skip)]
    adj: Vec<Vec<Vertex>>,
    #[serde(skip)]
    dist: Vec<Vec<u32>>,
}

impl Circuit {
    /// Builds a circuit from non-loop edges. Loop edges are implied by `hold`.
    pub fn from_edges(n: usize, edges: &[(Vertex, Vertex)], hold: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidCircuit("circuit has no vertices".into()));
        }
        let mut canon: Vec<(Vertex, Vertex)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::UnknownVertex(a.max(b)));
            }
            if a == b {
                return Err(Error::InvalidCircuit(format!(
                    "explicit loop edge ({a},{a}); loops come from the hold flag"
                )));
            }
            let e = (a.min(b), a.max(b));
            if canon.contains(&e) {
                return Err(Error::InvalidCircuit(format!("duplicate edge ({},{})", e.0, e.1)));
            }
            canon.push(e);
        }
        canon.sort_unstable();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &canon {
            adj[a].push(b);
            adj[b].push(a);
        }
        for l in adj.iter_mut() {
            l.sort_unstable();
        }
        let dist: Vec<Vec<u32>> = (0..n).map(|s| bfs(&adj, s)).collect();
        if dist[0].iter().any(|&d| d == u32::MAX) {
            return Err(Error::InvalidCircuit("circuit is not connected".into()));
        }
        Ok(Circuit { n, edges: canon, hold, adj, dist })
    }

    pub fn tetrahedral(allow_hold: bool) -> Self {
        let edges: Vec<_> = (0..4).flat_map(|a| (a + 1..4).map(move |b| (a, b))).collect();
        Self::from_edges(4, &edges, allow_hold).expect("K4 is valid")
    }

    /// Row-major `rows x cols` grid with horizontal and vertical neighbours.
    pub fn grid(rows: usize, cols: usize, allow_hold: bool) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidCircuit(format!(
                "grid needs at least 2x2 vertices, got {rows}x{cols}"
            )));
        }
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Self::from_edges(rows * cols, &edges, allow_hold)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn hold(&self) -> bool {
        self.hold
    }

    /// Non-loop edges in canonical order.
    pub fn edges(&self) -> &[(Vertex, Vertex)] {
        &self.edges
    }

    /// Edge count including loops when holding is enabled.
    pub fn edge_count(&self) -> usize {
        self.edges.len() + if self.hold { self.n } else { 0 }
    }

    pub fn neighbors(&self, u: Vertex) -> &[Vertex] {
        &self.adj[u]
    }

    /// Out-degree used by routing: neighbours plus the loop when holding.
    pub fn moves(&self, u: Vertex) -> usize {
        self.adj[u].len() + usize::from(self.hold)
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Whether `u -> v` is a legal single-step move.
    pub fn is_move(&self, u: Vertex, v: Vertex) -> bool {
        if u == v {
            self.hold
        } else {
            self.adj[u].binary_search(&v).is_ok()
        }
    }

    /// Hop distance ignoring loop edges. Panics on out-of-range ids; use
    /// [`Circuit::shortest_path_length`] for checked access.
    #[inline]
    pub fn dist(&self, u: Vertex, d: Vertex) -> u32 {
        self.dist[u][d]
    }

    pub fn shortest_path_length(&self, u: Vertex, d: Vertex) -> Result<u32> {
        self.check(u)?;
        self.check(d)?;
        Ok(self.dist[u][d])
    }

    /// Neighbours of `u` that start a shortest path to `d`, ascending.
    pub fn shortest_path_first_hops(&self, u: Vertex, d: Vertex) -> Result<Vec<Vertex>> {
        self.check(u)?;
        self.check(d)?;
        if u == d {
            return Ok(vec![u]);
        }
        Ok(self.first_hops(u, d).collect())
    }

    pub(crate) fn first_hops(&self, u: Vertex, d: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        let target = self.dist[u][d].saturating_sub(1);
        self.adj[u].iter().copied().filter(move |&v| self.dist[v][d] == target)
    }

    /// First vertex of the shortest path `u -> d` (lowest id among ties).
    pub fn next_hop(&self, u: Vertex, d: Vertex) -> Vertex {
        if u == d {
            return u;
        }
        self.first_hops(u, d).next().expect("connected circuit")
    }

    fn check(&self, v: Vertex) -> Result<()> {
        if v < self.n {
            Ok(())
        } else {
            Err(Error::UnknownVertex(v))
        }
    }

    /// Restores derived tables after deserialization.
    pub fn rebuilt(self) -> Result<Self> {
        Self::from_edges(self.n, &self.edges, self.hold)
    }
}

fn bfs(adj: &[Vec<Vertex>], s: Vertex) -> Vec<u32> {
    let mut d = vec![u32::MAX; adj.len()];
    d[s] = 0;
    let mut q = VecDeque::from([s]);
    while let Some(x) = q.pop_front() {
        for &y in &adj[x] {
            if d[y] == u32::MAX {
                d[y] = d[x] + 1;
                q.push_back(y);
            }
        }
    }
    d
}
