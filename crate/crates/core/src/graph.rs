//! Directed graphs for broadcast gossip.
//!
//! A [`Graph`] stores both neighborhoods of every node as sorted lists:
//! `out_adj[v]` holds the nodes that hear a broadcast from `v`, and
//! `in_adj[v]` the nodes `v` hears from. The two are kept as exact
//! transposes. Self-loops and duplicate edges are rejected at construction.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which generator produced a graph, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Family {
    Complete {
        n: usize,
    },
    Ring {
        n: usize,
    },
    Torus {
        k: usize,
        side: usize,
    },
    Hypercube {
        dim: usize,
    },
    DeBruijn {
        symbols: usize,
        dimension: usize,
    },
    RandomGeometric {
        n: usize,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Hand-built or externally supplied edge list.
    Custom {},
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Complete { .. } => "complete",
            Family::Ring { .. } => "ring",
            Family::Torus { .. } => "torus",
            Family::Hypercube { .. } => "hypercube",
            Family::DeBruijn { .. } => "de_bruijn",
            Family::RandomGeometric { .. } => "random_geometric",
            Family::Custom {} => "custom",
        }
    }

    pub fn is_complete(&self) -> bool {
        matches!(self, Family::Complete { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegreeStats {
    pub out_deg: Vec<usize>,
    pub in_deg: Vec<usize>,
    pub deg_plus_max: usize,
    pub deg_minus_max: usize,
    pub deg_max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    family: Family,
}

impl Graph {
    /// Builds a graph from directed edges `(v, u)`, meaning `u` hears `v`.
    ///
    /// Fails on out-of-range endpoints, self-loops or repeated edges.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        family: Family,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        let mut out_adj = vec![Vec::new(); n];
        for (v, u) in edges {
            if v >= n || u >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({v}, {u}) out of range for {n} nodes"
                )));
            }
            if v == u {
                return Err(Error::InvalidGraph(format!("self-loop at node {v}")));
            }
            out_adj[v].push(u);
        }
        for (v, list) in out_adj.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({v}, {})", w[0])));
            }
        }
        let mut in_adj = vec![Vec::new(); n];
        // v ascending, so every in-list comes out sorted.
        for (v, list) in out_adj.iter().enumerate() {
            for &u in list {
                in_adj[u].push(v);
            }
        }
        Ok(Graph {
            n,
            out_adj,
            in_adj,
            family,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Nodes that update when `v` broadcasts.
    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        &self.in_adj[v]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out_adj[v].len()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.in_adj[v].len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_adj.iter().map(Vec::len).sum()
    }

    /// All edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(|(v, list)| list.iter().map(move |&u| (v, u)))
    }

    pub fn deg_plus_max(&self) -> usize {
        self.out_adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn deg_max(&self) -> usize {
        let minus = self.in_adj.iter().map(Vec::len).max().unwrap_or(0);
        self.deg_plus_max().max(minus)
    }

    pub fn degree_stats(&self) -> DegreeStats {
        let out_deg: Vec<usize> = self.out_adj.iter().map(Vec::len).collect();
        let in_deg: Vec<usize> = self.in_adj.iter().map(Vec::len).collect();
        let deg_plus_max = out_deg.iter().copied().max().unwrap_or(0);
        let deg_minus_max = in_deg.iter().copied().max().unwrap_or(0);
        DegreeStats {
            out_deg,
            in_deg,
            deg_plus_max,
            deg_minus_max,
            deg_max: deg_plus_max.max(deg_minus_max),
        }
    }

    /// In-degree equals out-degree at every node.
    pub fn is_balanced(&self) -> bool {
        (0..self.n).all(|v| self.in_degree(v) == self.out_degree(v))
    }

    /// In- and out-neighborhoods coincide at every node.
    pub fn is_symmetric(&self) -> bool {
        self.out_adj == self.in_adj
    }

    /// Strong connectivity: node 0 reaches everything and is reached by everything.
    pub fn is_connected(&self) -> bool {
        reaches_all(&self.out_adj) && reaches_all(&self.in_adj)
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            n: self.n,
            edges: self.edges().map(|(v, u)| [v, u]).collect(),
            family: self.family.clone(),
        }
    }

    pub fn from_document(doc: GraphDocument) -> Result<Self> {
        Graph::from_edges(doc.n, doc.edges.into_iter().map(|[v, u]| (v, u)), doc.family)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Graph::from_document(serde_json::from_str(text)?)
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                queue.push_back(u);
            }
        }
    }
    count == adj.len()
}

/// On-disk form: `{"n": .., "edges": [[u, v], ..], "family": .., "params": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(flatten)]
    pub family: Family,
}

pub fn complete(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::param(format!("complete graph needs n >= 2, got {n}")));
    }
    let edges = (0..n).flat_map(|v| (0..n).filter(move |&u| u != v).map(move |u| (v, u)));
    Graph::from_edges(n, edges, Family::Complete { n })
}

pub fn ring(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::param(format!("ring needs n >= 3, got {n}")));
    }
    let edges = (0..n).flat_map(|i| [(i, (i + 1) % n), (i, (i + n - 1) % n)]);
    Graph::from_edges(n, edges, Family::Ring { n })
}

/// `k`-dimensional torus with `side` nodes per axis; node index is the
/// mixed-radix number of its coordinates, axis 0 least significant.
pub fn torus_lattice(k: usize, side: usize) -> Result<Graph> {
    if k < 1 || side < 3 {
        return Err(Error::param(format!(
            "torus needs k >= 1 and side >= 3, got k={k}, side={side}"
        )));
    }
    let n = checked_pow(side, k)?;
    let mut edges = Vec::with_capacity(n * 2 * k);
    for v in 0..n {
        let mut stride = 1;
        for _ in 0..k {
            let coord = (v / stride) % side;
            let base = v - coord * stride;
            edges.push((v, base + ((coord + 1) % side) * stride));
            edges.push((v, base + ((coord + side - 1) % side) * stride));
            stride *= side;
        }
    }
    Graph::from_edges(n, edges, Family::Torus { k, side })
}

pub fn hypercube(dim: usize) -> Result<Graph> {
    if dim < 1 {
        return Err(Error::param("hypercube needs dim >= 1"));
    }
    if dim >= usize::BITS as usize {
        return Err(Error::param(format!("hypercube dimension {dim} too large")));
    }
    let n = 1usize << dim;
    let edges = (0..n).flat_map(|v| (0..dim).map(move |b| (v, v ^ (1 << b))));
    Graph::from_edges(n, edges, Family::Hypercube { dim })
}

/// De Bruijn graph on `symbols` letters of word length `dimension`:
/// `i -> (symbols*i + j) mod symbols^dimension` for `j < symbols`, with the
/// self-loops at the constant words dropped.
pub fn de_bruijn(symbols: usize, dimension: usize) -> Result<Graph> {
    if symbols < 2 || dimension < 2 {
        return Err(Error::param(format!(
            "de Bruijn needs symbols >= 2 and dimension >= 2, got {symbols}, {dimension}"
        )));
    }
    let n = checked_pow(symbols, dimension)?;
    let edges = (0..n).flat_map(|i| {
        (0..symbols)
            .map(move |j| (i, (symbols * i + j) % n))
            .filter(|&(i, u)| i != u)
    });
    Graph::from_edges(
        n,
        edges,
        Family::DeBruijn {
            symbols,
            dimension,
        },
    )
}

/// Connection radius `1.1 * sqrt(ln n / n)`.
pub fn geometric_radius(n: usize) -> f64 {
    let n = n as f64;
    1.1 * (n.ln() / n).sqrt()
}

/// Samples `n` points uniformly on the unit square (x then y per point) and
/// joins pairs strictly closer than [`geometric_radius`]. Connectivity is not
/// guaranteed; check [`Graph::is_connected`].
pub fn random_geometric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Graph> {
    if n < 2 {
        return Err(Error::param(format!("random geometric graph needs n >= 2, got {n}")));
    }
    let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    geometric_from_points(&points, geometric_radius(n), None)
}

/// [`random_geometric`] driven by a ChaCha8 stream seeded with `seed`; the
/// seed is recorded in the family tag.
pub fn random_geometric_seeded(n: usize, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = random_geometric(n, &mut rng)?;
    if let Family::RandomGeometric { seed: s, .. } = &mut g.family {
        *s = Some(seed);
    }
    Ok(g)
}

pub fn geometric_from_points(points: &[(f64, f64)], radius: f64, seed: Option<u64>) -> Result<Graph> {
    let n = points.len();
    if n < 1 || !(radius >= 0.0) {
        return Err(Error::param("need at least one point and a nonnegative radius"));
    }
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for (i, &(xi, yi)) in points.iter().enumerate() {
        for (j, &(xj, yj)) in points.iter().enumerate().skip(i + 1) {
            let (dx, dy) = (xi - xj, yi - yj);
            if dx * dx + dy * dy < r2 {
                edges.push((i, j));
                edges.push((j, i));
            }
        }
    }
    Graph::from_edges(n, edges, Family::RandomGeometric { n, radius, seed })
}

fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    u32::try_from(exp)
        .ok()
        .and_then(|e| base.checked_pow(e))
        .ok_or_else(|| Error::param(format!("{base}^{exp} nodes overflows")))
}
