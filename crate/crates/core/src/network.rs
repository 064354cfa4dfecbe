//! Network topologies and combination matrices for the diffusion strategy.
//!
//! Topologies are undirected, stored without self-edges, and always
//! connected. Each node's neighborhood contains the node itself.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of regeneration attempts before giving up on connectivity.
pub const MAX_TOPOLOGY_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    node_count: usize,
    /// Undirected edges `(l, n)` with `l < n`, sorted.
    edges: Vec<(usize, usize)>,
    /// Sorted neighborhoods, each including the node itself.
    neighborhoods: Vec<Vec<usize>>,
    positions: Option<Vec<[f64; 2]>>,
}

/// Serialized form of a topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDocument {
    pub node_count: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
}

impl NetworkTopology {
    /// Builds a topology from an undirected edge list. Self-edges and
    /// duplicates are rejected.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("node_count", "must be at least 1"));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::invalid(
                    "edges",
                    format!("edge ({a}, {b}) references a node outside 0..{node_count}"),
                ));
            }
            if a == b {
                return Err(Error::invalid("edges", format!("self-edge on node {a}")));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        let before = normalized.len();
        normalized.dedup();
        if normalized.len() != before {
            return Err(Error::invalid("edges", "duplicate edge"));
        }

        let mut neighborhoods: Vec<Vec<usize>> = (0..node_count).map(|n| vec![n]).collect();
        for &(a, b) in &normalized {
            neighborhoods[a].push(b);
            neighborhoods[b].push(a);
        }
        for hood in &mut neighborhoods {
            hood.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges: normalized,
            neighborhoods,
            positions: None,
        })
    }

    /// Fully connected topology on `node_count` nodes.
    pub fn complete(node_count: usize) -> Result<Self> {
        let edges: Vec<_> = (0..node_count)
            .flat_map(|a| (a + 1..node_count).map(move |b| (a, b)))
            .collect();
        Self::from_edges(node_count, &edges)
    }

    /// Ring topology; with three nodes this is also the complete graph.
    pub fn ring(node_count: usize) -> Result<Self> {
        if node_count < 3 {
            return Self::complete(node_count);
        }
        let edges: Vec<_> = (0..node_count).map(|n| (n, (n + 1) % node_count)).collect();
        Self::from_edges(node_count, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighborhood of `node`, including `node` itself.
    pub fn neighborhood(&self, node: usize) -> &[usize] {
        &self.neighborhoods[node]
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        a != b && self.neighborhoods[a].binary_search(&b).is_ok()
    }

    /// Number of neighbors excluding the node itself.
    pub fn degree(&self, node: usize) -> usize {
        self.neighborhoods[node].len() - 1
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.node_count as f64
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut visited = 1;
        while let Some(n) = queue.pop_front() {
            for &l in &self.neighborhoods[n] {
                if !seen[l] {
                    seen[l] = true;
                    visited += 1;
                    queue.push_back(l);
                }
            }
        }
        visited == self.node_count
    }

    pub fn to_document(&self) -> TopologyDocument {
        TopologyDocument {
            node_count: self.node_count,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            positions: self.positions.clone(),
        }
    }

    pub fn from_document(doc: &TopologyDocument) -> Result<Self> {
        let edges: Vec<_> = doc.edges.iter().map(|&[a, b]| (a, b)).collect();
        let mut topology = Self::from_edges(doc.node_count, &edges)?;
        if let Some(positions) = &doc.positions {
            if positions.len() != doc.node_count {
                return Err(Error::DimensionMismatch {
                    expected: doc.node_count,
                    found: positions.len(),
                });
            }
            topology.positions = Some(positions.clone());
        }
        Ok(topology)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }
}

fn check_node_count(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid("n", format!("need at least 2 nodes, got {n}")));
    }
    Ok(())
}

/// Erdős–Rényi topology: each pair is linked independently with probability
/// `p`; disconnected samples are redrawn.
pub fn gen_random_topology(n: usize, p: f64, seed: u64) -> Result<NetworkTopology> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_topology_with_rng(n, p, &mut rng)
}

pub fn random_topology_with_rng<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    rng: &mut R,
) -> Result<NetworkTopology> {
    check_node_count(n)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("p", format!("edge probability {p} outside [0, 1]")));
    }
    let mut edges = Vec::new();
    for _ in 0..MAX_TOPOLOGY_ATTEMPTS {
        edges.clear();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(p) {
                    edges.push((a, b));
                }
            }
        }
        let topology = NetworkTopology::from_edges(n, &edges)?;
        if topology.is_connected() {
            return Ok(topology);
        }
    }
    Err(Error::ConnectivityUnattainable {
        nodes: n,
        attempts: MAX_TOPOLOGY_ATTEMPTS,
    })
}

/// Random geometric topology in the unit square: nodes closer than
/// `radius` (inclusive) are neighbors. Placements are redrawn until the
/// graph is connected.
pub fn gen_geometric_topology(n: usize, radius: f64, seed: u64) -> Result<NetworkTopology> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    geometric_topology_with_rng(n, radius, &mut rng)
}

pub fn geometric_topology_with_rng<R: Rng + ?Sized>(
    n: usize,
    radius: f64,
    rng: &mut R,
) -> Result<NetworkTopology> {
    check_node_count(n)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("radius", format!("must be positive, got {radius}")));
    }
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for _ in 0..MAX_TOPOLOGY_ATTEMPTS {
        let positions: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        edges.clear();
        for a in 0..n {
            for b in a + 1..n {
                let dx = positions[a][0] - positions[b][0];
                let dy = positions[a][1] - positions[b][1];
                if dx * dx + dy * dy <= r2 {
                    edges.push((a, b));
                }
            }
        }
        let mut topology = NetworkTopology::from_edges(n, &edges)?;
        if topology.is_connected() {
            topology.positions = Some(positions);
            return Ok(topology);
        }
    }
    Err(Error::ConnectivityUnattainable {
        nodes: n,
        attempts: MAX_TOPOLOGY_ATTEMPTS,
    })
}

/// Nonnegative N×N weights; column `n` holds node `n`'s weights over its
/// neighborhood and sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    size: usize,
    /// Row-major, `weights[l * size + n] = a_{l,n}`.
    weights: Vec<f64>,
    /// Nonzero entries of each column, ascending by `l`.
    support: Vec<Vec<(usize, f64)>>,
}

/// Tolerance for column sums of a combination matrix.
pub const COLUMN_SUM_TOLERANCE: f64 = 1e-12;

impl CombinationMatrix {
    pub fn identity(size: usize) -> Self {
        let mut weights = vec![0.0; size * size];
        for n in 0..size {
            weights[n * size + n] = 1.0;
        }
        Self::from_row_major_unchecked(size, weights)
    }

    /// Validates nonnegativity and unit column sums.
    pub fn from_row_major(size: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: size * size,
                found: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("weights", format!("entry {w} is not a nonnegative finite number")));
        }
        for n in 0..size {
            let sum: f64 = (0..size).map(|l| weights[l * size + n]).sum();
            if (sum - 1.0).abs() > COLUMN_SUM_TOLERANCE {
                return Err(Error::invalid("weights", format!("column {n} sums to {sum}")));
            }
        }
        Ok(Self::from_row_major_unchecked(size, weights))
    }

    fn from_row_major_unchecked(size: usize, weights: Vec<f64>) -> Self {
        let support = (0..size)
            .map(|n| {
                (0..size)
                    .filter_map(|l| {
                        let w = weights[l * size + n];
                        (w != 0.0).then_some((l, w))
                    })
                    .collect()
            })
            .collect();
        Self {
            size,
            weights,
            support,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `a_{l,n}`: weight node `n` assigns to neighbor `l`.
    pub fn weight(&self, l: usize, n: usize) -> f64 {
        self.weights[l * self.size + n]
    }

    /// Nonzero `(l, a_{l,n})` pairs of column `n`.
    pub fn column(&self, n: usize) -> &[(usize, f64)] {
        &self.support[n]
    }

    pub fn column_sum(&self, n: usize) -> f64 {
        self.support[n].iter().map(|&(_, w)| w).sum()
    }

    /// True when every nonzero weight lies inside the node's neighborhood.
    pub fn respects(&self, topology: &NetworkTopology) -> bool {
        self.size == topology.node_count()
            && (0..self.size).all(|n| {
                self.support[n]
                    .iter()
                    .all(|&(l, _)| topology.neighborhood(n).binary_search(&l).is_ok())
            })
    }
}

/// Uniform rule: `a_{l,n} = 1/|N_n|` for every `l` in the neighborhood of `n`.
pub fn uniform_combination(topology: &NetworkTopology) -> CombinationMatrix {
    let size = topology.node_count();
    let mut weights = vec![0.0; size * size];
    for n in 0..size {
        let hood = topology.neighborhood(n);
        let w = 1.0 / hood.len() as f64;
        for &l in hood {
            weights[l * size + n] = w;
        }
    }
    CombinationMatrix::from_row_major_unchecked(size, weights)
}
