//! Immutable undirected graphs in compressed adjacency form, plus the random
//! generators used for training and test sets.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::rng;
use crate::{Error, Result};

/// Simple undirected graph. Neighbor lists are sorted, symmetric and free of
/// self-loops and duplicates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    max_degree: usize,
}

/// What [`Graph::from_edges`] discarded while normalizing its input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            offsets: vec![0; n + 1],
            neighbors: Vec::new(),
            max_degree: 0,
        }
    }

    /// Builds a simple undirected graph from arbitrary (possibly directed,
    /// repeated or looping) pairs. Direction is dropped, loops and repeats
    /// are counted and skipped.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<(Self, BuildStats)>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut stats = BuildStats::default();
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Param(format!(
                    "edge ({u}, {v}) out of range for {n} vertices"
                )));
            }
            if u == v {
                stats.self_loops += 1;
                continue;
            }
            pairs.push((u as u32, v as u32));
            pairs.push((v as u32, u as u32));
        }
        pairs.sort_unstable();
        let before = pairs.len();
        pairs.dedup();
        stats.duplicates = (before - pairs.len()) / 2;

        let mut offsets = vec![0usize; n + 1];
        for &(u, _) in &pairs {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let neighbors: Vec<u32> = pairs.into_iter().map(|(_, v)| v).collect();
        let max_degree = (0..n).map(|i| offsets[i + 1] - offsets[i]).max().unwrap_or(0);
        Ok((
            Graph {
                offsets,
                neighbors,
                max_degree,
            },
            stats,
        ))
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.offsets.windows(2).map(|w| w[1] - w[0])
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.vertex_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .map(|&v| v as usize)
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn adjacency(&self) -> &[u32] {
        &self.neighbors
    }

    /// Checks every structural invariant; used by tests and after loading.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertex_count();
        if self.offsets[0] != 0 || self.offsets[n] != self.neighbors.len() {
            return Err(Error::State("offset array does not span adjacency".into()));
        }
        let mut max = 0;
        for u in 0..n {
            if self.offsets[u + 1] < self.offsets[u] {
                return Err(Error::State(format!("offsets decrease at {u}")));
            }
            let nb = self.neighbors(u);
            max = max.max(nb.len());
            for (k, &v) in nb.iter().enumerate() {
                if v as usize == u {
                    return Err(Error::State(format!("self-loop at {u}")));
                }
                if k > 0 && nb[k - 1] >= v {
                    return Err(Error::State(format!("neighbors of {u} not strictly sorted")));
                }
                if !self.has_edge(v as usize, u) {
                    return Err(Error::State(format!("edge ({u}, {v}) not symmetric")));
                }
            }
        }
        if max != self.max_degree {
            return Err(Error::State("stale max_degree".into()));
        }
        Ok(())
    }

    /// A stable 64-bit fingerprint of the adjacency arrays.
    pub fn fingerprint(&self) -> u64 {
        let mut h = rng::mix(0x6772_6170_6800, self.vertex_count() as u64, 0);
        for (u, v) in self.edges() {
            h = rng::mix(h, u as u64, v as u64);
        }
        h
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
        Self::from_edges(n, edges).expect("in range").0
    }

    pub fn path(n: usize) -> Self {
        Self::from_edges(n, (1..n).map(|v| (v - 1, v))).expect("in range").0
    }

    pub fn cycle(n: usize) -> Self {
        Self::from_edges(n, (0..n).map(|v| (v, (v + 1) % n))).expect("in range").0
    }

    /// Star `K_{1,leaves}` with vertex 0 at the center.
    pub fn star(leaves: usize) -> Self {
        Self::from_edges(leaves + 1, (1..=leaves).map(|v| (0, v)))
            .expect("in range")
            .0
    }

    /// Crown graph on `2k` vertices: `K_{k,k}` minus a perfect matching.
    /// Ids interleave the sides: `2i` is `a_i`, `2i + 1` is `b_i`, which is
    /// the order that makes natural-order greedy coloring use `k` colors.
    pub fn crown(k: usize) -> Self {
        let mut edges = Vec::new();
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    edges.push((2 * i, 2 * j + 1));
                }
            }
        }
        Self::from_edges(2 * k, edges).expect("in range").0
    }

    pub fn petersen() -> Self {
        let mut edges = Vec::new();
        for i in 0..5 {
            edges.push((i, (i + 1) % 5));
            edges.push((i, i + 5));
            edges.push((5 + i, 5 + (i + 2) % 5));
        }
        Self::from_edges(10, edges).expect("in range").0
    }

    /// Disjoint union, `other`'s ids shifted by `self.vertex_count()`.
    pub fn disjoint_union(&self, other: &Graph) -> Self {
        let shift = self.vertex_count();
        let edges = self
            .edges()
            .chain(other.edges().map(|(u, v)| (u + shift, v + shift)));
        Self::from_edges(shift + other.vertex_count(), edges)
            .expect("in range")
            .0
    }
}

/// Where a graph comes from; files are resolved by the std companion crate.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphSource {
    ErdosRenyi { n: usize, p: f64 },
    WattsStrogatz { n: usize, k: usize, beta: f64 },
    File { path: alloc::string::String },
}

impl GraphSource {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GraphSource::ErdosRenyi { p, .. } => check_probability("p", p),
            GraphSource::WattsStrogatz { n, k, beta } => {
                check_ws(n, k)?;
                check_probability("beta", beta)
            }
            GraphSource::File { .. } => Ok(()),
        }
    }

    /// Generates the graph for random sources; `None` for files.
    pub fn generate(&self, seed: u64) -> Option<Result<Graph>> {
        match *self {
            GraphSource::ErdosRenyi { n, p } => Some(gen_er(n, p, seed)),
            GraphSource::WattsStrogatz { n, k, beta } => Some(gen_ws(n, k, beta, seed)),
            GraphSource::File { .. } => None,
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} = {p} is not a probability")))
    }
}

fn check_ws(n: usize, k: usize) -> Result<()> {
    if k == 0 || k % 2 != 0 {
        return Err(Error::Param(format!("K = {k} must be even and positive")));
    }
    if k >= n {
        return Err(Error::Param(format!("K = {k} must be below n = {n}")));
    }
    Ok(())
}

/// Erdős–Rényi G(n, p): every unordered pair is an edge independently with
/// probability `p`, pairs drawn in lexicographic order from one ChaCha8 stream.
pub fn gen_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    check_probability("p", p)?;
    let mut rng = rng::rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Ok(Graph::from_edges(n, edges)?.0)
}

/// Watts–Strogatz small world: ring lattice where each vertex links to its
/// `k / 2` nearest neighbors on either side, then each lattice edge `(u, u+j)`
/// is rewired to `(u, w)` with probability `beta`, `w` uniform among vertices
/// that are neither `u` nor already adjacent to it. Edge count stays `n k / 2`.
pub fn gen_ws(n: usize, k: usize, beta: f64, seed: u64) -> Result<Graph> {
    check_ws(n, k)?;
    check_probability("beta", beta)?;
    let mut rng = rng::rng(seed);
    let mut adj: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n];
    for u in 0..n {
        for j in 1..=k / 2 {
            let v = (u + j) % n;
            adj[u].insert(v as u32);
            adj[v].insert(u as u32);
        }
    }
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            if rng.random::<f64>() >= beta || !adj[u].contains(&(v as u32)) {
                continue;
            }
            if adj[u].len() >= n - 1 {
                continue;
            }
            let w = loop {
                let w = rng.random_range(0..n);
                if w != u && !adj[u].contains(&(w as u32)) {
                    break w;
                }
            };
            adj[u].remove(&(v as u32));
            adj[v].remove(&(u as u32));
            adj[u].insert(w as u32);
            adj[w].insert(u as u32);
        }
    }
    let edges = adj
        .iter()
        .enumerate()
        .flat_map(|(u, nb)| nb.iter().map(move |&v| (u, v as usize)));
    Ok(Graph::from_edges(n, edges)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_extremes() {
        let k4 = gen_er(4, 1.0, 9).unwrap();
        assert_eq!(k4.edge_count(), 6);
        assert!(k4.degrees().all(|d| d == 3));
        assert_eq!(gen_er(5, 0.0, 9).unwrap().edge_count(), 0);
    }

    #[test]
    fn er_rejects_bad_probability() {
        assert!(matches!(gen_er(4, 1.5, 0), Err(Error::Param(_))));
        assert!(matches!(gen_er(4, -0.1, 0), Err(Error::Param(_))));
    }

    #[test]
    fn er_edge_count_is_binomial() {
        // Binomial(4950, 0.5): mean 2475, sd sqrt(4950 / 4) ~ 35.18.
        let sd = libm::sqrt(4950.0 * 0.25);
        for seed in 0..5 {
            let m = gen_er(100, 0.5, seed).unwrap().edge_count() as f64;
            assert!((m - 2475.0).abs() <= 3.0 * sd, "seed {seed}: {m}");
        }
    }

    #[test]
    fn ws_lattice_and_edge_count() {
        let ring = gen_ws(8, 4, 0.0, 3).unwrap();
        assert_eq!(ring.edge_count(), 16);
        assert!(ring.degrees().all(|d| d == 4));
        assert!(ring.has_edge(0, 7) && ring.has_edge(0, 6) && !ring.has_edge(0, 4));

        assert_eq!(gen_ws(1000, 4, 0.5, 11).unwrap().edge_count(), 2000);
        let g = gen_ws(6, 2, 1.0, 5).unwrap();
        assert_eq!(g.edge_count(), 6);
        g.validate().unwrap();
    }

    #[test]
    fn ws_rejects_bad_k() {
        assert!(gen_ws(8, 3, 0.5, 0).is_err());
        assert!(gen_ws(4, 4, 0.5, 0).is_err());
        assert!(gen_ws(8, 0, 0.5, 0).is_err());
    }

    #[test]
    fn builder_counts_dropped_pairs() {
        let (g, stats) = Graph::from_edges(3, [(0, 1), (1, 0), (2, 2), (1, 2)]).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(stats.self_loops, 1);
        assert_eq!(stats.duplicates, 1);
        assert!(Graph::from_edges(2, [(0, 2)]).is_err());
    }

    #[test]
    fn named_graphs() {
        let c = Graph::crown(4);
        assert_eq!(c.edge_count(), 12);
        assert!(!c.has_edge(0, 1) && c.has_edge(0, 3));
        let p = Graph::petersen();
        assert_eq!(p.edge_count(), 15);
        assert!(p.degrees().all(|d| d == 3));
        assert_eq!(Graph::empty(0).max_degree(), 0);
    }
}
