//! Fixed-vertex-set graphs, incidence algebra, edge indexing and demand vectors.
//!
//! Every graph lives on the vertex set `0..n`. Edges are unordered pairs stored
//! canonically as `(u, v)` with `u < v`, and are addressed by the colexicographic
//! index `v*(v-1)/2 + u`, which is the coordinate used by every sketch.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use petgraph::unionfind::UnionFind;
use thiserror::Error;

/// Absolute tolerance for zero-sum checks on demand vectors.
pub const TAU_ZERO: f64 = 1e-9;

pub type VertexId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("vertex {vertex} out of range for n = {n}")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) already present")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {1}) not present")]
    AbsentEdge(usize, usize),
    #[error("demand vector sums to {0}, not zero")]
    NonZeroSum(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Canonical unordered vertex pair with `u < v`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeKey {
    pub u: VertexId,
    pub v: VertexId,
}

impl fmt::Debug for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.u, self.v)
    }
}

impl EdgeKey {
    /// Builds the canonical key for `{a, b}` in either order.
    pub fn new(a: VertexId, b: VertexId) -> Result<Self, GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        Ok(Self::ordered(a.min(b), a.max(b)))
    }

    /// Caller guarantees `u < v`.
    #[inline]
    pub fn ordered(u: VertexId, v: VertexId) -> Self {
        debug_assert!(u < v);
        EdgeKey { u, v }
    }

    /// Colexicographic index `v*(v-1)/2 + u`.
    #[inline]
    pub fn linear_index(&self) -> u64 {
        let v = self.v as u64;
        v * (v - 1) / 2 + self.u as u64
    }

    /// Inverse of [`EdgeKey::linear_index`].
    pub fn from_index(idx: u64) -> Self {
        let mut v = ((1.0 + (1.0 + 8.0 * idx as f64).sqrt()) / 2.0).floor() as u64;
        // Correct float rounding at the triangular-number boundaries.
        while v * (v - 1) / 2 > idx {
            v -= 1;
        }
        while (v + 1) * v / 2 <= idx {
            v += 1;
        }
        let u = idx - v * (v - 1) / 2;
        EdgeKey::ordered(u as usize, v as usize)
    }

    pub fn check(&self, n: usize) -> Result<(), GraphError> {
        if self.v >= n {
            return Err(GraphError::VertexOutOfRange { vertex: self.v, n });
        }
        Ok(())
    }

    pub fn other(&self, x: VertexId) -> VertexId {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// Number of vertex pairs, the dimension of the edge-indicator vector.
pub fn pair_count(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

/// Sign of `b_e` at vertex `x`: +1 at the smaller endpoint, -1 at the larger.
#[inline]
pub fn incidence_sign(e: EdgeKey, x: VertexId) -> i32 {
    if x == e.u {
        1
    } else if x == e.v {
        -1
    } else {
        0
    }
}

/// Row `b_e = χ_u − χ_v` of the incidence matrix, as sparse `(vertex, value)` pairs.
pub fn incidence_row(e: EdgeKey) -> [(VertexId, f64); 2] {
    [(e.u, 1.0), (e.v, -1.0)]
}

pub fn incidence_row_dense(e: EdgeKey, n: usize) -> Vec<f64> {
    let mut row = vec![0.0; n];
    row[e.u] = 1.0;
    row[e.v] = -1.0;
    row
}

/// Simple unweighted graph with exact degree counters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<EdgeKey>,
    degree: Vec<usize>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Graph { n, edges: BTreeSet::new(), degree: vec![0; n] }
    }

    pub fn from_edges<I: IntoIterator<Item = (VertexId, VertexId)>>(
        n: usize,
        edges: I,
    ) -> Result<Self, GraphError> {
        let mut g = Graph::new(n);
        for (a, b) in edges {
            g.insert(EdgeKey::new(a, b)?)?;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, e: EdgeKey) -> Result<(), GraphError> {
        e.check(self.n)?;
        if !self.edges.insert(e) {
            return Err(GraphError::DuplicateEdge(e.u, e.v));
        }
        self.degree[e.u] += 1;
        self.degree[e.v] += 1;
        Ok(())
    }

    pub fn remove(&mut self, e: EdgeKey) -> Result<(), GraphError> {
        if !self.edges.remove(&e) {
            return Err(GraphError::AbsentEdge(e.u, e.v));
        }
        self.degree[e.u] -= 1;
        self.degree[e.v] -= 1;
        Ok(())
    }

    pub fn contains(&self, e: EdgeKey) -> bool {
        self.edges.contains(&e)
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.degree[v]
    }

    pub fn min_degree(&self) -> usize {
        self.degree.iter().copied().min().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in ascending linear-index order.
    pub fn edges(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        let mut v: Vec<EdgeKey> = self.edges.iter().copied().collect();
        v.sort_by_key(|e| e.linear_index());
        v.into_iter()
    }

    pub fn adjacency(&self) -> Vec<Vec<VertexId>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        adj
    }

    /// Induced subgraph on `verts`, relabelled to `0..verts.len()` in the given order.
    pub fn induced(&self, verts: &[VertexId]) -> Graph {
        let mut pos = vec![usize::MAX; self.n];
        for (i, &v) in verts.iter().enumerate() {
            pos[v] = i;
        }
        let mut h = Graph::new(verts.len());
        for e in &self.edges {
            let (a, b) = (pos[e.u], pos[e.v]);
            if a != usize::MAX && b != usize::MAX {
                h.insert(EdgeKey::new(a, b).expect("distinct")).expect("simple");
            }
        }
        h
    }

    pub fn to_weighted(&self) -> WeightedGraph {
        let mut w = WeightedGraph::new(self.n);
        for e in &self.edges {
            w.set_weight(*e, 1.0);
        }
        w
    }

    /// Component label per vertex, labels ascending by smallest member.
    pub fn components(&self) -> Vec<usize> {
        components_of(self.n, self.edges.iter().copied())
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.components().iter().all(|&c| c == 0)
    }
}

pub(crate) fn components_of<I: Iterator<Item = EdgeKey>>(n: usize, edges: I) -> Vec<usize> {
    let mut uf = UnionFind::<usize>::new(n);
    for e in edges {
        uf.union(e.u, e.v);
    }
    let mut label = vec![usize::MAX; n];
    let mut root_label = vec![usize::MAX; n];
    let mut next = 0;
    for v in 0..n {
        let r = uf.find(v);
        if root_label[r] == usize::MAX {
            root_label[r] = next;
            next += 1;
        }
        label[v] = root_label[r];
    }
    label
}

/// Weighted graph with optional regularizer: `K = BᵀWB + γI`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: BTreeMap<EdgeKey, f64>,
    gamma: f64,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        WeightedGraph { n, edges: BTreeMap::new(), gamma: 0.0 }
    }

    /// `γI` with no edges.
    pub fn identity_scaled(n: usize, gamma: f64) -> Self {
        WeightedGraph { n, edges: BTreeMap::new(), gamma }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        assert!(gamma >= 0.0, "regularizer must be non-negative");
        self.gamma = gamma;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) {
        assert!(gamma >= 0.0, "regularizer must be non-negative");
        self.gamma = gamma;
    }

    /// Sets `w(e)`; a non-positive weight removes the edge.
    pub fn set_weight(&mut self, e: EdgeKey, w: f64) {
        assert!(e.v < self.n, "edge {e:?} out of range");
        if w > 0.0 {
            self.edges.insert(e, w);
        } else {
            self.edges.remove(&e);
        }
    }

    pub fn add_weight(&mut self, e: EdgeKey, w: f64) {
        let cur = self.weight(e);
        self.set_weight(e, cur + w);
    }

    pub fn weight(&self, e: EdgeKey) -> f64 {
        self.edges.get(&e).copied().unwrap_or(0.0)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `(edge, weight)` in ascending linear-index order.
    pub fn edges(&self) -> Vec<(EdgeKey, f64)> {
        let mut v: Vec<(EdgeKey, f64)> = self.edges.iter().map(|(e, w)| (*e, *w)).collect();
        v.sort_by_key(|(e, _)| e.linear_index());
        v
    }

    pub fn edge_keys(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.edges.keys().copied()
    }

    /// Multiplies every weight and γ by `c`.
    pub fn scaled(&self, c: f64) -> WeightedGraph {
        assert!(c > 0.0);
        WeightedGraph {
            n: self.n,
            edges: self.edges.iter().map(|(e, w)| (*e, w * c)).collect(),
            gamma: self.gamma * c,
        }
    }

    /// Sum of the two operators (weights and γ added).
    pub fn sum(&self, other: &WeightedGraph) -> WeightedGraph {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (e, w) in &other.edges {
            out.add_weight(*e, *w);
        }
        out.gamma += other.gamma;
        out
    }

    pub fn weighted_degree(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for (e, w) in &self.edges {
            d[e.u] += w;
            d[e.v] += w;
        }
        d
    }

    pub fn unweighted(&self) -> Graph {
        let mut g = Graph::new(self.n);
        for e in self.edges.keys() {
            g.insert(*e).expect("keys are unique");
        }
        g
    }

    /// `y = K x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y: Vec<f64> = x.iter().map(|xi| self.gamma * xi).collect();
        for (e, w) in &self.edges {
            let d = w * (x[e.u] - x[e.v]);
            y[e.u] += d;
            y[e.v] -= d;
        }
        y
    }

    /// `xᵀ K x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut q = self.gamma * x.iter().map(|a| a * a).sum::<f64>();
        for (e, w) in &self.edges {
            let d = x[e.u] - x[e.v];
            q += w * d * d;
        }
        q
    }

    pub fn components(&self) -> Vec<usize> {
        components_of(self.n, self.edges.keys().copied())
    }
}

/// Dense `K = BᵀWB + γI`.
pub fn laplacian(g: &WeightedGraph) -> DMatrix<f64> {
    let n = g.n();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for (e, w) in g.edges.iter() {
        l[(e.u, e.u)] += w;
        l[(e.v, e.v)] += w;
        l[(e.u, e.v)] -= w;
        l[(e.v, e.u)] -= w;
    }
    for i in 0..n {
        l[(i, i)] += g.gamma;
    }
    l
}

/// Zero-sum vertex demand.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandVector(Vec<f64>);

impl DemandVector {
    pub fn new(sigma: Vec<f64>) -> Result<Self, GraphError> {
        let s: f64 = sigma.iter().sum();
        if s.abs() > TAU_ZERO {
            return Err(GraphError::NonZeroSum(s));
        }
        Ok(DemandVector(sigma))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Splits a demand into `(s, t, α)` terms with `Σ α(χ_s − χ_t) = σ` and `Σ α = ‖σ‖₁/2`.
///
/// The smallest-magnitude nonzero entry is repeatedly cancelled against an
/// opposite-sign entry, which zeroes at least one entry per step.
pub fn decompose_demand(sigma: &DemandVector) -> Vec<(VertexId, VertexId, f64)> {
    let mut s = sigma.0.clone();
    let mut out = Vec::new();
    loop {
        let smallest = s
            .iter()
            .enumerate()
            .filter(|(_, x)| x.abs() > TAU_ZERO)
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(a.0.cmp(&b.0)));
        let Some((i, &xi)) = smallest else { break };
        let partner = s
            .iter()
            .enumerate()
            .filter(|(_, x)| x.abs() > TAU_ZERO && x.signum() != xi.signum())
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)));
        let Some((j, _)) = partner else { break };
        let alpha = xi.abs();
        if xi > 0.0 {
            out.push((i, j, alpha));
            s[j] += alpha;
        } else {
            out.push((j, i, alpha));
            s[j] -= alpha;
        }
        s[i] = 0.0;
    }
    out
}

/// Parses `u v` lines (0-based, `#` comments) into a graph on `n` vertices.
pub fn parse_edge_list(text: &str, n: usize) -> Result<Graph, GraphError> {
    let mut g = Graph::new(n);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: &str| GraphError::Parse { line: lineno + 1, msg: msg.to_string() };
        let mut it = line.split_whitespace();
        let a: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| parse_err("bad vertex"))?;
        let b: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| parse_err("bad vertex"))?;
        if it.next().is_some() {
            return Err(parse_err("trailing tokens"));
        }
        let e = EdgeKey::new(a, b).map_err(|e| parse_err(&e.to_string()))?;
        g.insert(e).map_err(|e| parse_err(&e.to_string()))?;
    }
    Ok(g)
}

pub fn write_edge_list(g: &Graph) -> String {
    let mut s = String::new();
    for e in g.edges() {
        s.push_str(&format!("{} {}\n", e.u, e.v));
    }
    s
}

/// Deterministic graph families used by tests, benches and the self-test.
pub mod generators {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn complete(n: usize) -> Graph {
        let mut g = Graph::new(n);
        for v in 1..n {
            for u in 0..v {
                g.insert(EdgeKey::ordered(u, v)).unwrap();
            }
        }
        g
    }

    pub fn path(n: usize) -> Graph {
        Graph::from_edges(n, (1..n).map(|v| (v - 1, v))).unwrap()
    }

    pub fn cycle(n: usize) -> Graph {
        let mut g = path(n);
        if n > 2 {
            g.insert(EdgeKey::ordered(0, n - 1)).unwrap();
        }
        g
    }

    /// Center 0 with leaves `1..=leaves`.
    pub fn star(leaves: usize) -> Graph {
        Graph::from_edges(leaves + 1, (1..=leaves).map(|v| (0, v))).unwrap()
    }

    pub fn gnp(n: usize, p: f64, seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new(n);
        for v in 1..n {
            for u in 0..v {
                if rng.random::<f64>() < p {
                    g.insert(EdgeKey::ordered(u, v)).unwrap();
                }
            }
        }
        g
    }

    /// G(n, p) resampled with consecutive seeds until connected.
    pub fn gnp_connected(n: usize, p: f64, seed: u64) -> Graph {
        (0..)
            .map(|k| gnp(n, p, seed.wrapping_mul(0x9E37_79B9).wrapping_add(k)))
            .find(|g| g.is_connected())
            .unwrap()
    }

    /// Disjoint cliques of the given sizes, laid out consecutively.
    pub fn cliques(sizes: &[usize]) -> Graph {
        let n: usize = sizes.iter().sum();
        let mut g = Graph::new(n);
        let mut off = 0;
        for &k in sizes {
            for v in 1..k {
                for u in 0..v {
                    g.insert(EdgeKey::ordered(off + u, off + v)).unwrap();
                }
            }
            off += k;
        }
        g
    }

    /// Two `k`-cliques joined by the bridge `(k-1, k)`.
    pub fn dumbbell(k: usize) -> Graph {
        let mut g = cliques(&[k, k]);
        g.insert(EdgeKey::ordered(k - 1, k)).unwrap();
        g
    }

    /// `rows × cols` grid of `k`-cliques; neighbouring cliques joined by `links` disjoint edges.
    pub fn clique_grid(rows: usize, cols: usize, k: usize, links: usize) -> Graph {
        let mut g = cliques(&vec![k; rows * cols]);
        let base = |r: usize, c: usize| (r * cols + c) * k;
        for r in 0..rows {
            for c in 0..cols {
                for (dr, dc) in [(0, 1), (1, 0)] {
                    let (r2, c2) = (r + dr, c + dc);
                    if r2 < rows && c2 < cols {
                        for t in 0..links.min(k) {
                            let e = EdgeKey::new(base(r, c) + t, base(r2, c2) + t).unwrap();
                            g.insert(e).unwrap();
                        }
                    }
                }
            }
        }
        g
    }

    /// Random graph with maximum degree `max_deg`: a Hamiltonian path plus random
    /// extra edges, so it is connected with bounded degree.
    pub fn bounded_degree(n: usize, max_deg: usize, seed: u64) -> Graph {
        assert!(max_deg >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = path(n);
        let target = n * max_deg / 2 - n / 2;
        let mut attempts = 0;
        while g.edge_count() < target && attempts < 20 * n * max_deg {
            attempts += 1;
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b || g.degree(a) >= max_deg || g.degree(b) >= max_deg {
                continue;
            }
            let e = EdgeKey::new(a, b).unwrap();
            if !g.contains(e) {
                g.insert(e).unwrap();
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::generators::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn incidence_rows_match_definition() {
        assert_eq!(incidence_row_dense(EdgeKey::new(0, 1).unwrap(), 3), vec![1.0, -1.0, 0.0]);
        assert_eq!(incidence_row_dense(EdgeKey::new(2, 1).unwrap(), 3), vec![0.0, 1.0, -1.0]);
        let r = incidence_row_dense(EdgeKey::new(0, 1).unwrap(), 3);
        assert_eq!(r.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn linear_index_round_trips() {
        let n = 300;
        let mut expected = 0u64;
        for v in 1..n {
            for u in 0..v {
                let e = EdgeKey::ordered(u, v);
                assert_eq!(e.linear_index(), expected);
                assert_eq!(EdgeKey::from_index(expected), e);
                expected += 1;
            }
        }
        assert_eq!(expected, pair_count(n));
        let big = EdgeKey::ordered(123_456, 9_876_543);
        assert_eq!(EdgeKey::from_index(big.linear_index()), big);
    }

    #[test]
    fn triangle_laplacian() {
        let l = laplacian(&complete(3).to_weighted());
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l[(i, j)], if i == j { 2.0 } else { -1.0 });
            }
        }
    }

    #[test]
    fn empty_graph_with_gamma_is_scaled_identity() {
        let l = laplacian(&WeightedGraph::identity_scaled(2, 0.5));
        assert_eq!(l, DMatrix::identity(2, 2) * 0.5);
    }

    #[test]
    fn laplacian_is_psd_on_random_graph() {
        let l = laplacian(&gnp(8, 0.5, 3).to_weighted());
        let eig = l.symmetric_eigenvalues();
        assert!(eig.iter().all(|&x| x > -1e-12), "{eig}");
    }

    #[test]
    fn laplacian_matches_outer_product_sum() {
        for seed in 0..10 {
            let n = 5 + (seed as usize * 5) % 46;
            let g = gnp(n, 0.3, seed);
            let mut w = WeightedGraph::new(n);
            for (k, e) in g.edges().enumerate() {
                w.set_weight(e, 0.5 + k as f64 * 0.25);
            }
            let w = w.with_gamma(0.3);
            let mut expect = DMatrix::<f64>::identity(n, n) * 0.3;
            for (e, wt) in w.edges() {
                let b = nalgebra::DVector::from_vec(incidence_row_dense(e, n));
                expect += &b * b.transpose() * wt;
            }
            assert!((laplacian(&w) - expect).abs().max() < 1e-12);
            let ones = vec![1.0; n];
            for y in w.apply(&ones) {
                assert!((y - 0.3).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn graph_rejects_invalid_updates() {
        let mut g = Graph::new(3);
        let e = EdgeKey::new(0, 1).unwrap();
        g.insert(e).unwrap();
        assert_eq!(g.insert(e), Err(GraphError::DuplicateEdge(0, 1)));
        g.remove(e).unwrap();
        assert_eq!(g.remove(e), Err(GraphError::AbsentEdge(0, 1)));
        assert_eq!(EdgeKey::new(2, 2), Err(GraphError::SelfLoop(2)));
        assert!(matches!(g.insert(EdgeKey::ordered(1, 3)), Err(GraphError::VertexOutOfRange { .. })));
    }

    #[test]
    fn decompose_examples() {
        let d = decompose_demand(&DemandVector::new(vec![1.0, -1.0, 0.0]).unwrap());
        assert_eq!(d, vec![(0, 1, 1.0)]);
        let d = decompose_demand(&DemandVector::new(vec![2.0, -1.0, -1.0]).unwrap());
        assert!((d.iter().map(|t| t.2).sum::<f64>() - 2.0).abs() < 1e-12);
        assert!(decompose_demand(&DemandVector::new(vec![0.0; 3]).unwrap()).is_empty());
        assert!(matches!(DemandVector::new(vec![1.0, 0.0]), Err(GraphError::NonZeroSum(_))));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = gnp(12, 0.4, 9);
        let text = write_edge_list(&g);
        assert_eq!(parse_edge_list(&text, 12).unwrap(), g);
        assert!(matches!(parse_edge_list("0 1\n1 0\n", 3), Err(GraphError::Parse { line: 2, .. })));
    }

    #[test]
    fn generators_have_expected_shape() {
        assert_eq!(complete(16).edge_count(), 120);
        assert_eq!(dumbbell(15).edge_count(), 2 * 105 + 1);
        assert!(dumbbell(15).is_connected());
        assert_eq!(cycle(6).edge_count(), 6);
        let b = bounded_degree(128, 4, 1);
        assert!(b.is_connected());
        assert!((0..128).all(|v| b.degree(v) <= 4));
        assert!(gnp_connected(64, 0.3, 5).is_connected());
        let grid = clique_grid(2, 2, 5, 2);
        assert_eq!(grid.edge_count(), 4 * 10 + 4 * 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn decompose_round_trips(raw in prop::collection::vec(-10.0f64..10.0, 2..20)) {
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            let sigma: Vec<f64> = raw.iter().map(|x| x - mean).collect();
            let fix = sigma.iter().sum::<f64>();
            let mut sigma = sigma;
            sigma[0] -= fix;
            let Ok(d) = DemandVector::new(sigma.clone()) else { return Ok(()) };
            let terms = decompose_demand(&d);
            prop_assert!(terms.len() < sigma.len().max(2));
            let mut rebuilt = vec![0.0; sigma.len()];
            for &(s, t, a) in &terms {
                prop_assert!(a > 0.0);
                rebuilt[s] += a;
                rebuilt[t] -= a;
            }
            for (x, y) in rebuilt.iter().zip(&sigma) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            let l1: f64 = sigma.iter().map(|x| x.abs()).sum();
            let total: f64 = terms.iter().map(|t| t.2).sum();
            prop_assert!((total - l1 / 2.0).abs() < 1e-9);
        }
    }
}
