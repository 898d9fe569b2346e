//! Laplacian solves, JL resistance embeddings and vertex-set contraction over
//! explicit graphs.

use thiserror::Error;

use crate::graph_core::{components_of, pair_count, EdgeKey, VertexId, WeightedGraph};
use crate::prg::{HashFamily, HashKind, Seed};

/// Relative residual target for every solve.
pub const TAU_SOLVE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// `L + diag(extra)` in adjacency-list form, the common shape of every
/// operator we solve against.
#[derive(Clone, Debug)]
pub struct SddOperator {
    n: usize,
    offsets: Vec<usize>,
    nbrs: Vec<u32>,
    weights: Vec<f64>,
    extra: Vec<f64>,
    diag: Vec<f64>,
    comp: Vec<usize>,
    /// Components that carry no diagonal excess; the operator is singular on their indicator.
    floating: Vec<bool>,
}

impl SddOperator {
    pub fn new(n: usize, edges: &[(EdgeKey, f64)], extra: Vec<f64>) -> Self {
        assert_eq!(extra.len(), n);
        let mut deg = vec![0usize; n];
        for (e, _) in edges {
            deg[e.u] += 1;
            deg[e.v] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + deg[v];
        }
        let mut fill = offsets.clone();
        let mut nbrs = vec![0u32; offsets[n]];
        let mut weights = vec![0.0; offsets[n]];
        let mut diag = extra.clone();
        for &(e, w) in edges {
            for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                nbrs[fill[a]] = b as u32;
                weights[fill[a]] = w;
                fill[a] += 1;
                diag[a] += w;
            }
        }
        let comp = components_of(n, edges.iter().map(|(e, _)| *e));
        let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);
        let mut floating = vec![true; ncomp];
        for v in 0..n {
            if extra[v] > 0.0 {
                floating[comp[v]] = false;
            }
        }
        SddOperator { n, offsets, nbrs, weights, extra, diag, comp, floating }
    }

    pub fn from_graph(k: &WeightedGraph) -> Self {
        Self::new(k.n(), &k.edges(), vec![k.gamma(); k.n()])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn extra(&self) -> &[f64] {
        &self.extra
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeKey, f64)> + '_ {
        (0..self.n).flat_map(move |u| {
            (self.offsets[u]..self.offsets[u + 1])
                .filter(move |&k| (self.nbrs[k] as usize) > u)
                .map(move |k| (EdgeKey::ordered(u, self.nbrs[k] as usize), self.weights[k]))
        })
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for u in 0..self.n {
            let mut acc = self.diag[u] * x[u];
            for k in self.offsets[u]..self.offsets[u + 1] {
                acc -= self.weights[k] * x[self.nbrs[k] as usize];
            }
            y[u] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply_into(x, &mut y);
        y
    }

    /// Same-component test; always true when every component is grounded by a diagonal excess.
    pub fn connected(&self, u: VertexId, v: VertexId) -> bool {
        self.comp[u] == self.comp[v] || (!self.floating[self.comp[u]] && !self.floating[self.comp[v]])
    }

    /// Removes the per-component mean on floating components.
    fn project(&self, x: &mut [f64]) {
        if !self.floating.iter().any(|&f| f) {
            return;
        }
        let k = self.floating.len();
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for v in 0..self.n {
            sum[self.comp[v]] += x[v];
            cnt[self.comp[v]] += 1;
        }
        for v in 0..self.n {
            let c = self.comp[v];
            if self.floating[c] {
                x[v] -= sum[c] / cnt[c] as f64;
            }
        }
    }

    /// Jacobi-preconditioned conjugate gradient; pseudo-inverse semantics on
    /// floating components.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        if b.len() != self.n {
            return Err(SolveError::DimensionMismatch { expected: self.n, got: b.len() });
        }
        let n = self.n;
        let mut r = b.to_vec();
        self.project(&mut r);
        let bnorm = norm(&r);
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let inv: Vec<f64> = self.diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
        let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, m)| a * m).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let max_iter = (10 * n).max(20);
        let mut res = 1.0;
        for it in 0..max_iter {
            self.apply_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            res = norm(&r) / bnorm;
            if res <= TAU_SOLVE {
                self.project(&mut x);
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] * inv[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            if it % 64 == 63 {
                // Refresh the recursive residual against drift.
                let kx = self.apply(&x);
                for i in 0..n {
                    r[i] = b[i] - kx[i];
                }
                self.project(&mut r);
            }
        }
        let kx = self.apply(&x);
        let mut rr: Vec<f64> = b.iter().zip(&kx).map(|(a, c)| a - c).collect();
        self.project(&mut rr);
        res = res.min(norm(&rr) / bnorm);
        if res <= TAU_SOLVE {
            self.project(&mut x);
            return Ok(x);
        }
        Err(SolveError::NotConverged { iterations: max_iter, residual: res })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `x` with `‖Kx − b‖ ≤ τ‖b‖`, mean-free per component when `γ = 0`.
pub fn solve_laplacian(k: &WeightedGraph, b: &[f64]) -> Result<Vec<f64>, SolveError> {
    SddOperator::from_graph(k).solve(b)
}

/// `φ = K⁺(χ_src − χ_sink)`.
pub fn potentials(k: &WeightedGraph, source: VertexId, sink: VertexId) -> Result<Vec<f64>, SolveError> {
    potentials_on(&SddOperator::from_graph(k), source, sink)
}

pub fn potentials_on(op: &SddOperator, source: VertexId, sink: VertexId) -> Result<Vec<f64>, SolveError> {
    assert_ne!(source, sink, "source and sink must differ");
    let mut b = vec![0.0; op.n()];
    b[source] = 1.0;
    b[sink] = -1.0;
    op.solve(&b)
}

/// Coarse approximation `K̃` with `(1/C)·K ⪯ K̃ ⪯ K`.
#[derive(Clone, Debug)]
pub struct CoarseSparsifier {
    pub graph: WeightedGraph,
    pub quality: f64,
}

impl CoarseSparsifier {
    pub fn new(graph: WeightedGraph, quality: f64) -> Self {
        assert!(quality >= 1.0, "quality factor must be at least 1");
        CoarseSparsifier { graph, quality }
    }

    pub fn operator(&self) -> SddOperator {
        SddOperator::from_graph(&self.graph)
    }
}

/// `M = (1/√q)·Q·B̃·K̃⁺`, stored vertex-major so a pair query reads two rows.
#[derive(Clone, Debug)]
pub struct ResistanceEmbedding {
    n: usize,
    q: usize,
    data: Vec<f64>,
}

impl ResistanceEmbedding {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, v: VertexId) -> &[f64] {
        &self.data[v * self.q..(v + 1) * self.q]
    }

    /// `‖M(χ_u − χ_v)‖²`.
    #[inline]
    pub fn distance_sq(&self, u: VertexId, v: VertexId) -> f64 {
        if u == v {
            return 0.0;
        }
        self.row(u).iter().zip(self.row(v)).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn edge_norm_sq(&self, e: EdgeKey) -> f64 {
        self.distance_sq(e.u, e.v)
    }
}

/// Default JL dimension, `400·⌈log₂ n⌉`.
pub fn default_qjl(n: usize) -> usize {
    400 * ceil_log2(n).max(1)
}

pub fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// Builds the embedding with `q` solves. The ±1 entries of `Q` come from a
/// `⌈log₂ n⌉`-wise independent hash evaluated only on columns that exist.
pub fn build_embedding(k: &CoarseSparsifier, q: usize, seed: Seed) -> Result<ResistanceEmbedding, SolveError> {
    build_embedding_on(&k.operator(), q, seed)
}

pub fn build_embedding_on(op: &SddOperator, q: usize, seed: Seed) -> Result<ResistanceEmbedding, SolveError> {
    assert!(q > 0);
    let n = op.n();
    let wise = ceil_log2(n).max(4);
    let hash = HashFamily::random(HashKind::KWise(wise), &mut seed.rng());
    let cols = pair_count(n) + n as u64;
    let edges: Vec<(EdgeKey, f64)> = op.edges().collect();
    let scale = 1.0 / (q as f64).sqrt();
    let mut data = vec![0.0; n * q];
    let mut rhs = vec![0.0; n];
    for row in 0..q {
        let base = row as u64 * cols;
        rhs.iter_mut().for_each(|x| *x = 0.0);
        for &(e, w) in &edges {
            let s = hash.sign(base + e.linear_index()) as f64 * w.sqrt();
            rhs[e.u] += s;
            rhs[e.v] -= s;
        }
        for (v, &g) in op.extra().iter().enumerate() {
            if g > 0.0 {
                rhs[v] += hash.sign(base + pair_count(n) + v as u64) as f64 * g.sqrt();
            }
        }
        let x = op.solve(&rhs)?;
        for v in 0..n {
            data[v * q + row] = x[v] * scale;
        }
    }
    Ok(ResistanceEmbedding { n, q, data })
}

/// `K̃_P = Y_Pᵀ K̃ Y_P`: the supernode takes index 0, the other vertices
/// follow in ascending order.
#[derive(Clone, Debug)]
pub struct Contraction {
    pub members: Vec<VertexId>,
    pub supernode: usize,
    /// Original vertex to contracted index.
    pub map: Vec<usize>,
    pub op: SddOperator,
}

pub fn contract(k: &SddOperator, p: &[VertexId]) -> Contraction {
    assert!(!p.is_empty(), "cannot contract an empty set");
    let n = k.n();
    let mut inside = vec![false; n];
    for &v in p {
        inside[v] = true;
    }
    let mut map = vec![0usize; n];
    let mut next = 1;
    for v in 0..n {
        if !inside[v] {
            map[v] = next;
            next += 1;
        }
    }
    let m = next;
    let mut extra = vec![0.0; m];
    for v in 0..n {
        extra[map[v]] += k.extra()[v];
    }
    let mut merged: std::collections::BTreeMap<EdgeKey, f64> = std::collections::BTreeMap::new();
    for (e, w) in k.edges() {
        let (a, b) = (map[e.u], map[e.v]);
        if a != b {
            *merged.entry(EdgeKey::new(a, b).expect("distinct endpoints")).or_insert(0.0) += w;
        }
    }
    let edges: Vec<(EdgeKey, f64)> = merged.into_iter().collect();
    let mut members = p.to_vec();
    members.sort_unstable();
    members.dedup();
    Contraction { members, supernode: 0, map, op: SddOperator::new(m, &edges, extra) }
}

impl Contraction {
    pub fn dim(&self) -> usize {
        self.op.n()
    }

    /// `Y φ`: every member of `P` reads the supernode's value.
    pub fn lift(&self, phi: &[f64]) -> Vec<f64> {
        self.map.iter().map(|&c| phi[c]).collect()
    }

    /// `K̃_P⁺(χ_û − χ_v)` lifted to the original vertex set.
    pub fn potentials_to(&self, v: VertexId) -> Result<Vec<f64>, SolveError> {
        let t = self.map[v];
        assert_ne!(t, self.supernode, "sink lies inside the contracted set");
        Ok(self.lift(&potentials_on(&self.op, self.supernode, t)?))
    }
}
