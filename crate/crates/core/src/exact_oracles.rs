//! Dense ground-truth references. Everything here is O(n³) on purpose: these
//! are the yardsticks the sketch-based decoders are measured against.

use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use petgraph::algo::dinics;
use petgraph::graph::DiGraph;
use rustc_hash::FxHasher;
use thiserror::Error;

use crate::graph_core::{laplacian, EdgeKey, Graph, VertexId, WeightedGraph};
use crate::resistance::{solve_laplacian, SolveError};
use crate::sketches::HeavyHitterSketch;

/// Relative eigenvalue cutoff below which a direction counts as null.
pub const PINV_CUTOFF: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("edge {0:?} not in graph")]
    EdgeAbsent(EdgeKey),
    #[error("min degree {min_degree} below 10·d_min = {required}")]
    DegreeTooLow { min_degree: usize, required: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Effective resistance; disconnected pairs are a distinct variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resistance {
    Finite(f64),
    Infinite,
}

impl Resistance {
    pub fn finite(self) -> Option<f64> {
        match self {
            Resistance::Finite(r) => Some(r),
            Resistance::Infinite => None,
        }
    }

    pub fn is_at_least(self, beta: f64) -> bool {
        match self {
            Resistance::Finite(r) => r >= beta,
            Resistance::Infinite => true,
        }
    }
}

fn fingerprint(g: &WeightedGraph) -> u64 {
    let mut h = FxHasher::default();
    g.n().hash(&mut h);
    g.gamma().to_bits().hash(&mut h);
    for (e, w) in g.edges() {
        e.linear_index().hash(&mut h);
        w.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Moore–Penrose pseudoinverse of `K = BᵀWB + γI`.
#[derive(Clone, Debug)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    pub source_fingerprint: u64,
    components: Vec<usize>,
    regularized: bool,
}

impl PseudoInverse {
    pub fn new(g: &WeightedGraph) -> Self {
        let k = laplacian(g);
        PseudoInverse {
            matrix: pinv_sym(&k),
            source_fingerprint: fingerprint(g),
            components: g.components(),
            regularized: g.gamma() > 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn resistance(&self, u: VertexId, v: VertexId) -> Resistance {
        if u == v {
            return Resistance::Finite(0.0);
        }
        if !self.regularized && self.components[u] != self.components[v] {
            return Resistance::Infinite;
        }
        let p = &self.matrix;
        Resistance::Finite(p[(u, u)] + p[(v, v)] - 2.0 * p[(u, v)])
    }

    /// `b_uvᵀ K⁺ b_xy`.
    pub fn bilinear(&self, u: VertexId, v: VertexId, x: VertexId, y: VertexId) -> f64 {
        let p = &self.matrix;
        p[(u, x)] - p[(u, y)] - p[(v, x)] + p[(v, y)]
    }

    /// `K⁺ (χ_u − χ_v)`.
    pub fn potentials(&self, u: VertexId, v: VertexId) -> Vec<f64> {
        (0..self.n()).map(|a| self.matrix[(a, u)] - self.matrix[(a, v)]).collect()
    }

    /// All-pairs resistance matrix; `None` marks infinite entries.
    pub fn all_pairs(&self) -> Vec<Vec<Option<f64>>> {
        let n = self.n();
        (0..n).map(|u| (0..n).map(|v| self.resistance(u, v).finite()).collect()).collect()
    }
}

/// Pseudoinverse of a symmetric PSD matrix via eigendecomposition.
pub fn pinv_sym(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(k.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let cut = PINV_CUTOFF * lmax;
    let mut out = DMatrix::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cut {
            let u = eig.eigenvectors.column(i);
            out += (u * u.transpose()) / lam;
        }
    }
    out
}

pub fn exact_effective_resistance(g: &WeightedGraph, u: VertexId, v: VertexId) -> Resistance {
    if u == v {
        return Resistance::Finite(0.0);
    }
    PseudoInverse::new(g).resistance(u, v)
}

/// Eigenvalues of `A` relative to `B` on `range(B)`: the spectrum of
/// `Λ^{-1/2} Uᵀ A U Λ^{-1/2}` where `B = U Λ Uᵀ` restricted to non-null directions.
pub fn relative_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let n = b.nrows();
    if n == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(b.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |x, &y| x.max(y.abs()));
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > PINV_CUTOFF * lmax).collect();
    if keep.is_empty() {
        return Vec::new();
    }
    let mut p = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let scale = 1.0 / eig.eigenvalues[i].sqrt();
        p.set_column(c, &(eig.eigenvectors.column(i) * scale));
    }
    let m = p.transpose() * a * &p;
    let m = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `(min, max)` relative eigenvalue of `L_H` against `L_G` on `range(L_G)`.
pub fn relative_spectrum(g: &WeightedGraph, h: &WeightedGraph) -> Result<(f64, f64), OracleError> {
    if g.n() != h.n() {
        return Err(OracleError::DimensionMismatch(g.n(), h.n()));
    }
    let ev = relative_eigenvalues(&laplacian(h), &laplacian(g));
    Ok(match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (1.0, 1.0),
    })
}

pub fn is_spectral_sparsifier(g: &WeightedGraph, h: &WeightedGraph, eps: f64) -> Result<bool, OracleError> {
    let (lo, hi) = relative_spectrum(g, h)?;
    Ok(lo >= 1.0 - eps - 1e-8 && hi <= 1.0 + eps + 1e-8)
}

/// `A ⪯ c·B` on `range(B)`, within an absolute tolerance on the relative spectrum.
pub fn loewner_le(a: &DMatrix<f64>, b: &DMatrix<f64>, c: f64, tol: f64) -> bool {
    relative_eigenvalues(a, b).iter().all(|&x| x <= c + tol)
}

/// Minimum `u`–`v` cut of the edge `e`, by unit-capacity max-flow.
pub fn exact_edge_connectivity(g: &Graph, e: EdgeKey) -> Result<usize, OracleError> {
    if !g.contains(e) {
        return Err(OracleError::EdgeAbsent(e));
    }
    let mut net = DiGraph::<(), u32>::with_capacity(g.n(), 2 * g.edge_count());
    let nodes: Vec<_> = (0..g.n()).map(|_| net.add_node(())).collect();
    for f in g.edges() {
        net.add_edge(nodes[f.u], nodes[f.v], 1);
        net.add_edge(nodes[f.v], nodes[f.u], 1);
    }
    let (flow, _) = dinics(&net, nodes[e.u], nodes[e.v]);
    Ok(flow as usize)
}

/// Heavy-edge recovery by trying every vertex pair as a flow source/sink.
///
/// For each pair `(u, v)` the potentials `φ = K̃⁻¹(χ_u − χ_v)` are pushed through
/// the heavy-hitter sketch and every decoded edge is kept. Pairs are unordered
/// because `−φ` has the same heavy support.
pub fn heavy_edges_brute_force(
    sketch: &HeavyHitterSketch,
    coarse: &WeightedGraph,
    eta: f64,
) -> Result<Vec<EdgeKey>, OracleError> {
    let n = coarse.n();
    if sketch.is_empty() || n < 2 {
        return Ok(Vec::new());
    }
    let mut columns = Vec::with_capacity(n);
    for v in 0..n {
        let mut chi = vec![0.0; n];
        chi[v] = 1.0;
        columns.push(solve_laplacian(coarse, &chi)?);
    }
    let decoder = sketch.pair_decoder(&columns);
    let mut found = std::collections::BTreeSet::new();
    for v in 1..n {
        for u in 0..v {
            for e in decoder.decode_pair(u, v, eta) {
                found.insert(e.linear_index());
            }
        }
    }
    Ok(found.into_iter().map(EdgeKey::from_index).collect())
}

/// Recursive low-diameter clustering used as a test oracle.
///
/// Vertices whose degree drops below `d_min` become singletons; a remaining piece
/// is accepted when its induced resistance diameter is at most `r_diam`, and
/// otherwise split along the best-conductance Fiedler sweep cut.
pub fn decompose(h: &Graph, d_min: f64, r_diam: f64) -> Result<Vec<Vec<VertexId>>, OracleError> {
    let required = 10.0 * d_min;
    if h.n() > 0 && (h.min_degree() as f64) < required {
        return Err(OracleError::DegreeTooLow { min_degree: h.min_degree(), required });
    }
    let mut out = Vec::new();
    decompose_rec(h, &(0..h.n()).collect::<Vec<_>>(), d_min, r_diam, &mut out);
    for c in out.iter_mut() {
        c.sort_unstable();
    }
    out.sort();
    Ok(out)
}

fn decompose_rec(h: &Graph, verts: &[VertexId], d_min: f64, r_diam: f64, out: &mut Vec<Vec<VertexId>>) {
    let mut alive: Vec<VertexId> = verts.to_vec();
    loop {
        let sub = h.induced(&alive);
        let low: Vec<usize> = (0..alive.len()).filter(|&i| (sub.degree(i) as f64) < d_min).collect();
        if low.is_empty() {
            break;
        }
        for &i in low.iter().rev() {
            out.push(vec![alive[i]]);
            alive.remove(i);
        }
    }
    if alive.is_empty() {
        return;
    }
    if alive.len() == 1 {
        out.push(alive);
        return;
    }
    let sub = h.induced(&alive);
    let comps = sub.components();
    let ncomp = comps.iter().max().map_or(0, |m| m + 1);
    if ncomp > 1 {
        for c in 0..ncomp {
            let part: Vec<VertexId> = (0..alive.len()).filter(|&i| comps[i] == c).map(|i| alive[i]).collect();
            decompose_rec(h, &part, d_min, r_diam, out);
        }
        return;
    }
    let pinv = PseudoInverse::new(&sub.to_weighted());
    let mut diam = 0.0f64;
    for u in 0..alive.len() {
        for v in (u + 1)..alive.len() {
            diam = diam.max(pinv.resistance(u, v).finite().unwrap_or(f64::INFINITY));
        }
    }
    if diam <= r_diam {
        out.push(alive);
        return;
    }
    let side = fiedler_sweep_cut(&sub);
    let left: Vec<VertexId> = side.iter().map(|&i| alive[i]).collect();
    let mut in_left = vec![false; alive.len()];
    for &i in &side {
        in_left[i] = true;
    }
    let right: Vec<VertexId> = (0..alive.len()).filter(|&i| !in_left[i]).map(|i| alive[i]).collect();
    decompose_rec(h, &left, d_min, r_diam, out);
    decompose_rec(h, &right, d_min, r_diam, out);
}

/// Smaller-volume side of the minimum-conductance prefix of the Fiedler order
/// of the normalized Laplacian. Requires a connected graph on ≥ 2 vertices.
pub fn fiedler_sweep_cut(g: &Graph) -> Vec<VertexId> {
    let n = g.n();
    let deg: Vec<f64> = (0..n).map(|v| g.degree(v) as f64).collect();
    let l = laplacian(&g.to_weighted());
    let dinv = DVector::from_iterator(n, deg.iter().map(|d| 1.0 / d.sqrt()));
    let norm = DMatrix::from_fn(n, n, |i, j| l[(i, j)] * dinv[i] * dinv[j]);
    let eig = SymmetricEigen::new(norm);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let fiedler = eig.eigenvectors.column(idx[1]);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| (fiedler[a] * dinv[a]).total_cmp(&(fiedler[b] * dinv[b])).then(a.cmp(&b)));

    let adj = g.adjacency();
    let total: f64 = deg.iter().sum();
    let mut in_set = vec![false; n];
    let (mut vol, mut cut) = (0.0, 0i64);
    let (mut best, mut best_k) = (f64::INFINITY, 1);
    for (k, &v) in order.iter().enumerate().take(n - 1) {
        in_set[v] = true;
        vol += deg[v];
        for &w in &adj[v] {
            cut += if in_set[w] { -1 } else { 1 };
        }
        let phi = cut as f64 / vol.min(total - vol);
        if phi < best {
            best = phi;
            best_k = k + 1;
        }
    }
    let prefix: Vec<usize> = order[..best_k].to_vec();
    let pvol: f64 = prefix.iter().map(|&v| deg[v]).sum();
    if pvol <= total - pvol {
        prefix
    } else {
        order[best_k..].to_vec()
    }
}
