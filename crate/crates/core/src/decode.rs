//! Recursion tree, ball carving, heavy-edge recovery and the recursive
//! sparsification pipelines.
//!
//! Three decoders share one parameter block:
//!
//! * `BallCarve` walks the full recursion tree; heavy edges come from peeling,
//!   low-connectivity recovery and grouped heavy-hitter queries over ball-carved
//!   vertex sets.
//! * `Brute` walks the same tree but queries every vertex pair.
//! * `N32` uses a flat list of independently subsampled levels and recovers
//!   heavy edges by peeling and low-connectivity recovery only.

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::exact_oracles::{heavy_edges_brute_force, OracleError};
use crate::graph_core::{EdgeKey, VertexId, WeightedGraph};
use crate::prg::Seed;
use crate::resistance::{build_embedding_on, contract, default_qjl, ResistanceEmbedding, SddOperator, SolveError};
use crate::sketches::{
    BlockKind, BlockSpec, ForestShape, HeavyHitterSketch, NodeSketch, SketchConfig, SketchError, SketchStack,
    SpanningForestSketch,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("at {path}: {source}")]
    Node { path: String, source: Box<DecodeError> },
}

impl From<OracleError> for DecodeError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Solve(s) => DecodeError::Solve(s),
            other => DecodeError::Sketch(SketchError::DecodeFailure(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Brute,
    N32,
    BallCarve,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "brute" => Ok(Variant::Brute),
            "n32" => Ok(Variant::N32),
            "ballcarve" => Ok(Variant::BallCarve),
            other => Err(format!("unknown variant `{other}` (expected brute, n32 or ballcarve)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Brute => "brute",
            Variant::N32 => "n32",
            Variant::BallCarve => "ballcarve",
        })
    }
}

/// Heavy-hitter threshold floor: below this the bucket count `16/η²` is
/// impractical at any size we run.
pub const ETA_FLOOR: f64 = 0.1;
pub const HH_ROWS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalParams {
    pub n: usize,
    pub eps: f64,
    pub variant: Variant,
    /// Γ, the base of the sampling and regularization schedules.
    pub gamma: f64,
    pub delta: f64,
    pub lambda_u: f64,
    pub lambda_l: f64,
    /// Λ = ⌈log_Γ(λ_u/λ_ℓ)⌉.
    pub big_lambda: u32,
    pub c_prime: f64,
    /// Peeling threshold `d`.
    pub d: f64,
    /// Connectivity threshold for low-connectivity recovery.
    pub flce_lambda: f64,
    pub beta: f64,
    pub qjl: usize,
    pub flce_factor: f64,
    pub flce_max_reps: Option<usize>,
}

fn log2n(n: usize) -> f64 {
    (n.max(2) as f64).log2()
}

/// Smallest `L ≥ 1` with `Γ^L ≥ ratio`.
pub fn levels_for(gamma: f64, ratio: f64) -> u32 {
    assert!(gamma > 1.0);
    let mut l = 1u32;
    let mut p = gamma;
    while p < ratio * (1.0 - 1e-12) {
        p *= gamma;
        l += 1;
    }
    l
}

impl GlobalParams {
    /// Defaults per variant; `gamma` overrides Γ.
    pub fn new(n: usize, eps: f64, variant: Variant, gamma: Option<f64>) -> Self {
        assert!(n >= 2, "need at least two vertices");
        assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
        let nf = n as f64;
        let lambda_u = 2.0 * nf;
        let lambda_l = 8.0 / (nf * nf);
        let ratio = lambda_u / lambda_l;
        let gamma = gamma.unwrap_or(match variant {
            Variant::N32 => 2.0,
            // n^δ with δ = 1/log log n, raised until one level covers the whole range.
            _ => {
                let lg = log2n(n);
                let delta = 1.0 / lg.log2().max(1.0);
                nf.powf(delta).max(ratio).max(2.0)
            }
        });
        assert!(gamma > 1.0, "Γ must exceed 1");
        let big_lambda = levels_for(gamma, ratio);
        let lg = log2n(n);
        let c_prime = 1.0;
        let (beta, d, flce_lambda) = match variant {
            Variant::N32 => {
                let beta = eps * eps / (500.0 * gamma.powi(3) * c_prime);
                let d = (nf.sqrt() * lg * lg / beta).min(nf);
                (beta, d, (200.0 * nf.sqrt()).min(nf / 4.0).max(1.0))
            }
            _ => {
                let beta = 1.0 / (500.0 * c_prime * gamma.powi(3) * lg / (eps * eps));
                let d = (nf.powf(0.4) * lg * lg).min(nf / 4.0).max(1.0);
                (beta, d, d)
            }
        };
        GlobalParams {
            n,
            eps,
            variant,
            gamma,
            delta: gamma.ln() / nf.ln(),
            lambda_u,
            lambda_l,
            big_lambda,
            c_prime,
            d,
            flce_lambda,
            beta,
            qjl: default_qjl(n),
            flce_factor: 200.0,
            flce_max_reps: Some(16),
        }
    }

    pub fn with_d(mut self, d: f64) -> Self {
        assert!(d > 0.0);
        let follows = self.variant != Variant::N32 && self.flce_lambda == self.d;
        self.d = d;
        if follows {
            self.flce_lambda = d;
        }
        self
    }

    pub fn with_flce_lambda(mut self, l: f64) -> Self {
        assert!(l > 0.0);
        self.flce_lambda = l;
        self
    }

    pub fn with_beta(mut self, b: f64) -> Self {
        assert!(b > 0.0);
        self.beta = b;
        self
    }

    pub fn with_qjl(mut self, q: usize) -> Self {
        assert!(q > 0);
        self.qjl = q;
        self
    }

    pub fn with_c_prime(mut self, c: f64) -> Self {
        assert!(c > 0.0);
        self.c_prime = c;
        self
    }

    pub fn with_flce_reps(mut self, factor: f64, max_reps: Option<usize>) -> Self {
        self.flce_factor = factor;
        self.flce_max_reps = max_reps;
        self
    }

    pub fn log_n(&self) -> f64 {
        log2n(self.n)
    }

    /// `γ(ℓ) = λ_u/Γ^ℓ`, or 0 on the top level of a tree branch.
    pub fn gamma_at(&self, i: u32, l: u32) -> f64 {
        if l as i64 - i as i64 == self.big_lambda as i64 + 1 {
            0.0
        } else {
            self.lambda_u / self.gamma.powi(l as i32)
        }
    }

    /// Quality factor of the coarse sparsifier at regularization level `ℓ`.
    pub fn coarse_quality(&self, l: u32) -> f64 {
        if l == 0 {
            self.gamma
        } else {
            self.gamma * (1.0 + self.eps) / (1.0 - self.eps)
        }
    }

    /// `½√(β/(3C))` with the worst `C`, floored.
    pub fn hh_eta(&self) -> f64 {
        let c = self.coarse_quality(1);
        (0.5 * (self.beta / (3.0 * c)).sqrt()).max(ETA_FLOOR)
    }

    pub fn flce_reps(&self) -> usize {
        let want = (self.flce_factor * self.flce_lambda * self.log_n()).ceil().max(1.0) as usize;
        self.flce_max_reps.map_or(want, |m| want.min(m))
    }

    pub fn sketch_config(&self) -> SketchConfig {
        let cap = self.d.ceil().max(1.0) as usize;
        match self.variant {
            Variant::Brute => SketchConfig {
                n: self.n,
                recovery_capacity: None,
                forest: false,
                flce: None,
                heavy_hitters: Some((self.hh_eta(), HH_ROWS)),
            },
            Variant::BallCarve => SketchConfig {
                n: self.n,
                recovery_capacity: Some(cap),
                forest: true,
                flce: Some((self.flce_lambda, self.flce_reps())),
                heavy_hitters: Some((self.hh_eta(), HH_ROWS)),
            },
            Variant::N32 => SketchConfig {
                n: self.n,
                recovery_capacity: Some(cap),
                forest: false,
                flce: Some((self.flce_lambda, self.flce_reps())),
                heavy_hitters: None,
            },
        }
    }
}

/// `[γ(0), …, γ(Λ)]`.
pub fn gamma_schedule(params: &GlobalParams) -> Vec<f64> {
    (0..=params.big_lambda).map(|l| params.lambda_u / params.gamma.powi(l as i32)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Label {
    pub kind: BlockKind,
    pub i: u32,
    pub l: u32,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let k = match self.kind {
            BlockKind::Sparsify => "Sp",
            BlockKind::HeavyEdges => "HE",
            BlockKind::Level => "Lv",
        };
        write!(f, "{k}({},{})", self.i, self.l)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub label: Label,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// The node keeps each parent edge with probability `Γ^{-rate_exponent}`.
    pub rate_exponent: u32,
    pub depth: usize,
}

/// Nodes in preorder; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct RecursionTree {
    pub nodes: Vec<TreeNode>,
    pub big_lambda: u32,
}

pub fn build_tree(params: &GlobalParams) -> RecursionTree {
    let lam = params.big_lambda;
    let mut nodes = Vec::new();
    fn push(nodes: &mut Vec<TreeNode>, label: Label, parent: Option<usize>, rate_exponent: u32, lam: u32) -> usize {
        let depth = parent.map_or(0, |p| nodes[p].depth + 1);
        let id = nodes.len();
        nodes.push(TreeNode { label, parent, children: Vec::new(), rate_exponent, depth });
        if let Some(p) = parent {
            nodes[p].children.push(id);
        }
        match label.kind {
            BlockKind::Sparsify => {
                for q in 1..=(lam - label.i + 1) {
                    let child = Label { kind: BlockKind::HeavyEdges, i: label.i + q - 1, l: label.l + q - 1 };
                    push(nodes, child, Some(id), q - 1, lam);
                }
                if label.l > 0 {
                    push(nodes, Label { kind: BlockKind::Sparsify, i: label.i, l: label.l - 1 }, Some(id), 0, lam);
                }
            }
            BlockKind::HeavyEdges => {
                if label.l > 0 {
                    push(nodes, Label { kind: BlockKind::Sparsify, i: label.i, l: label.l - 1 }, Some(id), 0, lam);
                }
            }
            BlockKind::Level => unreachable!("levels are not tree nodes"),
        }
        id
    }
    push(&mut nodes, Label { kind: BlockKind::Sparsify, i: 0, l: lam + 1 }, None, 0, lam);
    RecursionTree { nodes, big_lambda: lam }
}

impl RecursionTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn specs(&self) -> Vec<BlockSpec> {
        self.nodes
            .iter()
            .map(|n| BlockSpec {
                kind: n.label.kind,
                i: n.label.i,
                l: n.label.l,
                parent: n.parent,
                rate_exponent: n.rate_exponent,
                sketched: n.label.kind == BlockKind::HeavyEdges,
            })
            .collect()
    }
}

/// One block per level `j = 0..=Λ`, each an independent `Γ^{-j}` sample.
pub fn level_specs(params: &GlobalParams) -> Vec<BlockSpec> {
    (0..=params.big_lambda)
        .map(|j| BlockSpec { kind: BlockKind::Level, i: j, l: 0, parent: None, rate_exponent: j, sketched: true })
        .collect()
}

/// Empty sketches for the variant's layout.
pub fn new_stack(params: &GlobalParams, seed: Seed) -> SketchStack {
    let specs = match params.variant {
        Variant::N32 => level_specs(params),
        _ => build_tree(params).specs(),
    };
    SketchStack::new(specs, params.gamma, seed, &params.sketch_config())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Partitioning {
    pub parts: Vec<Vec<VertexId>>,
    pub centers: Vec<VertexId>,
    /// Vertices never carved; not part of the result proper.
    pub leftover: Vec<VertexId>,
}

impl Partitioning {
    pub fn non_singleton(&self) -> usize {
        self.parts.iter().filter(|p| p.len() > 1).count()
    }
}

/// Greedy ball carving in the embedded resistance metric over the components
/// of `G − E′`. Centers are visited in ascending vertex order.
pub fn ball_carving(
    forest: &SpanningForestSketch,
    e_prime: &[EdgeKey],
    r: f64,
    m: &ResistanceEmbedding,
) -> Result<Partitioning, SketchError> {
    let n = forest.n();
    let mut work = forest.clone();
    work.subtract(e_prime);
    let f = work.spanning_forest()?;
    let comp = crate::graph_core::components_of(n, f.into_iter());
    let mut members: BTreeMap<usize, Vec<VertexId>> = BTreeMap::new();
    for v in 0..n {
        members.entry(comp[v]).or_default().push(v);
    }
    let mut active = vec![true; n];
    let mut remaining = vec![true; n];
    let mut out = Partitioning::default();
    for u in 0..n {
        if !active[u] {
            continue;
        }
        let c_star = &members[&comp[u]];
        let spread = 1.25 * c_star.iter().map(|&v| m.distance_sq(u, v)).fold(0.0, f64::max);
        if spread <= r / 2.0 {
            for &v in c_star {
                active[v] = false;
            }
            continue;
        }
        let mut part = vec![u];
        for v in 0..n {
            if v != u && remaining[v] && m.distance_sq(u, v) <= r {
                part.push(v);
            }
        }
        for &v in &part {
            active[v] = false;
            remaining[v] = false;
        }
        out.centers.push(u);
        out.parts.push(part);
    }
    out.leftover = (0..n).filter(|&v| remaining[v]).collect();
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DecodeStats {
    pub heavy_edge_calls: usize,
    pub peeled_edges: usize,
    pub low_connectivity_edges: usize,
    pub partitions: usize,
    pub non_singleton_partitions: usize,
    pub pair_decodes: usize,
    pub embeddings: usize,
}

#[derive(Clone, Debug)]
pub struct DecodeOutput {
    pub sparsifier: WeightedGraph,
    pub stats: DecodeStats,
}

const JL_TAG: u64 = 0x4a4c;
const BC_TAG: u64 = 0x4243;

/// Stateful decoder over a private copy of the sketches.
pub struct Decoder<'p> {
    params: &'p GlobalParams,
    stack: SketchStack,
    seed: Seed,
    sparsify_cache: FxHashMap<usize, WeightedGraph>,
    heavy_cache: FxHashMap<usize, Vec<EdgeKey>>,
    pub stats: DecodeStats,
}

impl<'p> Decoder<'p> {
    pub fn new(params: &'p GlobalParams, stack: &SketchStack, seed: Seed) -> Self {
        Decoder {
            params,
            stack: stack.clone(),
            seed,
            sparsify_cache: FxHashMap::default(),
            heavy_cache: FxHashMap::default(),
            stats: DecodeStats::default(),
        }
    }

    fn label(&self, b: usize) -> Label {
        let s = &self.stack.blocks[b].spec;
        Label { kind: s.kind, i: s.i, l: s.l }
    }

    pub fn path(&self, b: usize) -> String {
        let mut parts = Vec::new();
        let mut cur = Some(b);
        while let Some(x) = cur {
            parts.push(self.label(x).to_string());
            cur = self.stack.blocks[x].spec.parent;
        }
        parts.reverse();
        parts.join("/")
    }

    fn at(&self, b: usize, e: impl Into<DecodeError>) -> DecodeError {
        match e.into() {
            already @ DecodeError::Node { .. } => already,
            inner => DecodeError::Node { path: self.path(b), source: Box::new(inner) },
        }
    }

    fn child_with(&self, b: usize, want: Label) -> Option<usize> {
        self.stack.children(b).iter().copied().find(|&c| self.label(c) == want)
    }

    fn sketch(&self, b: usize) -> &NodeSketch {
        self.stack.sketch(b).expect("heavy-edge blocks carry sketches")
    }

    fn coarse_for(&mut self, b: usize) -> Result<(SddOperator, f64), DecodeError> {
        let lab = self.label(b);
        let p = self.params;
        if lab.l == 0 {
            return Ok((SddOperator::from_graph(&WeightedGraph::identity_scaled(p.n, p.lambda_u)), p.gamma));
        }
        let want = Label { kind: BlockKind::Sparsify, i: lab.i, l: lab.l - 1 };
        let child = self.child_with(b, want).expect("tree shape guarantees the Sparsify child");
        let k = self.sparsify(child)?;
        let k = k.scaled(1.0 / (p.gamma * (1.0 + p.eps)));
        Ok((SddOperator::from_graph(&k), p.coarse_quality(lab.l)))
    }

    fn embedding(&mut self, op: &SddOperator, b: usize, tag: u64) -> Result<ResistanceEmbedding, DecodeError> {
        self.stats.embeddings += 1;
        build_embedding_on(op, self.params.qjl, self.seed.derive(&[tag, b as u64])).map_err(|e| self.at(b, e))
    }

    /// Peels every vertex with `0 < deg < d`, smallest degree first, removing
    /// its edges from the whole subtree.
    fn peel(&mut self, b: usize) -> Result<Vec<EdgeKey>, DecodeError> {
        let d = self.params.d;
        let cap = d.ceil().max(1.0) as usize;
        let mut queue: BTreeSet<(i64, VertexId)> = BTreeSet::new();
        let low = |deg: i64| deg > 0 && (deg as f64) < d;
        for (v, &deg) in self.sketch(b).degrees.iter().enumerate() {
            if low(deg) {
                queue.insert((deg, v));
            }
        }
        let mut out = Vec::new();
        while let Some((deg, v)) = queue.pop_first() {
            if self.sketch(b).degrees[v] != deg {
                continue;
            }
            let edges = self.sketch(b).sparse_recover_neighbors(v, cap).map_err(|e| self.at(b, e))?;
            let before: Vec<(VertexId, i64)> =
                edges.iter().map(|e| e.other(v)).map(|x| (x, self.sketch(b).degrees[x])).collect();
            self.stack.subtract_edges(b, &edges).map_err(|e| self.at(b, e))?;
            for (x, old) in before {
                queue.remove(&(old, x));
                let now = self.sketch(b).degrees[x];
                if low(now) {
                    queue.insert((now, x));
                }
            }
            out.extend(edges);
        }
        self.stats.peeled_edges += out.len();
        Ok(out)
    }

    /// Superset of the edges with resistance at least `β` in the block's graph.
    pub fn heavy_edges(&mut self, b: usize, beta: f64) -> Result<Vec<EdgeKey>, DecodeError> {
        if let Some(hit) = self.heavy_cache.get(&b) {
            return Ok(hit.clone());
        }
        self.stats.heavy_edge_calls += 1;
        let out = match self.params.variant {
            Variant::BallCarve => self.heavy_edges_ballcarve(b, beta)?,
            Variant::Brute => self.heavy_edges_brute(b)?,
            Variant::N32 => self.heavy_edges_n32(b)?,
        };
        self.heavy_cache.insert(b, out.clone());
        Ok(out)
    }

    fn heavy_edges_ballcarve(&mut self, b: usize, beta: f64) -> Result<Vec<EdgeKey>, DecodeError> {
        let mut found: BTreeSet<u64> = self.peel(b)?.iter().map(|e| e.linear_index()).collect();
        if self.sketch(b).edge_count() == 0 {
            return Ok(found.into_iter().map(EdgeKey::from_index).collect());
        }
        let (op, _c) = self.coarse_for(b)?;
        let e_star = {
            let bank = self.sketch(b).flce.as_ref().expect("ballcarve blocks carry FLCE");
            bank.find_low_connectivity_edges().map_err(|e| self.at(b, e))?
        };
        self.stats.low_connectivity_edges += e_star.len();
        found.extend(e_star.iter().map(|e| e.linear_index()));
        let m = self.embedding(&op, b, BC_TAG)?;
        let parts = {
            let forest = self.sketch(b).forest.as_ref().expect("ballcarve blocks carry a forest");
            ball_carving(forest, &e_star, beta / 6.0, &m).map_err(|e| self.at(b, e))?
        };
        self.stats.partitions += parts.parts.len();
        self.stats.non_singleton_partitions += parts.non_singleton();
        let hh = self.sketch(b).hh.clone().expect("ballcarve blocks carry heavy hitters");
        let eta = hh.eta;
        let n = self.params.n;
        let mut singleton_cols: Option<Vec<Vec<f64>>> = None;
        for part in &parts.parts {
            let outside: Vec<VertexId> = {
                let mut inside = vec![false; n];
                part.iter().for_each(|&v| inside[v] = true);
                (0..n).filter(|&v| !inside[v]).collect()
            };
            if outside.is_empty() {
                continue;
            }
            if part.len() == 1 {
                if singleton_cols.is_none() {
                    singleton_cols = Some(unit_columns(&op).map_err(|e| self.at(b, e))?);
                }
                let cols = singleton_cols.as_ref().unwrap();
                let dec = hh.pair_decoder(cols);
                for &v in &outside {
                    found.extend(dec.decode_pair(part[0], v, eta).iter().map(|e| e.linear_index()));
                }
            } else {
                let c = contract(&op, part);
                let cols: Vec<Vec<f64>> =
                    unit_columns(&c.op).map_err(|e| self.at(b, e))?.iter().map(|col| c.lift(col)).collect();
                let dec = hh.pair_decoder(&cols);
                for &v in &outside {
                    found.extend(dec.decode_pair(c.supernode, c.map[v], eta).iter().map(|e| e.linear_index()));
                }
            }
            self.stats.pair_decodes += outside.len();
        }
        Ok(found.into_iter().map(EdgeKey::from_index).collect())
    }

    fn heavy_edges_brute(&mut self, b: usize) -> Result<Vec<EdgeKey>, DecodeError> {
        if self.sketch(b).edge_count() == 0 {
            return Ok(Vec::new());
        }
        let (op, _) = self.coarse_for(b)?;
        let coarse = operator_graph(&op);
        let hh: HeavyHitterSketch = self.sketch(b).hh.clone().expect("brute blocks carry heavy hitters");
        let n = self.params.n;
        self.stats.pair_decodes += n * (n - 1) / 2;
        heavy_edges_brute_force(&hh, &coarse, hh.eta).map_err(|e| self.at(b, e))
    }

    fn heavy_edges_n32(&mut self, b: usize) -> Result<Vec<EdgeKey>, DecodeError> {
        let mut found: BTreeSet<u64> = self.peel(b)?.iter().map(|e| e.linear_index()).collect();
        if self.sketch(b).edge_count() > 0 {
            let bank = self.sketch(b).flce.as_ref().expect("level blocks carry FLCE");
            let e_star = bank.find_low_connectivity_edges().map_err(|e| self.at(b, e))?;
            self.stats.low_connectivity_edges += e_star.len();
            found.extend(e_star.iter().map(|e| e.linear_index()));
        }
        Ok(found.into_iter().map(EdgeKey::from_index).collect())
    }

    /// Leverage-score bucketing: weight `Γ^{j−i}` when `p′` lies in `(Γ^{i−j−1}, Γ^{i−j}]`,
    /// or anywhere below `Γ^{i−j}` on the last level.
    fn reweight(&self, w: &mut WeightedGraph, edges: &[EdgeKey], m: &ResistanceEmbedding, i: u32, j: u32) {
        let p = self.params;
        let hi = p.gamma.powi(i as i32 - j as i32);
        let lo = hi / p.gamma;
        let last = j == p.big_lambda;
        for &e in edges {
            let r = 2.0 * m.edge_norm_sq(e);
            let pe = (p.c_prime * r * p.log_n() / (p.eps * p.eps)).min(1.0);
            let hit = if last { pe <= hi } else { pe > lo && pe <= hi };
            if hit {
                w.set_weight(e, p.gamma.powi(j as i32 - i as i32));
            }
        }
    }

    /// `K̃_ε` for a Sparsify node of the recursion tree.
    pub fn sparsify(&mut self, b: usize) -> Result<WeightedGraph, DecodeError> {
        if let Some(hit) = self.sparsify_cache.get(&b) {
            return Ok(hit.clone());
        }
        let lab = self.label(b);
        assert_eq!(lab.kind, BlockKind::Sparsify);
        let p = self.params;
        let gamma = p.gamma_at(lab.i, lab.l);
        let mut heavy = Vec::new();
        for j in lab.i..=p.big_lambda {
            let want = Label { kind: BlockKind::HeavyEdges, i: j, l: lab.l + j - lab.i };
            // Missing children are skipped rather than synthesized.
            let Some(child) = self.child_with(b, want) else { continue };
            heavy.push((j, self.heavy_edges(child, p.beta)?));
        }
        let mut out = WeightedGraph::new(p.n).with_gamma(gamma);
        if heavy.iter().any(|(_, e)| !e.is_empty()) {
            let (op, _) = self.coarse_for(b)?;
            let m = self.embedding(&op, b, JL_TAG)?;
            for (j, edges) in &heavy {
                self.reweight(&mut out, edges, &m, lab.i, *j);
            }
        }
        self.sparsify_cache.insert(b, out.clone());
        Ok(out)
    }

    /// Chain over regularization levels `ℓ = 0..=Λ+1` on the flat level layout.
    pub fn sparsify_n32(&mut self) -> Result<WeightedGraph, DecodeError> {
        let p = self.params;
        let lam = p.big_lambda;
        let mut heavy = Vec::new();
        for j in 0..=lam {
            heavy.push(self.heavy_edges(j as usize, p.beta).map_err(|e| self.at(j as usize, e))?);
        }
        let any = heavy.iter().any(|e| !e.is_empty());
        let mut prev = WeightedGraph::identity_scaled(p.n, p.lambda_u);
        let mut first = true;
        for l in 0..=lam + 1 {
            let coarse = if first { prev.clone() } else { prev.scaled(1.0 / (p.gamma * (1.0 + p.eps))) };
            first = false;
            let gamma = if l == lam + 1 { 0.0 } else { p.lambda_u / p.gamma.powi(l as i32) };
            let mut out = WeightedGraph::new(p.n).with_gamma(gamma);
            if any {
                let op = SddOperator::from_graph(&coarse);
                self.stats.embeddings += 1;
                let m = build_embedding_on(&op, p.qjl, self.seed.derive(&[JL_TAG, 1 << 20, l as u64]))?;
                for (j, edges) in heavy.iter().enumerate() {
                    self.reweight(&mut out, edges, &m, 0, j as u32);
                }
            }
            prev = out;
        }
        Ok(prev)
    }

    pub fn run(mut self) -> Result<DecodeOutput, DecodeError> {
        let sparsifier = match self.params.variant {
            Variant::N32 => self.sparsify_n32()?,
            _ => self.sparsify(0)?,
        };
        Ok(DecodeOutput { sparsifier, stats: self.stats })
    }
}

/// Columns `K⁺χ_w` for every vertex `w`.
fn unit_columns(op: &SddOperator) -> Result<Vec<Vec<f64>>, SolveError> {
    let n = op.n();
    let mut e = vec![0.0; n];
    let mut out = Vec::with_capacity(n);
    for w in 0..n {
        e[w] = 1.0;
        out.push(op.solve(&e)?);
        e[w] = 0.0;
    }
    Ok(out)
}

/// Rebuilds a uniformly regularized graph from an operator.
fn operator_graph(op: &SddOperator) -> WeightedGraph {
    let gamma = op.extra().first().copied().unwrap_or(0.0);
    debug_assert!(op.extra().iter().all(|&g| g == gamma));
    let mut g = WeightedGraph::new(op.n()).with_gamma(gamma);
    for (e, w) in op.edges() {
        g.set_weight(e, w);
    }
    g
}

/// Decodes a sparsifier from a finished stack.
pub fn decode(params: &GlobalParams, stack: &SketchStack, seed: Seed) -> Result<DecodeOutput, DecodeError> {
    Decoder::new(params, stack, seed).run()
}

/// Forest shape used by every spanning-forest sketch at this size.
pub fn forest_shape(params: &GlobalParams) -> ForestShape {
    ForestShape::for_n(params.n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_oracles::{
        exact_edge_connectivity, is_spectral_sparsifier, loewner_le, relative_eigenvalues, PseudoInverse,
    };
    use crate::graph_core::generators::*;
    use crate::graph_core::{laplacian, Graph};
    use crate::prg::PrgHashSource;
    use crate::resistance::{build_embedding, CoarseSparsifier};
    use crate::sketches::EdgeUpdate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(n: usize, variant: Variant) -> GlobalParams {
        GlobalParams::new(n, 0.5, variant, None).with_qjl(24)
    }

    fn run(g: &Graph, p: &GlobalParams, seed: u64) -> DecodeOutput {
        let s = Seed::from_u64(seed);
        let mut stack = new_stack(p, s.derive(&[0]));
        for e in g.edges() {
            stack.apply_update(EdgeUpdate::insert(e)).unwrap();
        }
        decode(p, &stack, s.derive(&[1])).unwrap()
    }

    #[test]
    fn lambda_arithmetic() {
        let p = GlobalParams::new(16, 0.5, Variant::BallCarve, Some(4.0));
        assert_eq!(p.big_lambda, 5);
        assert_eq!(GlobalParams::new(16, 0.5, Variant::BallCarve, None).big_lambda, 1);
        assert_eq!(GlobalParams::new(64, 0.5, Variant::N32, None).big_lambda, 16);
    }

    #[test]
    fn gamma_schedule_examples() {
        let mut p = GlobalParams::new(4, 0.5, Variant::N32, Some(2.0));
        p.lambda_u = 8.0;
        assert_eq!(&gamma_schedule(&p)[..4], &[8.0, 4.0, 2.0, 1.0]);
        for n in [8, 16, 100, 1000] {
            for g in [2.0, 3.0, 10.0] {
                let p = GlobalParams::new(n, 0.5, Variant::BallCarve, Some(g));
                let s = gamma_schedule(&p);
                assert!(*s.last().unwrap() <= p.lambda_l * (1.0 + 1e-12));
                assert_eq!(s[0], p.lambda_u);
                for w in s.windows(2) {
                    assert!((w[0] / w[1] - g).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn tree_shape() {
        let count = |lam: f64| build_tree(&GlobalParams::new(16, 0.5, Variant::BallCarve, Some(lam))).len();
        assert_eq!(build_tree(&GlobalParams::new(16, 0.5, Variant::BallCarve, None)).len(), 55);
        // Γ = 1024 covers 16³/4 = 1024 in one level; Γ = 32 needs two.
        assert_eq!(count(32.0), 655);
        for g in [4.0, 8.0, 32.0, 1024.0] {
            let p = GlobalParams::new(16, 0.5, Variant::BallCarve, Some(g));
            let t = build_tree(&p);
            let lam = p.big_lambda as usize;
            // Sparsify labels strictly increase `i − ℓ` along a path, which bounds
            // the Sparsify nodes per path; HeavyEdges nodes interleave with them.
            for (id, node) in t.nodes.iter().enumerate() {
                let mut sp = 0;
                let mut cur = Some(id);
                while let Some(a) = cur {
                    sp += (t.nodes[a].label.kind == BlockKind::Sparsify) as usize;
                    cur = t.nodes[a].parent;
                }
                assert!(sp <= 2 * (lam + 1), "{sp} Sparsify ancestors at node {id}");
                let _ = node;
            }
            assert!(t.depth() <= 4 * (lam + 1));
            assert!((t.len() as f64) <= ((lam + 2) as f64).powi(2 * (lam as i32 + 2)));
            for (id, node) in t.nodes.iter().enumerate() {
                if node.children.is_empty() {
                    assert_eq!(node.label.kind, BlockKind::HeavyEdges);
                    assert_eq!(node.label.l, 0);
                }
                assert!(node.children.len() <= lam + 2);
                if node.label.kind != BlockKind::Sparsify {
                    continue;
                }
                let mut cur = node.parent;
                while let Some(a) = cur {
                    let al = t.nodes[a].label;
                    if al.kind == BlockKind::Sparsify {
                        let lhs = al.i as i64 - al.l as i64;
                        let rhs = node.label.i as i64 - node.label.l as i64 - 1;
                        assert!(lhs <= rhs, "ancestor {al} of {} at {id}", node.label);
                    }
                    cur = t.nodes[a].parent;
                }
            }
        }
    }

    #[test]
    fn chain_sandwich_items() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..20u64 {
            let n = rng.random_range(4..=40);
            let g = gnp(n, 0.3, trial).to_weighted();
            let p = GlobalParams::new(n, 0.5, Variant::N32, Some(2.0));
            let k = laplacian(&g);
            let id = nalgebra::DMatrix::<f64>::identity(n, n);
            let gs = gamma_schedule(&p);
            let kl = |l: usize| &k + &id * gs[l];
            // K ⪯_r K(Λ) ⪯_r Γ K on range(K).
            let top = relative_eigenvalues(&kl(gs.len() - 1), &k);
            assert!(top.iter().all(|&x| x >= 1.0 - 1e-8 && x <= p.gamma + 1e-8), "{top:?}");
            for l in 1..gs.len() {
                assert!(loewner_le(&kl(l), &kl(l - 1), 1.0, 1e-8));
                assert!(loewner_le(&kl(l - 1), &kl(l), p.gamma, 1e-8));
            }
            let base = &id * (p.gamma * gs[0]);
            assert!(loewner_le(&kl(0), &base, 1.0, 1e-8));
            assert!(loewner_le(&base, &kl(0), p.gamma, 1e-8));
        }
    }

    fn forest_of(g: &Graph, seed: u64) -> SpanningForestSketch {
        let shape = ForestShape::for_n(g.n());
        let mut f = SpanningForestSketch::new(g.n(), shape, &mut PrgHashSource::new(Seed::from_u64(seed), 64));
        for e in g.edges() {
            f.update(e, 1);
        }
        f
    }

    fn exact_embedding(g: &WeightedGraph, seed: u64) -> ResistanceEmbedding {
        build_embedding(&CoarseSparsifier::new(g.clone(), 1.0), 400 * 6, Seed::from_u64(seed)).unwrap()
    }

    fn max_diameter(pinv: &PseudoInverse, part: &[VertexId]) -> f64 {
        let mut d: f64 = 0.0;
        for &a in part {
            for &b in part {
                d = d.max(pinv.resistance(a, b).finite().unwrap_or(f64::INFINITY));
            }
        }
        d
    }

    #[test]
    fn ball_carving_two_cliques() {
        let mut g = cliques(&[12, 12]);
        let bridge = EdgeKey::ordered(11, 12);
        g.insert(bridge).unwrap();
        let k = g.to_weighted();
        let pinv = PseudoInverse::new(&k);
        let m = exact_embedding(&k, 1);
        let parts = ball_carving(&forest_of(&g, 2), &[bridge], 0.5, &m).unwrap();
        assert!(parts.non_singleton() <= 2);
        for p in &parts.parts {
            assert!(max_diameter(&pinv, p) <= 1.0);
        }
    }

    #[test]
    fn ball_carving_trivial_cases() {
        let g = complete(10);
        let k = g.to_weighted();
        let m = exact_embedding(&k, 3);
        let parts = ball_carving(&forest_of(&g, 4), &[], 5.0, &m).unwrap();
        assert!(parts.parts.len() <= 1);
        let empty = Graph::new(6);
        let m = exact_embedding(&WeightedGraph::identity_scaled(6, 1.0), 5);
        assert!(ball_carving(&forest_of(&empty, 6), &[], 0.5, &m).unwrap().parts.is_empty());
    }

    #[test]
    fn peeling_empties_a_star() {
        let g = star(6);
        let p = params(7, Variant::BallCarve).with_d(7.0);
        let s = Seed::from_u64(3);
        let mut stack = new_stack(&p, s);
        for e in g.edges() {
            stack.apply_update(EdgeUpdate::insert(e)).unwrap();
        }
        let mut dec = Decoder::new(&p, &stack, s);
        let he = dec.stack.children(0)[0];
        let out = dec.heavy_edges(he, p.beta).unwrap();
        assert_eq!(out, g.edges().collect::<Vec<_>>());
        assert_eq!(dec.sketch(he).edge_count(), 0);
    }

    #[test]
    fn heavy_edges_finds_bridge() {
        let g = dumbbell(15);
        let bridge = EdgeKey::ordered(14, 15);
        let p = params(30, Variant::BallCarve).with_beta(0.5);
        let s = Seed::from_u64(4);
        let mut stack = new_stack(&p, s);
        for e in g.edges() {
            stack.apply_update(EdgeUpdate::insert(e)).unwrap();
        }
        let mut dec = Decoder::new(&p, &stack, s);
        let he = dec.stack.children(0)[0];
        let out = dec.heavy_edges(he, 0.5).unwrap();
        assert!(out.contains(&bridge));
        assert!(out.iter().all(|e| g.contains(*e)));
    }

    #[test]
    fn heavy_edges_on_clique_is_well_formed() {
        let g = complete(12);
        let p = params(12, Variant::BallCarve).with_beta(0.9);
        let out = {
            let s = Seed::from_u64(5);
            let mut stack = new_stack(&p, s);
            for e in g.edges() {
                stack.apply_update(EdgeUpdate::insert(e)).unwrap();
            }
            let mut dec = Decoder::new(&p, &stack, s);
            let he = dec.stack.children(0)[0];
            dec.heavy_edges(he, 0.9).unwrap()
        };
        assert!(out.iter().all(|e| g.contains(*e)));
        assert!(out.windows(2).all(|w| w[0].linear_index() < w[1].linear_index()));
    }

    #[test]
    fn empty_graph_gives_zero_laplacian() {
        for v in [Variant::Brute, Variant::BallCarve, Variant::N32] {
            let out = run(&Graph::new(8), &params(8, v), 1);
            assert_eq!(out.sparsifier.edge_count(), 0);
            assert_eq!(out.sparsifier.gamma(), 0.0);
        }
    }

    #[test]
    fn sparsify_node_with_gamma_on_empty_graph_is_gamma_identity() {
        let p = params(8, Variant::BallCarve);
        let stack = new_stack(&p, Seed::from_u64(2));
        let mut dec = Decoder::new(&p, &stack, Seed::from_u64(2));
        let t = build_tree(&p);
        let sp = t.nodes.iter().position(|n| n.label.kind == BlockKind::Sparsify && n.label.l == 1).unwrap();
        let out = dec.sparsify(sp).unwrap();
        assert_eq!(out.edge_count(), 0);
        assert_eq!(out.gamma(), p.lambda_u / p.gamma);
    }

    fn weights_are_gamma_powers(out: &WeightedGraph, gamma: f64) -> bool {
        out.edges().iter().all(|(_, w)| {
            let k = w.ln() / gamma.ln();
            (k - k.round()).abs() < 1e-9 && k.round() >= 0.0
        })
    }

    #[test]
    fn sparsify_variants_on_k16() {
        let g = complete(16);
        let gw = g.to_weighted();
        for v in [Variant::BallCarve, Variant::Brute, Variant::N32] {
            let mut ok = 0;
            for seed in 0..5 {
                let p = params(16, v);
                let out = run(&g, &p, seed).sparsifier;
                assert!(weights_are_gamma_powers(&out, p.gamma));
                if is_spectral_sparsifier(&gw, &out, 0.5).unwrap() {
                    ok += 1;
                }
            }
            assert!(ok >= 5, "{v}: {ok}/5");
        }
    }

    #[test]
    fn n32_on_path_is_exact() {
        let g = path(50);
        let out = run(&g, &params(50, Variant::N32), 7).sparsifier;
        assert_eq!(out, g.to_weighted());
    }

    #[test]
    fn n32_base_level_sandwich() {
        for n in [5usize, 12, 30] {
            let g = gnp(n, 0.5, n as u64).to_weighted();
            let p = params(n, Variant::N32);
            let k0 = laplacian(&g.clone().with_gamma(p.lambda_u));
            let base = nalgebra::DMatrix::<f64>::identity(n, n) * p.lambda_u;
            assert!(loewner_le(&k0, &base, p.gamma, 1e-8));
            assert!(loewner_le(&base, &k0, 1.0, 1e-8));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let g = gnp_connected(24, 0.3, 2);
        for v in [Variant::BallCarve, Variant::Brute, Variant::N32] {
            let p = params(24, v);
            assert_eq!(run(&g, &p, 11).sparsifier, run(&g, &p, 11).sparsifier);
        }
    }

    #[test]
    fn low_connectivity_cut_property_after_removal() {
        // After removing every edge of connectivity ≤ d, each cut separating two
        // vertices of a surviving component has more than d edges.
        for seed in 0..6u64 {
            let n = 10 + (seed as usize % 5);
            let g = gnp(n, 0.45, seed);
            let d = 2usize;
            let mut h = g.clone();
            for e in g.edges() {
                if exact_edge_connectivity(&g, e).unwrap() <= d {
                    h.remove(e).unwrap();
                }
            }
            let comp = h.components();
            for mask in 1u32..(1 << n) - 1 {
                let cut = g.edges().filter(|e| ((mask >> e.u) & 1) != ((mask >> e.v) & 1)).count();
                let splits = (0..n).any(|a| {
                    (0..n).any(|b| comp[a] == comp[b] && ((mask >> a) & 1) == 1 && ((mask >> b) & 1) == 0)
                });
                if splits {
                    assert!(cut > d, "seed {seed} mask {mask:b}");
                }
            }
        }
    }
}
