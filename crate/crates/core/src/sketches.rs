//! Linear sketches of the edge-indicator vector.
//!
//! Each recursion-tree block owns a bundle of sketches of `S·B`, where `B` is
//! the incidence matrix of the block's sampled edge set. Every structure is a
//! linear map with integer (wrapping) arithmetic, so the final state depends
//! only on the multiset of updates and never on their order.
//!
//! Per-vertex cell blocks are allocated on first touch. The checkpoint always
//! writes every array densely, and that byte count is the reported sketch size.

use std::io::{self, Write};

use petgraph::unionfind::UnionFind;
use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::graph_core::{incidence_sign, pair_count, EdgeKey, VertexId};
use crate::prg::{bernoulli_threshold, HashFamily, HashKind, PrgHashSource, Seed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("stream violation: {0}")]
    StreamViolation(String),
    #[error("decode failure: {0}")]
    DecodeFailure(String),
    #[error("vertex {vertex} has degree {degree} > capacity {capacity}")]
    CapacityExceeded { vertex: VertexId, degree: i64, capacity: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeUpdate {
    pub e: EdgeKey,
    pub delta: i32,
}

impl EdgeUpdate {
    pub fn insert(e: EdgeKey) -> Self {
        EdgeUpdate { e, delta: 1 }
    }

    pub fn delete(e: EdgeKey) -> Self {
        EdgeUpdate { e, delta: -1 }
    }
}

/// One-sparse tester cell: `(Σ x_i, Σ x_i·i, Σ x_i·fp(i))`, all wrapping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Cell {
    pub count: i32,
    pub idx_sum: u32,
    pub fp_sum: u64,
}

pub const CELL_BYTES: usize = 16;

impl Cell {
    #[inline]
    fn add(&mut self, delta: i32, idx: u64, fp: u64) {
        self.count = self.count.wrapping_add(delta);
        self.idx_sum = self.idx_sum.wrapping_add((delta as u32).wrapping_mul(idx as u32));
        self.fp_sum = self.fp_sum.wrapping_add((delta as i64 as u64).wrapping_mul(fp));
    }

    #[inline]
    fn merge(&mut self, o: &Cell) {
        self.count = self.count.wrapping_add(o.count);
        self.idx_sum = self.idx_sum.wrapping_add(o.idx_sum);
        self.fp_sum = self.fp_sum.wrapping_add(o.fp_sum);
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.count == 0 && self.idx_sum == 0 && self.fp_sum == 0
    }

    /// `(index, value)` if the cell holds exactly one ±1 coordinate.
    #[inline]
    fn pure(&self, fp: &HashFamily, dim: u64) -> Option<(u64, i32)> {
        let sign = match self.count {
            1 => 1i32,
            -1 => -1,
            _ => return None,
        };
        let idx = (sign as u32).wrapping_mul(self.idx_sum) as u64;
        if idx >= dim {
            return None;
        }
        let expect = (sign as i64 as u64).wrapping_mul(fp.eval(idx));
        (expect == self.fp_sum).then_some((idx, sign))
    }

    fn write(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&self.count.to_le_bytes())?;
        w.write_all(&self.idx_sum.to_le_bytes())?;
        w.write_all(&self.fp_sum.to_le_bytes())
    }
}

/// Per-vertex arrays of `width` cells, allocated on first touch.
#[derive(Clone, Debug)]
struct VertexCells {
    width: usize,
    rows: Vec<Vec<Cell>>,
}

impl VertexCells {
    fn new(n: usize, width: usize) -> Self {
        VertexCells { width, rows: vec![Vec::new(); n] }
    }

    #[inline]
    fn row_mut(&mut self, v: VertexId) -> &mut [Cell] {
        if self.rows[v].is_empty() {
            self.rows[v] = vec![Cell::default(); self.width];
        }
        &mut self.rows[v]
    }

    #[inline]
    fn row(&self, v: VertexId) -> Option<&[Cell]> {
        let r = &self.rows[v];
        (!r.is_empty()).then_some(r.as_slice())
    }

    fn dense_bytes(&self) -> usize {
        self.rows.len() * self.width * CELL_BYTES
    }

    fn absorb(&mut self, o: &VertexCells) {
        for (v, row) in o.rows.iter().enumerate() {
            if !row.is_empty() {
                for (a, c) in self.row_mut(v).iter_mut().zip(row) {
                    a.merge(c);
                }
            }
        }
    }

    /// Cell-for-cell equality with unallocated rows read as zero.
    fn same_state(&self, o: &VertexCells) -> bool {
        let zero = Cell::default();
        self.width == o.width
            && self.rows.len() == o.rows.len()
            && self.rows.iter().zip(&o.rows).all(|(a, b)| match (a.is_empty(), b.is_empty()) {
                (true, true) => true,
                (false, true) => a.iter().all(|c| *c == zero),
                (true, false) => b.iter().all(|c| *c == zero),
                (false, false) => a == b,
            })
    }

    fn write(&self, w: &mut impl Write) -> io::Result<()> {
        let zero = vec![Cell::default(); self.width];
        for r in &self.rows {
            let r = if r.is_empty() { &zero } else { r };
            for c in r {
                c.write(w)?;
            }
        }
        Ok(())
    }
}

fn index_dim(n: usize) -> u64 {
    let dim = pair_count(n);
    assert!(dim < u32::MAX as u64, "n too large for 32-bit edge indices");
    dim
}

/// k-sparse recovery of every incidence column `b_v`, as an invertible Bloom
/// lookup table with `SR_TABLES` sub-tables of `2k + 8` cells.
#[derive(Clone, Debug)]
pub struct SparseRecoverySketch {
    capacity: usize,
    sub: usize,
    dim: u64,
    tables: Vec<HashFamily>,
    fp: HashFamily,
    cells: VertexCells,
}

pub const SR_TABLES: usize = 5;

impl SparseRecoverySketch {
    /// Limited-independence hashes drawn directly from the seed, never from the generator chain.
    pub fn new(n: usize, capacity: usize, seed: Seed) -> Self {
        let mut rng = seed.rng();
        let k = log_wise(n);
        let tables = (0..SR_TABLES).map(|_| HashFamily::random(HashKind::KWise(k), &mut rng)).collect();
        let fp = HashFamily::random(HashKind::KWise(k), &mut rng);
        let sub = 2 * capacity + 8;
        SparseRecoverySketch {
            capacity,
            sub,
            dim: index_dim(n),
            tables,
            fp,
            cells: VertexCells::new(n, SR_TABLES * sub),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn update(&mut self, e: EdgeKey, delta: i32) {
        let idx = e.linear_index();
        let fp = self.fp.eval(idx);
        let slots: Vec<usize> = self.tables.iter().enumerate().map(|(t, h)| t * self.sub + h.bucket(idx, self.sub)).collect();
        for x in [e.u, e.v] {
            let d = delta * incidence_sign(e, x);
            let row = self.cells.row_mut(x);
            for &s in &slots {
                row[s].add(d, idx, fp);
            }
        }
    }

    /// Peels the vertex's table; errors unless it empties completely.
    pub fn recover(&self, v: VertexId) -> Result<Vec<EdgeKey>, SketchError> {
        let Some(row) = self.cells.row(v) else { return Ok(Vec::new()) };
        let mut cells = row.to_vec();
        let mut out = Vec::new();
        let mut queue: Vec<usize> = (0..cells.len()).collect();
        while let Some(c) = queue.pop() {
            let Some((idx, sign)) = cells[c].pure(&self.fp, self.dim) else { continue };
            let e = EdgeKey::from_index(idx);
            if incidence_sign(e, v) != sign {
                return Err(SketchError::DecodeFailure(format!("inconsistent entry {e:?} at vertex {v}")));
            }
            out.push(e);
            let fp = self.fp.eval(idx);
            for (t, h) in self.tables.iter().enumerate() {
                let s = t * self.sub + h.bucket(idx, self.sub);
                cells[s].add(-sign, idx, fp);
                queue.push(s);
            }
        }
        if cells.iter().any(|c| !c.is_zero()) {
            return Err(SketchError::DecodeFailure(format!("sparse recovery did not converge at vertex {v}")));
        }
        out.sort_by_key(|e| e.linear_index());
        Ok(out)
    }

    pub fn dense_bytes(&self) -> usize {
        self.cells.dense_bytes()
    }

    pub fn absorb(&mut self, o: &Self) {
        self.cells.absorb(&o.cells);
    }

    pub fn same_state(&self, o: &Self) -> bool {
        self.cells.same_state(&o.cells)
    }

    fn write(&self, w: &mut impl Write) -> io::Result<()> {
        self.cells.write(w)
    }
}

fn log_wise(n: usize) -> usize {
    (usize::BITS - n.max(2).leading_zeros()).max(4) as usize
}

/// Cell layout for `rounds × samplers` independent ℓ0 samplers per vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForestShape {
    pub rounds: usize,
    pub samplers: usize,
    pub levels: usize,
}

impl ForestShape {
    pub fn for_n(n: usize) -> Self {
        let lg = (usize::BITS - n.max(2).leading_zeros()) as usize;
        let dim_bits = (u64::BITS - pair_count(n).max(2).leading_zeros()) as usize;
        ForestShape { rounds: lg + 3, samplers: 2, levels: dim_bits + 1 }
    }

    fn width(&self) -> usize {
        self.rounds * self.samplers * self.levels
    }

    pub fn families(&self) -> usize {
        self.rounds * self.samplers + 1
    }
}

/// AGM-style spanning-forest sketch: per vertex, geometric-level ℓ0 samplers
/// over the signed incidence column, one bank per Borůvka round.
#[derive(Clone, Debug)]
pub struct SpanningForestSketch {
    n: usize,
    shape: ForestShape,
    dim: u64,
    level_hashes: Vec<HashFamily>,
    fp: HashFamily,
    cells: VertexCells,
}

impl SpanningForestSketch {
    pub fn new(n: usize, shape: ForestShape, source: &mut PrgHashSource) -> Self {
        let level_hashes = (0..shape.rounds * shape.samplers).map(|_| source.next(HashKind::KWise(4))).collect();
        let fp = source.next(HashKind::KWise(4));
        SpanningForestSketch { n, shape, dim: index_dim(n), level_hashes, fp, cells: VertexCells::new(n, shape.width()) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn level_of(&self, bank: usize, idx: u64) -> usize {
        let h = self.level_hashes[bank].eval(idx);
        ((h.leading_zeros() as usize).saturating_sub(3)).min(self.shape.levels - 1)
    }

    pub fn update(&mut self, e: EdgeKey, delta: i32) {
        let idx = e.linear_index();
        let fp = self.fp.eval(idx);
        let levels = self.shape.levels;
        let tops: Vec<usize> = (0..self.level_hashes.len()).map(|b| self.level_of(b, idx)).collect();
        for x in [e.u, e.v] {
            let d = delta * incidence_sign(e, x);
            let row = self.cells.row_mut(x);
            for (bank, &top) in tops.iter().enumerate() {
                for l in 0..=top {
                    row[bank * levels + l].add(d, idx, fp);
                }
            }
        }
    }

    pub fn subtract(&mut self, edges: &[EdgeKey]) {
        for &e in edges {
            self.update(e, -1);
        }
    }

    /// Sums one round's cells over each component; returns `root -> cells`.
    fn component_sums(&self, uf: &mut UnionFind<usize>, round: usize) -> Vec<(usize, Vec<Cell>)> {
        let per_round = self.shape.samplers * self.shape.levels;
        let mut sums: FxHashMap<usize, Vec<Cell>> = FxHashMap::default();
        let mut order = Vec::new();
        for v in 0..self.n {
            let Some(row) = self.cells.row(v) else { continue };
            let root = uf.find(v);
            let acc = sums.entry(root).or_insert_with(|| {
                order.push(root);
                vec![Cell::default(); per_round]
            });
            for (a, c) in acc.iter_mut().zip(&row[round * per_round..(round + 1) * per_round]) {
                a.merge(c);
            }
        }
        order.into_iter().map(|r| (r, sums.remove(&r).unwrap())).collect()
    }

    /// Borůvka over the ℓ0 samplers, one fresh bank per round.
    pub fn spanning_forest(&self) -> Result<Vec<EdgeKey>, SketchError> {
        let mut uf = UnionFind::<usize>::new(self.n);
        let mut forest = Vec::new();
        let levels = self.shape.levels;
        for round in 0..self.shape.rounds {
            let mut merges = Vec::new();
            for (root, cells) in self.component_sums(&mut uf, round) {
                'bank: for t in 0..self.shape.samplers {
                    for l in (0..levels).rev() {
                        let Some((idx, _)) = cells[t * levels + l].pure(&self.fp, self.dim) else { continue };
                        let e = EdgeKey::from_index(idx);
                        if (uf.find(e.u) == root) != (uf.find(e.v) == root) {
                            merges.push(e);
                            break 'bank;
                        }
                    }
                }
            }
            if merges.is_empty() && round > 0 && self.is_settled(&mut uf) {
                break;
            }
            for e in merges {
                if uf.union(e.u, e.v) {
                    forest.push(e);
                }
            }
        }
        if !self.is_settled(&mut uf) {
            return Err(SketchError::DecodeFailure("spanning forest: sampler rounds exhausted".into()));
        }
        forest.sort_by_key(|e| e.linear_index());
        Ok(forest)
    }

    /// True when no component has a boundary edge left, judged on round 0's
    /// level-0 cells, which contain every coordinate.
    fn is_settled(&self, uf: &mut UnionFind<usize>) -> bool {
        let levels = self.shape.levels;
        self.component_sums(uf, 0)
            .iter()
            .all(|(_, cells)| (0..self.shape.samplers).all(|t| cells[t * levels].is_zero()))
    }

    pub fn dense_bytes(&self) -> usize {
        self.cells.dense_bytes()
    }

    pub fn absorb(&mut self, o: &Self) {
        self.cells.absorb(&o.cells);
    }

    pub fn same_state(&self, o: &Self) -> bool {
        self.cells.same_state(&o.cells)
    }

    fn write(&self, w: &mut impl Write) -> io::Result<()> {
        self.cells.write(w)
    }
}

/// Subsampled spanning-forest sketches for low-connectivity edge recovery:
/// repetition `r` keeps each edge with probability `1/(10λ)` under a pairwise hash.
#[derive(Clone, Debug)]
pub struct FlceBank {
    pub lambda: f64,
    samplers: Vec<HashFamily>,
    threshold: u64,
    forests: Vec<SpanningForestSketch>,
}

impl FlceBank {
    pub fn new(n: usize, lambda: f64, reps: usize, shape: ForestShape, source: &mut PrgHashSource) -> Self {
        let mut samplers = Vec::with_capacity(reps);
        let mut forests = Vec::with_capacity(reps);
        for _ in 0..reps {
            samplers.push(source.next(HashKind::Pairwise));
            forests.push(SpanningForestSketch::new(n, shape, source));
        }
        FlceBank { lambda, samplers, threshold: bernoulli_threshold(1.0 / (10.0 * lambda)), forests }
    }

    pub fn families(reps: usize, shape: ForestShape) -> usize {
        reps * (1 + shape.families())
    }

    pub fn reps(&self) -> usize {
        self.forests.len()
    }

    pub fn update(&mut self, e: EdgeKey, delta: i32) {
        let idx = e.linear_index();
        for (h, f) in self.samplers.iter().zip(self.forests.iter_mut()) {
            if h.bernoulli(idx, self.threshold) {
                f.update(e, delta);
            }
        }
    }

    /// Union of the per-repetition spanning forests.
    pub fn find_low_connectivity_edges(&self) -> Result<Vec<EdgeKey>, SketchError> {
        let mut all = std::collections::BTreeSet::new();
        for f in &self.forests {
            for e in f.spanning_forest()? {
                all.insert(e.linear_index());
            }
        }
        Ok(all.into_iter().map(EdgeKey::from_index).collect())
    }

    pub fn dense_bytes(&self) -> usize {
        self.forests.iter().map(|f| f.dense_bytes()).sum()
    }

    pub fn absorb(&mut self, o: &Self) {
        for (a, b) in self.forests.iter_mut().zip(&o.forests) {
            a.absorb(b);
        }
    }

    pub fn same_state(&self, o: &Self) -> bool {
        self.forests.len() == o.forests.len() && self.forests.iter().zip(&o.forests).all(|(a, b)| a.same_state(b))
    }

    fn write(&self, w: &mut impl Write) -> io::Result<()> {
        for f in &self.forests {
            f.write(w)?;
        }
        Ok(())
    }
}

/// Count-sketch of `B`: row `(j, c)` of `S^h·B` is the integer vector
/// `Σ_{e : h_j(e)=c} s_j(e)·b_e`, stored sparsely by vertex.
#[derive(Clone, Debug)]
pub struct HeavyHitterSketch {
    n: usize,
    rows: usize,
    width: usize,
    pub eta: f64,
    buckets: Vec<HashFamily>,
    signs: Vec<HashFamily>,
    entries: Vec<Vec<(u32, i32)>>,
}

/// Maximum candidate pairs examined per heavy bucket.
const HH_CANDIDATE_CAP: usize = 4096;

impl HeavyHitterSketch {
    pub fn new(n: usize, eta: f64, rows: usize, source: &mut PrgHashSource) -> Self {
        let width = Self::width_for(eta);
        let buckets = (0..rows).map(|_| source.next(HashKind::KWise(4))).collect();
        let signs = (0..rows).map(|_| source.next(HashKind::KWise(4))).collect();
        HeavyHitterSketch { n, rows, width, eta, buckets, signs, entries: vec![Vec::new(); rows * width] }
    }

    pub fn width_for(eta: f64) -> usize {
        (16.0 / (eta * eta)).ceil() as usize
    }

    pub fn families(rows: usize) -> usize {
        2 * rows
    }

    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(|r| r.is_empty())
    }

    fn bump(row: &mut Vec<(u32, i32)>, v: u32, d: i32) {
        match row.binary_search_by_key(&v, |p| p.0) {
            Ok(pos) => {
                row[pos].1 += d;
                if row[pos].1 == 0 {
                    row.remove(pos);
                }
            }
            Err(pos) => row.insert(pos, (v, d)),
        }
    }

    pub fn update(&mut self, e: EdgeKey, delta: i32) {
        let idx = e.linear_index();
        for j in 0..self.rows {
            let c = j * self.width + self.buckets[j].bucket(idx, self.width);
            let s = delta * self.signs[j].sign(idx);
            Self::bump(&mut self.entries[c], e.u as u32, s);
            Self::bump(&mut self.entries[c], e.v as u32, -s);
        }
    }

    /// `S^h·(Bφ)` as one value per bucket.
    pub fn project(&self, phi: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|r| r.iter().map(|&(v, a)| a as f64 * phi[v as usize]).sum()).collect()
    }

    fn norm_estimate(&self, y: &[f64]) -> f64 {
        let mut per_row: Vec<f64> = (0..self.rows)
            .map(|j| y[j * self.width..(j + 1) * self.width].iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        per_row.sort_by(f64::total_cmp);
        per_row[self.rows / 2]
    }

    fn estimate(&self, y: &[f64], idx: u64) -> f64 {
        let mut v: Vec<f64> = (0..self.rows)
            .map(|j| self.signs[j].sign(idx) as f64 * y[j * self.width + self.buckets[j].bucket(idx, self.width)])
            .collect();
        v.sort_by(f64::total_cmp);
        v[self.rows / 2]
    }

    /// Whether a majority of rows hold `e`'s endpoints with the signs an
    /// insertion of `e` would leave. Rejects pairs formed by two colliding edges.
    fn supports(&self, e: EdgeKey) -> bool {
        let idx = e.linear_index();
        let coeff = |c: usize, v: usize| {
            let row = &self.entries[c];
            row.binary_search_by_key(&(v as u32), |p| p.0).map_or(0, |i| row[i].1)
        };
        let hits = (0..self.rows)
            .filter(|&j| {
                let c = j * self.width + self.buckets[j].bucket(idx, self.width);
                let s = self.signs[j].sign(idx);
                coeff(c, e.u) * s > 0 && coeff(c, e.v) * s < 0
            })
            .count();
        2 * hits > self.rows
    }

    /// Edges `e` with `|(Bφ)_e| ≳ 2η‖Bφ‖₂`, from bucket values `y` and potentials `φ`.
    fn decode_projected(&self, y: &[f64], eta: f64, phi_diff: impl Fn(usize, usize) -> f64) -> Vec<EdgeKey> {
        let norm = self.norm_estimate(y);
        if norm <= 0.0 || !norm.is_finite() {
            return Vec::new();
        }
        let thresh = eta * norm;
        let mut seen = rustc_hash::FxHashSet::default();
        let mut out = Vec::new();
        for (c, val) in y.iter().enumerate() {
            if val.abs() < thresh {
                continue;
            }
            let row = &self.entries[c];
            let mut tried = 0;
            'pairs: for (i, &(a, za)) in row.iter().enumerate() {
                for &(b, zb) in &row[i + 1..] {
                    if (za > 0) == (zb > 0) {
                        continue;
                    }
                    tried += 1;
                    if tried > HH_CANDIDATE_CAP {
                        break 'pairs;
                    }
                    let e = EdgeKey::ordered(a as usize, b as usize);
                    let idx = e.linear_index();
                    if !seen.insert(idx) {
                        continue;
                    }
                    if !self.supports(e) {
                        continue;
                    }
                    let est = self.estimate(y, idx);
                    let truth = phi_diff(e.u, e.v);
                    if est.abs() >= thresh && (est - truth).abs() <= 0.5 * truth.abs() {
                        out.push(e);
                    }
                }
            }
        }
        out.sort_by_key(|e| e.linear_index());
        out
    }

    /// Heavy coordinates of `Bφ`.
    pub fn heavy_hitter_decode(&self, phi: &[f64], eta: f64) -> Vec<EdgeKey> {
        assert_eq!(phi.len(), self.n);
        if phi.iter().any(|x| !x.is_finite()) {
            return Vec::new();
        }
        let y = self.project(phi);
        self.decode_projected(&y, eta, |u, v| phi[u] - phi[v])
    }

    /// Precomputes `S^h·B·Φ` for a set of potential columns so that the
    /// decode of `Φ_u − Φ_v` costs one pass over the buckets.
    pub fn pair_decoder<'a>(&'a self, columns: &'a [Vec<f64>]) -> PairDecoder<'a> {
        let nb = self.entries.len();
        let k = columns.len();
        let mut z = vec![0.0; k * nb];
        for (c, row) in self.entries.iter().enumerate() {
            for &(v, a) in row {
                for (col, phi) in columns.iter().enumerate() {
                    z[col * nb + c] += a as f64 * phi[v as usize];
                }
            }
        }
        PairDecoder { sketch: self, columns, z, nb }
    }

    pub fn dense_bytes(&self) -> usize {
        self.rows * self.width * self.n * 4
    }

    pub fn absorb(&mut self, o: &Self) {
        for (row, other) in self.entries.iter_mut().zip(&o.entries) {
            for &(v, a) in other {
                Self::bump(row, v, a);
            }
        }
    }

    pub fn same_state(&self, o: &Self) -> bool {
        self.entries == o.entries
    }

    fn write(&self, w: &mut impl Write) -> io::Result<()> {
        let mut dense = vec![0i32; self.n];
        for row in &self.entries {
            dense.iter_mut().for_each(|x| *x = 0);
            for &(v, a) in row {
                dense[v as usize] = a;
            }
            for x in &dense {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Batched decoder over precomputed projections of potential columns.
pub struct PairDecoder<'a> {
    sketch: &'a HeavyHitterSketch,
    columns: &'a [Vec<f64>],
    z: Vec<f64>,
    nb: usize,
}

impl PairDecoder<'_> {
    /// Decode of `φ = Φ_a − Φ_b` for column indices `a`, `b`.
    pub fn decode_pair(&self, a: usize, b: usize, eta: f64) -> Vec<EdgeKey> {
        let za = &self.z[a * self.nb..(a + 1) * self.nb];
        let zb = &self.z[b * self.nb..(b + 1) * self.nb];
        let y: Vec<f64> = za.iter().zip(zb).map(|(x, y)| x - y).collect();
        let (pa, pb) = (&self.columns[a], &self.columns[b]);
        self.sketch.decode_projected(&y, eta, |u, v| (pa[u] - pb[u]) - (pa[v] - pb[v]))
    }
}

/// Which sketches a block carries, and their sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchConfig {
    pub n: usize,
    /// Sparse-recovery capacity `k`; `None` disables peeling sketches.
    pub recovery_capacity: Option<usize>,
    pub forest: bool,
    /// `(λ, repetitions)` for low-connectivity recovery.
    pub flce: Option<(f64, usize)>,
    /// `(η, rows)` for the heavy-hitter sketch.
    pub heavy_hitters: Option<(f64, usize)>,
}

impl SketchConfig {
    fn families(&self) -> usize {
        let shape = ForestShape::for_n(self.n);
        let mut f = 1;
        if self.forest {
            f += shape.families();
        }
        if let Some((_, reps)) = self.flce {
            f += FlceBank::families(reps, shape);
        }
        if let Some((_, rows)) = self.heavy_hitters {
            f += HeavyHitterSketch::families(rows);
        }
        f
    }
}

/// All sketches of one block plus exact degree counters.
#[derive(Clone, Debug)]
pub struct NodeSketch {
    pub degrees: Vec<i64>,
    pub recovery: Option<SparseRecoverySketch>,
    pub forest: Option<SpanningForestSketch>,
    pub flce: Option<FlceBank>,
    pub hh: Option<HeavyHitterSketch>,
}

impl NodeSketch {
    pub fn new(cfg: &SketchConfig, seed: Seed) -> Self {
        let n = cfg.n;
        let shape = ForestShape::for_n(n);
        let mut source = PrgHashSource::new(seed.derive(&[1]), cfg.families());
        let recovery = cfg.recovery_capacity.map(|k| SparseRecoverySketch::new(n, k, seed.derive(&[2])));
        let forest = cfg.forest.then(|| SpanningForestSketch::new(n, shape, &mut source));
        let flce = cfg.flce.map(|(lambda, reps)| FlceBank::new(n, lambda, reps, shape, &mut source));
        let hh = cfg.heavy_hitters.map(|(eta, rows)| HeavyHitterSketch::new(n, eta, rows, &mut source));
        NodeSketch { degrees: vec![0; n], recovery, forest, flce, hh }
    }

    pub fn update(&mut self, e: EdgeKey, delta: i32) {
        self.degrees[e.u] += delta as i64;
        self.degrees[e.v] += delta as i64;
        if let Some(r) = self.recovery.as_mut() {
            r.update(e, delta);
        }
        if let Some(f) = self.forest.as_mut() {
            f.update(e, delta);
        }
        if let Some(f) = self.flce.as_mut() {
            f.update(e, delta);
        }
        if let Some(h) = self.hh.as_mut() {
            h.update(e, delta);
        }
    }

    pub fn edge_count(&self) -> i64 {
        self.degrees.iter().sum::<i64>() / 2
    }

    /// Exact neighbourhood of `v` when `deg(v) ≤ k`.
    pub fn sparse_recover_neighbors(&self, v: VertexId, k: usize) -> Result<Vec<EdgeKey>, SketchError> {
        let deg = self.degrees[v];
        let sr = self.recovery.as_ref().ok_or_else(|| SketchError::DecodeFailure("no recovery sketch".into()))?;
        if deg > k.min(sr.capacity()) as i64 {
            return Err(SketchError::CapacityExceeded { vertex: v, degree: deg, capacity: k.min(sr.capacity()) });
        }
        let edges = sr.recover(v)?;
        if edges.len() as i64 != deg {
            return Err(SketchError::DecodeFailure(format!(
                "vertex {v}: recovered {} edges, degree counter says {deg}",
                edges.len()
            )));
        }
        Ok(edges)
    }

    /// Adds another sketch of the same shape and randomness: the result
    /// sketches the sum of the two update streams.
    pub fn absorb(&mut self, o: &NodeSketch) {
        for (a, b) in self.degrees.iter_mut().zip(&o.degrees) {
            *a += b;
        }
        fn both<T>(a: &mut Option<T>, b: &Option<T>, f: impl Fn(&mut T, &T)) {
            if let (Some(x), Some(y)) = (a.as_mut(), b.as_ref()) {
                f(x, y);
            }
        }
        both(&mut self.recovery, &o.recovery, |x, y| x.absorb(y));
        both(&mut self.forest, &o.forest, |x, y| x.absorb(y));
        both(&mut self.flce, &o.flce, |x, y| x.absorb(y));
        both(&mut self.hh, &o.hh, |x, y| x.absorb(y));
    }

    pub fn same_state(&self, o: &NodeSketch) -> bool {
        fn eq<T>(a: &Option<T>, b: &Option<T>, f: impl Fn(&T, &T) -> bool) -> bool {
            match (a, b) {
                (Some(x), Some(y)) => f(x, y),
                (None, None) => true,
                _ => false,
            }
        }
        self.degrees == o.degrees
            && eq(&self.recovery, &o.recovery, |x, y| x.same_state(y))
            && eq(&self.forest, &o.forest, |x, y| x.same_state(y))
            && eq(&self.flce, &o.flce, |x, y| x.same_state(y))
            && eq(&self.hh, &o.hh, |x, y| x.same_state(y))
    }

    pub fn dense_bytes(&self) -> usize {
        self.degrees.len() * 8
            + self.recovery.as_ref().map_or(0, |s| s.dense_bytes())
            + self.forest.as_ref().map_or(0, |s| s.dense_bytes())
            + self.flce.as_ref().map_or(0, |s| s.dense_bytes())
            + self.hh.as_ref().map_or(0, |s| s.dense_bytes())
    }

    fn write(&self, w: &mut impl Write) -> io::Result<()> {
        for d in &self.degrees {
            w.write_all(&d.to_le_bytes())?;
        }
        if let Some(s) = &self.recovery {
            s.write(w)?;
        }
        if let Some(s) = &self.forest {
            s.write(w)?;
        }
        if let Some(s) = &self.flce {
            s.write(w)?;
        }
        if let Some(s) = &self.hh {
            s.write(w)?;
        }
        Ok(())
    }
}

/// Kind tag carried by each block for the checkpoint header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Sparsify,
    HeavyEdges,
    /// One level of the flat per-level layout.
    Level,
}

/// Shape of one block: position in the tree and its sampling rate `Γ^{-rate_exponent}`
/// relative to its parent.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub i: u32,
    pub l: u32,
    pub parent: Option<usize>,
    pub rate_exponent: u32,
    pub sketched: bool,
}

/// Diagonal 0/1 sampling matrix `Π_a(e,e) = h_a(e)`.
#[derive(Clone, Debug)]
pub struct SamplingMatrix {
    pub hash: HashFamily,
    pub rate: f64,
    threshold: u64,
}

impl SamplingMatrix {
    #[inline]
    pub fn keeps(&self, e: EdgeKey) -> bool {
        self.hash.bernoulli(e.linear_index(), self.threshold)
    }
}

#[derive(Clone, Debug)]
pub struct Block {
    pub spec: BlockSpec,
    pub children: Vec<usize>,
    pub sampler: Option<SamplingMatrix>,
    pub sketch: Option<NodeSketch>,
}

/// Every block's sketches, indexed by block id (root first).
#[derive(Clone, Debug)]
pub struct SketchStack {
    pub n: usize,
    pub gamma_base: f64,
    pub seed: Seed,
    pub blocks: Vec<Block>,
    roots: Vec<usize>,
}

impl SketchStack {
    /// Builds empty sketches; block `b` draws its randomness from `seed.derive([b])`.
    pub fn new(specs: Vec<BlockSpec>, gamma_base: f64, seed: Seed, cfg: &SketchConfig) -> Self {
        let n = cfg.n;
        let mut blocks: Vec<Block> = specs
            .into_iter()
            .enumerate()
            .map(|(b, spec)| {
                let bseed = seed.derive(&[b as u64]);
                let sampler = (spec.rate_exponent > 0).then(|| {
                    let mut src = PrgHashSource::new(bseed.derive(&[0]), 1);
                    let rate = gamma_base.powi(-(spec.rate_exponent as i32));
                    SamplingMatrix { hash: src.next(HashKind::Pairwise), rate, threshold: bernoulli_threshold(rate) }
                });
                let sketch = spec.sketched.then(|| NodeSketch::new(cfg, bseed));
                Block { spec, children: Vec::new(), sampler, sketch }
            })
            .collect();
        let mut roots = Vec::new();
        for b in 0..blocks.len() {
            match blocks[b].spec.parent {
                Some(p) => {
                    assert!(p < b, "parents must precede children");
                    blocks[p].children.push(b);
                }
                None => roots.push(b),
            }
        }
        SketchStack { n, gamma_base, seed, blocks, roots }
    }

    /// Applies `delta·e` to every block whose composed sampling keeps `e`.
    /// Returns the number of sketched blocks touched.
    pub fn apply_update(&mut self, upd: EdgeUpdate) -> Result<usize, SketchError> {
        if upd.e.v >= self.n || upd.delta.abs() != 1 {
            return Err(SketchError::StreamViolation(format!("bad update {upd:?}")));
        }
        let roots = self.roots.clone();
        let mut touched = 0;
        for r in roots {
            touched += self.apply_below(r, upd.e, upd.delta, true);
        }
        Ok(touched)
    }

    fn apply_below(&mut self, b: usize, e: EdgeKey, delta: i32, check_self: bool) -> usize {
        let block = &mut self.blocks[b];
        if check_self && !block.sampler.as_ref().is_none_or(|s| s.keeps(e)) {
            return 0;
        }
        let mut touched = 0;
        if let Some(sk) = block.sketch.as_mut() {
            sk.update(e, delta);
            touched += 1;
        }
        let children = block.children.clone();
        for c in children {
            touched += self.apply_below(c, e, delta, true);
        }
        touched
    }

    /// Whether the composed sampling `Π̃_b` keeps `e`.
    pub fn selects(&self, b: usize, e: EdgeKey) -> bool {
        let mut cur = Some(b);
        while let Some(x) = cur {
            if let Some(s) = &self.blocks[x].sampler {
                if !s.keeps(e) {
                    return false;
                }
            }
            cur = self.blocks[x].spec.parent;
        }
        true
    }

    /// Removes `edges` from block `root` and every descendant that samples them.
    pub fn subtract_edges(&mut self, root: usize, edges: &[EdgeKey]) -> Result<(), SketchError> {
        for &e in edges {
            if let Some(sk) = &self.blocks[root].sketch {
                if sk.degrees[e.u] <= 0 || sk.degrees[e.v] <= 0 {
                    return Err(SketchError::StreamViolation(format!("subtracting absent edge {e:?}")));
                }
            }
            self.apply_below(root, e, -1, false);
        }
        Ok(())
    }

    pub fn sketch(&self, b: usize) -> Option<&NodeSketch> {
        self.blocks[b].sketch.as_ref()
    }

    pub fn sketch_mut(&mut self, b: usize) -> Option<&mut NodeSketch> {
        self.blocks[b].sketch.as_mut()
    }

    pub fn children(&self, b: usize) -> &[usize] {
        &self.blocks[b].children
    }

    /// Sums another stack built from the same template into this one.
    pub fn merge(&mut self, o: &SketchStack) -> Result<(), SketchError> {
        if self.seed != o.seed || self.blocks.len() != o.blocks.len() || self.n != o.n {
            return Err(SketchError::StreamViolation("merging stacks of different shape".into()));
        }
        for (a, b) in self.blocks.iter_mut().zip(&o.blocks) {
            if let (Some(x), Some(y)) = (a.sketch.as_mut(), b.sketch.as_ref()) {
                x.absorb(y);
            }
        }
        Ok(())
    }

    /// Bit-exact equality of every cell, the same relation as comparing
    /// checkpoints but without serializing.
    pub fn same_state(&self, o: &SketchStack) -> bool {
        self.n == o.n
            && self.seed == o.seed
            && self.blocks.len() == o.blocks.len()
            && self.blocks.iter().zip(&o.blocks).all(|(a, b)| match (&a.sketch, &b.sketch) {
                (Some(x), Some(y)) => x.same_state(y),
                (None, None) => true,
                _ => false,
            })
    }

    /// Dense size of every cell array, equal to the checkpoint body length.
    pub fn sketch_bytes(&self) -> usize {
        self.header_len() + self.blocks.iter().filter_map(|b| b.sketch.as_ref()).map(|s| s.dense_bytes()).sum::<usize>()
    }

    fn header_len(&self) -> usize {
        CHECKPOINT_MAGIC.len() + 4 + 8 + 8 + 32 + 8 + self.blocks.len() * BLOCK_HEADER_BYTES
    }

    /// Header `(magic, version, n, Γ, seed, tree shape)` then each block's
    /// fixed-width little-endian cell arrays.
    pub fn write_checkpoint(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.gamma_base.to_bits().to_le_bytes())?;
        w.write_all(&self.seed.0)?;
        w.write_all(&(self.blocks.len() as u64).to_le_bytes())?;
        for b in &self.blocks {
            let kind: u8 = match b.spec.kind {
                BlockKind::Sparsify => 0,
                BlockKind::HeavyEdges => 1,
                BlockKind::Level => 2,
            };
            w.write_all(&[kind, b.spec.sketched as u8])?;
            w.write_all(&b.spec.i.to_le_bytes())?;
            w.write_all(&b.spec.l.to_le_bytes())?;
            w.write_all(&b.spec.rate_exponent.to_le_bytes())?;
            w.write_all(&b.spec.parent.map_or(u64::MAX, |p| p as u64).to_le_bytes())?;
        }
        for b in &self.blocks {
            if let Some(s) = &b.sketch {
                s.write(w)?;
            }
        }
        Ok(())
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(self.sketch_bytes());
        self.write_checkpoint(&mut v).expect("writing to memory");
        v
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SPSKETCH";
pub const CHECKPOINT_VERSION: u32 = 1;
const BLOCK_HEADER_BYTES: usize = 2 + 4 + 4 + 4 + 8;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_core::generators::*;
    use crate::graph_core::Graph;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn source(seed: u64, families: usize) -> PrgHashSource {
        PrgHashSource::new(Seed::from_u64(seed), families)
    }

    fn forest_of(g: &Graph, seed: u64) -> SpanningForestSketch {
        let shape = ForestShape::for_n(g.n());
        let mut f = SpanningForestSketch::new(g.n(), shape, &mut source(seed, shape.families()));
        for e in g.edges() {
            f.update(e, 1);
        }
        f
    }

    fn is_spanning_forest_of(g: &Graph, forest: &[EdgeKey]) -> bool {
        let comps = g.components();
        let ncomp = comps.iter().max().map_or(0, |m| m + 1);
        let f = Graph::from_edges(g.n(), forest.iter().map(|e| (e.u, e.v))).unwrap();
        forest.iter().all(|&e| g.contains(e)) && forest.len() == g.n() - ncomp && f.components() == comps
    }

    #[test]
    fn forest_examples() {
        let p5 = path(5);
        let f = forest_of(&p5, 1).spanning_forest().unwrap();
        assert_eq!(f, p5.edges().collect::<Vec<_>>());
        assert!(forest_of(&Graph::new(6), 2).spanning_forest().unwrap().is_empty());
        let two = cliques(&[3, 3]);
        let f = forest_of(&two, 3).spanning_forest().unwrap();
        assert_eq!(f.len(), 4);
        assert!(is_spanning_forest_of(&two, &f));
    }

    #[test]
    fn forest_after_deletions() {
        let mut ok = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let full = gnp(64, 0.15, seed);
            let shape = ForestShape::for_n(64);
            let mut f = SpanningForestSketch::new(64, shape, &mut source(seed + 1000, shape.families()));
            let mut g = full.clone();
            for e in full.edges() {
                f.update(e, 1);
            }
            for e in full.edges() {
                if rng.random::<bool>() {
                    f.update(e, -1);
                    g.remove(e).unwrap();
                }
            }
            if let Ok(forest) = f.spanning_forest() {
                if is_spanning_forest_of(&g, &forest) {
                    ok += 1;
                }
            }
        }
        assert!(ok >= 99, "{ok}/100");
    }

    #[test]
    fn sparse_recovery_examples() {
        let g = star(5);
        let mut sr = SparseRecoverySketch::new(6, 8, Seed::from_u64(1));
        for e in g.edges() {
            sr.update(e, 1);
        }
        assert_eq!(sr.recover(0).unwrap(), g.edges().collect::<Vec<_>>());
        assert_eq!(sr.recover(3).unwrap(), vec![EdgeKey::ordered(0, 3)]);
        let empty = SparseRecoverySketch::new(6, 8, Seed::from_u64(1));
        assert!(empty.recover(2).unwrap().is_empty());
    }

    #[test]
    fn sparse_recovery_at_capacity() {
        for seed in 0..100u64 {
            let k = 1 + (seed as usize % 20);
            let g = star(k);
            let mut ns = NodeSketch::new(
                &SketchConfig { n: k + 1, recovery_capacity: Some(k), forest: false, flce: None, heavy_hitters: None },
                Seed::from_u64(seed),
            );
            for e in g.edges() {
                ns.update(e, 1);
            }
            assert_eq!(ns.sparse_recover_neighbors(0, k).unwrap(), g.edges().collect::<Vec<_>>());
            if k > 1 {
                assert!(matches!(ns.sparse_recover_neighbors(0, k - 1), Err(SketchError::CapacityExceeded { .. })));
            }
        }
    }

    fn hh_of(g: &Graph, eta: f64, seed: u64) -> HeavyHitterSketch {
        let mut h = HeavyHitterSketch::new(g.n(), eta, 5, &mut source(seed, 10));
        for e in g.edges() {
            h.update(e, 1);
        }
        h
    }

    #[test]
    fn heavy_hitter_examples() {
        let single = Graph::from_edges(4, [(1, 2)]).unwrap();
        let h = hh_of(&single, 0.3, 1);
        let mut phi = vec![0.0; 4];
        phi[1] = 1.0;
        phi[2] = -1.0;
        assert_eq!(h.heavy_hitter_decode(&phi, 0.3), vec![EdgeKey::ordered(1, 2)]);
        assert!(h.heavy_hitter_decode(&[0.0; 4], 0.3).is_empty());
        let p3 = path(3);
        let h = hh_of(&p3, 0.3, 2);
        assert_eq!(h.heavy_hitter_decode(&[2.0, 1.0, 0.0], 0.3), p3.edges().collect::<Vec<_>>());
    }

    #[test]
    fn heavy_hitter_complete_and_sound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eta = 0.1;
        let mut complete_ok = 0;
        for trial in 0..100u64 {
            let g = gnp(48, 0.2, trial);
            let h = hh_of(&g, eta, trial + 77);
            let phi: Vec<f64> = (0..48).map(|_| rng.random::<f64>().powi(6) * 10.0).collect();
            let x: Vec<(EdgeKey, f64)> = g.edges().map(|e| (e, phi[e.u] - phi[e.v])).collect();
            let norm = x.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            let got = h.heavy_hitter_decode(&phi, eta);
            let missed = x.iter().any(|(e, v)| v.abs() >= 2.0 * eta * norm && !got.contains(e));
            if !missed {
                complete_ok += 1;
            }
            for e in &got {
                assert!(g.contains(*e));
                assert!((phi[e.u] - phi[e.v]).abs() >= 0.5 * eta * norm);
            }
        }
        assert!(complete_ok >= 99, "{complete_ok}/100");
    }

    #[test]
    fn pair_decoder_matches_direct_decode() {
        let g = gnp(20, 0.3, 4);
        let h = hh_of(&g, 0.2, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cols: Vec<Vec<f64>> = (0..20).map(|_| (0..20).map(|_| rng.random::<f64>()).collect()).collect();
        let dec = h.pair_decoder(&cols);
        for (a, b) in [(0, 1), (3, 17), (19, 2)] {
            let phi: Vec<f64> = (0..20).map(|v| cols[a][v] - cols[b][v]).collect();
            assert_eq!(dec.decode_pair(a, b, 0.2), h.heavy_hitter_decode(&phi, 0.2));
        }
    }

    fn two_level_specs() -> Vec<BlockSpec> {
        let mk = |kind, parent, rate_exponent, sketched| BlockSpec { kind, i: 0, l: 0, parent, rate_exponent, sketched };
        vec![
            mk(BlockKind::Sparsify, None, 0, false),
            mk(BlockKind::HeavyEdges, Some(0), 0, true),
            mk(BlockKind::HeavyEdges, Some(0), 1, true),
            mk(BlockKind::Sparsify, Some(2), 0, false),
            mk(BlockKind::HeavyEdges, Some(3), 1, true),
        ]
    }

    fn small_cfg(n: usize) -> SketchConfig {
        SketchConfig { n, recovery_capacity: Some(3), forest: true, flce: Some((2.0, 3)), heavy_hitters: Some((0.5, 3)) }
    }

    #[test]
    fn insert_delete_restores_empty_state() {
        let empty = SketchStack::new(two_level_specs(), 2.0, Seed::from_u64(3), &small_cfg(8));
        let mut s = empty.clone();
        let e = EdgeKey::ordered(0, 1);
        s.apply_update(EdgeUpdate::insert(e)).unwrap();
        s.apply_update(EdgeUpdate::delete(e)).unwrap();
        assert_eq!(s.checkpoint_bytes(), empty.checkpoint_bytes());
        assert_eq!(s.checkpoint_bytes().len(), s.sketch_bytes());
    }

    #[test]
    fn permuted_stream_same_state() {
        let template = SketchStack::new(two_level_specs(), 2.0, Seed::from_u64(4), &small_cfg(12));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = gnp(12, 0.4, 2);
        let mut ups: Vec<EdgeUpdate> = g.edges().map(EdgeUpdate::insert).collect();
        for e in g.edges().take(10) {
            ups.push(EdgeUpdate::delete(e));
            ups.push(EdgeUpdate::insert(e));
        }
        let mut a = template.clone();
        for u in &ups {
            a.apply_update(*u).unwrap();
        }
        ups.shuffle(&mut rng);
        let mut b = template.clone();
        for u in &ups {
            b.apply_update(*u).unwrap();
        }
        assert_eq!(a.checkpoint_bytes(), b.checkpoint_bytes());
    }

    #[test]
    fn split_merge_equals_single_pass() {
        let template = SketchStack::new(two_level_specs(), 2.0, Seed::from_u64(9), &small_cfg(10));
        let g = gnp(10, 0.5, 3);
        let ups: Vec<EdgeUpdate> = g.edges().map(EdgeUpdate::insert).collect();
        let mut whole = template.clone();
        for u in &ups {
            whole.apply_update(*u).unwrap();
        }
        let (a, b) = ups.split_at(ups.len() / 2);
        let mut left = template.clone();
        let mut right = template.clone();
        for u in a {
            left.apply_update(*u).unwrap();
        }
        for u in b {
            right.apply_update(*u).unwrap();
        }
        left.merge(&right).unwrap();
        assert!(left.same_state(&whole));
        assert_eq!(left.checkpoint_bytes(), whole.checkpoint_bytes());
        assert!(!template.same_state(&whole));
    }

    #[test]
    fn updates_touch_only_selected_blocks() {
        let mut s = SketchStack::new(two_level_specs(), 2.0, Seed::from_u64(5), &small_cfg(16));
        let g = complete(16);
        for e in g.edges() {
            let expect = [1usize, 2, 4].iter().filter(|&&b| s.selects(b, e)).count();
            assert_eq!(s.apply_update(EdgeUpdate::insert(e)).unwrap(), expect);
        }
        for e in g.edges() {
            let in_parent = s.selects(2, e);
            let in_child = s.selects(4, e);
            assert!(!in_child || in_parent, "child sample must be a subset");
        }
        let d2 = s.sketch(2).unwrap().edge_count();
        let d4 = s.sketch(4).unwrap().edge_count();
        assert!(d4 <= d2 && d2 < 120 && d2 > 20, "{d2} {d4}");
    }

    #[test]
    fn subtract_then_readd_round_trips() {
        let mut s = SketchStack::new(two_level_specs(), 2.0, Seed::from_u64(6), &small_cfg(10));
        let g = gnp(10, 0.5, 1);
        for e in g.edges() {
            s.apply_update(EdgeUpdate::insert(e)).unwrap();
        }
        let before = s.checkpoint_bytes();
        let edges: Vec<EdgeKey> = g.edges().collect();
        s.subtract_edges(0, &edges).unwrap();
        let empty = SketchStack::new(two_level_specs(), 2.0, Seed::from_u64(6), &small_cfg(10));
        assert_eq!(s.checkpoint_bytes(), empty.checkpoint_bytes());
        for e in &edges {
            s.apply_update(EdgeUpdate::insert(*e)).unwrap();
        }
        assert_eq!(s.checkpoint_bytes(), before);
        assert!(matches!(empty.clone().subtract_edges(1, &edges[..1]), Err(SketchError::StreamViolation(_))));
    }

    #[test]
    fn peeling_three_regular_graph_empties_it() {
        // Prism graph: two triangles joined by a perfect matching, 3-regular.
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (0, 3), (1, 4), (2, 5)]).unwrap();
        let cfg = SketchConfig { n: 6, recovery_capacity: Some(4), forest: false, flce: None, heavy_hitters: None };
        let mut ns = NodeSketch::new(&cfg, Seed::from_u64(2));
        for e in g.edges() {
            ns.update(e, 1);
        }
        let mut peeled = Vec::new();
        while let Some(v) = (0..6).find(|&v| ns.degrees[v] > 0 && ns.degrees[v] < 4) {
            let es = ns.sparse_recover_neighbors(v, 4).unwrap();
            for e in &es {
                ns.update(*e, -1);
            }
            peeled.extend(es);
        }
        assert!(ns.degrees.iter().all(|&d| d == 0));
        peeled.sort_by_key(|e| e.linear_index());
        assert_eq!(peeled, g.edges().collect::<Vec<_>>());
    }

    #[test]
    fn flce_examples() {
        use crate::exact_oracles::exact_edge_connectivity;
        let mut g = cliques(&[8, 8]);
        g.insert(EdgeKey::ordered(7, 8)).unwrap();
        let bank_for = |g: &Graph, lambda: f64, seed: u64| {
            let reps = (50.0 * lambda * (g.n() as f64).log2()).ceil() as usize;
            let shape = ForestShape::for_n(g.n());
            let mut b = FlceBank::new(g.n(), lambda, reps, shape, &mut source(seed, FlceBank::families(reps, shape)));
            for e in g.edges() {
                b.update(e, 1);
            }
            b
        };
        let out = bank_for(&g, 2.0, 1).find_low_connectivity_edges().unwrap();
        assert!(out.contains(&EdgeKey::ordered(7, 8)));
        let c6 = cycle(6);
        let out = bank_for(&c6, 2.0, 2).find_low_connectivity_edges().unwrap();
        for e in c6.edges() {
            assert_eq!(exact_edge_connectivity(&c6, e).unwrap(), 2);
            assert!(out.contains(&e));
        }
        let k10 = complete(10);
        for e in bank_for(&k10, 3.0, 3).find_low_connectivity_edges().unwrap() {
            assert!(k10.contains(e));
        }
    }
}
