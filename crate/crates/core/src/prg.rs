//! Seed expansion for sketch randomness.
//!
//! Two sources are provided. Limited-independence polynomial hash families
//! ([`HashFamily`]) evaluate in O(k) per key. A multilevel Nisan–Zuckerman
//! generator ([`PrgChain`]) stretches a short seed and supports random access to
//! any output bit while touching only polylogarithmically many seed bits.
//!
//! The extractor inside each generator level is a block-local construction:
//! the input `x` is cut into `L = ⌈log₂ N⌉` equal blocks, and output bit `j`
//! XORs one position per block, chosen by a 4-wise independent hash keyed by
//! the level seed `y`. It has the interface and locality of a local extractor,
//! without any proof-grade min-entropy guarantee.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Mersenne prime `2^61 − 1`, the field for every polynomial hash.
pub const FIELD: u64 = (1 << 61) - 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrgError {
    #[error("length mismatch: expected {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for output length {len}")]
    IndexOutOfRange { index: u64, len: u64 },
    #[error("invalid seed: {0}")]
    BadSeed(String),
}

/// 256-bit master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Seed(pub [u8; 32]);

impl Seed {
    /// Parses up to 64 hex digits, left-padded with zeros.
    pub fn from_hex(s: &str) -> Result<Seed, PrgError> {
        let s = s.trim().trim_start_matches("0x");
        if s.is_empty() || s.len() > 64 {
            return Err(PrgError::BadSeed(format!("expected 1..=64 hex digits, got {}", s.len())));
        }
        let padded = format!("{s:0>64}");
        let mut out = [0u8; 32];
        hex::decode_to_slice(&padded, &mut out).map_err(|e| PrgError::BadSeed(e.to_string()))?;
        Ok(Seed(out))
    }

    pub fn from_u64(x: u64) -> Seed {
        let mut out = [0u8; 32];
        out[24..].copy_from_slice(&x.to_be_bytes());
        Seed(out)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Independent child seed for a labelled purpose.
    pub fn derive(&self, path: &[u64]) -> Seed {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(fold_words(path));
        let mut out = [0u8; 32];
        rng.fill_bytes(&mut out);
        Seed(out)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.0)
    }
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fold_words(words: &[u64]) -> u64 {
    words.iter().fold(0x5EED_u64, |acc, &w| splitmix(acc ^ splitmix(w)))
}

/// Packed bit string.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn from_rng(rng: &mut impl RngCore, len: usize) -> Self {
        let mut b = Bits::zeros(len);
        for w in b.words.iter_mut() {
            *w = rng.next_u64();
        }
        b.mask_tail();
        b
    }

    pub fn from_bools(v: &[bool]) -> Self {
        let mut b = Bits::zeros(v.len());
        for (i, &x) in v.iter().enumerate() {
            b.set(i, x);
        }
        b
    }

    fn mask_tail(&mut self) {
        if self.len % 64 != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (self.len % 64)) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, x: bool) {
        let m = 1u64 << (i % 64);
        if x {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    pub fn push(&mut self, x: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, x);
    }

    pub fn slice(&self, start: usize, len: usize) -> Bits {
        let mut b = Bits::zeros(len);
        for i in 0..len {
            b.set(i, self.get(start + i));
        }
        b
    }

    pub fn extend(&mut self, other: &Bits) {
        for i in 0..other.len {
            self.push(other.get(i));
        }
    }

    /// 64 bits starting at `start` (little-endian bit order), zero past the end.
    pub fn word_at(&self, start: usize) -> u64 {
        let mut w = 0u64;
        for i in 0..64 {
            if start + i < self.len && self.get(start + i) {
                w |= 1 << i;
            }
        }
        w
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Bytes in little-endian bit order; a partial final byte is dropped.
    pub fn bytes(&self) -> Vec<u8> {
        (0..self.len / 8)
            .map(|k| (0..8).fold(0u8, |acc, i| acc | ((self.get(8 * k + i) as u8) << i)))
            .collect()
    }
}

/// Shape of one extractor application: `{0,1}^N × {0,1}^t → {0,1}^m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractorSpec {
    pub n_bits: usize,
    pub seed_bits: usize,
    pub out_bits: usize,
    pub eps: f64,
}

impl ExtractorSpec {
    /// Number of blocks of `x`, which is also the number of `x` positions read per output bit.
    pub fn locality(&self) -> usize {
        (usize::BITS - self.n_bits.max(2).saturating_sub(1).leading_zeros()) as usize
    }

    fn block_len(&self) -> usize {
        self.n_bits / self.locality()
    }
}

/// Position sampler keyed by the extractor seed.
#[derive(Clone, Debug)]
struct ExtractorKey {
    hash: HashFamily,
}

impl ExtractorKey {
    fn new(y_words: &[u64]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(fold_words(y_words));
        ExtractorKey { hash: HashFamily::random(HashKind::KWise(4), &mut rng) }
    }

    #[inline]
    fn position(&self, spec: &ExtractorSpec, j: usize, s: usize) -> usize {
        let block = spec.block_len();
        let key = (j * spec.locality() + s) as u64;
        s * block + (self.hash.eval(key) % block as u64) as usize
    }
}

fn seed_words(y: &Bits) -> Vec<u64> {
    (0..y.len().div_ceil(64)).map(|k| y.word_at(64 * k)).collect()
}

/// Full extractor output.
pub fn extract(spec: &ExtractorSpec, x: &Bits, y: &Bits) -> Result<Bits, PrgError> {
    check_lengths(spec, x, y)?;
    let key = ExtractorKey::new(&seed_words(y));
    let mut out = Bits::zeros(spec.out_bits);
    for j in 0..spec.out_bits {
        out.set(j, extract_bit_with(spec, &key, j, |p| x.get(p)));
    }
    Ok(out)
}

/// Single output bit, reading only `locality()` positions of `x`.
pub fn extract_bit(spec: &ExtractorSpec, x: &Bits, y: &Bits, j: usize) -> Result<bool, PrgError> {
    check_lengths(spec, x, y)?;
    if j >= spec.out_bits {
        return Err(PrgError::IndexOutOfRange { index: j as u64, len: spec.out_bits as u64 });
    }
    Ok(extract_bit_with(spec, &ExtractorKey::new(&seed_words(y)), j, |p| x.get(p)))
}

fn check_lengths(spec: &ExtractorSpec, x: &Bits, y: &Bits) -> Result<(), PrgError> {
    if x.len() != spec.n_bits {
        return Err(PrgError::LengthMismatch { expected: spec.n_bits, got: x.len() });
    }
    if y.len() != spec.seed_bits {
        return Err(PrgError::LengthMismatch { expected: spec.seed_bits, got: y.len() });
    }
    Ok(())
}

#[inline]
fn extract_bit_with(spec: &ExtractorSpec, key: &ExtractorKey, j: usize, mut x: impl FnMut(usize) -> bool) -> bool {
    (0..spec.locality()).fold(false, |acc, s| acc ^ x(key.position(spec, j, s)))
}

/// One Nisan–Zuckerman level: output block `i` is `Ext(X, Y_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NzLevel {
    pub spec: ExtractorSpec,
    /// Space parameter `9^i · S` this level is sized for.
    pub space: usize,
    /// Number of output blocks `ℓ`.
    pub blocks: usize,
    /// Nominal output budget `S^{q − 0.9 i}`.
    pub budget_bits: f64,
}

impl NzLevel {
    pub fn output_len(&self) -> usize {
        self.spec.out_bits * self.blocks
    }

    /// Seed consumed from the level above: `X` followed by `Y_1..Y_ℓ`.
    pub fn seed_len(&self) -> usize {
        self.spec.n_bits + self.blocks * self.spec.seed_bits
    }

    /// Sequential output from an explicit seed.
    pub fn generate(&self, seed: &Bits) -> Result<Bits, PrgError> {
        if seed.len() != self.seed_len() {
            return Err(PrgError::LengthMismatch { expected: self.seed_len(), got: seed.len() });
        }
        let x = seed.slice(0, self.spec.n_bits);
        let mut out = Bits::zeros(0);
        for i in 0..self.blocks {
            let y = seed.slice(self.spec.n_bits + i * self.spec.seed_bits, self.spec.seed_bits);
            out.extend(&extract(&self.spec, &x, &y)?);
        }
        Ok(out)
    }
}

/// Source of the top level's seed.
#[derive(Clone, Debug, PartialEq)]
pub enum SeedSource {
    /// ChaCha8 keystream under the given key, randomly accessible.
    Keyed(Seed),
    /// Explicit bits, used to splice chains together in tests.
    Explicit(Bits),
}

impl SeedSource {
    pub fn prefix(&self, len: usize) -> Bits {
        match self {
            SeedSource::Keyed(seed) => {
                let mut rng = seed.rng();
                let mut b = Bits::zeros(len);
                let mut i = 0;
                while i < len {
                    let w = rng.next_u32();
                    for k in 0..32 {
                        if i + k < len {
                            b.set(i + k, (w >> k) & 1 == 1);
                        }
                    }
                    i += 32;
                }
                b
            }
            SeedSource::Explicit(b) => b.slice(0, len),
        }
    }
}

/// Per-call instrumentation for [`PrgChain::prg_bit_counted`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AccessStats {
    /// Bits read from the top-level true seed.
    pub seed_touches: u64,
}

/// Chain `P_0..P_ω`: each level's seed is the output of the level above,
/// and only `P_ω` reads the true seed.
#[derive(Clone, Debug, PartialEq)]
pub struct PrgChain {
    pub levels: Vec<NzLevel>,
    /// True seed read by `P_ω`, materialized once (it is only `O(S polylog S)` bits).
    pub top: Bits,
    pub s_param: usize,
    pub q: f64,
    /// Configured constant `c` of the per-call budget `c · log³ S`.
    pub locality_c: f64,
}

/// Extractor seed length `t` at every level.
pub const LEVEL_SEED_BITS: usize = 64;

impl PrgChain {
    /// Chain producing at least `S^q` bits with `ω = ⌈q/0.9⌉`.
    pub fn new(seed: Seed, s_log2: u32, q: f64) -> Self {
        let omega = ((q / 0.9) - 1e-9).ceil().max(1.0) as usize;
        Self::with_levels(SeedSource::Keyed(seed), s_log2, q, omega)
    }

    pub fn with_levels(top: SeedSource, s_log2: u32, q: f64, levels: usize) -> Self {
        let s = 1usize << s_log2;
        let mut need = (s as f64).powf(q).ceil() as usize;
        let mut out = Vec::with_capacity(levels);
        for i in 0..levels {
            let space = 9usize.pow(i as u32) * s;
            let spec = ExtractorSpec {
                n_bits: 2 * space,
                seed_bits: LEVEL_SEED_BITS,
                out_bits: space,
                eps: (s as f64).powi(-3),
            };
            let level = NzLevel {
                spec,
                space,
                blocks: need.div_ceil(space).max(1),
                budget_bits: (s as f64).powf(q - 0.9 * i as f64),
            };
            need = level.seed_len();
            out.push(level);
        }
        let top = top.prefix(need);
        PrgChain { levels: out, top, s_param: s, q, locality_c: 8.0 }
    }

    pub fn output_len(&self) -> u64 {
        self.levels[0].output_len() as u64
    }

    /// Length of the true seed consumed by `P_ω`.
    pub fn true_seed_len(&self) -> usize {
        self.levels.last().map_or(0, |l| l.seed_len())
    }

    /// Per-call seed-touch budget `c · log³ S`.
    pub fn locality_budget(&self) -> f64 {
        self.locality_c * (self.s_param as f64).log2().powi(3)
    }

    pub fn prg_bit(&self, index: u64) -> Result<bool, PrgError> {
        self.prg_bit_counted(index).map(|(b, _)| b)
    }

    pub fn prg_bit_counted(&self, index: u64) -> Result<(bool, AccessStats), PrgError> {
        if index >= self.output_len() {
            return Err(PrgError::IndexOutOfRange { index, len: self.output_len() });
        }
        let mut ctx = CallCtx { stats: AccessStats::default(), keys: Vec::new() };
        let b = self.level_bit(0, index as usize, &mut ctx);
        Ok((b, ctx.stats))
    }

    fn source_bit(&self, level: usize, idx: usize, ctx: &mut CallCtx) -> bool {
        if level == self.levels.len() {
            ctx.stats.seed_touches += 1;
            self.top.get(idx)
        } else {
            self.level_bit(level, idx, ctx)
        }
    }

    fn level_bit(&self, level: usize, idx: usize, ctx: &mut CallCtx) -> bool {
        let lv = &self.levels[level];
        let block = idx / lv.spec.out_bits;
        let offset = idx % lv.spec.out_bits;
        let key = match ctx.keys.iter().find(|(l, b, _)| *l == level && *b == block) {
            Some((_, _, k)) => k.clone(),
            None => {
                let start = lv.spec.n_bits + block * lv.spec.seed_bits;
                let y: Vec<bool> = (0..lv.spec.seed_bits).map(|k| self.source_bit(level + 1, start + k, ctx)).collect();
                let key = ExtractorKey::new(&seed_words(&Bits::from_bools(&y)));
                ctx.keys.push((level, block, key.clone()));
                key
            }
        };
        extract_bit_with(&lv.spec, &key, offset, |p| self.source_bit(level + 1, p, ctx))
    }

    /// First `len` output bits, computed level by level from the true seed.
    pub fn expand(&self, len: usize) -> Result<Bits, PrgError> {
        if len as u64 > self.output_len() {
            return Err(PrgError::IndexOutOfRange { index: len as u64, len: self.output_len() });
        }
        // Bits needed from each level, bottom up.
        let mut needs = vec![len];
        for lv in &self.levels {
            let need = *needs.last().unwrap();
            let blocks = need.div_ceil(lv.spec.out_bits);
            needs.push(lv.spec.n_bits + blocks * lv.spec.seed_bits);
        }
        let mut stream = self.top.slice(0, needs[self.levels.len()]);
        for (i, lv) in self.levels.iter().enumerate().rev() {
            let want = needs[i];
            let x = stream.slice(0, lv.spec.n_bits);
            let mut out = Bits::zeros(want);
            for block in 0..want.div_ceil(lv.spec.out_bits) {
                let y = stream.slice(lv.spec.n_bits + block * lv.spec.seed_bits, lv.spec.seed_bits);
                let key = ExtractorKey::new(&seed_words(&y));
                for j in 0..lv.spec.out_bits {
                    let pos = block * lv.spec.out_bits + j;
                    if pos >= want {
                        break;
                    }
                    out.set(pos, extract_bit_with(&lv.spec, &key, j, |p| x.get(p)));
                }
            }
            stream = out;
        }
        Ok(stream)
    }
}

struct CallCtx {
    stats: AccessStats,
    keys: Vec<(usize, usize, ExtractorKey)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HashKind {
    Pairwise,
    KWise(usize),
}

impl HashKind {
    pub fn degree_plus_one(&self) -> usize {
        match self {
            HashKind::Pairwise => 2,
            HashKind::KWise(k) => *k,
        }
    }
}

/// Polynomial hash `h(x) = Σ a_i x^i mod (2^61 − 1)`, a k-wise independent family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashFamily {
    pub kind: HashKind,
    pub modulus: u64,
    pub coeffs: Vec<u64>,
    /// Bit offset in the generator stream the coefficients were read from, if any.
    pub source_offset: Option<usize>,
}

#[inline]
fn mulmod(a: u64, b: u64) -> u64 {
    let p = (a as u128) * (b as u128);
    let lo = (p as u64) & FIELD;
    let hi = (p >> 61) as u64;
    let s = lo + hi;
    if s >= FIELD {
        s - FIELD
    } else {
        s
    }
}

impl HashFamily {
    pub fn random(kind: HashKind, rng: &mut impl RngCore) -> Self {
        let coeffs = (0..kind.degree_plus_one()).map(|_| rng.next_u64() % FIELD).collect();
        HashFamily { kind, modulus: FIELD, coeffs, source_offset: None }
    }

    /// Reads `k` 64-bit coefficients from a generator stream starting at `offset`.
    pub fn from_stream(kind: HashKind, stream: &Bits, offset: usize) -> Self {
        let coeffs = (0..kind.degree_plus_one()).map(|i| stream.word_at(offset + 64 * i) % FIELD).collect();
        HashFamily { kind, modulus: FIELD, coeffs, source_offset: Some(offset) }
    }

    pub fn bits_needed(kind: HashKind) -> usize {
        64 * kind.degree_plus_one()
    }

    /// Value in `[0, 2^61 − 1)`; `key` must be below the modulus.
    #[inline]
    pub fn eval(&self, key: u64) -> u64 {
        debug_assert!(key < FIELD);
        self.coeffs.iter().rev().fold(0u64, |acc, &a| {
            let s = mulmod(acc, key) + a;
            if s >= FIELD {
                s - FIELD
            } else {
                s
            }
        })
    }

    #[inline]
    pub fn bucket(&self, key: u64, width: usize) -> usize {
        (self.eval(key) % width as u64) as usize
    }

    #[inline]
    pub fn sign(&self, key: u64) -> i32 {
        if self.eval(key) & 1 == 0 {
            1
        } else {
            -1
        }
    }

    /// Bernoulli wrapper: true with probability `⌊p·P⌋/P`.
    #[inline]
    pub fn bernoulli(&self, key: u64, threshold: u64) -> bool {
        self.eval(key) < threshold
    }
}

/// Threshold for [`HashFamily::bernoulli`] realizing probability `p`.
pub fn bernoulli_threshold(p: f64) -> u64 {
    if p >= 1.0 {
        FIELD
    } else if p <= 0.0 {
        0
    } else {
        (p * FIELD as f64).floor() as u64
    }
}

/// Hash families drawn from a generator stream, cursor-allocated in creation order.
pub struct PrgHashSource {
    stream: Bits,
    cursor: usize,
}

impl PrgHashSource {
    /// Expands a per-purpose chain long enough for `families` 4-wise families.
    pub fn new(seed: Seed, families: usize) -> Self {
        let bits = families.max(1) * HashFamily::bits_needed(HashKind::KWise(4));
        let s_log2 = 8;
        let q = ((bits as f64).log2() / s_log2 as f64).max(1.0) + 0.01;
        let chain = PrgChain::new(seed, s_log2, q);
        let stream = chain.expand(bits).expect("chain sized to cover request");
        PrgHashSource { stream, cursor: 0 }
    }

    pub fn next(&mut self, kind: HashKind) -> HashFamily {
        let need = HashFamily::bits_needed(kind);
        assert!(self.cursor + need <= self.stream.len(), "hash source exhausted");
        let h = HashFamily::from_stream(kind, &self.stream, self.cursor);
        self.cursor += need;
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn chi2_upper_p(stat: f64, dof: f64) -> f64 {
        // Wilson–Hilferty normal approximation of the chi-square tail.
        let z = ((stat / dof).powf(1.0 / 3.0) - (1.0 - 2.0 / (9.0 * dof))) / (2.0 / (9.0 * dof)).sqrt();
        0.5 * libm_erfc(z / std::f64::consts::SQRT_2)
    }

    fn libm_erfc(x: f64) -> f64 {
        // Abramowitz–Stegun 7.1.26, adequate for a p-value threshold.
        let t = 1.0 / (1.0 + 0.327_591_1 * x.abs());
        let y = t * (0.254_829_592 + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
        let r = y * (-x * x).exp();
        if x >= 0.0 {
            r
        } else {
            2.0 - r
        }
    }

    #[test]
    fn seed_hex_round_trip() {
        let s = Seed::from_hex("deadbeef").unwrap();
        assert_eq!(&s.to_hex()[56..], "deadbeef");
        assert_eq!(s, Seed::from_u64(0xdead_beef));
        assert!(Seed::from_hex("xyz").is_err());
        assert_ne!(s.derive(&[1]), s.derive(&[2]));
        assert_eq!(s.derive(&[1, 2]), s.derive(&[1, 2]));
    }

    #[test]
    fn extract_is_deterministic_and_locally_computable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = ExtractorSpec { n_bits: 4096, seed_bits: 64, out_bits: 512, eps: 1e-9 };
        for _ in 0..100 {
            let x = Bits::from_rng(&mut rng, spec.n_bits);
            let y = Bits::from_rng(&mut rng, spec.seed_bits);
            let full = extract(&spec, &x, &y).unwrap();
            assert_eq!(full, extract(&spec, &x, &y).unwrap());
            let j = rng.random_range(0..spec.out_bits);
            assert_eq!(extract_bit(&spec, &x, &y, j).unwrap(), full.get(j));
        }
        let x = Bits::zeros(10);
        assert!(matches!(extract(&spec, &x, &Bits::zeros(64)), Err(PrgError::LengthMismatch { .. })));
    }

    #[test]
    fn extract_monobit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = ExtractorSpec { n_bits: 1 << 14, seed_bits: 64, out_bits: 1 << 13, eps: 1e-9 };
        let x = Bits::from_rng(&mut rng, spec.n_bits);
        let mut ones = 0usize;
        let mut total = 0usize;
        while total < 1_000_000 {
            let y = Bits::from_rng(&mut rng, 64);
            let out = extract(&spec, &x, &y).unwrap();
            ones += out.count_ones();
            total += out.len();
        }
        let sigma = (total as f64 / 4.0).sqrt();
        assert!((ones as f64 - total as f64 / 2.0).abs() < 3.0 * sigma, "ones={ones} of {total}");
    }

    #[test]
    fn nz_blocks_are_extractor_outputs() {
        let chain = PrgChain::new(Seed::from_u64(7), 8, 1.5);
        let lv = &chain.levels[0];
        let seed = Bits::from_rng(&mut ChaCha8Rng::seed_from_u64(3), lv.seed_len());
        let out = lv.generate(&seed).unwrap();
        let x = seed.slice(0, lv.spec.n_bits);
        for i in 0..lv.blocks {
            let y = seed.slice(lv.spec.n_bits + i * 64, 64);
            let block = extract(&lv.spec, &x, &y).unwrap();
            assert_eq!(out.slice(i * lv.spec.out_bits, lv.spec.out_bits), block);
        }
    }

    #[test]
    fn sequential_expansion_matches_random_access() {
        let chain = PrgChain::new(Seed::from_u64(11), 10, 1.6);
        assert_eq!(chain.levels.len(), 2);
        assert!(chain.output_len() >= 1 << 16);
        let seq = chain.expand(1 << 16).unwrap();
        for i in 0..(1u64 << 16) {
            assert_eq!(chain.prg_bit(i).unwrap(), seq.get(i as usize), "bit {i}");
        }
        assert!(matches!(chain.prg_bit(chain.output_len()), Err(PrgError::IndexOutOfRange { .. })));
    }

    #[test]
    fn collapsed_chain_matches() {
        let two = PrgChain::new(Seed::from_u64(5), 8, 1.7);
        assert_eq!(two.levels.len(), 2);
        let mid = two.levels[1].generate(&SeedSource::Keyed(Seed::from_u64(5)).prefix(two.levels[1].seed_len())).unwrap();
        let one = PrgChain {
            levels: vec![two.levels[0].clone()],
            top: mid.slice(0, two.levels[0].seed_len()),
            ..two.clone()
        };
        let a = two.expand(4096).unwrap();
        let b = one.expand(4096).unwrap();
        assert_eq!(a, b);
        for i in [0u64, 17, 999, 4095] {
            assert_eq!(two.prg_bit(i).unwrap(), one.prg_bit(i).unwrap());
        }
    }

    #[test]
    fn locality_budget_holds() {
        for s_log2 in [10u32, 14] {
            let chain = PrgChain::new(Seed::from_u64(s_log2 as u64), s_log2, 1.5);
            assert_eq!(chain.levels.len(), 2);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let budget = chain.locality_budget();
            let mut worst = 0;
            for _ in 0..10_000 {
                let idx = rng.random_range(0..chain.output_len());
                let (_, stats) = chain.prg_bit_counted(idx).unwrap();
                worst = worst.max(stats.seed_touches);
            }
            assert!((worst as f64) <= budget, "S=2^{s_log2}: {worst} > {budget}");
        }
    }

    #[test]
    fn expanded_stream_statistics() {
        let chain = PrgChain::new(Seed::from_u64(2024), 10, 2.0);
        let bits = chain.expand(1_000_000).unwrap();
        let ones = bits.count_ones() as f64;
        assert!((ones - 500_000.0).abs() < 3.0 * 500.0, "monobit {ones}");
        let mut counts = [0f64; 256];
        for b in bits.bytes() {
            counts[b as usize] += 1.0;
        }
        let expect = (bits.len() / 8) as f64 / 256.0;
        let stat: f64 = counts.iter().map(|c| (c - expect).powi(2) / expect).sum();
        let p = chi2_upper_p(stat, 255.0);
        assert!(p > 0.001, "chi2={stat} p={p}");
    }

    #[test]
    fn hash_constant_term_and_bernoulli_marginal() {
        let h = HashFamily { kind: HashKind::Pairwise, modulus: FIELD, coeffs: vec![42, 7], source_offset: None };
        assert_eq!(h.eval(0), 42);
        assert_eq!(h.eval(1), 49);
        assert_eq!(bernoulli_threshold(1.0), FIELD);
        assert_eq!(bernoulli_threshold(0.0), 0);
        let t = bernoulli_threshold(0.25);
        assert!(((t as f64 / FIELD as f64) - 0.25).abs() <= 1.0 / FIELD as f64);
    }

    #[test]
    fn pairwise_joint_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = 0.2;
        let t = bernoulli_threshold(p);
        let trials = 100_000;
        let mut both = 0usize;
        for k in 0..trials {
            let h = HashFamily::random(HashKind::Pairwise, &mut rng);
            let (i, j) = (k as u64 % 1000, 1000 + k as u64 % 777);
            if h.bernoulli(i, t) && h.bernoulli(j, t) {
                both += 1;
            }
        }
        let mean = p * p;
        let sigma = (mean * (1.0 - mean) / trials as f64).sqrt();
        assert!((both as f64 / trials as f64 - mean).abs() < 4.0 * sigma);
    }

    #[test]
    fn four_wise_joint_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let trials = 100_000;
        let keys = [3u64, 10, 99, 12345];
        let mut sum = 0.0;
        for _ in 0..trials {
            let h = HashFamily::random(HashKind::KWise(4), &mut rng);
            sum += keys.iter().map(|&k| h.sign(k) as f64).product::<f64>();
        }
        // E[s1 s2 s3 s4] = 0 under 4-wise independence; variance 1 per trial.
        assert!((sum / trials as f64).abs() < 4.0 / (trials as f64).sqrt());
    }

    #[test]
    fn prg_hash_source_is_deterministic() {
        let mut a = PrgHashSource::new(Seed::from_u64(1), 10);
        let mut b = PrgHashSource::new(Seed::from_u64(1), 10);
        for _ in 0..10 {
            assert_eq!(a.next(HashKind::KWise(4)), b.next(HashKind::KWise(4)));
        }
        let mut c = PrgHashSource::new(Seed::from_u64(2), 10);
        assert_ne!(a.stream, c.stream);
        let _ = c.next(HashKind::Pairwise);
    }
}
