//! Workloads for the criterion suite: turnstile streams, sketch ingestion
//! and per-variant decoding on bounded-degree graphs.

use std::hint::black_box;
use std::time::Duration;

use criterion::{BenchmarkId, Criterion, Throughput};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_sketch::generators::bounded_degree;
use spectral_sketch::{
    build_embedding, decode, new_stack, CoarseSparsifier, EdgeKey, EdgeUpdate, GlobalParams, Graph, PrgChain, Seed,
    SketchStack, Variant,
};

/// Insert-everything stream for `g`, with `churn` extra insert/delete pairs
/// interleaved, shuffled.
pub fn turnstile_stream(g: &Graph, churn: usize, seed: u64) -> Vec<EdgeUpdate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ups: Vec<EdgeUpdate> = g.edges().map(EdgeUpdate::insert).collect();
    let n = g.n();
    let mut extra = 0;
    while extra < churn {
        let Ok(e) = EdgeKey::new(rng.random_range(0..n), rng.random_range(0..n)) else { continue };
        if g.contains(e) {
            continue;
        }
        ups.push(EdgeUpdate::insert(e));
        ups.push(EdgeUpdate::delete(e));
        extra += 1;
    }
    ups.shuffle(&mut rng);
    // A deletion must follow its insertion.
    let mut live = std::collections::HashSet::new();
    let mut pending = Vec::new();
    let mut out = Vec::with_capacity(ups.len());
    for u in ups {
        if u.delta < 0 && !live.contains(&u.e) {
            pending.push(u);
            continue;
        }
        if u.delta > 0 {
            live.insert(u.e);
        } else {
            live.remove(&u.e);
        }
        out.push(u);
    }
    out.extend(pending);
    out
}

pub fn ingest(params: &GlobalParams, seed: Seed, ups: &[EdgeUpdate]) -> SketchStack {
    let mut s = new_stack(params, seed);
    for u in ups {
        s.apply_update(*u).expect("well-formed stream");
    }
    s
}

pub fn params(n: usize, variant: Variant) -> GlobalParams {
    GlobalParams::new(n, 0.5, variant, None).with_qjl(8 * (n as f64).log2().ceil() as usize)
}

const VARIANTS: [Variant; 3] = [Variant::Brute, Variant::N32, Variant::BallCarve];

fn bench_ingest(c: &mut Criterion) {
    let mut group = c.benchmark_group("ingest");
    let n = 64;
    let g = bounded_degree(n, 6, 1);
    let ups = turnstile_stream(&g, 100, 2);
    group.throughput(Throughput::Elements(ups.len() as u64));
    for v in VARIANTS {
        let p = params(n, v);
        let template = new_stack(&p, Seed::from_u64(3));
        group.bench_function(BenchmarkId::new(v.to_string(), n), |b| {
            b.iter(|| {
                let mut s = template.clone();
                for u in &ups {
                    s.apply_update(*u).unwrap();
                }
                black_box(s)
            })
        });
    }
    group.finish();
}

fn bench_decode(c: &mut Criterion) {
    let mut group = c.benchmark_group("decode");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for n in [64usize, 128] {
        let g = bounded_degree(n, 4, n as u64);
        let ups = turnstile_stream(&g, 0, 5);
        for v in VARIANTS {
            let p = params(n, v);
            let stack = ingest(&p, Seed::from_u64(7), &ups);
            group.bench_with_input(BenchmarkId::new(v.to_string(), n), &stack, |b, s| {
                b.iter(|| black_box(decode(&p, s, Seed::from_u64(8)).unwrap()))
            });
        }
    }
    group.finish();
}

fn bench_primitives(c: &mut Criterion) {
    let mut group = c.benchmark_group("primitives");
    let g = bounded_degree(256, 4, 9).to_weighted();
    let k = CoarseSparsifier::new(g, 1.0);
    group.bench_function("embedding n=256 q=64", |b| {
        b.iter(|| black_box(build_embedding(&k, 64, Seed::from_u64(1)).unwrap()))
    });
    let chain = PrgChain::new(Seed::from_u64(2), 10, 1.6);
    group.throughput(Throughput::Elements(1 << 14));
    group.bench_function("prg expand 2^14 bits", |b| b.iter(|| black_box(chain.expand(1 << 14).unwrap())));
    group.bench_function("prg random access 2^14 bits", |b| {
        b.iter(|| (0..1u64 << 14).fold(false, |acc, i| acc ^ chain.prg_bit(i * 3).unwrap()))
    });
    group.finish();
}

pub fn benchmarks(c: &mut Criterion) {
    bench_ingest(c);
    bench_decode(c);
    bench_primitives(c);
}
