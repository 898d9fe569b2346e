use criterion::{criterion_group, criterion_main};

criterion_group!(benches, spectral_sketch_bench::benchmarks);
criterion_main!(benches);
