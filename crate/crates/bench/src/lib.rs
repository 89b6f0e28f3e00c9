//! Criterion benchmarks for the kernels live in `benches/`.
