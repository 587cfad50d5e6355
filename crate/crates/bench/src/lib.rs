//! Criterion benchmarks for the numerical core; see `benches/`.
