//! Criterion benchmarks for the processing chain; see `benches/`.
