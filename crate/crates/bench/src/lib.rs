//! Criterion benchmarks for the store and parser live in `benches/`.
