//! Criterion benchmarks for pdolab live in `benches/`.
