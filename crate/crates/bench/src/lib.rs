//! Criterion benchmarks for `discount-core`; see `benches/`.
