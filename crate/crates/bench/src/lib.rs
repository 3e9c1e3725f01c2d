//! Criterion benchmarks for `qtangent-core`; see `benches/`.
