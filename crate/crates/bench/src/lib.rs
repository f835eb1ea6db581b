//! Criterion benchmarks for the processing pipeline; see `benches/`.
