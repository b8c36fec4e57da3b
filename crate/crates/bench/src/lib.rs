//! Criterion benchmarks for the quantest kernels; see `benches/`.
