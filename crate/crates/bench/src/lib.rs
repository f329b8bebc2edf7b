//! Criterion benchmarks for the lerw3d toolkit live in `benches/`.
