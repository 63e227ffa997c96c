//! Benchmarks for pipesched live in `benches/`.
