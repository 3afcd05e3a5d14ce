//! Benchmarks for the design solvers live in `benches/`.
