//! Criterion benchmarks for `pdflow`; see `benches/solvers.rs`.
