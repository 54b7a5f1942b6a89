//! Criterion benchmarks of the core crate; see `benches/core.rs`.
