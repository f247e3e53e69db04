//! Criterion benchmarks for `paoi-core`; see `benches/core.rs`.
