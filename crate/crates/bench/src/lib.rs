//! Criterion benchmarks for the simulation and learning hot paths live under
//! `benches/`; run them with `cargo bench -p vipguard-bench`.
