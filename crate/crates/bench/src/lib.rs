//! Benchmark-only crate; see `benches/pipeline.rs` for the measurements.
//! Run with `cargo bench -p synids-bench`.
