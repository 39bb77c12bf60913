//! Benchmarks of the simulation, FFS and model hot paths; see `benches/hot_paths.rs`.
