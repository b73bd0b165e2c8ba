//! Criterion benchmarks of the core kernels live in `benches/kernels.rs`;
//! run them with `cargo bench -p lorentzkit-bench`.
