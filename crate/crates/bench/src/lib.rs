//! Criterion benchmarks for the simulator, networks, boosted trees and
//! offline training loops. Run with `cargo bench -p simstore-bench`.
