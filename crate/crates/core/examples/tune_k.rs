// Sweep K and compare the within-cluster distances of consecutive values
// with a rank-sum test.
//
//     cargo run --release --example tune_k [curves-per-class]

use sparse_kma::engine::{tune_k, DiagnosticsReport};
use sparse_kma::error::Result;
use sparse_kma::sim::{generate, Scenario, SimSpec};

pub fn run_example_with(n_per_class: usize) -> Result<DiagnosticsReport> {
    let data = generate(&SimSpec {
        n_per_class,
        ..SimSpec::sim2(5)
    })?;
    tune_k(&data.curves, &Scenario::Sim2.engine_config(), 2..=4)
}

pub fn run_example() -> Result<DiagnosticsReport> {
    run_example_with(10)
}

fn main() -> Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let report = run_example_with(n)?;
    for s in &report.per_k {
        println!("K = {}: median distance {:.4}", s.k, s.median);
    }
    for t in &report.tests {
        println!("{} -> {}: p = {:.4}", t.k_from, t.k_to, t.p_value);
    }
    Ok(())
}
