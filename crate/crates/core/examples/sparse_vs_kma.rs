// Sparse fit and plain K-mean alignment on the same simulated data sets,
// whose groups differ on a small part of the domain.
//
//     cargo run --release --example sparse_vs_kma [runs] [curves-per-class]

use sparse_kma::engine::{EngineConfig, Mode};
use sparse_kma::error::Result;
use sparse_kma::sim::{run_benchmark, BenchmarkSummary, Scenario, SimSpec};

pub fn run_example_with(runs: usize, n_per_class: usize) -> Result<BenchmarkSummary> {
    let spec = SimSpec {
        n_per_class,
        ..SimSpec::sim2(11)
    };
    let base = Scenario::Sim2.engine_config();
    let configs = [
        base.clone(),
        EngineConfig {
            mode: Mode::Kma,
            ..base
        },
    ];
    run_benchmark(&spec, &configs, runs)
}

pub fn run_example() -> Result<BenchmarkSummary> {
    run_example_with(1, 12)
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let runs = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let summary = run_example_with(runs, n)?;
    for r in &summary.rows {
        println!(
            "{:6} misclassification {:.3} (sd {}), {:.1} iterations, {:.1} s",
            r.mode,
            r.mean_misclassification,
            r.sd_misclassification.map_or("-".into(), |s| format!("{s:.3}")),
            r.mean_iterations,
            r.mean_seconds
        );
    }
    Ok(())
}
