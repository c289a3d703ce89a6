// Sparse fit of a simulated data set whose groups differ only on x > 0.
//
//     cargo run --release --example simulation_one [seed] [curves-per-class]

use sparse_kma::engine::{fit, FitResult};
use sparse_kma::error::Result;
use sparse_kma::sim::{generate, misclassification, Scenario, SimSpec};

pub struct Outcome {
    pub fit: FitResult,
    pub misclassification: f64,
}

pub fn run_example_with(seed: u64, n_per_class: usize) -> Result<Outcome> {
    let spec = SimSpec {
        n_per_class,
        ..SimSpec::sim1(seed)
    };
    let data = generate(&spec)?;
    let config = Scenario::Sim1.engine_config();
    let fit = fit(&data.curves, &config)?;
    let misclassification = misclassification(fit.labels.labels(), &data.true_labels)?;
    Ok(Outcome { fit, misclassification })
}

pub fn run_example() -> Result<Outcome> {
    run_example_with(3, 15)
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let out = run_example_with(seed, n)?;
    let f = &out.fit;
    println!("misclassification {:.3} after {} iterations (converged: {})", out.misclassification, f.iterations, f.converged);
    let support: Vec<f64> = f.grid.points().zip(f.weight.values()).filter(|(_, w)| **w > 0.0).map(|(x, _)| x).collect();
    if let (Some(lo), Some(hi)) = (support.first(), support.last()) {
        println!("weight support within [{lo:.2}, {hi:.2}]");
    }
    Ok(())
}
