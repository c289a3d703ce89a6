// Point-wise separation of two groups and the sparse weight it induces.
//
//     cargo run --example weight_solver

use sparse_kma::criterion::bcss_centroid_fast;
use sparse_kma::curve::SampledCurve;
use sparse_kma::error::Result;
use sparse_kma::grid::{Interval, UniformGrid};
use sparse_kma::partition::Partition;
use sparse_kma::weight::{solve_weight, verify_weight, SparsityParam, WeightFunction};

pub fn run_example() -> Result<WeightFunction> {
    let domain = Interval::new(0.0, 1.0)?;
    let grid = UniformGrid::spanning(domain, 101)?;
    // Groups share a baseline and differ by a bump on [0.6, 0.8].
    let mut curves = Vec::new();
    let mut labels = Vec::new();
    for i in 0..20 {
        let group = i % 2;
        let amp = 1.0 + 0.05 * ((i / 2) as f64 - 5.0) / 5.0;
        curves.push(SampledCurve::from_fn(format!("c{i}"), domain, grid, 1, move |_, x| {
            let bump = if group == 1 && (0.6..=0.8).contains(&x) { (5.0 * std::f64::consts::PI * (x - 0.6)).sin() } else { 0.0 };
            amp * x + bump
        })?);
        labels.push(group);
    }
    let partition = Partition::new(labels, 2)?;
    let g = bcss_centroid_fast(&curves, &partition)?;
    let w = solve_weight(&g, SparsityParam::new(0.8)?)?;
    let report = verify_weight(&w);
    assert!(report.satisfied(), "{report:?}");
    Ok(w)
}

fn main() -> Result<()> {
    let w = run_example()?;
    println!("norm {:.12}, zero measure {:.3}", w.norm(), w.zero_measure());
    for (x, v) in w.grid().points().zip(w.values()).step_by(5) {
        println!("{x:5.2} {}", "#".repeat((v * 10.0).round() as usize));
    }
    Ok(())
}
