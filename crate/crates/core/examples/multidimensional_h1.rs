// Shape clustering of three-dimensional curves with the H1 similarity,
// averaged over dimensions.
//
//     cargo run --release --example multidimensional_h1

use sparse_kma::curve::SampledCurve;
use sparse_kma::engine::{fit, EngineConfig, FitResult};
use sparse_kma::error::Result;
use sparse_kma::grid::{Interval, UniformGrid};
use sparse_kma::metrics::MetricKind;

pub fn curves(n: usize) -> Result<(Vec<SampledCurve>, Vec<usize>)> {
    let domain = Interval::new(0.0, 1.0)?;
    let grid = UniformGrid::spanning(domain, 120)?;
    let mut out = Vec::new();
    let mut truth = Vec::new();
    for i in 0..n {
        let class = i % 2;
        let shift = 0.03 * ((i * 7 % 11) as f64 / 10.0 - 0.5);
        let scale = 1.0 + 0.2 * ((i * 5 % 9) as f64 / 8.0 - 0.5);
        out.push(SampledCurve::from_fn(format!("vessel_{i:02}"), domain, grid, 3, move |d, x| {
            let t = x + shift;
            let freq = if class == 0 { 2.0 } else { 4.0 };
            scale * match d {
                0 => (freq * std::f64::consts::PI * t).sin(),
                1 => (freq * std::f64::consts::PI * t).cos(),
                _ => t * (1.0 + class as f64),
            }
        })?);
        truth.push(class);
    }
    Ok((out, truth))
}

pub fn run_example() -> Result<(FitResult, Vec<usize>)> {
    let (data, truth) = curves(16)?;
    let config = EngineConfig {
        metric: MetricKind::H1,
        m: 0.3,
        resolution: 100,
        max_iter: 15,
        ..EngineConfig::default()
    };
    Ok((fit(&data, &config)?, truth))
}

fn main() -> Result<()> {
    let (fit, truth) = run_example()?;
    println!("labels {:?}", fit.labels.labels());
    println!("truth  {truth:?}");
    let mean = fit.within.iter().sum::<f64>() / fit.within.len() as f64;
    println!("mean within-cluster similarity {mean:.4}");
    Ok(())
}
