// Affine warps, the L2 distance and the H1 similarity on sampled curves.
//
//     cargo run --example warping_and_metrics

use sparse_kma::curve::SampledCurve;
use sparse_kma::error::Result;
use sparse_kma::grid::{Interval, UniformGrid};
use sparse_kma::metrics::{dist_l2, similarity_h1};
use sparse_kma::warp::AffineWarp;

pub struct Report {
    pub distance: f64,
    pub warped_distance: f64,
    pub similarity: f64,
    pub scaled_similarity: f64,
}

pub fn run_example() -> Result<Report> {
    let domain = Interval::new(0.0, 1.0)?;
    let grid = UniformGrid::spanning(domain, 1001)?;
    let f = SampledCurve::from_fn("f", domain, grid, 1, |_, x| 2.0 * x + 1.0)?;
    let g = SampledCurve::from_fn("g", domain, grid, 1, |_, x| x * x)?;

    // The distance is unchanged when both curves share a warp.
    let h = AffineWarp::new(1.05, -0.02)?;
    let target = UniformGrid::spanning(h.preimage(&domain), 1001)?;
    let distance = dist_l2(&f, &g)?;
    let warped_distance = dist_l2(&f.warp(&h, &target)?, &g.warp(&h, &target)?)?;

    // Shape similarity ignores ordinate scale and offset.
    let wave = SampledCurve::from_fn("wave", domain, grid, 1, |_, x| (6.0 * x).sin())?;
    let scaled = SampledCurve::from_fn("scaled", domain, grid, 1, |_, x| 3.0 * (6.0 * x).sin() + 7.0)?;
    let similarity = similarity_h1(&wave, &g)?;
    let scaled_similarity = similarity_h1(&wave, &scaled)?;

    Ok(Report {
        distance,
        warped_distance,
        similarity,
        scaled_similarity,
    })
}

fn main() -> Result<()> {
    let r = run_example()?;
    println!("d(f, g)           = {:.9}", r.distance);
    println!("d(f∘h, g∘h)       = {:.9}", r.warped_distance);
    println!("rho(wave, x^2)    = {:.6}", r.similarity);
    println!("rho(wave, 3wave+7) = {:.6}", r.scaled_similarity);
    Ok(())
}
