//! Runs each example's entry point and checks its headline result.

macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!("../examples/", stringify!($name), ".rs"));
        }
    };
}

example!(warping_and_metrics);
example!(weight_solver);
example!(simulation_one);
example!(sparse_vs_kma);
example!(tune_k);
example!(multidimensional_h1);
example!(csv_io);

use sparse_kma::engine::Mode;

#[test]
fn warping_and_metrics_runs() {
    let r = warping_and_metrics::run_example().unwrap();
    assert!((r.distance - r.warped_distance).abs() < 1e-9);
    assert!((r.scaled_similarity - 1.0).abs() < 1e-9);
    assert!(r.similarity.abs() < 1.0);
}

#[test]
fn weight_solver_selects_the_bump() {
    let w = weight_solver::run_example().unwrap();
    let inside: f64 = w
        .grid()
        .points()
        .zip(w.values())
        .filter(|(x, _)| (0.6..=0.8).contains(x))
        .map(|(_, v)| v * v * w.grid().step())
        .sum();
    assert!(inside > 1.0 - 1e-9, "mass on the bump {inside}");
}

#[test]
fn simulation_one_runs() {
    let out = simulation_one::run_example().unwrap();
    assert!(out.misclassification <= 0.5);
    assert_eq!(out.fit.labels.len(), 30);
    assert!(out.fit.weight.zero_measure() >= 0.4 * out.fit.grid.measure() - out.fit.grid.step());
}

#[test]
fn sparse_vs_kma_pairs_datasets() {
    let s = sparse_vs_kma::run_example().unwrap();
    assert_eq!(s.rows.len(), 2);
    let sparse: Vec<_> = s.runs.iter().filter(|r| r.mode == Mode::Sparse).collect();
    let kma: Vec<_> = s.runs.iter().filter(|r| r.mode == Mode::Kma).collect();
    assert_eq!(sparse[0].digest, kma[0].digest);
    assert!(s.rows.iter().all(|r| r.sd_misclassification.is_none()));
}

#[test]
fn tune_k_reports_adjacent_tests() {
    let r = tune_k::run_example().unwrap();
    assert_eq!(r.per_k.iter().map(|s| s.k).collect::<Vec<_>>(), [2, 3, 4]);
    assert_eq!(r.tests.len(), 2);
    assert!(r.tests.iter().all(|t| (0.0..=1.0).contains(&t.p_value)));
}

#[test]
fn multidimensional_h1_recovers_shapes() {
    let (fit, truth) = multidimensional_h1::run_example().unwrap();
    let err = sparse_kma::sim::misclassification(fit.labels.labels(), &truth).unwrap();
    assert_eq!(err, 0.0);
    assert!(fit.within.iter().all(|s| *s <= 1.0 + 1e-12));
}

#[test]
fn csv_io_round_trips() {
    let e = csv_io::run_example().unwrap();
    assert_eq!(e.reread, 12);
    assert_eq!(e.document["schema"], "sparse-kma/v1");
    assert_eq!(e.warps_csv.lines().next(), Some("curve_id,a,b"));
    assert_eq!(e.labels_csv.lines().count(), 13);
}
