// Curves to CSV and back, then a fit written as the versioned JSON document
// and per-curve tables.
//
//     cargo run --release --example csv_io

use sparse_kma::engine::{fit, EngineConfig, Mode};
use sparse_kma::error::Result;
use sparse_kma::io::{curves_csv, fit_document, labels_csv, read_curves, warps_csv};
use sparse_kma::sim::{generate, SimSpec};

pub struct Exported {
    pub curves_csv: Vec<u8>,
    pub reread: usize,
    pub document: serde_json::Value,
    pub warps_csv: String,
    pub labels_csv: String,
}

pub fn run_example() -> Result<Exported> {
    let data = generate(&SimSpec {
        n_per_class: 6,
        ..SimSpec::sim1(1)
    })?;
    let bytes = curves_csv(&data.curves)?;
    let curves = read_curves(bytes.as_slice())?;
    let config = EngineConfig {
        mode: Mode::Kma,
        max_iter: 5,
        ..EngineConfig::default()
    };
    let result = fit(&curves, &config)?;
    Ok(Exported {
        reread: curves.len(),
        curves_csv: bytes,
        document: fit_document(&result),
        warps_csv: String::from_utf8(warps_csv(&result.curve_ids, &result.warps)?).expect("utf-8"),
        labels_csv: String::from_utf8(labels_csv(&result.curve_ids, result.labels.labels())?).expect("utf-8"),
    })
}

fn main() -> Result<()> {
    let e = run_example()?;
    println!("{} curves, {} bytes of CSV", e.reread, e.curves_csv.len());
    println!("schema {}", e.document["schema"]);
    print!("{}", e.warps_csv.lines().take(4).map(|l| format!("{l}\n")).collect::<String>());
    print!("{}", e.labels_csv.lines().take(4).map(|l| format!("{l}\n")).collect::<String>());
    Ok(())
}
