//! CSV and JSON readers and writers.
//!
//! Curves use the long format `curve_id,dim,x,value` with one row per
//! observed sample. Numbers are written with 12 significant digits.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde_json::{json, Value};

use crate::curve::SampledCurve;
use crate::engine::{DiagnosticsReport, FitResult, SCHEMA};
use crate::error::{Error, Result};
use crate::grid::{is_missing, Interval, UniformGrid, MISSING};
use crate::warp::AffineWarp;

/// `%.12g`-style formatting.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `v` rounded to 12 significant digits, `None` when missing.
pub fn round12(v: f64) -> Option<f64> {
    if v.is_finite() {
        Some(fmt_num(v).parse().expect("formatted number parses"))
    } else {
        None
    }
}

fn num(v: f64) -> Value {
    round12(v).map_or(Value::Null, |x| json!(x))
}

fn opt_num(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

#[derive(Debug, serde::Deserialize)]
struct CurveRow {
    curve_id: String,
    dim: usize,
    x: f64,
    value: f64,
}

/// Reads long-format curves. Each curve's abscissae must lie on a uniform
/// grid; points absent from some dimension are treated as missing.
pub fn read_curves<R: Read>(reader: R) -> Result<Vec<SampledCurve>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for needed in ["curve_id", "dim", "x", "value"] {
        if !headers.iter().any(|h| h == needed) {
            return Err(Error::Data(format!("curve CSV lacks column `{needed}`")));
        }
    }
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(usize, f64, f64)>> = HashMap::new();
    for (line, rec) in rdr.deserialize::<CurveRow>().enumerate() {
        let r = rec.map_err(|e| Error::Data(format!("row {}: {e}", line + 2)))?;
        if !r.x.is_finite() || !r.value.is_finite() {
            return Err(Error::Data(format!("row {}: non-finite x or value", line + 2)));
        }
        let entry = rows.entry(r.curve_id.clone()).or_insert_with(|| {
            order.push(r.curve_id.clone());
            Vec::new()
        });
        entry.push((r.dim, r.x, r.value));
    }
    if order.is_empty() {
        return Err(Error::EmptyInput("curve CSV has no rows"));
    }
    let curves: Vec<SampledCurve> = order
        .iter()
        .map(|id| assemble(id, &rows[id]))
        .collect::<Result<_>>()?;
    let dims = curves[0].dims();
    if let Some(c) = curves.iter().find(|c| c.dims() != dims) {
        return Err(Error::DimensionMismatch {
            left: dims,
            right: c.dims(),
        });
    }
    Ok(curves)
}

fn assemble(id: &str, samples: &[(usize, f64, f64)]) -> Result<SampledCurve> {
    let bad = |reason: String| Error::InvalidCurve {
        id: id.to_string(),
        reason,
    };
    let dims = samples.iter().map(|s| s.0).max().expect("non-empty") + 1;
    let mut xs: Vec<f64> = samples.iter().map(|s| s.1).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 2 {
        return Err(bad("fewer than 2 distinct abscissae".into()));
    }
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let min_gap = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let steps = ((hi - lo) / min_gap).round();
    if steps > 1e6 {
        return Err(bad(format!("abscissae spacing {min_gap} is too fine for a uniform grid")));
    }
    let count = steps as usize + 1;
    let grid = UniformGrid::new(lo, (hi - lo) / (count - 1) as f64, count)?;
    let tol = 1e-6 * grid.step();
    let mut values = vec![vec![MISSING; count]; dims];
    for &(d, x, v) in samples {
        let j = ((x - lo) / grid.step()).round() as usize;
        if j >= count || (grid.point(j) - x).abs() > tol {
            return Err(bad(format!("abscissa {x} is off the uniform grid (step {})", grid.step())));
        }
        if !is_missing(values[d][j]) {
            return Err(bad(format!("duplicate sample at dim {d}, x = {x}")));
        }
        values[d][j] = v;
    }
    SampledCurve::new(id, Interval::new(lo, hi)?, grid, values)
}

pub fn read_curves_path(path: &Path) -> Result<Vec<SampledCurve>> {
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).context(format!("opening {}", path.display())))?;
    read_curves(std::io::BufReader::new(file)).map_err(|e| e.context(format!("reading {}", path.display())))
}

pub fn write_curves<W: Write>(writer: W, curves: &[SampledCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["curve_id", "dim", "x", "value"])?;
    for c in curves {
        for d in 0..c.dims() {
            for (j, x) in c.grid().points().enumerate() {
                let v = c.values(d)[j];
                if !is_missing(v) {
                    w.write_record([c.id().to_string(), d.to_string(), fmt_num(x), fmt_num(v)])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn curves_csv(curves: &[SampledCurve]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_curves(&mut buf, curves)?;
    Ok(buf)
}

/// One row of a truth table.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub curve_id: String,
    /// 0-based.
    pub label: usize,
    pub warp: AffineWarp,
}

pub fn truth_csv(rows: &[TruthRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["curve_id", "true_label", "true_a", "true_b"])?;
    for r in rows {
        w.write_record([
            r.curve_id.clone(),
            (r.label + 1).to_string(),
            fmt_num(r.warp.a()),
            fmt_num(r.warp.b()),
        ])?;
    }
    into_bytes(w)
}

/// Reads `curve_id` and a 1-based label column (`true_label` or `cluster`).
pub fn read_labels<R: Read>(reader: R) -> Result<Vec<(String, usize)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = headers
        .iter()
        .position(|h| h == "curve_id")
        .ok_or_else(|| Error::Data("label CSV lacks column `curve_id`".into()))?;
    let label_col = headers
        .iter()
        .position(|h| h == "true_label" || h == "cluster")
        .ok_or_else(|| Error::Data("label CSV lacks a `true_label` or `cluster` column".into()))?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let label: usize = rec[label_col]
            .parse()
            .map_err(|_| Error::Data(format!("row {}: label `{}` is not a positive integer", line + 2, &rec[label_col])))?;
        if label == 0 {
            return Err(Error::Data(format!("row {}: labels are 1-based", line + 2)));
        }
        out.push((rec[id_col].to_string(), label - 1));
    }
    Ok(out)
}

pub fn read_labels_path(path: &Path) -> Result<Vec<(String, usize)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).context(format!("opening {}", path.display())))?;
    read_labels(file).map_err(|e| e.context(format!("reading {}", path.display())))
}

pub(crate) fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn warps_csv(ids: &[String], warps: &[AffineWarp]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["curve_id", "a", "b"])?;
    for (id, h) in ids.iter().zip(warps) {
        w.write_record([id.clone(), fmt_num(h.a()), fmt_num(h.b())])?;
    }
    into_bytes(w)
}

pub fn labels_csv(ids: &[String], labels: &[usize]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["curve_id", "cluster"])?;
    for (id, l) in ids.iter().zip(labels) {
        w.write_record([id.clone(), (l + 1).to_string()])?;
    }
    into_bytes(w)
}

pub fn weight_csv(fit: &FitResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "w"])?;
    for (x, v) in fit.grid.points().zip(fit.weight.values()) {
        w.write_record([fmt_num(x), fmt_num(*v)])?;
    }
    into_bytes(w)
}

pub fn templates_csv(fit: &FitResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cluster", "dim", "x", "value"])?;
    for t in &fit.templates {
        let c = t.curve();
        for d in 0..c.dims() {
            for (x, v) in c.grid().points().zip(c.values(d)) {
                if !is_missing(*v) {
                    w.write_record([(t.cluster() + 1).to_string(), d.to_string(), fmt_num(x), fmt_num(*v)])?;
                }
            }
        }
    }
    into_bytes(w)
}

pub fn history_csv(fit: &FitResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "iteration",
        "objective",
        "mean_score",
        "weight_change",
        "labels_changed",
        "repairs",
        "normalization_error",
    ])?;
    for r in &fit.history {
        w.write_record([
            r.iteration.to_string(),
            r.objective.map(fmt_num).unwrap_or_default(),
            fmt_num(r.mean_score),
            fmt_num(r.weight_change),
            r.labels_changed.to_string(),
            r.repairs.to_string(),
            fmt_num(r.normalization_error),
        ])?;
    }
    into_bytes(w)
}

/// Versioned JSON document of a fit, numbers rounded to 12 digits.
pub fn fit_document(fit: &FitResult) -> Value {
    let rows = |rows: &[Vec<f64>]| -> Value { rows.iter().map(|r| r.iter().map(|v| num(*v)).collect::<Vec<_>>()).collect() };
    let c = &fit.config;
    json!({
        "schema": SCHEMA,
        "config": {
            "k": c.k,
            "metric": c.metric.to_string(),
            "m": num(c.m),
            "eps_a": num(c.eps_a),
            "eps_b": num(c.eps_b),
            "tol": num(c.tol),
            "max_iter": c.max_iter,
            "resolution": c.resolution,
            "seed": c.seed,
            "mode": c.mode.to_string(),
            "robust_templates": c.robust_templates,
            "stop_on_weight_change": c.stop_on_weight_change,
        },
        "grid": {
            "start": num(fit.grid.start()),
            "step": num(fit.grid.step()),
            "count": fit.grid.count(),
        },
        "curves": fit.curve_ids.iter().enumerate().map(|(i, id)| json!({
            "id": id,
            "cluster": fit.labels.label(i) + 1,
            "a": num(fit.warps[i].a()),
            "b": num(fit.warps[i].b()),
            "score": num(fit.scores[i]),
        })).collect::<Vec<_>>(),
        "weight": fit.weight.values().iter().map(|v| num(*v)).collect::<Vec<_>>(),
        "templates": fit.templates.iter().map(|t| json!({
            "cluster": t.cluster() + 1,
            "values": rows(t.curve().all_values()),
            "derivative": t.derivative().map(rows),
        })).collect::<Vec<_>>(),
        "history": fit.history.iter().map(|r| json!({
            "iteration": r.iteration,
            "objective": opt_num(r.objective),
            "mean_score": num(r.mean_score),
            "weight_change": num(r.weight_change),
            "labels_changed": r.labels_changed,
        })).collect::<Vec<_>>(),
        "iterations": fit.iterations,
        "converged": fit.converged,
    })
}

pub fn json_bytes(v: &Value) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

/// `k,curve_id,value` rows of a tuning sweep.
pub fn diagnostics_csv(report: &DiagnosticsReport, ids: &[String]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "curve_id", "value"])?;
    for s in &report.per_k {
        for (id, v) in ids.iter().zip(&s.scores) {
            w.write_record([s.k.to_string(), id.clone(), fmt_num(*v)])?;
        }
    }
    into_bytes(w)
}

pub fn rank_tests_csv(report: &DiagnosticsReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k_from", "k_to", "median_from", "median_to", "u", "z", "p_value"])?;
    for t in &report.tests {
        let med = |k: usize| report.per_k.iter().find(|s| s.k == k).map_or(f64::NAN, |s| s.median);
        w.write_record([
            t.k_from.to_string(),
            t.k_to.to_string(),
            fmt_num(med(t.k_from)),
            fmt_num(med(t.k_to)),
            fmt_num(t.u),
            fmt_num(t.z),
            fmt_num(t.p_value),
        ])?;
    }
    into_bytes(w)
}

/// Writes through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::from(e).context(format!("writing {}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(123456.7890123456), "123456.789012");
        assert_eq!(fmt_num(1e-7), "1e-07");
        assert_eq!(fmt_num(1.5e15), "1.5e+15");
        assert_eq!(fmt_num(0.0001234), "0.0001234");
        assert_eq!(fmt_num(std::f64::consts::PI), "3.14159265359");
        assert_eq!(fmt_num(999999999999.9), "1e+12");
    }

    #[test]
    fn curve_round_trip() {
        let g = UniformGrid::spanning(Interval::new(0.0, 1.0).unwrap(), 11).unwrap();
        let a = SampledCurve::from_fn("a", g.interval(), g, 2, |d, x| x + d as f64).unwrap();
        let b = SampledCurve::from_fn("b", Interval::new(0.2, 0.7).unwrap(), g, 2, |d, x| x * x - d as f64).unwrap();
        let bytes = curves_csv(&[a.clone(), b.clone()]).unwrap();
        let back = read_curves(bytes.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].id(), "a");
        assert_eq!(back[1].grid().count(), 6);
        for (x, v) in back[1].grid().points().zip(back[1].values(1)) {
            assert!((v - (x * x - 1.0)).abs() < 1e-11);
        }
        assert_eq!(curves_csv(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_bad_csv() {
        let non_uniform = "curve_id,dim,x,value\na,0,0,1\na,0,0.1,1\na,0,0.25,1\n";
        assert!(matches!(read_curves(non_uniform.as_bytes()), Err(Error::InvalidCurve { .. })));
        let missing_col = "curve_id,dim,x\na,0,0\n";
        assert!(read_curves(missing_col.as_bytes()).is_err());
        let empty_value = "curve_id,dim,x,value\na,0,0,\na,0,1,2\n";
        assert!(read_curves(empty_value.as_bytes()).is_err());
        let dup = "curve_id,dim,x,value\na,0,0,1\na,0,0,2\na,0,1,2\n";
        assert!(read_curves(dup.as_bytes()).is_err());
    }

    #[test]
    fn gaps_become_missing() {
        let csv = "curve_id,dim,x,value\na,0,0,1\na,0,0.5,2\na,0,1.5,4\na,0,2,5\n";
        let c = &read_curves(csv.as_bytes()).unwrap()[0];
        assert_eq!(c.grid().count(), 5);
        assert!(is_missing(c.values(0)[2]));
    }

    #[test]
    fn label_files() {
        let rows = vec![TruthRow {
            curve_id: "x".into(),
            label: 1,
            warp: AffineWarp::new(1.05, -0.02).unwrap(),
        }];
        let bytes = truth_csv(&rows).unwrap();
        assert_eq!(String::from_utf8(bytes.clone()).unwrap(), "curve_id,true_label,true_a,true_b\nx,2,1.05,-0.02\n");
        assert_eq!(read_labels(bytes.as_slice()).unwrap(), vec![("x".to_string(), 1)]);
        assert!(read_labels("curve_id,cluster\nx,0\n".as_bytes()).is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
