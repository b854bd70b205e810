//! CSV and JSON writers. Numbers are printed with 12 significant digits so
//! that repeated runs produce identical bytes.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::infotheory::KgrPoint;
use crate::optimizer::{OptimizationBudget, SweepResult};
use crate::phase_space::{SymmetryReport, WignerMap};

pub const SWEEP_COLUMNS: [&str; 10] = [
    "d", "T", "receiver", "K", "I_AB", "chi_BE", "alpha2_opt", "phases_opt", "ratio_vs_het", "error",
];

/// `x` with 12 significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        x.to_string()
    }
}

/// `x` rounded to 12 significant digits, for JSON output.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() {
        fmt_num(x).parse().expect("formatted float parses")
    } else {
        x
    }
}

fn fmt_phases(p: &[f64]) -> String {
    p.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(";")
}

fn out_err(e: impl std::fmt::Display) -> Error {
    Error::Output(e.to_string())
}

/// Output format of the CLI writers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::invalid(format!("unknown format '{s}' (expected csv or json)"))),
        }
    }
}

pub fn write_sweep_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS).map_err(out_err)?;
    for row in &result.rows {
        let ratio = row.ratio_vs_het.map(fmt_num).unwrap_or_default();
        let rec = match &row.point {
            Ok(p) => vec![
                fmt_num(row.distance_km),
                fmt_num(row.transmissivity),
                row.receiver.tag(),
                fmt_num(p.rate),
                fmt_num(p.mutual_information),
                fmt_num(p.holevo),
                fmt_num(p.alpha2),
                fmt_phases(&p.phases),
                ratio,
                String::new(),
            ],
            Err(e) => vec![
                fmt_num(row.distance_km),
                fmt_num(row.transmissivity),
                row.receiver.tag(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                ratio,
                e.to_string(),
            ],
        };
        w.write_record(&rec).map_err(out_err)?;
    }
    w.flush().map_err(out_err)
}

pub fn sweep_metadata(result: &SweepResult, budget: &OptimizationBudget) -> Value {
    json!({
        "beta": result.beta,
        "kappa": result.kappa,
        "seed": result.seed,
        "budget": budget,
        "receivers": result.receivers.iter().map(|r| r.tag()).collect::<Vec<_>>(),
    })
}

pub fn sweep_json(result: &SweepResult, budget: &OptimizationBudget) -> Value {
    let rows: Vec<Value> = result
        .rows
        .iter()
        .map(|row| {
            let mut v = json!({
                "d": round12(row.distance_km),
                "T": round12(row.transmissivity),
                "receiver": row.receiver.tag(),
                "ratio_vs_het": row.ratio_vs_het.map(round12),
            });
            match &row.point {
                Ok(p) => {
                    v["K"] = json!(round12(p.rate));
                    v["I_AB"] = json!(round12(p.mutual_information));
                    v["chi_BE"] = json!(round12(p.holevo));
                    v["alpha2_opt"] = json!(round12(p.alpha2));
                    v["phases_opt"] = json!(p.phases.iter().map(|&x| round12(x)).collect::<Vec<_>>());
                    v["error"] = Value::Null;
                }
                Err(e) => v["error"] = json!(e.to_string()),
            }
            v
        })
        .collect();
    json!({ "metadata": sweep_metadata(result, budget), "rows": rows })
}

pub fn write_json<W: Write, T: Serialize>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(out_err)?;
    out.write_all(b"\n").map_err(out_err)
}

pub fn write_sweep<W: Write>(
    result: &SweepResult,
    budget: &OptimizationBudget,
    format: Format,
    out: W,
) -> Result<()> {
    match format {
        Format::Csv => write_sweep_csv(result, out),
        Format::Json => write_json(&sweep_json(result, budget), out),
    }
}

/// A single optimized point with its heterodyne ratio.
pub fn point_json(point: &KgrPoint, ratio_vs_het: Option<f64>) -> Value {
    json!({
        "d": round12(point.distance_km),
        "T": round12(point.transmissivity),
        "beta": point.beta,
        "receiver": point.receiver,
        "K": round12(point.rate),
        "I_AB": round12(point.mutual_information),
        "chi_BE": round12(point.holevo),
        "alpha2_opt": round12(point.alpha2),
        "phases_opt": point.phases.iter().map(|&x| round12(x)).collect::<Vec<_>>(),
        "ratio_vs_het": ratio_vs_het.map(round12),
        "evaluations": point.evaluations,
        "budget_exhausted": point.budget_exhausted,
    })
}

pub fn wigner_diagnostics(map: &WignerMap, report: &SymmetryReport) -> Value {
    json!({
        "nodes": map.grid.nodes(),
        "extent": map.grid.extent(),
        "min_W": round12(map.min_value),
        "min_location": [round12(map.min_location.0), round12(map.min_location.1)],
        "max_W": round12(map.max_value),
        "integral": round12(map.normalization_integral),
        "boundary_max": round12(map.boundary_max),
        "boundary_warning": map.boundary_warning,
        "imaginary_residue": round12(map.imaginary_residue),
        "normalized": map.normalized,
        "peaks": report.peaks.iter().map(|p| json!({
            "x": round12(p.x), "y": round12(p.y), "height": round12(p.height)
        })).collect::<Vec<_>>(),
    })
}

/// `x, y, W` triplets, `x` outer.
pub fn write_wigner_csv<W: Write>(map: &WignerMap, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "W"]).map_err(out_err)?;
    let xs = map.grid.coordinates();
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in xs.iter().enumerate() {
            w.write_record([fmt_num(x), fmt_num(y), fmt_num(map.values[(i, j)])])
                .map_err(out_err)?;
        }
    }
    w.flush().map_err(out_err)
}

pub fn wigner_json(map: &WignerMap, report: &SymmetryReport) -> Value {
    let xs = map.grid.coordinates();
    let rows: Vec<Vec<f64>> = (0..xs.len())
        .map(|i| (0..xs.len()).map(|j| round12(map.values[(i, j)])).collect())
        .collect();
    json!({
        "diagnostics": wigner_diagnostics(map, report),
        "x": xs.iter().map(|&x| round12(x)).collect::<Vec<_>>(),
        "y": xs.iter().map(|&x| round12(x)).collect::<Vec<_>>(),
        "W": rows,
    })
}

pub fn write_wigner<W: Write>(
    map: &WignerMap,
    report: &SymmetryReport,
    format: Format,
    out: W,
) -> Result<()> {
    match format {
        Format::Csv => write_wigner_csv(map, out),
        Format::Json => write_json(&wigner_json(map, report), out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infotheory::ReceiverKind;
    use crate::optimizer::SweepRow;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(fmt_num(0.0), "0.00000000000e0");
        assert_eq!(round12(1.0 / 3.0), 0.333333333333);
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    fn toy() -> SweepResult {
        let p = crate::infotheory::kgr(&crate::receivers::ReceiverSpec::pgm(4), 1.0, 0.5, 0.95)
            .unwrap();
        SweepResult {
            beta: 0.95,
            kappa: 0.2,
            seed: 3,
            receivers: vec![ReceiverKind::Pgm, ReceiverKind::Kor],
            rows: vec![
                SweepRow {
                    distance_km: 15.0,
                    transmissivity: 0.5,
                    receiver: ReceiverKind::Pgm,
                    point: Ok(p),
                    ratio_vs_het: Some(1.25),
                },
                SweepRow {
                    distance_km: 15.0,
                    transmissivity: 0.5,
                    receiver: ReceiverKind::Kor,
                    point: Err(Error::Optimization("stalled".into())),
                    ratio_vs_het: None,
                },
            ],
        }
    }

    #[test]
    fn sweep_csv_layout() {
        let mut buf = Vec::new();
        write_sweep_csv(&toy(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SWEEP_COLUMNS.join(","));
        assert!(lines[1].starts_with("1.50000000000e1,5.00000000000e-1,pgm,"));
        assert!(lines[1].ends_with(",1.25000000000e0,"));
        assert!(lines[2].ends_with("optimization failed: stalled"));
    }

    #[test]
    fn sweep_json_mirrors_columns() {
        let v = sweep_json(&toy(), &OptimizationBudget::quick());
        let row = &v["rows"][0];
        for c in SWEEP_COLUMNS {
            assert!(row.get(c).is_some(), "missing {c}");
        }
        assert_eq!(v["metadata"]["seed"], 3);
        assert!(v["rows"][1]["K"].is_null());
    }
}
