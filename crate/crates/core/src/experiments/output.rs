//! CSV tables and JSON metadata sidecars.
//!
//! Floats are written in Rust's shortest round-trip exponent form (`1.5e-3`),
//! non-finite values as `inf`, `-inf` and `nan`, absent values as empty
//! fields. Nothing run-dependent goes into a CSV, so identical inputs give
//! byte-identical files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::bounds::{BoundReport, Bounded};
use crate::error::{Error, Result};
use crate::experiments::cg::CgStudy;
use crate::experiments::problem::SweepRecord;
use crate::experiments::sweep::{EigenCurveRow, FamilyMember, Sweep};
use crate::sentinel;
use crate::solver::CgSweepRow;

pub fn fmt_float(v: f64) -> String {
    match sentinel::format(v) {
        Some(tag) => tag.to_string(),
        None => format!("{v:e}"),
    }
}

fn log10(v: f64) -> String {
    fmt_float(v.log10())
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// An in-memory CSV table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(csv_error)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_error)?;
        }
        w.into_inner().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_bytes()?)?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Column stem of a bound report: the theorem tag, qualified by the
/// eigenvalue it bounds when that is not a condition number.
pub fn report_stem(r: &BoundReport) -> String {
    match r.quantity {
        Bounded::LambdaMaxB => format!("{}_lambda_max_b", r.theorem),
        Bounded::LambdaMinB => format!("{}_lambda_min_b", r.theorem),
        Bounded::KappaS | Bounded::KappaB => r.theorem.tag().to_string(),
    }
}

fn stems<'a>(records: impl IntoIterator<Item = &'a SweepRecord>) -> Vec<String> {
    let mut keyed: Vec<((u8, u8), String)> = Vec::new();
    for rec in records {
        for r in &rec.bounds {
            let stem = report_stem(r);
            if !keyed.iter().any(|(_, s)| *s == stem) {
                keyed.push(((r.theorem as u8, r.quantity as u8), stem));
            }
        }
    }
    keyed.sort();
    keyed.into_iter().map(|(_, s)| s).collect()
}

fn sweep_columns(stems: &[String], preconditioned: bool) -> Vec<String> {
    let mut cols: Vec<String> = ["beta", "near_singular", "kappa", "log10_kappa", "lambda_max_s", "lambda_min_s"]
        .map(String::from)
        .to_vec();
    if !preconditioned {
        cols.extend(["kappa_b", "lambda_max_b", "lambda_min_b"].map(String::from));
    }
    for s in stems {
        cols.push(format!("{s}_lower"));
        cols.push(format!("{s}_upper"));
        cols.push(format!("log10_{s}_lower"));
        cols.push(format!("log10_{s}_upper"));
    }
    cols.push("switch_point".into());
    cols.push("violations".into());
    cols
}

fn sweep_row(rec: &SweepRecord, stems: &[String], switch_point: f64) -> Vec<String> {
    let mut row = vec![
        fmt_float(rec.beta),
        rec.near_singular.to_string(),
        fmt_float(rec.kappa),
        log10(rec.kappa),
        fmt_float(rec.lambda_max),
        fmt_float(rec.lambda_min),
    ];
    if !rec.preconditioned {
        row.extend([opt(rec.kappa_b), opt(rec.lambda_max_b), opt(rec.lambda_min_b)]);
    }
    for s in stems {
        match rec.bounds.iter().find(|r| report_stem(r) == *s) {
            Some(r) => row.extend([fmt_float(r.lower), fmt_float(r.upper), log10(r.lower), log10(r.upper)]),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
    }
    row.push(fmt_float(switch_point));
    row.push(rec.violations.len().to_string());
    row
}

pub fn sweep_table(sweep: &Sweep) -> Table {
    let stems = stems(&sweep.records);
    Table {
        columns: sweep_columns(&stems, sweep.config.preconditioned),
        rows: sweep
            .records
            .iter()
            .map(|r| sweep_row(r, &stems, sweep.switch_point))
            .collect(),
    }
}

/// All members of a family in one table, keyed by the leading
/// `family` and `value` columns.
pub fn family_table(family: &str, members: &[FamilyMember]) -> Table {
    let stems = stems(members.iter().flat_map(|m| &m.sweep.records));
    let preconditioned = members.first().is_some_and(|m| m.sweep.config.preconditioned);
    let mut columns = vec!["family".to_string(), "value".to_string()];
    columns.extend(sweep_columns(&stems, preconditioned));
    let rows = members
        .iter()
        .flat_map(|m| {
            let stems = &stems;
            m.sweep.records.iter().map(move |r| {
                let mut row = vec![family.to_string(), fmt_float(m.value)];
                row.extend(sweep_row(r, stems, m.sweep.switch_point));
                row
            })
        })
        .collect();
    Table { columns, rows }
}

pub fn eigencurve_table(rows: &[EigenCurveRow], seeds: &[u64]) -> Table {
    let mut columns: Vec<String> = ["length_scale", "lambda_max_b0", "lambda_max_pf_mean", "lambda_max_pf_std"]
        .map(String::from)
        .to_vec();
    columns.extend(seeds.iter().map(|s| format!("lambda_max_pf_seed_{s}")));
    Table {
        columns,
        rows: rows
            .iter()
            .map(|r| {
                let mut row = vec![
                    fmt_float(r.length_scale),
                    fmt_float(r.lambda_max_b0),
                    fmt_float(r.lambda_max_pf_mean),
                    fmt_float(r.lambda_max_pf_std),
                ];
                row.extend(r.lambda_max_pf.iter().map(|&v| fmt_float(v)));
                row
            })
            .collect(),
    }
}

pub fn cg_table(rows: &[CgSweepRow]) -> Table {
    let bound_col = rows
        .first()
        .map(|r| format!("bound_upper_{}", r.bound))
        .unwrap_or_else(|| "bound_upper".into());
    let columns = vec![
        "beta".to_string(),
        "tol".into(),
        "iterations".into(),
        "converged".into(),
        "kappa".into(),
        "log10_kappa".into(),
        bound_col.clone(),
        format!("log10_{bound_col}"),
        "seed".into(),
        "error".into(),
    ];
    Table {
        columns,
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    fmt_float(r.beta),
                    fmt_float(r.tol),
                    r.iterations.map(|k| k.to_string()).unwrap_or_default(),
                    r.converged.to_string(),
                    fmt_float(r.kappa),
                    log10(r.kappa),
                    fmt_float(r.bound_upper),
                    log10(r.bound_upper),
                    r.seed.to_string(),
                    r.error.clone().unwrap_or_default(),
                ]
            })
            .collect(),
    }
}

pub fn cg_study_tables(study: &CgStudy) -> (Table, Table) {
    (cg_table(&study.unpreconditioned), cg_table(&study.preconditioned))
}

/// Wall-clock facts, kept apart from the reproducible part of the metadata.
#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub started_unix_seconds: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata<'a, T: Serialize> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub figure: Option<&'a str>,
    pub panel: &'a str,
    pub study: &'a str,
    pub library_version: &'static str,
    pub columns: &'a [String],
    pub notes: &'a [String],
    pub details: T,
    pub timing: Timing,
}

pub fn write_metadata<T: Serialize>(path: &Path, meta: &Metadata<'_, T>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
