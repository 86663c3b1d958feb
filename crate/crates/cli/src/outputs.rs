//! Deterministic artifacts: a structured report (JSON or flat CSV) plus one
//! two-column plot file per (witness, statistic). Identical inputs and seed
//! must yield byte-identical files, so every number goes through the shortest
//! round-trip float formatter and every collection has a fixed order.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::factor::FactorRecord;
use fockdyn_core::dynamics::{DiagnosticReport, Statistic, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesRow {
    pub witness: String,
    pub state: String,
    pub statistic: String,
    pub backend: String,
    pub values: Vec<(u64, f64)>,
    pub threshold: f64,
    pub verdict: String,
}

pub fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Decaying => "decaying",
        Verdict::BoundedAway => "bounded_away",
        Verdict::Inconclusive => "inconclusive",
    }
}

pub fn series_rows(report: &DiagnosticReport) -> Vec<SeriesRow> {
    report
        .series
        .iter()
        .map(|s| SeriesRow {
            witness: s.witness.clone(),
            state: s.state.clone(),
            statistic: s.statistic.label().to_string(),
            backend: s.backend.clone(),
            values: s.values.clone(),
            threshold: s.threshold,
            verdict: verdict_str(s.verdict).to_string(),
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GateRow {
    pub witness: String,
    pub statistic: String,
    pub state: String,
    pub expect: String,
    pub observed: String,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct QisoBlock {
    pub enabled: bool,
    pub skipped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub isometry_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_point_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intertwine_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_qccr_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_intertwine_residual: Option<f64>,
    pub budget: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub version: u32,
    pub scenario: String,
    pub kind: String,
    pub q: f64,
    pub seed: u64,
    pub schedule: Vec<u64>,
    pub series: Vec<SeriesRow>,
    pub gates: Vec<GateRow>,
    pub qiso: Option<QisoBlock>,
    pub factor: FactorRecord,
    pub notes: Vec<String>,
    pub failures: u32,
}

pub fn report_json(report: &Report) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).context("report serialization failed")?;
    s.push('\n');
    Ok(s)
}

pub fn report_csv(report: &Report) -> String {
    let mut out = String::from("witness,state,statistic,backend,n,value,threshold,verdict\n");
    for row in &report.series {
        for (n, v) in &row.values {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.witness, row.state, row.statistic, row.backend, n, v, row.threshold, row.verdict
            ));
        }
    }
    out
}

pub fn write_report(dir: &Path, report: &Report, format: Format) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let (name, body) = match format {
        Format::Json => ("report.json", report_json(report)?),
        Format::Csv => ("report.csv", report_csv(report)),
    };
    let path = dir.join(name);
    write_atomic(&path, body.as_bytes())?;
    Ok(path)
}

/// One plot file per (witness, statistic): `<scenario>_<statistic>_<witness>.csv`
/// holding `N,value` rows. Norm statistics use the operator row; state
/// statistics use the vacuum row. The empty-schedule error fires before any
/// file is touched.
pub fn emit_plotdata(dir: &Path, scenario: &str, rows: &[SeriesRow]) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        bail!("empty schedule: nothing to plot");
    }
    for row in rows {
        if row.values.is_empty() {
            bail!("empty schedule: no plot data for witness {:?}", row.witness);
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut written = Vec::new();
    for row in rows {
        let wanted_state = match row.statistic.as_str() {
            "norm_cesaro" => "-",
            _ => "vacuum",
        };
        if row.state != wanted_state {
            continue;
        }
        let path = dir.join(format!("{scenario}_{}_{}.csv", row.statistic, row.witness));
        let mut body = String::from("N,value\n");
        for (n, v) in &row.values {
            body.push_str(&format!("{n},{v}\n"));
        }
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    f.write_all(bytes)?;
    Ok(())
}

/// Labels of the three statistics, in report order.
pub fn statistic_labels() -> [&'static str; 3] {
    [Statistic::NormCesaro.label(), Statistic::StateCesaro.label(), Statistic::Pointwise.label()]
}
