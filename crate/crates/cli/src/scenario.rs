//! Scenario execution: diagnostics per witness (parallel across witnesses),
//! gate evaluation, optional deformed/free isomorphism checks, factor record,
//! artifact emission.

use std::path::Path;

use anyhow::{anyhow, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, QisoSection, Scenario};
use crate::factor::factor_record;
use crate::outputs::{
    self, emit_plotdata, series_rows, write_report, Format, GateRow, QisoBlock, Report, SeriesRow,
};
use crate::parallel::parallel_map;
use fockdyn_core::dynamics::{diagnostic_run, DiagnosticReport, DiagnosticRequest, DynError};
use fockdyn_core::linalg::{hermitian_exp_i, CMatrix};
use fockdyn_core::qiso::{
    build_bundle, theta_check, v_isometry_residual, verify_intertwine, verify_r_fixedpoint,
    QisoError, THETA_Q_MAX,
};
use fockdyn_core::C64;

pub struct Outcome {
    pub report: Report,
    pub failures: u32,
}

/// Wraps budget overruns in their own message so callers can tell a blown
/// horizon from a malformed config.
fn run_diagnostics(sc: &Scenario) -> Result<DiagnosticReport> {
    let reqs: Vec<DiagnosticRequest> = sc
        .request
        .witnesses
        .iter()
        .map(|w| DiagnosticRequest {
            witnesses: vec![w.clone()],
            states: sc.request.states.clone(),
            schedule: sc.request.schedule.clone(),
            threshold: sc.request.threshold,
            cutoff: sc.request.cutoff,
        })
        .collect();
    let partials = parallel_map(reqs, |req| diagnostic_run(&sc.qs, &req));
    let mut merged = DiagnosticReport { q: sc.qs.q, series: Vec::new(), notes: Vec::new() };
    for partial in partials {
        let part = partial.map_err(|e| match e {
            DynError::BudgetExceeded => anyhow!("budget exceeded: {e}"),
            other => anyhow!(other),
        })?;
        for note in part.notes {
            if !merged.notes.contains(&note) {
                merged.notes.push(note);
            }
        }
        merged.series.extend(part.series);
    }
    Ok(merged)
}

fn evaluate_gates(sc: &Scenario, rows: &[SeriesRow], notes: &mut Vec<String>) -> Vec<GateRow> {
    sc.gates
        .iter()
        .map(|g| {
            let found = rows.iter().find(|r| {
                r.witness == g.witness && r.statistic == g.statistic && r.state == g.state
            });
            let observed = match found {
                Some(r) => r.verdict.clone(),
                None => {
                    notes.push(format!(
                        "gate {}/{}/{} has no series (statistic skipped?)",
                        g.witness, g.statistic, g.state
                    ));
                    String::from("missing")
                }
            };
            let pass = observed == g.expect;
            GateRow {
                witness: g.witness.clone(),
                statistic: g.statistic.clone(),
                state: g.state.clone(),
                expect: g.expect.clone(),
                observed,
                pass,
            }
        })
        .collect()
}

/// A pseudo-random d×d unitary: exp(iH) of a Hermitian with ChaCha-seeded
/// entries. Deterministic for a fixed seed on every platform.
pub fn seeded_unitary(d: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = CMatrix::from_fn(d, d, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let h = a.add(&a.adjoint()).scale(C64::new(0.5, 0.0));
    hermitian_exp_i(&h)
}

fn qiso_block(sc: &Scenario, section: &QisoSection, notes: &mut Vec<String>) -> (QisoBlock, u32) {
    let budget = sc.tolerances.qiso;
    if !section.enabled {
        return (
            QisoBlock {
                enabled: false,
                skipped: true,
                reason: Some(String::from("disabled in config")),
                cutoff: None,
                isometry_residual: None,
                fixed_point_residual: None,
                intertwine_residual: None,
                theta_qccr_residual: None,
                theta_intertwine_residual: None,
                budget,
                pass: true,
            },
            0,
        );
    }
    let q = sc.qs.q;
    if !(q.abs() < THETA_Q_MAX) {
        let reason = format!(
            "skipped: |q| = {} is outside the deformed-to-free regime, which requires \
             |q| < √2 − 1 ≈ {THETA_Q_MAX:.6}",
            q.abs()
        );
        notes.push(format!("qiso {reason}"));
        return (
            QisoBlock {
                enabled: true,
                skipped: true,
                reason: Some(reason),
                cutoff: None,
                isometry_residual: None,
                fixed_point_residual: None,
                intertwine_residual: None,
                theta_qccr_residual: None,
                theta_intertwine_residual: None,
                budget,
                pass: true,
            },
            0,
        );
    }

    let d = sc.qs.letters.len();
    let cutoff = section.cutoff.unwrap_or(sc.request.cutoff.unwrap_or(4));
    let run = || -> Result<QisoBlock, QisoError> {
        let b = build_bundle(d, cutoff, q)?;
        let isometry = v_isometry_residual(&b, section.samples, sc.seed);
        let fixed = verify_r_fixedpoint(&b)?.max_residual;
        let mut intertwine = 0.0f64;
        let mut theta_qccr = 0.0f64;
        let mut theta_intertwine = 0.0f64;
        for i in 0..section.unitaries.max(1) {
            let p = seeded_unitary(d, sc.seed.wrapping_add(i as u64).wrapping_mul(0x9e37));
            let rep = verify_intertwine(&b, &p)?;
            intertwine = intertwine.max(rep.free_residual).max(rep.deformed_mechanism_residual);
            let th = theta_check(&b, &p)?;
            theta_qccr = theta_qccr.max(th.qccr_residual);
            theta_intertwine = theta_intertwine.max(th.intertwine_residual);
        }
        let pass = isometry <= budget
            && fixed <= budget
            && intertwine <= budget
            && theta_qccr <= budget
            && theta_intertwine <= budget;
        Ok(QisoBlock {
            enabled: true,
            skipped: false,
            reason: None,
            cutoff: Some(cutoff),
            isometry_residual: Some(isometry),
            fixed_point_residual: Some(fixed),
            intertwine_residual: Some(intertwine),
            theta_qccr_residual: Some(theta_qccr),
            theta_intertwine_residual: Some(theta_intertwine),
            budget,
            pass,
        })
    };
    match run() {
        Ok(block) => {
            let fails = if block.pass { 0 } else { 1 };
            (block, fails)
        }
        Err(e) => {
            notes.push(format!("qiso checks failed to run: {e}"));
            (
                QisoBlock {
                    enabled: true,
                    skipped: false,
                    reason: Some(format!("error: {e}")),
                    cutoff: Some(cutoff),
                    isometry_residual: None,
                    fixed_point_residual: None,
                    intertwine_residual: None,
                    theta_qccr_residual: None,
                    theta_intertwine_residual: None,
                    budget,
                    pass: false,
                },
                1,
            )
        }
    }
}

/// Runs one validated scenario and assembles the report. Artifacts are not
/// written here; call `write_artifacts` with the result.
pub fn run_scenario(sc: &Scenario) -> Result<Outcome> {
    let diag = run_diagnostics(sc)?;
    let rows = series_rows(&diag);
    let mut notes = diag.notes.clone();
    let gates = evaluate_gates(sc, &rows, &mut notes);
    let mut failures: u32 = gates.iter().filter(|g| !g.pass).count() as u32;

    let qiso = sc.qiso.as_ref().map(|section| {
        let (block, fails) = qiso_block(sc, section, &mut notes);
        failures += fails;
        block
    });

    let report = Report {
        version: crate::config::CONFIG_VERSION,
        scenario: sc.name.clone(),
        kind: sc.kind.clone(),
        q: sc.qs.q,
        seed: sc.seed,
        schedule: sc.request.schedule.clone(),
        series: rows,
        gates,
        qiso,
        factor: factor_record(&sc.group),
        notes,
        failures,
    };
    Ok(Outcome { failures, report })
}

pub fn write_artifacts(out_dir: &Path, outcome: &Outcome, format: Format) -> Result<()> {
    emit_plotdata(out_dir, &outcome.report.scenario, &outcome.report.series)?;
    write_report(out_dir, &outcome.report, format)?;
    Ok(())
}

/// Parse + override + validate + run + write: the `run` subcommand body.
pub fn run_config_file(
    path: &Path,
    out_dir: Option<&Path>,
    format: Format,
    seed: Option<u64>,
    tolerances: &[(String, f64)],
) -> Result<Outcome> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow!("cannot read config {}: {e}", path.display()))?;
    let mut cfg: Config = crate::config::parse(&text)?;
    crate::config::apply_overrides(&mut cfg, seed, tolerances)?;
    let sc = crate::config::validate(&cfg)?;
    let outcome = run_scenario(&sc)?;
    if let Some(dir) = out_dir {
        write_artifacts(dir, &outcome, format)?;
    } else {
        match format {
            Format::Json => print!("{}", outputs::report_json(&outcome.report)?),
            Format::Csv => print!("{}", outputs::report_csv(&outcome.report)),
        }
    }
    Ok(outcome)
}
