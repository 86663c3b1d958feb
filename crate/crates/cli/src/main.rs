use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_rational::Ratio;
use serde::Serialize;

use fockdyn_cli::outputs::Format;
use fockdyn_cli::{config, scenario, witness};
use fockdyn_core::qfock::{exact_gram_classes, qgram};
use fockdyn_core::qiso::{
    build_bundle, theta_check, v_isometry_residual, verify_intertwine, verify_r_fixedpoint,
};
use fockdyn_core::CMatrix;

#[derive(Parser)]
#[command(name = "fockdyn", version, about = "Deformed Fock dynamics laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario config and emit its report and plot data.
    Run {
        config: PathBuf,
        /// Output directory; without it the report goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Overrides run.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Tolerance override KEY=VAL (identity, qiso, decay); repeatable.
        #[arg(long = "tolerance", value_name = "KEY=VAL")]
        tolerance: Vec<String>,
    },
    /// Build the deformed-to-free bundle and print its residuals.
    CheckQiso {
        #[arg(long)]
        q: f64,
        /// Number of letters d.
        #[arg(long)]
        letters: usize,
        #[arg(long)]
        cutoff: usize,
        #[arg(long, default_value_t = 40)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the degree-n Gram matrix of the q-inner product.
    Gram {
        #[arg(long)]
        n: usize,
        /// Deformation parameter; a float, or "p/q" with --exact.
        #[arg(long)]
        q: String,
        /// Number of letters d.
        #[arg(long, default_value_t = 2)]
        letters: usize,
        /// Exact rational arithmetic, one block per content class.
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the negative-direction witness data for a named scenario.
    Witness {
        /// "rotation-golden" | "chacon" | "catmap".
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(e: &anyhow::Error) -> ExitCode {
    eprintln!("error: {e:#}");
    ExitCode::from(2)
}

fn deliver(text: String, out: Option<&PathBuf>, default_name: &str) -> anyhow::Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(default_name), text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct QisoCheckOut {
    q: f64,
    letters: usize,
    cutoff: usize,
    min_m_eig: f64,
    isometry_residual: f64,
    fixed_point_residual: f64,
    intertwine_residual: f64,
    theta_qccr_residual: f64,
    theta_intertwine_residual: f64,
    budget: f64,
    pass: bool,
}

fn check_qiso(
    q: f64,
    letters: usize,
    cutoff: usize,
    samples: usize,
    seed: u64,
) -> anyhow::Result<QisoCheckOut> {
    let b = build_bundle(letters, cutoff, q).map_err(|e| anyhow::anyhow!("{e}"))?;
    let isometry = v_isometry_residual(&b, samples, seed);
    let fixed = verify_r_fixedpoint(&b).map_err(|e| anyhow::anyhow!("{e}"))?.max_residual;
    let mut intertwine = 0.0f64;
    let mut theta_qccr = 0.0f64;
    let mut theta_int = 0.0f64;
    for i in 0..4u64 {
        let p = scenario::seeded_unitary(letters, seed.wrapping_add(i).wrapping_mul(0x9e37));
        let rep = verify_intertwine(&b, &p).map_err(|e| anyhow::anyhow!("{e}"))?;
        intertwine = intertwine.max(rep.free_residual).max(rep.deformed_mechanism_residual);
        let th = theta_check(&b, &p).map_err(|e| anyhow::anyhow!("{e}"))?;
        theta_qccr = theta_qccr.max(th.qccr_residual);
        theta_int = theta_int.max(th.intertwine_residual);
    }
    let budget = 1e-6;
    let pass = isometry <= budget
        && fixed <= budget
        && intertwine <= budget
        && theta_qccr <= budget
        && theta_int <= budget;
    Ok(QisoCheckOut {
        q,
        letters,
        cutoff,
        min_m_eig: b.min_m_eig,
        isometry_residual: isometry,
        fixed_point_residual: fixed,
        intertwine_residual: intertwine,
        theta_qccr_residual: theta_qccr,
        theta_intertwine_residual: theta_int,
        budget,
        pass,
    })
}

#[derive(Serialize)]
struct GramOut {
    n: usize,
    letters: usize,
    q: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    dense: Option<Vec<Vec<(f64, f64)>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_classes: Option<Vec<ExactClassOut>>,
}

#[derive(Serialize)]
struct ExactClassOut {
    content: Vec<u8>,
    words: Vec<Vec<u8>>,
    entries: Vec<Vec<String>>,
}

fn gram_out(n: usize, q_str: &str, letters: usize, exact: bool) -> anyhow::Result<GramOut> {
    if exact {
        let (p, den) = q_str
            .split_once('/')
            .and_then(|(a, b)| Some((a.trim().parse::<i64>().ok()?, b.trim().parse::<i64>().ok()?)))
            .ok_or_else(|| anyhow::anyhow!("--exact needs q as a fraction \"p/q\", got {q_str:?}"))?;
        if den == 0 {
            anyhow::bail!("q denominator must be nonzero");
        }
        let classes = exact_gram_classes(letters, n, Ratio::new(p, den));
        let exact_classes = classes
            .into_iter()
            .map(|(content, cg)| ExactClassOut {
                content,
                words: cg.words,
                entries: cg
                    .entries
                    .iter()
                    .map(|row| row.iter().map(|x| format!("{x}")).collect())
                    .collect(),
            })
            .collect();
        return Ok(GramOut {
            n,
            letters,
            q: q_str.to_string(),
            dense: None,
            exact_classes: Some(exact_classes),
        });
    }
    let q: f64 = q_str
        .parse()
        .map_err(|_| anyhow::anyhow!("q must be a float (or use --exact with \"p/q\")"))?;
    let g: CMatrix = qgram(n, q, &CMatrix::identity(letters)).map_err(|e| anyhow::anyhow!("{e}"))?;
    let dense = (0..g.rows())
        .map(|i| (0..g.cols()).map(|j| (g[(i, j)].re, g[(i, j)].im)).collect())
        .collect();
    Ok(GramOut { n, letters, q: q_str.to_string(), dense: Some(dense), exact_classes: None })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config: path, out, format, seed, tolerance } => {
            let tols: Vec<(String, f64)> = match tolerance
                .iter()
                .map(|t| config::parse_tolerance_arg(t))
                .collect::<anyhow::Result<_>>()
            {
                Ok(t) => t,
                Err(e) => return fail(&e),
            };
            match scenario::run_config_file(&path, out.as_deref(), format, seed, &tols) {
                Ok(outcome) if outcome.failures == 0 => ExitCode::SUCCESS,
                Ok(outcome) => {
                    eprintln!("{} gate(s) failed", outcome.failures);
                    ExitCode::from(1)
                }
                Err(e) => fail(&e),
            }
        }
        Cmd::CheckQiso { q, letters, cutoff, samples, seed, out } => {
            match check_qiso(q, letters, cutoff, samples, seed) {
                Ok(block) => {
                    let pass = block.pass;
                    let body = match serde_json::to_string_pretty(&block) {
                        Ok(s) => s + "\n",
                        Err(e) => return fail(&anyhow::Error::from(e)),
                    };
                    if let Err(e) = deliver(body, out.as_ref(), "qiso.json") {
                        return fail(&e);
                    }
                    if pass {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Cmd::Gram { n, q, letters, exact, out } => match gram_out(n, &q, letters, exact) {
            Ok(g) => {
                let body = match serde_json::to_string_pretty(&g) {
                    Ok(s) => s + "\n",
                    Err(e) => return fail(&anyhow::Error::from(e)),
                };
                if let Err(e) = deliver(body, out.as_ref(), "gram.json") {
                    return fail(&e);
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Cmd::Witness { scenario: name, seed, out } => match witness::run_named(&name, seed) {
            Ok(body) => {
                let file = format!("{name}_witness.json");
                if let Err(e) = deliver(body, out.as_ref(), &file) {
                    return fail(&e);
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}
