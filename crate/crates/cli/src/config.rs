//! Scenario configuration: a flat TOML file with dotted sections, parsed into
//! serde structs and then validated into ready-to-run core objects. Parsing
//! and validation are separate so that a config can round-trip losslessly
//! (parse → serialize → parse is the identity on the struct).

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use fockdyn_core::classical::{
    catmap_koopman, chacon_koopman, rotation_koopman, shift_koopman, Angle, KoopmanSystem,
    ModeIndex, SparseModeVector,
};
use fockdyn_core::dynamics::{
    DiagnosticRequest, QuantizedSystem, SubsequenceKind, Witness, WitnessSpec, WitnessState,
};
use fockdyn_core::onebody::DeformationGroup;
use num_rational::Ratio;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    pub scenario: ScenarioSection,
    pub classical: ClassicalSection,
    pub deformation: DeformationSection,
    pub space: SpaceSection,
    pub run: RunSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, rename = "witness")]
    pub witnesses: Vec<WitnessSection>,
    #[serde(default, rename = "state")]
    pub states: Vec<StateSection>,
    #[serde(default, rename = "gate")]
    pub gates: Vec<GateSection>,
    #[serde(default)]
    pub qiso: Option<QisoSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalSection {
    /// "rotation" | "catmap" | "chacon" | "shift".
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<AngleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[[i64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet: Option<u8>,
}

/// Rotation angle in turns: "golden", an exact fraction "p/q", or a float.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AngleSpec {
    Named(String),
    Turns(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformationSection {
    pub q: f64,
    /// "trivial" | "powers" | "rationals".
    pub group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_exponent: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationals: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    /// One entry per letter; scalar or pair depending on the system kind.
    pub letters: Vec<ModeSpec>,
    pub cutoff: usize,
}

/// Mode label as written in TOML: rotation wants a Fourier index, chacon a
/// tower level, catmap a frequency pair, shift a (position, symbol) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeSpec {
    Scalar(i64),
    Pair([i64; 2]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub schedule: Vec<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Exact-identity residual budget.
    #[serde(default = "tol_identity")]
    pub identity: f64,
    /// Residual budget for the deformed/free isomorphism checks.
    #[serde(default = "tol_qiso")]
    pub qiso: f64,
    /// Decay threshold for the ergodic statistics at the largest N.
    #[serde(default = "tol_decay")]
    pub decay: f64,
}

fn tol_identity() -> f64 {
    1e-10
}

fn tol_qiso() -> f64 {
    1e-6
}

fn tol_decay() -> f64 {
    1e-2
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { identity: tol_identity(), qiso: tol_qiso(), decay: tol_decay() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessSection {
    pub id: String,
    /// "monomial" | "field_product".
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub creators: Vec<ModeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annihilators: Vec<ModeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<ModeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsequence: Option<SubseqSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubseqSpec {
    /// "full" | "phase_aligned" | "tower" | "explicit".
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_stage: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<i64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    pub id: String,
    /// Creators applied to the vacuum, one mode per entry.
    pub modes: Vec<ModeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    pub witness: String,
    /// "norm_cesaro" | "state_cesaro" | "pointwise".
    pub statistic: String,
    /// State id for state-level statistics; "-" for the norm statistic.
    #[serde(default = "dash")]
    pub state: String,
    /// "decaying" | "bounded_away".
    pub expect: String,
}

fn dash() -> String {
    String::from("-")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QisoSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Defaults to space.cutoff.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_unitaries")]
    pub unitaries: usize,
}

fn yes() -> bool {
    true
}

fn default_samples() -> usize {
    40
}

fn default_unitaries() -> usize {
    4
}

pub fn parse(text: &str) -> Result<Config> {
    let cfg: Config = toml::from_str(text).context("config parse failed")?;
    Ok(cfg)
}

pub fn to_toml(cfg: &Config) -> Result<String> {
    toml::to_string_pretty(cfg).context("config serialize failed")
}

// ---------------------------------------------------------------------------
// Validation into core objects
// ---------------------------------------------------------------------------

/// A validated, runnable scenario.
pub struct Scenario {
    pub name: String,
    pub kind: String,
    pub qs: QuantizedSystem,
    pub group: DeformationGroup,
    pub request: DiagnosticRequest,
    pub gates: Vec<GateSection>,
    pub qiso: Option<QisoSection>,
    pub seed: u64,
    pub tolerances: Tolerances,
}

fn parse_fraction(s: &str) -> Option<(i64, i64)> {
    let (p, q) = s.split_once('/')?;
    let p = p.trim().parse::<i64>().ok()?;
    let q = q.trim().parse::<i64>().ok()?;
    (q != 0).then_some((p, q))
}

fn build_system(c: &ClassicalSection) -> Result<KoopmanSystem> {
    match c.kind.as_str() {
        "rotation" => {
            let spec = c.angle.as_ref().ok_or_else(|| anyhow!("rotation needs classical.angle"))?;
            let theta = match spec {
                AngleSpec::Named(s) if s == "golden" => Angle::golden(),
                AngleSpec::Named(s) => {
                    let (p, q) = parse_fraction(s)
                        .ok_or_else(|| anyhow!("angle must be \"golden\", \"p/q\", or a float, got {s:?}"))?;
                    Angle::rational(p, q)
                }
                AngleSpec::Turns(t) => Angle::from_f64_turns(*t),
            };
            Ok(rotation_koopman(theta))
        }
        "catmap" => {
            let m = c.matrix.ok_or_else(|| anyhow!("catmap needs classical.matrix"))?;
            catmap_koopman(m).map_err(|e| anyhow!("bad catmap matrix: {e}"))
        }
        "chacon" => {
            let s = c.stage.ok_or_else(|| anyhow!("chacon needs classical.stage"))?;
            chacon_koopman(s).map_err(|e| anyhow!("bad chacon stage: {e}"))
        }
        "shift" => {
            let a = c.alphabet.ok_or_else(|| anyhow!("shift needs classical.alphabet"))?;
            shift_koopman(a).map_err(|e| anyhow!("bad shift alphabet: {e}"))
        }
        other => bail!("unknown scenario kind {other:?} (expected rotation, catmap, chacon, or shift)"),
    }
}

fn parse_mode(kind: &str, spec: &ModeSpec) -> Result<ModeIndex> {
    match (kind, spec) {
        ("rotation", ModeSpec::Scalar(m)) => Ok(ModeIndex::Fourier(*m)),
        ("chacon", ModeSpec::Scalar(j)) if *j >= 0 => Ok(ModeIndex::Interval(*j as u64)),
        ("catmap", ModeSpec::Pair([m, n])) => Ok(ModeIndex::Torus(*m, *n)),
        ("shift", ModeSpec::Pair([p, s])) if (1..=255).contains(s) => {
            Ok(ModeIndex::ShiftCell(*p, *s as u8))
        }
        _ => bail!("mode {spec:?} does not fit system kind {kind:?}"),
    }
}

fn build_group(d: &DeformationSection) -> Result<DeformationGroup> {
    match d.group.as_str() {
        "trivial" => Ok(DeformationGroup::Trivial),
        "powers" => {
            let lambda = d.lambda.ok_or_else(|| anyhow!("powers group needs deformation.lambda"))?;
            if !(lambda > 0.0 && lambda < 1.0) {
                bail!("deformation.lambda must lie in (0, 1), got {lambda}");
            }
            Ok(DeformationGroup::PowersOfLambda {
                lambda,
                max_exponent: d.max_exponent.unwrap_or(6),
            })
        }
        "rationals" => {
            let list = d
                .rationals
                .as_ref()
                .ok_or_else(|| anyhow!("rationals group needs deformation.rationals"))?;
            let mut out = Vec::new();
            for s in list {
                let (p, q) = parse_fraction(s)
                    .ok_or_else(|| anyhow!("rational group entry {s:?} is not \"p/q\""))?;
                out.push(Ratio::new(p, q));
            }
            Ok(DeformationGroup::RationalsTruncated(out))
        }
        other => bail!("unknown deformation group {other:?} (expected trivial, powers, or rationals)"),
    }
}

fn build_subsequence(c: &ClassicalSection, s: &SubseqSpec) -> Result<SubsequenceKind> {
    match s.kind.as_str() {
        "full" => Ok(SubsequenceKind::Full),
        "phase_aligned" => {
            if c.kind != "rotation" {
                bail!("phase_aligned subsequences need a rotation system");
            }
            let theta = match build_system(c)? {
                KoopmanSystem::Rotation { theta } => theta,
                _ => unreachable!(),
            };
            Ok(SubsequenceKind::PhaseAligned {
                angle: theta,
                mult: s.mode.ok_or_else(|| anyhow!("phase_aligned needs subsequence.mode"))?,
                eps: s.eps.ok_or_else(|| anyhow!("phase_aligned needs subsequence.eps"))?,
            })
        }
        "tower" => Ok(SubsequenceKind::TowerHeights {
            max_stage: s.max_stage.ok_or_else(|| anyhow!("tower needs subsequence.max_stage"))?,
        }),
        "explicit" => {
            let idx = s
                .indices
                .clone()
                .ok_or_else(|| anyhow!("explicit subsequence needs subsequence.indices"))?;
            Ok(SubsequenceKind::Explicit(idx))
        }
        other => bail!("unknown subsequence kind {other:?}"),
    }
}

fn build_witness(c: &ClassicalSection, w: &WitnessSection) -> Result<WitnessSpec> {
    let single = |spec: &ModeSpec| -> Result<SparseModeVector> {
        Ok(SparseModeVector::single(parse_mode(&c.kind, spec)?))
    };
    let witness = match w.kind.as_str() {
        "monomial" => {
            let creators: Vec<_> =
                w.creators.iter().map(single).collect::<Result<_>>()?;
            let annihilators: Vec<_> =
                w.annihilators.iter().map(single).collect::<Result<_>>()?;
            if creators.is_empty() && annihilators.is_empty() {
                bail!("witness {:?} has no creators or annihilators", w.id);
            }
            if !w.fields.is_empty() {
                bail!("witness {:?}: monomial witnesses take no fields", w.id);
            }
            Witness::Monomial(
                fockdyn_core::dynamics::WickMonomial::new(creators, annihilators)
                    .map_err(|e| anyhow!("witness {:?}: {e}", w.id))?,
            )
        }
        "field_product" => {
            if w.fields.is_empty() {
                bail!("witness {:?} has no fields", w.id);
            }
            if !w.creators.is_empty() || !w.annihilators.is_empty() {
                bail!("witness {:?}: field_product witnesses take only fields", w.id);
            }
            Witness::FieldProduct(w.fields.iter().map(single).collect::<Result<_>>()?)
        }
        other => bail!("witness {:?}: unknown kind {other:?}", w.id),
    };
    let subsequence = match &w.subsequence {
        Some(s) => Some(build_subsequence(c, s)?),
        None => None,
    };
    Ok(WitnessSpec { id: w.id.clone(), witness, subsequence })
}

const STATISTICS: [&str; 3] = ["norm_cesaro", "state_cesaro", "pointwise"];

pub fn validate(cfg: &Config) -> Result<Scenario> {
    if cfg.version != CONFIG_VERSION {
        bail!("unsupported config version {} (this build reads version {CONFIG_VERSION})", cfg.version);
    }
    let name = cfg.scenario.name.trim();
    if name.is_empty()
        || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        bail!("scenario.name must be a nonempty [A-Za-z0-9_-]+ token, got {name:?}");
    }

    let system = build_system(&cfg.classical)?;

    let q = cfg.deformation.q;
    if !(q.abs() < 1.0) {
        bail!("deformation.q must satisfy |q| < 1, got {q}");
    }
    let group = build_group(&cfg.deformation)?;

    if cfg.space.letters.is_empty() {
        bail!("space.letters must not be empty");
    }
    let mut letters = Vec::new();
    let mut seen = Vec::new();
    for spec in &cfg.space.letters {
        let m = parse_mode(&cfg.classical.kind, spec)?;
        system.check_mode(&m).map_err(|e| anyhow!("letter {spec:?}: {e}"))?;
        if seen.contains(&m) {
            bail!("duplicate letter {spec:?}");
        }
        seen.push(m);
        letters.push(SparseModeVector::single(m));
    }
    if cfg.space.cutoff == 0 {
        bail!("space.cutoff must be at least 1");
    }

    if cfg.run.schedule.is_empty() {
        bail!("run.schedule must not be empty");
    }
    if !cfg.run.schedule.windows(2).all(|w| w[0] < w[1]) {
        bail!("run.schedule must be strictly increasing");
    }
    if cfg.run.schedule[0] == 0 {
        bail!("run.schedule entries must be positive");
    }

    for t in [cfg.tolerances.identity, cfg.tolerances.qiso, cfg.tolerances.decay] {
        if !(t > 0.0) {
            bail!("tolerances must be positive");
        }
    }
    let threshold = cfg.run.threshold.unwrap_or(cfg.tolerances.decay);
    if !(threshold > 0.0) {
        bail!("run.threshold must be positive");
    }

    if cfg.witnesses.is_empty() {
        bail!("at least one [[witness]] is required");
    }
    let mut witnesses = Vec::new();
    for w in &cfg.witnesses {
        if witnesses.iter().any(|x: &WitnessSpec| x.id == w.id) {
            bail!("duplicate witness id {:?}", w.id);
        }
        witnesses.push(build_witness(&cfg.classical, w)?);
    }

    let mut states = Vec::new();
    for s in &cfg.states {
        if s.id == "vacuum" || s.id == "-" {
            bail!("state id {:?} is reserved", s.id);
        }
        if states.iter().any(|(id, _): &(String, WitnessState)| id == &s.id) {
            bail!("duplicate state id {:?}", s.id);
        }
        if s.modes.is_empty() {
            bail!("state {:?} has no modes", s.id);
        }
        let vecs: Vec<SparseModeVector> = s
            .modes
            .iter()
            .map(|m| Ok(SparseModeVector::single(parse_mode(&cfg.classical.kind, m)?)))
            .collect::<Result<_>>()?;
        states.push((s.id.clone(), WitnessState::Excited(vecs)));
    }

    for g in &cfg.gates {
        if !witnesses.iter().any(|w| w.id == g.witness) {
            bail!("gate references unknown witness {:?}", g.witness);
        }
        if !STATISTICS.contains(&g.statistic.as_str()) {
            bail!("gate statistic must be one of {STATISTICS:?}, got {:?}", g.statistic);
        }
        match (g.statistic.as_str(), g.state.as_str()) {
            ("norm_cesaro", "-") => {}
            ("norm_cesaro", s) => bail!("norm_cesaro gates use state \"-\", got {s:?}"),
            (_, "-") => bail!("state-level gates need a state id (or \"vacuum\")"),
            (_, "vacuum") => {}
            (_, s) => {
                if !states.iter().any(|(id, _)| id == s) {
                    bail!("gate references unknown state {s:?}");
                }
            }
        }
        if g.expect != "decaying" && g.expect != "bounded_away" {
            bail!("gate expect must be \"decaying\" or \"bounded_away\", got {:?}", g.expect);
        }
    }

    let request = DiagnosticRequest {
        witnesses,
        states,
        schedule: cfg.run.schedule.clone(),
        threshold,
        cutoff: Some(cfg.space.cutoff),
    };

    Ok(Scenario {
        name: name.to_string(),
        kind: cfg.classical.kind.clone(),
        qs: QuantizedSystem { system, letters, q },
        group,
        request,
        gates: cfg.gates.clone(),
        qiso: cfg.qiso.clone(),
        seed: cfg.run.seed,
        tolerances: cfg.tolerances.clone(),
    })
}

/// Apply `--seed` / `--tolerance KEY=VAL` command-line overrides to a parsed
/// config before validation.
pub fn apply_overrides(
    cfg: &mut Config,
    seed: Option<u64>,
    tolerances: &[(String, f64)],
) -> Result<()> {
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    for (key, val) in tolerances {
        match key.as_str() {
            "identity" => cfg.tolerances.identity = *val,
            "qiso" => cfg.tolerances.qiso = *val,
            "decay" => {
                cfg.tolerances.decay = *val;
                if cfg.run.threshold.is_some() {
                    cfg.run.threshold = Some(*val);
                }
            }
            other => bail!("unknown tolerance key {other:?} (expected identity, qiso, or decay)"),
        }
    }
    Ok(())
}

pub fn parse_tolerance_arg(arg: &str) -> Result<(String, f64)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| anyhow!("tolerance override must look like KEY=VAL, got {arg:?}"))?;
    let val = v
        .parse::<f64>()
        .with_context(|| format!("tolerance value {v:?} is not a number"))?;
    Ok((k.trim().to_string(), val))
}
