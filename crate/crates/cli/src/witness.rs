//! Named witness demonstrations for the `witness` subcommand: the concrete
//! certificates that separate the statistics from each other on the three
//! reference systems.

use anyhow::{anyhow, bail, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use fockdyn_core::classical::{
    catmap_koopman, chacon, correlation, rotation_koopman, Angle, KoopmanSystem, ModeIndex,
    SparseModeVector,
};
use fockdyn_core::dynamics::{
    non_mixing_witness_chacon, non_wm_witness, phase_sum_ratio, QuantizedSystem,
};

#[derive(Serialize)]
pub struct AlignedWitnessOut {
    pub scenario: &'static str,
    pub eps: f64,
    pub bound: f64,
    /// (N, subsequence density, |phase average|) per horizon.
    pub rows: Vec<(u64, f64, f64)>,
}

/// Golden rotation: along the phase-aligned subsequence the one-mode Cesàro
/// average keeps at least `bound` of its norm.
pub fn rotation_golden(horizons: &[u64], eps: f64) -> Result<AlignedWitnessOut> {
    let qs = QuantizedSystem {
        system: rotation_koopman(Angle::golden()),
        letters: vec![SparseModeVector::single(ModeIndex::Fourier(1))],
        q: 0.0,
    };
    let f = SparseModeVector::single(ModeIndex::Fourier(1));
    let mut rows = Vec::new();
    let mut bound = 0.0;
    for &n in horizons {
        let (ks, b) = non_wm_witness(&qs, &f, eps, n).map_err(|e| anyhow!("{e}"))?;
        bound = b;
        let ratio = phase_sum_ratio(&Angle::golden(), 1, &ks);
        rows.push((n, ks.density(n), ratio));
    }
    Ok(AlignedWitnessOut { scenario: "rotation-golden", eps, bound, rows })
}

#[derive(Serialize)]
pub struct TowerWitnessOut {
    pub scenario: &'static str,
    pub heights: Vec<i64>,
    /// Exact enclosures [lo, hi] of μ(T^h A ∩ A) for the base A = [0, 2/3).
    pub return_measure: Vec<(f64, f64)>,
    /// Enclosures of the centered value μ(T^h A ∩ A) − μ(A)².
    pub centered: Vec<(f64, f64)>,
    pub floor: f64,
}

/// Chacón: return measures along tower heights stay bounded away from the
/// product value 4/9, so the mixing statistic cannot decay.
pub fn chacon_towers(max_stage: u32) -> Result<TowerWitnessOut> {
    let (ks, encs, floor) = non_mixing_witness_chacon(max_stage).map_err(|e| anyhow!("{e}"))?;
    let mu2 = 4.0 / 9.0;
    let return_measure: Vec<(f64, f64)> =
        encs.iter().map(|e| (chacon::rat_f64(&e.lo), chacon::rat_f64(&e.hi))).collect();
    let centered = return_measure.iter().map(|(lo, hi)| (lo - mu2, hi - mu2)).collect();
    Ok(TowerWitnessOut {
        scenario: "chacon",
        heights: ks.indices.clone(),
        return_measure,
        centered,
        floor,
    })
}

#[derive(Serialize)]
pub struct EscapeRow {
    pub from: (i64, i64),
    pub to: (i64, i64),
    pub escape: u64,
    /// Largest |⟨U^N e_v, e_w⟩| sampled beyond the escape bound (exact zeros).
    pub beyond_max: f64,
}

#[derive(Serialize)]
pub struct EscapeWitnessOut {
    pub scenario: &'static str,
    pub seed: u64,
    pub rows: Vec<EscapeRow>,
    pub max_escape: u64,
}

/// Cat map: mode correlations vanish identically once the frequency orbit
/// escapes the window of the target mode.
pub fn catmap_escape(seed: u64, pairs: usize) -> Result<EscapeWitnessOut> {
    let system = catmap_koopman([[2, 1], [1, 1]]).map_err(|e| anyhow!("{e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| -> (i64, i64) {
        loop {
            let v = (rng.gen_range(-5i64..=5), rng.gen_range(-5i64..=5));
            if v != (0, 0) {
                return v;
            }
        }
    };
    let mut rows = Vec::new();
    let mut max_escape = 0u64;
    for _ in 0..pairs {
        let v = sample(&mut rng);
        let w = sample(&mut rng);
        let escape = escape_bound(&system, v, w)?;
        max_escape = max_escape.max(escape);
        let xi = SparseModeVector::single(ModeIndex::Torus(v.0, v.1));
        let eta = SparseModeVector::single(ModeIndex::Torus(w.0, w.1));
        let mut beyond_max = 0.0f64;
        for n in (escape as i64 + 1)..=(escape as i64 + 40) {
            for k in [n, -n] {
                let c = correlation(&system, k, &xi, &eta).map_err(|e| anyhow!("{e}"))?;
                beyond_max = beyond_max.max(c.norm());
            }
        }
        rows.push(EscapeRow { from: v, to: w, escape, beyond_max });
    }
    Ok(EscapeWitnessOut { scenario: "catmap", seed, rows, max_escape })
}

/// Smallest B with ‖L^N v‖_∞ > ‖w‖_∞ for every |N| > B (so the correlation
/// with e_w is exactly zero there). Orbit norms grow monotonically once they
/// leave the window, checked over a margin of 80 steps in both directions.
pub fn escape_bound(system: &KoopmanSystem, v: (i64, i64), w: (i64, i64)) -> Result<u64> {
    let KoopmanSystem::CatMap { lattice, lattice_inv, .. } = system else {
        bail!("escape bounds need a cat map");
    };
    let window = w.0.unsigned_abs().max(w.1.unsigned_abs()) as i128;
    let step = |m: &[[i64; 2]; 2], p: (i128, i128)| -> (i128, i128) {
        (
            m[0][0] as i128 * p.0 + m[0][1] as i128 * p.1,
            m[1][0] as i128 * p.0 + m[1][1] as i128 * p.1,
        )
    };
    let mut bound = 0u64;
    for dir in [lattice, lattice_inv] {
        let mut p = (v.0 as i128, v.1 as i128);
        for n in 1..=80u64 {
            p = step(dir, p);
            if p.0.unsigned_abs().max(p.1.unsigned_abs()) <= window as u128 {
                bound = bound.max(n);
            }
        }
    }
    Ok(bound)
}

/// Dispatch for `fockdyn witness --scenario NAME`.
pub fn run_named(name: &str, seed: u64) -> Result<String> {
    let json = match name {
        "rotation-golden" => {
            serde_json::to_string_pretty(&rotation_golden(&[100, 1000, 10000], 0.05)?)?
        }
        "chacon" => serde_json::to_string_pretty(&chacon_towers(4)?)?,
        "catmap" => serde_json::to_string_pretty(&catmap_escape(seed, 20)?)?,
        other => bail!(
            "unknown scenario kind {other:?} (expected rotation-golden, chacon, or catmap)"
        ),
    };
    Ok(json + "\n")
}
