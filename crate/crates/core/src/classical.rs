//! Classical measure-preserving systems presented through their Koopman
//! action on a distinguished family of observables ("modes").
//!
//! Conventions: `u f := f ∘ T⁻¹`, so `koopman_apply` with k = 1 pushes an
//! observable one step forward along the dynamics, and `correlation(k, ξ, η)`
//! is `⟨U^k ξ, η⟩` with the inner product linear in the first slot. All four
//! systems act on their mode families exactly:
//!
//! * `Rotation`: x ↦ x + θ on the circle; modes are Fourier characters
//!   e_m(x) = exp(2πi m x), and U e_m = exp(-2πi m θ) e_m with the phase
//!   computed from an exact representation of θ (rational turns, or a 192-bit
//!   fixed-point binary expansion for irrational targets such as the golden
//!   rotation).
//! * `CatMap`: a unimodular integer matrix acting on the 2-torus; characters
//!   e_v are permuted by the transpose-inverse lattice action, so every
//!   correlation is 0 or 1 and mixing shows up as orbits escaping any finite
//!   frequency window.
//! * `Chacon`: the single-spacer rank-one transformation; modes are centered
//!   level indicators of a fixed tower stage, and correlations come back as
//!   exact rational enclosures from [`chacon`].
//! * `Shift`: the two-sided Bernoulli shift on a finite alphabet; modes are
//!   mean-zero single-coordinate observables, again permuted exactly.
//!
//! Constant observables are handled separately by the callers, so the
//! constant mode (Fourier(0), Torus(0,0), symbol 0) is rejected on input.

pub mod chacon;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::Ratio;
// Float supplies f64 math via libm in no_std builds; std covers it in tests.
#[cfg_attr(test, allow(unused_imports))]
use num_traits::Float;
use num_traits::{FromPrimitive, ToPrimitive, Zero};

use crate::linalg::C64;
use chacon::{Bits, Enclosure, Rat};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassicalError {
    /// The constant mode carries no dynamics and is excluded from mode vectors.
    ForbiddenConstantMode,
    /// Mode label outside the system's admissible family.
    ModeOutOfRange,
    /// Mode kind does not belong to this system.
    SystemMismatch,
    /// Cat-map matrix must have determinant ±1.
    NonUnimodular,
    /// A tower level was pushed past the top of its stage window.
    NotSubordinate,
    /// Requested tower stage (or the stage needed for the requested shift)
    /// exceeds the exact-arithmetic budget.
    StageTooLarge,
    /// A lattice mode left the i64-representable frequency window.
    ModeOverflow,
    /// Iteration count beyond the supported horizon.
    HorizonExceeded,
}

impl fmt::Display for ClassicalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            ClassicalError::ForbiddenConstantMode => {
                "constant mode is excluded from mode vectors"
            }
            ClassicalError::ModeOutOfRange => "mode label out of range for this system",
            ClassicalError::SystemMismatch => "mode kind does not match the system",
            ClassicalError::NonUnimodular => "torus matrix must have determinant ±1",
            ClassicalError::NotSubordinate => "tower level pushed past its stage window",
            ClassicalError::StageTooLarge => "tower stage beyond exact-arithmetic budget",
            ClassicalError::ModeOverflow => "lattice mode left the representable window",
            ClassicalError::HorizonExceeded => "iteration horizon exceeded",
        };
        f.write_str(msg)
    }
}

impl core::error::Error for ClassicalError {}

// ---------------------------------------------------------------------------
// Angles
// ---------------------------------------------------------------------------

const FIXED_BITS: u32 = 192;

/// Rotation angle in turns (fraction of a full circle), stored exactly.
///
/// `Rational(p/q)` means θ = p/q turns. `Fixed` holds the first 192 binary
/// digits of an irrational number of turns; multiples k·θ up to |k| ≈ 2^60
/// still give phases accurate to well below f64 resolution after the single
/// rounding in `frac_turns`.
#[derive(Clone, Debug, PartialEq)]
pub enum Angle {
    Rational(Ratio<i64>),
    Fixed(BigUint),
}

impl Angle {
    pub fn rational(p: i64, q: i64) -> Angle {
        Angle::Rational(Ratio::new(p, q))
    }

    /// The golden rotation number (√5 − 1)/2 of a turn.
    pub fn golden() -> Angle {
        // floor(√5 · 2^192) via integer sqrt of 5 · 2^384.
        let five = BigUint::from(5u32) << (2 * FIXED_BITS);
        let sqrt5 = five.sqrt();
        let one = BigUint::from(1u32) << FIXED_BITS;
        Angle::Fixed((sqrt5 - one) >> 1)
    }

    /// Fixed-point angle closest to the given number of turns.
    pub fn from_f64_turns(turns: f64) -> Angle {
        let frac = turns - turns.floor();
        let scaled = frac * (2f64).powi(FIXED_BITS as i32);
        Angle::Fixed(BigUint::from_f64(scaled).unwrap_or_else(BigUint::zero))
    }

    /// Fractional part of `mult`·θ in [0, 1).
    pub fn frac_turns(&self, mult: i128) -> f64 {
        match self {
            Angle::Rational(r) => {
                let p = *r.numer() as i128;
                let q = *r.denom() as i128;
                let mut n = (mult % q) * (p % q) % q;
                if n < 0 {
                    n += q;
                }
                n as f64 / q as f64
            }
            Angle::Fixed(frac) => {
                let neg = mult < 0;
                let m = BigUint::from_u128(mult.unsigned_abs()).unwrap();
                let mask = (BigUint::from(1u32) << FIXED_BITS) - BigUint::from(1u32);
                let mut prod = (frac * m) & mask;
                if neg && !prod.is_zero() {
                    prod = (BigUint::from(1u32) << FIXED_BITS) - prod;
                }
                let digits = prod.to_u64_digits();
                let mut val = 0.0;
                for (i, d) in digits.iter().enumerate() {
                    val += (*d as f64) * (2f64).powi(64 * (i as i32 + 1) - FIXED_BITS as i32 - 64);
                }
                val
            }
        }
    }

    /// exp(2πi · mult · θ).
    pub fn phase(&self, mult: i128) -> C64 {
        C64::from_polar(1.0, core::f64::consts::TAU * self.frac_turns(mult))
    }

    /// Distance from `mult`·θ to the nearest integer, in turns.
    pub fn dist_to_integer(&self, mult: i128) -> f64 {
        let f = self.frac_turns(mult);
        f.min(1.0 - f)
    }

    /// Whether `mult`·θ is an exact whole number of turns.
    pub fn multiple_is_integral(&self, mult: i128) -> bool {
        match self {
            Angle::Rational(r) => (mult * (*r.numer() as i128)) % (*r.denom() as i128) == 0,
            // Fixed angles model irrational targets: only the trivial multiple.
            Angle::Fixed(_) => mult == 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Systems and modes
// ---------------------------------------------------------------------------

type Mat2 = [[i64; 2]; 2];

#[derive(Clone, Debug, PartialEq)]
pub enum KoopmanSystem {
    Rotation { theta: Angle },
    /// `forward` acts on the torus; `lattice` is its transpose-inverse acting
    /// on character frequencies, with `lattice_inv` for negative powers.
    CatMap { forward: Mat2, lattice: Mat2, lattice_inv: Mat2 },
    Chacon { stage: u32 },
    Shift { alphabet: u8 },
}

/// Label of one observable in a system's distinguished mode family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModeIndex {
    /// Circle character exp(2πi m x), m ≠ 0.
    Fourier(i64),
    /// Torus character exp(2πi (m x + n y)), (m, n) ≠ (0, 0).
    Torus(i64, i64),
    /// Centered indicator of tower level j of the system's stage.
    Interval(u64),
    /// Mean-zero observable of coordinate p; symbol s in 1..alphabet indexes
    /// an orthonormal basis of the mean-zero functions on one letter.
    ShiftCell(i64, u8),
}

pub fn rotation_koopman(theta: Angle) -> KoopmanSystem {
    KoopmanSystem::Rotation { theta }
}

fn det2(m: &Mat2) -> i64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn inv2(m: &Mat2) -> Result<Mat2, ClassicalError> {
    match det2(m) {
        1 => Ok([[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]]),
        -1 => Ok([[-m[1][1], m[0][1]], [m[1][0], -m[0][0]]]),
        _ => Err(ClassicalError::NonUnimodular),
    }
}

fn transpose2(m: &Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

pub fn catmap_koopman(forward: Mat2) -> Result<KoopmanSystem, ClassicalError> {
    let lattice = transpose2(&inv2(&forward)?);
    let lattice_inv = inv2(&lattice)?;
    Ok(KoopmanSystem::CatMap { forward, lattice, lattice_inv })
}

pub fn chacon_koopman(stage: u32) -> Result<KoopmanSystem, ClassicalError> {
    if stage > chacon::MAX_STAGE {
        return Err(ClassicalError::StageTooLarge);
    }
    Ok(KoopmanSystem::Chacon { stage })
}

pub fn shift_koopman(alphabet: u8) -> Result<KoopmanSystem, ClassicalError> {
    if alphabet < 2 {
        return Err(ClassicalError::ModeOutOfRange);
    }
    Ok(KoopmanSystem::Shift { alphabet })
}

impl KoopmanSystem {
    pub fn check_mode(&self, mode: &ModeIndex) -> Result<(), ClassicalError> {
        match (self, mode) {
            (KoopmanSystem::Rotation { .. }, ModeIndex::Fourier(m)) => {
                if *m == 0 {
                    Err(ClassicalError::ForbiddenConstantMode)
                } else {
                    Ok(())
                }
            }
            (KoopmanSystem::CatMap { .. }, ModeIndex::Torus(m, n)) => {
                if *m == 0 && *n == 0 {
                    Err(ClassicalError::ForbiddenConstantMode)
                } else {
                    Ok(())
                }
            }
            (KoopmanSystem::Chacon { stage }, ModeIndex::Interval(j)) => {
                if *j < chacon::height(*stage) {
                    Ok(())
                } else {
                    Err(ClassicalError::ModeOutOfRange)
                }
            }
            (KoopmanSystem::Shift { alphabet }, ModeIndex::ShiftCell(_, s)) => {
                if *s == 0 {
                    Err(ClassicalError::ForbiddenConstantMode)
                } else if *s >= *alphabet {
                    Err(ClassicalError::ModeOutOfRange)
                } else {
                    Ok(())
                }
            }
            _ => Err(ClassicalError::SystemMismatch),
        }
    }

    /// Whether the mode family is orthonormal (everything except the tower
    /// levels, whose indicators are short and correlated through the mean).
    pub fn modes_orthonormal(&self) -> bool {
        !matches!(self, KoopmanSystem::Chacon { .. })
    }
}

/// Finite complex combination of modes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseModeVector {
    coeffs: BTreeMap<ModeIndex, C64>,
}

impl SparseModeVector {
    pub fn new() -> Self {
        SparseModeVector { coeffs: BTreeMap::new() }
    }

    pub fn single(mode: ModeIndex) -> Self {
        let mut v = Self::new();
        v.insert(mode, C64::new(1.0, 0.0));
        v
    }

    pub fn from_terms<I: IntoIterator<Item = (ModeIndex, C64)>>(terms: I) -> Self {
        let mut v = Self::new();
        for (m, c) in terms {
            v.insert(m, v.get(&m) + c);
        }
        v
    }

    pub fn insert(&mut self, mode: ModeIndex, c: C64) {
        if c == C64::new(0.0, 0.0) {
            self.coeffs.remove(&mode);
        } else {
            self.coeffs.insert(mode, c);
        }
    }

    pub fn get(&self, mode: &ModeIndex) -> C64 {
        self.coeffs.get(mode).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ModeIndex, &C64)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scale(&mut self, c: C64) {
        if c == C64::new(0.0, 0.0) {
            self.coeffs.clear();
        } else {
            for v in self.coeffs.values_mut() {
                *v *= c;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &SparseModeVector, c: C64) {
        for (m, v) in other.iter() {
            self.insert(*m, self.get(m) + c * *v);
        }
    }
}

fn lattice_apply(l: &Mat2, v: (i64, i64)) -> Result<(i64, i64), ClassicalError> {
    let x = (l[0][0] as i128) * (v.0 as i128) + (l[0][1] as i128) * (v.1 as i128);
    let y = (l[1][0] as i128) * (v.0 as i128) + (l[1][1] as i128) * (v.1 as i128);
    match (x.to_i64(), y.to_i64()) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(ClassicalError::ModeOverflow),
    }
}

fn lattice_pow_apply(
    l: &Mat2,
    l_inv: &Mat2,
    k: i64,
    v: (i64, i64),
) -> Result<(i64, i64), ClassicalError> {
    let m = if k >= 0 { l } else { l_inv };
    let mut cur = v;
    for _ in 0..k.unsigned_abs() {
        cur = lattice_apply(m, cur)?;
    }
    Ok(cur)
}

const LATTICE_HORIZON: u64 = 200_000;

/// Exact test for L^k v = w with unbounded integer intermediates.
fn lattice_orbit_hits(
    l: &Mat2,
    l_inv: &Mat2,
    k: i64,
    v: (i64, i64),
    w: (i64, i64),
) -> Result<bool, ClassicalError> {
    if k.unsigned_abs() > LATTICE_HORIZON {
        return Err(ClassicalError::HorizonExceeded);
    }
    let m = if k >= 0 { l } else { l_inv };
    let mut x = BigInt::from(v.0);
    let mut y = BigInt::from(v.1);
    for _ in 0..k.unsigned_abs() {
        let nx = BigInt::from(m[0][0]) * &x + BigInt::from(m[0][1]) * &y;
        let ny = BigInt::from(m[1][0]) * &x + BigInt::from(m[1][1]) * &y;
        x = nx;
        y = ny;
    }
    Ok(x == BigInt::from(w.0) && y == BigInt::from(w.1))
}

/// Largest k in 0..=horizon with ‖L^k v‖_∞ ≤ window; past it the orbit stays
/// outside the window for the whole scanned horizon.
pub fn lattice_escape(system: &KoopmanSystem, v: (i64, i64), window: i64, horizon: u64) -> Result<u64, ClassicalError> {
    let KoopmanSystem::CatMap { lattice, .. } = system else {
        return Err(ClassicalError::SystemMismatch);
    };
    let mut x = BigInt::from(v.0);
    let mut y = BigInt::from(v.1);
    let win = BigInt::from(window);
    let mut last_inside = 0u64;
    let inside = |x: &BigInt, y: &BigInt, win: &BigInt| {
        x.magnitude() <= win.magnitude() && y.magnitude() <= win.magnitude()
    };
    if !inside(&x, &y, &win) {
        // v itself is already outside; report 0 all the same.
    }
    for k in 1..=horizon {
        let nx = BigInt::from(lattice[0][0]) * &x + BigInt::from(lattice[0][1]) * &y;
        let ny = BigInt::from(lattice[1][0]) * &x + BigInt::from(lattice[1][1]) * &y;
        x = nx;
        y = ny;
        if inside(&x, &y, &win) {
            last_inside = k;
        }
    }
    Ok(last_inside)
}

/// Push a mode combination k steps along the dynamics: `U^k ξ`.
pub fn koopman_apply(
    system: &KoopmanSystem,
    k: i64,
    xi: &SparseModeVector,
) -> Result<SparseModeVector, ClassicalError> {
    let mut out = SparseModeVector::new();
    for (mode, c) in xi.iter() {
        system.check_mode(mode)?;
        match (system, mode) {
            (KoopmanSystem::Rotation { theta }, ModeIndex::Fourier(m)) => {
                // (U e_m)(x) = e_m(x - θ) = exp(-2πi m θ) e_m(x).
                let phase = theta.phase(-(k as i128) * (*m as i128));
                out.insert(*mode, out.get(mode) + *c * phase);
            }
            (KoopmanSystem::CatMap { lattice, lattice_inv, .. }, ModeIndex::Torus(m, n)) => {
                let img = lattice_pow_apply(lattice, lattice_inv, k, (*m, *n))?;
                let im = ModeIndex::Torus(img.0, img.1);
                out.insert(im, out.get(&im) + *c);
            }
            (KoopmanSystem::Chacon { stage }, ModeIndex::Interval(j)) => {
                let nj = (*j as i64) + k;
                if nj < 0 || nj as u64 >= chacon::height(*stage) {
                    return Err(ClassicalError::NotSubordinate);
                }
                let im = ModeIndex::Interval(nj as u64);
                out.insert(im, out.get(&im) + *c);
            }
            (KoopmanSystem::Shift { .. }, ModeIndex::ShiftCell(p, s)) => {
                let np = p.checked_sub(k).ok_or(ClassicalError::ModeOverflow)?;
                let im = ModeIndex::ShiftCell(np, *s);
                out.insert(im, out.get(&im) + *c);
            }
            _ => return Err(ClassicalError::SystemMismatch),
        }
    }
    Ok(out)
}

/// Enclosure of the centered level correlation ⟨U^k ψ_i, ψ_j⟩ for the tower
/// system, ψ_j the centered indicator of level j.
pub fn chacon_mode_correlation(
    stage: u32,
    k: i64,
    i: u64,
    j: u64,
    target_width: Rat,
) -> Result<Enclosure, ClassicalError> {
    if k < 0 {
        // ⟨U^k ψ_i, ψ_j⟩ = ⟨ψ_i, U^{-k} ψ_j⟩ = conj ⟨U^{-k} ψ_j, ψ_i⟩, real.
        return chacon_mode_correlation(stage, -k, j, i, target_width);
    }
    let h = chacon::height(stage) as usize;
    if i as usize >= h || j as usize >= h {
        return Err(ClassicalError::ModeOutOfRange);
    }
    let mut a = Bits::zeros(h);
    a.set(chacon::cell_at(stage, i) as usize, true);
    let mut b = Bits::zeros(h);
    b.set(chacon::cell_at(stage, j) as usize, true);
    let raw = chacon::correlation_enclosure(stage, &a, &b, k as u64, target_width)?;
    let w = chacon::width(stage);
    let shift = w * w;
    Ok(Enclosure { lo: raw.lo - shift, hi: raw.hi - shift })
}

/// ⟨U^k ξ, η⟩, linear in ξ, conjugate-linear in η.
pub fn correlation(
    system: &KoopmanSystem,
    k: i64,
    xi: &SparseModeVector,
    eta: &SparseModeVector,
) -> Result<C64, ClassicalError> {
    for (m, _) in xi.iter() {
        system.check_mode(m)?;
    }
    for (m, _) in eta.iter() {
        system.check_mode(m)?;
    }
    let mut acc = C64::new(0.0, 0.0);
    match system {
        KoopmanSystem::Rotation { theta } => {
            for (mode, c) in xi.iter() {
                let ModeIndex::Fourier(m) = mode else { unreachable!() };
                let d = eta.get(mode);
                if d != C64::new(0.0, 0.0) {
                    acc += *c * d.conj() * theta.phase(-(k as i128) * (*m as i128));
                }
            }
        }
        KoopmanSystem::CatMap { lattice, lattice_inv, .. } => {
            for (mode, c) in xi.iter() {
                let ModeIndex::Torus(m, n) = mode else { unreachable!() };
                // Try the cheap exact image first; on overflow fall back to
                // the unbounded-integer orbit comparison per target mode.
                match lattice_pow_apply(lattice, lattice_inv, k, (*m, *n)) {
                    Ok(img) => {
                        let d = eta.get(&ModeIndex::Torus(img.0, img.1));
                        acc += *c * d.conj();
                    }
                    Err(ClassicalError::ModeOverflow) => {
                        for (wmode, d) in eta.iter() {
                            let ModeIndex::Torus(wm, wn) = wmode else { unreachable!() };
                            if lattice_orbit_hits(lattice, lattice_inv, k, (*m, *n), (*wm, *wn))? {
                                acc += *c * d.conj();
                            }
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        KoopmanSystem::Chacon { stage } => {
            let width = Ratio::new(1, 1_000_000_000i128);
            for (mi, c) in xi.iter() {
                let ModeIndex::Interval(i) = mi else { unreachable!() };
                for (mj, d) in eta.iter() {
                    let ModeIndex::Interval(j) = mj else { unreachable!() };
                    let enc = chacon_mode_correlation(*stage, k, *i, *j, width)?;
                    acc += *c * d.conj() * C64::new(enc.midpoint_f64(), 0.0);
                }
            }
        }
        KoopmanSystem::Shift { .. } => {
            for (mode, c) in xi.iter() {
                let ModeIndex::ShiftCell(p, s) = mode else { unreachable!() };
                let np = p.checked_sub(k).ok_or(ClassicalError::ModeOverflow)?;
                let d = eta.get(&ModeIndex::ShiftCell(np, *s));
                acc += *c * d.conj();
            }
        }
    }
    Ok(acc)
}

/// ⟨ξ, η⟩ in the system's one-particle space.
pub fn vector_inner(
    system: &KoopmanSystem,
    xi: &SparseModeVector,
    eta: &SparseModeVector,
) -> Result<C64, ClassicalError> {
    correlation(system, 0, xi, eta)
}

// ---------------------------------------------------------------------------
// Piecewise translation maps
// ---------------------------------------------------------------------------

/// Half-open source interval translated rigidly: [lo, hi) ↦ [lo+shift, hi+shift).
#[derive(Clone, Debug, PartialEq)]
pub struct MapPiece {
    pub lo: Rat,
    pub hi: Rat,
    pub shift: Rat,
}

/// Finite stage of an interval transformation: rigid translations on
/// disjoint pieces, with `residual` the measure still undefined at this
/// stage (resolved by later stages).
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseTranslationMap {
    pub pieces: Vec<MapPiece>,
    pub residual: Rat,
}

impl PiecewiseTranslationMap {
    /// Checks the defining invariants: pieces sorted and disjoint, images
    /// inside [0, 1) and mutually disjoint, covered measure = 1 − residual.
    pub fn validate(&self) -> Result<(), ClassicalError> {
        let zero = Rat::from_integer(0);
        let one = Rat::from_integer(1);
        let mut covered = zero;
        let mut prev_hi = zero;
        let mut images: Vec<(Rat, Rat)> = Vec::with_capacity(self.pieces.len());
        for p in &self.pieces {
            if p.lo < prev_hi || p.hi <= p.lo {
                return Err(ClassicalError::ModeOutOfRange);
            }
            let (ilo, ihi) = (p.lo + p.shift, p.hi + p.shift);
            if ilo < zero || ihi > one {
                return Err(ClassicalError::ModeOutOfRange);
            }
            covered += p.hi - p.lo;
            prev_hi = p.hi;
            images.push((ilo, ihi));
        }
        images.sort();
        for w in images.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(ClassicalError::ModeOutOfRange);
            }
        }
        if covered + self.residual != one {
            return Err(ClassicalError::ModeOutOfRange);
        }
        Ok(())
    }

    /// Image of a point, if it lies in a defined piece.
    pub fn apply(&self, x: &Rat) -> Option<Rat> {
        let idx = self.pieces.partition_point(|p| p.hi <= *x);
        let p = self.pieces.get(idx)?;
        if *x >= p.lo && *x < p.hi {
            Some(*x + p.shift)
        } else {
            None
        }
    }
}

/// Stage-n approximation of the single-spacer transformation as a piecewise
/// translation: every level except the top moves to the next level up.
/// Residual measure is 3^{-n} (top level plus unused spacer pool).
pub fn chacon_stage_map(stage: u32) -> Result<PiecewiseTranslationMap, ClassicalError> {
    if stage > chacon::MAX_MAP_STAGE {
        return Err(ClassicalError::StageTooLarge);
    }
    let h = chacon::height(stage);
    let w = chacon::width(stage);
    let mut by_cell: Vec<(u64, u64)> = (0..h.saturating_sub(1))
        .map(|j| (chacon::cell_at(stage, j), chacon::cell_at(stage, j + 1)))
        .collect();
    by_cell.sort();
    let mut pieces: Vec<MapPiece> = Vec::new();
    for (c, cn) in by_cell {
        let lo = Rat::from_integer(c as i128) * w;
        let hi = Rat::from_integer(c as i128 + 1) * w;
        let shift = Rat::from_integer(cn as i128 - c as i128) * w;
        if let Some(last) = pieces.last_mut() {
            if last.hi == lo && last.shift == shift {
                last.hi = hi;
                continue;
            }
        }
        pieces.push(MapPiece { lo, hi, shift });
    }
    let residual = Rat::from_integer(1) - Rat::from_integer(h as i128 - 1) * w;
    let map = PiecewiseTranslationMap { pieces, residual };
    debug_assert!(map.validate().is_ok());
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn golden_angle_digits() {
        let a = Angle::golden();
        let t = a.frac_turns(1);
        assert!((t - 0.618_033_988_749_894_9).abs() < 1e-15);
        // θ² = 1 − θ for the golden rotation number.
        let t2 = a.frac_turns(1);
        assert!((t2 * t2 - (1.0 - t2)).abs() < 1e-12);
    }

    #[test]
    fn fixed_angle_multiples_match_f64() {
        let a = Angle::golden();
        let theta = a.frac_turns(1);
        for k in [2i128, 3, 10, 1000, -1, -7] {
            let expect = (k as f64 * theta).rem_euclid(1.0);
            let got = a.frac_turns(k);
            let diff = (got - expect).abs().min(1.0 - (got - expect).abs());
            assert!(diff < 1e-10, "k={k}: {got} vs {expect}");
        }
    }

    #[test]
    fn rational_angle_is_exact() {
        let a = Angle::rational(3, 8);
        assert_eq!(a.frac_turns(1), 0.375);
        assert_eq!(a.frac_turns(8), 0.0);
        assert!(a.multiple_is_integral(8));
        assert!(!a.multiple_is_integral(4));
        assert_eq!(a.frac_turns(-1), 0.625);
    }

    #[test]
    fn rotation_eigenvalue_phases() {
        let sys = rotation_koopman(Angle::rational(1, 4));
        let e1 = SparseModeVector::single(ModeIndex::Fourier(1));
        let u1 = koopman_apply(&sys, 1, &e1).unwrap();
        // U e_1 = exp(-2πi/4) e_1 = -i e_1.
        let v = u1.get(&ModeIndex::Fourier(1));
        assert!((v - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn rotation_never_correlation_decays() {
        let sys = rotation_koopman(Angle::golden());
        let e2 = SparseModeVector::single(ModeIndex::Fourier(2));
        for k in [1i64, 17, 391, 10_000] {
            let v = correlation(&sys, k, &e2, &e2).unwrap();
            assert!((v.norm() - 1.0).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn koopman_preserves_inner_products() {
        let sys = rotation_koopman(Angle::golden());
        let xi = SparseModeVector::from_terms([
            (ModeIndex::Fourier(1), c(0.3, -0.4)),
            (ModeIndex::Fourier(-2), c(1.0, 0.25)),
        ]);
        let eta = SparseModeVector::from_terms([
            (ModeIndex::Fourier(1), c(-0.7, 0.1)),
            (ModeIndex::Fourier(5), c(0.0, 2.0)),
        ]);
        let base = vector_inner(&sys, &xi, &eta).unwrap();
        for k in [1i64, 9, 144] {
            let uxi = koopman_apply(&sys, k, &xi).unwrap();
            let ueta = koopman_apply(&sys, k, &eta).unwrap();
            let moved = vector_inner(&sys, &uxi, &ueta).unwrap();
            assert!((moved - base).norm() < 1e-12);
        }
    }

    #[test]
    fn catmap_lattice_action() {
        let sys = catmap_koopman([[2, 1], [1, 1]]).unwrap();
        let KoopmanSystem::CatMap { lattice, .. } = &sys else { unreachable!() };
        assert_eq!(*lattice, [[1, -1], [-1, 2]]);
        let v = SparseModeVector::single(ModeIndex::Torus(1, 0));
        let uv = koopman_apply(&sys, 1, &v).unwrap();
        assert_eq!(uv.get(&ModeIndex::Torus(1, -1)), c(1.0, 0.0));
        // Round trip forward and back.
        let back = koopman_apply(&sys, -1, &uv).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn catmap_orbit_escapes_and_stays_out() {
        let sys = catmap_koopman([[2, 1], [1, 1]]).unwrap();
        let bound = lattice_escape(&sys, (1, 0), 50, 1000).unwrap();
        assert!(bound <= 12, "hyperbolic growth escapes quickly, got {bound}");
        let v = SparseModeVector::single(ModeIndex::Torus(1, 0));
        let w = SparseModeVector::single(ModeIndex::Torus(3, -5));
        for k in (bound as i64 + 1)..(bound as i64 + 40) {
            let corr = correlation(&sys, k, &v, &w).unwrap();
            assert_eq!(corr, c(0.0, 0.0), "k={k}");
        }
    }

    #[test]
    fn shift_moves_cells() {
        let sys = shift_koopman(2).unwrap();
        let v = SparseModeVector::single(ModeIndex::ShiftCell(0, 1));
        let uv = koopman_apply(&sys, 3, &v).unwrap();
        assert_eq!(uv.get(&ModeIndex::ShiftCell(-3, 1)), c(1.0, 0.0));
        // Exact orthogonality once moved.
        assert_eq!(correlation(&sys, 3, &v, &v).unwrap(), c(0.0, 0.0));
        assert_eq!(correlation(&sys, 0, &v, &v).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn chacon_mode_inner_products() {
        let stage = 2u32;
        let w = chacon::width(stage);
        let wf = chacon::rat_f64(&w);
        let sys = chacon_koopman(stage).unwrap();
        let p0 = SparseModeVector::single(ModeIndex::Interval(0));
        let p5 = SparseModeVector::single(ModeIndex::Interval(5));
        let self_inner = vector_inner(&sys, &p0, &p0).unwrap();
        assert!((self_inner.re - (wf - wf * wf)).abs() < 1e-12);
        let cross = vector_inner(&sys, &p0, &p5).unwrap();
        assert!((cross.re + wf * wf).abs() < 1e-12);
    }

    #[test]
    fn chacon_apply_is_level_shift() {
        let sys = chacon_koopman(3).unwrap();
        let p = SparseModeVector::single(ModeIndex::Interval(7));
        let up = koopman_apply(&sys, 5, &p).unwrap();
        assert_eq!(up.get(&ModeIndex::Interval(12)), c(1.0, 0.0));
        let top = SparseModeVector::single(ModeIndex::Interval(39));
        assert_eq!(koopman_apply(&sys, 1, &top), Err(ClassicalError::NotSubordinate));
    }

    #[test]
    fn stage_map_structure() {
        for stage in 0..=5u32 {
            let map = chacon_stage_map(stage).unwrap();
            map.validate().unwrap();
            let expect = Ratio::new(1i128, 3i128.pow(stage));
            assert_eq!(map.residual, expect, "residual 3^-n at stage {stage}");
        }
        // Orbit of 0 climbs the stage-2 tower.
        let map = chacon_stage_map(2).unwrap();
        let w = chacon::width(2);
        let mut x = Rat::from_integer(0);
        for j in 1..chacon::height(2) {
            x = map.apply(&x).unwrap();
            let cell = (x / w).to_integer() as u64;
            assert_eq!(cell, chacon::cell_at(2, j), "height {j}");
        }
        assert!(map.apply(&x).is_none(), "top level undefined at this stage");
    }

    #[test]
    fn constant_modes_rejected() {
        let sys = rotation_koopman(Angle::golden());
        let bad = SparseModeVector::single(ModeIndex::Fourier(0));
        assert_eq!(
            koopman_apply(&sys, 1, &bad),
            Err(ClassicalError::ForbiddenConstantMode)
        );
        let cat = catmap_koopman([[2, 1], [1, 1]]).unwrap();
        let badt = SparseModeVector::single(ModeIndex::Torus(0, 0));
        assert_eq!(
            correlation(&cat, 1, &badt, &badt),
            Err(ClassicalError::ForbiddenConstantMode)
        );
    }

    #[test]
    fn nonunimodular_rejected() {
        assert_eq!(catmap_koopman([[2, 0], [0, 2]]), Err(ClassicalError::NonUnimodular));
    }
}
