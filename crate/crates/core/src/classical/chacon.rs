//! Exact combinatorics of the single-spacer cutting-and-stacking tower.
//!
//! Stage n is a column of h_n intervals ("levels") of width w_n = 2/3^(n+1),
//! with h_0 = 1 and h_{n+1} = 3 h_n + 1: the column is cut into three equal
//! subcolumns which are restacked left, middle, one spacer, right. The spacer
//! pool is [2/3, 1), consumed left to right, so every endpoint that ever
//! appears is an integer multiple of the current level width. That makes the
//! whole transformation integer combinatorics:
//!
//! * a "cell" is a position index c, the interval [c·w_n, (c+1)·w_n);
//! * stage-n cells 0..h_n tile [0, 1 - 3^-(n+1));
//! * `height_of`/`cell_at` convert between position and column height;
//! * cutting cell c produces stage-(n+1) cells 3c, 3c+1, 3c+2 at heights
//!   j, h_n + j, 2 h_n + 1 + j, and the new spacer is cell 3 h_n at height 2 h_n.
//!
//! Measures of T^k-correlations are computed two independent ways: exactly
//! (with a rational enclosure for the part of the column top that the chosen
//! stage cannot resolve) through the height-indicator substitution
//! b → b b 0 b, and approximately through a deterministic stratified sampling
//! oracle that walks the genealogy maps.

use alloc::vec;
use alloc::vec::Vec;
use num_rational::Ratio;

use super::ClassicalError;

/// Rational with plenty of headroom for denominators 3^(stage+1), stage ≤ 36.
pub type Rat = Ratio<i128>;

/// Deepest stage the integer machinery supports (3^(n+1) must fit in i128
/// with room for counts; u64 for cells).
pub const MAX_STAGE: u32 = 36;

/// Deepest stage whose piecewise map we will materialize.
pub const MAX_MAP_STAGE: u32 = 11;

pub fn pow3(e: u32) -> u64 {
    3u64.pow(e)
}

/// Tower height h_n = (3^(n+1) - 1) / 2.
pub fn height(stage: u32) -> u64 {
    (pow3(stage + 1) - 1) / 2
}

/// Level width w_n = 2 / 3^(n+1).
pub fn width(stage: u32) -> Rat {
    Ratio::new(2, pow3(stage + 1) as i128)
}

/// Column height of position cell `c` at the given stage.
pub fn height_of(stage: u32, c: u64) -> u64 {
    if stage == 0 {
        assert_eq!(c, 0, "stage 0 has a single cell");
        return 0;
    }
    let hp = height(stage - 1);
    if c == 3 * hp {
        return 2 * hp;
    }
    debug_assert!(c < 3 * hp, "cell out of range");
    let j = height_of(stage - 1, c / 3);
    match c % 3 {
        0 => j,
        1 => hp + j,
        _ => 2 * hp + 1 + j,
    }
}

/// Position cell at column height `j` of the given stage (inverse of
/// `height_of`).
pub fn cell_at(stage: u32, j: u64) -> u64 {
    if stage == 0 {
        assert_eq!(j, 0, "stage 0 has a single level");
        return 0;
    }
    let hp = height(stage - 1);
    if j < hp {
        3 * cell_at(stage - 1, j)
    } else if j < 2 * hp {
        3 * cell_at(stage - 1, j - hp) + 1
    } else if j == 2 * hp {
        3 * hp
    } else {
        3 * cell_at(stage - 1, j - 2 * hp - 1) + 2
    }
}

/// Plain bit vector over u64 words.
#[derive(Clone)]
pub struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, b: bool) {
        if b {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    fn push_all(&self, out: &mut Bits) {
        for i in 0..self.len {
            let j = out.len;
            out.len += 1;
            out.set(j, self.get(i));
        }
    }

    /// Popcount of self[i] & other[i + shift] over the overlap.
    pub fn shifted_and_count(&self, other: &Bits, shift: usize) -> u64 {
        if shift >= other.len {
            return 0;
        }
        let mut cnt = 0u64;
        let nw = self.words.len();
        let (wsh, bsh) = (shift / 64, shift % 64);
        for i in 0..nw {
            let lo = other.words.get(i + wsh).copied().unwrap_or(0);
            let shifted = if bsh == 0 {
                lo
            } else {
                let hi = other.words.get(i + wsh + 1).copied().unwrap_or(0);
                (lo >> bsh) | (hi << (64 - bsh))
            };
            cnt += (self.words[i] & shifted).count_ones() as u64;
        }
        cnt
    }
}

/// Height-indicator word of a union of stage-m cells, lifted to `to_stage` by
/// the substitution b → b b 0 b. Entry j says whether the level at height j
/// lies inside the union (spacers adjoined after stage m never do).
pub fn height_word(seed_stage: u32, cells: &Bits, to_stage: u32) -> Bits {
    assert!(cells.len() as u64 == height(seed_stage), "seed must cover stage cells");
    let hm = height(seed_stage) as usize;
    let mut b = Bits::zeros(hm);
    for j in 0..hm {
        let c = cell_at(seed_stage, j as u64) as usize;
        b.set(j, cells.get(c));
    }
    for _s in seed_stage..to_stage {
        let mut nb = Bits::zeros(0);
        nb.words = Vec::with_capacity((3 * b.len + 1).div_ceil(64));
        nb.words.resize((3 * b.len + 1).div_ceil(64), 0);
        nb.len = 0;
        b.push_all(&mut nb);
        b.push_all(&mut nb);
        nb.len += 1; // spacer bit, false
        b.push_all(&mut nb);
        b = nb;
    }
    b
}

/// Exact enclosure of a measure: both endpoints rational.
#[derive(Clone, Debug, PartialEq)]
pub struct Enclosure {
    pub lo: Rat,
    pub hi: Rat,
}

impl Enclosure {
    pub fn point(v: Rat) -> Self {
        Enclosure { lo: v, hi: v }
    }

    pub fn width(&self) -> Rat {
        self.hi - self.lo
    }

    pub fn midpoint_f64(&self) -> f64 {
        let m = (self.lo + self.hi) / Rat::from_integer(2);
        rat_f64(&m)
    }

    /// Enclosure of |x - c| for this enclosure x and exact c.
    pub fn abs_dev(&self, c: Rat) -> Enclosure {
        let lo = self.lo - c;
        let hi = self.hi - c;
        if lo >= Rat::from_integer(0) {
            Enclosure { lo, hi }
        } else if hi <= Rat::from_integer(0) {
            Enclosure { lo: -hi, hi: -lo }
        } else {
            let m = if -lo > hi { -lo } else { hi };
            Enclosure { lo: Rat::from_integer(0), hi: m }
        }
    }
}

pub fn rat_f64(r: &Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// μ(A) of a union of stage-m cells.
pub fn cells_measure(stage: u32, cells: &Bits) -> Rat {
    Rat::from_integer(cells.count() as i128) * width(stage)
}

/// The stage-0 base [0, 2/3) as a union of stage-m cells (cells 0..3^m).
pub fn base_cells(stage: u32) -> Bits {
    let h = height(stage) as usize;
    let mut b = Bits::zeros(h);
    let lim = pow3(stage) as usize;
    for c in 0..lim.min(h) {
        b.set(c, true);
    }
    b
}

fn cell_in_union(seed_stage: u32, cells: &Bits, stage: u32, cell: u64) -> bool {
    debug_assert!(stage >= seed_stage);
    let anc = cell / pow3(stage - seed_stage);
    (anc as usize) < cells.len() && cells.get(anc as usize)
}

/// Exact enclosures of μ(T^k A ∩ B) for every k in 1..=max_k, resolved at
/// `work_stage`. A and B are unions of stage-m cells. The unresolved top of
/// the column contributes the interval width k·w (at most), which shrinks by
/// a factor 3 per extra stage of `work_stage`.
pub fn correlation_sweep(
    seed_stage: u32,
    a_cells: &Bits,
    b_cells: &Bits,
    max_k: u64,
    work_stage: u32,
) -> Result<Vec<Enclosure>, ClassicalError> {
    if work_stage > MAX_STAGE || work_stage < seed_stage {
        return Err(ClassicalError::StageTooLarge);
    }
    let h = height(work_stage);
    if max_k >= h {
        return Err(ClassicalError::StageTooLarge);
    }
    let wa = height_word(seed_stage, a_cells, work_stage);
    let wb = height_word(seed_stage, b_cells, work_stage);
    let w = width(work_stage);

    // suffix_a[j] = number of A-heights at positions >= j.
    let hu = h as usize;
    let mut suffix_a = vec![0u64; hu + 1];
    for j in (0..hu).rev() {
        suffix_a[j] = suffix_a[j + 1] + if wa.get(j) { 1 } else { 0 };
    }

    let mut out = Vec::with_capacity(max_k as usize);
    for k in 1..=max_k {
        let resolved = wa.shifted_and_count(&wb, k as usize);
        let unresolved = suffix_a[hu - k as usize];
        let lo = Rat::from_integer(resolved as i128) * w;
        let hi = Rat::from_integer((resolved + unresolved) as i128) * w;
        out.push(Enclosure { lo, hi });
    }
    Ok(out)
}

/// Exact enclosure of μ(T^k A ∩ B) for one k, refined by descending stages
/// until the enclosure width is at most `target_width` (or the stage budget
/// runs out, which still returns a valid, wider enclosure).
pub fn correlation_enclosure(
    seed_stage: u32,
    a_cells: &Bits,
    b_cells: &Bits,
    k: u64,
    target_width: Rat,
) -> Result<Enclosure, ClassicalError> {
    if k == 0 {
        let mut cnt = 0u64;
        for c in 0..a_cells.len() {
            if a_cells.get(c) && b_cells.get(c) {
                cnt += 1;
            }
        }
        return Ok(Enclosure::point(Rat::from_integer(cnt as i128) * width(seed_stage)));
    }
    let mut n = seed_stage;
    while height(n) <= k {
        n += 1;
        if n > MAX_STAGE {
            return Err(ClassicalError::StageTooLarge);
        }
    }
    let wa = height_word(seed_stage, a_cells, n);
    let wb = height_word(seed_stage, b_cells, n);
    let h = height(n);
    let mut resolved = Rat::from_integer(wa.shifted_and_count(&wb, k as usize) as i128) * width(n);

    // Heights in the top k of the column whose image is not visible at stage n.
    let mut pending: Vec<u64> = ((h - k)..h).filter(|&j| wa.get(j as usize)).collect();

    let mut stage = n;
    while !pending.is_empty() {
        let unresolved_mass = Rat::from_integer(pending.len() as i128) * width(stage);
        if unresolved_mass <= target_width || stage >= MAX_STAGE {
            return Ok(Enclosure { lo: resolved, hi: resolved + unresolved_mass });
        }
        let hp = height(stage);
        let hn = height(stage + 1);
        let mut next_pending = Vec::with_capacity(pending.len());
        for &j in &pending {
            for child in [j, hp + j, 2 * hp + 1 + j] {
                if child + k < hn {
                    let target = cell_at(stage + 1, child + k);
                    if cell_in_union(seed_stage, b_cells, stage + 1, target) {
                        resolved += width(stage + 1);
                    }
                } else {
                    next_pending.push(child);
                }
            }
        }
        pending = next_pending;
        stage += 1;
    }
    Ok(Enclosure::point(resolved))
}

/// Deterministic stratified sampling estimate of μ(T^k A ∩ B) with `points`
/// midpoints of an equispaced grid on [0, 1). Returns the estimate and the
/// number of grid points whose orbit could not be resolved within the stage
/// budget (expected 0).
pub fn sampling_oracle(
    seed_stage: u32,
    a_cells: &Bits,
    b_cells: &Bits,
    k: u64,
    points: u32,
) -> (f64, u32) {
    let mut hits = 0u64;
    let mut unresolved = 0u32;
    let p = points as i128;
    'point: for i in 0..points {
        // x = (2i+1) / (2 points); source cell at the seed stage is
        // floor(x / w_m) = floor((2i+1)·3^(m+1) / (4 points)).
        let num = (2 * i as i128) + 1;
        let cm = num * pow3(seed_stage + 1) as i128 / (4 * p);
        if cm as usize >= a_cells.len() || !a_cells.get(cm as usize) {
            continue;
        }
        let mut s = seed_stage;
        loop {
            let h = height(s);
            let c = (num * pow3(s + 1) as i128 / (4 * p)) as u64;
            if c < h {
                let j = height_of(s, c);
                if j + k < h {
                    let target = cell_at(s, j + k);
                    if cell_in_union(seed_stage, b_cells, s, target) {
                        hits += 1;
                    }
                    continue 'point;
                }
            }
            s += 1;
            if s > MAX_STAGE {
                unresolved += 1;
                continue 'point;
            }
        }
    }
    (hits as f64 / points as f64, unresolved)
}
