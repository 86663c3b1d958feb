//! Truncated q-deformed Fock space over a finite letter family.
//!
//! The basis is the set of words of length ≤ D over d letters, one
//! matrix index per word, degree blocks ordered by length and words within a
//! degree ordered with the first letter as the most significant digit. The
//! q-inner product of two words is the permanent-like sum
//! Σ_{π} q^{inversions(π)} Π ⟨w_i, w'_{π(i)}⟩, materialized per degree as a
//! Gram matrix G_n through the one-annihilation recursion (and checkable
//! against the brute-force permutation sum).
//!
//! Conventions, used verbatim everywhere:
//! * inner products are linear in the first slot; Gram matrices are stored
//!   as G[i, j] = ⟨e_j, e_i⟩ so that ⟨x, y⟩ = y† G x;
//! * creators prepend: a⁺(f)(w) = f ⊗ w, and map top-degree words to 0, so
//!   algebraic identities hold on (and are only asserted for) degree < D;
//! * annihilators are conjugate-linear in their argument:
//!   a(f)(w) = Σ_k q^{k-1} ⟨w_k, f⟩ w∖k;
//! * operator norms are taken in Gram-orthonormalized coordinates
//!   X̃ = G^{1/2} X G^{-1/2}.
//!
//! When the letters are orthonormal, words with different letter multisets
//! are orthogonal, so every Gram is block diagonal over "content classes";
//! eigenwork is done per class. Exact rational Gram construction (both
//! routes) is provided for rational q over orthonormal letters.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_rational::Ratio;
// Float supplies f64 math via libm in no_std builds; std covers it in tests.
#[cfg_attr(test, allow(unused_imports))]
use num_traits::Float;
use num_traits::{One, Zero};

use crate::linalg::{self, eigh, CMatrix, C64, C_ONE, C_ZERO};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QfockError {
    /// |q| must be < 1.
    QOutOfRange,
    /// Requested truncation exceeds the dense-matrix budget.
    DegreeTooLarge,
    /// Vector length does not match the letter count.
    OutsideSpan,
    /// A Gram matrix failed the positivity floor.
    GramNotPositive { degree: usize, min_eig: f64 },
}

impl fmt::Display for QfockError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QfockError::QOutOfRange => f.write_str("deformation parameter must satisfy |q| < 1"),
            QfockError::DegreeTooLarge => f.write_str("truncation exceeds the dense budget"),
            QfockError::OutsideSpan => f.write_str("vector is not over the letter family"),
            QfockError::GramNotPositive { degree, min_eig } => {
                write!(f, "Gram at degree {degree} not positive (min eigenvalue {min_eig:e})")
            }
        }
    }
}

impl core::error::Error for QfockError {}

/// Positivity floor for Gram eigenvalues; below this the truncation is
/// rejected as numerically degenerate.
pub const GRAM_POSITIVITY_FLOOR: f64 = 1e-12;

const MAX_DIM: usize = 4096;
const MAX_DENSE_EIG: usize = 512;

// ---------------------------------------------------------------------------
// Words
// ---------------------------------------------------------------------------

pub fn degree_dim(d: usize, n: usize) -> usize {
    d.pow(n as u32)
}

/// Word of local index `idx` within degree n: base-d digits, first letter
/// most significant.
pub fn local_word(d: usize, n: usize, mut idx: usize) -> Vec<u8> {
    let mut w = vec![0u8; n];
    for slot in (0..n).rev() {
        w[slot] = (idx % d) as u8;
        idx /= d;
    }
    w
}

pub fn local_index(d: usize, word: &[u8]) -> usize {
    word.iter().fold(0usize, |acc, &l| acc * d + l as usize)
}

/// Letter multiset of a word, as per-letter counts.
pub fn content(d: usize, word: &[u8]) -> Vec<u8> {
    let mut c = vec![0u8; d];
    for &l in word {
        c[l as usize] += 1;
    }
    c
}

fn words_by_content(d: usize, n: usize) -> BTreeMap<Vec<u8>, Vec<Vec<u8>>> {
    let mut out: BTreeMap<Vec<u8>, Vec<Vec<u8>>> = BTreeMap::new();
    for idx in 0..degree_dim(d, n) {
        let w = local_word(d, n, idx);
        out.entry(content(d, &w)).or_default().push(w);
    }
    out
}

// ---------------------------------------------------------------------------
// Gram matrices
// ---------------------------------------------------------------------------

/// Dense degree-n Gram via the recursion
/// G_n[a, b] = Σ_k q^{k-1} · lg[a_k, b_1] · G_{n-1}[a∖k, tail(b)],
/// which is the matrix element ⟨w_b, w_a⟩ (column = linear slot).
/// `letter_gram` follows the same layout: lg[i, j] = ⟨e_j, e_i⟩.
pub fn qgram(n: usize, q: f64, letter_gram: &CMatrix) -> Result<CMatrix, QfockError> {
    if !(q.abs() < 1.0) {
        return Err(QfockError::QOutOfRange);
    }
    let d = letter_gram.rows();
    assert_eq!(d, letter_gram.cols(), "letter overlaps must be square");
    if degree_dim(d, n) > MAX_DIM {
        return Err(QfockError::DegreeTooLarge);
    }
    let mut prev = CMatrix::identity(1);
    for m in 1..=n {
        let dim = degree_dim(d, m);
        let mut cur = CMatrix::zeros(dim, dim);
        for a_idx in 0..dim {
            let a = local_word(d, m, a_idx);
            for b_idx in 0..dim {
                let b = local_word(d, m, b_idx);
                let tail_b = local_index(d, &b[1..]);
                let mut acc = C_ZERO;
                let mut qpow = 1.0f64;
                for k in 0..m {
                    let ov = letter_gram[(a[k] as usize, b[0] as usize)];
                    if ov != C_ZERO {
                        let mut a_minus: Vec<u8> = Vec::with_capacity(m - 1);
                        a_minus.extend_from_slice(&a[..k]);
                        a_minus.extend_from_slice(&a[k + 1..]);
                        acc += ov
                            * prev[(local_index(d, &a_minus), tail_b)]
                            * C64::new(qpow, 0.0);
                    }
                    qpow *= q;
                }
                cur[(a_idx, b_idx)] = acc;
            }
        }
        prev = cur;
    }
    Ok(prev)
}

/// Brute-force degree-n Gram: the permutation sum with inversion counting.
/// Exponential in n; the oracle against which `qgram` is checked.
pub fn qgram_brute(n: usize, q: f64, letter_gram: &CMatrix) -> Result<CMatrix, QfockError> {
    if !(q.abs() < 1.0) {
        return Err(QfockError::QOutOfRange);
    }
    let d = letter_gram.rows();
    let dim = degree_dim(d, n);
    if dim > MAX_DIM || n > 8 {
        return Err(QfockError::DegreeTooLarge);
    }
    let mut out = CMatrix::zeros(dim, dim);
    for a_idx in 0..dim {
        let a = local_word(d, n, a_idx);
        for b_idx in 0..dim {
            let b = local_word(d, n, b_idx);
            // ⟨w_b, w_a⟩ = Σ_π q^{inv(π)} Π_i ⟨b_i, a_{π(i)}⟩.
            let mut acc = C_ZERO;
            let mut perm = vec![usize::MAX; n];
            let mut used = vec![false; n];
            permutation_sum(&b, &a, letter_gram, q, 0, &mut perm, &mut used, C_ONE, &mut acc);
            out[(a_idx, b_idx)] = acc;
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn permutation_sum(
    b: &[u8],
    a: &[u8],
    lg: &CMatrix,
    q: f64,
    i: usize,
    perm: &mut [usize],
    used: &mut [bool],
    partial: C64,
    acc: &mut C64,
) {
    let n = b.len();
    if i == n {
        *acc += partial;
        return;
    }
    for j in 0..n {
        if used[j] {
            continue;
        }
        // ⟨b_i, a_j⟩ in the stored layout is lg[a_j, b_i].
        let ov = lg[(a[j] as usize, b[i] as usize)];
        if ov == C_ZERO {
            continue;
        }
        let inv_added = (0..i).filter(|&p| perm[p] > j).count();
        used[j] = true;
        perm[i] = j;
        permutation_sum(b, a, lg, q, i + 1, perm, used, partial * ov * C64::new(q.powi(inv_added as i32), 0.0), acc);
        perm[i] = usize::MAX;
        used[j] = false;
    }
}

/// Per-content-class Gram blocks at degree n for orthonormal letters. Each
/// class lists its words (lexicographic) and the Gram block over them; words
/// in different classes are exactly orthogonal.
pub fn qgram_class_blocks(
    d: usize,
    n: usize,
    q: f64,
) -> Result<BTreeMap<Vec<u8>, (Vec<Vec<u8>>, CMatrix)>, QfockError> {
    if !(q.abs() < 1.0) {
        return Err(QfockError::QOutOfRange);
    }
    let mut cur: BTreeMap<Vec<u8>, (Vec<Vec<u8>>, CMatrix)> = BTreeMap::new();
    cur.insert(vec![0u8; d], (vec![Vec::new()], CMatrix::identity(1)));
    for m in 1..=n {
        let prev_level = cur;
        let mut level: BTreeMap<Vec<u8>, (Vec<Vec<u8>>, CMatrix)> = BTreeMap::new();
        for (cont, words) in words_by_content(d, m) {
            let sz = words.len();
            let mut block = CMatrix::zeros(sz, sz);
            for (ai, a) in words.iter().enumerate() {
                for (bi, b) in words.iter().enumerate() {
                    let mut sub_cont = cont.clone();
                    sub_cont[b[0] as usize] -= 1;
                    let (sub_words, sub_block) = &prev_level[&sub_cont];
                    let tail_b = &b[1..];
                    let tail_pos = sub_words.binary_search_by(|w| w.as_slice().cmp(tail_b)).unwrap();
                    let mut acc = C_ZERO;
                    let mut qpow = 1.0f64;
                    for k in 0..m {
                        if a[k] == b[0] {
                            let mut a_minus: Vec<u8> = Vec::with_capacity(m - 1);
                            a_minus.extend_from_slice(&a[..k]);
                            a_minus.extend_from_slice(&a[k + 1..]);
                            let apos = sub_words
                                .binary_search_by(|w| w.as_slice().cmp(a_minus.as_slice()))
                                .unwrap();
                            acc += sub_block[(apos, tail_pos)] * C64::new(qpow, 0.0);
                        }
                        qpow *= q;
                    }
                    block[(ai, bi)] = acc;
                }
            }
            level.insert(cont, (words, block));
        }
        cur = level;
    }
    Ok(cur)
}

// ---------------------------------------------------------------------------
// Exact rational Gram (orthonormal letters, rational q)
// ---------------------------------------------------------------------------

pub type ExactScalar = Ratio<BigInt>;

/// One content class of an exact Gram: words in lexicographic order and the
/// rational Gram block `entries[a][b] = ⟨w_b, w_a⟩`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassGram {
    pub words: Vec<Vec<u8>>,
    pub entries: Vec<Vec<ExactScalar>>,
}

fn to_big(q: Ratio<i64>) -> ExactScalar {
    Ratio::new(BigInt::from(*q.numer()), BigInt::from(*q.denom()))
}

/// Exact per-class Gram at degree n over orthonormal letters, via the
/// recursion route.
pub fn exact_gram_classes(d: usize, n: usize, q: Ratio<i64>) -> BTreeMap<Vec<u8>, ClassGram> {
    let qb = to_big(q);
    let mut cur: BTreeMap<Vec<u8>, ClassGram> = BTreeMap::new();
    cur.insert(
        vec![0u8; d],
        ClassGram { words: vec![Vec::new()], entries: vec![vec![ExactScalar::one()]] },
    );
    for m in 1..=n {
        let prev = cur;
        let mut level: BTreeMap<Vec<u8>, ClassGram> = BTreeMap::new();
        for (cont, words) in words_by_content(d, m) {
            let sz = words.len();
            let mut entries = vec![vec![ExactScalar::zero(); sz]; sz];
            for (ai, a) in words.iter().enumerate() {
                for (bi, b) in words.iter().enumerate() {
                    let mut sub_cont = cont.clone();
                    sub_cont[b[0] as usize] -= 1;
                    let sub = &prev[&sub_cont];
                    let tail_pos = sub
                        .words
                        .binary_search_by(|w| w.as_slice().cmp(&b[1..]))
                        .unwrap();
                    let mut acc = ExactScalar::zero();
                    let mut qpow = ExactScalar::one();
                    for k in 0..m {
                        if a[k] == b[0] {
                            let mut a_minus: Vec<u8> = Vec::with_capacity(m - 1);
                            a_minus.extend_from_slice(&a[..k]);
                            a_minus.extend_from_slice(&a[k + 1..]);
                            let apos = sub
                                .words
                                .binary_search_by(|w| w.as_slice().cmp(a_minus.as_slice()))
                                .unwrap();
                            acc += &sub.entries[apos][tail_pos] * &qpow;
                        }
                        qpow *= &qb;
                    }
                    entries[ai][bi] = acc;
                }
            }
            level.insert(cont, ClassGram { words, entries });
        }
        cur = level;
    }
    cur
}

/// Exact per-class Gram via the brute-force permutation sum with incremental
/// inversion counting; independent oracle for `exact_gram_classes`.
pub fn exact_gram_classes_brute(d: usize, n: usize, q: Ratio<i64>) -> BTreeMap<Vec<u8>, ClassGram> {
    let qb = to_big(q);
    // Powers of q up to the max inversion count n(n-1)/2.
    let mut qpows = vec![ExactScalar::one()];
    for _ in 0..(n * n.saturating_sub(1) / 2) {
        let last = qpows.last().unwrap().clone();
        qpows.push(last * &qb);
    }
    let mut out: BTreeMap<Vec<u8>, ClassGram> = BTreeMap::new();
    for (cont, words) in words_by_content(d, n) {
        let sz = words.len();
        let mut entries = vec![vec![ExactScalar::zero(); sz]; sz];
        for (ai, a) in words.iter().enumerate() {
            for (bi, b) in words.iter().enumerate() {
                let mut acc = ExactScalar::zero();
                let mut perm = vec![usize::MAX; n];
                let mut used = vec![false; n];
                exact_perm_sum(b, a, &qpows, 0, 0, &mut perm, &mut used, &mut acc);
                entries[ai][bi] = acc;
            }
        }
        out.insert(cont, ClassGram { words, entries });
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn exact_perm_sum(
    b: &[u8],
    a: &[u8],
    qpows: &[ExactScalar],
    i: usize,
    inv: usize,
    perm: &mut [usize],
    used: &mut [bool],
    acc: &mut ExactScalar,
) {
    let n = b.len();
    if i == n {
        *acc += &qpows[inv];
        return;
    }
    for j in 0..n {
        if used[j] || a[j] != b[i] {
            continue;
        }
        let inv_added = (0..i).filter(|&p| perm[p] > j).count();
        used[j] = true;
        perm[i] = j;
        exact_perm_sum(b, a, qpows, i + 1, inv + inv_added, perm, used, acc);
        perm[i] = usize::MAX;
        used[j] = false;
    }
}

// ---------------------------------------------------------------------------
// The truncation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
struct Frames {
    sqrt: Vec<CMatrix>,
    inv_sqrt: Vec<CMatrix>,
}

#[derive(Clone, Debug)]
pub struct FockTruncation {
    pub q: f64,
    pub d: usize,
    pub cutoff: usize,
    /// lg[i, j] = ⟨e_j, e_i⟩ for the letter family.
    pub letter_gram: CMatrix,
    offsets: Vec<usize>,
    grams: Vec<CMatrix>,
    min_gram_eig: f64,
    /// None when every Gram is the identity (q = 0 over orthonormal letters).
    frames: Option<Frames>,
    orthonormal: bool,
}

impl FockTruncation {
    /// Truncation over orthonormal letters.
    pub fn orthonormal(d: usize, cutoff: usize, q: f64) -> Result<Self, QfockError> {
        Self::with_letter_gram(cutoff, q, CMatrix::identity(d))
    }

    /// Truncation over letters with the given overlap matrix
    /// (lg[i, j] = ⟨e_j, e_i⟩, Hermitian positive definite).
    pub fn with_letter_gram(cutoff: usize, q: f64, letter_gram: CMatrix) -> Result<Self, QfockError> {
        if !(q.abs() < 1.0) {
            return Err(QfockError::QOutOfRange);
        }
        let d = letter_gram.rows();
        assert_eq!(d, letter_gram.cols());
        let mut offsets = Vec::with_capacity(cutoff + 2);
        let mut dim = 0usize;
        for n in 0..=cutoff {
            offsets.push(dim);
            dim += degree_dim(d, n);
            if dim > MAX_DIM {
                return Err(QfockError::DegreeTooLarge);
            }
        }
        offsets.push(dim);

        let orthonormal = letter_gram.sub(&CMatrix::identity(d)).max_abs() == 0.0;
        if !orthonormal && degree_dim(d, cutoff) > MAX_DENSE_EIG {
            return Err(QfockError::DegreeTooLarge);
        }

        let mut grams = Vec::with_capacity(cutoff + 1);
        let mut min_gram_eig = f64::INFINITY;
        let mut frames = None;
        if q == 0.0 && orthonormal {
            for n in 0..=cutoff {
                grams.push(CMatrix::identity(degree_dim(d, n)));
            }
            min_gram_eig = 1.0;
        } else if orthonormal {
            let mut sqrts = Vec::with_capacity(cutoff + 1);
            let mut inv_sqrts = Vec::with_capacity(cutoff + 1);
            for n in 0..=cutoff {
                let dn = degree_dim(d, n);
                let blocks = qgram_class_blocks(d, n, q)?;
                let mut g = CMatrix::zeros(dn, dn);
                let mut s = CMatrix::zeros(dn, dn);
                let mut si = CMatrix::zeros(dn, dn);
                for (_, (words, block)) in blocks {
                    let idx: Vec<usize> = words.iter().map(|w| local_index(d, w)).collect();
                    let (vals, vecs) = eigh(&block);
                    for &v in &vals {
                        min_gram_eig = min_gram_eig.min(v);
                        if v < GRAM_POSITIVITY_FLOOR {
                            return Err(QfockError::GramNotPositive { degree: n, min_eig: v });
                        }
                    }
                    scatter_spectral(&mut g, &idx, &vals, &vecs, |x| x);
                    scatter_spectral(&mut s, &idx, &vals, &vecs, |x| x.sqrt());
                    scatter_spectral(&mut si, &idx, &vals, &vecs, |x| 1.0 / x.sqrt());
                }
                grams.push(g);
                sqrts.push(s);
                inv_sqrts.push(si);
            }
            frames = Some(Frames { sqrt: sqrts, inv_sqrt: inv_sqrts });
        } else {
            let mut sqrts = Vec::with_capacity(cutoff + 1);
            let mut inv_sqrts = Vec::with_capacity(cutoff + 1);
            for n in 0..=cutoff {
                let g = qgram(n, q, &letter_gram)?;
                let (vals, vecs) = eigh(&g);
                for &v in &vals {
                    min_gram_eig = min_gram_eig.min(v);
                    if v < GRAM_POSITIVITY_FLOOR {
                        return Err(QfockError::GramNotPositive { degree: n, min_eig: v });
                    }
                }
                let dn = g.rows();
                let mut s = CMatrix::zeros(dn, dn);
                let mut si = CMatrix::zeros(dn, dn);
                let idx: Vec<usize> = (0..dn).collect();
                scatter_spectral(&mut s, &idx, &vals, &vecs, |x| x.sqrt());
                scatter_spectral(&mut si, &idx, &vals, &vecs, |x| 1.0 / x.sqrt());
                grams.push(g);
                sqrts.push(s);
                inv_sqrts.push(si);
            }
            frames = Some(Frames { sqrt: sqrts, inv_sqrt: inv_sqrts });
        }

        Ok(FockTruncation {
            q,
            d,
            cutoff,
            letter_gram,
            offsets,
            grams,
            min_gram_eig,
            frames,
            orthonormal,
        })
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn min_gram_eigenvalue(&self) -> f64 {
        self.min_gram_eig
    }

    pub fn degree_offset(&self, n: usize) -> usize {
        self.offsets[n]
    }

    pub fn degree_range(&self, n: usize) -> core::ops::Range<usize> {
        self.offsets[n]..self.offsets[n + 1]
    }

    /// Degree of the word at a global index.
    pub fn degree_of(&self, idx: usize) -> usize {
        self.offsets.partition_point(|&o| o <= idx) - 1
    }

    pub fn word_at(&self, idx: usize) -> (usize, Vec<u8>) {
        let n = self.degree_of(idx);
        (n, local_word(self.d, n, idx - self.offsets[n]))
    }

    pub fn index_of(&self, word: &[u8]) -> usize {
        self.offsets[word.len()] + local_index(self.d, word)
    }

    pub fn gram(&self, n: usize) -> &CMatrix {
        &self.grams[n]
    }

    pub fn sqrt_gram(&self, n: usize) -> CMatrix {
        match &self.frames {
            Some(f) => f.sqrt[n].clone(),
            None => CMatrix::identity(degree_dim(self.d, n)),
        }
    }

    pub fn inv_sqrt_gram(&self, n: usize) -> CMatrix {
        match &self.frames {
            Some(f) => f.inv_sqrt[n].clone(),
            None => CMatrix::identity(degree_dim(self.d, n)),
        }
    }

    /// ⟨x, y⟩_q = Σ_degrees y_n† G_n x_n.
    pub fn inner(&self, x: &[C64], y: &[C64]) -> C64 {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        let mut acc = C_ZERO;
        for n in 0..=self.cutoff {
            let r = self.degree_range(n);
            let gx = self.grams[n].apply(&x[r.clone()]);
            acc += linalg::dot(&gx, &y[r]);
        }
        acc
    }

    pub fn norm(&self, x: &[C64]) -> f64 {
        self.inner(x, x).re.max(0.0).sqrt()
    }

    /// q-norm of a sparse vector given as (global index, coefficient) pairs,
    /// without touching the dense dimension.
    pub fn sparse_norm(&self, terms: &BTreeMap<usize, C64>) -> f64 {
        let mut acc = 0.0f64;
        for (&i, ci) in terms {
            let (ni, _) = self.word_at(i);
            for (&j, cj) in terms {
                let (nj, _) = self.word_at(j);
                if ni != nj {
                    continue;
                }
                // ⟨e_i, e_j⟩ = G[j_local, i_local] in the stored layout.
                let g = self.grams[ni][(j - self.offsets[nj], i - self.offsets[ni])];
                acc += (*ci * cj.conj() * g).re;
            }
        }
        acc.max(0.0).sqrt()
    }

    pub fn basis_state(&self, word: &[u8]) -> Vec<C64> {
        let mut v = vec![C_ZERO; self.dim()];
        v[self.index_of(word)] = C_ONE;
        v
    }

    fn blockwise(&self, pick: impl Fn(&Frames, usize) -> &CMatrix, x: &CMatrix) -> CMatrix {
        match &self.frames {
            None => x.clone(),
            Some(f) => {
                // Degree-block-diagonal left application.
                let mut out = CMatrix::zeros(x.rows(), x.cols());
                for n in 0..=self.cutoff {
                    let m = pick(f, n);
                    let r = self.degree_range(n);
                    for (bi, i) in r.clone().enumerate() {
                        for (bk, k) in r.clone().enumerate() {
                            let a = m[(bi, bk)];
                            if a == C_ZERO {
                                continue;
                            }
                            for j in 0..x.cols() {
                                out[(i, j)] += a * x[(k, j)];
                            }
                        }
                    }
                }
                out
            }
        }
    }

    /// G^{1/2} X G^{-1/2}: the matrix of X in Gram-orthonormalized
    /// coordinates, where Euclidean norms are q-norms.
    pub fn orthonormal_frame(&self, x: &FockOperator) -> CMatrix {
        match &self.frames {
            None => x.matrix.clone(),
            Some(_) => {
                let left = self.blockwise(|f, n| &f.sqrt[n], &x.matrix);
                self.blockwise(|f, n| &f.inv_sqrt[n], &left.transpose()).transpose()
            }
        }
    }

    /// Operator norm of X w.r.t. the q-inner product on the truncation.
    pub fn operator_norm(&self, x: &FockOperator) -> f64 {
        self.orthonormal_frame(x).operator_norm()
    }

    /// q-adjoint X* = G^{-1} X† G (the unique matrix with
    /// ⟨X ξ, η⟩_q = ⟨ξ, X* η⟩_q).
    pub fn q_adjoint(&self, x: &FockOperator) -> FockOperator {
        let adj = match &self.frames {
            None => x.matrix.adjoint(),
            Some(_) => {
                let xd = x.matrix.adjoint();
                // G^{-1} X† G = S^{-1} (S^{-1} X† S) S, applied blockwise:
                // left-multiply by G^{-1}, right-multiply by G.
                let left = self.blockwise(|f, n| &f.inv_sqrt[n], &xd);
                let left = self.blockwise(|f, n| &f.inv_sqrt[n], &left);
                let right = self.blockwise(|f, n| &f.sqrt[n], &left.transpose());
                let right = self.blockwise(|f, n| &f.sqrt[n], &right);
                right.transpose()
            }
        };
        FockOperator { matrix: adj, shift: x.shift.map(|s| -s) }
    }
}

fn scatter_spectral(
    dst: &mut CMatrix,
    idx: &[usize],
    vals: &[f64],
    vecs: &CMatrix,
    f: impl Fn(f64) -> f64,
) {
    let k = idx.len();
    for t in 0..k {
        let fv = f(vals[t]);
        if fv == 0.0 {
            continue;
        }
        for a in 0..k {
            let va = vecs[(a, t)] * C64::new(fv, 0.0);
            for b in 0..k {
                dst[(idx[a], idx[b])] += va * vecs[(b, t)].conj();
            }
        }
    }
}

/// Dense operator on the truncation. `shift` is the degree shift when the
/// operator is homogeneous (+1 creator, -1 annihilator); None when mixed.
#[derive(Clone, Debug)]
pub struct FockOperator {
    pub matrix: CMatrix,
    pub shift: Option<i32>,
}

impl FockOperator {
    pub fn identity(t: &FockTruncation) -> Self {
        FockOperator { matrix: CMatrix::identity(t.dim()), shift: Some(0) }
    }

    pub fn zero(t: &FockTruncation) -> Self {
        FockOperator { matrix: CMatrix::zeros(t.dim(), t.dim()), shift: Some(0) }
    }

    pub fn compose(&self, other: &FockOperator) -> FockOperator {
        FockOperator {
            matrix: self.matrix.mul(&other.matrix),
            shift: match (self.shift, other.shift) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            },
        }
    }

    pub fn add(&self, other: &FockOperator) -> FockOperator {
        FockOperator {
            matrix: self.matrix.add(&other.matrix),
            shift: match (self.shift, other.shift) {
                (Some(a), Some(b)) if a == b => Some(a),
                _ => None,
            },
        }
    }

    pub fn sub(&self, other: &FockOperator) -> FockOperator {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> FockOperator {
        FockOperator { matrix: self.matrix.scale(c), shift: self.shift }
    }
}

fn check_span(t: &FockTruncation, f: &[C64]) -> Result<(), QfockError> {
    if f.len() != t.d {
        return Err(QfockError::OutsideSpan);
    }
    Ok(())
}

/// a⁺(f): prepends f; linear in f; kills degree-D words.
pub fn creator_matrix(f: &[C64], t: &FockTruncation) -> Result<FockOperator, QfockError> {
    check_span(t, f)?;
    let mut m = CMatrix::zeros(t.dim(), t.dim());
    for n in 0..t.cutoff {
        let dn = degree_dim(t.d, n);
        for local in 0..dn {
            let col = t.offsets[n] + local;
            for (i, &fi) in f.iter().enumerate() {
                if fi == C_ZERO {
                    continue;
                }
                let row = t.offsets[n + 1] + i * dn + local;
                m[(row, col)] = fi;
            }
        }
    }
    Ok(FockOperator { matrix: m, shift: Some(1) })
}

/// a(f): the q-weighted contraction Σ_k q^{k-1} ⟨w_k, f⟩ w∖k; conjugate
/// linear in f; kills the vacuum.
pub fn annihilator_matrix(f: &[C64], t: &FockTruncation) -> Result<FockOperator, QfockError> {
    check_span(t, f)?;
    // φ[ℓ] = ⟨e_ℓ, f⟩ = Σ_j conj(f_j)·lg[j, ℓ].
    let mut phi = vec![C_ZERO; t.d];
    for (l, p) in phi.iter_mut().enumerate() {
        for (j, &fj) in f.iter().enumerate() {
            *p += fj.conj() * t.letter_gram[(j, l)];
        }
    }
    let mut m = CMatrix::zeros(t.dim(), t.dim());
    for n in 1..=t.cutoff {
        let dn = degree_dim(t.d, n);
        for local in 0..dn {
            let col = t.offsets[n] + local;
            let w = local_word(t.d, n, local);
            let mut qpow = 1.0f64;
            for k in 0..n {
                let coeff = phi[w[k] as usize] * C64::new(qpow, 0.0);
                qpow *= t.q;
                if coeff == C_ZERO {
                    continue;
                }
                let mut wm: Vec<u8> = Vec::with_capacity(n - 1);
                wm.extend_from_slice(&w[..k]);
                wm.extend_from_slice(&w[k + 1..]);
                let row = t.offsets[n - 1] + local_index(t.d, &wm);
                m[(row, col)] += coeff;
            }
        }
    }
    Ok(FockOperator { matrix: m, shift: Some(-1) })
}

/// s(f) = a(f) + a⁺(f).
pub fn field_matrix(f: &[C64], t: &FockTruncation) -> Result<FockOperator, QfockError> {
    let c = creator_matrix(f, t)?;
    let a = annihilator_matrix(f, t)?;
    Ok(FockOperator { matrix: c.matrix.add(&a.matrix), shift: None })
}

/// Second quantization ℱ(P): blockwise tensor powers of a letter-space
/// operator (P^{⊗0} = 1 on the vacuum).
pub fn second_quantization(p: &CMatrix, t: &FockTruncation) -> Result<FockOperator, QfockError> {
    if p.rows() != t.d || p.cols() != t.d {
        return Err(QfockError::OutsideSpan);
    }
    let mut m = CMatrix::zeros(t.dim(), t.dim());
    m[(0, 0)] = C_ONE;
    let mut block = CMatrix::identity(1);
    for n in 1..=t.cutoff {
        block = p.kron(&block);
        let off = t.offsets[n];
        for i in 0..block.rows() {
            for j in 0..block.cols() {
                let v = block[(i, j)];
                if v != C_ZERO {
                    m[(off + i, off + j)] = v;
                }
            }
        }
    }
    Ok(FockOperator { matrix: m, shift: Some(0) })
}

/// Sup over all words ξ with degree < D of
/// ‖(a(f)a⁺(g) − q·a⁺(g)a(f) − ⟨g,f⟩·1) ξ‖_q.
/// Exact below the cutoff, so the result certifies the commutation relation;
/// degree-D words are excluded (the truncated creator is not faithful there).
pub fn check_qccr(f: &[C64], g: &[C64], t: &FockTruncation) -> Result<f64, QfockError> {
    check_span(t, f)?;
    check_span(t, g)?;
    let a_f = annihilator_matrix(f, t)?;
    let c_g = creator_matrix(g, t)?;
    // ⟨g, f⟩ = Σ_{i,j} g_i conj(f_j) lg[j, i].
    let mut gf = C_ZERO;
    for (i, &gi) in g.iter().enumerate() {
        for (j, &fj) in f.iter().enumerate() {
            gf += gi * fj.conj() * t.letter_gram[(j, i)];
        }
    }
    let x = a_f
        .compose(&c_g)
        .sub(&c_g.compose(&a_f).scale(C64::new(t.q, 0.0)))
        .sub(&FockOperator::identity(t).scale(gf));
    let mut worst = 0.0f64;
    for n in 0..t.cutoff {
        for col in t.degree_range(n) {
            let mut column: BTreeMap<usize, C64> = BTreeMap::new();
            for row in 0..t.dim() {
                let v = x.matrix[(row, col)];
                if v != C_ZERO {
                    column.insert(row, v);
                }
            }
            worst = worst.max(t.sparse_norm(&column));
        }
    }
    Ok(worst)
}

/// ω(X) = ⟨XΩ, Ω⟩: the (vacuum, vacuum) matrix entry.
pub fn vacuum_expectation(x: &FockOperator) -> C64 {
    x.matrix[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Deterministic pseudo-random complex vector.
    fn pseudo_vec(len: usize, seed: u64) -> Vec<C64> {
        let mut x = seed | 1;
        let mut next = move || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        (0..len).map(|_| C64::new(next(), next())).collect()
    }

    #[test]
    fn qgram_two_letter_oracles() {
        let lg = CMatrix::identity(2);
        for q in [-0.7, 0.0, 0.3, 0.9] {
            let g2 = qgram(2, q, &lg).unwrap();
            // Words at degree 2 in index order: 00, 01, 10, 11.
            // ⟨e0⊗e1, e1⊗e0⟩ = q: stored at [idx(01), idx(10)] or its mirror.
            assert!((g2[(1, 2)].re - q).abs() < 1e-15);
            assert!((g2[(2, 1)].re - q).abs() < 1e-15);
            assert!((g2[(0, 0)].re - (1.0 + q)).abs() < 1e-15, "⟨e0⊗e0, e0⊗e0⟩ = 1+q");
            assert!((g2[(1, 1)].re - 1.0).abs() < 1e-15);
            assert_eq!(g2[(0, 1)], C_ZERO, "different contents are orthogonal");
        }
    }

    #[test]
    fn qgram_diagonal_q_factorial() {
        // ⟨e^⊗n, e^⊗n⟩ = Π_{k=1..n} (1 + q + … + q^{k-1}).
        let lg = CMatrix::identity(1);
        for q in [-0.5f64, 0.2, 0.8] {
            for n in 1..=5usize {
                let g = qgram(n, q, &lg).unwrap();
                let mut expect = 1.0f64;
                for k in 1..=n {
                    expect *= (0..k).map(|j| q.powi(j as i32)).sum::<f64>();
                }
                assert!((g[(0, 0)].re - expect).abs() < 1e-12, "n={n} q={q}");
            }
        }
    }

    #[test]
    fn qgram_zero_is_identity() {
        let g = qgram(4, 0.0, &CMatrix::identity(2)).unwrap();
        assert!(g.sub(&CMatrix::identity(16)).max_abs() == 0.0);
    }

    #[test]
    fn recursion_matches_brute_force() {
        // Non-orthonormal letters: overlaps of two unit vectors at 60°.
        let mut lg = CMatrix::identity(2);
        lg[(0, 1)] = c(0.5, 0.1);
        lg[(1, 0)] = c(0.5, -0.1);
        for q in [-0.6, 0.0, 0.45] {
            for n in 1..=4usize {
                let fast = qgram(n, q, &lg).unwrap();
                let brute = qgram_brute(n, q, &lg).unwrap();
                assert!(fast.sub(&brute).max_abs() < 1e-12, "n={n} q={q}");
            }
        }
        // Orthonormal at n = 5 too.
        let id = CMatrix::identity(2);
        let fast = qgram(5, 0.7, &id).unwrap();
        let brute = qgram_brute(5, 0.7, &id).unwrap();
        assert!(fast.sub(&brute).max_abs() < 1e-12);
    }

    #[test]
    fn exact_routes_agree_small() {
        for (d, n) in [(2usize, 3usize), (2, 4), (3, 3)] {
            let q = Ratio::new(1, 3);
            let rec = exact_gram_classes(d, n, q);
            let brute = exact_gram_classes_brute(d, n, q);
            assert_eq!(rec, brute, "d={d} n={n}");
        }
    }

    #[test]
    fn class_blocks_match_dense() {
        let q = 0.37;
        let d = 2;
        for n in 0..=4usize {
            let dense = qgram(n, q, &CMatrix::identity(d)).unwrap();
            let blocks = qgram_class_blocks(d, n, q).unwrap();
            let mut rebuilt = CMatrix::zeros(dense.rows(), dense.cols());
            for (_, (words, block)) in blocks {
                let idx: Vec<usize> = words.iter().map(|w| local_index(d, w)).collect();
                for (a, &ia) in idx.iter().enumerate() {
                    for (b, &ib) in idx.iter().enumerate() {
                        rebuilt[(ia, ib)] = block[(a, b)];
                    }
                }
            }
            assert!(dense.sub(&rebuilt).max_abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn gram_positivity_across_regimes() {
        for d in [2usize, 4] {
            for q in [-0.9, -0.3, 0.5, 0.9] {
                for n in 0..=6usize {
                    let blocks = qgram_class_blocks(d, n, q).unwrap();
                    for (cont, (_, block)) in blocks {
                        let (vals, _) = eigh(&block);
                        assert!(
                            vals[0] > 0.0,
                            "positivity, d={d} q={q} n={n} class {cont:?}: {}",
                            vals[0]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn creator_prepends_and_truncates() {
        let t = FockTruncation::orthonormal(2, 3, 0.4).unwrap();
        let e0 = [C_ONE, C_ZERO];
        let cr = creator_matrix(&e0, &t).unwrap();
        // a⁺(e0)Ω = e0.
        let omega = t.basis_state(&[]);
        let out = cr.matrix.apply(&omega);
        assert_eq!(out[t.index_of(&[0])], C_ONE);
        assert_eq!(out.iter().filter(|v| **v != C_ZERO).count(), 1);
        // Top degree annihilated.
        let top = t.basis_state(&[1, 0, 1]);
        let out = cr.matrix.apply(&top);
        assert!(out.iter().all(|v| *v == C_ZERO));
        // Linearity in f.
        let e1 = [C_ZERO, C_ONE];
        let fa = [c(0.3, -0.2), c(1.1, 0.7)];
        let lin = creator_matrix(&fa, &t).unwrap();
        let built = creator_matrix(&e0, &t)
            .unwrap()
            .scale(fa[0])
            .add(&creator_matrix(&e1, &t).unwrap().scale(fa[1]));
        assert!(lin.matrix.sub(&built.matrix).max_abs() == 0.0);
    }

    #[test]
    fn annihilator_contracts_with_q_weights() {
        let q = 0.3;
        let t = FockTruncation::orthonormal(2, 3, q).unwrap();
        let e0 = [C_ONE, C_ZERO];
        let e1 = [C_ZERO, C_ONE];
        let w01 = t.basis_state(&[0, 1]);
        // a(e0)(e0⊗e1) = e1.
        let out = annihilator_matrix(&e0, &t).unwrap().matrix.apply(&w01);
        assert!((out[t.index_of(&[1])] - C_ONE).norm() < 1e-15);
        assert_eq!(out.iter().filter(|v| **v != C_ZERO).count(), 1);
        // a(e1)(e0⊗e1) = q·e0.
        let out = annihilator_matrix(&e1, &t).unwrap().matrix.apply(&w01);
        assert!((out[t.index_of(&[0])] - c(q, 0.0)).norm() < 1e-15);
        // a(f)Ω = 0.
        let omega = t.basis_state(&[]);
        let out = annihilator_matrix(&e1, &t).unwrap().matrix.apply(&omega);
        assert!(out.iter().all(|v| *v == C_ZERO));
        // Free case: only the first slot contracts.
        let t0 = FockTruncation::orthonormal(2, 3, 0.0).unwrap();
        let out = annihilator_matrix(&e1, &t0).unwrap().matrix.apply(&t0.basis_state(&[0, 1]));
        assert!(out.iter().all(|v| *v == C_ZERO));
    }

    #[test]
    fn creator_annihilator_q_adjoint() {
        for q in [-0.5, 0.0, 0.6] {
            let t = FockTruncation::orthonormal(3, 4, q).unwrap();
            let f = pseudo_vec(3, 99);
            let cr = creator_matrix(&f, &t).unwrap();
            let an = annihilator_matrix(&f, &t).unwrap();
            // ⟨a⁺(f)ξ, η⟩ = ⟨ξ, a(f)η⟩ for full random vectors supported
            // below the cutoff.
            let dim = t.dim();
            let mut xi = pseudo_vec(dim, 5);
            let mut eta = pseudo_vec(dim, 6);
            for i in t.degree_range(t.cutoff) {
                xi[i] = C_ZERO;
                eta[i] = C_ZERO;
            }
            let lhs = t.inner(&cr.matrix.apply(&xi), &eta);
            let rhs = t.inner(&xi, &an.matrix.apply(&eta));
            assert!((lhs - rhs).norm() < 1e-10, "q={q}: {lhs} vs {rhs}");
            // And through the q_adjoint operator.
            let star = t.q_adjoint(&cr);
            assert!(star.matrix.sub(&an.matrix).max_abs() < 1e-9, "q={q}");
        }
    }

    #[test]
    fn vacuum_moments_free_case() {
        let t = FockTruncation::orthonormal(2, 4, 0.0).unwrap();
        let f = [c(0.6, 0.0), c(0.0, 0.8)]; // unit norm
        let s = field_matrix(&f, &t).unwrap();
        assert_eq!(vacuum_expectation(&s), C_ZERO);
        let s2 = s.compose(&s);
        assert!((vacuum_expectation(&s2) - C_ONE).norm() < 1e-14, "ω(s²) = 1");
        let s4 = s2.compose(&s2);
        assert!((vacuum_expectation(&s4) - c(2.0, 0.0)).norm() < 1e-13, "ω(s⁴) = 2");
    }

    #[test]
    fn vacuum_fourth_moment_counts_crossings() {
        // ω(s(f)⁴) = 2 + q: two non-crossing pair partitions and one crossing.
        for q in [-0.4, 0.25, 0.8] {
            let t = FockTruncation::orthonormal(2, 4, q).unwrap();
            let f = [C_ONE, C_ZERO];
            let s = field_matrix(&f, &t).unwrap();
            let s4 = s.compose(&s).compose(&s).compose(&s);
            assert!((vacuum_expectation(&s4) - c(2.0 + q, 0.0)).norm() < 1e-13, "q={q}");
        }
    }

    #[test]
    fn second_quantization_functorial() {
        let q = 0.5;
        let t = FockTruncation::orthonormal(2, 3, q).unwrap();
        let id = second_quantization(&CMatrix::identity(2), &t).unwrap();
        assert!(id.matrix.sub(&CMatrix::identity(t.dim())).max_abs() == 0.0);
        let zero = second_quantization(&CMatrix::zeros(2, 2), &t).unwrap();
        assert_eq!(vacuum_expectation(&zero), C_ONE);
        assert_eq!(zero.matrix.data().iter().filter(|v| **v != C_ZERO).count(), 1);
        // Unitary P preserves the q-norm.
        let h = {
            let mut m = CMatrix::zeros(2, 2);
            m[(0, 0)] = c(0.3, 0.0);
            m[(0, 1)] = c(0.4, 0.2);
            m[(1, 0)] = c(0.4, -0.2);
            m[(1, 1)] = c(-0.7, 0.0);
            m
        };
        let u = linalg::hermitian_exp_i(&h);
        let fu = second_quantization(&u, &t).unwrap();
        let xi = pseudo_vec(t.dim(), 31);
        let moved = fu.matrix.apply(&xi);
        assert!((t.norm(&moved) - t.norm(&xi)).abs() < 1e-10);
    }

    #[test]
    fn qccr_holds_below_cutoff() {
        for q in [-0.5, 0.0, 0.3, 0.9] {
            let t = FockTruncation::orthonormal(2, 4, q).unwrap();
            let f = pseudo_vec(2, 17);
            let g = pseudo_vec(2, 23);
            let res = check_qccr(&f, &g, &t).unwrap();
            assert!(res < 1e-10, "q={q}: residual {res}");
        }
        // Free orthogonal pair: a(f)a⁺(g) vanishes identically below cutoff.
        let t = FockTruncation::orthonormal(2, 3, 0.0).unwrap();
        let f = [C_ONE, C_ZERO];
        let g = [C_ZERO, C_ONE];
        let prod = annihilator_matrix(&f, &t)
            .unwrap()
            .compose(&creator_matrix(&g, &t).unwrap());
        for n in 0..t.cutoff {
            for col in t.degree_range(n) {
                for row in 0..t.dim() {
                    assert_eq!(prod.matrix[(row, col)], C_ZERO);
                }
            }
        }
    }

    #[test]
    fn operator_norms_in_gram_frame() {
        // Identity has norm 1 whatever q.
        let t = FockTruncation::orthonormal(2, 4, 0.7).unwrap();
        assert!((t.operator_norm(&FockOperator::identity(&t)) - 1.0).abs() < 1e-10);
        // Free creator norm is ‖f‖ exactly on any truncation.
        let t0 = FockTruncation::orthonormal(2, 6, 0.0).unwrap();
        let f = [c(0.6, 0.3), c(-0.2, 0.9)];
        let fnorm = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let cr = creator_matrix(&f, &t0).unwrap();
        assert!((t0.operator_norm(&cr) - fnorm).abs() < 1e-9);
        // Free field on one letter is the path-graph adjacency:
        // norm 2cos(π/(D+2)) → 2.
        for cutoff in [4usize, 10] {
            let t1 = FockTruncation::orthonormal(1, cutoff, 0.0).unwrap();
            let s = field_matrix(&[C_ONE], &t1).unwrap();
            let expect = 2.0 * (core::f64::consts::PI / (cutoff as f64 + 2.0)).cos();
            assert!((t1.operator_norm(&s) - expect).abs() < 1e-9, "cutoff={cutoff}");
        }
    }

    #[test]
    fn norm_bound_anchor() {
        // ‖a(f)‖ ≤ ‖f‖/√(1-|q|) on truncations.
        for q in [-0.8, 0.0, 0.5, 0.9] {
            let t = FockTruncation::orthonormal(2, 5, q).unwrap();
            let f = pseudo_vec(2, 77);
            let fnorm = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let an = annihilator_matrix(&f, &t).unwrap();
            let norm = t.operator_norm(&an);
            assert!(norm <= fnorm / (1.0 - q.abs()).sqrt() + 1e-9, "q={q}");
        }
    }

    #[test]
    fn truncation_guards() {
        assert!(matches!(
            FockTruncation::orthonormal(2, 3, 1.0),
            Err(QfockError::QOutOfRange)
        ));
        assert!(matches!(
            FockTruncation::orthonormal(4, 9, 0.0),
            Err(QfockError::DegreeTooLarge)
        ));
        assert!(matches!(
            creator_matrix(&[C_ONE], &FockTruncation::orthonormal(2, 2, 0.0).unwrap()),
            Err(QfockError::OutsideSpan)
        ));
    }

    #[test]
    fn non_orthonormal_letters_supported() {
        let mut lg = CMatrix::identity(2);
        lg[(0, 1)] = c(0.4, 0.0);
        lg[(1, 0)] = c(0.4, 0.0);
        let t = FockTruncation::with_letter_gram(3, 0.3, lg).unwrap();
        // Degree-1 Gram is the letter Gram itself.
        assert!((t.gram(1)[(0, 1)].re - 0.4).abs() < 1e-15);
        // q-CCR still hold below cutoff with the general pairing.
        let res = check_qccr(&[C_ONE, C_ZERO], &[c(0.2, 0.1), C_ONE], &t).unwrap();
        assert!(res < 1e-10, "residual {res}");
    }
}
