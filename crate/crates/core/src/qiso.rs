//! The deformed-to-free dictionary on a truncated Fock space: the averaged
//! occupation operator M = Σ_j a⁺(e_j)a(e_j), the degree-recursive isometry
//! V onto the free space, the conjugated square root R = V·M^{1/2}·V⁻¹, the
//! fixed-point identity R² = Σ_j a₀⁺(e_j)a₀(e_j) + q·Σ_{jk} (a₀(e_j)R a₀(e_k))*
//! (a₀(e_k)R a₀(e_j)), gauge intertwining, and the map a_q(e_j) ↦ a₀(e_j)R,
//! which satisfies the deformed commutation relations whenever |q| < √2 − 1.
//!
//! Everything here lives over orthonormal letters; the deformed and free
//! truncations share word coordinates, so V and R are plain block matrices.
//! The square root of M at degree m is taken in the frame that makes
//! (I_d ⊗ G_{m-1})·M_m Hermitian — the same recursion that produces the
//! deformed Gram — which keeps the isometry property of V exact instead of
//! approximate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

// Float supplies f64 math via libm in no_std builds; std covers it in tests.
#[cfg_attr(test, allow(unused_imports))]
use num_traits::Float;

use crate::linalg::{self, CMatrix, C64, C_ONE, C_ZERO};
use crate::qfock::{
    annihilator_matrix, creator_matrix, second_quantization, FockOperator, FockTruncation,
    QfockError,
};

/// Strict upper bound for the deformation in the dictionary: √2 − 1.
pub const THETA_Q_MAX: f64 = core::f64::consts::SQRT_2 - 1.0;

#[derive(Clone, Debug, PartialEq)]
pub enum QisoError {
    Fock(QfockError),
    /// |q| at or beyond √2 − 1: the defining series for the dictionary stops
    /// contracting there.
    DeformationTooLarge { q: f64 },
    /// A degree block of M dipped below the positivity floor.
    MNotPositive { degree: usize, min_eig: f64 },
    /// The supplied block matrix is not unitary.
    NotUnitary { residual: f64 },
    /// A projection rank outside 0..=d.
    BadRank,
}

impl fmt::Display for QisoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QisoError::Fock(e) => write!(f, "fock layer: {e}"),
            QisoError::DeformationTooLarge { q } => write!(
                f,
                "deformation q = {q} rejected: the dictionary a_q(e_j) ↦ a₀(e_j)R \
                 requires |q| < √2 − 1 ≈ {THETA_Q_MAX:.6}"
            ),
            QisoError::MNotPositive { degree, min_eig } => write!(
                f,
                "occupation block at degree {degree} not positive (min eigenvalue {min_eig:e})"
            ),
            QisoError::NotUnitary { residual } => {
                write!(f, "letter map is not unitary (residual {residual:e})")
            }
            QisoError::BadRank => f.write_str("projection rank must lie in 0..=d"),
        }
    }
}

impl core::error::Error for QisoError {}

impl From<QfockError> for QisoError {
    fn from(e: QfockError) -> Self {
        QisoError::Fock(e)
    }
}

/// Σ_j a⁺(e_j) a(e_j) over the letters of the truncation. Degree preserving;
/// kills the vacuum; identity on degree one.
pub fn m_operator(t: &FockTruncation) -> Result<FockOperator, QisoError> {
    let d = t.d;
    let mut m = FockOperator::zero(t);
    for j in 0..d {
        let mut e = vec![C_ZERO; d];
        e[j] = C_ONE;
        let cre = creator_matrix(&e, t)?;
        let ann = annihilator_matrix(&e, t)?;
        m = m.add(&cre.compose(&ann));
    }
    m.shift = Some(0);
    Ok(m)
}

/// The full dictionary: deformed truncation, free twin, M with its square
/// root, the isometry V (deformed coordinates → free coordinates), and
/// R = V·M^{1/2}·V⁻¹ on the free side.
#[derive(Clone, Debug)]
pub struct IsoBundle {
    pub q: f64,
    pub d: usize,
    pub cutoff: usize,
    pub qt: FockTruncation,
    pub ft: FockTruncation,
    pub m_op: FockOperator,
    pub m_sqrt: FockOperator,
    pub v: FockOperator,
    pub v_inv: FockOperator,
    pub r: FockOperator,
    /// Least eigenvalue across the degree ≥ 1 blocks of M.
    pub min_m_eig: f64,
}

fn degree_block(m: &CMatrix, t: &FockTruncation, n: usize) -> CMatrix {
    let r = t.degree_range(n);
    CMatrix::from_fn(r.len(), r.len(), |i, j| m[(r.start + i, r.start + j)])
}

fn scatter_block(target: &mut CMatrix, t: &FockTruncation, n: usize, block: &CMatrix) {
    let r = t.degree_range(n);
    for i in 0..r.len() {
        for j in 0..r.len() {
            target[(r.start + i, r.start + j)] = block[(i, j)];
        }
    }
}

/// Builds the dictionary at deformation q over d orthonormal letters up to
/// the degree cutoff. Rejects |q| ≥ √2 − 1.
pub fn build_bundle(d: usize, cutoff: usize, q: f64) -> Result<IsoBundle, QisoError> {
    if !(q.abs() < THETA_Q_MAX) {
        return Err(QisoError::DeformationTooLarge { q });
    }
    let qt = FockTruncation::orthonormal(d, cutoff, q)?;
    let ft = FockTruncation::orthonormal(d, cutoff, 0.0)?;
    let m_op = m_operator(&qt)?;
    let dim = qt.dim();
    let mut m_sqrt = CMatrix::zeros(dim, dim);
    let mut v = CMatrix::zeros(dim, dim);
    let mut v_inv = CMatrix::zeros(dim, dim);
    let mut r = CMatrix::zeros(dim, dim);
    let mut min_m_eig = f64::INFINITY;

    let mut v_prev = CMatrix::identity(1);
    // Degree 0: everything is the scalar block; M kills the vacuum.
    v[(0, 0)] = C_ONE;
    v_inv[(0, 0)] = C_ONE;

    for n in 1..=cutoff {
        let mn = degree_block(&m_op.matrix, &qt, n);
        // Frame in which M_n is Hermitian: I_d ⊗ G_{n-1}^{1/2} — the Gram
        // recursion frame, which keeps V an exact isometry.
        let eye = CMatrix::identity(d);
        let frame = eye.kron(&qt.sqrt_gram(n - 1));
        let frame_inv = eye.kron(&qt.inv_sqrt_gram(n - 1));
        let mt = frame.mul(&mn).mul(&frame_inv);
        let (evals, _) = linalg::eigh(&mt);
        let lo = evals.first().copied().unwrap_or(0.0);
        if lo < 1e-12 {
            return Err(QisoError::MNotPositive { degree: n, min_eig: lo });
        }
        min_m_eig = min_m_eig.min(lo);
        let st = linalg::hermitian_map(&mt, |x| C64::new(x.max(0.0).sqrt(), 0.0));
        let sn = frame_inv.mul(&st).mul(&frame);
        let vn = eye.kron(&v_prev).mul(&sn);
        // V⁻¹ = G⁻¹ V† on each block (V†V = G exactly in this frame).
        let gi = qt.inv_sqrt_gram(n);
        let vn_inv = gi.mul(&gi).mul(&vn.adjoint());
        let rn = vn.mul(&sn).mul(&vn_inv);
        scatter_block(&mut m_sqrt, &qt, n, &sn);
        scatter_block(&mut v, &qt, n, &vn);
        scatter_block(&mut v_inv, &qt, n, &vn_inv);
        scatter_block(&mut r, &qt, n, &rn);
        v_prev = vn;
    }
    let wrap = |m: CMatrix| FockOperator { matrix: m, shift: Some(0) };
    Ok(IsoBundle {
        q,
        d,
        cutoff,
        qt,
        ft,
        m_op,
        m_sqrt: wrap(m_sqrt),
        v: wrap(v),
        v_inv: wrap(v_inv),
        r: wrap(r),
        min_m_eig,
    })
}

/// Deterministic pseudo-random complex vectors for isometry spot checks
/// (splitmix64; no external randomness in this crate).
fn pseudo_random_vector(dim: usize, seed: u64) -> Vec<C64> {
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    let mut next = || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    let unit = |bits: u64| (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
    (0..dim).map(|_| C64::new(unit(next()), unit(next()))).collect()
}

/// max |⟨Vξ, Vη⟩₀ − ⟨ξ, η⟩_q| over `samples` pseudo-random pairs.
pub fn v_isometry_residual(b: &IsoBundle, samples: usize, seed: u64) -> f64 {
    let dim = b.qt.dim();
    let mut worst = 0.0f64;
    for s in 0..samples {
        let xi = pseudo_random_vector(dim, seed ^ (2 * s as u64));
        let eta = pseudo_random_vector(dim, seed ^ (2 * s as u64 + 1));
        let vxi = b.v.matrix.apply(&xi);
        let veta = b.v.matrix.apply(&eta);
        let free = linalg::dot(&vxi, &veta);
        let deformed = b.qt.inner(&xi, &eta);
        worst = worst.max((free - deformed).norm());
    }
    worst
}

/// Residual of the fixed-point identity
/// R² = Σ_j a₀⁺(e_j)a₀(e_j) + q·Σ_{jk} (a₀(e_j)R a₀(e_k))† (a₀(e_k)R a₀(e_j)),
/// evaluated blockwise on degrees ≤ cutoff − 2 (the cross terms reach two
/// degrees past their argument).
#[derive(Clone, Debug)]
pub struct FixedPointReport {
    pub max_residual: f64,
    pub per_degree: Vec<(usize, f64)>,
}

pub fn verify_r_fixedpoint(b: &IsoBundle) -> Result<FixedPointReport, QisoError> {
    let lhs_rhs = fixed_point_sides(b, b.q)?;
    let max_degree = b.cutoff.saturating_sub(2);
    let mut per_degree = Vec::new();
    let mut worst = 0.0f64;
    for n in 0..=max_degree {
        let block = degree_block(&lhs_rhs, &b.ft, n);
        let dev = block.operator_norm();
        per_degree.push((n, dev));
        worst = worst.max(dev);
    }
    Ok(FixedPointReport { max_residual: worst, per_degree })
}

/// R² − RHS with an adjustable weight on the cross term (the identity holds
/// with weight q; see the regression test for the contrast at weight 1).
fn fixed_point_sides(b: &IsoBundle, cross_weight: f64) -> Result<CMatrix, QisoError> {
    let d = b.d;
    let r2 = b.r.matrix.mul(&b.r.matrix);
    // Σ_j a₀⁺ a₀ on the free side: the degree ≥ 1 projection analogue.
    let mut occupancy = CMatrix::zeros(b.ft.dim(), b.ft.dim());
    let mut anns = Vec::with_capacity(d);
    for j in 0..d {
        let mut e = vec![C_ZERO; d];
        e[j] = C_ONE;
        let cre = creator_matrix(&e, &b.ft)?;
        let ann = annihilator_matrix(&e, &b.ft)?;
        occupancy = occupancy.add(&cre.matrix.mul(&ann.matrix));
        anns.push(ann.matrix);
    }
    let mut cross = CMatrix::zeros(b.ft.dim(), b.ft.dim());
    for j in 0..d {
        for k in 0..d {
            let x_jk = anns[j].mul(&b.r.matrix).mul(&anns[k]);
            let x_kj = anns[k].mul(&b.r.matrix).mul(&anns[j]);
            cross = cross.add(&x_jk.adjoint().mul(&x_kj));
        }
    }
    Ok(r2
        .sub(&occupancy)
        .sub(&cross.scale(C64::new(cross_weight, 0.0))))
}

#[derive(Clone, Debug)]
pub struct IntertwineReport {
    /// ‖ℱ₀(P)·R − R·ℱ₀(P)‖ on the free truncation.
    pub free_residual: f64,
    /// ‖ℱ_q(P)·M − M·ℱ_q(P)‖ on the deformed truncation — the mechanism
    /// behind the free-side commutation.
    pub deformed_mechanism_residual: f64,
}

fn check_unitary(p: &CMatrix) -> Result<(), QisoError> {
    let dev = p
        .adjoint()
        .mul(p)
        .sub(&CMatrix::identity(p.rows()))
        .max_abs();
    if dev > 1e-9 {
        return Err(QisoError::NotUnitary { residual: dev });
    }
    Ok(())
}

/// R commutes with every free gauge transformation ℱ₀(P); the reason is that
/// M commutes with the deformed one.
pub fn verify_intertwine(b: &IsoBundle, p: &CMatrix) -> Result<IntertwineReport, QisoError> {
    check_unitary(p)?;
    let f0 = second_quantization(p, &b.ft)?;
    let comm_free = f0
        .matrix
        .mul(&b.r.matrix)
        .sub(&b.r.matrix.mul(&f0.matrix));
    let free_residual = b
        .ft
        .operator_norm(&FockOperator { matrix: comm_free, shift: Some(0) });
    let fq = second_quantization(p, &b.qt)?;
    let comm_def = fq
        .matrix
        .mul(&b.m_op.matrix)
        .sub(&b.m_op.matrix.mul(&fq.matrix));
    let deformed_mechanism_residual = b
        .qt
        .operator_norm(&FockOperator { matrix: comm_def, shift: Some(0) });
    Ok(IntertwineReport { free_residual, deformed_mechanism_residual })
}

#[derive(Clone, Debug)]
pub struct ThetaReport {
    /// max_{ij} ‖b_i b_j† − q·b_j† b_i − δ_ij·1‖ on degrees ≤ cutoff − 2,
    /// for b_j = a₀(e_j)·R.
    pub qccr_residual: f64,
    /// max_j ‖ℱ₀(P)·b_j·ℱ₀(P)⁻¹ − b(P e_j)‖ on the same degrees.
    pub intertwine_residual: f64,
    pub max_degree: usize,
}

fn restrict_degrees(m: &CMatrix, t: &FockTruncation, max_degree: usize) -> CMatrix {
    let keep = t.degree_range(max_degree).end;
    CMatrix::from_fn(m.rows(), m.cols(), |i, j| {
        if i < keep && j < keep {
            m[(i, j)]
        } else {
            C_ZERO
        }
    })
}

/// The dictionary a_q(e_j) ↦ b_j = a₀(e_j)·R: checks the deformed
/// commutation relations of the b's and their gauge covariance. |q| at or
/// beyond √2 − 1 is rejected.
pub fn theta_check(b: &IsoBundle, p: &CMatrix) -> Result<ThetaReport, QisoError> {
    if !(b.q.abs() < THETA_Q_MAX) {
        return Err(QisoError::DeformationTooLarge { q: b.q });
    }
    check_unitary(p)?;
    let d = b.d;
    let mut bs = Vec::with_capacity(d);
    for j in 0..d {
        let mut e = vec![C_ZERO; d];
        e[j] = C_ONE;
        bs.push(annihilator_matrix(&e, &b.ft)?.matrix.mul(&b.r.matrix));
    }
    let max_degree = b.cutoff.saturating_sub(2);
    let eye = CMatrix::identity(b.ft.dim());
    let mut qccr = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let lhs = bs[i].mul(&bs[j].adjoint());
            let rhs = bs[j].adjoint().mul(&bs[i]).scale(C64::new(b.q, 0.0));
            let mut dev = lhs.sub(&rhs);
            if i == j {
                dev = dev.sub(&eye);
            }
            let restricted = restrict_degrees(&dev, &b.ft, max_degree);
            qccr = qccr.max(restricted.operator_norm());
        }
    }
    let f0 = second_quantization(p, &b.ft)?;
    let f0_inv = second_quantization(&p.adjoint(), &b.ft)?;
    let mut inter = 0.0f64;
    for j in 0..d {
        let conj = f0.matrix.mul(&bs[j]).mul(&f0_inv.matrix);
        // b(P e_j) = a₀(P e_j)·R.
        let col: Vec<C64> = (0..d).map(|i| p[(i, j)]).collect();
        let direct = annihilator_matrix(&col, &b.ft)?.matrix.mul(&b.r.matrix);
        let restricted = restrict_degrees(&conj.sub(&direct), &b.ft, max_degree);
        inter = inter.max(restricted.operator_norm());
    }
    Ok(ThetaReport { qccr_residual: qccr, intertwine_residual: inter, max_degree })
}

/// (‖a_q(f)‖ on the truncation, ‖f‖/√(1−|q|), norm ≤ bound).
pub fn annihilator_norm_bound(
    f: &[C64],
    t: &FockTruncation,
) -> Result<(f64, f64, bool), QisoError> {
    let a = annihilator_matrix(f, t)?;
    let norm = t.operator_norm(&a);
    let fnorm = {
        // ‖f‖ in the letter inner product.
        let mut acc = C_ZERO;
        let g = &t.letter_gram;
        for i in 0..f.len() {
            for j in 0..f.len() {
                acc += f[i] * f[j].conj() * g[(j, i)];
            }
        }
        acc.re.max(0.0).sqrt()
    };
    let bound = fnorm / (1.0 - t.q.abs()).sqrt();
    Ok((norm, bound, norm <= bound + 1e-9))
}

/// Finite-rank approximant of a letter unitary: U_n = exp(i·P_n·H·P_n) with
/// H the Hermitian logarithm of U and P_n the projection onto the first
/// `rank` letters.
pub fn koopman_approximant(u: &CMatrix, rank: usize) -> Result<CMatrix, QisoError> {
    check_unitary(u)?;
    if rank > u.rows() {
        return Err(QisoError::BadRank);
    }
    let h = linalg::unitary_log(u);
    let compressed = CMatrix::from_fn(u.rows(), u.cols(), |i, j| {
        if i < rank && j < rank {
            h[(i, j)]
        } else {
            C_ZERO
        }
    });
    Ok(linalg::hermitian_exp_i(&compressed))
}

#[derive(Clone, Debug)]
pub struct ApproximantRow {
    pub rank: usize,
    /// ‖a_q(U_n f) − a_q(U f)‖ on the truncation.
    pub op_dist: f64,
    /// ‖U_n f − U f‖ in the letter space.
    pub vec_dist: f64,
    /// vec_dist / √(1 − |q|): the continuity bound the op distance obeys.
    pub bound: f64,
}

/// Continuity of f ↦ a_q(f) along finite-rank approximants of a letter
/// unitary.
pub fn approximant_bound_rows(
    f: &[C64],
    t: &FockTruncation,
    u: &CMatrix,
    ranks: &[usize],
) -> Result<Vec<ApproximantRow>, QisoError> {
    check_unitary(u)?;
    let uf = u.apply(f);
    let mut rows = Vec::with_capacity(ranks.len());
    for &rank in ranks {
        let un = koopman_approximant(u, rank)?;
        let unf = un.apply(f);
        let diff: Vec<C64> = unf.iter().zip(uf.iter()).map(|(a, b)| a - b).collect();
        // a_q is additive in its argument, so the operator distance is the
        // norm of a_q(difference).
        let a = annihilator_matrix(&diff, t)?;
        let op_dist = t.operator_norm(&a);
        let g = &t.letter_gram;
        let mut acc = C_ZERO;
        for i in 0..diff.len() {
            for j in 0..diff.len() {
                acc += diff[i] * diff[j].conj() * g[(j, i)];
            }
        }
        let vec_dist = acc.re.max(0.0).sqrt();
        let bound = vec_dist / (1.0 - t.q.abs()).sqrt();
        rows.push(ApproximantRow { rank, op_dist, vec_dist, bound });
    }
    Ok(rows)
}

/// One-line summary used by reporting layers.
pub fn bundle_summary(b: &IsoBundle) -> String {
    format!(
        "q={} d={} cutoff={} dim={} min_m_eig={:.3e}",
        b.q,
        b.d,
        b.cutoff,
        b.qt.dim(),
        b.min_m_eig
    )
}
