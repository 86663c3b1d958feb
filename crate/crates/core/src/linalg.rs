//! Dense complex linear algebra: Hermitian Jacobi eigensolver, spectral
//! functions (square roots, exponentials, logarithms of unitaries) and a
//! Lanczos top-eigenvalue routine for matrix-free operator norms.
//!
//! Everything is deterministic: fixed pivot orders, fixed start vectors, no
//! randomness.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex;
#[allow(unused_imports)]
use num_traits::Float;

pub type C64 = Complex<f64>;

pub const C_ZERO: C64 = Complex { re: 0.0, im: 0.0 };
pub const C_ONE: C64 = Complex { re: 1.0, im: 0.0 };

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![C_ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C_ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matrix dimension mismatch");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C_ZERO {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow.iter()) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (d, &b) in out.data.iter_mut().zip(other.data.iter()) {
            *d += b;
        }
        out
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (d, &b) in out.data.iter_mut().zip(other.data.iter()) {
            *d -= b;
        }
        out
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        let mut out = self.clone();
        for d in out.data.iter_mut() {
            *d *= s;
        }
        out
    }

    pub fn matvec(&self, v: &[C64], out: &mut [C64]) {
        assert_eq!(v.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = C_ZERO;
            for (a, b) in self.row(i).iter().zip(v.iter()) {
                acc += *a * *b;
            }
            *o = acc;
        }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C_ZERO; self.rows];
        self.matvec(v, &mut out);
        out
    }

    /// Kronecker product; the left factor indexes the most significant digit,
    /// matching the word order "first letter most significant".
    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows * other.rows, self.cols * other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                if a == C_ZERO {
                    continue;
                }
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        out[(i * other.rows + k, j * other.cols + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value, i.e. the operator norm in the coordinates the
    /// matrix is written in.
    pub fn operator_norm(&self) -> f64 {
        let n = self.cols;
        if n == 0 || self.rows == 0 {
            return 0.0;
        }
        let at = self.adjoint();
        let lam = lanczos_max_eig(n, 4 * n + 60, 1e-13, |v, out| {
            let tmp = self.apply(v);
            at.matvec(&tmp, out);
        });
        // The iteration has an absolute noise floor around machine epsilon;
        // ‖·‖₂ ≤ ‖·‖_F caps it honestly for (near-)zero matrices.
        lam.max(0.0).sqrt().min(self.frobenius())
    }
}

impl core::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi sweeps.
/// Returns eigenvalues in ascending order and the matching unitary of column
/// eigenvectors. Input must be Hermitian; only the given entries are read.
pub fn eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    assert_eq!(a.rows, a.cols, "eigh needs a square matrix");
    let n = a.rows;
    let mut m = a.clone();
    let mut v = CMatrix::identity(n);
    if n <= 1 {
        let vals = if n == 1 { vec![m[(0, 0)].re] } else { Vec::new() };
        return (vals, v);
    }

    let scale: f64 = m.max_abs().max(1e-300);
    let tol = 1e-15 * scale;

    for _sweep in 0..80 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[(p, q)].norm());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let norm_apq = apq.norm();
                if norm_apq <= tol * 1e-2 {
                    continue;
                }
                // J = diag(1, u)·R with u = e^{-i arg(apq)} making the pivot
                // real, and R the real rotation that zeroes it. Columns of J
                // in the (p,q) plane: col p = (c, -u·s), col q = (s, u·c).
                let u = (apq / norm_apq).conj();
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let tau = (aqq - app) / (2.0 * norm_apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Apply A <- J^† A J and V <- V J.
                let (cc, ss) = (C64::new(c, 0.0), C64::new(s, 0.0));
                let (su, cu) = (u * ss, u * cc);
                for i in 0..n {
                    let aip = m[(i, p)];
                    let aiq = m[(i, q)];
                    m[(i, p)] = aip * cc - aiq * su;
                    m[(i, q)] = aip * ss + aiq * cu;
                }
                let su_c = su.conj();
                let cu_c = cu.conj();
                for j in 0..n {
                    let apj = m[(p, j)];
                    let aqj = m[(q, j)];
                    m[(p, j)] = apj * cc - aqj * su_c;
                    m[(q, j)] = apj * ss + aqj * cu_c;
                }
                // Clean the pivot pair to keep Hermiticity exact.
                m[(p, q)] = C_ZERO;
                m[(q, p)] = C_ZERO;
                m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = C64::new(m[(q, q)].re, 0.0);

                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * cc - viq * su;
                    v[(i, q)] = vip * ss + viq * cu;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.partial_cmp(&m[(j, j)].re).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| m[(i, i)].re).collect();
    let vecs = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    (vals, vecs)
}

/// Applies a real-to-complex spectral function to a Hermitian matrix.
pub fn hermitian_map(a: &CMatrix, f: impl Fn(f64) -> C64) -> CMatrix {
    let (vals, vecs) = eigh(a);
    let n = a.rows;
    let mut out = CMatrix::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        let flam = f(lam);
        if flam == C_ZERO {
            continue;
        }
        for i in 0..n {
            let vik = vecs[(i, k)] * flam;
            for j in 0..n {
                out[(i, j)] += vik * vecs[(j, k)].conj();
            }
        }
    }
    out
}

/// PSD square root. Eigenvalues below `-neg_tol` are rejected, small negative
/// ripple is clamped to zero.
pub fn hermitian_sqrt(a: &CMatrix, neg_tol: f64) -> Result<CMatrix, f64> {
    let (vals, _) = eigh(a);
    if let Some(&min) = vals.first() {
        if min < -neg_tol {
            return Err(min);
        }
    }
    Ok(hermitian_map(a, |x| C64::new(x.max(0.0).sqrt(), 0.0)))
}

/// Inverse square root of a positive definite Hermitian matrix. Fails with the
/// offending eigenvalue when the spectrum dips below `min_eig`.
pub fn hermitian_inv_sqrt(a: &CMatrix, min_eig: f64) -> Result<CMatrix, f64> {
    let (vals, _) = eigh(a);
    if let Some(&min) = vals.first() {
        if min < min_eig {
            return Err(min);
        }
    }
    Ok(hermitian_map(a, |x| C64::new(1.0 / x.sqrt(), 0.0)))
}

/// e^{iH} for Hermitian H.
pub fn hermitian_exp_i(h: &CMatrix) -> CMatrix {
    hermitian_map(h, |x| C64::new(x.cos(), x.sin()))
}

/// Self-adjoint logarithm of a unitary: returns Hermitian H with U = e^{iH}
/// and all phases in (-π, π]. Uses the commuting Hermitian pair
/// (U+U†)/2, (U-U†)/(2i): eigenspaces of the first are refined by the second,
/// which separates the ±θ pairs that share a cosine.
pub fn unitary_log(u_mat: &CMatrix) -> CMatrix {
    assert_eq!(u_mat.rows, u_mat.cols);
    let n = u_mat.rows;
    let ut = u_mat.adjoint();
    let cos_part = u_mat.add(&ut).scale(C64::new(0.5, 0.0));
    let sin_part = u_mat.sub(&ut).scale(C64::new(0.0, -0.5));

    let (cvals, cvecs) = eigh(&cos_part);
    let mut h = CMatrix::zeros(n, n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (cvals[end] - cvals[start]).abs() <= 1e-8 {
            end += 1;
        }
        let k = end - start;
        // Columns start..end span one cosine eigenspace; refine by the sine part.
        let block = CMatrix::from_fn(n, k, |i, j| cvecs[(i, start + j)]);
        let s_sub = block.adjoint().mul(&sin_part).mul(&block);
        let (svals, svecs) = eigh(&s_sub);
        let refined = block.mul(&svecs);
        for t in 0..k {
            let mut theta = svals[t].atan2(cvals[start]);
            if theta <= -core::f64::consts::PI {
                theta = core::f64::consts::PI;
            }
            for i in 0..n {
                let w = refined[(i, t)] * C64::new(theta, 0.0);
                for j in 0..n {
                    h[(i, j)] += w * refined[(j, t)].conj();
                }
            }
        }
        start = end;
    }
    h
}

/// Largest eigenvalue of a Hermitian operator given only as a matvec, by
/// Lanczos with full reorthogonalization. Deterministic start vector.
pub fn lanczos_max_eig(
    dim: usize,
    max_iter: usize,
    tol: f64,
    matvec: impl Fn(&[C64], &mut [C64]),
) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let mut basis: Vec<Vec<C64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    // Fixed pseudo-random start vector (Weyl sequence), no symmetry to lock onto.
    let mut v0 = vec![C_ZERO; dim];
    let mut x: u64 = 0x9e3779b97f4a7c15;
    for e in v0.iter_mut() {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let r = ((x >> 11) as f64) / ((1u64 << 53) as f64);
        *e = C64::new(1.0 + 0.25 * (r - 0.5), 0.1 * r);
    }
    normalize(&mut v0);
    basis.push(v0);

    let mut prev_est = f64::NEG_INFINITY;
    let mut w = vec![C_ZERO; dim];
    let iters = max_iter.min(dim + 2);
    for j in 0..iters {
        matvec(&basis[j], &mut w);
        let alpha = dot(&w, &basis[j]).re;
        alphas.push(alpha);
        // Full reorthogonalization, twice for safety.
        for _ in 0..2 {
            for b in basis.iter() {
                let c = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b.iter()) {
                    *wi -= c * *bi;
                }
            }
        }
        let beta = norm(&w);
        let est = tridiag_max_eig(&alphas, &betas);
        let done = (est - prev_est).abs() <= tol * est.abs().max(1.0) && j >= 8;
        prev_est = est;
        if done || beta <= 1e-14 || j + 1 == iters {
            return est;
        }
        betas.push(beta);
        let mut next = w.clone();
        for e in next.iter_mut() {
            *e /= C64::new(beta, 0.0);
        }
        basis.push(next);
    }
    prev_est
}

/// Largest eigenvalue of a real symmetric tridiagonal matrix, via bisection on
/// the Sturm sequence.
fn tridiag_max_eig(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    if n == 0 {
        return 0.0;
    }
    // Gershgorin upper/lower bounds.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 }
            + if i < n - 1 { off.get(i).map_or(0.0, |x| x.abs()) } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return 0.0;
    }
    // Count of eigenvalues < x.
    let count_below = |x: f64| -> usize {
        let mut cnt = 0;
        let mut d = 1.0f64;
        for i in 0..n {
            let offsq = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
            d = diag[i] - x - if i > 0 { offsq / d } else { 0.0 };
            if d == 0.0 {
                d = 1e-300;
            }
            if d < 0.0 {
                cnt += 1;
            }
        }
        cnt
    };
    let mut a = lo - 1e-12;
    let mut b = hi + 1e-12;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if count_below(mid) >= n {
            b = mid;
        } else {
            a = mid;
        }
        if b - a <= 1e-15 * b.abs().max(1.0) {
            break;
        }
    }
    0.5 * (a + b)
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    // Linear in the first slot, conjugate in the second.
    a.iter().zip(b.iter()).map(|(x, y)| *x * y.conj()).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn normalize(a: &mut [C64]) {
    let n = norm(a);
    if n > 0.0 {
        for e in a.iter_mut() {
            *e /= C64::new(n, 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut x = seed | 1;
        let mut next = move || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let mut a = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let z = if i == j {
                    C64::new(next(), 0.0)
                } else {
                    C64::new(next(), next())
                };
                a[(i, j)] = z;
                a[(j, i)] = z.conj();
            }
        }
        a
    }

    #[test]
    fn eigh_reconstructs() {
        for n in [1usize, 2, 3, 7, 20] {
            let a = random_hermitian(n, 42 + n as u64);
            let (vals, vecs) = eigh(&a);
            // A V = V diag(vals)
            let av = a.mul(&vecs);
            let mut vd = vecs.clone();
            for j in 0..n {
                for i in 0..n {
                    vd[(i, j)] = vecs[(i, j)] * C64::new(vals[j], 0.0);
                }
            }
            assert!(av.sub(&vd).max_abs() < 1e-11, "n={n}");
            // V unitary
            let vv = vecs.adjoint().mul(&vecs);
            assert!(vv.sub(&CMatrix::identity(n)).max_abs() < 1e-12);
            // ascending
            for w in vals.windows(2) {
                assert!(w[0] <= w[1] + 1e-12);
            }
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let a = random_hermitian(9, 7);
        let a2 = a.mul(&a.adjoint()); // PSD
        let s = hermitian_sqrt(&a2, 1e-10).unwrap();
        assert!(s.mul(&s).sub(&a2).max_abs() < 1e-10);
    }

    #[test]
    fn inv_sqrt_inverts() {
        let a = random_hermitian(8, 11);
        let a2 = a.mul(&a.adjoint()).add(&CMatrix::identity(8));
        let s = hermitian_inv_sqrt(&a2, 1e-12).unwrap();
        let prod = s.mul(&a2).mul(&s);
        assert!(prod.sub(&CMatrix::identity(8)).max_abs() < 1e-10);
    }

    #[test]
    fn operator_norm_matches_eigh() {
        let a = random_hermitian(24, 5);
        let (vals, _) = eigh(&a);
        let spectral = vals.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let lan_norm = a.operator_norm();
        assert!((lan_norm - spectral).abs() < 1e-9 * spectral.max(1.0));
    }

    #[test]
    fn unitary_log_roundtrip() {
        let h = random_hermitian(6, 23);
        let u = hermitian_exp_i(&h);
        // u is unitary
        assert!(u.adjoint().mul(&u).sub(&CMatrix::identity(6)).max_abs() < 1e-12);
        let h2 = unitary_log(&u);
        let u2 = hermitian_exp_i(&h2);
        assert!(u2.sub(&u).max_abs() < 1e-10);
        // phases in (-pi, pi]
        let (vals, _) = eigh(&h2);
        for v in vals {
            assert!(v > -core::f64::consts::PI - 1e-12 && v <= core::f64::consts::PI + 1e-12);
        }
    }

    #[test]
    fn kron_shape_and_values() {
        let a = CMatrix::from_fn(2, 2, |i, j| C64::new((2 * i + j) as f64, 0.0));
        let b = CMatrix::identity(3);
        let k = a.kron(&b);
        assert_eq!(k.rows(), 6);
        assert_eq!(k[(0, 0)], C64::new(0.0, 0.0));
        assert_eq!(k[(3, 0)], C64::new(2.0, 0.0));
        assert_eq!(k[(3, 3)], C64::new(3.0, 0.0));
    }
}
