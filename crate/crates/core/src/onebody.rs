//! Deformed one-particle space: classical modes tensored with a family of
//! two-dimensional blocks indexed by a multiplicative group of positive reals.
//!
//! Each block λ carries a rotation pair whose complexification splits into
//! eigenlines `Plus`/`Minus` with generator eigenvalue λ^{±1}. The deformed
//! inner product reweights the lines by w(λ^{±1}) with w(λ) = 2λ/(1+λ), and
//! the one-parameter group `vt_unitary` acts as the scalar e^{±i t ln λ}
//! there. The extended dynamics U = u ⊗ I touches only the classical mode
//! coordinate, so [U, V(t)] = 0 holds to the last bit.
//!
//! Infinite groups are materialized as finite symmetric truncations: finitely
//! many witness vectors only ever meet finitely many blocks, and every check
//! is exact per block.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use num_rational::Ratio;
// Float supplies f64 math via libm in no_std builds; std covers it in tests.
#[cfg_attr(test, allow(unused_imports))]
use num_traits::Float;

use crate::classical::{
    koopman_apply, vector_inner, ClassicalError, KoopmanSystem, ModeIndex, SparseModeVector,
};
use crate::linalg::C64;

#[derive(Clone, Debug, PartialEq)]
pub enum OneBodyError {
    EmptyGroup,
    /// Powers base must lie strictly between 0 and 1; rational entries must
    /// be positive.
    InvalidLambda,
    /// Rational truncations must contain the inverse of every entry.
    NotInverseClosed,
    /// Vector uses a block label outside this space's group.
    BlockNotInGroup,
    /// (x, y) is not a rotation pair for U at the stated angle.
    RotationPairBroken { residual: f64 },
    Classical(ClassicalError),
}

impl fmt::Display for OneBodyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OneBodyError::EmptyGroup => f.write_str("deformation group is empty"),
            OneBodyError::InvalidLambda => f.write_str("block parameter out of range"),
            OneBodyError::NotInverseClosed => {
                f.write_str("rational truncation not closed under inversion")
            }
            OneBodyError::BlockNotInGroup => f.write_str("vector uses a block outside the group"),
            OneBodyError::RotationPairBroken { residual } => {
                write!(f, "(x, y) fails the rotation relation, residual {residual:e}")
            }
            OneBodyError::Classical(e) => write!(f, "classical layer: {e}"),
        }
    }
}

impl core::error::Error for OneBodyError {}

impl From<ClassicalError> for OneBodyError {
    fn from(e: ClassicalError) -> Self {
        OneBodyError::Classical(e)
    }
}

/// Multiplicative group of block parameters, materialized finitely.
#[derive(Clone, Debug, PartialEq)]
pub enum DeformationGroup {
    /// Just {1}: the deformed inner product coincides with the undeformed one.
    Trivial,
    /// {λ^n : |n| ≤ max_exponent} for a base λ in (0, 1).
    PowersOfLambda { lambda: f64, max_exponent: u32 },
    /// An explicit finite set of positive rationals, closed under inversion.
    /// 1 is always adjoined.
    RationalsTruncated(Vec<Ratio<i64>>),
}

/// Label of one two-dimensional block. Powers are labelled by their exponent,
/// rationals by their reduced fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum BlockLabel {
    One,
    Power(i32),
    Rational(i64, i64),
}

/// The two eigenlines of a complexified block; `Plus` carries generator
/// eigenvalue λ, `Minus` carries λ^{-1}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EigenLine {
    Plus,
    Minus,
}

/// The weight w(λ) = 2λ/(1+λ); strictly between 0 and 2 for λ > 0, and
/// w(λ) + w(1/λ) = 2.
pub fn weight(lambda: f64) -> f64 {
    2.0 * lambda / (1.0 + lambda)
}

#[derive(Clone, Debug)]
pub struct OneBodySpace {
    pub classical: KoopmanSystem,
    pub group: DeformationGroup,
    /// λ value and w(λ) per materialized block.
    pub block_weights: BTreeMap<BlockLabel, (f64, f64)>,
}

pub fn build_onebody(
    classical: KoopmanSystem,
    group: DeformationGroup,
) -> Result<OneBodySpace, OneBodyError> {
    let mut block_weights = BTreeMap::new();
    match &group {
        DeformationGroup::Trivial => {
            block_weights.insert(BlockLabel::One, (1.0, 1.0));
        }
        DeformationGroup::PowersOfLambda { lambda, max_exponent } => {
            if !(*lambda > 0.0 && *lambda < 1.0) {
                return Err(OneBodyError::InvalidLambda);
            }
            let me = *max_exponent as i32;
            for n in -me..=me {
                let lam = lambda.powi(n);
                block_weights.insert(BlockLabel::Power(n), (lam, weight(lam)));
            }
        }
        DeformationGroup::RationalsTruncated(list) => {
            if list.is_empty() {
                return Err(OneBodyError::EmptyGroup);
            }
            let mut set: Vec<Ratio<i64>> = Vec::new();
            for r in list {
                if *r.numer() <= 0 || *r.denom() <= 0 {
                    return Err(OneBodyError::InvalidLambda);
                }
                if !set.contains(r) {
                    set.push(*r);
                }
            }
            for r in &set {
                if !set.contains(&r.recip()) {
                    return Err(OneBodyError::NotInverseClosed);
                }
            }
            let one = Ratio::new(1, 1);
            if !set.contains(&one) {
                set.push(one);
            }
            for r in set {
                let lam = *r.numer() as f64 / *r.denom() as f64;
                block_weights
                    .insert(BlockLabel::Rational(*r.numer(), *r.denom()), (lam, weight(lam)));
            }
        }
    }
    if block_weights.is_empty() {
        return Err(OneBodyError::EmptyGroup);
    }
    Ok(OneBodySpace { classical, group, block_weights })
}

impl OneBodySpace {
    /// λ of a block.
    pub fn lambda_of(&self, block: &BlockLabel) -> Result<f64, OneBodyError> {
        self.block_weights
            .get(block)
            .map(|(lam, _)| *lam)
            .ok_or(OneBodyError::BlockNotInGroup)
    }

    /// Inner-product weight of one eigenline: w(λ) on `Plus`, 2 − w(λ) on
    /// `Minus` (which equals w(1/λ)).
    pub fn line_weight(&self, block: &BlockLabel, line: EigenLine) -> Result<f64, OneBodyError> {
        let (_, w) = self.block_weights.get(block).ok_or(OneBodyError::BlockNotInGroup)?;
        Ok(match line {
            EigenLine::Plus => *w,
            EigenLine::Minus => 2.0 - *w,
        })
    }

    /// √(largest eigenline weight over all materialized blocks).
    pub fn bound_factor(&self) -> f64 {
        let mut m: f64 = 0.0;
        for (_, w) in self.block_weights.values() {
            m = m.max(*w).max(2.0 - *w);
        }
        m.sqrt()
    }
}

pub type DeformedBasis = (ModeIndex, BlockLabel, EigenLine);

/// Finitely supported vector in the deformed one-particle space.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeformedVector {
    coeffs: BTreeMap<DeformedBasis, C64>,
}

impl DeformedVector {
    pub fn new() -> Self {
        DeformedVector { coeffs: BTreeMap::new() }
    }

    pub fn single(mode: ModeIndex, block: BlockLabel, line: EigenLine) -> Self {
        let mut v = Self::new();
        v.insert((mode, block, line), C64::new(1.0, 0.0));
        v
    }

    pub fn from_terms<I: IntoIterator<Item = (DeformedBasis, C64)>>(terms: I) -> Self {
        let mut v = Self::new();
        for (b, c) in terms {
            v.insert(b, v.get(&b) + c);
        }
        v
    }

    pub fn insert(&mut self, basis: DeformedBasis, c: C64) {
        if c == C64::new(0.0, 0.0) {
            self.coeffs.remove(&basis);
        } else {
            self.coeffs.insert(basis, c);
        }
    }

    pub fn get(&self, basis: &DeformedBasis) -> C64 {
        self.coeffs.get(basis).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DeformedBasis, &C64)> {
        self.coeffs.iter()
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

    pub fn add_scaled(&mut self, other: &DeformedVector, c: C64) {
        for (b, v) in other.iter() {
            self.insert(*b, self.get(b) + c * *v);
        }
    }

    /// Classical mode component per (block, line).
    fn by_block(&self) -> BTreeMap<(BlockLabel, EigenLine), SparseModeVector> {
        let mut out: BTreeMap<(BlockLabel, EigenLine), SparseModeVector> = BTreeMap::new();
        for ((mode, block, line), c) in self.coeffs.iter() {
            out.entry((*block, *line)).or_default().insert(*mode, *c);
        }
        out
    }
}

fn blockwise_inner(
    space: &OneBodySpace,
    x: &DeformedVector,
    y: &DeformedVector,
    weighted: bool,
) -> Result<C64, OneBodyError> {
    let xb = x.by_block();
    let yb = y.by_block();
    let mut acc = C64::new(0.0, 0.0);
    for (key, xv) in xb.iter() {
        let w = space.line_weight(&key.0, key.1)?;
        if let Some(yv) = yb.get(key) {
            let inner = vector_inner(&space.classical, xv, yv)?;
            acc += inner * if weighted { C64::new(w, 0.0) } else { C64::new(1.0, 0.0) };
        }
    }
    // Validate blocks on y that x never met.
    for (key, _) in yb.iter() {
        space.line_weight(&key.0, key.1)?;
    }
    Ok(acc)
}

/// ⟨x, y⟩ with the eigenline weights; linear in the first slot.
pub fn deformed_inner(
    space: &OneBodySpace,
    x: &DeformedVector,
    y: &DeformedVector,
) -> Result<C64, OneBodyError> {
    blockwise_inner(space, x, y, true)
}

/// The undeformed inner product (all weights 1).
pub fn undeformed_inner(
    space: &OneBodySpace,
    x: &DeformedVector,
    y: &DeformedVector,
) -> Result<C64, OneBodyError> {
    blockwise_inner(space, x, y, false)
}

/// The extended dynamics U^k = u^k ⊗ I.
pub fn extended_koopman(
    space: &OneBodySpace,
    k: i64,
    v: &DeformedVector,
) -> Result<DeformedVector, OneBodyError> {
    let mut out = DeformedVector::new();
    for ((block, line), part) in v.by_block() {
        space.line_weight(&block, line)?;
        let moved = koopman_apply(&space.classical, k, &part)?;
        for (mode, c) in moved.iter() {
            let b = (*mode, block, line);
            out.insert(b, out.get(&b) + *c);
        }
    }
    Ok(out)
}

/// The one-parameter group V(t): scalar e^{+i t ln λ} on the `Plus` line of
/// block λ and e^{-i t ln λ} on `Minus`. Unitary for both inner products and
/// commuting with the extended dynamics exactly.
#[derive(Clone, Debug)]
pub struct VtOperator {
    pub t: f64,
    phases: BTreeMap<BlockLabel, C64>,
}

pub fn vt_unitary(space: &OneBodySpace, t: f64) -> VtOperator {
    let mut phases = BTreeMap::new();
    for (block, (lam, _)) in space.block_weights.iter() {
        phases.insert(*block, C64::from_polar(1.0, t * lam.ln()));
    }
    VtOperator { t, phases }
}

impl VtOperator {
    pub fn apply(&self, v: &DeformedVector) -> Result<DeformedVector, OneBodyError> {
        let mut out = DeformedVector::new();
        for ((mode, block, line), c) in v.iter() {
            let p = self.phases.get(block).ok_or(OneBodyError::BlockNotInGroup)?;
            let phase = match line {
                EigenLine::Plus => *p,
                EigenLine::Minus => p.conj(),
            };
            out.insert((*mode, *block, *line), out.get(&(*mode, *block, *line)) + *c * phase);
        }
        Ok(out)
    }
}

/// Vector in ℋ ⊗ ℋ with finite support.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorVector {
    coeffs: BTreeMap<(DeformedBasis, DeformedBasis), C64>,
}

impl TensorVector {
    pub fn insert(&mut self, key: (DeformedBasis, DeformedBasis), c: C64) {
        if c == C64::new(0.0, 0.0) {
            self.coeffs.remove(&key);
        } else {
            self.coeffs.insert(key, c);
        }
    }

    pub fn get(&self, key: &(DeformedBasis, DeformedBasis)) -> C64 {
        self.coeffs.get(key).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(DeformedBasis, DeformedBasis), &C64)> {
        self.coeffs.iter()
    }

    /// x ⊗ y.
    pub fn product(x: &DeformedVector, y: &DeformedVector) -> TensorVector {
        let mut out = TensorVector::default();
        for (bx, cx) in x.iter() {
            for (by, cy) in y.iter() {
                out.insert((*bx, *by), out.get(&(*bx, *by)) + *cx * *cy);
            }
        }
        out
    }

    pub fn add(&mut self, other: &TensorVector) {
        for (k, c) in other.iter() {
            self.insert(*k, self.get(k) + *c);
        }
    }

    pub fn sub_norm(&self, other: &TensorVector) -> f64 {
        // ℓ² distance of the coefficient tables (modes orthonormal or not,
        // this is only used as a residual gauge).
        let mut keys: Vec<_> = self.coeffs.keys().collect();
        for k in other.coeffs.keys() {
            if !self.coeffs.contains_key(k) {
                keys.push(k);
            }
        }
        keys.iter()
            .map(|k| (self.get(k) - other.get(k)).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// (U ⊗ U)^k on a tensor vector.
pub fn extended_koopman_tensor(
    space: &OneBodySpace,
    k: i64,
    tv: &TensorVector,
) -> Result<TensorVector, OneBodyError> {
    let mut out = TensorVector::default();
    for ((b1, b2), c) in tv.iter() {
        let left = extended_koopman(space, k, &DeformedVector::from_terms([(*b1, *c)]))?;
        let right = extended_koopman(space, k, &DeformedVector::from_terms([(*b2, C64::new(1.0, 0.0))]))?;
        out.add(&TensorVector::product(&left, &right));
    }
    Ok(out)
}

/// For a real rotation pair (x, y) of the extended dynamics with angle θ
/// (U x = cos θ·x + sin θ·y, U y = −sin θ·x + cos θ·y, verified to `tol`),
/// returns the invariant tensor x⊗x + y⊗y.
pub fn invariant_vector(
    space: &OneBodySpace,
    x: &DeformedVector,
    y: &DeformedVector,
    theta: f64,
    tol: f64,
) -> Result<TensorVector, OneBodyError> {
    let (c, s) = (theta.cos(), theta.sin());
    let ux = extended_koopman(space, 1, x)?;
    let uy = extended_koopman(space, 1, y)?;
    let mut rx = ux.clone();
    rx.add_scaled(x, C64::new(-c, 0.0));
    rx.add_scaled(y, C64::new(-s, 0.0));
    let mut ry = uy.clone();
    ry.add_scaled(x, C64::new(s, 0.0));
    ry.add_scaled(y, C64::new(-c, 0.0));
    let res_x = undeformed_inner(space, &rx, &rx)?.re.max(0.0).sqrt();
    let res_y = undeformed_inner(space, &ry, &ry)?.re.max(0.0).sqrt();
    let residual = res_x.max(res_y);
    if residual > tol {
        return Err(OneBodyError::RotationPairBroken { residual });
    }
    let mut out = TensorVector::product(x, x);
    out.add(&TensorVector::product(y, y));
    Ok(out)
}

/// Certified comparison ‖v‖_deformed ≤ boundFactor·‖v‖_undeformed; returns
/// (deformed norm, undeformed norm, boundFactor).
pub fn norm_comparison_bound(
    space: &OneBodySpace,
    v: &DeformedVector,
) -> Result<(f64, f64, f64), OneBodyError> {
    let d = deformed_inner(space, v, v)?.re.max(0.0).sqrt();
    let u = undeformed_inner(space, v, v)?.re.max(0.0).sqrt();
    Ok((d, u, space.bound_factor()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{rotation_koopman, Angle};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn golden_space(group: DeformationGroup) -> OneBodySpace {
        build_onebody(rotation_koopman(Angle::golden()), group).unwrap()
    }

    #[test]
    fn half_power_block_weights() {
        let space = golden_space(DeformationGroup::PowersOfLambda {
            lambda: 0.5,
            max_exponent: 1,
        });
        let get = |n: i32| space.block_weights[&BlockLabel::Power(n)].1;
        assert!((get(1) - 2.0 / 3.0).abs() < 1e-15, "w(1/2) = 2/3");
        assert!((get(0) - 1.0).abs() < 1e-15, "w(1) = 1");
        assert!((get(-1) - 4.0 / 3.0).abs() < 1e-15, "w(2) = 4/3");
    }

    #[test]
    fn weight_pairing() {
        for lam in [0.1f64, 0.5, 0.9, 1.0, 3.7, 120.0] {
            let w = weight(lam);
            assert!(w > 0.0 && w < 2.0);
            assert!((w + weight(1.0 / lam) - 2.0).abs() < 1e-14);
        }
        assert_eq!(weight(1.0), 1.0);
    }

    #[test]
    fn plus_line_on_lambda_two_has_norm_4_3() {
        let space = golden_space(DeformationGroup::PowersOfLambda {
            lambda: 0.5,
            max_exponent: 1,
        });
        // Block Power(-1) has λ = 2; its Plus line carries weight w(2) = 4/3.
        let v = DeformedVector::single(ModeIndex::Fourier(1), BlockLabel::Power(-1), EigenLine::Plus);
        let n2 = deformed_inner(&space, &v, &v).unwrap();
        assert!((n2.re - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn trivial_group_matches_undeformed() {
        let space = golden_space(DeformationGroup::Trivial);
        let x = DeformedVector::from_terms([
            ((ModeIndex::Fourier(1), BlockLabel::One, EigenLine::Plus), c(0.4, -1.2)),
            ((ModeIndex::Fourier(3), BlockLabel::One, EigenLine::Minus), c(0.9, 0.3)),
        ]);
        let y = DeformedVector::from_terms([
            ((ModeIndex::Fourier(1), BlockLabel::One, EigenLine::Plus), c(-0.1, 0.8)),
            ((ModeIndex::Fourier(-2), BlockLabel::One, EigenLine::Plus), c(2.0, 0.0)),
        ]);
        let d = deformed_inner(&space, &x, &y).unwrap();
        let u = undeformed_inner(&space, &x, &y).unwrap();
        assert_eq!(d, u);
    }

    #[test]
    fn distinct_modes_orthogonal() {
        let space = golden_space(DeformationGroup::PowersOfLambda {
            lambda: 0.3,
            max_exponent: 2,
        });
        let x = DeformedVector::single(ModeIndex::Fourier(1), BlockLabel::Power(2), EigenLine::Plus);
        let y = DeformedVector::single(ModeIndex::Fourier(2), BlockLabel::Power(2), EigenLine::Plus);
        assert_eq!(deformed_inner(&space, &x, &y).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn vt_group_law_and_unitarity() {
        let space = golden_space(DeformationGroup::PowersOfLambda {
            lambda: 0.5,
            max_exponent: 2,
        });
        let v = DeformedVector::from_terms([
            ((ModeIndex::Fourier(1), BlockLabel::Power(2), EigenLine::Plus), c(0.5, 0.1)),
            ((ModeIndex::Fourier(1), BlockLabel::Power(-1), EigenLine::Minus), c(-0.3, 0.7)),
            ((ModeIndex::Fourier(4), BlockLabel::Power(0), EigenLine::Plus), c(1.0, -1.0)),
        ]);
        let (t, s) = (0.7, -2.3);
        let vt = vt_unitary(&space, t);
        let vs = vt_unitary(&space, s);
        let vts = vt_unitary(&space, t + s);
        let a = vs.apply(&vt.apply(&v).unwrap()).unwrap();
        let b = vts.apply(&v).unwrap();
        let mut diff = a.clone();
        diff.add_scaled(&b, c(-1.0, 0.0));
        let err = undeformed_inner(&space, &diff, &diff).unwrap().re.sqrt();
        assert!(err < 1e-12, "group law, err {err}");

        let before = deformed_inner(&space, &v, &v).unwrap();
        let after = deformed_inner(&space, &vt.apply(&v).unwrap(), &vt.apply(&v).unwrap()).unwrap();
        assert!((before - after).norm() < 1e-12, "deformed unitarity");
    }

    #[test]
    fn vt_identity_cases() {
        let space = golden_space(DeformationGroup::PowersOfLambda {
            lambda: 0.5,
            max_exponent: 1,
        });
        let v = DeformedVector::single(ModeIndex::Fourier(2), BlockLabel::Power(0), EigenLine::Plus);
        // λ = 1 block: identity for every t.
        assert_eq!(vt_unitary(&space, 17.3).apply(&v).unwrap(), v);
        // t = 0: identity on every block.
        let w = DeformedVector::single(ModeIndex::Fourier(2), BlockLabel::Power(1), EigenLine::Minus);
        assert_eq!(vt_unitary(&space, 0.0).apply(&w).unwrap(), w);
    }

    #[test]
    fn u_and_vt_commute_exactly() {
        let space = golden_space(DeformationGroup::PowersOfLambda {
            lambda: 0.4,
            max_exponent: 2,
        });
        let vt = vt_unitary(&space, 1.37);
        for (block, line) in [
            (BlockLabel::Power(2), EigenLine::Plus),
            (BlockLabel::Power(-2), EigenLine::Minus),
            (BlockLabel::Power(0), EigenLine::Plus),
        ] {
            let v = DeformedVector::single(ModeIndex::Fourier(3), block, line);
            let uv = extended_koopman(&space, 1, &vt.apply(&v).unwrap()).unwrap();
            let vu = vt.apply(&extended_koopman(&space, 1, &v).unwrap()).unwrap();
            assert_eq!(uv, vu, "exact commutation on basis vectors");
        }
    }

    #[test]
    fn golden_rotation_invariant_tensor() {
        let space = golden_space(DeformationGroup::Trivial);
        let Angle::Fixed(_) = Angle::golden() else { unreachable!() };
        let phi = core::f64::consts::TAU * Angle::golden().frac_turns(1);
        let inv_sqrt2 = core::f64::consts::FRAC_1_SQRT_2;
        let b = |m: i64| (ModeIndex::Fourier(m), BlockLabel::One, EigenLine::Plus);
        // x = (e_1 + e_{-1})/√2, y = i(e_{-1} − e_1)/√2: a real rotation pair
        // with U x = cos φ·x + sin φ·y.
        let x = DeformedVector::from_terms([
            (b(1), c(inv_sqrt2, 0.0)),
            (b(-1), c(inv_sqrt2, 0.0)),
        ]);
        let y = DeformedVector::from_terms([
            (b(-1), c(0.0, inv_sqrt2)),
            (b(1), c(0.0, -inv_sqrt2)),
        ]);
        let inv = invariant_vector(&space, &x, &y, phi, 1e-10).unwrap();
        let moved = extended_koopman_tensor(&space, 1, &inv).unwrap();
        assert!(moved.sub_norm(&inv) < 1e-12, "tensor is U⊗U invariant");
        // A wrong angle is rejected.
        let bad = invariant_vector(&space, &x, &y, phi + 0.3, 1e-10);
        assert!(matches!(bad, Err(OneBodyError::RotationPairBroken { .. })));
    }

    #[test]
    fn norm_comparison_certificate() {
        let space = golden_space(DeformationGroup::PowersOfLambda {
            lambda: 0.5,
            max_exponent: 1,
        });
        assert!((space.bound_factor() - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let v = DeformedVector::from_terms([
            ((ModeIndex::Fourier(1), BlockLabel::Power(-1), EigenLine::Plus), c(0.7, 0.2)),
            ((ModeIndex::Fourier(2), BlockLabel::Power(1), EigenLine::Plus), c(-0.4, 0.9)),
            ((ModeIndex::Fourier(2), BlockLabel::Power(0), EigenLine::Minus), c(0.1, 0.1)),
        ]);
        let (d, u, factor) = norm_comparison_bound(&space, &v).unwrap();
        assert!(d <= factor * u + 1e-14, "certificate holds");
        let triv = golden_space(DeformationGroup::Trivial);
        assert_eq!(triv.bound_factor(), 1.0);
    }

    #[test]
    fn group_validation() {
        let sys = rotation_koopman(Angle::golden());
        assert!(matches!(
            build_onebody(sys.clone(), DeformationGroup::PowersOfLambda { lambda: 1.5, max_exponent: 1 }),
            Err(OneBodyError::InvalidLambda)
        ));
        assert!(matches!(
            build_onebody(sys.clone(), DeformationGroup::RationalsTruncated(Vec::new())),
            Err(OneBodyError::EmptyGroup)
        ));
        assert!(matches!(
            build_onebody(
                sys.clone(),
                DeformationGroup::RationalsTruncated(alloc::vec![Ratio::new(2, 1)])
            ),
            Err(OneBodyError::NotInverseClosed)
        ));
        let ok = build_onebody(
            sys,
            DeformationGroup::RationalsTruncated(alloc::vec![Ratio::new(2, 1), Ratio::new(1, 2)]),
        )
        .unwrap();
        // 1 adjoined automatically.
        assert!(ok.block_weights.contains_key(&BlockLabel::Rational(1, 1)));
    }
}
