//! Desk-scale operator-algebra laboratory: exact Koopman systems, a deformed
//! one-particle space built over them, truncated (q-)Fock spaces with their
//! creation/annihilation/field operators, Bogoliubov dynamics with
//! ergodic-hierarchy diagnostics, and the machinery relating the deformed
//! annihilators to free ones through the positive operator R = V M^{1/2} V*.
//!
//! The crate is `no_std` + `alloc`; everything here is a pure function of
//! immutable inputs. IO, file formats and the scenario runner live in the
//! companion CLI crate.
//!
//! Numerical conventions used throughout:
//! * inner products are linear in the first slot and conjugate-linear in the
//!   second, so annihilators are antilinear in their argument;
//! * the Koopman operator is `u f := f ∘ T⁻¹`;
//! * truncated creators send top-degree words to zero, and every identity is
//!   asserted only on the sub-cutoff window stated by the operation.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod classical;
pub mod dynamics;
pub mod linalg;
pub mod onebody;
pub mod qfock;
pub mod qiso;

pub use linalg::{CMatrix, C64};
