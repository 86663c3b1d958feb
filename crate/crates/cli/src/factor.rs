//! Expected factor type of the field–dynamics algebra, read off the
//! deformation group. These labels are reported, never computed: classifying
//! the von Neumann algebra numerically is outside the scope of a truncated
//! laboratory, so the record carries the expectation together with that
//! caveat.

use fockdyn_core::onebody::DeformationGroup;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorRecord {
    /// Expected Murray–von Neumann type of the algebra generated by the
    /// deformed fields together with the quantized dynamics.
    pub label: String,
    pub status: String,
    /// The algebra at the one-particle level, by contrast.
    pub one_particle: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub caveats: Vec<String>,
}

fn trim_float(x: f64) -> String {
    // Shortest round-trip formatting, e.g. 0.5 → "0.5".
    format!("{x}")
}

pub fn factor_record(group: &DeformationGroup) -> FactorRecord {
    let (label, caveats) = match group {
        DeformationGroup::Trivial => (String::from("II_1"), Vec::new()),
        DeformationGroup::PowersOfLambda { lambda, .. } => {
            (format!("III_{}", trim_float(*lambda)), Vec::new())
        }
        DeformationGroup::RationalsTruncated(_) => (
            String::from("III_1"),
            vec![String::from(
                "the materialized group is a finite truncation of a dense subgroup of (0, ∞); \
                 the label describes the full group",
            )],
        ),
    };
    FactorRecord {
        label,
        status: String::from("expected type, read off the deformation group — not computed"),
        one_particle: String::from("expected I_∞ (the one-particle-level algebra acts irreducibly)"),
        caveats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn labels_by_group() {
        assert_eq!(factor_record(&DeformationGroup::Trivial).label, "II_1");
        let powers = DeformationGroup::PowersOfLambda { lambda: 0.5, max_exponent: 6 };
        assert_eq!(factor_record(&powers).label, "III_0.5");
        let rats = DeformationGroup::RationalsTruncated(vec![
            Ratio::new(1, 2),
            Ratio::new(2, 1),
        ]);
        let rec = factor_record(&rats);
        assert_eq!(rec.label, "III_1");
        assert!(!rec.caveats.is_empty(), "truncation caveat expected");
        assert!(rec.status.contains("not computed"));
        assert!(rec.one_particle.contains("I_∞"));
    }
}
