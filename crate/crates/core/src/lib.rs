//! Embedding functionals and a brute-force operator-norm oracle for weighted
//! local Morrey-type spaces `LM_{p,q}(v,w)` on `ℝⁿ`.
pub mod embedding;
pub mod functionals;
pub mod oracle;
pub mod par;
pub mod quadrature;
pub mod reduction;
pub mod weights;

pub use embedding::Embedding;

/// Serializes an extended real, writing non-finite values as `"inf"`, `"-inf"` or `"nan"`.
pub fn serialize_extended<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}
