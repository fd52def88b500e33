//! Case classification, admissibility checks and the characterization
//! functionals `I₁–I₁₄`.
//!
//! Every functional is evaluated in the log domain. Tails of `w₁^{q₁}` and
//! `w₂^{q₂}`, the annulus integrals `V(x,t)` and the radial sup profile `S` come
//! from precomputed tables, so the nested sups and integrals only pay for
//! partial-panel lookups.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::embedding::Embedding;
use crate::par::Execution;
use crate::quadrature::{
    self, integrate_ln, ln_add, CumulativeIntegral, QuadStatus, Scale, SupConfig, SupTable, Tolerance,
};
use crate::reduction::sphere_functionals;
use crate::weights::{ExponentQuad, RnWeight, WeightError, WeightExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseTag {
    #[serde(rename = "A_i")]
    Ai,
    #[serde(rename = "A_ii")]
    Aii,
    #[serde(rename = "B_i")]
    Bi,
    #[serde(rename = "B_ii")]
    Bii,
    #[serde(rename = "B_iii")]
    Biii,
    #[serde(rename = "B_iv")]
    Biv,
    C,
    #[serde(rename = "D_i")]
    Di,
    #[serde(rename = "D_ii")]
    Dii,
}

impl CaseTag {
    pub const ALL: [CaseTag; 9] = [
        CaseTag::Ai,
        CaseTag::Aii,
        CaseTag::Bi,
        CaseTag::Bii,
        CaseTag::Biii,
        CaseTag::Biv,
        CaseTag::C,
        CaseTag::Di,
        CaseTag::Dii,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CaseTag::Ai => "A_i",
            CaseTag::Aii => "A_ii",
            CaseTag::Bi => "B_i",
            CaseTag::Bii => "B_ii",
            CaseTag::Biii => "B_iii",
            CaseTag::Biv => "B_iv",
            CaseTag::C => "C",
            CaseTag::Di => "D_i",
            CaseTag::Dii => "D_ii",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.label() == s)
    }

    /// Indices `k` of the functionals whose sum is equivalent to the norm.
    pub fn components(self) -> &'static [u8] {
        match self {
            CaseTag::Ai => &[1],
            CaseTag::Aii => &[2],
            CaseTag::Bi => &[3, 4],
            CaseTag::Bii => &[3, 5, 6],
            CaseTag::Biii => &[4, 7, 8],
            CaseTag::Biv => &[6, 7, 9],
            CaseTag::C => &[10],
            CaseTag::Di => &[11, 12],
            CaseTag::Dii => &[11, 13, 14],
        }
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnsupportedReason {
    /// `p₂ > p₁`
    P2AboveP1,
    /// `p₂ ≥ q₂`
    P2AtLeastQ2,
}

impl fmt::Display for UnsupportedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnsupportedReason::P2AboveP1 => "p₂>p₁",
            UnsupportedReason::P2AtLeastQ2 => "p₂≥q₂",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TheoremCase {
    Supported(CaseTag),
    Unsupported(UnsupportedReason),
}

impl TheoremCase {
    pub fn tag(&self) -> Option<CaseTag> {
        match self {
            TheoremCase::Supported(t) => Some(*t),
            TheoremCase::Unsupported(_) => None,
        }
    }
}

impl fmt::Display for TheoremCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TheoremCase::Supported(t) => write!(f, "{t}"),
            TheoremCase::Unsupported(r) => write!(f, "Unsupported({r})"),
        }
    }
}

impl Serialize for TheoremCase {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

pub fn classify(e: &ExponentQuad) -> TheoremCase {
    let ExponentQuad { p1, p2, q1, q2 } = *e;
    if p2 > p1 {
        return TheoremCase::Unsupported(UnsupportedReason::P2AboveP1);
    }
    if p2 >= q2 {
        return TheoremCase::Unsupported(UnsupportedReason::P2AtLeastQ2);
    }
    let tag = if p2 < p1 {
        if q1 <= p2 {
            if q2 >= p1 {
                CaseTag::Ai
            } else {
                CaseTag::Aii
            }
        } else {
            match (q2 >= p1, q2 >= q1) {
                (true, true) => CaseTag::Bi,
                (true, false) => CaseTag::Bii,
                (false, true) => CaseTag::Biii,
                (false, false) => CaseTag::Biv,
            }
        }
    } else if q1 <= p1 {
        CaseTag::C
    } else if q1 <= q2 {
        CaseTag::Di
    } else {
        CaseTag::Dii
    };
    TheoremCase::Supported(tag)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionalError {
    #[error("I{k} is not defined for these exponents: {reason}")]
    NotApplicable { k: u8, reason: &'static str },
    #[error("no functional I{0}")]
    InvalidIndex(u8),
    #[error("unknown exponent override key {0:?}")]
    UnknownExponentKey(String),
    #[error("unsupported exponent case {0}")]
    Unsupported(String),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// Which reading of an exponent to use where the printed formula and the
/// homogeneity-consistent one disagree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExponentVariant {
    Printed,
    #[default]
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SuspectExponent {
    /// Outer power of `I₄`.
    I4Outer,
    /// Power of `V(s,t)` inside the `ds` integral of `I₆`.
    I6Inner,
    /// Power of `∫_s^∞ w₂^{q₂}` inside `I₉`.
    I9Weight,
    /// Power of the `ds` integral in `I₉`.
    I9Power,
    /// Power of `v₁⁻¹v₂` in `I₁₀`.
    I10Ratio,
    /// Power of `v₁⁻¹v₂` in `I₁₂`.
    I12Ratio,
    /// Power of `v₁⁻¹v₂` in `I₁₃`.
    I13Ratio,
    /// Power of `v₁⁻¹v₂` inside the `dx` integral of `I₁₄`.
    I14Inner,
    /// Power of `v₁⁻¹v₂` in the outer sup of `I₁₄`.
    I14Outer,
}

impl SuspectExponent {
    pub const ALL: [SuspectExponent; 9] = [
        SuspectExponent::I4Outer,
        SuspectExponent::I6Inner,
        SuspectExponent::I9Weight,
        SuspectExponent::I9Power,
        SuspectExponent::I10Ratio,
        SuspectExponent::I12Ratio,
        SuspectExponent::I13Ratio,
        SuspectExponent::I14Inner,
        SuspectExponent::I14Outer,
    ];

    pub fn key(self) -> &'static str {
        match self {
            SuspectExponent::I4Outer => "I4.outer",
            SuspectExponent::I6Inner => "I6.inner",
            SuspectExponent::I9Weight => "I9.weight",
            SuspectExponent::I9Power => "I9.power",
            SuspectExponent::I10Ratio => "I10.ratio",
            SuspectExponent::I12Ratio => "I12.ratio",
            SuspectExponent::I13Ratio => "I13.ratio",
            SuspectExponent::I14Inner => "I14.inner",
            SuspectExponent::I14Outer => "I14.outer",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.key() == key)
    }

    pub fn functional(self) -> u8 {
        match self {
            SuspectExponent::I4Outer => 4,
            SuspectExponent::I6Inner => 6,
            SuspectExponent::I9Weight | SuspectExponent::I9Power => 9,
            SuspectExponent::I10Ratio => 10,
            SuspectExponent::I12Ratio => 12,
            SuspectExponent::I13Ratio => 13,
            SuspectExponent::I14Inner | SuspectExponent::I14Outer => 14,
        }
    }

    pub fn formula(self, variant: ExponentVariant) -> &'static str {
        use ExponentVariant::*;
        use SuspectExponent::*;
        match (self, variant) {
            (I4Outer, Printed) => "(p1-q2)/(q1*q2)",
            (I4Outer, Corrected) => "(q1-p2)/(q1*p2)",
            (I6Inner, Printed) => "q1*(q2-p2)/(p1*(q1-p2))",
            (I6Inner, Corrected) => "q1*(p1-p2)/(p1*(q1-p2))",
            (I9Weight, Printed) => "q1/(p1-q2)",
            (I9Weight, Corrected) => "q2/(p1-q2)",
            (I9Power, Printed) => "q1*(p1-q2)/(q1-q2)",
            (I9Power, Corrected) => "q1*(p1-q2)/(p1*(q1-q2))",
            (I10Ratio, Printed) => "p1",
            (I10Ratio, Corrected) => "1",
            (I12Ratio | I14Inner | I14Outer, Printed) => "p1",
            (I12Ratio | I14Inner | I14Outer, Corrected) => "p1*q1/(q1-p1)",
            (I13Ratio, Printed) => "q2*(q1-p1)/(q1-q2)",
            (I13Ratio, Corrected) => "q1*q2/(q1-q2)",
        }
    }

    pub fn value(self, variant: ExponentVariant, e: &ExponentQuad) -> f64 {
        use ExponentVariant::*;
        use SuspectExponent::*;
        let ExponentQuad { p1, p2, q1, q2 } = *e;
        match (self, variant) {
            (I4Outer, Printed) => (p1 - q2) / (q1 * q2),
            (I4Outer, Corrected) => (q1 - p2) / (q1 * p2),
            (I6Inner, Printed) => q1 * (q2 - p2) / (p1 * (q1 - p2)),
            (I6Inner, Corrected) => q1 * (p1 - p2) / (p1 * (q1 - p2)),
            (I9Weight, Printed) => q1 / (p1 - q2),
            (I9Weight, Corrected) => q2 / (p1 - q2),
            (I9Power, Printed) => q1 * (p1 - q2) / (q1 - q2),
            (I9Power, Corrected) => q1 * (p1 - q2) / (p1 * (q1 - q2)),
            (I10Ratio, Printed) => p1,
            (I10Ratio, Corrected) => 1.0,
            (I12Ratio | I14Inner | I14Outer, Printed) => p1,
            (I12Ratio | I14Inner | I14Outer, Corrected) => p1 * q1 / (q1 - p1),
            (I13Ratio, Printed) => q2 * (q1 - p1) / (q1 - q2),
            (I13Ratio, Corrected) => q1 * q2 / (q1 - q2),
        }
    }
}

/// Per-exponent choice between printed and corrected readings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentTable {
    #[serde(default)]
    pub default: ExponentVariant,
    #[serde(default)]
    pub overrides: BTreeMap<String, ExponentVariant>,
}

impl ExponentTable {
    pub fn uniform(variant: ExponentVariant) -> Self {
        Self {
            default: variant,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with(mut self, s: SuspectExponent, variant: ExponentVariant) -> Self {
        self.overrides.insert(s.key().to_string(), variant);
        self
    }

    pub fn validate(&self) -> Result<(), FunctionalError> {
        match self.overrides.keys().find(|k| SuspectExponent::from_key(k).is_none()) {
            Some(k) => Err(FunctionalError::UnknownExponentKey(k.clone())),
            None => Ok(()),
        }
    }

    pub fn variant(&self, s: SuspectExponent) -> ExponentVariant {
        self.overrides.get(s.key()).copied().unwrap_or(self.default)
    }

    pub fn value(&self, s: SuspectExponent, e: &ExponentQuad) -> f64 {
        s.value(self.variant(s), e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// The exponent quadruple falls in a theorem case.
    SupportedCase,
    /// `∫_t^∞ w₁^{q₁} < ∞`
    SourceTail,
    /// `∫_t^∞ w₂^{q₂} < ∞`
    TargetTail,
    /// `0 < ∫₀ᵗ V(s,t)^{…} (∫_s^∞ w₁^{q₁})^{-q₁/(q₁-p₂)} w₁(s)^{q₁} ds < ∞`
    AnnulusHardy,
    /// `v₁⁻¹v₂` continuous
    Continuity,
    /// `0 < ∫₀ᵗ esssup_{|x|=τ} v(x)^{q₁/(q₁-p₁)} dτ < ∞`
    SphereSup,
    /// `0 < ∫₀ᵗ (∫_x^∞ w₁^{q₁})^{-q₁/(q₁-p₁)} w₁(x)^{q₁} dx < ∞`
    SourceDensity,
    /// `0 < ∫₀ᵗ w₂^{-q₂p₁/(q₂-p₁)} < ∞`
    TargetDual,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub condition: Condition,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Admissibility {
    pub checks: Vec<ConditionCheck>,
}

impl Admissibility {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Points at which "for all `t`" hypotheses are probed.
pub const PROBES: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];

/// `f` returns the logarithm of the probed quantity.
fn probe_all(condition: Condition, what: &str, f: impl Fn(f64) -> f64) -> ConditionCheck {
    for t in PROBES {
        let v = f(t);
        if !v.is_finite() {
            let kind = if v.is_nan() {
                "undefined"
            } else if v == f64::NEG_INFINITY {
                "zero"
            } else {
                "infinite"
            };
            return ConditionCheck {
                condition,
                passed: false,
                detail: format!("{what} is {kind} at t = {t:e}"),
            };
        }
    }
    ConditionCheck {
        condition,
        passed: true,
        detail: format!("{what} finite and positive on the probe grid"),
    }
}

/// `ln ∫_a^b w^r`.
fn ln_weighted(w: &WeightExpr, r: f64, a: f64, b: f64, tol: &Tolerance) -> f64 {
    match quadrature::integrate_weighted(w, r, a, b, tol) {
        Ok(q) if q.status == QuadStatus::Divergent => f64::INFINITY,
        Ok(q) if q.value > 0.0 && q.value.is_finite() => q.value.ln(),
        Ok(_) => {
            let wr = w.pow(r);
            let mut acc = f64::NEG_INFINITY;
            for (lo, hi, body) in wr.pieces() {
                let (l, h) = (lo.max(a), hi.min(b));
                if l < h {
                    acc = ln_add(acc, integrate_ln(|t| body.ln_eval(t), l, h, tol).ln_value);
                }
            }
            acc
        }
        Err(_) => f64::NAN,
    }
}

/// Checks the hypotheses of the theorem covering `case` on the probe grid.
pub fn check_admissibility(case: &TheoremCase, emb: &Embedding, tol: &Tolerance) -> Admissibility {
    let e = emb.exps;
    let mut checks = Vec::new();
    let tag = match case {
        TheoremCase::Supported(t) => *t,
        TheoremCase::Unsupported(r) => {
            checks.push(ConditionCheck {
                condition: Condition::SupportedCase,
                passed: false,
                detail: format!("no theorem covers this case ({r})"),
            });
            return Admissibility { checks };
        }
    };
    let tail = |condition, w: &WeightExpr, q: f64, name: &str| {
        let mut c = probe_all(condition, &format!("∫_t^∞ {name}^q"), |t| ln_weighted(w, q, t, f64::INFINITY, tol));
        if !c.passed && c.detail.contains("infinite") {
            c.detail = format!("infinite tail: {} (the space is degenerate)", c.detail);
        }
        c
    };
    checks.push(tail(Condition::SourceTail, &emb.w1, e.q1, "w₁"));
    checks.push(tail(Condition::TargetTail, &emb.w2, e.q2, "w₂"));
    if !checks.iter().all(|c| c.passed) {
        return Admissibility { checks };
    }
    match tag {
        CaseTag::Bi | CaseTag::Bii | CaseTag::Biii | CaseTag::Biv => {
            let check = match Primitives::new(emb, tol, Execution::Sequential) {
                Ok(prim) => {
                    let e1 = e.q1 * (e.p1 - e.p2) / (e.p1 * (e.q1 - e.p2));
                    probe_all(Condition::AnnulusHardy, "∫₀ᵗ V(s,t)^{…} D(s) ds", |t| {
                        integrate_ln(|s| e1 * prim.ln_v(s, t) + prim.ln_d(s), 0.0, t, tol).ln_value
                    })
                }
                Err(err) => ConditionCheck {
                    condition: Condition::AnnulusHardy,
                    passed: false,
                    detail: err.to_string(),
                },
            };
            checks.push(check);
        }
        CaseTag::Di | CaseTag::Dii => {
            let ratio_continuous = emb.v1.radial.is_continuous() && emb.v2.radial.is_continuous();
            checks.push(ConditionCheck {
                condition: Condition::Continuity,
                passed: ratio_continuous,
                detail: if ratio_continuous {
                    "v₁⁻¹v₂ continuous in the radius".into()
                } else {
                    "v₁⁻¹v₂ has a radial jump".into()
                },
            });
            let s = sphere_sup_profile(&emb.v1, &emb.v2);
            let es = e.p1 * e.q1 / (e.q1 - e.p1);
            checks.push(probe_all(Condition::SphereSup, "∫₀ᵗ esssup_{|x|=τ} v^{q₁/(q₁-p₁)} dτ", |t| {
                ln_weighted(&s, es, 0.0, t, tol)
            }));
            match Primitives::new(emb, tol, Execution::Sequential) {
                Ok(prim) => checks.push(probe_all(
                    Condition::SourceDensity,
                    "∫₀ᵗ (∫_x^∞ w₁^{q₁})^{-q₁/(q₁-p₁)} w₁^{q₁}",
                    |t| prim.ln_pd(t),
                )),
                Err(err) => checks.push(ConditionCheck {
                    condition: Condition::SourceDensity,
                    passed: false,
                    detail: err.to_string(),
                }),
            }
            let dual = -e.q2 * e.p1 / (e.q2 - e.p1);
            checks.push(probe_all(Condition::TargetDual, "∫₀ᵗ w₂^{-q₂p₁/(q₂-p₁)}", |t| {
                ln_weighted(&emb.w2, dual, 0.0, t, tol)
            }));
        }
        _ => {}
    }
    Admissibility { checks }
}

/// `S(τ) = esssup_{|x|=τ} v₁(x)⁻¹v₂(x)`.
fn sphere_sup_profile(v1: &RnWeight, v2: &RnWeight) -> WeightExpr {
    let ratio_sup = v2.angular.mul(&v1.angular.pow(-1.0)).map(|a| a.sup()).unwrap_or(f64::NAN);
    v1.radial.pow(-1.0).mul(&v2.radial).scale(ratio_sup).normalized()
}

/// Tabulated one-variable building blocks of the functionals.
#[derive(Debug, Clone)]
pub struct Primitives {
    exps: ExponentQuad,
    w1q: CumulativeIntegral,
    w2q: CumulativeIntegral,
    /// density of `V(x,t) = ∫_{x<|y|<t} (v₁⁻¹v₂)^{p₁p₂/(p₁-p₂)} dy`
    annulus: Option<CumulativeIntegral>,
    sphere_sup: Option<(WeightExpr, SupTable)>,
    /// `q₁/(q₁-p₂)`
    kappa: f64,
}

impl Primitives {
    pub fn new(emb: &Embedding, tol: &Tolerance, exec: Execution) -> Result<Self, FunctionalError> {
        let e = emb.exps;
        if e.p2 > e.p1 {
            return Err(FunctionalError::Unsupported("p₂>p₁".into()));
        }
        let w1q = CumulativeIntegral::new(emb.w1.pow(e.q1).normalized(), tol, exec);
        let w2q = CumulativeIntegral::new(emb.w2.pow(e.q2).normalized(), tol, exec);
        let (annulus, sphere_sup) = if e.p2 < e.p1 {
            let r = e.p1 * e.p2 / (e.p1 - e.p2);
            let ratio = RnWeight::ratio_pow(&emb.v1, &emb.v2, r)?;
            let (area, _) = sphere_functionals(&ratio.angular, ratio.dim, 1.0);
            let mut density = ratio.radial.scale(area);
            if ratio.dim > 1 {
                density = density.mul_power(ratio.dim as f64 - 1.0);
            }
            (Some(CumulativeIntegral::new(density.normalized(), tol, exec)), None)
        } else {
            let s = sphere_sup_profile(&emb.v1, &emb.v2);
            let table = SupTable::new(&s);
            (None, Some((s, table)))
        };
        Ok(Self {
            exps: e,
            w1q,
            w2q,
            annulus,
            sphere_sup,
            kappa: e.q1 / (e.q1 - e.p2),
        })
    }

    /// `ln ∫_t^∞ w₁^{q₁}`
    pub fn ln_tail1(&self, t: f64) -> f64 {
        self.w1q.ln_tail(t)
    }

    /// `ln ∫_t^∞ w₂^{q₂}`
    pub fn ln_tail2(&self, t: f64) -> f64 {
        self.w2q.ln_tail(t)
    }

    pub fn ln_w1q(&self, t: f64) -> f64 {
        self.w1q.density().ln_eval(t)
    }

    pub fn ln_w2q(&self, t: f64) -> f64 {
        self.w2q.density().ln_eval(t)
    }

    /// `ln V(x,t)`; `NaN` when `p₁ = p₂`.
    pub fn ln_v(&self, x: f64, t: f64) -> f64 {
        match &self.annulus {
            Some(c) => c.ln_integral(x, t),
            None => f64::NAN,
        }
    }

    /// `ln D(s)`, `D = (∫_s^∞ w₁^{q₁})^{-κ} w₁(s)^{q₁}` with `κ = q₁/(q₁-p₂)`.
    pub fn ln_d(&self, s: f64) -> f64 {
        -self.kappa * self.ln_tail1(s) + self.ln_w1q(s)
    }

    /// `ln ∫₀ᵗ D`, in closed form through the tail of `w₁^{q₁}`.
    pub fn ln_pd(&self, t: f64) -> f64 {
        let k1 = self.kappa - 1.0;
        let tail = self.ln_tail1(t);
        let total = self.w1q.ln_total();
        let base = -k1 * tail - k1.ln();
        if total == f64::INFINITY {
            return base;
        }
        // δ = ln(W(0)/W(t)) = -ln(1 - P(t)/W(0))
        let head = self.w1q.ln_head(t);
        let delta = -(-(head - total).exp()).ln_1p();
        base + (-(-k1 * delta).exp_m1()).ln()
    }

    /// `ln S(τ)`, `S(τ) = esssup_{|x|=τ} v₁⁻¹v₂`; `NaN` when `p₂ < p₁`.
    pub fn ln_s(&self, t: f64) -> f64 {
        match &self.sphere_sup {
            Some((s, _)) => s.ln_eval(t),
            None => f64::NAN,
        }
    }

    /// `ln sup_{(a,b)} S`.
    pub fn ln_sup_s(&self, a: f64, b: f64) -> f64 {
        match &self.sphere_sup {
            Some((_, table)) => table.ln_sup(a, b),
            None => f64::NAN,
        }
    }

    pub fn exps(&self) -> &ExponentQuad {
        &self.exps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub rel_tol: f64,
    /// Grid density of outer suprema.
    pub outer_per_decade: usize,
    /// Grid density of suprema nested inside another sup or integral.
    pub inner_per_decade: usize,
    pub exec: Execution,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            outer_per_decade: 32,
            inner_per_decade: 8,
            exec: Execution::Auto,
        }
    }
}

impl EvalConfig {
    fn tolerance(&self) -> Tolerance {
        Tolerance::relative(self.rel_tol)
    }

    fn outer(&self) -> SupConfig {
        SupConfig {
            per_decade: self.outer_per_decade,
            scale: Scale::Log,
            exec: self.exec,
            ..SupConfig::default()
        }
    }

    fn inner(&self) -> SupConfig {
        SupConfig {
            per_decade: self.inner_per_decade,
            scale: Scale::Log,
            exec: Execution::Sequential,
            refine_top: 2,
            ..SupConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    pub k: u8,
    pub name: String,
    #[serde(serialize_with = "crate::serialize_extended")]
    pub value: f64,
    #[serde(serialize_with = "crate::serialize_extended")]
    pub error_estimate: f64,
    /// Maximizer of the outermost supremum, when there is one.
    pub argsup: Option<f64>,
    /// The sub-expression that diverged, for infinite values.
    pub diverging: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalValue {
    #[serde(serialize_with = "crate::serialize_extended")]
    pub value: f64,
    pub components: Vec<Component>,
    #[serde(serialize_with = "crate::serialize_extended")]
    pub error_estimate: f64,
    pub finite: bool,
}

impl FunctionalValue {
    pub fn from_components(components: Vec<Component>) -> Self {
        let value = components.iter().map(|c| c.value).sum::<f64>();
        let error_estimate = components.iter().map(|c| c.error_estimate).sum::<f64>();
        let finite = components.iter().all(|c| c.value.is_finite());
        Self {
            value,
            components,
            error_estimate,
            finite,
        }
    }

    pub fn component(&self, k: u8) -> Option<&Component> {
        self.components.iter().find(|c| c.k == k)
    }

    /// Points where the outer sups were attained, as seeds for the oracle.
    pub fn hints(&self) -> Vec<f64> {
        self.components.iter().filter_map(|c| c.argsup).filter(|x| x.is_finite() && *x > 0.0).collect()
    }
}

/// Running record of quadrature accuracy and divergences inside one functional.
#[derive(Debug, Default)]
struct Tracker {
    rel_error: AtomicU64,
    inner_divergent: AtomicBool,
    unbounded_inner_sup: AtomicBool,
}

impl Tracker {
    fn note(&self, rel: f64) {
        if rel >= 0.0 {
            self.rel_error.fetch_max(rel.to_bits(), Ordering::Relaxed);
        }
    }

    fn rel(&self) -> f64 {
        f64::from_bits(self.rel_error.load(Ordering::Relaxed))
    }
}

/// Evaluator for `I₁–I₁₄` over one embedding.
pub struct Functionals {
    prim: Primitives,
    exps: ExponentQuad,
    table: ExponentTable,
    cfg: EvalConfig,
    horizon: (f64, f64),
}

/// Range of radii on which log-domain sums of exponential weights keep
/// absolute accuracy: `ln w ≈ -ct` loses all digits of an `O(ln t)` remainder
/// once `ct` passes `~1e15`.
fn horizon(emb: &Embedding) -> (f64, f64) {
    let ws = [&emb.v1.radial, &emb.v2.radial, &emb.w1, &emb.w2];
    let hi_rate = ws.iter().map(|w| w.asymptote_at_infinity().exp_rate.abs()).fold(0.0, f64::max);
    let lo_rate = ws.iter().map(|w| w.asymptote_at_zero().exp_rate.abs()).fold(0.0, f64::max);
    let hi = if hi_rate > 0.0 { 1e11 / hi_rate } else { f64::INFINITY };
    let lo = if lo_rate > 0.0 { 1e-11 * lo_rate } else { 0.0 };
    (lo, hi)
}

fn applicable(k: u8, e: &ExponentQuad) -> Result<(), FunctionalError> {
    let ExponentQuad { p1, p2, q1, q2 } = *e;
    let na = |reason| Err(FunctionalError::NotApplicable { k, reason });
    match k {
        1..=9 if !(p2 < p1) => return na("needs p₂ < p₁"),
        10..=14 if p1 != p2 => return na("needs p₁ = p₂"),
        1..=14 => {}
        _ => return Err(FunctionalError::InvalidIndex(k)),
    }
    if matches!(k, 4 | 5 | 6 | 8 | 9) && !(p2 < q1) {
        return na("needs p₂ < q₁");
    }
    if matches!(k, 12..=14) && !(p1 < q1) {
        return na("needs p₁ < q₁");
    }
    if matches!(k, 5 | 6 | 9 | 13 | 14) && !(q2 < q1) {
        return na("needs q₂ < q₁");
    }
    if matches!(k, 2 | 7 | 8 | 9) && !(q2 < p1) {
        return na("needs q₂ < p₁");
    }
    if matches!(k, 13 | 14) && !(p1 < q2) {
        return na("needs p₁ < q₂");
    }
    Ok(())
}

/// Maximum of `ln` values; `NaN` entries are ignored.
fn ln_max(a: f64, b: f64) -> f64 {
    if a.is_nan() {
        b
    } else if b.is_nan() {
        a
    } else {
        a.max(b)
    }
}

impl Functionals {
    pub fn new(emb: &Embedding, table: ExponentTable, cfg: EvalConfig) -> Result<Self, FunctionalError> {
        table.validate()?;
        let prim = Primitives::new(emb, &cfg.tolerance(), cfg.exec)?;
        Ok(Self {
            prim,
            exps: emb.exps,
            table,
            cfg,
            horizon: horizon(emb),
        })
    }

    pub fn primitives(&self) -> &Primitives {
        &self.prim
    }

    fn clamp(&self, a: f64, b: f64) -> (f64, f64) {
        let (lo, hi) = self.horizon;
        (if a == 0.0 { lo } else { a }, b.min(hi))
    }

    /// Growth of the `σ`-integrand (`upper`) or of a log-valued function over
    /// the last three decades below the horizon.
    fn grows_at_horizon(&self, lnf: &impl Fn(f64) -> f64, sigma_weight: f64) -> bool {
        let hi = self.horizon.1;
        if !hi.is_finite() {
            return false;
        }
        let g: Vec<f64> = [1e-6, 1e-3, 1.0]
            .iter()
            .map(|m| {
                let t = hi * m;
                lnf(t) + sigma_weight * t.ln()
            })
            .collect();
        if g.contains(&f64::INFINITY) {
            return true;
        }
        g.iter().all(|v| v.is_finite()) && (g[2] - g[1]) / (1e3f64).ln() > -1e-3 && g[2] > g[0]
    }

    fn int(&self, tr: &Tracker, lnf: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        if b.is_infinite() && self.grows_at_horizon(&lnf, 1.0) {
            tr.inner_divergent.store(true, Ordering::Relaxed);
            return f64::INFINITY;
        }
        let (a, b) = self.clamp(a, b);
        if !(a < b) {
            return f64::NEG_INFINITY;
        }
        let r = integrate_ln(lnf, a, b, &self.cfg.tolerance());
        match r.status {
            QuadStatus::Divergent => {
                tr.inner_divergent.store(true, Ordering::Relaxed);
                f64::INFINITY
            }
            _ => {
                tr.note(r.rel_error);
                r.ln_value
            }
        }
    }

    fn sup(&self, tr: &Tracker, f: impl Fn(f64) -> f64 + Sync + Send, a: f64, b: f64) -> f64 {
        if b.is_infinite() && self.grows_at_horizon(&f, 0.0) {
            tr.unbounded_inner_sup.store(true, Ordering::Relaxed);
            return f64::INFINITY;
        }
        let (a, b) = self.clamp(a, b);
        if !(a < b) {
            return f(a);
        }
        let r = quadrature::sup_search(f, a, b, &self.cfg.inner());
        if r.unbounded {
            tr.unbounded_inner_sup.store(true, Ordering::Relaxed);
            return f64::INFINITY;
        }
        r.value
    }

    fn outer_sup(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> (f64, Option<f64>, bool) {
        if self.grows_at_horizon(&f, 0.0) {
            return (f64::INFINITY, None, true);
        }
        let (a, b) = self.clamp(0.0, f64::INFINITY);
        let r = quadrature::sup_search(f, a, b, &self.cfg.outer());
        let arg = if r.arg.is_finite() { Some(r.arg) } else { None };
        (r.value, arg, r.unbounded)
    }

    fn outer_int(&self, tr: &Tracker, lnf: impl Fn(f64) -> f64) -> f64 {
        if self.grows_at_horizon(&lnf, 1.0) {
            return f64::INFINITY;
        }
        let (a, b) = self.clamp(0.0, f64::INFINITY);
        let r = integrate_ln(lnf, a, b, &self.cfg.tolerance());
        tr.note(r.rel_error);
        if r.status == QuadStatus::Divergent {
            f64::INFINITY
        } else {
            r.ln_value
        }
    }

    /// `I_k` for `k ∈ 1..=14`.
    pub fn eval(&self, k: u8) -> Result<Component, FunctionalError> {
        applicable(k, &self.exps)?;
        let ExponentQuad { p1, p2, q1, q2 } = self.exps;
        let pr = &self.prim;
        let tr = Tracker::default();
        let mut argsup = None;
        let mut outer_unbounded = false;
        let r = p1 * p2 / (p1 - p2);
        let a = q2 * (p1 - p2) / (p2 * (p1 - q2));
        let b = q2 / (p1 - q2);
        let c = (p1 - q2) / (p1 * q2);
        let e1 = q1 * (p1 - p2) / (p1 * (q1 - p2));
        let big_a = q1 * (q2 - p2) / (p2 * (q1 - q2));
        let beta = q1 / (q1 - q2);
        let outer_pow = (q1 - q2) / (q1 * q2);
        let g_pow = q1 * (q2 - p1) / (p1 * (q1 - q2));
        let t = |s: SuspectExponent| self.table.value(s, &self.exps);

        let ln_value = match k {
            1 => {
                let (v, arg, unb) = self.outer_sup(|x| {
                    let inner = self.sup(&tr, |t| pr.ln_v(x, t) / r + pr.ln_tail2(t) / q2, x, f64::INFINITY);
                    -pr.ln_tail1(x) / q1 + inner
                });
                argsup = arg;
                outer_unbounded = unb;
                v
            }
            2 => {
                let (v, arg, unb) = self.outer_sup(|x| {
                    let inner = self.int(
                        &tr,
                        |t| a * pr.ln_v(x, t) + b * pr.ln_tail2(t) + pr.ln_w2q(t),
                        x,
                        f64::INFINITY,
                    );
                    -pr.ln_tail1(x) / q1 + c * inner
                });
                argsup = arg;
                outer_unbounded = unb;
                v
            }
            3 => {
                let (v, arg, unb) = self.outer_sup(|t| pr.ln_v(0.0, t) / r + pr.ln_tail2(t) / q2);
                argsup = arg;
                outer_unbounded = unb;
                let w0 = pr.ln_tail1(0.0);
                if w0 == f64::INFINITY && v.is_finite() {
                    f64::NEG_INFINITY
                } else {
                    -w0 / q1 + v
                }
            }
            4 => {
                let e4 = t(SuspectExponent::I4Outer);
                let (v, arg, unb) = self.outer_sup(|t| {
                    let inner = self.int(&tr, |s| e1 * pr.ln_v(s, t) + pr.ln_d(s), 0.0, t);
                    pr.ln_tail2(t) / q2 + e4 * inner
                });
                argsup = arg;
                outer_unbounded = unb;
                v
            }
            5 => {
                let big_b = q1 * q2 * (p1 - p2) / (p1 * p2 * (q1 - q2));
                let v = self.outer_int(&tr, |t| {
                    let inner = self.sup(&tr, |z| big_b * pr.ln_v(t, z) + beta * pr.ln_tail2(z), t, f64::INFINITY);
                    big_a * pr.ln_pd(t) + pr.ln_d(t) + inner
                });
                outer_pow * v
            }
            6 => {
                let ci = t(SuspectExponent::I6Inner);
                let v = self.outer_int(&tr, |t| {
                    let inner = self.int(&tr, |s| pr.ln_d(s) + ci * pr.ln_v(s, t), 0.0, t);
                    let sup = self.sup(&tr, |z| e1 * pr.ln_v(t, z) + beta * pr.ln_tail2(z), t, f64::INFINITY);
                    big_a * inner + sup + pr.ln_d(t)
                });
                outer_pow * v
            }
            7 => {
                let w0 = pr.ln_tail1(0.0);
                let inner = self.int(&tr, |t| a * pr.ln_v(0.0, t) + b * pr.ln_tail2(t) + pr.ln_w2q(t), 0.0, f64::INFINITY);
                if w0 == f64::INFINITY && inner.is_finite() {
                    f64::NEG_INFINITY
                } else {
                    -w0 / q1 + c * inner
                }
            }
            8 => {
                let e8 = (q1 - p2) / (q1 * p2);
                let (v, arg, unb) = self.outer_sup(|t| {
                    let inner = self.int(
                        &tr,
                        |s| a * pr.ln_v(t, s) + b * pr.ln_tail2(s) + pr.ln_w2q(s),
                        t,
                        f64::INFINITY,
                    );
                    e8 * pr.ln_pd(t) + c * inner
                });
                argsup = arg;
                outer_unbounded = unb;
                v
            }
            9 => {
                let b9 = t(SuspectExponent::I9Weight);
                let f9 = t(SuspectExponent::I9Power);
                let v = self.outer_int(&tr, |t| {
                    let inner = self.int(
                        &tr,
                        |s| a * pr.ln_v(t, s) + b9 * pr.ln_tail2(s) + pr.ln_w2q(s),
                        t,
                        f64::INFINITY,
                    );
                    big_a * pr.ln_pd(t) + pr.ln_d(t) + f9 * inner
                });
                outer_pow * v
            }
            10 => {
                // sup_x W₂(x)^{1/q₂} sup_{τ<x} h(τ) = sup_τ h(τ) W₂(τ)^{1/q₂}, W₂ being nonincreasing
                let e10 = t(SuspectExponent::I10Ratio);
                let (v, arg, unb) =
                    self.outer_sup(|x| pr.ln_tail2(x) / q2 + e10 * pr.ln_s(x) - pr.ln_tail1(x) / q1);
                argsup = arg;
                outer_unbounded = unb;
                v
            }
            11 => {
                let w0 = pr.ln_tail1(0.0);
                let (v, arg, unb) = self.outer_sup(|x| pr.ln_tail2(x) / q2 + pr.ln_s(x));
                argsup = arg;
                outer_unbounded = unb;
                if w0 == f64::INFINITY && v.is_finite() {
                    f64::NEG_INFINITY
                } else {
                    -w0 / q1 + v
                }
            }
            12 => {
                let e12 = t(SuspectExponent::I12Ratio);
                let pow = (q1 - p1) / (q1 * p1);
                let (v, arg, unb) = self.outer_sup(|t| {
                    let inner = self.int(&tr, |x| pr.ln_d(x) + e12 * pr.ln_sup_s(x, t), 0.0, t);
                    pow * inner + pr.ln_tail2(t) / q2
                });
                argsup = arg;
                outer_unbounded = unb;
                v
            }
            13 => {
                let e13 = t(SuspectExponent::I13Ratio);
                let tail = SuffixSup::new(|z| e13 * pr.ln_s(z) + beta * pr.ln_tail2(z), self.horizon.1);
                if tail.unbounded {
                    tr.unbounded_inner_sup.store(true, Ordering::Relaxed);
                }
                let v = self.outer_int(&tr, |t| {
                    let sup = tail.query(t, |z| e13 * pr.ln_s(z) + beta * pr.ln_tail2(z));
                    g_pow * pr.ln_pd(t) + pr.ln_d(t) + sup
                });
                outer_pow * v
            }
            14 => {
                let ei = t(SuspectExponent::I14Inner);
                let eo = t(SuspectExponent::I14Outer);
                let h = |z: f64| eo * pr.ln_s(z) + beta * pr.ln_tail2(z);
                let tail = SuffixSup::new(h, self.horizon.1);
                if tail.unbounded {
                    tr.unbounded_inner_sup.store(true, Ordering::Relaxed);
                }
                let v = self.outer_int(&tr, |t| {
                    let inner = self.int(&tr, |x| pr.ln_d(x) + ei * pr.ln_sup_s(x, t), 0.0, t);
                    g_pow * inner + tail.query(t, h) + pr.ln_d(t)
                });
                outer_pow * v
            }
            _ => unreachable!(),
        };

        let value = ln_value.exp();
        let diverging = if value == f64::INFINITY || ln_value.is_nan() {
            Some(
                if tr.inner_divergent.load(Ordering::Relaxed) {
                    "inner integral"
                } else if tr.unbounded_inner_sup.load(Ordering::Relaxed) {
                    "inner supremum"
                } else if outer_unbounded {
                    "outer supremum"
                } else {
                    "outer integral"
                }
                .to_string(),
            )
        } else {
            None
        };
        let value = if ln_value.is_nan() { f64::INFINITY } else { value };
        let rel = tr.rel().max(self.cfg.rel_tol);
        Ok(Component {
            k,
            name: format!("I{k}"),
            value,
            error_estimate: if value.is_finite() { value * rel } else { 0.0 },
            argsup,
            diverging,
        })
    }

    /// The theorem's combination of functionals for `tag`.
    pub fn estimate(&self, tag: CaseTag) -> Result<FunctionalValue, FunctionalError> {
        let comps = tag
            .components()
            .iter()
            .map(|&k| self.eval(k))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FunctionalValue::from_components(comps))
    }
}

/// `I_k` as a single-component value.
pub fn eval_functional(
    k: u8,
    emb: &Embedding,
    table: &ExponentTable,
    cfg: &EvalConfig,
) -> Result<FunctionalValue, FunctionalError> {
    let f = Functionals::new(emb, table.clone(), *cfg)?;
    Ok(FunctionalValue::from_components(vec![f.eval(k)?]))
}

/// Classifies, then sums the case's functionals.
pub fn embedding_norm_estimate(
    emb: &Embedding,
    table: &ExponentTable,
    cfg: &EvalConfig,
) -> Result<FunctionalValue, FunctionalError> {
    match classify(&emb.exps) {
        TheoremCase::Supported(tag) => Functionals::new(emb, table.clone(), *cfg)?.estimate(tag),
        case => Err(FunctionalError::Unsupported(case.to_string())),
    }
}

/// `sup_{z>t} h(z)` for all `t` from one tabulation of `h` on a log grid, with
/// each grid-local maximum refined by golden section.
struct SuffixSup {
    sigma: Vec<f64>,
    /// refined local maximum `(σ*, value)` attached to grid index `i`
    refined: Vec<Option<(f64, f64)>>,
    /// `best[i] = sup over grid indices ≥ i`, refined maxima included
    best: Vec<f64>,
    /// samples `(σ, value)` past the grid end
    far: [(f64, f64); 2],
    unbounded: bool,
}

impl SuffixSup {
    const PER_DECADE: f64 = 32.0;

    fn new(h: impl Fn(f64) -> f64, horizon: f64) -> Self {
        let lo = -12.0 * std::f64::consts::LN_10;
        let hi = horizon.min(1e12).ln();
        let n = ((hi - lo) / std::f64::consts::LN_10 * Self::PER_DECADE).ceil() as usize;
        let sigma: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let hv = |s: f64| {
            let v = h(s.exp());
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        };
        let vals: Vec<f64> = sigma.iter().map(|&s| hv(s)).collect();
        // past a finite horizon the grid end stands in for the far samples
        let far = if horizon.is_finite() {
            [(hi, vals[n]), (hi, vals[n])]
        } else {
            [15.0, 18.0].map(|d: f64| {
                let s = d * std::f64::consts::LN_10;
                (s, hv(s))
            })
        };
        let (v0, v1, v2) = (vals[n], far[0].1, far[1].1);
        let unbounded = v2 == f64::INFINITY || (v1 - v0 >= 0.01 && v2 - v1 >= 0.5 * (v1 - v0));
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        let mut refined = vec![None; n + 1];
        for i in 1..n {
            if vals[i].is_finite() && vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1] {
                let (mut l, mut r) = (sigma[i - 1], sigma[i + 1]);
                let mut c = r - gr * (r - l);
                let mut d = l + gr * (r - l);
                let (mut fc, mut fd) = (hv(c), hv(d));
                for _ in 0..40 {
                    if fc >= fd {
                        r = d;
                        d = c;
                        fd = fc;
                        c = r - gr * (r - l);
                        fc = hv(c);
                    } else {
                        l = c;
                        c = d;
                        fc = fd;
                        d = l + gr * (r - l);
                        fd = hv(d);
                    }
                }
                let (s, v) = if fc >= fd { (c, fc) } else { (d, fd) };
                if v > vals[i] {
                    refined[i] = Some((s, v));
                }
            }
        }
        let mut best = vec![f64::NEG_INFINITY; n + 2];
        best[n + 1] = if unbounded { f64::INFINITY } else { v1.max(v2) };
        for i in (0..=n).rev() {
            let m = refined[i].map_or(vals[i], |(_, v)| v.max(vals[i]));
            best[i] = best[i + 1].max(m);
        }
        Self {
            sigma,
            refined,
            best,
            far,
            unbounded,
        }
    }

    fn query(&self, t: f64, h: impl Fn(f64) -> f64) -> f64 {
        let s = t.ln();
        let j = self.sigma.partition_point(|x| *x <= s);
        if j == self.sigma.len() {
            if self.unbounded {
                return f64::INFINITY;
            }
            return self
                .far
                .iter()
                .filter(|(fs, _)| *fs > s)
                .fold(h(t), |acc, (_, v)| ln_max(acc, *v));
        }
        let mut v = ln_max(h(t), self.best[j]);
        if j > 0 {
            if let Some((arg, val)) = self.refined[j - 1] {
                if arg > s {
                    v = ln_max(v, val);
                }
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn q(p1: f64, p2: f64, q1: f64, q2: f64) -> ExponentQuad {
        ExponentQuad::new(p1, p2, q1, q2).unwrap()
    }

    fn w(s: &str) -> WeightExpr {
        WeightExpr::parse(s).unwrap()
    }

    #[test]
    fn classification_examples() {
        let tag = |p1, p2, q1, q2| classify(&q(p1, p2, q1, q2)).to_string();
        assert_eq!(tag(2.0, 1.0, 1.0, 2.0), "A_i");
        assert_eq!(tag(4.0, 1.0, 1.0, 2.0), "A_ii");
        assert_eq!(tag(1.0, 1.0, 2.0, 3.0), "D_i");
        assert_eq!(tag(1.0, 1.0, 1.0, 2.0), "C");
        assert_eq!(tag(2.0, 1.0, 2.0, 3.0), "B_i");
        assert_eq!(tag(1.0, 2.0, 1.0, 3.0), "Unsupported(p₂>p₁)");
        assert_eq!(tag(2.0, 1.0, 3.0, 1.0), "Unsupported(p₂≥q₂)");
    }

    #[test]
    fn i10_anchor() {
        let e = Embedding::radial(1, q(1.0, 1.0, 1.0, 2.0), WeightExpr::one(), WeightExpr::one(), w("(1+t)^-2"), w("(1+t)^-2"));
        let f = Functionals::new(&e, ExponentTable::default(), EvalConfig::default()).unwrap();
        let c = f.eval(10).unwrap();
        assert_relative_eq!(c.value, 3f64.powf(-0.5), max_relative = 1e-6);
    }

    #[test]
    fn i1_anchor() {
        let e = Embedding::radial(1, q(2.0, 1.0, 1.0, 2.0), WeightExpr::one(), WeightExpr::one(), w("exp(-1*t)"), w("exp(-1*t)"));
        let f = Functionals::new(&e, ExponentTable::default(), EvalConfig::default()).unwrap();
        let c = f.eval(1).unwrap();
        assert_relative_eq!(c.value, (0.5f64).sqrt() * (-0.5f64).exp(), max_relative = 1e-6);
    }

    #[test]
    fn partial_d_integral_matches_quadrature() {
        let e = Embedding::radial(1, q(2.0, 1.0, 2.0, 3.0), WeightExpr::one(), WeightExpr::one(), w("(1+t)^-2"), w("(1+t)^-2"));
        let p = Primitives::new(&e, &Tolerance::default(), Execution::Sequential).unwrap();
        for t in [1e-6, 0.3, 5.0, 1e4] {
            let direct = integrate_ln(|s| p.ln_d(s), 0.0, t, &Tolerance::relative(1e-12)).ln_value;
            assert_relative_eq!(p.ln_pd(t), direct, max_relative = 1e-8);
        }
    }

    #[test]
    fn override_table_rejects_unknown_keys() {
        let mut t = ExponentTable::default();
        t.overrides.insert("I4.outr".into(), ExponentVariant::Printed);
        assert!(matches!(t.validate(), Err(FunctionalError::UnknownExponentKey(_))));
        let t = ExponentTable::default().with(SuspectExponent::I4Outer, ExponentVariant::Printed);
        assert_eq!(t.variant(SuspectExponent::I4Outer), ExponentVariant::Printed);
        assert_eq!(t.variant(SuspectExponent::I9Power), ExponentVariant::Corrected);
    }

    #[test]
    fn admissibility_examples() {
        let tol = Tolerance::default();
        let e = Embedding::radial(1, q(2.0, 1.0, 2.0, 3.0), WeightExpr::one(), WeightExpr::one(), w("(1+t)^-2"), w("1"));
        let a = check_admissibility(&classify(&e.exps), &e, &tol);
        assert!(!a.passed());
        assert!(a.failures().any(|c| c.condition == Condition::TargetTail && c.detail.contains("infinite tail")));
        let e = Embedding::radial(1, q(2.0, 1.0, 2.0, 3.0), WeightExpr::one(), WeightExpr::one(), w("(1+t)^-2"), w("(1+t)^-2"));
        assert!(check_admissibility(&classify(&e.exps), &e, &tol).passed());
        let jump = w("piecewise {1 on (0, 1); 2 on (1, inf)}");
        let e = Embedding::radial(1, q(1.0, 1.0, 2.0, 3.0), WeightExpr::one(), jump, w("(1+t)^-2"), w("(1+t)^-2"));
        let a = check_admissibility(&classify(&e.exps), &e, &tol);
        assert!(a.failures().any(|c| c.condition == Condition::Continuity));
    }
}
