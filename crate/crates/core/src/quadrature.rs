//! Integrals, essential suprema and scalar suprema on `(0, ∞)`.
//!
//! Integration runs in the logarithmic variable `σ = ln t`, with infinite ends
//! compactified by `σ = σ₀ ± u/(1-u)`. Integrands are handled through their
//! logarithms and rescaled by their sampled maximum, so tails that under- or
//! overflow in linear scale still integrate to a correct `ln` value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};
use crate::weights::{Product, WeightError, WeightExpr};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: 1e-9,
            abs: 0.0,
            max_intervals: 400,
        }
    }
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self {
            rel,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadStatus {
    Converged,
    /// The integral is `+∞`, certified by a non-integrable tail.
    Divergent,
    /// Refinement budget exhausted; the value is the best available estimate.
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub status: QuadStatus,
}

impl QuadResult {
    pub fn divergent() -> Self {
        Self {
            value: f64::INFINITY,
            abs_error: 0.0,
            status: QuadStatus::Divergent,
        }
    }

    pub fn exact(value: f64) -> Self {
        Self {
            value,
            abs_error: value.abs() * f64::EPSILON,
            status: QuadStatus::Converged,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    pub fn converged(&self) -> bool {
        self.status == QuadStatus::Converged
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("integration interval ({a}, {b}) is empty or invalid")]
    EmptyInterval { a: f64, b: f64 },
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// Integral expressed through its logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LnQuad {
    pub ln_value: f64,
    pub rel_error: f64,
    pub status: QuadStatus,
}

impl LnQuad {
    pub fn divergent() -> Self {
        Self {
            ln_value: f64::INFINITY,
            rel_error: 0.0,
            status: QuadStatus::Divergent,
        }
    }

    pub fn zero() -> Self {
        Self {
            ln_value: f64::NEG_INFINITY,
            rel_error: 0.0,
            status: QuadStatus::Converged,
        }
    }

    pub fn value(&self) -> f64 {
        self.ln_value.exp()
    }

    pub fn to_result(self) -> QuadResult {
        let value = self.value();
        QuadResult {
            value,
            abs_error: if value.is_finite() {
                value * self.rel_error
            } else {
                0.0
            },
            status: self.status,
        }
    }
}

/// `ln(eᵃ + eᵇ)` without overflow.
pub fn ln_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(eᵃ - eᵇ)` for `a > b`; `NaN` when `b > a`.
pub fn ln_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + (-(b - a).exp_m1()).ln()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) on a finite interval.
pub fn gauss_kronrod(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: &Tolerance) -> QuadResult {
    let (k, e) = gk15(&f, a, b);
    let mut panels = vec![(a, b, k, e)];
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return QuadResult {
                value: total,
                abs_error: err,
                status: QuadStatus::Unresolved,
            };
        }
        if err <= tol.abs.max(tol.rel * total.abs()) {
            return QuadResult {
                value: total,
                abs_error: err,
                status: QuadStatus::Converged,
            };
        }
        let worst = (0..panels.len())
            .max_by(|&i, &j| panels[i].3.total_cmp(&panels[j].3).then(j.cmp(&i)))
            .unwrap_or(0);
        let (lo, hi, _, _) = panels[worst];
        let mid = 0.5 * (lo + hi);
        if panels.len() >= tol.max_intervals || mid <= lo || mid >= hi {
            return QuadResult {
                value: total,
                abs_error: err,
                status: QuadStatus::Unresolved,
            };
        }
        let (k1, e1) = gk15(&f, lo, mid);
        let (k2, e2) = gk15(&f, mid, hi);
        panels[worst] = (lo, mid, k1, e1);
        panels.insert(worst + 1, (mid, hi, k2, e2));
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n <= 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Laguerre nodes and weights for `∫₀^∞ e^{-x} f(x) dx`.
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut z: f64 = 0.0;
    for k in 0..n {
        z = match k {
            0 => 3.0 / (1.0 + 2.4 * n as f64),
            1 => z + 15.0 / (1.0 + 2.5 * n as f64),
            _ => {
                let ai = (k - 1) as f64;
                z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[k - 2])
            }
        };
        let (mut p2, mut pp) = (0.0, 1.0);
        for _ in 0..100 {
            let mut p1 = 1.0;
            p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 - z) * p2 / j as f64 - (j - 1) as f64 * p3 / j as f64;
            }
            pp = n as f64 * (p1 - p2) / z;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs() {
                break;
            }
        }
        nodes[k] = z;
        weights[k] = -1.0 / (pp * n as f64 * p2);
    }
    (nodes, weights)
}

struct FixedRules {
    legendre: (Vec<f64>, Vec<f64>),
    laguerre: (Vec<f64>, Vec<f64>),
}

fn fixed_rules() -> &'static FixedRules {
    static RULES: std::sync::OnceLock<FixedRules> = std::sync::OnceLock::new();
    RULES.get_or_init(|| FixedRules {
        legendre: gauss_legendre(16),
        laguerre: gauss_laguerre(16),
    })
}

/// `ln ∫_a^b body` by a fixed rule when the integrand is mild in `ln t`, or
/// sharply concentrated at one end; `None` when neither applies.
fn fixed_rule_partial(body: &Product, a: f64, b: f64) -> Option<f64> {
    if !(a > 0.0) {
        return None;
    }
    let rules = fixed_rules();
    let fa = body.ln_eval(a);
    if !fa.is_finite() {
        return None;
    }
    if b.is_finite() {
        let (sa, sb) = (a.ln(), b.ln());
        let fb = body.ln_eval(b);
        if !fb.is_finite() {
            return None;
        }
        let (pa, pb) = (fa + sa, fb + sb);
        if (pb - pa).abs() <= 8.0 {
            let sm = 0.5 * (sa + sb);
            let pm = body.ln_eval(sm.exp()) + sm;
            if (pm - 0.5 * (pa + pb)).abs() > 4.0 {
                return None;
            }
            let scale = pa.max(pb).max(pm);
            let half = 0.5 * (sb - sa);
            let (x, w) = &rules.legendre;
            let sum: f64 = x
                .iter()
                .zip(w)
                .map(|(xi, wi)| {
                    let s = sm + half * xi;
                    wi * (body.ln_eval(s.exp()) + s - scale).exp()
                })
                .sum();
            return (sum > 0.0 && sum.is_finite()).then(|| scale + (sum * half).ln());
        }
        let lam = body.dlog(b);
        if pb > pa && lam * (b - a) > 60.0 {
            return laguerre_end(body, fb, b, -1.0, lam);
        }
    }
    let lam = -body.dlog(a);
    if lam * (b - a) > 60.0 {
        return laguerre_end(body, fa, a, 1.0, lam);
    }
    None
}

/// `ln ∫` of a body decaying at rate `λ` away from `end` in direction `dir`.
fn laguerre_end(body: &Product, f_end: f64, end: f64, dir: f64, lam: f64) -> Option<f64> {
    let (x, w) = &fixed_rules().laguerre;
    let psi = |xi: f64| body.ln_eval(end + dir * xi / lam) - f_end + xi;
    // the rule assumes e^{-x} captures the decay; reject strong curvature
    if psi(x[x.len() - 1]).abs() > 5.0 {
        return None;
    }
    let sum: f64 = x.iter().zip(w).map(|(xi, wi)| wi * psi(*xi).exp()).sum();
    (sum > 0.0 && sum.is_finite()).then(|| f_end + sum.ln() - lam.ln())
}

#[derive(Clone, Copy)]
enum LogMap {
    Finite { s0: f64, len: f64 },
    Upper { s0: f64 },
    Lower { s1: f64 },
    Both,
}

impl LogMap {
    fn new(a: f64, b: f64) -> Self {
        match (a > 0.0, b.is_finite()) {
            (true, true) => {
                let s0 = a.ln();
                LogMap::Finite {
                    s0,
                    len: b.ln() - s0,
                }
            }
            (true, false) => LogMap::Upper { s0: a.ln() },
            (false, true) => LogMap::Lower { s1: b.ln() },
            (false, false) => LogMap::Both,
        }
    }

    fn domain(&self) -> (f64, f64) {
        match self {
            LogMap::Both => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    /// `(σ, ln dσ/du)` at `u`.
    fn eval(&self, u: f64) -> (f64, f64) {
        match *self {
            LogMap::Finite { s0, len } => (s0 + len * u, len.ln()),
            LogMap::Upper { s0 } => {
                let d = 1.0 - u;
                (s0 + u / d, -2.0 * d.ln())
            }
            LogMap::Lower { s1 } => {
                let d = 1.0 - u;
                (s1 - u / d, -2.0 * d.ln())
            }
            LogMap::Both => {
                let d = 1.0 - u * u;
                (u / d, (1.0 + u * u).ln() - 2.0 * d.ln())
            }
        }
    }
}

const SIGMA_CUTOFF: f64 = 690.0;

/// `ln f(e^σ) + σ`, the log-integrand in the `σ` variable.
fn ln_sigma_integrand(lnf: &impl Fn(f64) -> f64, sigma: f64) -> f64 {
    if sigma.abs() > SIGMA_CUTOFF {
        return f64::NEG_INFINITY;
    }
    lnf(sigma.exp()) + sigma
}

/// Whether `∫ f dt` diverges at `∞` (`upper`) or at `0⁺`, judged by the
/// `σ`-integrand failing to decay over the outermost decades.
fn tail_diverges(lnf: &impl Fn(f64) -> f64, anchor: f64, upper: bool) -> bool {
    let step = 4.0 * std::f64::consts::LN_10;
    let base = if upper {
        anchor.max(4.0 * std::f64::consts::LN_10)
    } else {
        anchor.min(-4.0 * std::f64::consts::LN_10)
    };
    let dir = if upper { 1.0 } else { -1.0 };
    let g: Vec<f64> = (1..=3)
        .map(|k| ln_sigma_integrand(lnf, base + dir * step * k as f64))
        .collect();
    if g.contains(&f64::INFINITY) {
        return true;
    }
    if !g[2].is_finite() || !g[1].is_finite() {
        return false;
    }
    (g[2] - g[1]) / step > -1e-3
}

/// `ln ∫_a^b exp(lnf(t)) dt` for `0 ≤ a < b ≤ ∞`.
pub fn integrate_ln(lnf: impl Fn(f64) -> f64, a: f64, b: f64, tol: &Tolerance) -> LnQuad {
    integrate_ln_scaled(lnf, a, b, tol, None)
}

pub(crate) fn integrate_ln_scaled(
    lnf: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: &Tolerance,
    scale_hint: Option<f64>,
) -> LnQuad {
    if !(a < b) {
        return LnQuad::zero();
    }
    if a > 0.0 {
        // steep decay relative to `a`: the mass sits within a sliver of the
        // left end, so integrate in `τ = t - a` where the sliver is resolved
        let h = a * 1e-6;
        let at_a = lnf(a);
        let slope = (lnf(a + h) - at_a) / h;
        if slope * a < -50.0 && at_a.is_finite() {
            if slope * a < -1e8 {
                // mass within a relative sliver of 1e-8: e^{f(a)}/λ up to O(1/(λa))
                let hc = a * 1e-5;
                let lam = -(lnf(a + hc) - lnf(a - hc)) / (2.0 * hc);
                if lam > 0.0 && lam.is_finite() {
                    return LnQuad {
                        ln_value: at_a - lam.ln(),
                        rel_error: 1.0 / (lam * a),
                        status: QuadStatus::Converged,
                    };
                }
            }
            let mut r = integrate_ln_core(|tau| lnf(a + tau) - at_a, 0.0, b - a, tol, None);
            r.ln_value += at_a;
            return r;
        }
    }
    integrate_ln_core(lnf, a, b, tol, scale_hint)
}

fn integrate_ln_core(
    lnf: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: &Tolerance,
    scale_hint: Option<f64>,
) -> LnQuad {
    let map = LogMap::new(a, b);
    if !b.is_finite() && tail_diverges(&lnf, if a > 0.0 { a.ln() } else { 0.0 }, true) {
        return LnQuad::divergent();
    }
    if a == 0.0 && tail_diverges(&lnf, if b.is_finite() { b.ln() } else { 0.0 }, false) {
        return LnQuad::divergent();
    }
    let lnh = |u: f64| {
        let (sigma, ln_jac) = map.eval(u);
        ln_sigma_integrand(&lnf, sigma) + ln_jac
    };
    let (u0, u1) = map.domain();
    let sampled_max = |samples: usize| -> f64 {
        let mut best = f64::NEG_INFINITY;
        for i in 0..=samples {
            let v = lnh(u0 + (u1 - u0) * i as f64 / samples as f64);
            if v > best || v == f64::INFINITY {
                best = v;
            }
        }
        best
    };
    let mut scale = match scale_hint {
        Some(s) if s.is_finite() => s,
        _ => sampled_max(32),
    };
    let mut attempt = 0;
    let res = loop {
        if scale == f64::INFINITY {
            return LnQuad::divergent();
        }
        let s = if scale.is_finite() { scale } else { 0.0 };
        let res = gauss_kronrod(
            |u| {
                let v = lnh(u) - s;
                if v.is_nan() {
                    f64::NAN
                } else {
                    v.exp()
                }
            },
            u0,
            u1,
            tol,
        );
        // a narrow peak missed by the sampling overflows the rescaled integrand
        if res.value == f64::INFINITY && attempt < 2 {
            attempt += 1;
            scale = sampled_max(32 << (4 * attempt)).max(s + 600.0);
            continue;
        }
        scale = s;
        break res;
    };
    if res.value.is_nan() {
        return LnQuad {
            ln_value: f64::NAN,
            rel_error: f64::INFINITY,
            status: QuadStatus::Unresolved,
        };
    }
    if res.value == f64::INFINITY {
        return LnQuad::divergent();
    }
    if res.value <= 0.0 {
        return LnQuad {
            ln_value: f64::NEG_INFINITY,
            rel_error: 0.0,
            status: res.status,
        };
    }
    LnQuad {
        ln_value: scale + res.value.ln(),
        rel_error: res.abs_error / res.value,
        status: res.status,
    }
}

/// `∫_a^b f(t) dt` for a non-negative `f` on `0 ≤ a < b ≤ ∞`.
pub fn integrate_fn(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: &Tolerance) -> QuadResult {
    integrate_ln(
        |t| {
            let v = f(t);
            if v > 0.0 {
                v.ln()
            } else if v == 0.0 {
                f64::NEG_INFINITY
            } else {
                f64::NAN
            }
        },
        a,
        b,
        tol,
    )
    .to_result()
}

fn integrate_product(body: &Product, a: f64, b: f64, tol: &Tolerance) -> QuadResult {
    if let Some((c, alpha)) = body.as_pure_power() {
        let e = alpha + 1.0;
        if e == 0.0 {
            if a == 0.0 || b.is_infinite() {
                return QuadResult::divergent();
            }
            return QuadResult::exact(c * (b / a).ln());
        }
        if (a == 0.0 && e < 0.0) || (b.is_infinite() && e > 0.0) {
            return QuadResult::divergent();
        }
        let value = if a == 0.0 {
            c * b.powf(e) / e
        } else if b.is_infinite() {
            -c * a.powf(e) / e
        } else {
            c * a.powf(e) * (e * (b / a).ln()).exp_m1() / e
        };
        return QuadResult::exact(value);
    }
    if b.is_infinite() && !body.asymptote_at_infinity().integrable(true) {
        return QuadResult::divergent();
    }
    if a == 0.0 && !body.asymptote_at_zero().integrable(false) {
        return QuadResult::divergent();
    }
    integrate_ln(|t| body.ln_eval(t), a, b, tol).to_result()
}

/// `∫_a^b w(t)^r dt`, with a divergence certificate for non-integrable ends.
pub fn integrate_weighted(
    w: &WeightExpr,
    r: f64,
    a: f64,
    b: f64,
    tol: &Tolerance,
) -> Result<QuadResult, QuadError> {
    if !(a >= 0.0 && a < b) || a.is_infinite() {
        return Err(QuadError::EmptyInterval { a, b });
    }
    let wr = w.pow(r);
    let mut value = 0.0;
    let mut abs_error = 0.0;
    let mut status = QuadStatus::Converged;
    for (lo, hi, body) in wr.pieces() {
        let l = lo.max(a);
        let h = hi.min(b);
        if l >= h {
            continue;
        }
        let part = integrate_product(body, l, h, tol);
        match part.status {
            QuadStatus::Divergent => return Ok(QuadResult::divergent()),
            QuadStatus::Unresolved => status = QuadStatus::Unresolved,
            QuadStatus::Converged => {}
        }
        value += part.value;
        abs_error += part.abs_error;
    }
    Ok(QuadResult {
        value,
        abs_error,
        status,
    })
}

/// `(∫_t^∞ w^q)^{1/q}`.
pub fn tail_norm(w: &WeightExpr, q: f64, t: f64, tol: &Tolerance) -> Result<QuadResult, QuadError> {
    let raw = integrate_weighted(w, q, t, f64::INFINITY, tol)?;
    if raw.status == QuadStatus::Divergent {
        return Ok(raw);
    }
    let value = raw.value.powf(1.0 / q);
    let rel = if raw.value > 0.0 {
        raw.abs_error / raw.value
    } else {
        0.0
    };
    Ok(QuadResult {
        value,
        abs_error: value * rel / q,
        status: raw.status,
    })
}

/// `ln ∫_l^h c·t^α dt` in closed form; `+∞` for a divergent end.
pub fn ln_power_integral(c: f64, alpha: f64, l: f64, h: f64) -> f64 {
    let e = alpha + 1.0;
    if e == 0.0 {
        if l == 0.0 || h.is_infinite() {
            return f64::INFINITY;
        }
        return c.ln() + (h / l).ln().ln();
    }
    if (l == 0.0 && e < 0.0) || (h.is_infinite() && e > 0.0) {
        return f64::INFINITY;
    }
    if l == 0.0 {
        return c.ln() + e * h.ln() - e.ln();
    }
    if h.is_infinite() {
        return c.ln() + e * l.ln() - (-e).ln();
    }
    // c·l^e·(e^{x} - 1)/e with x = e·ln(h/l)
    let x = e * (h / l).ln();
    let ln_expm1 = if x.abs() < 1.0 {
        x.exp_m1().abs().ln()
    } else if x > 0.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        (-x.exp()).ln_1p()
    };
    c.ln() + e * l.ln() + ln_expm1 - e.abs().ln()
}

/// Running integral `∫ f` of a weight density, tabulated on log-spaced knots.
///
/// Queries return logarithms, and interval integrals are assembled from
/// panel sums without subtractive cancellation.
#[derive(Debug, Clone)]
pub struct CumulativeIntegral {
    density: WeightExpr,
    knots: Vec<f64>,
    ln_panel: Vec<f64>,
    ln_prefix: Vec<f64>,
    ln_suffix: Vec<f64>,
    tol: Tolerance,
}

const KNOT_LO_EXP: i32 = -12;
const KNOT_HI_EXP: i32 = 12;
const KNOTS_PER_DECADE: i32 = 8;

impl CumulativeIntegral {
    pub fn new(density: WeightExpr, tol: &Tolerance, exec: Execution) -> Self {
        let mut knots: Vec<f64> = (KNOT_LO_EXP * KNOTS_PER_DECADE..=KNOT_HI_EXP * KNOTS_PER_DECADE)
            .map(|k| 10f64.powf(k as f64 / KNOTS_PER_DECADE as f64))
            .collect();
        let (lo, hi) = (knots[0], knots[knots.len() - 1]);
        knots.extend(density.breakpoints().into_iter().filter(|b| *b > lo && *b < hi));
        knots.sort_by(f64::total_cmp);
        knots.dedup_by(|a, b| (*a / *b - 1.0).abs() < 1e-12);

        let tol = Tolerance {
            rel: tol.rel.min(1e-11),
            ..*tol
        };
        let nk = knots.len();
        // panel i spans (knots[i-1], knots[i]); panel 0 is (0, knots[0]), panel nk is (knots[nk-1], ∞)
        let ln_panel: Vec<f64> = par::map_range(exec, nk + 1, |i| {
            let a = if i == 0 { 0.0 } else { knots[i - 1] };
            let b = if i == nk { f64::INFINITY } else { knots[i] };
            Self::raw_integral(&density, a, b, &tol)
        });
        let mut ln_prefix = vec![f64::NEG_INFINITY; nk];
        let mut acc = ln_panel[0];
        ln_prefix[0] = acc;
        for i in 1..nk {
            acc = ln_add(acc, ln_panel[i]);
            ln_prefix[i] = acc;
        }
        let mut ln_suffix = vec![f64::NEG_INFINITY; nk];
        let mut acc = ln_panel[nk];
        ln_suffix[nk - 1] = acc;
        for i in (0..nk - 1).rev() {
            acc = ln_add(acc, ln_panel[i + 1]);
            ln_suffix[i] = acc;
        }
        Self {
            density,
            knots,
            ln_panel,
            ln_prefix,
            ln_suffix,
            tol,
        }
    }

    fn raw_integral(density: &WeightExpr, a: f64, b: f64, tol: &Tolerance) -> f64 {
        let mut acc = f64::NEG_INFINITY;
        for (lo, hi, body) in density.pieces() {
            let l = lo.max(a);
            let h = hi.min(b);
            if l >= h {
                continue;
            }
            if let Some((c, alpha)) = body.as_pure_power() {
                acc = ln_add(acc, ln_power_integral(c, alpha, l, h));
                continue;
            }
            if h.is_infinite() && !body.asymptote_at_infinity().integrable(true) {
                return f64::INFINITY;
            }
            if l == 0.0 && !body.asymptote_at_zero().integrable(false) {
                return f64::INFINITY;
            }
            let hint = if l > 0.0 && h.is_finite() {
                Some(
                    (body.ln_eval(l) + l.ln())
                        .max(body.ln_eval(h) + h.ln())
                        .max(body.ln_eval((l * h).sqrt()) + 0.5 * (l * h).ln()),
                )
            } else {
                None
            };
            let part = integrate_ln_scaled(|t| body.ln_eval(t), l, h, tol, hint);
            acc = ln_add(acc, part.ln_value);
        }
        acc
    }

    pub fn density(&self) -> &WeightExpr {
        &self.density
    }

    /// Index `i` with `t` inside panel `i` (see `new`).
    fn panel_of(&self, t: f64) -> usize {
        self.knots.partition_point(|k| *k <= t)
    }

    /// Integral over whole panels `i+1 ..= j`, i.e. `∫_{knots[i]}^{knots[j]}`.
    fn ln_span(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            return f64::NEG_INFINITY;
        }
        let half = std::f64::consts::LN_2;
        let (pi, pj) = (self.ln_prefix[i], self.ln_prefix[j]);
        if pj.is_finite() && pi - pj < -half {
            return ln_sub(pj, pi);
        }
        let (si, sj) = (self.ln_suffix[i], self.ln_suffix[j]);
        if si.is_finite() && sj - si < -half {
            return ln_sub(si, sj);
        }
        let mut acc = f64::NEG_INFINITY;
        for k in i + 1..=j {
            acc = ln_add(acc, self.ln_panel[k]);
        }
        acc
    }

    /// `ln ∫_a^b density` for `0 ≤ a ≤ b ≤ ∞`.
    pub fn ln_integral(&self, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return f64::NEG_INFINITY;
        }
        let nk = self.knots.len();
        let ia = self.panel_of(a);
        let ib = if b.is_infinite() { nk } else { self.panel_of(b) };
        if ia == ib {
            return self.partial(a, b, ia);
        }
        let left = self.partial(a, self.knots[ia], ia);
        let right = self.partial(self.knots[ib - 1], b, ib);
        ln_add(ln_add(left, self.ln_span(ia, ib - 1)), right)
    }

    fn partial(&self, a: f64, b: f64, panel: usize) -> f64 {
        let nk = self.knots.len();
        let lo = if panel == 0 { 0.0 } else { self.knots[panel - 1] };
        let hi = if panel == nk {
            f64::INFINITY
        } else {
            self.knots[panel]
        };
        if a <= lo && b >= hi {
            return self.ln_panel[panel];
        }
        let body = self.density.piece_at(0.5 * (a + b.min(a * 4.0)));
        if !body.is_pure_power() {
            if let Some(v) = fixed_rule_partial(body, a, b) {
                return v;
            }
        }
        Self::raw_integral(&self.density, a, b, &self.tol)
    }

    /// `ln ∫_t^∞ density`.
    pub fn ln_tail(&self, t: f64) -> f64 {
        self.ln_integral(t, f64::INFINITY)
    }

    /// `ln ∫_0^t density`.
    pub fn ln_head(&self, t: f64) -> f64 {
        self.ln_integral(0.0, t)
    }

    pub fn ln_total(&self) -> f64 {
        let nk = self.knots.len();
        ln_add(self.ln_prefix[nk - 1], self.ln_panel[nk])
    }
}

/// Fast suprema of a weight over intervals, from its precomputed local maxima
/// and one-sided breakpoint values.
#[derive(Debug, Clone)]
pub struct SupTable {
    weight: WeightExpr,
    /// `(t, ln value)` of interior local maxima and one-sided breakpoint values.
    marks: Vec<(f64, f64)>,
}

impl SupTable {
    pub fn new(weight: &WeightExpr) -> Self {
        let mut marks = Vec::new();
        for (lo, hi, body) in weight.pieces() {
            for t in local_maxima(body, lo, hi) {
                marks.push((t, body.ln_eval(t)));
            }
            if lo > 0.0 {
                marks.push((lo, body.ln_eval(lo)));
            }
            if hi.is_finite() {
                marks.push((hi, body.ln_eval(hi)));
            }
        }
        marks.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            weight: weight.clone(),
            marks,
        }
    }

    fn ln_endpoint(&self, t: f64) -> f64 {
        if t == 0.0 {
            self.weight.limit_at_zero().ln()
        } else if t.is_infinite() {
            self.weight.limit_at_infinity().ln()
        } else {
            self.weight.ln_eval(t)
        }
    }

    /// `ln sup_{(a,b)} w`, endpoints taken as one-sided limits.
    pub fn ln_sup(&self, a: f64, b: f64) -> f64 {
        let mut best = self.ln_endpoint(a).max(self.ln_endpoint(b));
        let start = self.marks.partition_point(|m| m.0 <= a);
        for m in &self.marks[start..] {
            if m.0 >= b {
                break;
            }
            best = best.max(m.1);
        }
        best
    }

    pub fn sup(&self, a: f64, b: f64) -> f64 {
        self.ln_sup(a, b).exp()
    }
}

/// Local maxima of a product on `(lo, hi)`, located by sign changes of its
/// log-derivative on a log grid, then bisection.
fn local_maxima(body: &Product, lo: f64, hi: f64) -> Vec<f64> {
    let l = lo.max(1e-12).ln();
    let h = if hi.is_finite() { hi.min(1e12) } else { 1e12 }.ln();
    if !(l < h) {
        return Vec::new();
    }
    let n = (((h - l) / std::f64::consts::LN_10) * 32.0).ceil().max(16.0) as usize;
    let s = |k: usize| l + (h - l) * k as f64 / n as f64;
    let slope = |sigma: f64| {
        let t = sigma.exp();
        body.dlog(t) * t
    };
    let mut out = Vec::new();
    let mut prev = slope(s(0));
    for k in 1..=n {
        let cur = slope(s(k));
        if prev > 0.0 && cur <= 0.0 {
            let (mut a, mut b) = (s(k - 1), s(k));
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                if slope(m) > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push((0.5 * (a + b)).exp());
        }
        prev = cur;
    }
    out
}

/// `sup_{(a,b)} w`, exact for monotone pieces through endpoint limits and
/// located stationary points otherwise.
pub fn essential_sup(w: &WeightExpr, a: f64, b: f64) -> f64 {
    SupTable::new(w).sup(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Values are plain function values.
    Linear,
    /// Values are logarithms of a positive function.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupConfig {
    pub per_decade: usize,
    pub lo: f64,
    pub hi: f64,
    pub refine_top: usize,
    pub bracket_tol: f64,
    pub scale: Scale,
    pub exec: Execution,
}

impl Default for SupConfig {
    fn default() -> Self {
        Self {
            per_decade: 32,
            lo: 1e-6,
            hi: 1e6,
            refine_top: 3,
            bracket_tol: 1e-6,
            scale: Scale::Linear,
            exec: Execution::Auto,
        }
    }
}

impl SupConfig {
    pub fn log_scale(self) -> Self {
        Self {
            scale: Scale::Log,
            ..self
        }
    }

    pub fn sequential(self) -> Self {
        Self {
            exec: Execution::Sequential,
            ..self
        }
    }

    pub fn with_density(self, per_decade: usize) -> Self {
        Self { per_decade, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupResult {
    pub arg: f64,
    pub value: f64,
    /// Relative width of the final bracket around `arg`.
    pub bracket: f64,
    /// The supremum grows without bound toward an open end.
    pub unbounded: bool,
    pub evaluations: usize,
}

fn grid_between(a: f64, b: f64, per_decade: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    let decades = (lb - la) / std::f64::consts::LN_10;
    let n = ((decades * per_decade as f64).ceil() as usize).max(16);
    (0..=n).map(|k| (la + (lb - la) * k as f64 / n as f64).exp()).collect()
}

/// Supremum of `f` on `(a, b)`: a geometric grid, edge probes toward open ends,
/// and golden-section refinement of the best candidates in log coordinates.
pub fn sup_search(f: impl Fn(f64) -> f64 + Sync + Send, a: f64, b: f64, cfg: &SupConfig) -> SupResult {
    let left = if a > 0.0 { a } else { cfg.lo.min(b * 1e-3) };
    let right = if b.is_finite() {
        b
    } else {
        cfg.hi.max(left * 1e6)
    };
    let mut xs = grid_between(left, right, cfg.per_decade);
    let lo_probes: Vec<f64> = if a > 0.0 {
        Vec::new()
    } else {
        vec![left * 1e-6, left * 1e-3]
    };
    let hi_probes: Vec<f64> = if b.is_finite() {
        Vec::new()
    } else {
        vec![right * 1e3, right * 1e6]
    };
    let n_lo = lo_probes.len();
    let mut all = lo_probes;
    all.append(&mut xs);
    all.extend(hi_probes.iter().copied());
    let values: Vec<f64> = par::map(cfg.exec, &all, |&x| f(x));
    let mut evaluations = all.len();

    let better = |v: f64, x: f64, bv: f64, bx: f64| v > bv || (v == bv && x < bx);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for (&x, &v) in all.iter().zip(&values) {
        if v.is_nan() {
            continue;
        }
        if best.0.is_nan() || better(v, x, best.1, best.0) {
            best = (x, v);
        }
    }
    if best.0.is_nan() {
        return SupResult {
            arg: f64::NAN,
            value: f64::NAN,
            bracket: f64::INFINITY,
            unbounded: false,
            evaluations,
        };
    }
    if best.1 == f64::INFINITY {
        return SupResult {
            arg: best.0,
            value: f64::INFINITY,
            bracket: 0.0,
            unbounded: true,
            evaluations,
        };
    }

    let grows = |v0: f64, v1: f64, v2: f64| -> bool {
        match cfg.scale {
            Scale::Log => v1 - v0 >= 0.01 && v2 - v1 >= 0.5 * (v1 - v0),
            Scale::Linear => v0 > 0.0 && v1 >= 1.01 * v0 && (v2 - v1) >= 0.5 * (v1 - v0),
        }
    };
    let last = all.len() - 1;
    if !b.is_finite() && best.0 >= all[last] && grows(values[last - 2], values[last - 1], values[last])
    {
        return SupResult {
            arg: f64::INFINITY,
            value: f64::INFINITY,
            bracket: 0.0,
            unbounded: true,
            evaluations,
        };
    }
    if a == 0.0 && best.0 <= all[0] && grows(values[2], values[1], values[0]) {
        return SupResult {
            arg: 0.0,
            value: f64::INFINITY,
            bracket: 0.0,
            unbounded: true,
            evaluations,
        };
    }

    // golden refinement around the top grid candidates (interior grid only)
    let grid_range = n_lo..all.len() - hi_probes.len();
    let mut order: Vec<usize> = grid_range.clone().filter(|&i| !values[i].is_nan()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let mut picked: Vec<usize> = Vec::new();
    for i in order {
        if picked.len() >= cfg.refine_top {
            break;
        }
        if picked.iter().any(|&p| p.abs_diff(i) <= 1) {
            continue;
        }
        picked.push(i);
    }
    let mut bracket = f64::INFINITY;
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    for &i in &picked {
        let lo = if i > grid_range.start { all[i - 1] } else { all[i] };
        let hi = if i + 1 < grid_range.end { all[i + 1] } else { all[i] };
        if !(lo < hi) {
            continue;
        }
        let (mut l, mut h) = (lo.ln(), hi.ln());
        let g = |s: f64| {
            let v = f(s.exp());
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        };
        let mut c = h - gr * (h - l);
        let mut d = l + gr * (h - l);
        let mut fc = g(c);
        let mut fd = g(d);
        evaluations += 2;
        let target = 0.25 * cfg.bracket_tol;
        while h - l > target {
            if fc >= fd {
                h = d;
                d = c;
                fd = fc;
                c = h - gr * (h - l);
                fc = g(c);
            } else {
                l = c;
                c = d;
                fc = fd;
                d = l + gr * (h - l);
                fd = g(d);
            }
            evaluations += 1;
        }
        for (s, v) in [(c, fc), (d, fd)] {
            let x = s.exp();
            if better(v, x, best.1, best.0) {
                best = (x, v);
            }
        }
        if i == picked[0] {
            bracket = (h - l).exp() - 1.0;
        }
    }
    if bracket.is_infinite() {
        bracket = (right / left).powf(1.0 / all.len() as f64) - 1.0;
    }
    SupResult {
        arg: best.0,
        value: best.1,
        bracket,
        unbounded: false,
        evaluations,
    }
}
