//! Dimension reduction for separable weights.
//!
//! The embedding quotient on `ℝⁿ` collapses to a one-dimensional quotient on
//! `(0, ∞)` with the reduced weight `ṽ`: an `L^{1/(1-p)}` sphere norm of `v`
//! for `p < 1`, and a sphere supremum for `p = 1`. The lifts below realize
//! the reverse direction, turning a radial profile `g` into a function on
//! `ℝⁿ` whose ball integrals reproduce the one-dimensional ones.

use std::sync::Arc;

use thiserror::Error;

use crate::oracle::RadialTestFunction;
use crate::quadrature::{self, QuadError, Tolerance};
use crate::weights::{
    sphere_area, AngularWeight, ExponentQuad, Factor, RnWeight, SphereGrid, WeightError, WeightExpr,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error("reduction exponent must lie in (0, 1), got {0}")]
    ExponentOutOfRange(f64),
    #[error("saturation level must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("angular grid does not resolve the supremum set of the angular weight")]
    ResolutionFailure,
    #[error("degenerate space: the tail integral of w^p is infinite")]
    Degenerate,
    #[error("tail integral of `{0}` has no closed form in the weight grammar")]
    NoClosedForm(String),
    #[error("p2 > p1 is outside the reducible range")]
    Unsupported,
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// `(∫_{S^{n-1}} a^r dσ, sup a)`.
pub fn sphere_functionals(a: &AngularWeight, dim: usize, r: f64) -> (f64, f64) {
    match a {
        AngularWeight::Constant(c) => (c.powf(r) * sphere_area(dim), *c),
        AngularWeight::Tabulated { grid, values } => {
            let integral = grid
                .weights()
                .iter()
                .zip(values)
                .map(|(w, v)| w * v.powf(r))
                .sum();
            (integral, a.sup())
        }
    }
}

/// `ṽ(t) = (∫_{S^{n-1}} v(ts')^{1/(1-p)} dσ)^{1-p} t^{(n-1)(1-p)}`.
pub fn reduce_subunity(v: &RnWeight, p: f64) -> Result<WeightExpr, ReductionError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(ReductionError::ExponentOutOfRange(p));
    }
    let (integral, _) = sphere_functionals(&v.angular, v.dim, 1.0 / (1.0 - p));
    let c = integral.powf(1.0 - p);
    let mut out = v.radial.scale(c);
    let a = (v.dim as f64 - 1.0) * (1.0 - p);
    if a != 0.0 {
        out = out.mul_power(a);
    }
    Ok(out)
}

/// `ṽ(t) = esssup_{s' ∈ S^{n-1}} v(ts')`.
pub fn reduce_unity(v: &RnWeight) -> WeightExpr {
    let (_, sup) = sphere_functionals(&v.angular, v.dim, 1.0);
    if sup == 1.0 {
        v.radial.clone()
    } else {
        v.radial.scale(sup)
    }
}

/// The one-dimensional problem behind `‖Id : LM₁ → LM₂‖^{p₁}`:
/// `sup_g (∫(∫₀ᵗ g^p ṽ)^{q/p} u)^{1/q} / (∫(∫₀ᵗ g)^θ w)^{1/θ}`.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    pub vtilde: WeightExpr,
    pub u: WeightExpr,
    pub w: WeightExpr,
    pub p: f64,
    pub q: f64,
    pub theta: f64,
    pub p1: f64,
}

pub fn reduce_problem(
    exps: &ExponentQuad,
    v1: &RnWeight,
    v2: &RnWeight,
    w1: &WeightExpr,
    w2: &WeightExpr,
) -> Result<ReducedProblem, ReductionError> {
    let p = exps.p();
    let vtilde = if exps.p2 < exps.p1 {
        let v = RnWeight::ratio_pow(v1, v2, exps.p2)?;
        reduce_subunity(&v, p)?
    } else if exps.p2 == exps.p1 {
        let v = RnWeight::ratio_pow(v1, v2, exps.p1)?;
        reduce_unity(&v)
    } else {
        return Err(ReductionError::Unsupported);
    };
    Ok(ReducedProblem {
        vtilde: vtilde.normalized(),
        u: w2.pow(exps.q2).normalized(),
        w: w1.pow(exps.q1).normalized(),
        p,
        q: exps.q(),
        theta: exps.theta(),
        p1: exps.p1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftKind {
    Subunity,
    Unity,
}

#[derive(Debug, Clone)]
enum AngularFactor {
    /// `f(x) = g(|x|) v(x)^{1/(1-p)} / (∫_S v(|x|τ)^{1/(1-p)} dσ) |x|^{1-n}`.
    SphereNormalized { v: RnWeight, p: f64 },
    /// `f(x) = h(x/|x|) g(|x|) |x|^{1-n}` with `h` tabulated on a sphere grid.
    Saturating { grid: Arc<SphereGrid>, h: Vec<f64> },
    /// `h ≡ 1/σ(S^{n-1})`.
    Uniform,
}

/// A non-negative function on `ℝⁿ` built from a radial profile.
#[derive(Debug, Clone)]
pub struct LiftedFunction {
    pub g: RadialTestFunction,
    pub kind: LiftKind,
    pub dim: usize,
    factor: AngularFactor,
}

impl LiftedFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        if r == 0.0 {
            return 0.0;
        }
        let g = self.g.eval(r);
        if g == 0.0 {
            return 0.0;
        }
        let jac = r.powf(1.0 - self.dim as f64);
        match &self.factor {
            AngularFactor::SphereNormalized { v, p } => {
                let e = 1.0 / (1.0 - p);
                let (sphere, _) = sphere_functionals(&v.angular, v.dim, e);
                let norm = v.radial.eval(r).powf(e) * sphere;
                g * v.eval(x).powf(e) / norm * jac
            }
            AngularFactor::Saturating { grid, h } => {
                let dir: Vec<f64> = x.iter().map(|c| c / r).collect();
                h[grid.nearest(&dir)] * g * jac
            }
            AngularFactor::Uniform => g * jac / sphere_area(self.dim),
        }
    }

    /// `∫_{B(0,t)} f(x)^s v(x) dx` by polar quadrature over `grid`, evaluating
    /// `f` pointwise on `ℝⁿ`.
    pub fn ball_integral(
        &self,
        t: f64,
        s: f64,
        v: Option<&RnWeight>,
        grid: &SphereGrid,
        tol: &Tolerance,
    ) -> f64 {
        let n = self.dim;
        let integrand = |r: f64| -> f64 {
            let mut acc = 0.0;
            let mut x = vec![0.0; n];
            for i in 0..grid.len() {
                for (xc, sc) in x.iter_mut().zip(grid.node(i)) {
                    *xc = r * sc;
                }
                let f = self.eval(&x);
                if f == 0.0 {
                    continue;
                }
                let weight = v.map_or(1.0, |v| v.eval(&x));
                acc += grid.weights()[i] * f.powf(s) * weight;
            }
            acc * r.powf(n as f64 - 1.0)
        };
        let mut total = 0.0;
        for (lo, hi, _) in self.g.cells() {
            let (a, b) = (lo, hi.min(t));
            if a >= b {
                continue;
            }
            total += quadrature::integrate_fn(integrand, a, b, tol).value;
        }
        total
    }
}

/// Lift for `0 < p < 1`: `∫_{B(0,t)} f = ∫₀ᵗ g` and `∫_{B(0,t)} f^p v = ∫₀ᵗ g^p ṽ`.
pub fn lift_subunity(
    g: &RadialTestFunction,
    v: &RnWeight,
    p: f64,
) -> Result<LiftedFunction, ReductionError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(ReductionError::ExponentOutOfRange(p));
    }
    Ok(LiftedFunction {
        g: g.clone(),
        kind: LiftKind::Subunity,
        dim: v.dim,
        factor: AngularFactor::SphereNormalized { v: v.clone(), p },
    })
}

/// Lift for `p = 1` with a direction density `h` concentrated where the
/// angular weight is within `eps` of its supremum, normalized to `∫ h dσ = 1`.
pub fn lift_unity(
    g: &RadialTestFunction,
    v: &RnWeight,
    eps: f64,
) -> Result<LiftedFunction, ReductionError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(ReductionError::InvalidEpsilon(eps));
    }
    let factor = match &v.angular {
        AngularWeight::Constant(_) => AngularFactor::Uniform,
        AngularWeight::Tabulated { grid, values } => {
            let sup = v.angular.sup();
            let level = sup - eps;
            let mass: f64 = grid
                .weights()
                .iter()
                .zip(values)
                .filter(|(_, a)| **a > level)
                .map(|(w, _)| w)
                .sum();
            if !(mass > 0.0) {
                return Err(ReductionError::ResolutionFailure);
            }
            let h = values
                .iter()
                .map(|a| if *a > level { 1.0 / mass } else { 0.0 })
                .collect();
            AngularFactor::Saturating {
                grid: grid.clone(),
                h,
            }
        }
    };
    Ok(LiftedFunction {
        g: g.clone(),
        kind: LiftKind::Unity,
        dim: v.dim,
        factor,
    })
}

/// Default saturation level `10⁻³ · sup a`.
pub fn default_epsilon(v: &RnWeight) -> f64 {
    1e-3 * v.angular.sup()
}

/// Closed-form `∫_t^∞ w^p` as a weight in `t`, when `w^p` is a constant times
/// one of `t^a`, `(1+t)^b` or `exp(-δt)`.
pub fn tail_integral_weight(w: &WeightExpr, p: f64) -> Result<WeightExpr, ReductionError> {
    let wp = w.pow(p).normalized();
    if !wp.asymptote_at_infinity().integrable(true) {
        return Err(ReductionError::Degenerate);
    }
    let body = match &wp {
        WeightExpr::Product(b) => b,
        WeightExpr::Piecewise(_) => return Err(ReductionError::NoClosedForm(w.to_string())),
    };
    let mut c = 1.0;
    let mut shape = None;
    for f in &body.factors {
        match *f {
            Factor::Const(x) => c *= x,
            other if shape.is_none() => shape = Some(other),
            _ => return Err(ReductionError::NoClosedForm(w.to_string())),
        }
    }
    let factors = match shape {
        Some(Factor::Power(a)) => vec![Factor::Const(c / (-a - 1.0)), Factor::Power(a + 1.0)],
        Some(Factor::OnePlus(b)) => vec![Factor::Const(c / (-b - 1.0)), Factor::OnePlus(b + 1.0)],
        Some(Factor::Exp(d)) => vec![Factor::Const(c / d), Factor::Exp(d)],
        _ => return Err(ReductionError::NoClosedForm(w.to_string())),
    };
    Ok(WeightExpr::from_factors(factors))
}

/// `u(x) = v(x) ‖w‖_{p,(|x|,∞)}`, so that `LM_{p,p}(v,w) = L_p(u)`.
pub fn morrey_to_lebesgue(v: &RnWeight, w: &WeightExpr, p: f64) -> Result<RnWeight, ReductionError> {
    let tail = tail_integral_weight(w, p)?;
    Ok(RnWeight {
        dim: v.dim,
        radial: v.radial.mul(&tail.pow(1.0 / p)).normalized(),
        angular: v.angular.clone(),
    })
}

/// Weights of the local space equivalent to a complementary space under
/// `x = y/|y|²`: `ṽ(y) = v(y/|y|²)|y|^{-2n/p}`, `w̃(τ) = τ^{-2/q} w(1/τ)`.
pub fn complementary_transform(
    v: &RnWeight,
    w: &WeightExpr,
    p: f64,
    q: f64,
) -> Result<(RnWeight, WeightExpr), ReductionError> {
    let n = v.dim as f64;
    let radial = v.radial.inverted()?.mul_power(-2.0 * n / p);
    let vt = RnWeight {
        dim: v.dim,
        radial,
        angular: v.angular.clone(),
    };
    let wt = w.inverted()?.mul_power(-2.0 / q);
    Ok((vt, wt))
}

/// Both sides of `∫₀^∞ (∫₀ᵗ g) w dt = ∫₀^∞ g(s) (∫_s^∞ w) ds`.
pub fn fubini_sides(g: &RadialTestFunction, w: &WeightExpr, tol: &Tolerance) -> (f64, f64) {
    let mut lhs = 0.0;
    let mut edges: Vec<f64> = g.knots().to_vec();
    edges.insert(0, 0.0);
    edges.push(f64::INFINITY);
    for e in edges.windows(2) {
        if e[0] >= e[1] {
            continue;
        }
        lhs += quadrature::integrate_fn(|t| g.primitive(t) * w.eval(t), e[0], e[1], tol).value;
    }
    let mut rhs = 0.0;
    for (lo, hi, val) in g.cells() {
        if val == 0.0 {
            continue;
        }
        let inner = quadrature::integrate_fn(
            |s| {
                quadrature::integrate_weighted(w, 1.0, s, f64::INFINITY, tol)
                    .map(|r| r.value)
                    .unwrap_or(f64::NAN)
            },
            lo,
            hi,
            tol,
        );
        rhs += val * inner.value;
    }
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn w(s: &str) -> WeightExpr {
        WeightExpr::parse(s).unwrap()
    }

    #[test]
    fn sphere_functional_examples() {
        let (i, s) = sphere_functionals(&AngularWeight::Constant(1.0), 2, 5.0);
        assert_relative_eq!(i, 2.0 * PI, max_relative = 1e-15);
        assert_eq!(s, 1.0);
        let (i, s) = sphere_functionals(&AngularWeight::Constant(3.0), 1, 2.0);
        assert_relative_eq!(i, 18.0, max_relative = 1e-15);
        assert_eq!(s, 3.0);
        let (i, _) = sphere_functionals(&AngularWeight::Constant(1.0), 3, 1.0);
        assert_relative_eq!(i, 4.0 * PI, max_relative = 1e-15);
    }

    #[test]
    fn reduce_subunity_examples() {
        let v = RnWeight::radial(2, WeightExpr::one());
        let vt = reduce_subunity(&v, 0.5).unwrap();
        for t in [0.1, 1.0, 7.0] {
            assert_relative_eq!(vt.eval(t), (2.0 * PI).sqrt() * t.sqrt(), max_relative = 1e-14);
        }
        let v = RnWeight::new(1, w("exp(-1*t)"), AngularWeight::Constant(2.0)).unwrap();
        let vt = reduce_subunity(&v, 0.5).unwrap();
        assert_relative_eq!(vt.eval(1.5), 8f64.sqrt() * (-1.5f64).exp(), max_relative = 1e-14);
        let v = RnWeight::radial(3, w("t^1.5"));
        let vt = reduce_subunity(&v, 0.25).unwrap();
        let expect = |t: f64| t.powf(1.5) * (4.0 * PI).powf(0.75) * t.powf(2.0 * 0.75);
        assert_relative_eq!(vt.eval(2.0), expect(2.0), max_relative = 1e-14);
        assert!(reduce_subunity(&v, 1.0).is_err());
    }

    #[test]
    fn reduce_unity_examples() {
        let v = RnWeight::radial(3, w("t^2"));
        assert_relative_eq!(reduce_unity(&v).eval(3.0), 9.0, max_relative = 1e-15);
        let grid = Arc::new(SphereGrid::new(2, 8).unwrap());
        let vals = (0..8).map(|i| 1.0 + 1.5 * (i == 3) as u8 as f64).collect();
        let v = RnWeight::new(2, w("(1+t)^-1"), AngularWeight::tabulated(grid, vals).unwrap()).unwrap();
        assert_relative_eq!(reduce_unity(&v).eval(1.0), 1.25, max_relative = 1e-15);
        let v = RnWeight::new(2, WeightExpr::constant(4.0), AngularWeight::Constant(1.0)).unwrap();
        assert_relative_eq!(reduce_unity(&v).eval(10.0), 4.0, max_relative = 1e-15);
    }

    #[test]
    fn lift_subunity_disk_example() {
        let g = RadialTestFunction::bump(0.0, 1.0).unwrap();
        let v = RnWeight::radial(2, WeightExpr::one());
        let f = lift_subunity(&g, &v, 0.5).unwrap();
        let x = [0.3, 0.4];
        assert_relative_eq!(f.eval(&x), 1.0 / (2.0 * PI * 0.5), max_relative = 1e-14);
        let grid = SphereGrid::new(2, 16).unwrap();
        let total = f.ball_integral(2.0, 1.0, None, &grid, &Tolerance::default());
        assert_relative_eq!(total, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn lift_subunity_line_example() {
        let g = RadialTestFunction::bump(1.0, 2.0).unwrap();
        let v = RnWeight::radial(1, WeightExpr::one());
        let f = lift_subunity(&g, &v, 0.5).unwrap();
        let grid = SphereGrid::new(1, 1).unwrap();
        let tol = Tolerance::default();
        assert_relative_eq!(f.ball_integral(3.0, 1.0, None, &grid, &tol), 1.0, max_relative = 1e-10);
        let vt = reduce_subunity(&v, 0.5).unwrap();
        let lhs = f.ball_integral(3.0, 0.5, Some(&v), &grid, &tol);
        let rhs = quadrature::integrate_weighted(&vt, 1.0, 1.0, 2.0, &tol).unwrap().value;
        assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
    }

    #[test]
    fn zero_profile_lifts_to_zero() {
        let g = RadialTestFunction::new(vec![1.0, 2.0], vec![0.0]).unwrap();
        let v = RnWeight::radial(2, WeightExpr::one());
        let f = lift_subunity(&g, &v, 0.3).unwrap();
        assert_eq!(f.eval(&[1.5, 0.0]), 0.0);
        let grid = SphereGrid::new(2, 8).unwrap();
        assert_eq!(f.ball_integral(5.0, 1.0, None, &grid, &Tolerance::default()), 0.0);
    }

    #[test]
    fn lift_unity_examples() {
        let tol = Tolerance::default();
        let g = RadialTestFunction::bump(0.0, 1.0).unwrap();
        let v = RnWeight::radial(2, WeightExpr::one());
        let f = lift_unity(&g, &v, 1e-3).unwrap();
        let grid = SphereGrid::new(2, 16).unwrap();
        assert_relative_eq!(f.ball_integral(1.0, 1.0, Some(&v), &grid, &tol), 1.0, max_relative = 1e-10);

        // 1 on the upper half circle, 2 on the lower
        let grid = Arc::new(SphereGrid::new(2, 64).unwrap());
        let a = AngularWeight::from_fn(grid.clone(), |s| if s[1] > 0.0 { 1.0 } else { 2.0 }).unwrap();
        let v = RnWeight::new(2, WeightExpr::one(), a).unwrap();
        let f = lift_unity(&g, &v, 0.01).unwrap();
        let lhs = f.ball_integral(1.0, 1.0, Some(&v), &grid, &tol);
        let rhs = quadrature::integrate_weighted(&reduce_unity(&v), 1.0, 0.0, 1.0, &tol).unwrap().value;
        assert!(lhs / rhs >= 0.995 && lhs / rhs <= 1.0 + 1e-12);
        assert_relative_eq!(f.ball_integral(1.0, 1.0, None, &grid, &tol), 1.0, max_relative = 1e-10);
        assert!(lift_unity(&g, &v, 0.0).is_err());
    }

    #[test]
    fn morrey_to_lebesgue_examples() {
        let v = RnWeight::radial(2, WeightExpr::one());
        let u = morrey_to_lebesgue(&v, &w("(1+t)^-2"), 1.0).unwrap();
        assert_relative_eq!(u.radial.eval(3.0), 0.25, max_relative = 1e-14);
        let v = RnWeight::radial(1, w("t^1"));
        let u = morrey_to_lebesgue(&v, &w("exp(-1*t)"), 1.0).unwrap();
        assert_relative_eq!(u.radial.eval(2.0), 2.0 * (-2f64).exp(), max_relative = 1e-14);
        assert_eq!(
            morrey_to_lebesgue(&v, &w("1"), 1.0).unwrap_err(),
            ReductionError::Degenerate
        );
        let u = morrey_to_lebesgue(&v, &w("(1+t)^-1"), 2.0).unwrap();
        assert_relative_eq!(u.radial.eval(1.0), 0.5f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn complementary_power_laws() {
        let (n, p, q, alpha, beta) = (3usize, 1.5, 2.5, 0.7, -1.3);
        let v = RnWeight::radial(n, WeightExpr::power(alpha));
        let (vt, wt) = complementary_transform(&v, &WeightExpr::power(beta), p, q).unwrap();
        for y in [0.2, 1.0, 4.5] {
            let a = -alpha - 2.0 * n as f64 / p;
            assert_relative_eq!(vt.radial.eval(y), y.powf(a), max_relative = 1e-12);
            assert_relative_eq!(wt.eval(y), y.powf(-beta - 2.0 / q), max_relative = 1e-12);
        }
        let (vv, ww) = complementary_transform(&vt, &wt, p, q).unwrap();
        for y in [0.2, 1.0, 4.5] {
            assert_relative_eq!(vv.radial.eval(y), y.powf(alpha), max_relative = 1e-12);
            assert_relative_eq!(ww.eval(y), y.powf(beta), max_relative = 1e-12);
        }
        assert!(complementary_transform(&v, &w("log(e+t)^1"), p, q).is_err());
    }

    #[test]
    fn fubini_identity() {
        let g = RadialTestFunction::new(vec![0.5, 1.0, 3.0], vec![2.0, 0.5]).unwrap();
        let (l, r) = fubini_sides(&g, &w("(1+t)^-3"), &Tolerance::default());
        assert_relative_eq!(l, r, max_relative = 1e-8);
    }
}
