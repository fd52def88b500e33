//! One pass/fail line per acceptance criterion. Exits nonzero if any fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use morrey_core::functionals::{
    classify, CaseTag, EvalConfig, ExponentTable, ExponentVariant, Functionals, SuspectExponent,
};
use morrey_core::oracle::{
    best_constant_search, verify_equivalence, widening_bounds, RadialTestFunction, SearchConfig,
};
use morrey_core::quadrature::{integrate_weighted, Tolerance};
use morrey_core::reduction::{
    complementary_transform, fubini_sides, lift_subunity, lift_unity, reduce_subunity, reduce_unity,
};
use morrey_core::weights::{
    AngularWeight, ExponentQuad, Factor, Piece, Product, RnWeight, SphereGrid, WeightExpr,
};
use morrey_core::Embedding;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

const QUAD_REL: f64 = 1e-8;
const QUAD_CASES: usize = 200;
const QUAD_BUDGET: Duration = Duration::from_secs(5);

const LIFT_REL: f64 = 1e-6;
const LIFT_CASES: usize = 50;
const LIFT_BUDGET: Duration = Duration::from_secs(30);

const BOUND_CASES: usize = 20;
const BOUND_ROUNDOFF: f64 = 1e-9;
const BOUND_BUDGET: Duration = Duration::from_secs(10);

const SLACK: f64 = 10.0;
const ANCHOR_REL: f64 = 1e-6;
const EQUIV_BUDGET: Duration = Duration::from_secs(600);

const DIVERGENCE_THRESHOLD: f64 = 1e3;
const WIDENING_DECADES: [f64; 3] = [1.0, 2.0, 3.0];
const DIVERGENCE_BUDGET: Duration = Duration::from_secs(120);

const AUDIT_MIN_SCENARIOS: usize = 5;

const LEBESGUE_REL: f64 = 0.02;
const LEBESGUE_BUDGET: Duration = Duration::from_secs(60);

const TRANSFORM_REL: f64 = 1e-12;
const FUBINI_REL: f64 = 1e-8;

const HOMOGENEITY_REL: f64 = 1e-6;

fn w(s: &str) -> WeightExpr {
    WeightExpr::parse(s).unwrap()
}

fn quad(p1: f64, p2: f64, q1: f64, q2: f64) -> ExponentQuad {
    ExponentQuad::new(p1, p2, q1, q2).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs())
    }
}

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: u8, ok: bool, elapsed: Duration, what: &str) {
        if !ok {
            self.failed += 1;
        }
        println!(
            "criterion {id}: {} [{:.2}s] {what}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
}

// Weight families with closed-form integrals: (weight, power, a, b, exact).
fn golden_integral(rng: &mut ChaCha8Rng) -> (WeightExpr, f64, f64, f64, f64) {
    let c: f64 = rng.random_range(0.1..10.0);
    let infinite = rng.random_bool(0.5);
    match rng.random_range(0..7) {
        0 => {
            let a = rng.random_range(-0.9..3.0);
            let r = rng.random_range(0.5..2.0);
            let (lo, hi): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(1.0..50.0));
            let e = a * r + 1.0;
            let exact = c.powf(r) * (hi.powf(e) - lo.powf(e)) / e;
            (WeightExpr::from_factors(vec![Factor::Const(c), Factor::Power(a)]), r, lo, hi, exact)
        }
        1 => {
            let b = rng.random_range(-4.0..-1.2);
            let lo = rng.random_range(0.0..5.0);
            let hi = if infinite { f64::INFINITY } else { lo + rng.random_range(0.5..100.0) };
            let e = b + 1.0;
            let exact = c * ((1.0 + hi).powf(e) - (1.0 + lo).powf(e)) / e;
            (WeightExpr::from_factors(vec![Factor::Const(c), Factor::OnePlus(b)]), 1.0, lo, hi, exact)
        }
        2 => {
            let d = rng.random_range(0.05..20.0);
            let lo = rng.random_range(0.0..3.0);
            let hi = if infinite { f64::INFINITY } else { lo + rng.random_range(0.1..10.0) };
            let exact = c * ((-d * lo).exp() - (-d * hi).exp()) / d;
            (WeightExpr::from_factors(vec![Factor::Const(c), Factor::Exp(d)]), 1.0, lo, hi, exact)
        }
        3 => {
            // (t/(1+t))^{a+1}/(a+1) is a primitive of t^a (1+t)^{-a-2}
            let a = rng.random_range(-0.8..3.0);
            let hi = if infinite { f64::INFINITY } else { rng.random_range(0.1..100.0) };
            let x = if hi.is_infinite() { 1.0 } else { hi / (1.0 + hi) };
            let exact = x.powf(a + 1.0) / (a + 1.0);
            (WeightExpr::from_factors(vec![Factor::Power(a), Factor::OnePlus(-a - 2.0)]), 1.0, 0.0, hi, exact)
        }
        4 => {
            let d = rng.random_range(0.1..10.0);
            let hi = if infinite { f64::INFINITY } else { rng.random_range(0.1..100.0) };
            let exact = c * (-d / hi).exp() / d;
            (
                WeightExpr::from_factors(vec![Factor::Const(c), Factor::Power(-2.0), Factor::ExpInv(d)]),
                1.0,
                0.0,
                hi,
                exact,
            )
        }
        5 => {
            let d = rng.random_range(0.1..10.0);
            let lo = rng.random_range(0.0..2.0);
            let hi = if infinite { f64::INFINITY } else { lo + rng.random_range(0.1..20.0) };
            let prim = |t: f64| if t.is_infinite() { 0.0 } else { -(t / d + 1.0 / (d * d)) * (-d * t).exp() };
            let exact = c * (prim(hi) - prim(lo));
            (
                WeightExpr::from_factors(vec![Factor::Const(c), Factor::Power(1.0), Factor::Exp(d)]),
                1.0,
                lo,
                hi,
                exact,
            )
        }
        _ => {
            let a = rng.random_range(-0.9..2.0);
            let b = rng.random_range(-4.0..-1.2);
            let c2 = rng.random_range(0.1..10.0);
            let k = rng.random_range(0.5..5.0);
            let pieces = vec![
                Piece {
                    lo: 0.0,
                    hi: k,
                    body: Product::new(vec![Factor::Const(c), Factor::Power(a)]),
                },
                Piece {
                    lo: k,
                    hi: f64::INFINITY,
                    body: Product::new(vec![Factor::Const(c2), Factor::Power(b)]),
                },
            ];
            let exact = c * k.powf(a + 1.0) / (a + 1.0) + c2 * k.powf(b + 1.0) / (-b - 1.0);
            (WeightExpr::piecewise(pieces).unwrap(), 1.0, 0.0, f64::INFINITY, exact)
        }
    }
}

fn criterion_quadrature(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let tol = Tolerance::default();
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for _ in 0..QUAD_CASES {
        let (wt, r, a, b, exact) = golden_integral(&mut rng);
        let err = match integrate_weighted(&wt, r, a, b, &tol) {
            Ok(q) => rel(q.value, exact),
            Err(_) => f64::INFINITY,
        };
        if !(err <= QUAD_REL) {
            bad += 1;
        }
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    report.line(
        1,
        bad == 0 && elapsed < QUAD_BUDGET,
        elapsed,
        &format!("{QUAD_CASES} closed-form integrals, worst rel err {worst:.2e} (tol {QUAD_REL:.0e}), {bad} over"),
    );
}

fn random_profile(rng: &mut ChaCha8Rng) -> RadialTestFunction {
    let cells = rng.random_range(1..5);
    let mut knots = vec![rng.random_range(0.01..1.0)];
    let mut values = Vec::new();
    for i in 0..cells {
        let last = *knots.last().unwrap();
        knots.push(last * rng.random_range(1.2..4.0));
        values.push(if i == 0 { rng.random_range(0.1..2.0) } else { rng.random_range(0.0..2.0) });
    }
    RadialTestFunction::new(knots, values).unwrap()
}

fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> Arc<SphereGrid> {
    let resolution = match n {
        1 => 1,
        2 => rng.random_range(8..33),
        _ => rng.random_range(3..7),
    };
    Arc::new(SphereGrid::new(n, resolution).unwrap())
}

fn random_radial(rng: &mut ChaCha8Rng) -> WeightExpr {
    let a = rng.random_range(-0.5..1.0);
    let b = rng.random_range(-2.0..1.0);
    WeightExpr::from_factors(vec![Factor::Power(a), Factor::OnePlus(b)])
}

fn criterion_lift(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let tol = Tolerance::default();
    let mut worst: f64 = 0.0;
    for _ in 0..LIFT_CASES {
        let n = rng.random_range(1..4);
        let grid = random_grid(&mut rng, n);
        let values: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.2..3.0)).collect();
        let angular = AngularWeight::tabulated(grid.clone(), values).unwrap();
        let v = RnWeight::new(n, random_radial(&mut rng), angular).unwrap();
        let p = rng.random_range(0.1..0.9);
        let g = random_profile(&mut rng);
        let k = g.knots();
        let t = rng.random_range(k[0]..k[k.len() - 1] * 1.5);
        let f = lift_subunity(&g, &v, p).unwrap();

        let mass = f.ball_integral(t, 1.0, None, &grid, &tol);
        let vt = reduce_subunity(&v, p).unwrap();
        let weighted = f.ball_integral(t, p, Some(&v), &grid, &tol);
        let reduced: f64 = g
            .cells()
            .filter(|(lo, _, val)| *lo < t && *val > 0.0)
            .map(|(lo, hi, val)| val.powf(p) * integrate_weighted(&vt, 1.0, lo, hi.min(t), &tol).unwrap().value)
            .sum();
        worst = worst.max(rel(mass, g.primitive(t))).max(rel(weighted, reduced));
    }
    let elapsed = start.elapsed();
    report.line(
        2,
        worst <= LIFT_REL && elapsed < LIFT_BUDGET,
        elapsed,
        &format!("{LIFT_CASES} lifted vs reduced ball integrals, n in 1..=3, worst rel err {worst:.2e} (tol {LIFT_REL:.0e})"),
    );
}

fn criterion_bound(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let tol = Tolerance::default();
    let mut ok = true;
    let mut span = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..BOUND_CASES {
        let n = rng.random_range(2..4);
        let grid = random_grid(&mut rng, n);
        let (lo, hi) = (rng.random_range(0.2..2.0), rng.random_range(0.2..2.0));
        let axis = rng.random_range(0..n);
        let cut = rng.random_range(-0.8..0.8);
        let angular = AngularWeight::from_fn(grid.clone(), |s| if s[axis] > cut { hi } else { lo }).unwrap();
        let sup = angular.sup();
        let v = RnWeight::new(n, random_radial(&mut rng), angular).unwrap();
        let eps = rng.random_range(1e-3..0.5) * sup;
        let g = random_profile(&mut rng);
        let t = *g.knots().last().unwrap();
        let f = match lift_unity(&g, &v, eps) {
            Ok(f) => f,
            Err(_) => {
                ok = false;
                continue;
            }
        };
        let lifted = f.ball_integral(t, 1.0, Some(&v), &grid, &tol);
        let vt = reduce_unity(&v);
        let reduced: f64 = g
            .cells()
            .filter(|(_, _, val)| *val > 0.0)
            .map(|(a, b, val)| val * integrate_weighted(&vt, 1.0, a, b, &tol).unwrap().value)
            .sum();
        let ratio = lifted / reduced;
        span = (span.0.min(ratio), span.1.max(ratio));
        ok &= ratio >= 1.0 - 2.0 * eps / sup - BOUND_ROUNDOFF && ratio <= 1.0 + BOUND_ROUNDOFF;
    }
    let elapsed = start.elapsed();
    report.line(
        3,
        ok && elapsed < BOUND_BUDGET,
        elapsed,
        &format!(
            "{BOUND_CASES} two-level angular weights, ratio in [{:.6}, {:.6}] within [1-2eps/sup a, 1] (roundoff {BOUND_ROUNDOFF:.0e})",
            span.0, span.1
        ),
    );
}

struct Scenario {
    name: String,
    emb: Embedding,
}

fn scenario(name: &str, n: usize, e: ExponentQuad, v1: &str, v2: &str, w1: &str, w2: &str) -> Scenario {
    Scenario {
        name: format!("{}/{name}/n={n}", classify(&e)),
        emb: Embedding::radial(n, e, w(v1), w(v2), w(w1), w(w2)),
    }
}

fn tag_exponents(tag: CaseTag) -> ExponentQuad {
    match tag {
        CaseTag::Ai => quad(2.0, 1.0, 1.0, 2.0),
        CaseTag::Aii => quad(4.0, 1.0, 1.0, 2.0),
        CaseTag::Bi => quad(2.0, 1.0, 2.0, 3.0),
        CaseTag::Bii => quad(2.0, 1.0, 4.0, 3.0),
        CaseTag::Biii => quad(4.0, 1.0, 2.0, 3.0),
        CaseTag::Biv => quad(4.0, 1.0, 4.0, 2.0),
        CaseTag::C => quad(1.0, 1.0, 1.0, 2.0),
        CaseTag::Di => quad(1.0, 1.0, 2.0, 3.0),
        CaseTag::Dii => quad(1.0, 1.0, 3.0, 2.0),
    }
}

// Exponential tail, power tail and a non-constant source weight for each tag.
fn equivalence_scenarios(tag: CaseTag) -> Vec<Scenario> {
    let e = tag_exponents(tag);
    let pow_n = match tag {
        CaseTag::Bii | CaseTag::Biii | CaseTag::Biv => 1,
        _ => 2,
    };
    // with w₂ = (1+t)^{-3} the I₉ integrand of this case decays like 1/t
    let pow_w2 = if tag == CaseTag::Biv { "(1+t)^-4" } else { "(1+t)^-3" };
    vec![
        scenario("exp", 1, e, "1", "1", "exp(-1*t)", "exp(-2*t)"),
        scenario("pow", pow_n, e, "1", "1", "(1+t)^-2", pow_w2),
        scenario("expv", 1, e, "(1+t)^0.5", "1", "exp(-1*t)", "exp(-1*t)"),
    ]
}

struct Checked {
    name: String,
    tag: CaseTag,
    i: f64,
    l: f64,
    passed: bool,
}

fn check_equivalence(s: &Scenario, table: ExponentTable, lower: Option<f64>) -> Checked {
    let tol = Tolerance::default();
    let tag = classify(&s.emb.exps).tag().unwrap();
    let est = Functionals::new(&s.emb, table, EvalConfig::default()).unwrap().estimate(tag).unwrap();
    let l = lower.unwrap_or_else(|| {
        best_constant_search(&s.emb, &SearchConfig::default(), &est.hints(), &tol)
            .unwrap()
            .lower_bound
    });
    let passed = verify_equivalence(est.value, l, SLACK, &[], DIVERGENCE_THRESHOLD).passed();
    Checked {
        name: s.name.clone(),
        tag,
        i: est.value,
        l,
        passed,
    }
}

fn criterion_equivalence(report: &mut Report) -> Vec<Checked> {
    let start = Instant::now();
    let cfg = EvalConfig::default();
    let mut ok = true;

    let anchor10 = scenario("anchor", 1, quad(1.0, 1.0, 1.0, 2.0), "1", "1", "(1+t)^-2", "(1+t)^-2");
    let i10 = Functionals::new(&anchor10.emb, ExponentTable::default(), cfg).unwrap().eval(10).unwrap().value;
    let anchor1 = scenario("anchor", 1, quad(2.0, 1.0, 1.0, 2.0), "1", "1", "exp(-1*t)", "exp(-1*t)");
    let i1 = Functionals::new(&anchor1.emb, ExponentTable::default(), cfg).unwrap().eval(1).unwrap().value;
    let e10 = rel(i10, 3f64.powf(-0.5));
    let e1 = rel(i1, 0.5f64.sqrt() * (-0.5f64).exp());
    ok &= e10 <= ANCHOR_REL && e1 <= ANCHOR_REL;

    let mut checked = vec![check_equivalence(&anchor10, ExponentTable::default(), None), check_equivalence(&anchor1, ExponentTable::default(), None)];
    for tag in CaseTag::ALL {
        for s in equivalence_scenarios(tag) {
            checked.push(check_equivalence(&s, ExponentTable::default(), None));
        }
    }
    let mut worst: (f64, f64) = (f64::INFINITY, 0.0);
    for c in &checked {
        println!("    {:24} I={:.4e} L={:.4e} I/L={:.3} {}", c.name, c.i, c.l, c.i / c.l, if c.passed { "ok" } else { "FAIL" });
        worst = (worst.0.min(c.i / c.l), worst.1.max(c.i / c.l));
    }
    let mut short = Vec::new();
    for tag in CaseTag::ALL {
        let n = checked.iter().filter(|c| c.tag == tag && c.passed).count();
        if n < 3 {
            short.push(format!("{tag}:{n}"));
        }
    }
    ok &= short.is_empty();
    let elapsed = start.elapsed();
    report.line(
        4,
        ok && elapsed < EQUIV_BUDGET,
        elapsed,
        &format!(
            "{} scenarios, I/L in [{:.3}, {:.3}] (kappa {SLACK}); anchors I10 rel {e10:.1e}, I1 rel {e1:.1e} (tol {ANCHOR_REL:.0e}); tags short of 3 passes: {:?}",
            checked.len(),
            worst.0,
            worst.1,
            short
        ),
    );
    checked
}

fn criterion_divergence(report: &mut Report) {
    let start = Instant::now();
    let tol = Tolerance::default();
    let mut ok = true;
    let mut lines = Vec::new();
    for tag in CaseTag::ALL {
        let s = scenario("t^3", 1, tag_exponents(tag), "1", "t^3", "(1+t)^-2", "(1+t)^-3");
        let est = Functionals::new(&s.emb, ExponentTable::default(), EvalConfig::default())
            .unwrap()
            .estimate(tag)
            .unwrap();
        let widened: Vec<f64> = widening_bounds(&s.emb, &SearchConfig::default(), &WIDENING_DECADES, &tol)
            .into_iter()
            .map(|(_, l)| l)
            .collect();
        let v = verify_equivalence(est.value, 0.0, SLACK, &widened, DIVERGENCE_THRESHOLD);
        let witness = widened.iter().copied().fold(0.0, f64::max);
        ok &= est.value.is_infinite() && matches!(v, morrey_core::oracle::Verdict::PassDivergent { .. });
        lines.push(format!("{tag}:{witness:.1e}"));
    }
    let elapsed = start.elapsed();
    report.line(
        5,
        ok && elapsed < DIVERGENCE_BUDGET,
        elapsed,
        &format!("I=inf per tag, widened witnesses over {WIDENING_DECADES:?} decades (threshold {DIVERGENCE_THRESHOLD:.0e}): {}", lines.join(" ")),
    );
}

fn criterion_typo_audit(report: &mut Report, checked: &[Checked]) {
    let start = Instant::now();
    let lower = |name: &str| checked.iter().find(|c| c.name == name).map(|c| c.l);
    let run = |tags: &[CaseTag], printed: ExponentTable| -> (usize, usize, usize) {
        let mut total = 0;
        let (mut corrected_ok, mut printed_ok) = (0, 0);
        for &tag in tags {
            for s in equivalence_scenarios(tag) {
                let l = lower(&s.name);
                total += 1;
                corrected_ok += check_equivalence(&s, ExponentTable::default(), l).passed as usize;
                let p = check_equivalence(&s, printed.clone(), l);
                println!("    printed {:20} I={:.4e} I/L={:.3}", p.name, p.i, p.i / p.l);
                printed_ok += p.passed as usize;
            }
        }
        (total, corrected_ok, printed_ok)
    };
    let i4 = run(
        &[CaseTag::Bi, CaseTag::Biii],
        ExponentTable::default().with(SuspectExponent::I4Outer, ExponentVariant::Printed),
    );
    let i9 = run(
        &[CaseTag::Biv],
        ExponentTable::default()
            .with(SuspectExponent::I9Weight, ExponentVariant::Printed)
            .with(SuspectExponent::I9Power, ExponentVariant::Printed),
    );
    let elapsed = start.elapsed();
    report.line(
        6,
        i4.0 + i9.0 >= AUDIT_MIN_SCENARIOS,
        elapsed,
        &format!(
            "I4 outer: corrected {}/{} pass, printed {}/{} pass; I9 pair: corrected {}/{} pass, printed {}/{} pass",
            i4.1, i4.0, i4.2, i4.0, i9.1, i9.0, i9.2, i9.0
        ),
    );
}

type LebesgueCase = (usize, f64, &'static str, &'static str, &'static str, &'static str, Box<dyn Fn(f64) -> f64>);

// With p₁ = q₁ and p₂ = q₂ the spaces are weighted Lebesgue spaces with
// u(t) = v(t) (∫_t^∞ w^p)^{1/p}; for p₁ = p₂ the norm is esssup u₂/u₁.
fn criterion_lebesgue(report: &mut Report) {
    let start = Instant::now();
    let tol = Tolerance::default();
    let cases: [LebesgueCase; 3] = [
        (
            1,
            2.0,
            "1",
            "t^1",
            "(1+t)^-1",
            "(1+t)^-3",
            Box::new(|t: f64| t * (1.0 + t).powf(-2.5) / 5f64.sqrt() / (1.0 + t).powf(-0.5)),
        ),
        (
            2,
            1.0,
            "1",
            "t^2",
            "(1+t)^-2",
            "(1+t)^-4",
            Box::new(|t: f64| t * t * (1.0 + t).powi(-3) / 3.0 * (1.0 + t)),
        ),
        (
            1,
            2.0,
            "(1+t)^1",
            "t^0.5",
            "(1+t)^-2",
            "(1+t)^-2",
            Box::new(|t: f64| t.sqrt() / (1.0 + t)),
        ),
    ];
    let cfg = SearchConfig::default();
    let mut ok = true;
    let mut lines = Vec::new();
    for (n, p, v1, v2, w1, w2, ratio) in cases {
        let e = quad(p, p, p, p);
        let emb = Embedding::radial(n, e, w(v1), w(v2), w(w1), w(w2));
        let exact = (0..=80_000)
            .map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 80_000.0))
            .map(&ratio)
            .fold(0.0, f64::max);
        let l = best_constant_search(&emb, &cfg, &[], &tol).unwrap().lower_bound;
        let err = rel(l, exact);
        ok &= err <= LEBESGUE_REL && l <= exact * (1.0 + 1e-9);
        lines.push(format!("{l:.5}/{exact:.5}"));
    }
    let elapsed = start.elapsed();
    report.line(
        7,
        ok && elapsed < LEBESGUE_BUDGET,
        elapsed,
        &format!("search bound vs esssup u2/u1 (tol {LEBESGUE_REL}): {}", lines.join(" ")),
    );
}

fn criterion_transforms(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 8);
    let tol = Tolerance::default();
    let (mut involution, mut power, mut fubini): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..100 {
        let n = rng.random_range(1..4);
        let (p, q) = (rng.random_range(0.5..4.0), rng.random_range(0.5..4.0));
        let (alpha, beta) = (rng.random_range(-2.0..2.0), rng.random_range(-3.0..3.0));
        let v = RnWeight::radial(n, WeightExpr::power(alpha));
        let wt = WeightExpr::power(beta);
        let (v1, w1) = complementary_transform(&v, &wt, p, q).unwrap();
        let (v2, w2) = complementary_transform(&v1, &w1, p, q).unwrap();
        let y = 10f64.powf(rng.random_range(-3.0..3.0));
        power = power
            .max(rel(v1.radial.eval(y), y.powf(-alpha - 2.0 * n as f64 / p)))
            .max(rel(w1.eval(y), y.powf(-beta - 2.0 / q)));
        involution = involution.max(rel(v2.radial.eval(y), v.radial.eval(y))).max(rel(w2.eval(y), wt.eval(y)));

        let v = RnWeight::radial(n, random_radial(&mut rng));
        let wt = WeightExpr::from_factors(vec![Factor::OnePlus(rng.random_range(-3.0..0.0)), Factor::Exp(rng.random_range(0.0..2.0))]);
        let (v1, w1) = complementary_transform(&v, &wt, p, q).unwrap();
        let (v2, w2) = complementary_transform(&v1, &w1, p, q).unwrap();
        involution = involution.max(rel(v2.radial.eval(y), v.radial.eval(y))).max(rel(w2.eval(y), wt.eval(y)));

        let g = random_profile(&mut rng);
        let b = rng.random_range(1.5..4.0);
        let (l, r) = fubini_sides(&g, &WeightExpr::from_factors(vec![Factor::OnePlus(-b)]), &tol);
        fubini = fubini.max(rel(l, r));
    }
    let elapsed = start.elapsed();
    report.line(
        8,
        involution <= TRANSFORM_REL && power <= TRANSFORM_REL && fubini <= FUBINI_REL,
        elapsed,
        &format!(
            "involution {involution:.1e}, power laws {power:.1e} (tol {TRANSFORM_REL:.0e}); Fubini {fubini:.1e} (tol {FUBINI_REL:.0e})"
        ),
    );
}

fn criterion_homogeneity(report: &mut Report) {
    let start = Instant::now();
    let cfg = EvalConfig::default();
    let (lambda, mu, nu) = (2.5, 0.4, 3.0);
    let mut worst: f64 = 0.0;
    let mut covered = std::collections::BTreeSet::new();
    for tag in CaseTag::ALL {
        let s = scenario("exp", 1, tag_exponents(tag), "1", "(1+t)^0.5", "exp(-1*t)", "exp(-2*t)");
        let f = Functionals::new(&s.emb, ExponentTable::default(), cfg).unwrap();
        let g = Functionals::new(&s.emb.scaled(lambda, mu, nu), ExponentTable::default(), cfg).unwrap();
        for &k in tag.components() {
            let (a, b) = (f.eval(k).unwrap().value, g.eval(k).unwrap().value);
            let err = if a.is_finite() && a > 0.0 { rel(b, a * lambda * nu / mu) } else { f64::INFINITY };
            worst = worst.max(err);
            covered.insert(k);
        }
    }
    let elapsed = start.elapsed();
    report.line(
        9,
        worst <= HOMOGENEITY_REL && covered.len() == 14,
        elapsed,
        &format!(
            "I1..I14 ({} covered) under v2*{lambda}, w1*{mu}, w2*{nu}: worst rel err {worst:.1e} (tol {HOMOGENEITY_REL:.0e})",
            covered.len()
        ),
    );
}

fn main() {
    let mut report = Report { failed: 0 };
    criterion_quadrature(&mut report);
    criterion_lift(&mut report);
    criterion_bound(&mut report);
    let checked = criterion_equivalence(&mut report);
    criterion_divergence(&mut report);
    criterion_typo_audit(&mut report, &checked);
    criterion_lebesgue(&mut report);
    criterion_transforms(&mut report);
    criterion_homogeneity(&mut report);
    println!("acceptance: {} of 9 criteria failed", report.failed);
    if report.failed > 0 {
        std::process::exit(1);
    }
}
