//! Brute-force lower bounds for the embedding norm.
//!
//! The norm is the supremum of the Rayleigh quotient `‖f‖_{LM₂} / ‖f‖_{LM₁}`.
//! For separable weights it suffices to take radial profiles in the reduced
//! one-dimensional problem, so the oracle maximizes over piecewise-constant
//! `g ≥ 0` on log-spaced knots. Each evaluation is a weighted sum over a
//! precomputed Gauss–Legendre mesh; the inner integrals are exact partial sums.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embedding;
use crate::par::{self, Execution};
use crate::quadrature::{self, gauss_legendre, Tolerance};
use crate::reduction::{sphere_functionals, ReducedProblem, ReductionError};
use crate::weights::{RnWeight, WeightExpr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("every candidate produced an undefined quotient")]
    SearchFailure,
    #[error(transparent)]
    Reduction(#[from] ReductionError),
}

/// Piecewise-constant `g ≥ 0`, equal to `values[j]` on `(knots[j], knots[j+1])`
/// and zero outside `(knots[0], knots[K])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialTestFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl RadialTestFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self, OracleError> {
        if knots.len() != values.len() + 1 || values.is_empty() {
            return Err(OracleError::InvalidTestFunction(format!(
                "{} knots for {} cells",
                knots.len(),
                values.len()
            )));
        }
        if !(knots[0] >= 0.0) || knots.iter().any(|k| !k.is_finite()) {
            return Err(OracleError::InvalidTestFunction("knots must be finite and non-negative".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(OracleError::InvalidTestFunction("knots must increase strictly".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(OracleError::InvalidTestFunction("values must be finite and non-negative".into()));
        }
        Ok(Self { knots, values })
    }

    /// `χ_{(a,b)}`.
    pub fn bump(a: f64, b: f64) -> Result<Self, OracleError> {
        Self::new(vec![a, b], vec![1.0])
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(j, v)| (self.knots[j], self.knots[j + 1], *v))
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.knots[0] || t >= self.knots[self.knots.len() - 1] {
            return 0.0;
        }
        let j = self.knots.partition_point(|k| *k <= t) - 1;
        self.values[j]
    }

    /// `∫₀ᵗ g`.
    pub fn primitive(&self, t: f64) -> f64 {
        self.cells()
            .map(|(lo, hi, v)| if t <= lo { 0.0 } else { v * (hi.min(t) - lo) })
            .sum()
    }

    pub fn is_trivial(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            knots: self.knots.clone(),
            values: self.values.iter().map(|v| v * lambda).collect(),
        }
    }
}

/// `n` log-spaced knots' worth of cells on `[lo, hi]`.
pub fn log_knots(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..=cells)
        .map(|k| (a + (b - a) * k as f64 / cells as f64).exp())
        .collect()
}

/// `(∫₀^∞ (∫₀ᵗ g^p ṽ)^{q/p} w(t) dt)^{1/q}` by nested adaptive quadrature.
pub fn lm_norm(g: &RadialTestFunction, vtilde: &WeightExpr, w: &WeightExpr, p: f64, q: f64, tol: &Tolerance) -> f64 {
    let inner = |t: f64| -> f64 {
        g.cells()
            .filter(|(lo, _, v)| *v > 0.0 && t > *lo)
            .map(|(lo, hi, v)| {
                v.powf(p)
                    * quadrature::integrate_weighted(vtilde, 1.0, lo, hi.min(t), tol)
                        .map(|r| r.value)
                        .unwrap_or(f64::NAN)
            })
            .sum()
    };
    let e = q / p;
    let mut edges = g.knots().to_vec();
    if edges[0] > 0.0 {
        edges.insert(0, 0.0);
    }
    let last = *edges.last().unwrap_or(&0.0);
    let mut total = 0.0;
    for s in edges.windows(2) {
        total += quadrature::integrate_fn(|t| inner(t).powf(e) * w.eval(t), s[0], s[1], tol).value;
    }
    let h = inner(last);
    if h > 0.0 {
        let tail = quadrature::integrate_weighted(w, 1.0, last, f64::INFINITY, tol)
            .map(|r| r.value)
            .unwrap_or(f64::NAN);
        total += h.powf(e) * tail;
    }
    total.powf(1.0 / q)
}

/// `ρ^p · ∫_S a^p dσ · t^{n-1}`: the density of `∫_{B(0,t)} f^p v^p` for `f = g(|x|)`.
fn radial_density(v: &RnWeight, p: f64) -> WeightExpr {
    let (sphere, _) = sphere_functionals(&v.angular, v.dim, p);
    let mut d = v.radial.pow(p).scale(sphere);
    if v.dim > 1 {
        d = d.mul_power(v.dim as f64 - 1.0);
    }
    d
}

/// `‖g(|·|)‖_{LM_{p,q}(v,w)}` on `ℝⁿ`.
pub fn lm_norm_radial(g: &RadialTestFunction, v: &RnWeight, w: &WeightExpr, p: f64, q: f64, tol: &Tolerance) -> f64 {
    lm_norm(g, &radial_density(v, p), &w.pow(q), p, q, tol)
}

/// `‖g(|·|)‖_{∁LM_{p,q}(v,w)}`: the ball `B(0,t)` replaced by its complement.
pub fn complementary_norm_radial(
    g: &RadialTestFunction,
    v: &RnWeight,
    w: &WeightExpr,
    p: f64,
    q: f64,
    tol: &Tolerance,
) -> f64 {
    let dens = radial_density(v, p);
    let wq = w.pow(q);
    let outer = |t: f64| -> f64 {
        g.cells()
            .filter(|(_, hi, v)| *v > 0.0 && t < *hi)
            .map(|(lo, hi, v)| {
                v.powf(p)
                    * quadrature::integrate_weighted(&dens, 1.0, lo.max(t), hi, tol)
                        .map(|r| r.value)
                        .unwrap_or(f64::NAN)
            })
            .sum()
    };
    let e = q / p;
    let mut edges = g.knots().to_vec();
    let first = edges[0];
    edges.insert(0, 0.0);
    let mut total = 0.0;
    for s in edges.windows(2) {
        if s[0] >= s[1] {
            continue;
        }
        if s[1] <= first {
            let h = outer(first);
            total += h.powf(e)
                * quadrature::integrate_weighted(&wq, 1.0, s[0], s[1], tol)
                    .map(|r| r.value)
                    .unwrap_or(f64::NAN);
            continue;
        }
        total += quadrature::integrate_fn(|t| outer(t).powf(e) * wq.eval(t), s[0], s[1], tol).value;
    }
    total.powf(1.0 / q)
}

/// Precomputed quadrature mesh for fast Rayleigh quotients on fixed knots.
#[derive(Debug, Clone)]
pub struct RayleighMesh {
    knots: Vec<f64>,
    m: usize,
    /// per node: `t - t_{j-1}`
    ds: Vec<f64>,
    /// per node: `∫_{t_{j-1}}^{t} ṽ`
    dv: Vec<f64>,
    /// per node: quadrature weight times `w(t)` / `u(t)`
    om1: Vec<f64>,
    om2: Vec<f64>,
    cell_len: Vec<f64>,
    cell_v: Vec<f64>,
    tail_w: f64,
    tail_u: f64,
    p: f64,
    q: f64,
    theta: f64,
    p1: f64,
}

impl RayleighMesh {
    pub fn new(problem: &ReducedProblem, knots: &[f64], m: usize, tol: &Tolerance) -> Result<Self, OracleError> {
        if knots.len() < 2 || knots.windows(2).any(|w| !(w[0] < w[1])) || !(knots[0] > 0.0) {
            return Err(OracleError::InvalidTestFunction("mesh knots must be positive and increasing".into()));
        }
        let (y, gw) = gauss_legendre(m);
        let k = knots.len() - 1;
        let mut ds = Vec::with_capacity(k * m);
        let mut dv = Vec::with_capacity(k * m);
        let mut om1 = Vec::with_capacity(k * m);
        let mut om2 = Vec::with_capacity(k * m);
        let mut cell_len = Vec::with_capacity(k);
        let mut cell_v = Vec::with_capacity(k);
        let integral = |a: f64, b: f64| {
            quadrature::integrate_weighted(&problem.vtilde, 1.0, a, b, tol)
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
        };
        for j in 0..k {
            let (a, b) = (knots[j], knots[j + 1]);
            let len = b - a;
            // t = a + len·s², s ∈ (0,1): smooths the power-type start of each cell
            let mut prev_t = a;
            let mut acc = 0.0;
            for i in 0..m {
                let s = 0.5 * (y[i] + 1.0);
                let t = a + len * s * s;
                let jac = 0.5 * gw[i] * 2.0 * len * s;
                acc += integral(prev_t, t);
                prev_t = t;
                ds.push(t - a);
                dv.push(acc);
                om1.push(jac * problem.w.eval(t));
                om2.push(jac * problem.u.eval(t));
            }
            cell_len.push(len);
            cell_v.push(acc + integral(prev_t, b));
        }
        let last = knots[k];
        let tail = |w: &WeightExpr| {
            quadrature::integrate_weighted(w, 1.0, last, f64::INFINITY, tol)
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
        };
        Ok(Self {
            knots: knots.to_vec(),
            m,
            ds,
            dv,
            om1,
            om2,
            cell_len,
            cell_v,
            tail_w: tail(&problem.w),
            tail_u: tail(&problem.u),
            p: problem.p,
            q: problem.q,
            theta: problem.theta,
            p1: problem.p1,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn cells(&self) -> usize {
        self.cell_len.len()
    }

    /// `(N₁^θ, N₂^q)` of the reduced quotient for cell values `g`.
    fn powered_norms(&self, g: &[f64]) -> (f64, f64) {
        let (mut s1, mut s2) = (0.0, 0.0);
        let (mut big_g, mut big_h) = (0.0, 0.0);
        let e2 = self.q / self.p;
        for (j, &gj) in g.iter().enumerate() {
            let base = j * self.m;
            let gp = if gj > 0.0 { gj.powf(self.p) } else { 0.0 };
            if big_g > 0.0 || gj > 0.0 {
                for i in 0..self.m {
                    let x = big_g + gj * self.ds[base + i];
                    let y = big_h + gp * self.dv[base + i];
                    if x > 0.0 {
                        s1 += self.om1[base + i] * x.powf(self.theta);
                    }
                    if y > 0.0 {
                        s2 += self.om2[base + i] * y.powf(e2);
                    }
                }
            }
            big_g += gj * self.cell_len[j];
            big_h += gp * self.cell_v[j];
        }
        if big_g > 0.0 {
            s1 += big_g.powf(self.theta) * self.tail_w;
        }
        if big_h > 0.0 {
            s2 += big_h.powf(e2) * self.tail_u;
        }
        (s1, s2)
    }

    /// `‖f‖_{LM₂}/‖f‖_{LM₁}` for the profile with cell values `g`; `None` when
    /// the denominator vanishes or is infinite.
    pub fn rayleigh(&self, g: &[f64]) -> Option<f64> {
        let (s1, s2) = self.powered_norms(g);
        if !(s1 > 0.0 && s1.is_finite()) || s2.is_nan() {
            return None;
        }
        let n1 = s1.powf(1.0 / self.theta);
        let n2 = s2.powf(1.0 / self.q);
        Some((n2 / n1).powf(1.0 / self.p1))
    }
}

/// Rayleigh quotient of a radial profile through the reduced problem.
pub fn rayleigh(g: &RadialTestFunction, embedding: &Embedding, tol: &Tolerance) -> Result<Option<f64>, OracleError> {
    let problem = embedding.reduce()?;
    let mut knots = g.knots().to_vec();
    let mut values = g.values().to_vec();
    if knots[0] == 0.0 {
        // a cell starting at 0 is split at a tiny positive knot
        let first = knots[1] * 1e-12;
        knots.insert(1, first);
        values.insert(0, values[0]);
        knots[0] = first * 1e-3;
    }
    let mesh = RayleighMesh::new(&problem, &knots, 16, tol)?;
    Ok(mesh.rayleigh(&values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Number of cells `K`.
    pub knots: usize,
    pub support_lo: f64,
    pub support_hi: f64,
    pub restarts: usize,
    pub sweeps: usize,
    pub seed: u64,
    pub slack: f64,
    /// Gauss–Legendre nodes per cell.
    pub nodes_per_cell: usize,
    /// Threshold a lower bound must exceed to witness divergence.
    pub divergence_threshold: f64,
    pub exec: Execution,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            knots: 64,
            support_lo: 1e-4,
            support_hi: 1e4,
            restarts: 4,
            sweeps: 6,
            seed: 0,
            slack: 10.0,
            nodes_per_cell: 8,
            divergence_threshold: 1e3,
            exec: Execution::Auto,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.knots < 1 || self.restarts < 1 || !(self.slack > 1.0) {
            return Err(OracleError::InvalidConfig("need K ≥ 1, R ≥ 1, κ > 1".into()));
        }
        if !(self.support_lo > 0.0 && self.support_lo < self.support_hi && self.support_hi.is_finite()) {
            return Err(OracleError::InvalidConfig("support must satisfy 0 < lo < hi < ∞".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchOutcome {
    pub lower_bound: f64,
    pub argmax: RadialTestFunction,
    pub evaluations: usize,
    pub best_restart: usize,
    pub seed: u64,
    pub rng: &'static str,
}

/// Multiplicative golden-section line search over one cell value.
fn improve_cell(mesh: &RayleighMesh, g: &mut [f64], j: usize, best: &mut f64, evals: &mut usize) {
    let current = g[j];
    let scale = g.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return;
    }
    let try_value = |g: &mut [f64], value: f64, best: &mut f64, evals: &mut usize| -> f64 {
        let old = g[j];
        g[j] = value;
        *evals += 1;
        match mesh.rayleigh(g) {
            Some(r) if r > *best => {
                *best = r;
                r
            }
            Some(r) => {
                g[j] = old;
                r
            }
            None => {
                g[j] = old;
                f64::NEG_INFINITY
            }
        }
    };
    if current > 0.0 {
        try_value(g, 0.0, best, evals);
    }
    let center = if g[j] > 0.0 { g[j].ln() } else { (scale * 1e-2).ln() };
    let (mut lo, mut hi) = (center - 6.0, center + 6.0);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let probe = |g: &mut [f64], x: f64, evals: &mut usize| -> f64 {
        let old = g[j];
        g[j] = x.exp();
        *evals += 1;
        let r = mesh.rayleigh(g).unwrap_or(f64::NEG_INFINITY);
        g[j] = old;
        r
    };
    let mut c = hi - gr * (hi - lo);
    let mut d = lo + gr * (hi - lo);
    let mut fc = probe(g, c, evals);
    let mut fd = probe(g, d, evals);
    for _ in 0..18 {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = probe(g, c, evals);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = probe(g, d, evals);
        }
    }
    let x = if fc >= fd { c } else { d };
    try_value(g, x.exp(), best, evals);
}

fn ascend(mesh: &RayleighMesh, g: &mut [f64], sweeps: usize, evals: &mut usize) -> f64 {
    let mut best = mesh.rayleigh(g).unwrap_or(f64::NEG_INFINITY);
    *evals += 1;
    for _ in 0..sweeps {
        let before = best;
        for j in 0..g.len() {
            improve_cell(mesh, g, j, &mut best, evals);
        }
        if best <= before * (1.0 + 1e-9) {
            break;
        }
    }
    best
}

/// Maximize the Rayleigh quotient over piecewise-constant profiles.
///
/// Seeds are all single bumps between knots plus bumps around the `hints`;
/// the best seeds start cyclic coordinate ascent, one per restart, with
/// restarts past the first randomly perturbed.
pub fn best_constant_search(
    embedding: &Embedding,
    cfg: &SearchConfig,
    hints: &[f64],
    tol: &Tolerance,
) -> Result<SearchOutcome, OracleError> {
    cfg.validate()?;
    let problem = embedding.reduce()?;
    let knots = log_knots(cfg.support_lo, cfg.support_hi, cfg.knots);
    let mesh = RayleighMesh::new(&problem, &knots, cfg.nodes_per_cell.max(2), tol)?;
    let k = cfg.knots;

    let mut seeds: Vec<(usize, usize)> = Vec::with_capacity(k * (k + 1) / 2);
    for a in 0..k {
        for b in a + 1..=k {
            seeds.push((a, b));
        }
    }
    for &h in hints {
        if !(h > 0.0 && h.is_finite()) {
            continue;
        }
        let idx = knots.partition_point(|t| *t <= h).clamp(1, k);
        for (a, b) in [(0, idx), (idx - 1, idx), (idx - 1, (idx + 2).min(k)), (idx.saturating_sub(3), idx)] {
            if a < b {
                seeds.push((a, b));
            }
        }
    }
    let bump = |(a, b): (usize, usize)| -> Vec<f64> { (0..k).map(|j| if j >= a && j < b { 1.0 } else { 0.0 }).collect() };
    let scored: Vec<f64> = par::map(cfg.exec, &seeds, |&s| mesh.rayleigh(&bump(s)).unwrap_or(f64::NAN));
    let mut evaluations = seeds.len();
    let mut order: Vec<usize> = (0..seeds.len()).filter(|&i| !scored[i].is_nan()).collect();
    if order.is_empty() {
        return Err(OracleError::SearchFailure);
    }
    order.sort_by(|&i, &j| scored[j].total_cmp(&scored[i]).then(i.cmp(&j)));
    if scored[order[0]] == f64::INFINITY {
        return Ok(SearchOutcome {
            lower_bound: f64::INFINITY,
            argmax: RadialTestFunction::new(knots.clone(), bump(seeds[order[0]]))?,
            evaluations,
            best_restart: 0,
            seed: cfg.seed,
            rng: "ChaCha8",
        });
    }

    let runs: Vec<(f64, Vec<f64>, usize)> = par::map_range(cfg.exec, cfg.restarts, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        let seed_idx = order[r.min(order.len() - 1)];
        let mut g = bump(seeds[seed_idx]);
        if r > 0 {
            for v in g.iter_mut() {
                if *v > 0.0 {
                    *v *= rng.random_range(-1.0f64..1.0).exp();
                } else if rng.random_bool(0.1) {
                    *v = rng.random_range(0.0f64..0.1);
                }
            }
        }
        let mut evals = 0;
        let value = ascend(&mesh, &mut g, cfg.sweeps, &mut evals);
        (value, g, evals)
    });
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        evaluations += run.2;
        if run.0 > runs[best].0 {
            best = i;
        }
    }
    let (value, g, _) = &runs[best];
    let (value, g) = if scored[order[0]] > *value {
        (scored[order[0]], bump(seeds[order[0]]))
    } else {
        (*value, g.clone())
    };
    if !value.is_finite() && value != f64::INFINITY {
        return Err(OracleError::SearchFailure);
    }
    Ok(SearchOutcome {
        lower_bound: value,
        argmax: RadialTestFunction::new(knots, g)?,
        evaluations,
        best_restart: best,
        seed: cfg.seed,
        rng: "ChaCha8",
    })
}

/// Lower bounds on widening supports `[10^{-d}, 10^{d}]`, knot density held fixed.
pub fn widening_bounds(
    embedding: &Embedding,
    cfg: &SearchConfig,
    decades: &[f64],
    tol: &Tolerance,
) -> Vec<(f64, f64)> {
    let density = cfg.knots as f64 / (cfg.support_hi / cfg.support_lo).log10();
    decades
        .iter()
        .map(|&d| {
            let c = SearchConfig {
                support_lo: 10f64.powf(-d),
                support_hi: 10f64.powf(d),
                knots: ((2.0 * d * density).round() as usize).max(4),
                restarts: cfg.restarts.min(2),
                ..*cfg
            };
            let l = best_constant_search(embedding, &c, &[], tol)
                .map(|o| o.lower_bound)
                .unwrap_or(f64::NAN);
            (d, l)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Pass { ratio: f64 },
    PassDivergent { witness: f64 },
    Fail { ratio: f64 },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        !matches!(self, Verdict::Fail { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass { .. } => "PASS",
            Verdict::PassDivergent { .. } => "PASS-divergent",
            Verdict::Fail { .. } => "FAIL",
        }
    }

    pub fn ratio(&self) -> f64 {
        match *self {
            Verdict::Pass { ratio } | Verdict::Fail { ratio } => ratio,
            Verdict::PassDivergent { .. } => f64::INFINITY,
        }
    }
}

/// Two-sided check `L/κ ≤ I ≤ κL`; for `I = ∞` the largest widened lower
/// bound must exceed `threshold`.
pub fn verify_equivalence(i_value: f64, lower: f64, slack: f64, widened: &[f64], threshold: f64) -> Verdict {
    if i_value == f64::INFINITY {
        let witness = widened.iter().copied().chain([lower]).filter(|x| !x.is_nan()).fold(f64::NEG_INFINITY, f64::max);
        return if witness > threshold {
            Verdict::PassDivergent { witness }
        } else {
            Verdict::Fail { ratio: f64::INFINITY }
        };
    }
    let ratio = i_value / lower;
    if ratio.is_finite() && ratio >= 1.0 / slack && ratio <= slack {
        Verdict::Pass { ratio }
    } else {
        Verdict::Fail { ratio }
    }
}
