//! Weight functions on `(0, ∞)` and separable weights on `ℝⁿ`.
//!
//! A [`WeightExpr`] is a product of closed-form factors, or a piecewise glue of
//! such products over finitely many breakpoints. The grammar is small on
//! purpose: powers and exponential rates compose exactly under `w ↦ w^r`,
//! products and the inversion `t ↦ 1/t`, and every factor has a known
//! asymptotic profile at `0` and `∞`.
//!
//! Text form (also the canonical serialization):
//!
//! ```text
//! factor    := number | "t^" number | "(1+t)^" number | "log(e+t)^" number
//!            | "exp(-" number "*t)" | "exp(-" number "/t)"
//! product   := factor ("*" factor)*
//! piecewise := "{" product "on" "(" a "," b ")" (";" product "on" "(" a "," b ")")* "}"
//! ```
//!
//! `exp(r*t)` without the minus sign is accepted for growing exponentials,
//! which arise from negative powers of decaying weights. The upper end of the
//! last piece is written `inf` (or `∞`).

use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("constant factor must be positive, got {value} at offset {offset}")]
    NonPositiveConstant { offset: usize, value: f64 },
    #[error("piecewise gap between {left} and {right}")]
    PiecewiseGap { left: f64, right: f64 },
    #[error("piecewise overlap between {left} and {right}")]
    PiecewiseOverlap { left: f64, right: f64 },
    #[error("piecewise pieces must start at 0 and end at infinity")]
    PiecewiseCoverage,
    #[error("degenerate piece ({lo}, {hi})")]
    DegeneratePiece { lo: f64, hi: f64 },
    #[error("weight evaluated at non-positive argument {0}")]
    NonPositiveArgument(f64),
    #[error("weight factor `{0}` is not closed under t -> 1/t")]
    NotInvertible(String),
    #[error("angular weights live on different sphere grids")]
    GridMismatch,
    #[error("angular weight values must be positive and finite")]
    NonPositiveAngular,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("unsupported dimension {0} for tabulated angular weights")]
    UnsupportedDimension(usize),
}

/// One closed-form factor of a product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Factor {
    /// `c`, with `c > 0`.
    Const(f64),
    /// `t^a`.
    Power(f64),
    /// `(1+t)^b`.
    OnePlus(f64),
    /// `log(e+t)^g`.
    Log(f64),
    /// `exp(-d t)`; `d < 0` is a growing exponential.
    Exp(f64),
    /// `exp(-d / t)`; the image of [`Factor::Exp`] under `t ↦ 1/t`.
    ExpInv(f64),
}

impl Factor {
    fn ln_eval(&self, t: f64) -> f64 {
        match *self {
            Factor::Const(c) => c.ln(),
            Factor::Power(a) => {
                if a == 0.0 {
                    0.0
                } else {
                    a * t.ln()
                }
            }
            Factor::OnePlus(b) => {
                if b == 0.0 {
                    0.0
                } else {
                    b * t.ln_1p()
                }
            }
            Factor::Log(g) => {
                if g == 0.0 {
                    0.0
                } else {
                    g * (E + t).ln().ln()
                }
            }
            Factor::Exp(d) => -d * t,
            Factor::ExpInv(d) => -d / t,
        }
    }

    /// Derivative of `ln factor` at `t`.
    fn dlog(&self, t: f64) -> f64 {
        match *self {
            Factor::Const(_) => 0.0,
            Factor::Power(a) => a / t,
            Factor::OnePlus(b) => b / (1.0 + t),
            Factor::Log(g) => g / ((E + t) * (E + t).ln()),
            Factor::Exp(d) => -d,
            Factor::ExpInv(d) => d / (t * t),
        }
    }

    fn pow(&self, r: f64) -> Factor {
        match *self {
            Factor::Const(c) => Factor::Const(c.powf(r)),
            Factor::Power(a) => Factor::Power(a * r),
            Factor::OnePlus(b) => Factor::OnePlus(b * r),
            Factor::Log(g) => Factor::Log(g * r),
            Factor::Exp(d) => Factor::Exp(d * r),
            Factor::ExpInv(d) => Factor::ExpInv(d * r),
        }
    }

    /// The factor composed with `t ↦ 1/t`, as a list of factors.
    fn inverted(&self) -> Result<Vec<Factor>, WeightError> {
        Ok(match *self {
            Factor::Const(c) => vec![Factor::Const(c)],
            Factor::Power(a) => vec![Factor::Power(-a)],
            // (1 + 1/t)^b = t^-b (1+t)^b
            Factor::OnePlus(b) => vec![Factor::Power(-b), Factor::OnePlus(b)],
            Factor::Exp(d) => vec![Factor::ExpInv(d)],
            Factor::ExpInv(d) => vec![Factor::Exp(d)],
            Factor::Log(_) => return Err(WeightError::NotInvertible(self.to_string())),
        })
    }

    fn is_identity(&self) -> bool {
        match *self {
            Factor::Const(c) => c == 1.0,
            Factor::Power(x)
            | Factor::OnePlus(x)
            | Factor::Log(x)
            | Factor::Exp(x)
            | Factor::ExpInv(x) => x == 0.0,
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Factor::Const(c) => write!(f, "{c}"),
            Factor::Power(a) => write!(f, "t^{a}"),
            Factor::OnePlus(b) => write!(f, "(1+t)^{b}"),
            Factor::Log(g) => write!(f, "log(e+t)^{g}"),
            Factor::Exp(d) if d >= 0.0 => write!(f, "exp(-{d}*t)"),
            Factor::Exp(d) => write!(f, "exp({}*t)", -d),
            Factor::ExpInv(d) if d >= 0.0 => write!(f, "exp(-{d}/t)"),
            Factor::ExpInv(d) => write!(f, "exp({}/t)", -d),
        }
    }
}

/// Leading behaviour `coeff · t^power · (ln t)^log_power · exp(-exp_rate·t)` of a
/// product near `∞`, or `coeff · t^power · exp(-exp_rate/t)` near `0⁺`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Asymptote {
    pub coeff: f64,
    pub power: f64,
    pub log_power: f64,
    pub exp_rate: f64,
}

impl Asymptote {
    /// Limit of the weight at the endpoint described by this asymptote.
    pub fn limit(&self, at_infinity: bool) -> f64 {
        let grows = if self.exp_rate != 0.0 {
            self.exp_rate < 0.0
        } else if self.power != 0.0 {
            if at_infinity {
                self.power > 0.0
            } else {
                self.power < 0.0
            }
        } else if self.log_power != 0.0 {
            self.log_power > 0.0
        } else {
            return self.coeff;
        };
        if grows {
            f64::INFINITY
        } else {
            0.0
        }
    }

    /// Whether `∫ weight` converges at the endpoint (`∞` or `0⁺`).
    pub fn integrable(&self, at_infinity: bool) -> bool {
        if self.exp_rate != 0.0 {
            return self.exp_rate > 0.0;
        }
        if at_infinity {
            if self.power != -1.0 {
                self.power < -1.0
            } else {
                self.log_power < -1.0
            }
        } else {
            self.power > -1.0
        }
    }
}

/// Product of closed-form factors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Product {
    pub factors: Vec<Factor>,
}

impl Product {
    pub fn new(factors: Vec<Factor>) -> Self {
        Self { factors }
    }

    pub fn one() -> Self {
        Self {
            factors: vec![Factor::Const(1.0)],
        }
    }

    pub fn ln_eval(&self, t: f64) -> f64 {
        self.factors.iter().map(|f| f.ln_eval(t)).sum()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.ln_eval(t).exp()
    }

    pub fn dlog(&self, t: f64) -> f64 {
        self.factors.iter().map(|f| f.dlog(t)).sum()
    }

    pub fn pow(&self, r: f64) -> Product {
        Product::new(self.factors.iter().map(|f| f.pow(r)).collect())
    }

    pub fn mul(&self, other: &Product) -> Product {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        Product::new(factors)
    }

    /// Merge like factors and drop identities, in a fixed kind order.
    pub fn normalized(&self) -> Product {
        let mut c = 1.0;
        let (mut a, mut b, mut g, mut d, mut di) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for f in &self.factors {
            match *f {
                Factor::Const(x) => c *= x,
                Factor::Power(x) => a += x,
                Factor::OnePlus(x) => b += x,
                Factor::Log(x) => g += x,
                Factor::Exp(x) => d += x,
                Factor::ExpInv(x) => di += x,
            }
        }
        let factors: Vec<Factor> = [
            Factor::Const(c),
            Factor::Power(a),
            Factor::OnePlus(b),
            Factor::Log(g),
            Factor::Exp(d),
            Factor::ExpInv(di),
        ]
        .into_iter()
        .filter(|f| !f.is_identity())
        .collect();
        if factors.is_empty() {
            Product::one()
        } else {
            Product::new(factors)
        }
    }

    /// Coefficient and exponent `(c, a)` when the product is exactly `c · t^a`.
    pub fn is_pure_power(&self) -> bool {
        self.factors.iter().all(|f| matches!(f, Factor::Const(_) | Factor::Power(_)))
    }

    pub fn as_pure_power(&self) -> Option<(f64, f64)> {
        let n = self.normalized();
        let mut c = 1.0;
        let mut a = 0.0;
        for f in &n.factors {
            match *f {
                Factor::Const(x) => c *= x,
                Factor::Power(x) => a += x,
                _ => return None,
            }
        }
        Some((c, a))
    }

    fn merged(&self) -> (f64, f64, f64, f64, f64, f64) {
        let mut out = (1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for f in &self.factors {
            match *f {
                Factor::Const(x) => out.0 *= x,
                Factor::Power(x) => out.1 += x,
                Factor::OnePlus(x) => out.2 += x,
                Factor::Log(x) => out.3 += x,
                Factor::Exp(x) => out.4 += x,
                Factor::ExpInv(x) => out.5 += x,
            }
        }
        out
    }

    pub fn asymptote_at_infinity(&self) -> Asymptote {
        let (c, a, b, g, d, _) = self.merged();
        Asymptote {
            coeff: c,
            power: a + b,
            log_power: g,
            exp_rate: d,
        }
    }

    pub fn asymptote_at_zero(&self) -> Asymptote {
        let (c, a, _, _, _, di) = self.merged();
        Asymptote {
            coeff: c,
            power: a,
            log_power: 0.0,
            exp_rate: di,
        }
    }

    fn inverted(&self) -> Result<Product, WeightError> {
        let mut factors = Vec::new();
        for f in &self.factors {
            factors.extend(f.inverted()?);
        }
        Ok(Product::new(factors))
    }
}

impl fmt::Display for Product {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, factor) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_str(" * ")?;
            }
            write!(f, "{factor}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub body: Product,
}

/// A positive weight on `(0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum WeightExpr {
    Product(Product),
    Piecewise(Vec<Piece>),
}

impl WeightExpr {
    pub fn one() -> Self {
        WeightExpr::Product(Product::one())
    }

    pub fn constant(c: f64) -> Self {
        WeightExpr::Product(Product::new(vec![Factor::Const(c)]))
    }

    pub fn power(a: f64) -> Self {
        WeightExpr::Product(Product::new(vec![Factor::Power(a)]))
    }

    pub fn from_factors(factors: Vec<Factor>) -> Self {
        WeightExpr::Product(Product::new(factors))
    }

    /// Validates piece coverage of `(0, ∞)` and builds a piecewise weight.
    pub fn piecewise(pieces: Vec<Piece>) -> Result<Self, WeightError> {
        validate_pieces(&pieces)?;
        Ok(WeightExpr::Piecewise(pieces))
    }

    pub fn parse(text: &str) -> Result<Self, WeightError> {
        Parser::new(text).parse()
    }

    /// Pieces as `(lo, hi, body)`; a plain product is a single piece on `(0, ∞)`.
    pub fn pieces(&self) -> Vec<(f64, f64, &Product)> {
        match self {
            WeightExpr::Product(p) => vec![(0.0, f64::INFINITY, p)],
            WeightExpr::Piecewise(ps) => ps.iter().map(|p| (p.lo, p.hi, &p.body)).collect(),
        }
    }

    /// Interior breakpoints, strictly increasing.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            WeightExpr::Product(_) => Vec::new(),
            WeightExpr::Piecewise(ps) => ps.iter().skip(1).map(|p| p.lo).collect(),
        }
    }

    /// The product governing `t`; at a breakpoint, the piece to its right.
    pub fn piece_at(&self, t: f64) -> &Product {
        match self {
            WeightExpr::Product(p) => p,
            WeightExpr::Piecewise(ps) => {
                let idx = ps.partition_point(|p| p.hi <= t).min(ps.len() - 1);
                &ps[idx].body
            }
        }
    }

    pub fn ln_eval(&self, t: f64) -> f64 {
        self.piece_at(t).ln_eval(t)
    }

    /// Pointwise value for `t > 0`; panics in debug builds on `t <= 0`.
    pub fn eval(&self, t: f64) -> f64 {
        debug_assert!(t > 0.0, "weight evaluated at {t}");
        self.ln_eval(t).exp()
    }

    pub fn try_eval(&self, t: f64) -> Result<f64, WeightError> {
        if t > 0.0 && !t.is_nan() {
            Ok(self.eval(t))
        } else {
            Err(WeightError::NonPositiveArgument(t))
        }
    }

    pub fn dlog(&self, t: f64) -> f64 {
        self.piece_at(t).dlog(t)
    }

    /// `w(t)^r`, exact on the grammar.
    pub fn pow(&self, r: f64) -> WeightExpr {
        self.map_bodies(|b| b.pow(r))
    }

    /// Multiply by the positive constant `c`.
    pub fn scale(&self, c: f64) -> WeightExpr {
        self.map_bodies(|b| b.mul(&Product::new(vec![Factor::Const(c)])))
    }

    /// Multiply by `t^a`.
    pub fn mul_power(&self, a: f64) -> WeightExpr {
        self.map_bodies(|b| b.mul(&Product::new(vec![Factor::Power(a)])))
    }

    pub fn normalized(&self) -> WeightExpr {
        self.map_bodies(|b| b.normalized())
    }

    fn map_bodies(&self, f: impl Fn(&Product) -> Product) -> WeightExpr {
        match self {
            WeightExpr::Product(p) => WeightExpr::Product(f(p)),
            WeightExpr::Piecewise(ps) => WeightExpr::Piecewise(
                ps.iter()
                    .map(|p| Piece {
                        lo: p.lo,
                        hi: p.hi,
                        body: f(&p.body),
                    })
                    .collect(),
            ),
        }
    }

    /// Pointwise product, merging breakpoints.
    pub fn mul(&self, other: &WeightExpr) -> WeightExpr {
        match (self, other) {
            (WeightExpr::Product(a), WeightExpr::Product(b)) => WeightExpr::Product(a.mul(b)),
            _ => {
                let mut cuts = self.breakpoints();
                cuts.extend(other.breakpoints());
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let mut edges = vec![0.0];
                edges.extend(cuts);
                edges.push(f64::INFINITY);
                let pieces = edges
                    .windows(2)
                    .map(|e| {
                        let mid = if e[1].is_finite() {
                            0.5 * (e[0] + e[1])
                        } else {
                            e[0] + 1.0
                        };
                        Piece {
                            lo: e[0],
                            hi: e[1],
                            body: self.piece_at(mid).mul(other.piece_at(mid)),
                        }
                    })
                    .collect();
                WeightExpr::Piecewise(pieces)
            }
        }
    }

    /// `w(1/t)`, when every factor is closed under inversion.
    pub fn inverted(&self) -> Result<WeightExpr, WeightError> {
        match self {
            WeightExpr::Product(p) => Ok(WeightExpr::Product(p.inverted()?)),
            WeightExpr::Piecewise(ps) => {
                let mut out = Vec::with_capacity(ps.len());
                for p in ps.iter().rev() {
                    let lo = if p.hi.is_infinite() { 0.0 } else { 1.0 / p.hi };
                    let hi = if p.lo == 0.0 {
                        f64::INFINITY
                    } else {
                        1.0 / p.lo
                    };
                    out.push(Piece {
                        lo,
                        hi,
                        body: p.body.inverted()?,
                    });
                }
                Ok(WeightExpr::Piecewise(out))
            }
        }
    }

    pub fn asymptote_at_infinity(&self) -> Asymptote {
        self.piece_at(f64::MAX).asymptote_at_infinity()
    }

    pub fn asymptote_at_zero(&self) -> Asymptote {
        self.pieces()[0].2.asymptote_at_zero()
    }

    /// Whether the weight has no jumps at its breakpoints.
    pub fn is_continuous(&self) -> bool {
        match self {
            WeightExpr::Product(_) => true,
            WeightExpr::Piecewise(ps) => ps.windows(2).all(|w| {
                let b = w[0].hi;
                let left = w[0].body.ln_eval(b);
                let right = w[1].body.ln_eval(b);
                (left - right).abs() <= 1e-9 * (1.0 + left.abs())
            }),
        }
    }

    /// Limit of the weight as `t → 0⁺`.
    pub fn limit_at_zero(&self) -> f64 {
        self.asymptote_at_zero().limit(false)
    }

    /// Limit of the weight as `t → ∞`.
    pub fn limit_at_infinity(&self) -> f64 {
        self.asymptote_at_infinity().limit(true)
    }
}

impl fmt::Display for WeightExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightExpr::Product(p) => write!(f, "{p}"),
            WeightExpr::Piecewise(ps) => {
                f.write_str("{")?;
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        f.write_str("; ")?;
                    }
                    if p.hi.is_infinite() {
                        write!(f, "{} on ({}, inf)", p.body, p.lo)?;
                    } else {
                        write!(f, "{} on ({}, {})", p.body, p.lo, p.hi)?;
                    }
                }
                f.write_str("}")
            }
        }
    }
}

fn validate_pieces(pieces: &[Piece]) -> Result<(), WeightError> {
    let first = pieces.first().ok_or(WeightError::PiecewiseCoverage)?;
    let last = pieces.last().ok_or(WeightError::PiecewiseCoverage)?;
    if first.lo != 0.0 || !last.hi.is_infinite() {
        return Err(WeightError::PiecewiseCoverage);
    }
    for p in pieces {
        if !(p.lo < p.hi) {
            return Err(WeightError::DegeneratePiece { lo: p.lo, hi: p.hi });
        }
    }
    for w in pieces.windows(2) {
        if w[0].hi < w[1].lo {
            return Err(WeightError::PiecewiseGap {
                left: w[0].hi,
                right: w[1].lo,
            });
        }
        if w[0].hi > w[1].lo {
            return Err(WeightError::PiecewiseOverlap {
                left: w[0].hi,
                right: w[1].lo,
            });
        }
    }
    Ok(())
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn err(&self, message: impl Into<String>) -> WeightError {
        WeightError::Syntax {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    /// Matches a sequence of tokens, each optionally preceded by whitespace.
    fn eat_seq(&mut self, tokens: &[&str]) -> bool {
        let save = self.pos;
        for t in tokens {
            if !self.eat(t) {
                self.pos = save;
                return false;
            }
        }
        true
    }

    fn expect(&mut self, token: &str) -> Result<(), WeightError> {
        if self.eat(token) {
            Ok(())
        } else {
            self.skip_ws();
            Err(self.err(format!("expected `{token}`")))
        }
    }

    fn number(&mut self) -> Result<f64, WeightError> {
        self.skip_ws();
        let bytes = self.rest().as_bytes();
        let mut i = 0;
        if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
            i += 1;
        }
        let digits_start = i;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i == digits_start {
            return Err(self.err("expected a number"));
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            let exp_start = j;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if j > exp_start {
                i = j;
            }
        }
        let text = &self.rest()[..i];
        let value: f64 = text
            .parse()
            .map_err(|_| self.err(format!("malformed number `{text}`")))?;
        if !value.is_finite() {
            return Err(self.err("number must be finite"));
        }
        self.pos += i;
        Ok(value)
    }

    fn bound(&mut self) -> Result<f64, WeightError> {
        if self.eat("inf") || self.eat("∞") {
            Ok(f64::INFINITY)
        } else {
            self.number()
        }
    }

    fn factor(&mut self) -> Result<Factor, WeightError> {
        self.skip_ws();
        let start = self.pos;
        if self.eat_seq(&["(", "1", "+", "t", ")", "^"]) {
            return Ok(Factor::OnePlus(self.number()?));
        }
        if self.eat_seq(&["log", "(", "e", "+", "t", ")", "^"]) {
            return Ok(Factor::Log(self.number()?));
        }
        if self.eat_seq(&["exp", "("]) {
            let negated = self.eat("-");
            let rate = self.number()?;
            let rate = if negated { rate } else { -rate };
            let factor = if self.eat_seq(&["*", "t"]) {
                Factor::Exp(rate)
            } else if self.eat_seq(&["/", "t"]) {
                Factor::ExpInv(rate)
            } else {
                self.skip_ws();
                return Err(self.err("expected `*t` or `/t`"));
            };
            self.expect(")")?;
            return Ok(factor);
        }
        if self.eat("t") {
            if !self.eat("^") {
                self.skip_ws();
                return Err(self.err("expected `^` after `t`"));
            }
            return Ok(Factor::Power(self.number()?));
        }
        let value = self.number()?;
        if value <= 0.0 {
            return Err(WeightError::NonPositiveConstant {
                offset: start,
                value,
            });
        }
        Ok(Factor::Const(value))
    }

    fn product(&mut self) -> Result<Product, WeightError> {
        let mut factors = vec![self.factor()?];
        while self.eat("*") {
            factors.push(self.factor()?);
        }
        Ok(Product::new(factors))
    }

    fn parse(mut self) -> Result<WeightExpr, WeightError> {
        let expr = if self.eat("piecewise") {
            self.expect("{")?;
            self.piecewise_body()?
        } else if self.eat("{") {
            self.piecewise_body()?
        } else {
            WeightExpr::Product(self.product()?)
        };
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(expr)
    }

    fn piecewise_body(&mut self) -> Result<WeightExpr, WeightError> {
        let mut pieces = Vec::new();
        loop {
            let body = self.product()?;
            self.expect("on")?;
            self.expect("(")?;
            let lo = self.bound()?;
            self.expect(",")?;
            let hi = self.bound()?;
            self.expect(")")?;
            pieces.push(Piece { lo, hi, body });
            if self.eat(";") {
                continue;
            }
            self.expect("}")?;
            break;
        }
        WeightExpr::piecewise(pieces)
    }
}

/// Surface measure `σ(S^{n-1})`.
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        n => {
            // σ_{k+2} = 2π σ_k / k
            let mut area = if n % 2 == 0 { 2.0 * PI } else { 4.0 * PI };
            let mut k = if n % 2 == 0 { 2 } else { 3 };
            while k < n {
                area *= 2.0 * PI / k as f64;
                k += 2;
            }
            area
        }
    }
}

/// Quadrature nodes on `S^{n-1}` for `n ∈ {1, 2, 3}` with weights summing to
/// the surface measure.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl SphereGrid {
    /// `resolution` is the number of angles on the circle, or the number of
    /// polar Gauss–Legendre nodes on the 2-sphere (with twice as many azimuths).
    pub fn new(dim: usize, resolution: usize) -> Result<Self, WeightError> {
        let resolution = resolution.max(1);
        let (nodes, weights) = match dim {
            1 => (vec![-1.0, 1.0], vec![1.0, 1.0]),
            2 => {
                let m = resolution;
                let mut nodes = Vec::with_capacity(2 * m);
                for j in 0..m {
                    let phi = 2.0 * PI * (j as f64 + 0.5) / m as f64;
                    nodes.push(phi.cos());
                    nodes.push(phi.sin());
                }
                (nodes, vec![2.0 * PI / m as f64; m])
            }
            3 => {
                let (zs, zw) = crate::quadrature::gauss_legendre(resolution);
                let m_phi = 2 * resolution;
                let mut nodes = Vec::with_capacity(3 * resolution * m_phi);
                let mut weights = Vec::with_capacity(resolution * m_phi);
                for (z, w) in zs.iter().zip(&zw) {
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    for k in 0..m_phi {
                        let phi = 2.0 * PI * (k as f64 + 0.5) / m_phi as f64;
                        nodes.extend_from_slice(&[rho * phi.cos(), rho * phi.sin(), *z]);
                        weights.push(w * 2.0 * PI / m_phi as f64);
                    }
                }
                (nodes, weights)
            }
            n => return Err(WeightError::UnsupportedDimension(n)),
        };
        Ok(Self {
            dim,
            nodes,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the node closest to the unit direction `s`.
    pub fn nearest(&self, s: &[f64]) -> usize {
        (0..self.len())
            .max_by(|&i, &j| {
                let di: f64 = self.node(i).iter().zip(s).map(|(a, b)| a * b).sum();
                let dj: f64 = self.node(j).iter().zip(s).map(|(a, b)| a * b).sum();
                di.total_cmp(&dj).then(j.cmp(&i))
            })
            .unwrap_or(0)
    }
}

/// Angular factor `a(x/|x|)` of a separable weight.
#[derive(Debug, Clone, PartialEq)]
pub enum AngularWeight {
    Constant(f64),
    Tabulated {
        grid: Arc<SphereGrid>,
        values: Vec<f64>,
    },
}

impl AngularWeight {
    pub fn tabulated(grid: Arc<SphereGrid>, values: Vec<f64>) -> Result<Self, WeightError> {
        if values.len() != grid.len() || values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(WeightError::NonPositiveAngular);
        }
        Ok(AngularWeight::Tabulated { grid, values })
    }

    /// Tabulate `f(direction)` on `grid`.
    pub fn from_fn(grid: Arc<SphereGrid>, f: impl Fn(&[f64]) -> f64) -> Result<Self, WeightError> {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self::tabulated(grid, values)
    }

    pub fn eval(&self, direction: &[f64]) -> f64 {
        match self {
            AngularWeight::Constant(c) => *c,
            AngularWeight::Tabulated { grid, values } => values[grid.nearest(direction)],
        }
    }

    pub fn pow(&self, r: f64) -> AngularWeight {
        match self {
            AngularWeight::Constant(c) => AngularWeight::Constant(c.powf(r)),
            AngularWeight::Tabulated { grid, values } => AngularWeight::Tabulated {
                grid: grid.clone(),
                values: values.iter().map(|v| v.powf(r)).collect(),
            },
        }
    }

    pub fn mul(&self, other: &AngularWeight) -> Result<AngularWeight, WeightError> {
        use AngularWeight::*;
        Ok(match (self, other) {
            (Constant(a), Constant(b)) => Constant(a * b),
            (Constant(c), Tabulated { grid, values }) | (Tabulated { grid, values }, Constant(c)) => {
                Tabulated {
                    grid: grid.clone(),
                    values: values.iter().map(|v| v * c).collect(),
                }
            }
            (
                Tabulated {
                    grid: g1,
                    values: v1,
                },
                Tabulated {
                    grid: g2,
                    values: v2,
                },
            ) => {
                if !Arc::ptr_eq(g1, g2) && g1 != g2 {
                    return Err(WeightError::GridMismatch);
                }
                Tabulated {
                    grid: g1.clone(),
                    values: v1.iter().zip(v2).map(|(a, b)| a * b).collect(),
                }
            }
        })
    }

    pub fn sup(&self) -> f64 {
        match self {
            AngularWeight::Constant(c) => *c,
            AngularWeight::Tabulated { values, .. } => {
                values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, AngularWeight::Constant(_))
    }
}

/// Separable weight `v(x) = ρ(|x|) · a(x/|x|)` on `ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnWeight {
    pub dim: usize,
    pub radial: WeightExpr,
    pub angular: AngularWeight,
}

impl RnWeight {
    pub fn radial(dim: usize, radial: WeightExpr) -> Self {
        Self {
            dim,
            radial,
            angular: AngularWeight::Constant(1.0),
        }
    }

    pub fn new(dim: usize, radial: WeightExpr, angular: AngularWeight) -> Result<Self, WeightError> {
        if let AngularWeight::Tabulated { grid, .. } = &angular {
            if grid.dim() != dim {
                return Err(WeightError::DimensionMismatch(grid.dim(), dim));
            }
        }
        Ok(Self {
            dim,
            radial,
            angular,
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let dir: Vec<f64> = x.iter().map(|c| c / r).collect();
        self.radial.eval(r) * self.angular.eval(&dir)
    }

    pub fn pow(&self, r: f64) -> RnWeight {
        RnWeight {
            dim: self.dim,
            radial: self.radial.pow(r),
            angular: self.angular.pow(r),
        }
    }

    pub fn mul(&self, other: &RnWeight) -> Result<RnWeight, WeightError> {
        if self.dim != other.dim {
            return Err(WeightError::DimensionMismatch(self.dim, other.dim));
        }
        Ok(RnWeight {
            dim: self.dim,
            radial: self.radial.mul(&other.radial),
            angular: self.angular.mul(&other.angular)?,
        })
    }

    /// `v₁^{-e} v₂^{e}` for two separable weights.
    pub fn ratio_pow(v1: &RnWeight, v2: &RnWeight, e: f64) -> Result<RnWeight, WeightError> {
        v1.pow(-e).mul(&v2.pow(e))
    }
}

/// The four exponents `(p₁, p₂, q₁, q₂)` of an embedding
/// `LM_{p₁,q₁}(v₁,w₁) ↪ LM_{p₂,q₂}(v₂,w₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentQuad {
    pub p1: f64,
    pub p2: f64,
    pub q1: f64,
    pub q2: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("exponents must be positive and finite: {0:?}")]
pub struct InvalidExponents(pub [f64; 4]);

impl ExponentQuad {
    pub fn new(p1: f64, p2: f64, q1: f64, q2: f64) -> Result<Self, InvalidExponents> {
        let all = [p1, p2, q1, q2];
        if all.iter().all(|x| *x > 0.0 && x.is_finite()) {
            Ok(Self { p1, p2, q1, q2 })
        } else {
            Err(InvalidExponents(all))
        }
    }

    /// Reduced inner exponent `p₂/p₁`.
    pub fn p(&self) -> f64 {
        self.p2 / self.p1
    }

    /// Reduced target outer exponent `q₂/p₁`.
    pub fn q(&self) -> f64 {
        self.q2 / self.p1
    }

    /// Reduced source outer exponent `q₁/p₁`.
    pub fn theta(&self) -> f64 {
        self.q1 / self.p1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn parses_single_power() {
        let w = WeightExpr::parse("t^2").unwrap();
        assert_eq!(w, WeightExpr::from_factors(vec![Factor::Power(2.0)]));
    }

    #[test]
    fn parses_two_factor_product() {
        let w = WeightExpr::parse("(1+t)^-2 * exp(-1*t)").unwrap();
        assert_eq!(
            w,
            WeightExpr::from_factors(vec![Factor::OnePlus(-2.0), Factor::Exp(1.0)])
        );
    }

    #[test]
    fn malformed_power_reports_offset() {
        match WeightExpr::parse("t^") {
            Err(WeightError::Syntax { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_positive_constant() {
        assert!(matches!(
            WeightExpr::parse("0 * t^1"),
            Err(WeightError::NonPositiveConstant { .. })
        ));
        assert!(matches!(
            WeightExpr::parse("-2"),
            Err(WeightError::NonPositiveConstant { .. })
        ));
    }

    #[test]
    fn rejects_gaps_overlaps_and_degenerate_pieces() {
        assert!(matches!(
            WeightExpr::parse("{1 on (0,1); t^-1 on (2,inf)}"),
            Err(WeightError::PiecewiseGap { .. })
        ));
        assert!(matches!(
            WeightExpr::parse("{1 on (0,2); t^-1 on (1,inf)}"),
            Err(WeightError::PiecewiseOverlap { .. })
        ));
        assert!(matches!(
            WeightExpr::parse("{1 on (0,1); 2 on (1,1); t^-1 on (1,inf)}"),
            Err(WeightError::DegeneratePiece { .. })
        ));
        assert!(matches!(
            WeightExpr::parse("{1 on (0,1); t^-1 on (1,5)}"),
            Err(WeightError::PiecewiseCoverage)
        ));
    }

    #[test]
    fn evaluates_examples() {
        let w = WeightExpr::parse("t^2").unwrap();
        assert_relative_eq!(w.eval(3.0), 9.0, max_relative = 1e-15);
        let w = WeightExpr::parse("(1+t)^-2").unwrap();
        assert_relative_eq!(w.eval(1.0), 0.25, max_relative = 1e-15);
        let w = WeightExpr::parse("piecewise{1 on (0,1); t^-1 on (1,∞)}").unwrap();
        assert_relative_eq!(w.eval(2.0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(w.eval(0.5), 1.0, max_relative = 1e-15);
        assert!(w.try_eval(0.0).is_err());
        assert!(w.try_eval(-1.0).is_err());
    }

    #[test]
    fn pow_compose_examples() {
        let w = WeightExpr::parse("t^2").unwrap();
        assert_eq!(w.pow(0.5).to_string(), "t^1");
        let w = WeightExpr::parse("(1+t)^-2 * t^1").unwrap();
        assert_eq!(w.pow(-1.0).to_string(), "(1+t)^2 * t^-1");
        let w = WeightExpr::parse("exp(-1*t)").unwrap();
        assert_eq!(w.pow(3.0).to_string(), "exp(-3*t)");
        // growing exponential survives a print/parse cycle
        let g = w.pow(-2.0);
        assert_eq!(g.to_string(), "exp(2*t)");
        assert_eq!(WeightExpr::parse(&g.to_string()).unwrap(), g);
    }

    #[test]
    fn whitespace_is_normalized() {
        let w = WeightExpr::parse("  ( 1 + t ) ^ -2*log( e + t )^0.5 *  exp( - 2 / t )").unwrap();
        assert_eq!(w.to_string(), "(1+t)^-2 * log(e+t)^0.5 * exp(-2/t)");
    }

    #[test]
    fn inversion_is_an_involution() {
        let w = WeightExpr::parse("{2 * t^1 * (1+t)^-3 on (0, 2); exp(-1*t) * t^-0.5 on (2, inf)}")
            .unwrap();
        let back = w.inverted().unwrap().inverted().unwrap();
        for &t in &[0.01, 0.3, 1.0, 1.9, 2.1, 7.0, 40.0] {
            assert_relative_eq!(back.eval(t), w.eval(t), max_relative = 1e-12);
        }
        assert!(WeightExpr::parse("log(e+t)^1").unwrap().inverted().is_err());
    }

    #[test]
    fn asymptotic_limits() {
        let w = WeightExpr::parse("t^1 * exp(-1*t)").unwrap();
        assert_eq!(w.limit_at_zero(), 0.0);
        assert_eq!(w.limit_at_infinity(), 0.0);
        let w = WeightExpr::parse("3 * (1+t)^-2").unwrap();
        assert_eq!(w.limit_at_zero(), 3.0);
        assert!(w.asymptote_at_infinity().integrable(true));
        assert!(!WeightExpr::parse("t^-1").unwrap().asymptote_at_infinity().integrable(true));
        assert!(WeightExpr::parse("t^-1 * log(e+t)^-2")
            .unwrap()
            .asymptote_at_infinity()
            .integrable(true));
    }

    #[test]
    fn continuity_detection() {
        assert!(WeightExpr::parse("{1 on (0,1); t^-1 on (1,inf)}").unwrap().is_continuous());
        assert!(!WeightExpr::parse("{1 on (0,1); 2 * t^-1 on (1,inf)}").unwrap().is_continuous());
    }

    #[test]
    fn sphere_grids_carry_surface_measure() {
        for (dim, res) in [(1, 1), (2, 17), (3, 9)] {
            let g = SphereGrid::new(dim, res).unwrap();
            let total: f64 = g.weights().iter().sum();
            assert_relative_eq!(total, sphere_area(dim), max_relative = 1e-13);
        }
        assert_relative_eq!(sphere_area(4), 2.0 * PI * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(5), 8.0 * PI * PI / 3.0, max_relative = 1e-14);
    }

    fn factor_strategy() -> impl Strategy<Value = Factor> {
        prop_oneof![
            (0.1f64..5.0).prop_map(Factor::Const),
            (-3.0f64..3.0).prop_map(Factor::Power),
            (-3.0f64..3.0).prop_map(Factor::OnePlus),
            (-2.0f64..2.0).prop_map(Factor::Log),
            (0.0f64..2.0).prop_map(Factor::Exp),
        ]
    }

    fn weight_strategy() -> impl Strategy<Value = WeightExpr> {
        let product = || prop::collection::vec(factor_strategy(), 1..4).prop_map(Product::new);
        prop_oneof![
            product().prop_map(WeightExpr::Product),
            (product(), product(), 0.1f64..10.0).prop_map(|(a, b, cut)| {
                WeightExpr::Piecewise(vec![
                    Piece {
                        lo: 0.0,
                        hi: cut,
                        body: a,
                    },
                    Piece {
                        lo: cut,
                        hi: f64::INFINITY,
                        body: b,
                    },
                ])
            })
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn weights_are_positive(w in weight_strategy(), lt in -3.0f64..2.0) {
            let t = 10f64.powf(lt);
            let v = w.eval(t);
            prop_assert!(v > 0.0 && v.is_finite(), "w={w} t={t} v={v}");
        }

        #[test]
        fn pow_compose_law(w in weight_strategy(), r in -3.0f64..3.0, lt in -3.0f64..3.0) {
            let t = 10f64.powf(lt);
            let lhs = w.pow(r).ln_eval(t);
            let rhs = r * w.ln_eval(t);
            prop_assume!(rhs.is_finite());
            prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
        }

        #[test]
        fn print_parse_round_trip(w in weight_strategy()) {
            let printed = w.to_string();
            let reparsed = WeightExpr::parse(&printed).unwrap();
            prop_assert_eq!(&reparsed, &w);
            prop_assert_eq!(WeightExpr::parse(&reparsed.to_string()).unwrap(), reparsed);
        }
    }
}
