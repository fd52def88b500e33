//! The pair of spaces `LM_{p₁,q₁}(v₁,w₁) ↪ LM_{p₂,q₂}(v₂,w₂)`.

use crate::reduction::{self, ReducedProblem, ReductionError};
use crate::weights::{ExponentQuad, RnWeight, WeightExpr};

#[derive(Debug, Clone)]
pub struct Embedding {
    pub exps: ExponentQuad,
    pub v1: RnWeight,
    pub v2: RnWeight,
    pub w1: WeightExpr,
    pub w2: WeightExpr,
}

impl Embedding {
    pub fn new(exps: ExponentQuad, v1: RnWeight, v2: RnWeight, w1: WeightExpr, w2: WeightExpr) -> Self {
        Self {
            exps,
            v1,
            v2,
            w1,
            w2,
        }
    }

    /// Radial weights on `ℝⁿ` with constant angular parts.
    pub fn radial(
        dim: usize,
        exps: ExponentQuad,
        v1: WeightExpr,
        v2: WeightExpr,
        w1: WeightExpr,
        w2: WeightExpr,
    ) -> Self {
        Self::new(exps, RnWeight::radial(dim, v1), RnWeight::radial(dim, v2), w1, w2)
    }

    pub fn dim(&self) -> usize {
        self.v1.dim
    }

    pub fn reduce(&self) -> Result<ReducedProblem, ReductionError> {
        reduction::reduce_problem(&self.exps, &self.v1, &self.v2, &self.w1, &self.w2)
    }

    /// The same embedding with `v₂ → λv₂`, `w₁ → μw₁`, `w₂ → νw₂`.
    pub fn scaled(&self, lambda: f64, mu: f64, nu: f64) -> Self {
        let mut out = self.clone();
        out.v2.radial = out.v2.radial.scale(lambda);
        out.w1 = out.w1.scale(mu);
        out.w2 = out.w2.scale(nu);
        out
    }
}
