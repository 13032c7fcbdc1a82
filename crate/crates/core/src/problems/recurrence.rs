//! Random linear recurrences `W_{k+1} = A_k W_k + B_k`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Law, RidgeProblem};
use crate::chain::{StepContext, StepFailure, StepMap};
use crate::rng::StreamRng;

/// Generator of i.i.d. coefficient pairs `(A_k, B_k)`.
pub trait LinearCoeffSampler: Send + Sync {
    fn dim(&self) -> usize;

    fn sample(&self, rng: &mut StreamRng) -> (DMatrix<f64>, DVector<f64>);

    /// Coefficients for chain step `ctx.step()`; defaults to an i.i.d. draw
    /// from the step stream.
    fn sample_at(&self, ctx: &mut StepContext) -> (DMatrix<f64>, DVector<f64>) {
        self.sample(ctx.rng())
    }

    fn describe(&self) -> String;
}

/// One draw of `(A_k, B_k)`.
pub fn sample_linear_coeffs(
    s: &dyn LinearCoeffSampler,
    rng: &mut StreamRng,
) -> (DMatrix<f64>, DVector<f64>) {
    s.sample(rng)
}

/// The exact SGD recurrence of a ridge problem.
#[derive(Debug, Clone)]
pub struct RidgeCoeffSampler {
    pub problem: RidgeProblem,
}

impl RidgeCoeffSampler {
    pub fn new(problem: RidgeProblem) -> Self {
        Self { problem }
    }
}

impl LinearCoeffSampler for RidgeCoeffSampler {
    fn dim(&self) -> usize {
        self.problem.d() * self.problem.m()
    }

    fn sample(&self, rng: &mut StreamRng) -> (DMatrix<f64>, DVector<f64>) {
        self.problem.coeffs(&self.problem.sampler.draw_iid(rng))
    }

    fn sample_at(&self, ctx: &mut StepContext) -> (DMatrix<f64>, DVector<f64>) {
        self.problem.coeffs(&self.problem.sampler.draw(ctx))
    }

    fn describe(&self) -> String {
        use super::MinibatchProblem;
        format!("ridge-recurrence:{};gamma={:e}", self.problem.describe(), self.problem.gamma)
    }
}

/// Scalar recurrence with `A = scale * (1 - gamma X^2)`, `X ~ x_law`, and an
/// independent additive term `B ~ b_law`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarRecurrence {
    pub scale: f64,
    pub gamma: f64,
    pub x_law: Law,
    pub b_law: Law,
}

impl LinearCoeffSampler for ScalarRecurrence {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&self, rng: &mut StreamRng) -> (DMatrix<f64>, DVector<f64>) {
        let x = self.x_law.sample(rng);
        let b = self.b_law.sample(rng);
        (
            DMatrix::from_element(1, 1, self.scale * (1.0 - self.gamma * x * x)),
            DVector::from_element(1, b),
        )
    }

    fn describe(&self) -> String {
        format!("scalar-recurrence:{self:?}")
    }
}

/// Deterministic `A = c I`, `B = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantSampler {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl ConstantSampler {
    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        Self {
            a: DMatrix::identity(dim, dim) * c,
            b: DVector::zeros(dim),
        }
    }
}

impl LinearCoeffSampler for ConstantSampler {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn sample(&self, _rng: &mut StreamRng) -> (DMatrix<f64>, DVector<f64>) {
        (self.a.clone(), self.b.clone())
    }

    fn describe(&self) -> String {
        format!("constant:{:?}:{:?}", self.a.as_slice(), self.b.as_slice())
    }
}

/// The `k`-step chain `W_{k(t+1)} = (A_k ... A_1) W_{kt} + B^(k)`, which has
/// the same stationary law as the one-step recurrence.
pub struct ProductSampler<S> {
    pub inner: S,
    pub steps: usize,
}

impl<S: LinearCoeffSampler> ProductSampler<S> {
    pub fn new(inner: S, steps: usize) -> Self {
        assert!(steps >= 1);
        Self { inner, steps }
    }
}

impl<S: LinearCoeffSampler> LinearCoeffSampler for ProductSampler<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn sample(&self, rng: &mut StreamRng) -> (DMatrix<f64>, DVector<f64>) {
        let (mut a, mut b) = self.inner.sample(rng);
        for _ in 1..self.steps {
            let (ak, bk) = self.inner.sample(rng);
            b = &ak * b + bk;
            a = ak * a;
        }
        (a, b)
    }

    fn describe(&self) -> String {
        format!("product{}:{}", self.steps, self.inner.describe())
    }
}

/// Use a coefficient sampler directly as a chain: `w -> A w + B`.
pub struct LinearRecurrenceStep<S> {
    pub sampler: S,
}

impl<S: LinearCoeffSampler> StepMap for LinearRecurrenceStep<S> {
    fn dim(&self) -> usize {
        self.sampler.dim()
    }

    fn step(
        &self,
        ctx: &mut StepContext,
        state: &[f64],
        next: &mut [f64],
    ) -> Result<(), StepFailure> {
        let (a, b) = self.sampler.sample_at(ctx);
        let w = DVector::from_column_slice(state);
        let out = a * w + b;
        next.copy_from_slice(out.as_slice());
        Ok(())
    }

    fn describe(&self) -> String {
        format!("linear:{}", self.sampler.describe())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Domain;

    #[test]
    fn product_of_constants() {
        let s = ProductSampler::new(
            ConstantSampler {
                a: DMatrix::from_element(1, 1, 0.5),
                b: DVector::from_element(1, 1.0),
            },
            3,
        );
        let (a, b) = s.sample(&mut StreamRng::new(0, Domain::MonteCarlo, 0));
        assert_eq!(a[(0, 0)], 0.125);
        // 1 -> 0.5*1+1 -> 0.5*1.5+1
        assert_eq!(b[0], 1.75);
    }

    #[test]
    fn scalar_recurrence_range() {
        let s = ScalarRecurrence {
            scale: 0.5,
            gamma: 0.5,
            x_law: Law::Uniform { half_width: 1.0 },
            b_law: Law::Constant { value: 0.0 },
        };
        let mut rng = StreamRng::new(0, Domain::MonteCarlo, 0);
        for _ in 0..1000 {
            let (a, _) = s.sample(&mut rng);
            assert!((0.25..=0.5).contains(&a[(0, 0)]));
        }
    }
}
