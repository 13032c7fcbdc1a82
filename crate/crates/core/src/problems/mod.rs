//! Loss models and data sources.

mod dataset;
mod recurrence;
mod relu;
mod ridge;
mod scalar;

use std::sync::Arc;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chain::StepContext;
use crate::error::{Error, Result};
use crate::rng::{KeyedPermutation, StreamRng};

pub use dataset::{load_csv_dataset, CsvOptions, Dataset};
pub use recurrence::{
    sample_linear_coeffs, ConstantSampler, LinearCoeffSampler, LinearRecurrenceStep, ProductSampler,
    RidgeCoeffSampler, ScalarRecurrence,
};
pub use relu::TwoLayerReluProblem;
pub use ridge::{ridge_closed_form, vectorize, RidgeProblem};
pub use scalar::{scalar_objective_catalog, CriticalKind, CriticalPoint, ScalarObjective};

/// A one-dimensional law used for synthetic data and scripted recurrences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Law {
    Gaussian { std: f64 },
    Uniform { half_width: f64 },
    /// Student-t; with `unit_variance` the draw is rescaled by
    /// `sqrt((dof - 2) / dof)`.
    StudentT { dof: f64, unit_variance: bool },
    Constant { value: f64 },
}

impl Law {
    pub fn standard_normal() -> Self {
        Law::Gaussian { std: 1.0 }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Law::Gaussian { std } => {
                let z: f64 = rng.sample(StandardNormal);
                std * z
            }
            Law::Uniform { half_width } => {
                let u: f64 = rng.random();
                (2.0 * u - 1.0) * half_width
            }
            Law::StudentT { dof, unit_variance } => {
                let t = student_t(rng, dof);
                if unit_variance && dof > 2.0 {
                    t * ((dof - 2.0) / dof).sqrt()
                } else {
                    t
                }
            }
            Law::Constant { value } => value,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Law::Constant { value } => value,
            _ => 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Law::Gaussian { std } => std * std,
            Law::Uniform { half_width } => half_width * half_width / 3.0,
            Law::StudentT { dof, unit_variance } => {
                if dof <= 2.0 {
                    f64::INFINITY
                } else if unit_variance {
                    1.0
                } else {
                    dof / (dof - 2.0)
                }
            }
            Law::Constant { .. } => 0.0,
        }
    }

    /// Upper bound on `|X|`, if the law is bounded.
    pub fn bound(&self) -> Option<f64> {
        match *self {
            Law::Uniform { half_width } => Some(half_width.abs()),
            Law::Constant { value } => Some(value.abs()),
            _ => None,
        }
    }
}

/// Student-t draw as a Gaussian over the root of a scaled chi-square.
pub(crate) fn student_t<R: Rng + ?Sized>(rng: &mut R, dof: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let chi2 = if dof.fract() == 0.0 && dof <= 16.0 {
        (0..dof as usize)
            .map(|_| {
                let g: f64 = rng.sample(StandardNormal);
                g * g
            })
            .sum::<f64>()
    } else {
        ChiSquared::new(dof).expect("positive dof").sample(rng)
    };
    z / (chi2 / dof).sqrt()
}

/// Infinite i.i.d. data stream with independent coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub d: usize,
    pub m: usize,
    pub input: Law,
    pub target: Law,
}

impl SyntheticData {
    pub fn standard_normal(d: usize, m: usize) -> Self {
        Self {
            d,
            m,
            input: Law::standard_normal(),
            target: Law::standard_normal(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum DataSource {
    Empirical(Arc<Dataset>),
    Synthetic(SyntheticData),
}

impl DataSource {
    pub fn n_features(&self) -> usize {
        match self {
            DataSource::Empirical(ds) => ds.n_features(),
            DataSource::Synthetic(s) => s.d,
        }
    }

    pub fn n_outputs(&self) -> usize {
        match self {
            DataSource::Empirical(ds) => ds.n_outputs(),
            DataSource::Synthetic(s) => s.m,
        }
    }

    /// Number of instances; `None` for an infinite stream.
    pub fn len(&self) -> Option<usize> {
        match self {
            DataSource::Empirical(ds) => Some(ds.len()),
            DataSource::Synthetic(_) => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    pub fn describe(&self) -> String {
        match self {
            DataSource::Empirical(ds) => {
                format!("data:{}:{}x{}->{}", ds.name, ds.len(), ds.n_features(), ds.n_outputs())
            }
            DataSource::Synthetic(s) => format!("synthetic:{s:?}"),
        }
    }
}

/// A materialised minibatch, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d..(i + 1) * self.d]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.m..(i + 1) * self.m]
    }

    pub fn from_dataset(ds: &Dataset, indices: &[usize]) -> Self {
        let (d, m) = (ds.n_features(), ds.n_outputs());
        let mut inputs = Vec::with_capacity(indices.len() * d);
        let mut targets = Vec::with_capacity(indices.len() * m);
        for &i in indices {
            inputs.extend(ds.inputs.row(i).iter());
            targets.extend(ds.targets.row(i).iter());
        }
        Self {
            n: indices.len(),
            d,
            m,
            inputs,
            targets,
        }
    }
}

/// Draws minibatches from a [`DataSource`].
#[derive(Debug, Clone)]
pub struct BatchSampler {
    pub source: DataSource,
    pub batch_size: usize,
    pub replacement: bool,
}

impl BatchSampler {
    pub fn new(source: DataSource, batch_size: usize, replacement: bool) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Some(n) = source.len() {
            if batch_size > n {
                return Err(Error::Config(format!(
                    "batch_size {batch_size} exceeds instance count {n}"
                )));
            }
        }
        Ok(Self {
            source,
            batch_size,
            replacement,
        })
    }

    /// Minibatches per epoch when sampling without replacement.
    pub fn batches_per_epoch(&self) -> Option<u64> {
        match (&self.source, self.replacement) {
            (DataSource::Empirical(ds), false) => Some((ds.len() / self.batch_size) as u64),
            _ => None,
        }
    }

    /// An i.i.d. minibatch (sampling with replacement).
    pub fn draw_iid(&self, rng: &mut StreamRng) -> Batch {
        match &self.source {
            DataSource::Empirical(ds) => {
                let idx: Vec<usize> = (0..self.batch_size)
                    .map(|_| rng.random_range(0..ds.len()))
                    .collect();
                Batch::from_dataset(ds, &idx)
            }
            DataSource::Synthetic(s) => {
                let n = self.batch_size;
                let mut inputs = Vec::with_capacity(n * s.d);
                let mut targets = Vec::with_capacity(n * s.m);
                for _ in 0..n {
                    for _ in 0..s.d {
                        inputs.push(s.input.sample(rng));
                    }
                    for _ in 0..s.m {
                        targets.push(s.target.sample(rng));
                    }
                }
                Batch {
                    n,
                    d: s.d,
                    m: s.m,
                    inputs,
                    targets,
                }
            }
        }
    }

    /// Minibatch for chain step `ctx.step()`. Without replacement the data are
    /// reshuffled every epoch by a keyed permutation, so the batch is still a
    /// pure function of `(seed, step)`.
    pub fn draw(&self, ctx: &mut StepContext) -> Batch {
        match (&self.source, self.replacement) {
            (DataSource::Empirical(ds), false) => {
                let per_epoch = (ds.len() / self.batch_size) as u64;
                let epoch = ctx.step() / per_epoch;
                let slot = ctx.step() % per_epoch;
                let perm = KeyedPermutation::new(ds.len() as u64, ctx.epoch_key(epoch));
                let idx: Vec<usize> = (0..self.batch_size as u64)
                    .map(|i| perm.apply(slot * self.batch_size as u64 + i) as usize)
                    .collect();
                Batch::from_dataset(ds, &idx)
            }
            _ => self.draw_iid(ctx.rng()),
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "{};n={};replace={}",
            self.source.describe(),
            self.batch_size,
            self.replacement
        )
    }
}

/// A loss with minibatch gradients, the input the first-order optimizers need.
pub trait MinibatchProblem: Send + Sync {
    fn dim(&self) -> usize;

    fn sampler(&self) -> &BatchSampler;

    /// Gradient of the batch-averaged loss plus the `lambda * w` regularizer.
    fn batch_grad(&self, w: &[f64], batch: &Batch, out: &mut [f64]);

    fn describe(&self) -> String;
}
