//! Iterated random functions `W_{k+1} = Psi(W_k, X_k)`.
//!
//! [`run_chain`] applies a [`StepMap`] `n_steps` times, drawing the per-step
//! randomness from a counter-based stream keyed by `(seed, step index)`. Step
//! norms are recorded at full rate after burn-in; iterates are decimated.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Domain, StreamRng};

/// Iterates whose norm exceeds this are treated as blown up.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// A flat real parameter vector (weights, possibly augmented with optimizer
/// state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVec(Vec<f64>);

impl ParamVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("parameter vector must be non-empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite parameter at index {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        euclid(&self.0)
    }
}

impl AsRef<[f64]> for ParamVec {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Named, disjoint slices of an augmented state vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedLayout {
    pub blocks: Vec<(String, Range<usize>)>,
}

impl AugmentedLayout {
    pub fn weights_only(dim: usize) -> Self {
        Self {
            blocks: vec![("w".to_string(), 0..dim)],
        }
    }

    /// Build from named block lengths, laid out in order.
    pub fn from_blocks(blocks: &[(&str, usize)]) -> Self {
        let mut start = 0;
        let blocks = blocks
            .iter()
            .map(|(name, len)| {
                let r = start..start + len;
                start += len;
                (name.to_string(), r)
            })
            .collect();
        Self { blocks }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|(_, r)| r.end).max().unwrap_or(0)
    }

    pub fn block(&self, name: &str) -> Option<Range<usize>> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }

    /// The model weights; falls back to the whole vector.
    pub fn weights(&self) -> Range<usize> {
        self.block("w").unwrap_or(0..self.dim())
    }

    /// Blocks are disjoint and tile `0..dim`.
    pub fn is_partition(&self) -> bool {
        let mut ranges: Vec<_> = self.blocks.iter().map(|(_, r)| r.clone()).collect();
        ranges.sort_by_key(|r| r.start);
        let mut next = 0;
        for r in ranges {
            if r.start != next || r.end < r.start {
                return false;
            }
            next = r.end;
        }
        true
    }
}

/// Per-step randomness handed to a [`StepMap`].
pub struct StepContext {
    seed: u64,
    step: u64,
    rng: StreamRng,
}

impl StepContext {
    pub fn new(seed: u64, step: u64) -> Self {
        Self {
            seed,
            step,
            rng: StreamRng::for_step(seed, step),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn rng(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    /// A stream shared by every step of the same epoch.
    pub fn epoch_key(&self, epoch: u64) -> u64 {
        crate::rng::derive_key(self.seed, Domain::Epoch, epoch)
    }
}

/// Returned by a step that cannot be taken (e.g. a singular Newton system).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepFailure(pub String);

/// One transition of a time-homogeneous Markov chain.
pub trait StepMap: Send + Sync {
    fn dim(&self) -> usize;

    fn layout(&self) -> AugmentedLayout {
        AugmentedLayout::weights_only(self.dim())
    }

    /// Write `Psi(state, X)` into `next`; must be deterministic given the
    /// context's stream.
    fn step(
        &self,
        ctx: &mut StepContext,
        state: &[f64],
        next: &mut [f64],
    ) -> std::result::Result<(), StepFailure>;

    /// Parameters that identify this map, folded into the trace fingerprint.
    fn describe(&self) -> String;
}

impl<T: StepMap + ?Sized> StepMap for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn layout(&self) -> AugmentedLayout {
        (**self).layout()
    }
    fn step(
        &self,
        ctx: &mut StepContext,
        state: &[f64],
        next: &mut [f64],
    ) -> std::result::Result<(), StepFailure> {
        (**self).step(ctx, state, next)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<T: StepMap + ?Sized> StepMap for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn layout(&self) -> AugmentedLayout {
        (**self).layout()
    }
    fn step(
        &self,
        ctx: &mut StepContext,
        state: &[f64],
        next: &mut [f64],
    ) -> std::result::Result<(), StepFailure> {
        (**self).step(ctx, state, next)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// A deterministic map given by a closure; mostly for tests and examples.
pub struct FnStep<F> {
    dim: usize,
    name: String,
    f: F,
}

impl<F> FnStep<F>
where
    F: Fn(&mut StepContext, &[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, name: impl Into<String>, f: F) -> Self {
        Self {
            dim,
            name: name.into(),
            f,
        }
    }
}

impl<F> StepMap for FnStep<F>
where
    F: Fn(&mut StepContext, &[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn step(
        &self,
        ctx: &mut StepContext,
        state: &[f64],
        next: &mut [f64],
    ) -> std::result::Result<(), StepFailure> {
        (self.f)(ctx, state, next);
        Ok(())
    }

    fn describe(&self) -> String {
        format!("fn:{}:{}", self.name, self.dim)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub seed: u64,
    pub n_steps: u64,
    pub burn_in: u64,
    pub decimation: u64,
    pub record_step_norms: bool,
}

impl ChainConfig {
    /// Burn-in defaults to 10% of the run.
    pub fn new(seed: u64, n_steps: u64) -> Self {
        Self {
            seed,
            n_steps,
            burn_in: n_steps / 10,
            decimation: 1,
            record_step_norms: true,
        }
    }

    pub fn with_burn_in(mut self, burn_in: u64) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_decimation(mut self, decimation: u64) -> Self {
        self.decimation = decimation;
        self
    }

    pub fn with_step_norms(mut self, on: bool) -> Self {
        self.record_step_norms = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        if self.burn_in + 1 > self.n_steps {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than n_steps ({})",
                self.burn_in, self.n_steps
            )));
        }
        if self.decimation == 0 {
            return Err(Error::Config("decimation must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of iterates a complete run records.
    pub fn recorded_iterates(&self) -> u64 {
        (self.n_steps - self.burn_in) / self.decimation
    }
}

/// Decimated record of a chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    dim: usize,
    iterates: Vec<f64>,
    pub step_norms: Vec<f64>,
    pub final_state: ParamVec,
    pub config: ChainConfig,
    pub config_fingerprint: String,
    pub layout: AugmentedLayout,
    /// First step index (1-based) whose output was rejected.
    pub diverged_at: Option<u64>,
    pub failure: Option<String>,
}

impl ChainTrace {
    /// Wrap externally recorded iterates (row-major, `dim` per row) as an
    /// undecimated trace with no burn-in, e.g. for re-analysis.
    pub fn from_recorded(dim: usize, iterates: Vec<f64>, step_norms: Vec<f64>) -> Result<Self> {
        if dim == 0 || iterates.is_empty() || iterates.len() % dim != 0 {
            return Err(Error::Config(format!(
                "{} values do not form rows of dimension {dim}",
                iterates.len()
            )));
        }
        let n = (iterates.len() / dim) as u64;
        let final_state = ParamVec::new(iterates[iterates.len() - dim..].to_vec())?;
        let config = ChainConfig::new(0, n).with_burn_in(0);
        let text: Vec<String> = iterates.iter().map(|v| format!("{v:e}")).collect();
        Ok(Self {
            dim,
            config_fingerprint: fingerprint(&format!("recorded;dim={dim};[{}]", text.join(","))),
            iterates,
            step_norms,
            final_state,
            config,
            layout: AugmentedLayout::weights_only(dim),
            diverged_at: None,
            failure: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.iterates.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub fn iterate(&self, i: usize) -> &[f64] {
        &self.iterates[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iterates(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.iterates.chunks_exact(self.dim)
    }

    /// Row-major `len x dim` block of recorded iterates.
    pub fn iterate_matrix(&self) -> &[f64] {
        &self.iterates
    }

    /// Values of coordinate `j` across the recorded iterates.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.iterates().map(|w| w[j]).collect()
    }

    /// Euclidean norms of the weight block of each recorded iterate.
    pub fn weight_norms(&self) -> Vec<f64> {
        let r = self.layout.weights();
        self.iterates().map(|w| euclid(&w[r.clone()])).collect()
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some() || self.failure.is_some()
    }
}

fn is_blown_up(v: &[f64]) -> bool {
    v.iter().any(|x| !x.is_finite()) || euclid(v) > DIVERGENCE_NORM
}

/// Stable hex fingerprint of a text description.
pub fn fingerprint(text: &str) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn trace_fingerprint(step_map: &dyn StepMap, w0: &ParamVec, cfg: &ChainConfig) -> String {
    let w0_text: Vec<String> = w0.as_slice().iter().map(|v| format!("{v:e}")).collect();
    fingerprint(&format!(
        "seed={};n_steps={};burn_in={};decimation={};norms={};map={};w0=[{}]",
        cfg.seed,
        cfg.n_steps,
        cfg.burn_in,
        cfg.decimation,
        cfg.record_step_norms,
        step_map.describe(),
        w0_text.join(",")
    ))
}

/// Run one chain from `w0`.
///
/// Divergence (a non-finite entry, or a norm beyond [`DIVERGENCE_NORM`]) and
/// step failures truncate the trace at the offending step; they are reported
/// on the trace rather than as errors.
pub fn run_chain(step_map: &dyn StepMap, w0: &ParamVec, cfg: &ChainConfig) -> Result<ChainTrace> {
    cfg.validate()?;
    let dim = step_map.dim();
    if w0.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: w0.dim(),
        });
    }
    let layout = step_map.layout();
    let weights = layout.weights();
    let mut trace = ChainTrace {
        dim,
        iterates: Vec::with_capacity(cfg.recorded_iterates() as usize * dim),
        step_norms: Vec::with_capacity(if cfg.record_step_norms {
            (cfg.n_steps - cfg.burn_in) as usize
        } else {
            0
        }),
        final_state: w0.clone(),
        config: cfg.clone(),
        config_fingerprint: trace_fingerprint(step_map, w0, cfg),
        layout,
        diverged_at: None,
        failure: None,
    };

    let mut state = w0.as_slice().to_vec();
    let mut next = vec![0.0; dim];
    for k in 1..=cfg.n_steps {
        let mut ctx = StepContext::new(cfg.seed, k - 1);
        if let Err(StepFailure(msg)) = step_map.step(&mut ctx, &state, &mut next) {
            trace.failure = Some(format!("step {k}: {msg}"));
            trace.diverged_at = Some(k);
            break;
        }
        if is_blown_up(&next) {
            trace.diverged_at = Some(k);
            break;
        }
        if k > cfg.burn_in {
            if cfg.record_step_norms {
                let s: f64 = next[weights.clone()]
                    .iter()
                    .zip(&state[weights.clone()])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                trace.step_norms.push(s.sqrt());
            }
            if (k - cfg.burn_in) % cfg.decimation == 0 {
                trace.iterates.extend_from_slice(&next);
            }
        }
        std::mem::swap(&mut state, &mut next);
    }
    trace.final_state = ParamVec(state);
    Ok(trace)
}

/// Run `n_chains` independent chains; chain `i` uses seed `cfg.seed + i`.
pub fn run_ensemble(
    step_map: &dyn StepMap,
    w0: &ParamVec,
    cfg: &ChainConfig,
    n_chains: usize,
) -> Result<Vec<ChainTrace>> {
    if n_chains == 0 {
        return Err(Error::Config("n_chains must be at least 1".into()));
    }
    cfg.validate()?;
    (0..n_chains as u64)
        .into_par_iter()
        .map(|i| {
            let c = ChainConfig {
                seed: cfg.seed.wrapping_add(i),
                ..cfg.clone()
            };
            run_chain(step_map, w0, &c)
        })
        .collect()
}

/// Serial counterpart of [`run_ensemble`].
pub fn run_ensemble_serial(
    step_map: &dyn StepMap,
    w0: &ParamVec,
    cfg: &ChainConfig,
    n_chains: usize,
) -> Result<Vec<ChainTrace>> {
    if n_chains == 0 {
        return Err(Error::Config("n_chains must be at least 1".into()));
    }
    (0..n_chains as u64)
        .map(|i| {
            let c = ChainConfig {
                seed: cfg.seed.wrapping_add(i),
                ..cfg.clone()
            };
            run_chain(step_map, w0, &c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn affine_half() -> FnStep<impl Fn(&mut StepContext, &[f64], &mut [f64]) + Send + Sync> {
        FnStep::new(1, "half-plus-one", |_, w, out| out[0] = 0.5 * w[0] + 1.0)
    }

    fn noisy() -> FnStep<impl Fn(&mut StepContext, &[f64], &mut [f64]) + Send + Sync> {
        FnStep::new(2, "noisy", |ctx, w, out| {
            let z: f64 = ctx.rng().sample(StandardNormal);
            let u: f64 = ctx.rng().random();
            out[0] = 0.9 * w[0] + z;
            out[1] = 0.5 * w[1] + u;
        })
    }

    #[test]
    fn geometric_fixed_point() {
        let cfg = ChainConfig::new(0, 50).with_burn_in(0);
        let t = run_chain(&affine_half(), &ParamVec::zeros(1), &cfg).unwrap();
        assert!((t.final_state.as_slice()[0] - 2.0).abs() < 1e-12);
        assert_eq!(t.len(), 50);
        assert_eq!(t.step_norms.len(), 50);
    }

    #[test]
    fn identity_keeps_w0() {
        let id = FnStep::new(3, "id", |_, w: &[f64], out: &mut [f64]| out.copy_from_slice(w));
        let w0 = ParamVec::new(vec![1.5, -2.0, 3.25]).unwrap();
        let cfg = ChainConfig::new(9, 20);
        let t = run_chain(&id, &w0, &cfg).unwrap();
        assert!(t.iterates().all(|w| w == w0.as_slice()));
        assert!(t.step_norms.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn iterate_count_and_decimation_consistency() {
        let full = ChainConfig::new(5, 1003).with_burn_in(100);
        let dec = full.clone().with_decimation(7);
        let a = run_chain(&noisy(), &ParamVec::zeros(2), &full).unwrap();
        let b = run_chain(&noisy(), &ParamVec::zeros(2), &dec).unwrap();
        assert_eq!(b.len() as u64, (1003 - 100) / 7);
        assert_eq!(a.len(), 903);
        for (i, w) in b.iterates().enumerate() {
            assert_eq!(w, a.iterate(7 * i + 6));
        }
        assert_eq!(a.step_norms, b.step_norms);
    }

    #[test]
    fn step_norms_independent_of_recording() {
        let on = ChainConfig::new(5, 300);
        let off = on.clone().with_step_norms(false);
        let a = run_chain(&noisy(), &ParamVec::zeros(2), &on).unwrap();
        let b = run_chain(&noisy(), &ParamVec::zeros(2), &off).unwrap();
        assert_eq!(a.iterate_matrix(), b.iterate_matrix());
        assert!(b.step_norms.is_empty());
    }

    #[test]
    fn divergence_truncates() {
        let blow = FnStep::new(1, "x10", |_, w: &[f64], out: &mut [f64]| out[0] = 10.0 * w[0]);
        let cfg = ChainConfig::new(0, 100).with_burn_in(0);
        let t = run_chain(&blow, &ParamVec::new(vec![1.0]).unwrap(), &cfg).unwrap();
        assert_eq!(t.diverged_at, Some(13));
        assert_eq!(t.len(), 12);
        assert!(t.iterates().all(|w| w[0].is_finite() && w[0] <= 1e12));
        assert!(t.step_norms.iter().all(|s| s.is_finite()));

        let nan = FnStep::new(1, "nan", |ctx: &mut StepContext, _: &[f64], out: &mut [f64]| {
            out[0] = if ctx.step() == 4 { f64::NAN } else { 1.0 }
        });
        let t = run_chain(&nan, &ParamVec::zeros(1), &cfg).unwrap();
        assert_eq!(t.diverged_at, Some(5));
        assert_eq!(t.final_state.as_slice(), &[1.0]);
    }

    #[test]
    fn config_validation() {
        assert!(ChainConfig::new(0, 0).validate().is_err());
        assert!(ChainConfig::new(0, 10).with_burn_in(10).validate().is_err());
        assert!(ChainConfig::new(0, 10).with_decimation(0).validate().is_err());
        assert!(ChainConfig::new(0, 10).with_burn_in(9).validate().is_ok());
        let err = run_chain(&affine_half(), &ParamVec::zeros(2), &ChainConfig::new(0, 5));
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn ensemble_is_schedule_independent() {
        let cfg = ChainConfig::new(11, 500);
        let par = run_ensemble(&noisy(), &ParamVec::zeros(2), &cfg, 4).unwrap();
        let ser = run_ensemble_serial(&noisy(), &ParamVec::zeros(2), &cfg, 4).unwrap();
        assert_eq!(par, ser);
        assert_ne!(par[0].step_norms, par[1].step_norms);
        let single = run_chain(
            &noisy(),
            &ParamVec::zeros(2),
            &ChainConfig {
                seed: 13,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(single, par[2]);

        let det = run_ensemble(&affine_half(), &ParamVec::zeros(1), &cfg, 3).unwrap();
        assert_eq!(det[0].iterate_matrix(), det[1].iterate_matrix());
        assert_eq!(det[1].iterate_matrix(), det[2].iterate_matrix());
        assert!(run_ensemble(&affine_half(), &ParamVec::zeros(1), &cfg, 0).is_err());
    }

    #[test]
    fn layout_partition() {
        let l = AugmentedLayout::from_blocks(&[("v", 3), ("w", 3)]);
        assert!(l.is_partition());
        assert_eq!(l.weights(), 3..6);
        assert_eq!(l.dim(), 6);
    }
}
