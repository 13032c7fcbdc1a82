//! Monte-Carlo theory for random linear recurrences and Lipschitz chains:
//! ergodicity, Kesten-type tail exponents, moment sandwiches and the
//! expansion criterion for heavy tails.

mod expansion;
mod lipschitz;

pub use expansion::{expansion_probability, ExpansionReport, ProbeResult};
pub use lipschitz::{lipschitz_profile_sgd, moment_bounds, LipschitzProfile, MomentBounds, ProfileProblem};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::LinearCoeffSampler;
use crate::rng::{Domain, StreamRng};

/// Problems at most this large use a dense SVD; larger ones power iteration.
pub const DENSE_SVD_MAX_DIM: usize = 200;
const POWER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    SigmaMin,
    SpectralNorm,
}

/// `(sigma_min(a), ||a||_2)`.
pub fn extreme_singular_values(a: &DMatrix<f64>) -> (f64, f64) {
    if a.nrows() == 1 && a.ncols() == 1 {
        let v = a[(0, 0)].abs();
        return (v, v);
    }
    if a.nrows().max(a.ncols()) <= DENSE_SVD_MAX_DIM {
        let sv = a.singular_values();
        let max = sv.max();
        // a rectangular wide matrix has a null space: its sigma_min is 0
        let min = if a.nrows() < a.ncols() { 0.0 } else { sv.min() };
        return (min, max);
    }
    let g = a.transpose() * a;
    let lmax = power_iteration(&g, 0.0);
    let lmin = lmax - power_iteration(&g, lmax);
    (lmin.max(0.0).sqrt(), lmax.sqrt())
}

/// Largest eigenvalue of `shift I - g` (or of `g` when `shift == 0`) for
/// symmetric PSD `g`.
fn power_iteration(g: &DMatrix<f64>, shift: f64) -> f64 {
    let n = g.nrows();
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618).fract());
    v.normalize_mut();
    let apply = |v: &nalgebra::DVector<f64>| {
        if shift == 0.0 {
            g * v
        } else {
            v * shift - g * v
        }
    };
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let w = apply(&v);
        let new = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let resid = (&w - &v * new).norm();
        v = w / norm;
        lambda = new;
        if resid <= POWER_TOL * new.abs().max(1e-300) {
            break;
        }
    }
    lambda
}

/// Log singular-value extremes of `n_mc` i.i.d. coefficient draws. Draw `i`
/// uses its own Monte-Carlo stream, so results are schedule-independent.
#[derive(Debug, Clone, PartialEq)]
pub struct LogNormSample {
    pub log_sigma_min: Vec<f64>,
    pub log_spectral: Vec<f64>,
}

impl LogNormSample {
    pub fn draw(sampler: &dyn LinearCoeffSampler, n_mc: usize, seed: u64) -> Self {
        let pairs: Vec<(f64, f64)> = (0..n_mc as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = StreamRng::new(seed, Domain::MonteCarlo, i);
                let (a, _) = sampler.sample(&mut rng);
                let (lo, hi) = extreme_singular_values(&a);
                (lo.ln(), hi.ln())
            })
            .collect();
        let (log_sigma_min, log_spectral) = pairs.into_iter().unzip();
        Self {
            log_sigma_min,
            log_spectral,
        }
    }

    pub fn get(&self, which: NormKind) -> &[f64] {
        match which {
            NormKind::SigmaMin => &self.log_sigma_min,
            NormKind::SpectralNorm => &self.log_spectral,
        }
    }

    pub fn len(&self) -> usize {
        self.log_spectral.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_spectral.is_empty()
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Ergodic,
    Nonergodic,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityReport {
    pub mean_log_norm: f64,
    pub stderr: f64,
    pub n_mc: usize,
    pub verdict: Verdict,
}

/// Monte-Carlo sign test of `E log ||A||`; inconclusive within 3 standard errors of 0.
pub fn ergodicity_diagnostic(
    sampler: &dyn LinearCoeffSampler,
    n_mc: usize,
    seed: u64,
) -> Result<ErgodicityReport> {
    if n_mc < 1000 {
        return Err(Error::Config(format!("n_mc must be at least 1000, got {n_mc}")));
    }
    let sample = LogNormSample::draw(sampler, n_mc, seed);
    let (mean, se) = mean_se(&sample.log_spectral);
    let verdict = if mean == f64::NEG_INFINITY || mean + 3.0 * se < 0.0 {
        Verdict::Ergodic
    } else if mean - 3.0 * se > 0.0 {
        Verdict::Nonergodic
    } else {
        Verdict::Inconclusive
    };
    Ok(ErgodicityReport {
        mean_log_norm: mean,
        stderr: if se.is_nan() { 0.0 } else { se },
        n_mc,
        verdict,
    })
}

/// `(mean phi^s, stderr, mean ln(phi) phi^s)` over log values, computed in a
/// shifted log domain so large `s` does not overflow.
fn transform_logs(logs: &[f64], s: f64) -> (f64, f64, f64) {
    if s == 0.0 {
        return (1.0, 0.0, logs.iter().sum::<f64>() / logs.len() as f64);
    }
    let n = logs.len() as f64;
    let shift = logs
        .iter()
        .map(|l| s * l)
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return (0.0, 0.0, 0.0);
    }
    let (mut sum, mut dsum) = (0.0, 0.0);
    for &l in logs {
        let v = (s * l - shift).exp();
        sum += v;
        if v > 0.0 {
            dsum += l * v;
        }
    }
    let mean = sum / n;
    let ss: f64 = logs.iter().map(|&l| ((s * l - shift).exp() - mean).powi(2)).sum();
    let var = ss / (n - 1.0).max(1.0);
    let scale = shift.exp();
    (mean * scale, (var / n).sqrt() * scale, dsum / n * scale)
}

/// Plain Monte-Carlo estimate of `E phi(A)^s` with its standard error.
pub fn moment_transform(
    sampler: &dyn LinearCoeffSampler,
    s: f64,
    n_mc: usize,
    which: NormKind,
    seed: u64,
) -> (f64, f64) {
    let sample = LogNormSample::draw(sampler, n_mc, seed);
    let (m, se, _) = transform_logs(sample.get(which), s);
    (m, se)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootStatus {
    Found,
    /// `E phi^s < 1` on the whole search range, e.g. `||A|| <= 1` a.s.:
    /// the light-tailed regime.
    NoRootLightTail,
    /// `E log phi >= 0`: the transform never dips below one.
    NoRootNoncontracting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootEstimate {
    pub status: RootStatus,
    pub root: Option<f64>,
    pub stderr: Option<f64>,
    /// `E phi^root - 1` on the reused sample
    pub residual: Option<f64>,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KestenOptions {
    pub n_mc: usize,
    pub seed: u64,
    pub bracket: (f64, f64),
    pub tol: f64,
}

impl Default for KestenOptions {
    fn default() -> Self {
        Self {
            n_mc: 200_000,
            seed: 0,
            bracket: (0.05, 4.0),
            tol: 1e-10,
        }
    }
}

pub const MAX_ROOT_SEARCH: f64 = 64.0;
const MIN_ROOT_SEARCH: f64 = 1e-6;

/// Positive root of `s -> E phi^s - 1` over a fixed log-norm sample.
pub fn solve_root(logs: &[f64], bracket: (f64, f64), tol: f64) -> Result<RootEstimate> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Config(format!("bracket must satisfy 0 < lo < hi, got {bracket:?}")));
    }
    let h = |s: f64| transform_logs(logs, s).0 - 1.0;
    while h(lo) >= 0.0 {
        if lo <= MIN_ROOT_SEARCH {
            return Ok(RootEstimate {
                status: RootStatus::NoRootNoncontracting,
                root: None,
                stderr: None,
                residual: None,
                bracket: (lo, hi),
            });
        }
        lo = (lo / 10.0).max(MIN_ROOT_SEARCH);
    }
    while h(hi) < 0.0 {
        if hi >= MAX_ROOT_SEARCH {
            return Ok(RootEstimate {
                status: RootStatus::NoRootLightTail,
                root: None,
                stderr: None,
                residual: None,
                bracket: (lo, hi),
            });
        }
        lo = hi;
        hi = (hi * 2.0).min(MAX_ROOT_SEARCH);
    }
    let searched = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let hm = h(mid);
        if hm.abs() < tol || hi - lo < 1e-12 * hi {
            lo = mid;
            hi = mid;
            break;
        }
        if hm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let (m, se, deriv) = transform_logs(logs, root);
    Ok(RootEstimate {
        status: RootStatus::Found,
        root: Some(root),
        stderr: Some(se / deriv.abs()),
        residual: Some(m - 1.0),
        bracket: searched,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KestenResult {
    /// root of `E sigma_min(A)^s = 1`: upper end of the tail-exponent range
    pub alpha: RootEstimate,
    /// root of `E ||A||^s = 1`: lower end
    pub beta: RootEstimate,
    pub mc_samples: usize,
    /// set when `alpha_root < beta_root`, which theory rules out
    pub inconsistent: bool,
}

impl KestenResult {
    pub fn alpha_root(&self) -> Option<f64> {
        self.alpha.root
    }

    pub fn beta_root(&self) -> Option<f64> {
        self.beta.root
    }

    pub fn get(&self, which: NormKind) -> &RootEstimate {
        match which {
            NormKind::SigmaMin => &self.alpha,
            NormKind::SpectralNorm => &self.beta,
        }
    }
}

/// Both Kesten-type roots from one common-random-numbers sample.
pub fn kesten_solve(sampler: &dyn LinearCoeffSampler, opts: &KestenOptions) -> Result<KestenResult> {
    if opts.n_mc < 2 {
        return Err(Error::Config("n_mc must be at least 2".into()));
    }
    let sample = LogNormSample::draw(sampler, opts.n_mc, opts.seed);
    let alpha = solve_root(&sample.log_sigma_min, opts.bracket, opts.tol)?;
    let beta = solve_root(&sample.log_spectral, opts.bracket, opts.tol)?;
    let inconsistent = matches!((alpha.root, beta.root), (Some(a), Some(b)) if a < b - 1e-9);
    Ok(KestenResult {
        alpha,
        beta,
        mc_samples: opts.n_mc,
        inconsistent,
    })
}
