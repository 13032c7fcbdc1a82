//! Nonparametric percentile bootstrap for the tail exponent.
//!
//! Each replicate resamples with replacement, then reruns the full cutoff
//! search and MLE. Resamples are represented as multiplicity counts over the
//! sorted original sample, so no replicate needs re-sorting.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SortedSample, Weights, MIN_TAIL};
use crate::error::{Error, Result};
use crate::rng::{Domain, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub n_boot: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            n_boot: 1000,
            seed: 0,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    /// standard deviation of the replicate estimates
    pub se: f64,
    pub n_boot: usize,
    /// replicates where no finite exponent could be fitted
    pub n_failed: usize,
    pub replicates: Vec<f64>,
}

impl BootstrapCi {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }
}

/// Unbiased index below `n` from 32 random bits (multiply-shift with rejection).
#[inline]
fn index_below(n: u32, threshold: u32, bits: u32, retry: &mut impl FnMut() -> u32) -> usize {
    let mut m = u64::from(bits) * u64::from(n);
    while (m as u32) < threshold {
        m = u64::from(retry()) * u64::from(n);
    }
    (m >> 32) as usize
}

/// Fill `cum` with cumulative resampling counts: `cum[i]` draws land below `i`.
fn resample_counts(n: usize, seed: u64, b: u64, cum: &mut Vec<u32>) {
    let mut rng = StreamRng::new(seed, Domain::Bootstrap, b);
    cum.clear();
    cum.resize(n + 1, 0);
    let n32 = u32::try_from(n).expect("bootstrap sample fits in u32");
    let threshold = n32.wrapping_neg() % n32;
    let mut drawn = 0;
    while drawn < n {
        let word = rng.next_u64();
        for bits in [word as u32, (word >> 32) as u32] {
            if drawn < n {
                let i = index_below(n32, threshold, bits, &mut || rng.next_u32());
                cum[i + 1] += 1;
                drawn += 1;
            }
        }
    }
    for i in 1..=n {
        cum[i] += cum[i - 1];
    }
}

fn replicate(sample: &SortedSample, seed: u64, b: u64, cum: &mut Vec<u32>) -> Option<f64> {
    let n = sample.len();
    resample_counts(n, seed, b, cum);
    let cum = &cum[..];
    let view = sample.view(Weights::Cumulative(cum));
    let cands = view.candidates();
    // weighted suffix log-sums, needed only at candidate starts
    let mut suffix = vec![0.0; cands.len()];
    let mut acc = 0.0;
    let mut next = cands.len();
    for j in (0..n).rev() {
        acc += (cum[j + 1] - cum[j]) as f64 * sample.ln[j];
        while next > 0 && cands[next - 1] == j {
            next -= 1;
            suffix[next] = acc;
        }
        if next == 0 {
            break;
        }
    }
    view.select(|k| suffix[cands.binary_search(&k).expect("candidate index")])
        .ok()
        .map(|s| s.alpha)
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn bootstrap_sorted(sample: &SortedSample, opts: &BootstrapOptions) -> Result<BootstrapCi> {
    if opts.n_boot < 2 {
        return Err(Error::Config("n_boot must be at least 2".into()));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::Config(format!("CI level must lie in (0, 1), got {}", opts.level)));
    }
    if sample.len() < 2 * MIN_TAIL {
        return Err(Error::InsufficientData(format!(
            "bootstrap needs at least {} samples, got {}",
            2 * MIN_TAIL,
            sample.len()
        )));
    }
    let reps: Vec<Option<f64>> = (0..opts.n_boot as u64)
        .into_par_iter()
        .map_init(Vec::new, |cum, b| replicate(sample, opts.seed, b, cum))
        .collect();
    let mut alphas: Vec<f64> = reps.iter().flatten().copied().collect();
    let n_failed = opts.n_boot - alphas.len();
    if alphas.len() < 2 {
        return Err(Error::Degenerate("fewer than two bootstrap replicates succeeded".into()));
    }
    let mean = alphas.iter().sum::<f64>() / alphas.len() as f64;
    let se = (alphas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (alphas.len() - 1) as f64).sqrt();
    let replicates = alphas.clone();
    alphas.sort_unstable_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - opts.level);
    Ok(BootstrapCi {
        low: quantile_sorted(&alphas, tail),
        high: quantile_sorted(&alphas, 1.0 - tail),
        se,
        n_boot: opts.n_boot,
        n_failed,
        replicates,
    })
}

/// Percentile bootstrap interval for the survival exponent `alpha`.
pub fn bootstrap_ci(samples: &[f64], opts: &BootstrapOptions) -> Result<BootstrapCi> {
    bootstrap_sorted(&SortedSample::new(samples)?, opts)
}
