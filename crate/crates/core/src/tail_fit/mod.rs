//! Power-law tail estimation for step-norm and weight-norm samples.
//!
//! Conventions: the survival exponent `alpha` satisfies `P(X > t) ~ t^-alpha`
//! and the density exponent is `beta = alpha + 1`. Fits are continuous
//! Pareto maximum likelihood above a cutoff `t_min` chosen by minimising the
//! Kolmogorov–Smirnov distance over a rank grid.

mod bootstrap;
mod competitors;
mod report;

pub use bootstrap::{bootstrap_ci, BootstrapCi, BootstrapOptions};
pub(crate) use bootstrap::quantile_sorted;
pub use competitors::{
    competitor_fits, likelihood_ratio_test, CompetitorFits, ExponentialFit, FittedModel,
    LognormalFit, LrtResult, TailModel,
};
pub use report::{fit_tail, CiMethod, TailFitOptions, TailFitReport};

use crate::error::{Error, Result};

/// Smallest tail considered by the cutoff search.
pub const MIN_TAIL: usize = 50;
/// Upper bound on the number of cutoff candidates.
pub const MAX_CANDIDATES: usize = 200;
/// Fits whose tail has relative standard error `1/sqrt(n_tail)` at least this
/// large are flagged low-confidence.
pub const LOW_CONFIDENCE_REL_SE: f64 = 0.1;

const KS_BLOCK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoFit {
    pub alpha: f64,
    pub beta: f64,
    pub t_min: f64,
    pub n_tail: usize,
    pub loglik: f64,
}

/// Pareto log-likelihood of `tail` (all `>= t_min`) at survival exponent `alpha`.
pub fn pareto_loglik(tail: &[f64], t_min: f64, alpha: f64) -> f64 {
    let n = tail.len() as f64;
    let sum_ln: f64 = tail.iter().map(|x| x.ln()).sum();
    n * alpha.ln() + n * alpha * t_min.ln() - (alpha + 1.0) * sum_ln
}

/// Continuous Pareto MLE for the samples at or above `t_min`.
pub fn pareto_mle(samples: &[f64], t_min: f64) -> Result<ParetoFit> {
    if !(t_min > 0.0) || !t_min.is_finite() {
        return Err(Error::InvalidInput(format!("t_min must be positive, got {t_min}")));
    }
    check_samples(samples)?;
    let tail: Vec<f64> = samples.iter().copied().filter(|&x| x >= t_min).collect();
    if tail.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} sample(s) at or above t_min = {t_min}",
            tail.len()
        )));
    }
    let ln_t = t_min.ln();
    let s: f64 = tail.iter().map(|x| x.ln() - ln_t).sum();
    if !(s > 0.0) {
        return Err(Error::Degenerate(
            "every tail sample equals t_min; exponent estimate is infinite".into(),
        ));
    }
    let alpha = tail.len() as f64 / s;
    Ok(ParetoFit {
        alpha,
        beta: alpha + 1.0,
        t_min,
        n_tail: tail.len(),
        loglik: pareto_loglik(&tail, t_min, alpha),
    })
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if let Some(bad) = samples.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "tail samples must be positive and finite, found {bad}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TminSelection {
    pub t_min: f64,
    pub ks_distance: f64,
    pub alpha: f64,
    pub n_tail: usize,
    pub n_candidates: usize,
    pub low_confidence: bool,
}

impl TminSelection {
    pub fn fit(&self) -> (f64, f64) {
        (self.alpha, self.alpha + 1.0)
    }
}

/// A sorted positive sample with cached logarithms, reusable across cutoff
/// searches and bootstrap replicates.
#[derive(Debug, Clone)]
pub struct SortedSample {
    x: Vec<f64>,
    ln: Vec<f64>,
    /// `suffix_ln[k] = sum_{j >= k} ln x_j`
    suffix_ln: Vec<f64>,
}

impl SortedSample {
    pub fn new(samples: &[f64]) -> Result<Self> {
        check_samples(samples)?;
        let mut x = samples.to_vec();
        x.sort_unstable_by(f64::total_cmp);
        let ln: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let mut suffix_ln = vec![0.0; x.len() + 1];
        for k in (0..x.len()).rev() {
            suffix_ln[k] = suffix_ln[k + 1] + ln[k];
        }
        Ok(Self { x, ln, suffix_ln })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn select_tmin(&self) -> Result<TminSelection> {
        if self.len() < 2 * MIN_TAIL {
            return Err(Error::InsufficientData(format!(
                "cutoff search needs at least {} samples, got {}",
                2 * MIN_TAIL,
                self.len()
            )));
        }
        let view = self.view(Weights::Unit);
        view.select(|k| self.suffix_ln[k])
    }

    pub(crate) fn view<'a>(&'a self, weights: Weights<'a>) -> View<'a> {
        View {
            x: &self.x,
            ln: &self.ln,
            weights,
        }
    }
}

/// Prefix weights over a sorted sample: unit weights, or bootstrap counts
/// stored as cumulative sums (`cum[i]` = weight of indices `< i`).
#[derive(Debug, Clone, Copy)]
pub(crate) enum Weights<'a> {
    Unit,
    Cumulative(&'a [u32]),
}

impl Weights<'_> {
    #[inline]
    fn cum(&self, i: usize) -> f64 {
        match self {
            Weights::Unit => i as f64,
            Weights::Cumulative(c) => c[i] as f64,
        }
    }
}

pub(crate) struct View<'a> {
    x: &'a [f64],
    ln: &'a [f64],
    weights: Weights<'a>,
}

impl View<'_> {
    fn n(&self) -> usize {
        self.x.len()
    }

    fn total(&self) -> f64 {
        self.weights.cum(self.n())
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.cum(i + 1) - self.weights.cum(i)
    }

    /// Tail start indices for log-spaced tail sizes (by weight), each
    /// snapped to the first occurrence of its value; ascending, deduplicated.
    pub(crate) fn candidates(&self) -> Vec<usize> {
        let n = self.n();
        let total = self.total();
        if total < MIN_TAIL as f64 {
            return Vec::new();
        }
        let sizes = log_spaced(MIN_TAIL as f64, total, MAX_CANDIDATES);
        let mut out: Vec<usize> = sizes
            .into_iter()
            .filter_map(|size| {
                // largest k with weight(k..n) >= size
                let (mut lo, mut hi) = (0usize, n);
                while lo < hi {
                    let mid = (lo + hi).div_ceil(2);
                    if total - self.weights.cum(mid) >= size {
                        lo = mid;
                    } else {
                        hi = mid - 1;
                    }
                }
                let mut k = lo;
                while k < n && self.weight(k) == 0.0 {
                    k += 1;
                }
                if k == n {
                    return None;
                }
                while k > 0 && self.x[k - 1] == self.x[k] {
                    k -= 1;
                }
                Some(k)
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Exact KS distance between the tail empirical CDF from index `k` and
    /// the fitted Pareto law. Block upper bounds skip most of the sample.
    fn ks(&self, k: usize, alpha: f64) -> f64 {
        let n = self.n();
        let c0 = self.weights.cum(k);
        let tail = Tail {
            view: self,
            ln_t: self.ln[k],
            c0,
            w: self.total() - c0,
            alpha,
        };
        let mut best = 0.0;
        tail.scan(k, n, &mut best);
        best
    }

    /// Cutoff search; `suffix_ln(k)` returns the weighted `sum_{j >= k} ln x_j`.
    pub(crate) fn select(&self, suffix_ln: impl Fn(usize) -> f64) -> Result<TminSelection> {
        let cands = self.candidates();
        let total = self.total();
        let mut best: Option<TminSelection> = None;
        for &k in &cands {
            let m = total - self.weights.cum(k);
            let s = suffix_ln(k) - m * self.ln[k];
            if !(s > 0.0) || m < 2.0 {
                continue;
            }
            let alpha = m / s;
            let d = self.ks(k, alpha);
            if best.is_none_or(|b| d < b.ks_distance) {
                best = Some(TminSelection {
                    t_min: self.x[k],
                    ks_distance: d,
                    alpha,
                    n_tail: m as usize,
                    n_candidates: cands.len(),
                    low_confidence: low_confidence(m as usize),
                });
            }
        }
        best.ok_or_else(|| Error::Degenerate("no cutoff candidate yields a finite exponent".into()))
    }
}

/// One candidate tail of a [`View`] under a fitted exponent.
struct Tail<'v, 'a> {
    view: &'v View<'a>,
    ln_t: f64,
    c0: f64,
    w: f64,
    alpha: f64,
}

impl Tail<'_, '_> {
    #[inline]
    fn cdf(&self, j: usize) -> f64 {
        1.0 - (self.alpha * (self.ln_t - self.view.ln[j])).exp()
    }

    /// Empirical CDF just below index `j`.
    #[inline]
    fn ecdf(&self, j: usize) -> f64 {
        (self.view.weights.cum(j) - self.c0) / self.w
    }

    #[inline]
    fn point(&self, j: usize, f: f64) -> f64 {
        (self.ecdf(j + 1) - f).max(f - self.ecdf(j))
    }

    /// Raise `best` to the largest deviation on `[a, b)`. The range is cut
    /// into ~sqrt-sized blocks; since both CDFs are non-decreasing, a block
    /// `[s, e)` deviates by at most `max(Fn(e) - F(s), F(e - 1) - Fn(s))`,
    /// and only blocks whose bound beats `best` are opened.
    fn scan(&self, a: usize, b: usize, best: &mut f64) {
        let len = b - a;
        if len <= KS_BLOCK {
            for j in a..b {
                *best = best.max(self.point(j, self.cdf(j)));
            }
            return;
        }
        let block = KS_BLOCK.max((len as f64).sqrt() as usize / 4);
        let starts: Vec<usize> = (a..b).step_by(block).collect();
        let mut f: Vec<f64> = starts.iter().map(|&s| self.cdf(s)).collect();
        f.push(self.cdf(b - 1));
        let mut bounds = Vec::with_capacity(starts.len());
        for (i, &s) in starts.iter().enumerate() {
            let e = (s + block).min(b);
            *best = best.max(self.point(s, f[i]));
            // F(e) >= F(e - 1) bounds the last value from above
            bounds.push((self.ecdf(e) - f[i]).max(f[i + 1] - self.ecdf(s)));
        }
        for (i, &s) in starts.iter().enumerate() {
            if bounds[i] > *best {
                self.scan(s + 1, (s + block).min(b), best);
            }
        }
    }
}

pub(crate) fn low_confidence(n_tail: usize) -> bool {
    n_tail < MIN_TAIL || 1.0 / (n_tail as f64).sqrt() >= LOW_CONFIDENCE_REL_SE
}

fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if hi <= lo || count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round().clamp(lo, hi))
        .collect()
}

/// Choose `t_min` minimising the KS distance; ties go to the smaller cutoff.
pub fn select_tmin(samples: &[f64]) -> Result<TminSelection> {
    SortedSample::new(samples)?.select_tmin()
}

#[cfg(test)]
pub(crate) mod testutil {
    use rand::Rng;
    use rand_distr::StandardNormal;

    use crate::rng::{Domain, StreamRng};

    pub fn pareto(alpha: f64, scale: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = StreamRng::new(seed, Domain::MonteCarlo, 17);
        (0..n)
            .map(|_| {
                let u: f64 = 1.0 - rng.random::<f64>();
                scale * u.powf(-1.0 / alpha)
            })
            .collect()
    }

    pub fn exponential(rate: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = StreamRng::new(seed, Domain::MonteCarlo, 18);
        (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() / rate).collect()
    }

    pub fn lognormal(mu: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = StreamRng::new(seed, Domain::MonteCarlo, 19);
        (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            })
            .collect()
    }
}
