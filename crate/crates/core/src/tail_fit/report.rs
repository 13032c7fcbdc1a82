use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::bootstrap::bootstrap_sorted;
use super::competitors::{competitor_fits, likelihood_ratio_test, TailModel};
use super::{low_confidence, pareto_loglik, BootstrapOptions, SortedSample, MIN_TAIL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// percentile bootstrap rerunning the cutoff search per replicate
    Bootstrap,
    /// `alpha +- z alpha / sqrt(n_tail)` at the selected cutoff
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFitOptions {
    pub ci: CiMethod,
    pub bootstrap: BootstrapOptions,
}

impl Default for TailFitOptions {
    fn default() -> Self {
        Self {
            ci: CiMethod::Bootstrap,
            bootstrap: BootstrapOptions::default(),
        }
    }
}

impl TailFitOptions {
    pub fn asymptotic() -> Self {
        Self {
            ci: CiMethod::Asymptotic,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFitReport {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub t_min: f64,
    pub ci95: (f64, f64),
    pub ci_method: CiMethod,
    pub alpha_se: f64,
    pub n_samples: usize,
    /// non-positive or non-finite inputs dropped before fitting
    pub n_discarded: usize,
    pub n_tail: usize,
    pub ks_distance: f64,
    pub pareto_loglik: f64,
    pub competitor_loglik: BTreeMap<String, f64>,
    pub lrt_statistics: BTreeMap<String, f64>,
    pub lrt_pvalues: BTreeMap<String, f64>,
    pub low_confidence: bool,
    pub flags: Vec<String>,
}

impl TailFitReport {
    pub fn ci_contains(&self, x: f64) -> bool {
        self.ci95.0 <= x && x <= self.ci95.1
    }

    pub fn ci_overlaps(&self, lo: f64, hi: f64) -> bool {
        self.ci95.0 <= hi && lo <= self.ci95.1
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Flat `key = value` lines, one per scalar; maps are dotted.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("alpha_hat", fmt(self.alpha_hat));
        kv("beta_hat", fmt(self.beta_hat));
        kv("t_min", fmt(self.t_min));
        kv("ci95_low", fmt(self.ci95.0));
        kv("ci95_high", fmt(self.ci95.1));
        kv("ci_method", format!("{:?}", self.ci_method).to_lowercase());
        kv("alpha_se", fmt(self.alpha_se));
        kv("n_samples", self.n_samples.to_string());
        kv("n_discarded", self.n_discarded.to_string());
        kv("n_tail", self.n_tail.to_string());
        kv("ks_distance", fmt(self.ks_distance));
        kv("pareto_loglik", fmt(self.pareto_loglik));
        for (k, v) in &self.competitor_loglik {
            kv(&format!("competitor_loglik.{k}"), fmt(*v));
        }
        for (k, v) in &self.lrt_statistics {
            kv(&format!("lrt_statistic.{k}"), fmt(*v));
        }
        for (k, v) in &self.lrt_pvalues {
            kv(&format!("lrt_pvalue.{k}"), fmt(*v));
        }
        kv("low_confidence", self.low_confidence.to_string());
        kv("flags", self.flags.join(","));
        s
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

/// Full pipeline: cutoff search, Pareto MLE, competitor fits, pairwise
/// likelihood-ratio tests and a confidence interval.
pub fn fit_tail(samples: &[f64], opts: &TailFitOptions) -> Result<TailFitReport> {
    let clean: Vec<f64> = samples.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    let n_discarded = samples.len() - clean.len();
    let sorted = SortedSample::new(&clean)?;
    let sel = sorted.select_tmin()?;
    let tail = &sorted.values()[sorted.len() - sel.n_tail..];
    let mut flags = Vec::new();
    if n_discarded > 0 {
        flags.push(format!("discarded_{n_discarded}_nonpositive"));
    }
    if sel.n_tail < MIN_TAIL {
        flags.push("tail_below_minimum".into());
    }

    let mut competitor_loglik = BTreeMap::new();
    let fits = competitor_fits(tail, sel.t_min)?;
    let mut put = |name: &str, ll: f64, degenerate: bool| {
        if degenerate {
            flags.push(format!("{name}_degenerate"));
        } else {
            competitor_loglik.insert(name.to_string(), ll);
        }
    };
    put("exponential", fits.exponential.loglik, fits.exponential.degenerate);
    put("lognormal", fits.lognormal.loglik, fits.lognormal.degenerate);

    let mut lrt_statistics = BTreeMap::new();
    let mut lrt_pvalues = BTreeMap::new();
    for (a, b) in [
        (TailModel::Pareto, TailModel::Exponential),
        (TailModel::Pareto, TailModel::Lognormal),
        (TailModel::Lognormal, TailModel::Exponential),
    ] {
        let key = format!("{}_vs_{}", a.name(), b.name());
        match likelihood_ratio_test(tail, sel.t_min, a, b) {
            Ok(r) => {
                lrt_statistics.insert(key.clone(), r.statistic);
                lrt_pvalues.insert(key, r.p_value);
            }
            Err(_) => flags.push(format!("{key}_undefined")),
        }
    }

    let (ci95, alpha_se) = match opts.ci {
        CiMethod::Asymptotic => {
            let se = sel.alpha / (sel.n_tail as f64).sqrt();
            let z = Normal::standard().inverse_cdf(0.5 + 0.5 * opts.bootstrap.level);
            ((sel.alpha - z * se, sel.alpha + z * se), se)
        }
        CiMethod::Bootstrap => {
            let ci = bootstrap_sorted(&sorted, &opts.bootstrap)?;
            if ci.n_failed > 0 {
                flags.push(format!("bootstrap_failed_{}", ci.n_failed));
            }
            ((ci.low, ci.high), ci.se)
        }
    };

    Ok(TailFitReport {
        alpha_hat: sel.alpha,
        beta_hat: sel.alpha + 1.0,
        t_min: sel.t_min,
        ci95,
        ci_method: opts.ci,
        alpha_se,
        n_samples: clean.len(),
        n_discarded,
        n_tail: sel.n_tail,
        ks_distance: sel.ks_distance,
        pareto_loglik: pareto_loglik(tail, sel.t_min, sel.alpha),
        competitor_loglik,
        lrt_statistics,
        lrt_pvalues,
        low_confidence: low_confidence(sel.n_tail),
        flags,
    })
}
