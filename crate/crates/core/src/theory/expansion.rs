//! Monte-Carlo check of the expansion condition
//! `inf_w P(|f(Psi(w))| > (1 + eps) |f(w)|) > 0`.
//!
//! The infimum is taken over a finite probe grid, so any positive answer is
//! only an under-approximation of the condition over the whole state space.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{ParamVec, StepContext, StepMap};
use crate::error::{Error, Result};
use crate::rng::{mix64, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub f_value: f64,
    /// estimate per entry of the epsilon grid
    pub probability: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub eps_grid: Vec<f64>,
    pub probes: Vec<ProbeResult>,
    /// infimum over probes, per epsilon
    pub infimum: Vec<f64>,
    /// epsilon with the largest infimum, and that infimum
    pub best_eps: f64,
    pub best_infimum: f64,
    pub best_stderr: f64,
    pub n_mc: usize,
    /// positive infimum, at least 3 standard errors from zero
    pub criterion_satisfied: bool,
    pub note: String,
}

/// Estimate expansion probabilities of `step_map` at each probe point.
pub fn expansion_probability(
    step_map: &dyn StepMap,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    probes: &[ParamVec],
    eps_grid: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<ExpansionReport> {
    if probes.is_empty() || eps_grid.is_empty() || n_mc == 0 {
        return Err(Error::Config("need probes, an epsilon grid and n_mc > 0".into()));
    }
    if let Some(e) = eps_grid.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::Config(format!("epsilon must be positive, got {e}")));
    }
    for p in probes {
        if p.dim() != step_map.dim() {
            return Err(Error::Dimension {
                expected: step_map.dim(),
                got: p.dim(),
            });
        }
    }
    let mut results = Vec::with_capacity(probes.len());
    for (pi, w) in probes.iter().enumerate() {
        let fw = f(w.as_slice()).abs();
        let probe_seed = mix64(seed ^ crate::rng::derive_key(pi as u64, Domain::MonteCarlo, 0));
        let counts = (0..n_mc as u64)
            .into_par_iter()
            .map(|i| {
                let mut ctx = StepContext::new(probe_seed, i);
                let mut next = vec![0.0; w.dim()];
                let mut hits = vec![0u64; eps_grid.len()];
                if step_map.step(&mut ctx, w.as_slice(), &mut next).is_ok() {
                    let fn_ = f(&next).abs();
                    for (h, e) in hits.iter_mut().zip(eps_grid) {
                        *h += u64::from(fn_ > (1.0 + e) * fw);
                    }
                }
                hits
            })
            .reduce(
                || vec![0u64; eps_grid.len()],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let n = n_mc as f64;
        let probability: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let stderr = probability.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
        results.push(ProbeResult {
            f_value: fw,
            probability,
            stderr,
        });
    }
    let infimum: Vec<f64> = (0..eps_grid.len())
        .map(|j| results.iter().map(|r| r.probability[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let best = (0..eps_grid.len())
        .max_by(|&a, &b| infimum[a].total_cmp(&infimum[b]).then(b.cmp(&a)))
        .expect("non-empty grid");
    let best_stderr = results
        .iter()
        .filter(|r| r.probability[best] == infimum[best])
        .map(|r| r.stderr[best])
        .fold(0.0, f64::max);
    let best_infimum = infimum[best];
    // with zero hits the binomial stderr is 0; use the rule-of-three bound
    let floor = 3.0 / n_mc as f64;
    let criterion_satisfied = best_infimum > 0.0 && best_infimum > 3.0 * best_stderr.max(floor / 3.0);
    Ok(ExpansionReport {
        eps_grid: eps_grid.to_vec(),
        probes: results,
        infimum,
        best_eps: eps_grid[best],
        best_infimum,
        best_stderr,
        n_mc,
        criterion_satisfied,
        note: format!(
            "infimum over {} probe point(s) only; an under-approximation of the infimum over the state space",
            probes.len()
        ),
    })
}
