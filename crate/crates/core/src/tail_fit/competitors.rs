//! Alternative tail laws and Vuong's normalised likelihood-ratio test.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::pareto_mle;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailModel {
    Pareto,
    Exponential,
    Lognormal,
}

impl TailModel {
    pub fn name(self) -> &'static str {
        match self {
            TailModel::Pareto => "pareto",
            TailModel::Exponential => "exponential",
            TailModel::Lognormal => "lognormal",
        }
    }
}

/// Exponential law on the excesses `x - t_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub rate: f64,
    pub t_min: f64,
    pub n_tail: usize,
    pub loglik: f64,
    pub degenerate: bool,
}

/// Lognormal law conditioned on `x >= t_min`, fitted by maximising the
/// truncated likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalFit {
    pub mu: f64,
    pub sigma: f64,
    pub t_min: f64,
    pub n_tail: usize,
    pub loglik: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetitorFits {
    pub exponential: ExponentialFit,
    pub lognormal: LognormalFit,
}

/// A fitted tail law with a pointwise log density on `[t_min, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FittedModel {
    Pareto { alpha: f64, t_min: f64 },
    Exponential { rate: f64, t_min: f64 },
    Lognormal { mu: f64, sigma: f64, t_min: f64 },
}

impl FittedModel {
    pub fn fit(tail: &[f64], t_min: f64, model: TailModel) -> Result<Self> {
        match model {
            TailModel::Pareto => {
                let fit = pareto_mle(tail, t_min)?;
                Ok(FittedModel::Pareto {
                    alpha: fit.alpha,
                    t_min,
                })
            }
            TailModel::Exponential => {
                let fit = fit_exponential(tail, t_min);
                if fit.degenerate {
                    return Err(Error::Degenerate("exponential fit: zero mean excess".into()));
                }
                Ok(FittedModel::Exponential { rate: fit.rate, t_min })
            }
            TailModel::Lognormal => {
                let fit = fit_lognormal(tail, t_min);
                if fit.degenerate {
                    return Err(Error::Degenerate("lognormal fit: zero log-variance".into()));
                }
                Ok(FittedModel::Lognormal {
                    mu: fit.mu,
                    sigma: fit.sigma,
                    t_min,
                })
            }
        }
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        match *self {
            FittedModel::Pareto { alpha, t_min } => alpha.ln() + alpha * t_min.ln() - (alpha + 1.0) * x.ln(),
            FittedModel::Exponential { rate, t_min } => rate.ln() - rate * (x - t_min),
            FittedModel::Lognormal { mu, sigma, t_min } => {
                let z = (x.ln() - mu) / sigma;
                -0.5 * z * z - x.ln() - sigma.ln() - 0.5 * (2.0 * PI).ln()
                    - ln_normal_sf((t_min.ln() - mu) / sigma)
            }
        }
    }
}

/// `ln P(Z > z)` for standard normal `Z`, accurate far into the tail.
pub(crate) fn ln_normal_sf(z: f64) -> f64 {
    if z < 25.0 {
        (0.5 * erfc(z / SQRT_2)).ln()
    } else {
        let z2 = z * z;
        -0.5 * z2 - (z * (2.0 * PI).sqrt()).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

fn tail_of(samples: &[f64], t_min: f64) -> Vec<f64> {
    samples.iter().copied().filter(|&x| x >= t_min).collect()
}

fn fit_exponential(tail: &[f64], t_min: f64) -> ExponentialFit {
    let m = tail.len() as f64;
    let mean_excess = tail.iter().map(|x| x - t_min).sum::<f64>() / m;
    let degenerate = !(mean_excess > 0.0);
    let rate = 1.0 / mean_excess;
    ExponentialFit {
        rate,
        t_min,
        n_tail: tail.len(),
        loglik: if degenerate { f64::NAN } else { m * rate.ln() - m },
        degenerate,
    }
}

fn lognormal_loglik(m: f64, s1: f64, s2: f64, ln_t: f64, mu: f64, sigma: f64) -> f64 {
    let ss = s2 - 2.0 * mu * s1 + m * mu * mu;
    -m * sigma.ln() - 0.5 * m * (2.0 * PI).ln() - ss / (2.0 * sigma * sigma) - s1
        - m * ln_normal_sf((ln_t - mu) / sigma)
}

fn fit_lognormal(tail: &[f64], t_min: f64) -> LognormalFit {
    let m = tail.len() as f64;
    let s1: f64 = tail.iter().map(|x| x.ln()).sum();
    let s2: f64 = tail.iter().map(|x| x.ln().powi(2)).sum();
    let mu0 = s1 / m;
    let var0 = tail.iter().map(|x| (x.ln() - mu0).powi(2)).sum::<f64>() / m;
    // zero up to rounding of the mean
    if !(var0.sqrt() > 1e-12 * mu0.abs().max(1.0)) || m < 2.0 {
        return LognormalFit {
            mu: mu0,
            sigma: 0.0,
            t_min,
            n_tail: tail.len(),
            loglik: f64::NAN,
            degenerate: true,
        };
    }
    let ln_t = t_min.ln();
    // optimise over (mu, ln sigma); the plug-in moments are the start point
    let nll = |p: [f64; 2]| {
        let v = -lognormal_loglik(m, s1, s2, ln_t, p[0], p[1].exp());
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let sd0 = var0.sqrt();
    let ([mu, ln_sigma], best) = nelder_mead(nll, [mu0, sd0.ln()], [sd0, 0.5], 2000, 1e-12);
    LognormalFit {
        mu,
        sigma: ln_sigma.exp(),
        t_min,
        n_tail: tail.len(),
        loglik: -best,
        degenerate: false,
    }
}

/// Small 2-D Nelder–Mead minimiser; returns the best vertex and its value.
fn nelder_mead(
    f: impl Fn([f64; 2]) -> f64,
    x0: [f64; 2],
    step: [f64; 2],
    max_iter: usize,
    ftol: f64,
) -> ([f64; 2], f64) {
    let mut s = [x0, [x0[0] + step[0], x0[1]], [x0[0], x0[1] + step[1]]];
    let mut fs = s.map(&f);
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..max_iter {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&i, &j| fs[i].total_cmp(&fs[j]));
        s = idx.map(|i| s[i]);
        fs = idx.map(|i| fs[i]);
        if (fs[2] - fs[0]).abs() <= ftol * (1.0 + fs[0].abs()) {
            break;
        }
        let c = lerp(s[0], s[1], 0.5);
        let xr = lerp(c, s[2], -1.0);
        let fr = f(xr);
        if fr < fs[0] {
            let xe = lerp(c, s[2], -2.0);
            let fe = f(xe);
            if fe < fr {
                (s[2], fs[2]) = (xe, fe);
            } else {
                (s[2], fs[2]) = (xr, fr);
            }
        } else if fr < fs[1] {
            (s[2], fs[2]) = (xr, fr);
        } else {
            let xc = if fr < fs[2] { lerp(c, xr, 0.5) } else { lerp(c, s[2], 0.5) };
            let fc = f(xc);
            if fc < fs[2].min(fr) {
                (s[2], fs[2]) = (xc, fc);
            } else {
                for i in 1..3 {
                    s[i] = lerp(s[0], s[i], 0.5);
                    fs[i] = f(s[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| fs[i].total_cmp(&fs[j])).unwrap();
    (s[best], fs[best])
}

/// Exponential and lognormal fits to the samples at or above `t_min`.
pub fn competitor_fits(samples: &[f64], t_min: f64) -> Result<CompetitorFits> {
    let tail = tail_of(samples, t_min);
    if tail.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} sample(s) at or above t_min = {t_min}",
            tail.len()
        )));
    }
    Ok(CompetitorFits {
        exponential: fit_exponential(&tail, t_min),
        lognormal: fit_lognormal(&tail, t_min),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub model_a: TailModel,
    pub model_b: TailModel,
    /// summed log-likelihood ratio `ln L_a - ln L_b`
    pub loglik_ratio: f64,
    /// normalised statistic; positive favours `model_a`
    pub statistic: f64,
    /// two-sided p-value of `statistic` under the standard normal
    pub p_value: f64,
    pub n_tail: usize,
}

impl LrtResult {
    /// `model_a` is significantly preferred at level `alpha`.
    pub fn prefers_a(&self, level: f64) -> bool {
        self.statistic > 0.0 && self.p_value < level
    }

    pub fn prefers_b(&self, level: f64) -> bool {
        self.statistic < 0.0 && self.p_value < level
    }
}

/// Vuong's test between two tail laws each fitted above `t_min`.
pub fn likelihood_ratio_test(
    samples: &[f64],
    t_min: f64,
    model_a: TailModel,
    model_b: TailModel,
) -> Result<LrtResult> {
    let tail = tail_of(samples, t_min);
    if tail.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} sample(s) at or above t_min = {t_min}",
            tail.len()
        )));
    }
    let fa = FittedModel::fit(&tail, t_min, model_a)?;
    let fb = FittedModel::fit(&tail, t_min, model_b)?;
    let d: Vec<f64> = tail.iter().map(|&x| fa.logpdf(x) - fb.logpdf(x)).collect();
    let n = d.len() as f64;
    let r: f64 = d.iter().sum();
    let mean = r / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let (statistic, p_value) = if d.iter().all(|&v| v == 0.0) {
        (0.0, 1.0)
    } else if !(var > 0.0) {
        return Err(Error::Degenerate(
            "pointwise log-likelihood differences have zero variance".into(),
        ));
    } else {
        let z = r / (var.sqrt() * n.sqrt());
        (z, erfc(z.abs() / SQRT_2))
    };
    Ok(LrtResult {
        model_a,
        model_b,
        loglik_ratio: r,
        statistic,
        p_value,
        n_tail: tail.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;

    #[test]
    fn constant_sample_is_degenerate() {
        let xs = vec![3.0; 100];
        let fits = competitor_fits(&xs, 3.0).unwrap();
        assert!(fits.lognormal.degenerate);
        assert!(fits.lognormal.loglik.is_nan());
        assert!(fits.exponential.degenerate);
    }

    #[test]
    fn exponential_data_prefers_exponential() {
        let xs = exponential(1.0, 20_000, 1);
        let t_min = 0.5;
        let fits = competitor_fits(&xs, t_min).unwrap();
        let pareto = pareto_mle(&xs, t_min).unwrap();
        assert!(fits.exponential.loglik > pareto.loglik);
        assert!((fits.exponential.rate - 1.0).abs() < 0.03);
        let lrt = likelihood_ratio_test(&xs, t_min, TailModel::Pareto, TailModel::Exponential).unwrap();
        assert!(lrt.prefers_b(0.01));
    }

    #[test]
    fn lognormal_data_prefers_lognormal() {
        let xs = lognormal(0.5, 1.2, 20_000, 2);
        let t_min = 1.0;
        let fits = competitor_fits(&xs, t_min).unwrap();
        let pareto = pareto_mle(&xs, t_min).unwrap();
        assert!(fits.lognormal.loglik > pareto.loglik);
        assert!(fits.lognormal.loglik > fits.exponential.loglik);
        // truncated fit recovers the generating parameters
        assert!((fits.lognormal.mu - 0.5).abs() < 0.1, "{:?}", fits.lognormal);
        assert!((fits.lognormal.sigma - 1.2).abs() < 0.06, "{:?}", fits.lognormal);
    }

    #[test]
    fn truncated_fit_beats_plug_in() {
        let xs = lognormal(0.0, 1.0, 10_000, 3);
        let t_min = 2.0;
        let tail = tail_of(&xs, t_min);
        let fit = fit_lognormal(&tail, t_min);
        let m = tail.len() as f64;
        let s1: f64 = tail.iter().map(|x| x.ln()).sum();
        let s2: f64 = tail.iter().map(|x| x.ln().powi(2)).sum();
        let mu0 = s1 / m;
        let sd0 = (s2 / m - mu0 * mu0).sqrt();
        assert!(fit.loglik >= lognormal_loglik(m, s1, s2, t_min.ln(), mu0, sd0));
        // matches the summed pointwise density
        let model = FittedModel::Lognormal {
            mu: fit.mu,
            sigma: fit.sigma,
            t_min,
        };
        let direct: f64 = tail.iter().map(|&x| model.logpdf(x)).sum();
        assert!((direct - fit.loglik).abs() < 1e-8 * direct.abs());
    }

    #[test]
    fn densities_normalise() {
        // trapezoid in log-space over [t, t e^40]
        let t = 1.5;
        for model in [
            FittedModel::Pareto { alpha: 1.7, t_min: t },
            FittedModel::Exponential { rate: 0.8, t_min: t },
            FittedModel::Lognormal { mu: -1.0, sigma: 0.7, t_min: t },
        ] {
            let n = 200_000;
            let h = 40.0 / n as f64;
            let g = |i: usize| {
                let x = t * (i as f64 * h).exp();
                model.logpdf(x).exp() * x
            };
            let total: f64 = (1..n).map(g).sum::<f64>() * h + 0.5 * h * (g(0) + g(n));
            assert!((total - 1.0).abs() < 1e-6, "{model:?}: {total}");
        }
    }

    #[test]
    fn far_tail_survival() {
        for z in [24.0, 25.0, 26.0, 30.0] {
            let a = ln_normal_sf(z);
            let b = ln_normal_sf(z - 1e-9);
            assert!(a.is_finite() && (a - b).abs() < 1e-6);
        }
        assert!((ln_normal_sf(0.0) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn identical_models_give_null_statistic() {
        let xs = pareto(2.0, 1.0, 1000, 4);
        let r = likelihood_ratio_test(&xs, 1.0, TailModel::Pareto, TailModel::Pareto).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn pareto_beats_exponential_strongly() {
        let xs = pareto(1.5, 1.0, 100_000, 5);
        let r = likelihood_ratio_test(&xs, 1.0, TailModel::Pareto, TailModel::Exponential).unwrap();
        assert!(r.statistic > 0.0 && r.p_value < 1e-8, "{r:?}");
    }

    #[test]
    fn lognormal_not_rejected() {
        let xs = lognormal(0.0, 1.0, 10_000, 6);
        let sel = super::super::select_tmin(&xs).unwrap();
        let r = likelihood_ratio_test(&xs, sel.t_min, TailModel::Pareto, TailModel::Lognormal).unwrap();
        assert!(!r.prefers_a(0.05), "{r:?}");
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let (x, fx) = nelder_mead(
            |p| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2),
            [-1.2, 1.0],
            [0.5, 0.5],
            5000,
            1e-15,
        );
        assert!(fx < 1e-10 && (x[0] - 1.0).abs() < 1e-4, "{x:?} {fx}");
    }
}
