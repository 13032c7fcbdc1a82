//! Per-draw Lipschitz sandwich constants of SGD and the moment bounds they imply.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{euclid, ParamVec};
use crate::error::{Error, Result};
use crate::optimizers::{OptimizerKind, OptimizerSpec};
use crate::problems::{ridge_closed_form, vectorize, MinibatchProblem, RidgeProblem, TwoLayerReluProblem};
use crate::rng::{Domain, StreamRng};

/// Radii at which the lower expansion constant of a non-quadratic loss is probed.
pub const PROBE_RADII: [f64; 3] = [1e2, 1e4, 1e6];
const PROBE_DIRECTIONS: usize = 4;

pub enum ProfileProblem<'a> {
    /// Hessian is constant per minibatch; `w*` is the closed-form optimum.
    Ridge(&'a RidgeProblem),
    /// Hessians by finite differences along random probe directions; `w*`
    /// defaults to the origin.
    TwoLayer {
        problem: &'a TwoLayerReluProblem,
        w_star: Option<&'a [f64]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProfile {
    /// `k_Psi` draws
    pub k_lower: Vec<f64>,
    /// `K_Psi` draws
    pub k_upper: Vec<f64>,
    /// `M_Psi` draws
    pub offset: Vec<f64>,
    /// `||Psi(w*)||` draws
    pub psi_star_norm: Vec<f64>,
    pub w_star: ParamVec,
}

impl LipschitzProfile {
    pub fn n_draws(&self) -> usize {
        self.k_upper.len()
    }

    /// Fraction of draws that expand, `P(k_Psi > 1)`.
    pub fn expansion_fraction(&self) -> f64 {
        self.k_lower.iter().filter(|&&k| k > 1.0).count() as f64 / self.k_lower.len() as f64
    }
}

/// Singular values of the symmetric `I - gamma h`: `(min |e|, max |e|)`.
fn contraction_range(h: &DMatrix<f64>, gamma: f64) -> (f64, f64) {
    let d = h.nrows();
    let m = DMatrix::identity(d, d) - h * gamma;
    if d == 1 {
        let v = m[(0, 0)].abs();
        return (v, v);
    }
    let eig = SymmetricEigen::new(m).eigenvalues;
    let abs = eig.iter().map(|e| e.abs());
    (
        abs.clone().fold(f64::INFINITY, f64::min),
        abs.fold(0.0, f64::max),
    )
}

fn ridge_profile(p: &RidgeProblem, gamma: f64, n_mc: usize, seed: u64) -> Result<LipschitzProfile> {
    let w_star = vectorize(&ridge_closed_form(p)?);
    let draws: Vec<(f64, f64, f64)> = (0..n_mc as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamRng::new(seed, Domain::MonteCarlo, i);
            let batch = p.sampler.draw_iid(&mut rng);
            let (lo, hi) = contraction_range(&p.batch_hessian(&batch), gamma);
            let mut g = vec![0.0; w_star.len()];
            p.batch_grad(&w_star, &batch, &mut g);
            let psi: Vec<f64> = w_star.iter().zip(&g).map(|(w, g)| w - gamma * g).collect();
            (lo, hi, euclid(&psi))
        })
        .collect();
    Ok(LipschitzProfile {
        k_lower: draws.iter().map(|d| d.0).collect(),
        k_upper: draws.iter().map(|d| d.1).collect(),
        offset: vec![0.0; n_mc],
        psi_star_norm: draws.iter().map(|d| d.2).collect(),
        w_star: ParamVec::new(w_star)?,
    })
}

fn fd_hessian(p: &TwoLayerReluProblem, w: &[f64], batch: &crate::problems::Batch) -> DMatrix<f64> {
    let d = w.len();
    let scale = euclid(w).max(1.0);
    let h = 1e-6 * scale;
    let mut hess = DMatrix::zeros(d, d);
    let (mut gp, mut gm) = (vec![0.0; d], vec![0.0; d]);
    let mut x = w.to_vec();
    for j in 0..d {
        x[j] = w[j] + h;
        p.batch_grad(&x, batch, &mut gp);
        x[j] = w[j] - h;
        p.batch_grad(&x, batch, &mut gm);
        x[j] = w[j];
        for i in 0..d {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    (&hess + hess.transpose()) * 0.5
}

fn relu_profile(
    p: &TwoLayerReluProblem,
    w_star: Option<&[f64]>,
    gamma: f64,
    n_mc: usize,
    seed: u64,
) -> Result<LipschitzProfile> {
    let dim = p.dim();
    let w_star = match w_star {
        Some(w) if w.len() != dim => return Err(Error::Dimension { expected: dim, got: w.len() }),
        Some(w) => w.to_vec(),
        None => vec![0.0; dim],
    };
    let step = |w: &[f64], batch: &crate::problems::Batch| {
        let mut g = vec![0.0; dim];
        p.batch_grad(w, batch, &mut g);
        w.iter().zip(&g).map(|(w, g)| w - gamma * g).collect::<Vec<f64>>()
    };
    let draws: Vec<(f64, f64, f64, f64)> = (0..n_mc as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamRng::new(seed, Domain::MonteCarlo, i);
            let batch = p.sampler.draw_iid(&mut rng);
            let psi_star = step(&w_star, &batch);
            let (_, mut k_up) = contraction_range(&fd_hessian(p, &w_star, &batch), gamma);
            let mut k_low = f64::INFINITY;
            let mut probes = Vec::new();
            for _ in 0..PROBE_DIRECTIONS {
                let mut u: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let n = euclid(&u);
                u.iter_mut().for_each(|v| *v /= n);
                for (ri, &r) in PROBE_RADII.iter().enumerate() {
                    let w: Vec<f64> = w_star.iter().zip(&u).map(|(s, u)| s + r * u).collect();
                    let (lo, hi) = contraction_range(&fd_hessian(p, &w, &batch), gamma);
                    k_up = k_up.max(hi);
                    if ri == PROBE_RADII.len() - 1 {
                        k_low = k_low.min(lo);
                    }
                    probes.push(w);
                }
            }
            let offset = probes
                .iter()
                .map(|w| {
                    let dist = euclid(&w.iter().zip(&w_star).map(|(a, b)| a - b).collect::<Vec<_>>());
                    let moved = step(w, &batch);
                    let gap = euclid(&moved.iter().zip(&psi_star).map(|(a, b)| a - b).collect::<Vec<_>>());
                    (k_low * dist - gap).max(0.0)
                })
                .fold(0.0, f64::max);
            (k_low, k_up.max(k_low), offset, euclid(&psi_star))
        })
        .collect();
    Ok(LipschitzProfile {
        k_lower: draws.iter().map(|d| d.0).collect(),
        k_upper: draws.iter().map(|d| d.1).collect(),
        offset: draws.iter().map(|d| d.2).collect(),
        psi_star_norm: draws.iter().map(|d| d.3).collect(),
        w_star: ParamVec::new(w_star)?,
    })
}

/// Monte-Carlo draws of the Lipschitz sandwich constants of SGD.
pub fn lipschitz_profile_sgd(
    problem: ProfileProblem<'_>,
    spec: &OptimizerSpec,
    n_mc: usize,
    seed: u64,
) -> Result<LipschitzProfile> {
    if spec.kind != OptimizerKind::Sgd {
        return Err(Error::Unsupported(format!(
            "Lipschitz profiles are defined for sgd, not {}",
            spec.kind.name()
        )));
    }
    spec.validate()?;
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be positive".into()));
    }
    match problem {
        ProfileProblem::Ridge(p) => ridge_profile(p, spec.gamma, n_mc, seed),
        ProfileProblem::TwoLayer { problem, w_star } => relu_profile(problem, w_star, spec.gamma, n_mc, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentBounds {
    pub p: f64,
    pub kappa_minus: Option<f64>,
    pub kappa_plus: Option<f64>,
    pub k_norm_p: f64,
    #[serde(rename = "K_norm_p")]
    pub big_k_norm_p: f64,
    pub psi_star_norm_p: f64,
    pub w_star_norm: f64,
    pub flags: Vec<String>,
}

impl MomentBounds {
    /// `||K||_p^k (||W_0||_p - kappa+) + kappa+`
    pub fn upper(&self, k: u32, w0_norm_p: f64) -> Option<f64> {
        self.kappa_plus
            .map(|kp| self.big_k_norm_p.powi(k as i32) * (w0_norm_p - kp) + kp)
    }

    /// `||k||_p^k (||W_0||_p + kappa-) - kappa-`
    pub fn lower(&self, k: u32, w0_norm_p: f64) -> Option<f64> {
        self.kappa_minus
            .map(|km| self.k_norm_p.powi(k as i32) * (w0_norm_p + km) - km)
    }
}

fn p_norm(xs: &[f64], p: f64) -> f64 {
    (xs.iter().map(|x| x.abs().powf(p)).sum::<f64>() / xs.len() as f64).powf(1.0 / p)
}

/// Sandwich bounds on `||W_k||_p` from a Lipschitz profile.
pub fn moment_bounds(profile: &LipschitzProfile, p: f64) -> Result<MomentBounds> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Config(format!("p must be positive, got {p}")));
    }
    if profile.n_draws() == 0 {
        return Err(Error::InsufficientData("empty Lipschitz profile".into()));
    }
    let k = p_norm(&profile.k_lower, p);
    let big_k = p_norm(&profile.k_upper, p);
    let psi = p_norm(&profile.psi_star_norm, p);
    let ws = profile.w_star.norm();
    let mut flags = Vec::new();
    let kappa = |norm: f64, name: &str, flags: &mut Vec<String>| {
        if norm < 1.0 {
            Some((norm * ws + psi) / (1.0 - norm))
        } else {
            flags.push(format!("{name}_undefined_norm_ge_1"));
            None
        }
    };
    let kappa_plus = kappa(big_k, "kappa_plus", &mut flags);
    let kappa_minus = kappa(k, "kappa_minus", &mut flags);
    Ok(MomentBounds {
        p,
        kappa_minus,
        kappa_plus,
        k_norm_p: k,
        big_k_norm_p: big_k,
        psi_star_norm_p: psi,
        w_star_norm: ws,
        flags,
    })
}
