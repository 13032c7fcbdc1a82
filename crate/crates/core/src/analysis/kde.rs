use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid half-width beyond the sample range, in bandwidths.
pub const GRID_SPAN: f64 = 4.0;
/// Kernel evaluations are cut off beyond this many bandwidths.
const KERNEL_CUTOFF: f64 = 9.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    /// the estimate lives on `ln x` rather than `x`
    pub log_scale: bool,
}

impl DensityEstimate {
    /// Trapezoid-rule integral of the density over the grid.
    pub fn mass(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(g, d)| 0.5 * (g[1] - g[0]) * (d[0] + d[1]))
            .sum()
    }

    pub fn argmax(&self) -> f64 {
        let i = (0..self.density.len())
            .max_by(|&a, &b| self.density[a].total_cmp(&self.density[b]))
            .unwrap_or(0);
        self.grid[i]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(if self.log_scale { "log_x,density\n" } else { "x,density\n" });
        for (g, d) in self.grid.iter().zip(&self.density) {
            let _ = writeln!(s, "{g:.10e},{d:.10e}");
        }
        s
    }
}

/// Silverman's rule `0.9 min(sd, IQR / 1.34) n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData("bandwidth rule needs two samples".into()));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| crate::tail_fit::quantile_sorted(&sorted, p);
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::Degenerate("zero-spread sample has no bandwidth".into()))
    }
}

/// The low-bandwidth default: a quarter of Silverman's rule.
pub fn default_bandwidth(samples: &[f64]) -> Result<f64> {
    Ok(0.25 * silverman_bandwidth(samples)?)
}

/// Gaussian-kernel estimate on a uniform grid of `grid_size` points spanning
/// `[min - 4h, max + 4h]`.
pub fn kde_1d(samples: &[f64], bandwidth: f64, grid_size: usize) -> Result<DensityEstimate> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if grid_size < 2 {
        return Err(Error::InvalidInput("grid needs at least two points".into()));
    }
    let mut xs: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    if xs.is_empty() {
        return Err(Error::InsufficientData("no finite samples".into()));
    }
    xs.sort_by(f64::total_cmp);
    let h = bandwidth;
    let lo = xs[0] - GRID_SPAN * h;
    let hi = xs[xs.len() - 1] + GRID_SPAN * h;
    let dx = (hi - lo) / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|i| lo + i as f64 * dx).collect();
    let norm = 1.0 / (xs.len() as f64 * h * (2.0 * PI).sqrt());
    let density = grid
        .iter()
        .map(|&g| {
            let a = xs.partition_point(|&x| x < g - KERNEL_CUTOFF * h);
            let b = xs.partition_point(|&x| x <= g + KERNEL_CUTOFF * h);
            let s: f64 = xs[a..b].iter().map(|&x| (-0.5 * ((g - x) / h).powi(2)).exp()).sum();
            s * norm
        })
        .collect();
    Ok(DensityEstimate {
        grid,
        density,
        bandwidth: h,
        log_scale: false,
    })
}

/// Estimate on `ln x` for positive samples, with the default bandwidth.
pub fn kde_1d_log(samples: &[f64], grid_size: usize) -> Result<DensityEstimate> {
    let logs: Vec<f64> = samples.iter().filter(|x| **x > 0.0).map(|x| x.ln()).collect();
    let h = default_bandwidth(&logs)?;
    let mut est = kde_1d(&logs, h, grid_size)?;
    est.log_scale = true;
    Ok(est)
}
