//! Post-processing of chain traces: density pictures, basin occupancy, PCA
//! of trajectories and step-norm extraction.

mod basins;
mod kde;
mod pca;

pub use basins::{basin_stats, basin_stats_values, BasinOccupancy, BasinReport, DEFAULT_RADIUS};
pub use kde::{default_bandwidth, kde_1d, kde_1d_log, silverman_bandwidth, DensityEstimate, GRID_SPAN};
pub use pca::{pca_project, pca_project_rows, PcaProjection};

use crate::chain::ChainTrace;
use crate::error::{Error, Result};

/// The recorded post-burn-in step norms, every `stride`-th one.
pub fn extract_step_norms(trace: &ChainTrace, stride: usize) -> Result<Vec<f64>> {
    if stride == 0 {
        return Err(Error::InvalidInput("stride must be at least 1".into()));
    }
    Ok(trace.step_norms.iter().step_by(stride).copied().collect())
}
