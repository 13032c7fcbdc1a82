use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chain::ChainTrace;
use crate::error::{Error, Result};
use crate::problems::ScalarObjective;

/// Default radius for the near-critical mass.
pub const DEFAULT_RADIUS: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinOccupancy {
    pub basin: usize,
    /// location of the minimum that labels the basin
    pub x: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinReport {
    pub objective: String,
    pub occupancy: Vec<BasinOccupancy>,
    pub hop_count: u64,
    /// fraction of samples within `radius` of any critical point
    pub near_critical_mass: f64,
    pub radius: f64,
    pub n_samples: usize,
}

impl BasinReport {
    /// Number of basins holding more than `threshold` of the samples.
    pub fn basins_above(&self, threshold: f64) -> usize {
        self.occupancy.iter().filter(|o| o.fraction > threshold).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("basin,x,fraction\n");
        for o in &self.occupancy {
            let _ = writeln!(s, "{},{:.10e},{:.10e}", o.basin, o.x, o.fraction);
        }
        s
    }
}

/// Basin statistics of the first weight coordinate of a trace.
pub fn basin_stats(trace: &ChainTrace, objective: &ScalarObjective, radius: f64) -> Result<BasinReport> {
    let j = trace.layout.weights().start;
    basin_stats_values(&trace.coordinate(j), objective, radius)
}

/// Each sample belongs to the basin of its nearest labeled minimum; a hop
/// is a label change between consecutive samples.
pub fn basin_stats_values(xs: &[f64], objective: &ScalarObjective, radius: f64) -> Result<BasinReport> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidInput(format!("radius must be non-negative, got {radius}")));
    }
    if xs.is_empty() {
        return Err(Error::InsufficientData("empty trace".into()));
    }
    let mut minima: Vec<(f64, usize)> = objective
        .minima()
        .filter_map(|c| c.basin.map(|b| (c.x, b)))
        .collect();
    if minima.is_empty() {
        return Err(Error::Config(format!("objective `{}` has no labeled minima", objective.name)));
    }
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    let cuts: Vec<f64> = minima.windows(2).map(|w| 0.5 * (w[0].0 + w[1].0)).collect();
    let mut critical: Vec<f64> = objective.critical_points.iter().map(|c| c.x).collect();
    critical.sort_by(f64::total_cmp);

    let mut counts = vec![0u64; minima.len()];
    let mut hops = 0;
    let mut near = 0u64;
    let mut prev = None;
    for &x in xs {
        let cell = cuts.partition_point(|&c| c < x);
        counts[cell] += 1;
        if prev.is_some_and(|p| p != cell) {
            hops += 1;
        }
        prev = Some(cell);
        let i = critical.partition_point(|&c| c < x);
        let d_right = critical.get(i).map_or(f64::INFINITY, |c| c - x);
        let d_left = i.checked_sub(1).map_or(f64::INFINITY, |k| x - critical[k]);
        near += u64::from(d_left.min(d_right) <= radius);
    }
    let n = xs.len() as f64;
    let mut occupancy: Vec<BasinOccupancy> = minima
        .iter()
        .zip(&counts)
        .map(|(&(x, basin), &c)| BasinOccupancy {
            basin,
            x,
            fraction: c as f64 / n,
        })
        .collect();
    occupancy.sort_by_key(|o| o.basin);
    Ok(BasinReport {
        objective: objective.name.clone(),
        occupancy,
        hop_count: hops,
        near_critical_mass: near as f64 / n,
        radius,
        n_samples: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::scalar_objective_catalog;

    fn global(obj: &ScalarObjective) -> f64 {
        obj.minima().map(|c| c.x).find(|x| *x == 0.0).unwrap()
    }

    #[test]
    fn constant_trace() {
        let obj = scalar_objective_catalog("basin_cos").unwrap();
        let r = basin_stats_values(&vec![global(&obj); 1000], &obj, DEFAULT_RADIUS).unwrap();
        assert_eq!(r.hop_count, 0);
        assert_eq!(r.basins_above(0.999), 1);
        assert_eq!(r.near_critical_mass, 1.0);
        let total: f64 = r.occupancy.iter().map(|o| o.fraction).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn alternating_trace_hops_every_step() {
        let obj = scalar_objective_catalog("basin_cos").unwrap();
        let mins: Vec<f64> = obj.minima().map(|c| c.x).collect();
        let (a, b) = (mins[0], mins[mins.len() - 1]);
        let xs: Vec<f64> = (0..101).map(|i| if i % 2 == 0 { a } else { b }).collect();
        let r = basin_stats_values(&xs, &obj, 0.2).unwrap();
        assert_eq!(r.hop_count, 100);
        assert_eq!(r.basins_above(0.4), 2);
        let total: f64 = r.occupancy.iter().map(|o| o.fraction).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn labels_ignore_constant_offsets() {
        fn lifted(x: f64) -> f64 {
            0.1 * x * x + 1.0 - (x * x).cos() + 7.5
        }
        let obj = scalar_objective_catalog("basin_cos").unwrap();
        let mut shifted = obj.clone();
        shifted.f = lifted;
        let xs: Vec<f64> = (0..2000).map(|i| -6.0 + 0.006 * i as f64).collect();
        let mut a = basin_stats_values(&xs, &obj, 0.2).unwrap();
        let b = basin_stats_values(&xs, &shifted, 0.2).unwrap();
        a.objective = b.objective.clone();
        assert_eq!(a, b);
        assert!(a.hop_count > 2);
    }

    #[test]
    fn from_trace_and_errors() {
        let obj = scalar_objective_catalog("basin_cos").unwrap();
        let t = ChainTrace::from_recorded(1, vec![0.0, 0.05, 2.75], vec![]).unwrap();
        let r = basin_stats(&t, &obj, 0.1).unwrap();
        assert_eq!(r.n_samples, 3);
        assert!((r.near_critical_mass - 2.0 / 3.0).abs() < 1e-12);
        assert!(basin_stats_values(&[], &obj, 0.2).is_err());
        assert!(basin_stats_values(&[0.0], &obj, -1.0).is_err());
        assert!(r.to_csv().starts_with("basin,x,fraction\n"));
    }
}
