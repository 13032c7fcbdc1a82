use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::chain::ChainTrace;
use crate::error::{Error, Result};

/// Relative eigenvalue threshold below which a direction counts as null.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    /// 1-based component indices, in the order of the score columns
    pub component_indices: Vec<usize>,
    /// `n_rows x component_indices.len()`, row-major
    pub scores: Vec<f64>,
    pub n_rows: usize,
    /// over every component, in decreasing order
    pub explained_variance_ratio: Vec<f64>,
    pub mean: Vec<f64>,
    /// unit loading vectors of the kept components
    pub loadings: Vec<Vec<f64>>,
    pub rank: usize,
    pub flags: Vec<String>,
}

impl PcaProjection {
    pub fn score(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.component_indices.len() + col]
    }

    /// `sum_c score[row, c] * loading_c`, i.e. the centered row projected on
    /// the kept components.
    pub fn reconstruct_centered(&self, row: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.mean.len()];
        for (c, v) in self.loadings.iter().enumerate() {
            let s = self.score(row, c);
            out.iter_mut().zip(v).for_each(|(o, x)| *o += s * x);
        }
        out
    }

    /// Largest `|<v_i, v_j> - delta_ij|` over the kept loadings.
    pub fn gram_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.loadings.iter().enumerate() {
            for (j, b) in self.loadings.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                worst = worst.max((dot - f64::from(u8::from(i == j))).abs());
            }
        }
        worst
    }

    pub fn to_csv(&self) -> String {
        let header: Vec<String> = self.component_indices.iter().map(|c| format!("pc{c}")).collect();
        let mut s = format!("row,{}\n", header.join(","));
        let k = self.component_indices.len();
        for r in 0..self.n_rows {
            let row: Vec<String> = self.scores[r * k..(r + 1) * k].iter().map(|v| format!("{v:.10e}")).collect();
            let _ = writeln!(s, "{r},{}", row.join(","));
        }
        s
    }
}

/// PCA of the pooled weight iterates of several traces.
pub fn pca_project(traces: &[ChainTrace], components: &[usize]) -> Result<PcaProjection> {
    let first = traces.first().ok_or_else(|| Error::InsufficientData("no traces".into()))?;
    let w = first.layout.weights();
    let mut rows = Vec::new();
    for t in traces {
        if t.layout.weights() != w {
            return Err(Error::Dimension {
                expected: w.len(),
                got: t.layout.weights().len(),
            });
        }
        for it in t.iterates() {
            rows.extend_from_slice(&it[w.clone()]);
        }
    }
    pca_project_rows(&rows, w.len(), components)
}

/// PCA of a row-major `n x dim` matrix. Components beyond the numerical rank
/// are dropped and flagged.
pub fn pca_project_rows(rows: &[f64], dim: usize, components: &[usize]) -> Result<PcaProjection> {
    if dim == 0 || rows.len() % dim != 0 {
        return Err(Error::Dimension {
            expected: dim,
            got: rows.len(),
        });
    }
    let n = rows.len() / dim;
    if n < 2 {
        return Err(Error::InsufficientData("PCA needs at least two rows".into()));
    }
    if let Some(c) = components.iter().find(|c| **c == 0 || **c > dim) {
        return Err(Error::InvalidInput(format!("component {c} outside 1..={dim}")));
    }
    let mut mean = vec![0.0; dim];
    for r in rows.chunks_exact(dim) {
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| rows[i * dim + j] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let top = values[0];
    let rank = values.iter().filter(|v| **v > RANK_TOL * top && top > 0.0).count();
    let explained_variance_ratio = values
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();

    let mut flags = Vec::new();
    let kept: Vec<usize> = components.iter().copied().filter(|&c| c <= rank).collect();
    if kept.len() < components.len() {
        flags.push(format!("truncated_to_rank_{rank}"));
    }
    let loadings: Vec<Vec<f64>> = kept
        .iter()
        .map(|&c| eig.eigenvectors.column(order[c - 1]).iter().copied().collect())
        .collect();
    let mut scores = Vec::with_capacity(n * kept.len());
    for i in 0..n {
        for v in &loadings {
            scores.push((0..dim).map(|j| centered[(i, j)] * v[j]).sum());
        }
    }
    Ok(PcaProjection {
        component_indices: kept,
        scores,
        n_rows: n,
        explained_variance_ratio,
        mean,
        loadings,
        rank,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::rng::{Domain, StreamRng};

    fn cloud(n: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = StreamRng::new(seed, Domain::MonteCarlo, 0);
        (0..n * dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn line_has_one_component() {
        let dir = [1.0, -2.0, 0.5];
        let rows: Vec<f64> = (0..200).flat_map(|i| dir.map(|d| 3.0 + d * (i as f64 * 0.37).sin())).collect();
        let p = pca_project_rows(&rows, 3, &[1, 2, 3]).unwrap();
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-10);
        assert!(p.explained_variance_ratio[1..].iter().all(|r| r.abs() < 1e-10));
        assert_eq!(p.rank, 1);
        assert_eq!(p.component_indices, vec![1]);
        assert!(p.flags.iter().any(|f| f.starts_with("truncated")));
    }

    #[test]
    fn isotropic_cloud() {
        let rows = cloud(100_000, 3, 1);
        let p = pca_project_rows(&rows, 3, &[1]).unwrap();
        for r in &p.explained_variance_ratio {
            assert!((r - 1.0 / 3.0).abs() < 0.02, "{r}");
        }
        assert!(p.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn full_reconstruction_and_orthonormality() {
        let mut rows = cloud(500, 5, 2);
        // correlate and shift the columns
        for r in rows.chunks_exact_mut(5) {
            r[1] += 2.0 * r[0];
            r[4] = 0.5 * r[4] + r[2] - 7.0;
        }
        let p = pca_project_rows(&rows, 5, &[1, 2, 3, 4, 5]).unwrap();
        assert!(p.gram_deviation() < 1e-8);
        for i in 0..p.n_rows {
            let rec = p.reconstruct_centered(i);
            for j in 0..5 {
                assert!((rec[j] - (rows[i * 5 + j] - p.mean[j])).abs() < 1e-8);
            }
        }
        let q = pca_project_rows(&rows, 5, &[2, 3, 4]).unwrap();
        assert_eq!(q.to_csv().lines().next().unwrap(), "row,pc2,pc3,pc4");
        assert!(pca_project_rows(&rows, 5, &[6]).is_err());
    }

    #[test]
    fn pools_traces() {
        let a = ChainTrace::from_recorded(2, cloud(100, 2, 3), vec![]).unwrap();
        let b = ChainTrace::from_recorded(2, cloud(50, 2, 4), vec![]).unwrap();
        let p = pca_project(&[a, b], &[1, 2]).unwrap();
        assert_eq!(p.n_rows, 150);
    }
}
