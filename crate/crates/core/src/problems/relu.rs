use super::{Batch, BatchSampler, MinibatchProblem};
use crate::error::{Error, Result};

/// Two-layer ReLU regression network `y = W2 relu(W1 x + b1) + b2` with
/// squared-error loss and an L2 penalty on all parameters.
///
/// Layout of the flat parameter vector: `W1` (`hidden x d`, row-major), `b1`
/// (`hidden`), `W2` (`m x hidden`, row-major), `b2` (`m`).
#[derive(Debug, Clone)]
pub struct TwoLayerReluProblem {
    pub sampler: BatchSampler,
    pub hidden_units: usize,
    pub lambda: f64,
}

impl TwoLayerReluProblem {
    pub fn new(sampler: BatchSampler, hidden_units: usize, lambda: f64) -> Result<Self> {
        if hidden_units == 0 {
            return Err(Error::Config("hidden_units must be positive".into()));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self {
            sampler,
            hidden_units,
            lambda,
        })
    }

    fn shape(&self) -> (usize, usize, usize) {
        (
            self.sampler.source.n_features(),
            self.hidden_units,
            self.sampler.source.n_outputs(),
        )
    }

    /// Offsets of `(W1, b1, W2, b2)`.
    pub fn offsets(&self) -> [usize; 4] {
        let (d, h, m) = self.shape();
        [0, h * d, h * d + h, h * d + h + m * h]
    }

    pub fn predict(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        let (d, h, m) = self.shape();
        let [o1, ob1, o2, ob2] = self.offsets();
        let hidden: Vec<f64> = (0..h)
            .map(|u| {
                let pre: f64 = (0..d).map(|k| w[o1 + u * d + k] * x[k]).sum::<f64>() + w[ob1 + u];
                pre.max(0.0)
            })
            .collect();
        (0..m)
            .map(|j| (0..h).map(|u| w[o2 + j * h + u] * hidden[u]).sum::<f64>() + w[ob2 + j])
            .collect()
    }

    /// Batch-averaged half squared error plus `lambda/2 ||w||^2`.
    pub fn batch_loss(&self, w: &[f64], batch: &Batch) -> f64 {
        let data: f64 = (0..batch.n)
            .map(|i| {
                let p = self.predict(w, batch.input(i));
                p.iter()
                    .zip(batch.target(i))
                    .map(|(a, b)| 0.5 * (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / batch.n as f64;
        data + 0.5 * self.lambda * w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Gradient on a set of dataset rows (empirical data only).
    pub fn grad_on_indices(&self, w: &[f64], indices: &[usize]) -> Result<Vec<f64>> {
        let super::DataSource::Empirical(ds) = &self.sampler.source else {
            return Err(Error::Unsupported("index batches need an empirical dataset".into()));
        };
        if let Some(&bad) = indices.iter().find(|&&i| i >= ds.len()) {
            return Err(Error::Config(format!("row index {bad} out of range")));
        }
        let batch = Batch::from_dataset(ds, indices);
        let mut g = vec![0.0; self.dim()];
        self.batch_grad(w, &batch, &mut g);
        Ok(g)
    }
}

impl MinibatchProblem for TwoLayerReluProblem {
    fn dim(&self) -> usize {
        let (d, h, m) = self.shape();
        h * d + h + m * h + m
    }

    fn sampler(&self) -> &BatchSampler {
        &self.sampler
    }

    fn batch_grad(&self, w: &[f64], batch: &Batch, out: &mut [f64]) {
        let (d, h, m) = self.shape();
        let [o1, ob1, o2, ob2] = self.offsets();
        for (o, wi) in out.iter_mut().zip(w) {
            *o = self.lambda * wi;
        }
        let inv_n = 1.0 / batch.n as f64;
        let mut pre = vec![0.0; h];
        let mut act = vec![0.0; h];
        let mut resid = vec![0.0; m];
        for i in 0..batch.n {
            let (x, y) = (batch.input(i), batch.target(i));
            for u in 0..h {
                pre[u] = (0..d).map(|k| w[o1 + u * d + k] * x[k]).sum::<f64>() + w[ob1 + u];
                act[u] = pre[u].max(0.0);
            }
            for j in 0..m {
                resid[j] =
                    (0..h).map(|u| w[o2 + j * h + u] * act[u]).sum::<f64>() + w[ob2 + j] - y[j];
            }
            for j in 0..m {
                let r = resid[j] * inv_n;
                out[ob2 + j] += r;
                for u in 0..h {
                    out[o2 + j * h + u] += r * act[u];
                }
            }
            for u in 0..h {
                // subgradient of relu at 0 is 0
                if pre[u] <= 0.0 {
                    continue;
                }
                let back: f64 = (0..m).map(|j| resid[j] * w[o2 + j * h + u]).sum::<f64>() * inv_n;
                out[ob1 + u] += back;
                for k in 0..d {
                    out[o1 + u * d + k] += back * x[k];
                }
            }
        }
    }

    fn describe(&self) -> String {
        format!(
            "two_layer_relu:{};hidden={};lambda={:e}",
            self.sampler.describe(),
            self.hidden_units,
            self.lambda
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{DataSource, Dataset};
    use crate::rng::{Domain, StreamRng};
    use rand::Rng;
    use std::sync::Arc;

    fn problem(n: usize, d: usize, h: usize, m: usize, lambda: f64) -> TwoLayerReluProblem {
        let mut rng = StreamRng::new(2, Domain::Data, 0);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let y: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect();
        let ds = Arc::new(Dataset::from_rows(&x, &y, "t").unwrap());
        let s = BatchSampler::new(DataSource::Empirical(ds), 1, true).unwrap();
        TwoLayerReluProblem::new(s, h, lambda).unwrap()
    }

    #[test]
    fn zero_weights_zero_targets() {
        let x = vec![vec![0.3, -0.2], vec![1.0, 2.0]];
        let y = vec![vec![0.0], vec![0.0]];
        let ds = Arc::new(Dataset::from_rows(&x, &y, "t").unwrap());
        let p = TwoLayerReluProblem::new(
            BatchSampler::new(DataSource::Empirical(ds), 1, true).unwrap(),
            4,
            0.7,
        )
        .unwrap();
        let g = p.grad_on_indices(&vec![0.0; p.dim()], &[0, 1]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = problem(12, 3, 4, 2, 0.01);
        let ds = match &p.sampler.source {
            DataSource::Empirical(ds) => ds.clone(),
            _ => unreachable!(),
        };
        let mut rng = StreamRng::new(5, Domain::MonteCarlo, 0);
        let mut checked = 0;
        while checked < 20 {
            let w: Vec<f64> = (0..p.dim()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let idx: Vec<usize> = (0..3).map(|_| rng.random_range(0..12)).collect();
            let batch = Batch::from_dataset(&ds, &idx);
            // skip points too close to a relu kink
            let [o1, ob1, ..] = p.offsets();
            let near_kink = idx.iter().any(|&i| {
                (0..4).any(|u| {
                    let pre: f64 = (0..3).map(|k| w[o1 + u * 3 + k] * ds.inputs[(i, k)]).sum::<f64>() + w[ob1 + u];
                    pre.abs() < 1e-3
                })
            });
            if near_kink {
                continue;
            }
            let mut g = vec![0.0; p.dim()];
            p.batch_grad(&w, &batch, &mut g);
            for j in 0..p.dim() {
                let h = 1e-6;
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += h;
                wm[j] -= h;
                let fd = (p.batch_loss(&wp, &batch) - p.batch_loss(&wm, &batch)) / (2.0 * h);
                let scale = g[j].abs().max(1e-2);
                assert!((fd - g[j]).abs() / scale < 1e-5, "coord {j}: {fd} vs {}", g[j]);
            }
            checked += 1;
        }
    }

    #[test]
    fn single_unit_hand_computation() {
        // d = 1, one hidden unit, w = (W1=2, b1=0.5, W2=3, b2=-1), x = 1, y = 4.
        // pre = 2.5, act = 2.5, out = 6.5, r = 2.5.
        // dW2 = r*act = 6.25, db2 = r = 2.5, back = r*W2 = 7.5, dW1 = 7.5, db1 = 7.5.
        let ds = Arc::new(Dataset::from_rows(&[vec![1.0]], &[vec![4.0]], "t").unwrap());
        let p = TwoLayerReluProblem::new(
            BatchSampler::new(DataSource::Empirical(ds), 1, true).unwrap(),
            1,
            0.0,
        )
        .unwrap();
        let g = p.grad_on_indices(&[2.0, 0.5, 3.0, -1.0], &[0]).unwrap();
        assert_eq!(g, vec![7.5, 7.5, 6.25, 2.5]);
        // inactive unit: only the output bias moves
        let g = p.grad_on_indices(&[-2.0, 0.5, 3.0, -1.0], &[0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0, -5.0]);
        assert!(p.grad_on_indices(&[0.0; 4], &[3]).is_err());
    }
}
