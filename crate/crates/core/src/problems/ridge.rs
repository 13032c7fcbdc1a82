use nalgebra::{DMatrix, DVector};

use super::{Batch, BatchSampler, DataSource, MinibatchProblem};
use crate::error::{Error, Result};

/// Ridge regression `min_M 1/2 E||Y - M X||^2 + lambda/2 ||M||_F^2`.
///
/// `M` is `m x d`; parameter vectors hold its rows back to back, so
/// `w[j*d + k] = M[j, k]` and the SGD recurrence has the block form
/// `A = I_m (x) C`.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    pub sampler: BatchSampler,
    pub lambda: f64,
    pub gamma: f64,
}

impl RidgeProblem {
    pub fn new(
        source: DataSource,
        lambda: f64,
        gamma: f64,
        batch_size: usize,
        replacement: bool,
    ) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be >= 0, got {gamma}")));
        }
        Ok(Self {
            sampler: BatchSampler::new(source, batch_size, replacement)?,
            lambda,
            gamma,
        })
    }

    pub fn d(&self) -> usize {
        self.sampler.source.n_features()
    }

    pub fn m(&self) -> usize {
        self.sampler.source.n_outputs()
    }

    pub fn batch_size(&self) -> usize {
        self.sampler.batch_size
    }

    /// `n^-1 sum x x^T + lambda I`: the (w-independent) minibatch Hessian of one
    /// output block.
    pub fn batch_hessian(&self, batch: &Batch) -> DMatrix<f64> {
        let d = batch.d;
        let mut h = DMatrix::zeros(d, d);
        for i in 0..batch.n {
            let x = DVector::from_column_slice(batch.input(i));
            h.ger(1.0, &x, &x, 1.0);
        }
        h /= batch.n as f64;
        for k in 0..d {
            h[(k, k)] += self.lambda;
        }
        h
    }

    /// The pair `(A, B)` of the linear recurrence for one minibatch:
    /// `A = I_m (x) ((1 - lambda*gamma) I - gamma n^-1 sum x x^T)` and
    /// `B = gamma n^-1 sum y (x) x`.
    pub fn coeffs(&self, batch: &Batch) -> (DMatrix<f64>, DVector<f64>) {
        let (d, m, n) = (batch.d, batch.m, batch.n as f64);
        let g = self.gamma;
        let mut c = DMatrix::identity(d, d) * (1.0 - self.lambda * g);
        for i in 0..batch.n {
            let x = DVector::from_column_slice(batch.input(i));
            c.ger(-g / n, &x, &x, 1.0);
        }
        let mut a = DMatrix::zeros(d * m, d * m);
        for j in 0..m {
            a.view_mut((j * d, j * d), (d, d)).copy_from(&c);
        }
        let mut b = DVector::zeros(d * m);
        for i in 0..batch.n {
            let (x, y) = (batch.input(i), batch.target(i));
            for j in 0..m {
                for k in 0..d {
                    b[j * d + k] += g / n * y[j] * x[k];
                }
            }
        }
        (a, b)
    }

    /// Gradient of the full-data objective (empirical data only).
    pub fn full_grad(&self, w: &[f64]) -> Result<Vec<f64>> {
        let DataSource::Empirical(ds) = &self.sampler.source else {
            return Err(Error::Unsupported("full gradient of a synthetic stream".into()));
        };
        let idx: Vec<usize> = (0..ds.len()).collect();
        let batch = Batch::from_dataset(ds, &idx);
        let mut g = vec![0.0; w.len()];
        self.batch_grad(w, &batch, &mut g);
        Ok(g)
    }
}

impl MinibatchProblem for RidgeProblem {
    fn dim(&self) -> usize {
        self.d() * self.m()
    }

    fn sampler(&self) -> &BatchSampler {
        &self.sampler
    }

    fn batch_grad(&self, w: &[f64], batch: &Batch, out: &mut [f64]) {
        let (d, m) = (batch.d, batch.m);
        let inv_n = 1.0 / batch.n as f64;
        for (o, wi) in out.iter_mut().zip(w) {
            *o = self.lambda * wi;
        }
        for i in 0..batch.n {
            let (x, y) = (batch.input(i), batch.target(i));
            for j in 0..m {
                let row = &w[j * d..(j + 1) * d];
                let resid: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - y[j];
                for k in 0..d {
                    out[j * d + k] += inv_n * resid * x[k];
                }
            }
        }
    }

    fn describe(&self) -> String {
        format!(
            "ridge:{};lambda={:e}",
            self.sampler.describe(),
            self.lambda
        )
    }
}

/// `M* = E[Y X^T] E[X X^T + lambda I]^-1` under the empirical distribution (or
/// the population moments of a synthetic stream).
pub fn ridge_closed_form(p: &RidgeProblem) -> Result<DMatrix<f64>> {
    let (d, m) = (p.d(), p.m());
    let (mut sxx, syx) = match &p.sampler.source {
        DataSource::Empirical(ds) => {
            let n = ds.len() as f64;
            let sxx = ds.inputs.transpose() * &ds.inputs / n;
            let syx = ds.targets.transpose() * &ds.inputs / n;
            (sxx, syx)
        }
        DataSource::Synthetic(s) => {
            let mx = s.input.mean();
            let my = s.target.mean();
            let sxx = DMatrix::from_fn(d, d, |i, j| {
                mx * mx + if i == j { s.input.variance() } else { 0.0 }
            });
            let syx = DMatrix::from_element(m, d, my * mx);
            (sxx, syx)
        }
    };
    for k in 0..d {
        sxx[(k, k)] += p.lambda;
    }
    let svd = sxx.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-13 * d as f64) {
        return Err(Error::Singular(format!(
            "E[XX^T + lambda I] has condition {:.3e} (lambda = {})",
            smax / smin,
            p.lambda
        )));
    }
    let inv = sxx
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("E[XX^T + lambda I]".into()))?;
    Ok(syx * inv)
}

/// Row-major vectorisation matching the parameter layout.
pub fn vectorize(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in m.row_iter() {
        out.extend(r.iter());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::StepContext;
    use crate::problems::{Dataset, Law, SyntheticData};
    use crate::rng::{Domain, StreamRng};
    use rand::Rng;
    use std::sync::Arc;

    fn random_dataset(n: usize, d: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = StreamRng::new(seed, Domain::Data, 9);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let y: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
            .collect();
        Dataset::from_rows(&x, &y, "rand").unwrap()
    }

    fn empirical(ds: Dataset, lambda: f64, gamma: f64, n: usize) -> RidgeProblem {
        RidgeProblem::new(DataSource::Empirical(Arc::new(ds)), lambda, gamma, n, true).unwrap()
    }

    #[test]
    fn exact_interpolation() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![1.0]], &[vec![2.0], vec![2.0]], "t").unwrap();
        let m = ridge_closed_form(&empirical(ds, 0.0, 0.1, 1)).unwrap();
        assert!((m[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn heavy_regularization_shrinks() {
        let m = ridge_closed_form(&empirical(random_dataset(30, 3, 2, 1), 1e9, 0.1, 1)).unwrap();
        assert!(m.norm() < 1e-6);
    }

    #[test]
    fn singular_without_regularization() {
        let ds = Dataset::from_rows(
            &[vec![1.0, 2.0], vec![2.0, 4.0], vec![-1.0, -2.0]],
            &[vec![1.0], vec![0.0], vec![3.0]],
            "rank1",
        )
        .unwrap();
        assert!(matches!(
            ridge_closed_form(&empirical(ds, 0.0, 0.1, 1)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn matches_normal_equations_oracle() {
        // Oracle: solve the stacked least-squares system [X; sqrt(N lambda) I] by QR.
        let ds = random_dataset(5, 3, 1, 4);
        let lambda = 0.3;
        let p = empirical(ds.clone(), lambda, 0.1, 1);
        let m = ridge_closed_form(&p).unwrap();
        let n = ds.len();
        let mut stacked = DMatrix::zeros(n + 3, 3);
        stacked.view_mut((0, 0), (n, 3)).copy_from(&ds.inputs);
        let mut rhs = DVector::zeros(n + 3);
        rhs.rows_mut(0, n).copy_from(&ds.targets.column(0));
        for k in 0..3 {
            stacked[(n + k, k)] = (n as f64 * lambda).sqrt();
        }
        let qr = stacked.clone().qr();
        let sol = qr.r().solve_upper_triangular(&(qr.q().transpose() * rhs)).unwrap();
        for k in 0..3 {
            assert!((m[(0, k)] - sol[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_form_is_stationary() {
        let ds = random_dataset(40, 4, 2, 7);
        let p = empirical(ds, 0.05, 0.1, 1);
        let w = vectorize(&ridge_closed_form(&p).unwrap());
        let g = p.full_grad(&w).unwrap();
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-8);
    }

    #[test]
    fn synthetic_population_optimum_is_zero() {
        let p = RidgeProblem::new(
            DataSource::Synthetic(SyntheticData::standard_normal(2, 1)),
            0.0,
            0.5,
            1,
            true,
        )
        .unwrap();
        let m = ridge_closed_form(&p).unwrap();
        assert_eq!(m.norm(), 0.0);
    }

    #[test]
    fn toy_coefficients() {
        let p = RidgeProblem::new(
            DataSource::Synthetic(SyntheticData::standard_normal(1, 1)),
            0.0,
            0.5,
            1,
            true,
        )
        .unwrap();
        let mut ctx = StepContext::new(3, 0);
        let batch = p.sampler.draw(&mut ctx);
        let (x, y) = (batch.inputs[0], batch.targets[0]);
        let (a, b) = p.coeffs(&batch);
        assert_eq!(a[(0, 0)], 1.0 - 0.5 * x * x);
        assert!((b[0] - 0.5 * x * y).abs() < 1e-15);

        let frozen = RidgeProblem { gamma: 0.0, ..p.clone() };
        let (a, b) = frozen.coeffs(&batch);
        assert_eq!(a, DMatrix::identity(1, 1));
        assert_eq!(b, DVector::zeros(1));
    }

    #[test]
    fn kronecker_elementwise_oracle() {
        let ds = random_dataset(6, 2, 2, 11);
        let (lambda, gamma) = (0.2, 0.3);
        let p = empirical(ds.clone(), lambda, gamma, 2);
        let batch = Batch::from_dataset(&ds, &[1, 4]);
        let (a, b) = p.coeffs(&batch);
        let (d, m) = (2, 2);
        for r in 0..d * m {
            for c in 0..d * m {
                let (jr, kr) = (r / d, r % d);
                let (jc, kc) = (c / d, c % d);
                let mut expect = 0.0;
                if jr == jc {
                    let xx: f64 = [1, 4].iter().map(|&i| ds.inputs[(i, kr)] * ds.inputs[(i, kc)]).sum();
                    expect = if kr == kc { 1.0 - lambda * gamma } else { 0.0 } - gamma * xx / 2.0;
                }
                assert!((a[(r, c)] - expect).abs() < 1e-15);
            }
            let (j, k) = (r / d, r % d);
            let yx: f64 = [1, 4].iter().map(|&i| ds.targets[(i, j)] * ds.inputs[(i, k)]).sum();
            assert!((b[r] - gamma * yx / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sgd_step_equals_recurrence() {
        let ds = random_dataset(20, 3, 2, 5);
        let p = empirical(ds, 0.1, 0.05, 4);
        let mut rng = StreamRng::new(1, Domain::MonteCarlo, 0);
        for _ in 0..50 {
            let batch = p.sampler.draw_iid(&mut rng);
            let w: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let mut g = vec![0.0; 6];
            p.batch_grad(&w, &batch, &mut g);
            let explicit: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - p.gamma * b).collect();
            let (a, b) = p.coeffs(&batch);
            let lin = a * DVector::from_column_slice(&w) + b;
            for (e, l) in explicit.iter().zip(lin.iter()) {
                assert!((e - l).abs() <= 1e-12 * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let src = DataSource::Synthetic(SyntheticData {
            d: 1,
            m: 1,
            input: Law::Uniform { half_width: 1.0 },
            target: Law::Uniform { half_width: 1.0 },
        });
        assert!(RidgeProblem::new(src.clone(), -1.0, 0.1, 1, true).is_err());
        assert!(RidgeProblem::new(src, 0.0, 0.1, 0, true).is_err());
    }
}
