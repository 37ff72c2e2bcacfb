use nalgebra::{DMatrix, DVector};

use super::Dataset;
use crate::error::{Error, Result};

/// A differentiable objective averaged over a batch of samples.
pub trait Model: Send + Sync {
    /// Length of the parameter vector.
    fn dim(&self) -> usize;

    /// Mean loss over `batch`, including any regularizer.
    fn loss(&self, theta: &[f64], data: &Dataset, batch: &[usize]) -> f64;

    /// Gradient of [`Model::loss`].
    fn grad(&self, theta: &[f64], data: &Dataset, batch: &[usize]) -> Vec<f64>;

    /// Held-out metric: top-1 accuracy for classifiers, the objective otherwise.
    fn metric(&self, theta: &[f64], data: &Dataset, batch: &[usize]) -> f64 {
        self.loss(theta, data, batch)
    }

    /// Fails when the dataset does not fit the model.
    fn check(&self, data: &Dataset) -> Result<()>;
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `½ mean (xᵀθ − y)² + (l2/2)‖θ‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeastSquares {
    features: usize,
    l2: f64,
}

impl LeastSquares {
    pub fn new(features: usize, l2: f64) -> Result<Self> {
        if features == 0 {
            return Err(Error::invalid("features", "must be >= 1"));
        }
        if !(l2.is_finite() && l2 >= 0.0) {
            return Err(Error::invalid("l2", "must be finite and >= 0"));
        }
        Ok(Self { features, l2 })
    }

    fn normal_equations(&self, data: &Dataset, batch: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let n = batch.len() as f64;
        let x = DMatrix::from_fn(batch.len(), self.features, |r, c| data.features(batch[r])[c]);
        let y = DVector::from_fn(batch.len(), |r, _| data.label(batch[r]));
        let gram = x.transpose() * &x / n + DMatrix::identity(self.features, self.features) * self.l2;
        let rhs = x.transpose() * y / n;
        (gram, rhs)
    }

    /// Minimizer over `batch`; `None` when the Hessian is singular.
    pub fn optimum(&self, data: &Dataset, batch: &[usize]) -> Option<Vec<f64>> {
        let (gram, rhs) = self.normal_equations(data, batch);
        gram.cholesky().map(|c| c.solve(&rhs).as_slice().to_vec())
    }

    /// Strong-convexity and smoothness constants `(μ, L)` over `batch`: the
    /// extreme eigenvalues of the Hessian.
    pub fn curvature(&self, data: &Dataset, batch: &[usize]) -> (f64, f64) {
        let (gram, _) = self.normal_equations(data, batch);
        let eig = gram.symmetric_eigenvalues();
        (eig.min(), eig.max())
    }
}

impl Model for LeastSquares {
    fn dim(&self) -> usize {
        self.features
    }

    fn loss(&self, theta: &[f64], data: &Dataset, batch: &[usize]) -> f64 {
        let fit: f64 = batch
            .iter()
            .map(|&i| {
                let r = dot(data.features(i), theta) - data.label(i);
                0.5 * r * r
            })
            .sum::<f64>()
            / batch.len() as f64;
        fit + 0.5 * self.l2 * norm_sq(theta)
    }

    fn grad(&self, theta: &[f64], data: &Dataset, batch: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.features];
        for &i in batch {
            let x = data.features(i);
            let r = dot(x, theta) - data.label(i);
            for (gk, xk) in g.iter_mut().zip(x) {
                *gk += r * xk;
            }
        }
        let n = batch.len() as f64;
        for (gk, t) in g.iter_mut().zip(theta) {
            *gk = *gk / n + self.l2 * t;
        }
        g
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        Error::check_len("least-squares features", self.features, data.dim())
    }
}

/// Multinomial logistic regression with a bias per class.
///
/// Layout: the `classes × features` weight matrix row by row, then the
/// `classes` biases. The ridge penalty `(l2/2)‖θ‖²` covers both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxRegression {
    features: usize,
    classes: usize,
    l2: f64,
}

impl SoftmaxRegression {
    pub fn new(features: usize, classes: usize, l2: f64) -> Result<Self> {
        if features == 0 {
            return Err(Error::invalid("features", "must be >= 1"));
        }
        if classes < 2 {
            return Err(Error::invalid("classes", "need at least two classes"));
        }
        if !(l2.is_finite() && l2 >= 0.0) {
            return Err(Error::invalid("l2", "must be finite and >= 0"));
        }
        Ok(Self { features, classes, l2 })
    }

    fn logits(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let bias = &theta[self.classes * self.features..];
        (0..self.classes)
            .map(|c| dot(&theta[c * self.features..(c + 1) * self.features], x) + bias[c])
            .collect()
    }

    /// Stable log-softmax.
    fn log_probs(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let z = self.logits(theta, x);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        z.into_iter().map(|v| v - lse).collect()
    }

    /// Highest-logit class, lowest index on ties.
    pub fn predict(&self, theta: &[f64], x: &[f64]) -> usize {
        let z = self.logits(theta, x);
        let mut best = 0;
        for c in 1..self.classes {
            if z[c] > z[best] {
                best = c;
            }
        }
        best
    }
}

impl Model for SoftmaxRegression {
    fn dim(&self) -> usize {
        self.classes * (self.features + 1)
    }

    fn loss(&self, theta: &[f64], data: &Dataset, batch: &[usize]) -> f64 {
        let nll: f64 = batch
            .iter()
            .map(|&i| -self.log_probs(theta, data.features(i))[data.class(i)])
            .sum::<f64>()
            / batch.len() as f64;
        nll + 0.5 * self.l2 * norm_sq(theta)
    }

    fn grad(&self, theta: &[f64], data: &Dataset, batch: &[usize]) -> Vec<f64> {
        let f = self.features;
        let mut g = vec![0.0; self.dim()];
        for &i in batch {
            let x = data.features(i);
            let lp = self.log_probs(theta, x);
            for c in 0..self.classes {
                let err = lp[c].exp() - f64::from(u8::from(c == data.class(i)));
                for (gk, xk) in g[c * f..(c + 1) * f].iter_mut().zip(x) {
                    *gk += err * xk;
                }
                g[self.classes * f + c] += err;
            }
        }
        let n = batch.len() as f64;
        for (gk, t) in g.iter_mut().zip(theta) {
            *gk = *gk / n + self.l2 * t;
        }
        g
    }

    fn metric(&self, theta: &[f64], data: &Dataset, batch: &[usize]) -> f64 {
        let hits = batch
            .iter()
            .filter(|&&i| self.predict(theta, data.features(i)) == data.class(i))
            .count();
        hits as f64 / batch.len() as f64
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        Error::check_len("softmax features", self.features, data.dim())?;
        Error::check_len("softmax classes", self.classes, data.num_classes())
    }
}
