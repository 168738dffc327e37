//! Adam with coupled L2 weight decay.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One update of `params` given gradients in the same order. A missing
    /// gradient is treated as zero.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Matrix<T>>,
        grads: &[Option<&Matrix<T>>],
    ) -> Result<()> {
        let params: Vec<&mut Matrix<T>> = params.into_iter().collect();
        if params.len() != grads.len() {
            return Err(Error::Consistency(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::one() - T::lit(self.beta1.powi(self.t));
        let c2 = T::one() - T::lit(self.beta2.powi(self.t));
        let (lr, eps, wd) = (T::lit(self.lr), T::lit(self.eps), T::lit(self.weight_decay));
        for (k, p) in params.into_iter().enumerate() {
            if let Some(g) = grads[k] {
                p.ensure_shape("adam", g)?;
            }
            let (m, v) = (self.m[k].as_mut_slice(), self.v[k].as_mut_slice());
            let g = grads[k].map(Matrix::as_slice);
            for (i, x) in p.as_mut_slice().iter_mut().enumerate() {
                let gi = g.map_or(T::zero(), |g| g[i]) + wd * *x;
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                *x -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
