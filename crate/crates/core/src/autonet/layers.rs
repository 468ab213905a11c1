use rand::Rng;

use super::Mode;
use crate::scalar::Real;

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPS: f64 = 1e-5;

/// Affine layer `z = W x + b` with `W` stored `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weight: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = (0..inputs * outputs).map(|_| T::lit(rng.random_range(-limit..limit))).collect();
        Self { inputs, outputs, weight, bias: vec![T::zero(); outputs] }
    }

    /// `x` is `batch x inputs`, row-major; returns `batch x outputs`.
    pub fn forward(&self, x: &[T], batch: usize) -> Vec<T> {
        debug_assert_eq!(x.len(), batch * self.inputs);
        let mut z: Vec<T> = Vec::with_capacity(batch * self.outputs);
        for _ in 0..batch {
            z.extend_from_slice(&self.bias);
        }
        let (i, o) = (self.inputs as isize, self.outputs as isize);
        T::gemm(batch, self.inputs, self.outputs, T::one(), x, i, 1, &self.weight, 1, i, T::one(), &mut z, o, 1);
        z
    }

    /// Accumulates parameter gradients into `grad` and, if requested, adds
    /// the input gradient `dz W` into `dx`.
    pub fn backward(&self, x: &[T], dz: &[T], batch: usize, grad: &mut Dense<T>, dx: Option<&mut [T]>) {
        let (i, o) = (self.inputs as isize, self.outputs as isize);
        T::gemm(self.outputs, batch, self.inputs, T::one(), dz, 1, o, x, i, 1, T::one(), &mut grad.weight, i, 1);
        for row in dz.chunks_exact(self.outputs) {
            for (g, &d) in grad.bias.iter_mut().zip(row) {
                *g += d;
            }
        }
        if let Some(dx) = dx {
            T::gemm(batch, self.outputs, self.inputs, T::one(), dz, o, 1, &self.weight, i, 1, T::one(), dx, i, 1);
        }
    }
}

/// Per-feature batch normalization with a learned scale and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

#[derive(Clone, Debug)]
pub(crate) struct BnCache<T> {
    mode: Mode,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mean: Vec<T>,
    var: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(n: usize) -> Self {
        Self {
            gamma: vec![T::one(); n],
            beta: vec![T::zero(); n],
            running_mean: vec![T::zero(); n],
            running_var: vec![T::one(); n],
        }
    }

    pub(crate) fn forward(&self, x: &[T], batch: usize, mode: Mode) -> (Vec<T>, BnCache<T>) {
        let n = self.gamma.len();
        let eps = T::lit(BN_EPS);
        let (mean, var) = match mode {
            Mode::Inference => (self.running_mean.clone(), self.running_var.clone()),
            Mode::Train => {
                let inv_b = T::one() / T::lit(batch as f64);
                let mut mean = vec![T::zero(); n];
                for row in x.chunks_exact(n) {
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m *= inv_b);
                let mut var = vec![T::zero(); n];
                for row in x.chunks_exact(n) {
                    for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s *= inv_b);
                (mean, var)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = Vec::with_capacity(x.len());
        let mut y = Vec::with_capacity(x.len());
        for row in x.chunks_exact(n) {
            for j in 0..n {
                let h = (row[j] - mean[j]) * inv_std[j];
                xhat.push(h);
                y.push(self.gamma[j] * h + self.beta[j]);
            }
        }
        (y, BnCache { mode, xhat, inv_std, mean, var })
    }

    /// Returns the input gradient; accumulates scale/shift gradients into `grad`.
    pub(crate) fn backward(&self, cache: &BnCache<T>, dy: &[T], batch: usize, grad: &mut BatchNorm<T>) -> Vec<T> {
        let n = self.gamma.len();
        let mut sum_dy = vec![T::zero(); n];
        let mut sum_dy_xhat = vec![T::zero(); n];
        for (drow, hrow) in dy.chunks_exact(n).zip(cache.xhat.chunks_exact(n)) {
            for j in 0..n {
                sum_dy[j] += drow[j];
                sum_dy_xhat[j] += drow[j] * hrow[j];
            }
        }
        for j in 0..n {
            grad.beta[j] += sum_dy[j];
            grad.gamma[j] += sum_dy_xhat[j];
        }
        let batch_stats = cache.mode == Mode::Train;
        let inv_b = T::one() / T::lit(batch as f64);
        let mut dx = Vec::with_capacity(dy.len());
        for (drow, hrow) in dy.chunks_exact(n).zip(cache.xhat.chunks_exact(n)) {
            for j in 0..n {
                let scale = self.gamma[j] * cache.inv_std[j];
                dx.push(if batch_stats {
                    scale * (drow[j] - inv_b * sum_dy[j] - hrow[j] * inv_b * sum_dy_xhat[j])
                } else {
                    scale * drow[j]
                });
            }
        }
        dx
    }

    pub(crate) fn absorb(&mut self, cache: &BnCache<T>) {
        let mo = T::lit(BN_MOMENTUM);
        let keep = T::one() - mo;
        for j in 0..self.gamma.len() {
            self.running_mean[j] = mo * self.running_mean[j] + keep * cache.mean[j];
            self.running_var[j] = mo * self.running_var[j] + keep * cache.var[j];
        }
    }
}
