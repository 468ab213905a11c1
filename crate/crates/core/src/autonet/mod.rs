//! The auto-precoder network.
//!
//! A linear complex encoder (two strided convolutions, no bias, no activation)
//! maps the vectorized channel to `M_t * M_r` measurements. Its kernels are
//! the rows of `Q^H` and `P^T`, so the encoder is exactly the sensing operator
//! `P^T kron Q^H`. A dense head (fc, ReLU, batch norm, twice) then feeds two
//! sigmoid output layers scoring every transmit and receive codebook beam.
//!
//! Complex measurements enter the first dense layer interleaved as
//! `(re_0, im_0, re_1, im_1, ...)`, in `vec(Y)` order.

mod checkpoint;
mod layers;

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector};
use crate::rng::{domain, random_phase, stream_rng};
use crate::scalar::Real;
use crate::sensing::MeasurementMatrices;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use layers::{BatchNorm, Dense, BN_EPS, BN_MOMENTUM};

use layers::BnCache;

/// Layer sizes of a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub n_t: usize,
    pub n_r: usize,
    pub m_t: usize,
    pub m_r: usize,
    pub n_tx_beams: usize,
    pub n_rx_beams: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl NetShape {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.n_t,
            self.n_r,
            self.m_t,
            self.m_r,
            self.n_tx_beams,
            self.n_rx_beams,
            self.hidden1,
            self.hidden2,
        ];
        if all.contains(&0) {
            return Err(Error::InvalidArgument(format!("network sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn channel_len(&self) -> usize {
        self.n_t * self.n_r
    }

    pub fn sensed_len(&self) -> usize {
        self.m_t * self.m_r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutoPrecoderParams<T> {
    pub shape: NetShape,
    /// `M_r x N_r`; row `m` is receive kernel `m`, i.e. row `m` of `Q^H`.
    pub enc_rx: ComplexMatrix<T>,
    /// `M_t x N_t`; row `p` is transmit kernel `p`, i.e. row `p` of `P^T`.
    pub enc_tx: ComplexMatrix<T>,
    pub fc1: Dense<T>,
    pub bn1: BatchNorm<T>,
    pub fc2: Dense<T>,
    pub bn2: BatchNorm<T>,
    pub head_tx: Dense<T>,
    pub head_rx: Dense<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkOutput<T> {
    pub tx_scores: Vec<T>,
    pub rx_scores: Vec<T>,
    /// Encoder output `y`.
    pub sensed: ComplexVector<T>,
}

/// Batch-norm behaviour for a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics.
    Train,
    /// Normalize with running statistics.
    Inference,
}

/// Intermediate values of a batched forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct BatchForward<T> {
    pub batch: usize,
    pub mode: Mode,
    pub sensed: Vec<ComplexVector<T>>,
    x0: Vec<T>,
    z1: Vec<T>,
    bn1: BnCache<T>,
    y1: Vec<T>,
    z2: Vec<T>,
    bn2: BnCache<T>,
    y2: Vec<T>,
    /// `batch x n_tx_beams`, row-major.
    pub tx_scores: Vec<T>,
    /// `batch x n_rx_beams`, row-major.
    pub rx_scores: Vec<T>,
}

impl<T: Real> BatchForward<T> {
    pub fn output(&self, i: usize, shape: &NetShape) -> NetworkOutput<T> {
        let (f, w) = (shape.n_tx_beams, shape.n_rx_beams);
        NetworkOutput {
            tx_scores: self.tx_scores[i * f..(i + 1) * f].to_vec(),
            rx_scores: self.rx_scores[i * w..(i + 1) * w].to_vec(),
            sensed: self.sensed[i].clone(),
        }
    }
}

/// Name and length (in reals) of a parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: &'static str,
    pub len: usize,
    pub trainable: bool,
}

fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn complex_reals<T: Real>(m: &ComplexMatrix<T>) -> impl Iterator<Item = T> + '_ {
    m.as_slice().iter().flat_map(|z| [z.re, z.im])
}

fn complex_from_reals<T: Real>(rows: usize, cols: usize, v: &[T]) -> Result<ComplexMatrix<T>> {
    ComplexMatrix::new(rows, cols, v.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect())
}

impl<T: Real> AutoPrecoderParams<T> {
    /// Random initialization: constant-modulus encoder kernels and
    /// Glorot-uniform dense layers with zero biases.
    pub fn init(shape: NetShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = stream_rng(seed, domain::INIT, 0);
        let sr = T::one() / T::lit(shape.n_r as f64).sqrt();
        let st = T::one() / T::lit(shape.n_t as f64).sqrt();
        let enc_rx = ComplexMatrix::from_fn(shape.m_r, shape.n_r, |_, _| random_phase::<T>(&mut rng) * sr);
        let enc_tx = ComplexMatrix::from_fn(shape.m_t, shape.n_t, |_, _| random_phase::<T>(&mut rng) * st);
        Ok(Self {
            shape,
            enc_rx,
            enc_tx,
            fc1: Dense::glorot(2 * shape.sensed_len(), shape.hidden1, &mut rng),
            bn1: BatchNorm::new(shape.hidden1),
            fc2: Dense::glorot(shape.hidden1, shape.hidden2, &mut rng),
            bn2: BatchNorm::new(shape.hidden2),
            head_tx: Dense::glorot(shape.hidden2, shape.n_tx_beams, &mut rng),
            head_rx: Dense::glorot(shape.hidden2, shape.n_rx_beams, &mut rng),
        })
    }

    /// All-zero parameters (running variances included). Used as a gradient accumulator.
    pub fn zeros(shape: NetShape) -> Self {
        let mut bn1 = BatchNorm::new(shape.hidden1);
        let mut bn2 = BatchNorm::new(shape.hidden2);
        bn1.gamma.fill(T::zero());
        bn2.gamma.fill(T::zero());
        bn1.running_var.fill(T::zero());
        bn2.running_var.fill(T::zero());
        Self {
            shape,
            enc_rx: ComplexMatrix::zeros(shape.m_r, shape.n_r),
            enc_tx: ComplexMatrix::zeros(shape.m_t, shape.n_t),
            fc1: Dense::zeros(2 * shape.sensed_len(), shape.hidden1),
            bn1,
            fc2: Dense::zeros(shape.hidden1, shape.hidden2),
            bn2,
            head_tx: Dense::zeros(shape.hidden2, shape.n_tx_beams),
            head_rx: Dense::zeros(shape.hidden2, shape.n_rx_beams),
        }
    }

    /// Every tensor in checkpoint order.
    pub fn layout(&self) -> Vec<TensorInfo> {
        let s = &self.shape;
        let t = |name, len| TensorInfo { name, len, trainable: true };
        let f = |name, len| TensorInfo { name, len, trainable: false };
        vec![
            t("enc_rx", 2 * s.m_r * s.n_r),
            t("enc_tx", 2 * s.m_t * s.n_t),
            t("fc1.weight", self.fc1.weight.len()),
            t("fc1.bias", s.hidden1),
            t("fc2.weight", self.fc2.weight.len()),
            t("fc2.bias", s.hidden2),
            t("head_tx.weight", self.head_tx.weight.len()),
            t("head_tx.bias", s.n_tx_beams),
            t("head_rx.weight", self.head_rx.weight.len()),
            t("head_rx.bias", s.n_rx_beams),
            t("bn1.gamma", s.hidden1),
            t("bn1.beta", s.hidden1),
            f("bn1.running_mean", s.hidden1),
            f("bn1.running_var", s.hidden1),
            t("bn2.gamma", s.hidden2),
            t("bn2.beta", s.hidden2),
            f("bn2.running_mean", s.hidden2),
            f("bn2.running_var", s.hidden2),
        ]
    }

    /// All tensors, flattened in [`layout`](Self::layout) order.
    pub fn flatten_all(&self) -> Vec<T> {
        let mut v = Vec::new();
        v.extend(complex_reals(&self.enc_rx));
        v.extend(complex_reals(&self.enc_tx));
        for d in [&self.fc1, &self.fc2, &self.head_tx, &self.head_rx] {
            v.extend_from_slice(&d.weight);
            v.extend_from_slice(&d.bias);
        }
        for bn in [&self.bn1, &self.bn2] {
            v.extend_from_slice(&bn.gamma);
            v.extend_from_slice(&bn.beta);
            v.extend_from_slice(&bn.running_mean);
            v.extend_from_slice(&bn.running_var);
        }
        v
    }

    pub fn set_all(&mut self, v: &[T]) -> Result<()> {
        let total: usize = self.layout().iter().map(|t| t.len).sum();
        if v.len() != total {
            return Err(Error::dim("set_all", format!("{} values for {total} parameters", v.len())));
        }
        let mut rest = v;
        let mut take = |n: usize| {
            let (a, b) = rest.split_at(n);
            rest = b;
            a
        };
        let s = self.shape;
        self.enc_rx = complex_from_reals(s.m_r, s.n_r, take(2 * s.m_r * s.n_r))?;
        self.enc_tx = complex_from_reals(s.m_t, s.n_t, take(2 * s.m_t * s.n_t))?;
        for d in [&mut self.fc1, &mut self.fc2, &mut self.head_tx, &mut self.head_rx] {
            let (nw, nb) = (d.weight.len(), d.bias.len());
            d.weight.copy_from_slice(take(nw));
            d.bias.copy_from_slice(take(nb));
        }
        for bn in [&mut self.bn1, &mut self.bn2] {
            let n = bn.gamma.len();
            bn.gamma.copy_from_slice(take(n));
            bn.beta.copy_from_slice(take(n));
            bn.running_mean.copy_from_slice(take(n));
            bn.running_var.copy_from_slice(take(n));
        }
        Ok(())
    }

    /// Trainable parameters, flattened in layout order.
    pub fn flatten_trainable(&self) -> Vec<T> {
        let all = self.flatten_all();
        let mut out = Vec::with_capacity(all.len());
        let mut at = 0;
        for t in self.layout() {
            if t.trainable {
                out.extend_from_slice(&all[at..at + t.len]);
            }
            at += t.len;
        }
        out
    }

    pub fn set_trainable(&mut self, v: &[T]) -> Result<()> {
        let mut all = self.flatten_all();
        let mut at = 0;
        let mut src = 0;
        for t in self.layout() {
            if t.trainable {
                if src + t.len > v.len() {
                    return Err(Error::dim("set_trainable", format!("only {} values", v.len())));
                }
                all[at..at + t.len].copy_from_slice(&v[src..src + t.len]);
                src += t.len;
            }
            at += t.len;
        }
        if src != v.len() {
            return Err(Error::dim("set_trainable", format!("{} values for {src} parameters", v.len())));
        }
        self.set_all(&all)
    }

    /// Number of leading trainable reals that belong to the encoder.
    pub fn encoder_len(&self) -> usize {
        2 * (self.enc_rx.as_slice().len() + self.enc_tx.as_slice().len())
    }

    /// Every value rounded through `f32`, i.e. what a checkpoint stores.
    pub fn rounded_to_f32(&self) -> Self {
        let mut out = self.clone();
        let v: Vec<T> = self.flatten_all().iter().map(|x| T::lit(x.as_f64() as f32 as f64)).collect();
        out.set_all(&v).expect("same layout");
        out
    }

    pub fn all_finite(&self) -> bool {
        self.flatten_all().iter().all(|x| x.is_finite())
    }

    /// Two-stage strided convolution over the column-stacked channel `h`:
    /// stage one applies each receive kernel to every length-`N_r` segment,
    /// stage two applies each transmit kernel across the segments. Output
    /// index `p * M_r + m` holds `(Q^H H P)[m][p]`.
    pub fn encoder_forward(&self, h: &ComplexVector<T>) -> Result<ComplexVector<T>> {
        let s = &self.shape;
        if h.len() != s.channel_len() {
            return Err(Error::dim(
                "encoder_forward",
                format!("input of {} for {}x{} arrays", h.len(), s.n_r, s.n_t),
            ));
        }
        let stage1 = self.encoder_stage1(h);
        let mut y = ComplexVector::zeros(s.sensed_len());
        for p in 0..s.m_t {
            let k = self.enc_tx.row(p);
            for m in 0..s.m_r {
                let row = &stage1[m * s.n_t..(m + 1) * s.n_t];
                y[p * s.m_r + m] = k.iter().zip(row).map(|(a, b)| a * b).sum();
            }
        }
        Ok(y)
    }

    /// `M_r x N_t` row-major: `out[m][t] = sum_k enc_rx[m][k] h[t N_r + k]`.
    fn encoder_stage1(&self, h: &ComplexVector<T>) -> Vec<Complex<T>> {
        let s = &self.shape;
        let h = h.as_slice();
        let mut out = vec![Complex::new(T::zero(), T::zero()); s.m_r * s.n_t];
        for m in 0..s.m_r {
            let k = self.enc_rx.row(m);
            for t in 0..s.n_t {
                let seg = &h[t * s.n_r..(t + 1) * s.n_r];
                out[m * s.n_t + t] = k.iter().zip(seg).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    /// Dense head on one measurement vector, batch norm in inference mode.
    pub fn precoder_forward(&self, y: &ComplexVector<T>) -> Result<NetworkOutput<T>> {
        if y.len() != self.shape.sensed_len() {
            return Err(Error::dim(
                "precoder_forward",
                format!("{} measurements, expected {}", y.len(), self.shape.sensed_len()),
            ));
        }
        let fwd = self.head_batch(vec![y.clone()], Mode::Inference);
        Ok(fwd.output(0, &self.shape))
    }

    /// Inference-mode forward pass of one channel.
    pub fn forward(&self, h: &ComplexVector<T>) -> Result<NetworkOutput<T>> {
        let y = self.encoder_forward(h)?;
        self.precoder_forward(&y)
    }

    pub fn forward_batch(&self, inputs: &[&ComplexVector<T>], mode: Mode) -> Result<BatchForward<T>> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let sensed = inputs
            .par_iter()
            .map(|h| self.encoder_forward(h))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.head_batch(sensed, mode))
    }

    fn head_batch(&self, sensed: Vec<ComplexVector<T>>, mode: Mode) -> BatchForward<T> {
        let b = sensed.len();
        let mut x0 = Vec::with_capacity(b * 2 * self.shape.sensed_len());
        for y in &sensed {
            x0.extend(y.iter().flat_map(|z| [z.re, z.im]));
        }
        let z1 = self.fc1.forward(&x0, b);
        let a1: Vec<T> = z1.iter().map(|&v| v.max(T::zero())).collect();
        let (y1, bn1) = self.bn1.forward(&a1, b, mode);
        let z2 = self.fc2.forward(&y1, b);
        let a2: Vec<T> = z2.iter().map(|&v| v.max(T::zero())).collect();
        let (y2, bn2) = self.bn2.forward(&a2, b, mode);
        let tx_scores = self.head_tx.forward(&y2, b).into_iter().map(sigmoid).collect();
        let rx_scores = self.head_rx.forward(&y2, b).into_iter().map(sigmoid).collect();
        BatchForward { batch: b, mode, sensed, x0, z1, bn1, y1, z2, bn2, y2, tx_scores, rx_scores }
    }

    /// Folds the batch statistics of a training-mode pass into the running averages.
    pub fn update_running_stats(&mut self, fwd: &BatchForward<T>) {
        if fwd.mode == Mode::Train {
            self.bn1.absorb(&fwd.bn1);
            self.bn2.absorb(&fwd.bn2);
        }
    }

    /// Reverse pass. `g_tx` and `g_rx` are the loss gradients with respect
    /// to the output-layer pre-activations (`batch x beams`, row-major).
    /// Complex parameters receive `dL/d re + j dL/d im`.
    pub fn backward_batch(
        &self,
        inputs: &[&ComplexVector<T>],
        fwd: &BatchForward<T>,
        g_tx: &[T],
        g_rx: &[T],
    ) -> Result<Self> {
        let s = self.shape;
        let b = fwd.batch;
        if inputs.len() != b || g_tx.len() != b * s.n_tx_beams || g_rx.len() != b * s.n_rx_beams {
            return Err(Error::dim("backward_batch", "batch sizes disagree"));
        }
        let mut grad = Self::zeros(s);
        let mut dy2 = vec![T::zero(); b * s.hidden2];
        self.head_tx.backward(&fwd.y2, g_tx, b, &mut grad.head_tx, Some(&mut dy2));
        self.head_rx.backward(&fwd.y2, g_rx, b, &mut grad.head_rx, Some(&mut dy2));
        let mut dz2 = self.bn2.backward(&fwd.bn2, &dy2, b, &mut grad.bn2);
        relu_backward(&mut dz2, &fwd.z2);
        let mut dy1 = vec![T::zero(); b * s.hidden1];
        self.fc2.backward(&fwd.y1, &dz2, b, &mut grad.fc2, Some(&mut dy1));
        let mut dz1 = self.bn1.backward(&fwd.bn1, &dy1, b, &mut grad.bn1);
        relu_backward(&mut dz1, &fwd.z1);
        let width = 2 * s.sensed_len();
        let mut dx0 = vec![T::zero(); b * width];
        self.fc1.backward(&fwd.x0, &dz1, b, &mut grad.fc1, Some(&mut dx0));

        let per_sample: Vec<(ComplexMatrix<T>, ComplexMatrix<T>)> = (0..b)
            .into_par_iter()
            .map(|i| {
                let g: Vec<Complex<T>> = dx0[i * width..(i + 1) * width]
                    .chunks_exact(2)
                    .map(|p| Complex::new(p[0], p[1]))
                    .collect();
                self.encoder_backward(inputs[i], &g)
            })
            .collect();
        for (grx, gtx) in &per_sample {
            grad.enc_rx = grad.enc_rx.add(grx)?;
            grad.enc_tx = grad.enc_tx.add(gtx)?;
        }
        Ok(grad)
    }

    fn encoder_backward(&self, h: &ComplexVector<T>, g_y: &[Complex<T>]) -> (ComplexMatrix<T>, ComplexMatrix<T>) {
        let s = &self.shape;
        let stage1 = self.encoder_stage1(h);
        let zero = Complex::new(T::zero(), T::zero());
        let mut g_tx = ComplexMatrix::zeros(s.m_t, s.n_t);
        let mut g_stage1 = vec![zero; s.m_r * s.n_t];
        for p in 0..s.m_t {
            for t in 0..s.n_t {
                let k = self.enc_tx[(p, t)].conj();
                let mut acc = zero;
                for m in 0..s.m_r {
                    let g = g_y[p * s.m_r + m];
                    acc += g * stage1[m * s.n_t + t].conj();
                    g_stage1[m * s.n_t + t] += g * k;
                }
                g_tx[(p, t)] = acc;
            }
        }
        let hs = h.as_slice();
        let g_rx = ComplexMatrix::from_fn(s.m_r, s.n_r, |m, k| {
            (0..s.n_t).map(|t| g_stage1[m * s.n_t + t] * hs[t * s.n_r + k].conj()).sum()
        });
        (g_rx, g_tx)
    }

    /// Sensing matrices implemented by the encoder: `Q = enc_rx^H`, `P = enc_tx^T`.
    pub fn export_measurement_matrices(&self) -> MeasurementMatrices<T> {
        MeasurementMatrices { p: self.enc_tx.transpose(), q: self.enc_rx.hermitian() }
    }

    pub fn import_measurement_matrices(&mut self, mm: &MeasurementMatrices<T>) -> Result<()> {
        let s = &self.shape;
        if mm.p.shape() != (s.n_t, s.m_t) || mm.q.shape() != (s.n_r, s.m_r) {
            return Err(Error::dim(
                "import_measurement_matrices",
                format!("P {:?}, Q {:?} for network {:?}", mm.p.shape(), mm.q.shape(), s),
            ));
        }
        self.enc_tx = mm.p.transpose();
        self.enc_rx = mm.q.hermitian();
        Ok(())
    }
}

fn relu_backward<T: Real>(d: &mut [T], pre: &[T]) {
    for (g, &z) in d.iter_mut().zip(pre) {
        if z <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Indices of the `k` largest scores, ties to the lower index, sorted ascending.
pub fn top_k<T: Real>(scores: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

pub fn predict_beams<T: Real>(out: &NetworkOutput<T>, n_rf_tx: usize, n_rf_rx: usize) -> (Vec<usize>, Vec<usize>) {
    (top_k(&out.tx_scores, n_rf_tx), top_k(&out.rx_scores, n_rf_rx))
}

/// Random complex channel vector for tests and diagnostics.
pub fn random_channel_vector<T: Real>(len: usize, rng: &mut impl Rng) -> ComplexVector<T> {
    ComplexVector::new((0..len).map(|_| crate::rng::complex_gaussian(rng, T::one())).collect())
}
