//! Supervised multi-task training of the auto-precoder.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autonet::{top_k, AutoPrecoderParams, BatchForward, Mode, NetworkOutput};
use crate::error::{Error, Result};
use crate::linalg::ComplexVector;
use crate::rng::{domain, stream_rng};
use crate::scalar::Real;

/// Scores are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    /// Set from the experiment seed rather than its own key.
    #[serde(skip)]
    pub seed: u64,
    /// Share of the training examples held out for validation and checkpoint selection.
    pub val_fraction: f64,
    /// Keep the encoder kernels fixed and train only the dense head.
    pub freeze_encoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            learning_rate: 0.005,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 200,
            seed: 0,
            val_fraction: 0.1,
            freeze_encoder: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::config(format!("train.{field}"), reason));
        if self.batch_size < 2 {
            return bad("batch_size", "must be at least 2 (batch norm needs batch statistics)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", "must be positive");
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(name, "must lie in [0, 1)");
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps", "must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction", "must lie strictly between 0 and 1");
        }
        Ok(())
    }
}

/// Multi-hot targets for both heads.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector {
    pub tx_hot: Vec<bool>,
    pub rx_hot: Vec<bool>,
}

impl LabelVector {
    pub fn from_indices(tx: &[usize], rx: &[usize], n_tx_beams: usize, n_rx_beams: usize) -> Result<Self> {
        let hot = |idx: &[usize], n: usize| -> Result<Vec<bool>> {
            let mut v = vec![false; n];
            for &i in idx {
                if i >= n || v[i] {
                    return Err(Error::InvalidIndex(format!("label {i} invalid for {n} classes")));
                }
                v[i] = true;
            }
            Ok(v)
        };
        Ok(Self { tx_hot: hot(tx, n_tx_beams)?, rx_hot: hot(rx, n_rx_beams)? })
    }
}

/// One training example: network input plus label index sets.
#[derive(Clone, Debug)]
pub struct Example<T> {
    pub input: ComplexVector<T>,
    pub tx: Vec<usize>,
    pub rx: Vec<usize>,
}

fn bce_terms<T: Real>(scores: &[T], hot: &[bool]) -> T {
    let eps = T::lit(BCE_EPS);
    let sum: T = scores
        .iter()
        .zip(hot)
        .map(|(&s, &y)| {
            let s = s.max(eps).min(T::one() - eps);
            if y {
                -s.ln()
            } else {
                -(T::one() - s).ln()
            }
        })
        .sum();
    sum / T::lit(scores.len() as f64)
}

/// `(BCE_tx + BCE_rx) / 2`, each averaged over its classes, in nats.
pub fn bce_multitask_loss<T: Real>(out: &NetworkOutput<T>, label: &LabelVector) -> Result<T> {
    if out.tx_scores.len() != label.tx_hot.len() || out.rx_scores.len() != label.rx_hot.len() {
        return Err(Error::dim("bce_multitask_loss", "score and label lengths differ"));
    }
    Ok(T::lit(0.5) * (bce_terms(&out.tx_scores, &label.tx_hot) + bce_terms(&out.rx_scores, &label.rx_hot)))
}

/// Mean batch loss and its gradient with respect to the output pre-activations.
pub fn loss_and_logit_grads<T: Real>(fwd: &BatchForward<T>, labels: &[&LabelVector]) -> (T, Vec<T>, Vec<T>) {
    let b = fwd.batch;
    let n_tx = fwd.tx_scores.len() / b;
    let n_rx = fwd.rx_scores.len() / b;
    let eps = T::lit(BCE_EPS);
    let grads = |scores: &[T], hot: &[bool], n: usize| -> Vec<T> {
        let scale = T::lit(0.5 / (n * b) as f64);
        scores
            .iter()
            .zip(hot)
            .map(|(&s, &y)| {
                if s <= eps || s >= T::one() - eps {
                    T::zero()
                } else {
                    scale * (s - if y { T::one() } else { T::zero() })
                }
            })
            .collect()
    };
    let mut loss = T::zero();
    let mut g_tx = Vec::with_capacity(b * n_tx);
    let mut g_rx = Vec::with_capacity(b * n_rx);
    for (i, label) in labels.iter().enumerate() {
        let st = &fwd.tx_scores[i * n_tx..(i + 1) * n_tx];
        let sr = &fwd.rx_scores[i * n_rx..(i + 1) * n_rx];
        loss += T::lit(0.5) * (bce_terms(st, &label.tx_hot) + bce_terms(sr, &label.rx_hot));
        g_tx.extend(grads(st, &label.tx_hot, n_tx));
        g_rx.extend(grads(sr, &label.rx_hot, n_rx));
    }
    (loss / T::lit(b as f64), g_tx, g_rx)
}

/// Train-mode loss of a batch and the gradient of every parameter.
pub fn backward<T: Real>(
    params: &AutoPrecoderParams<T>,
    inputs: &[&ComplexVector<T>],
    labels: &[&LabelVector],
) -> Result<(T, AutoPrecoderParams<T>, BatchForward<T>)> {
    if inputs.len() != labels.len() {
        return Err(Error::dim("backward", "inputs and labels differ in count"));
    }
    let fwd = params.forward_batch(inputs, Mode::Train)?;
    let (loss, g_tx, g_rx) = loss_and_logit_grads(&fwd, labels);
    let grad = params.backward_batch(inputs, &fwd, &g_tx, &g_rx)?;
    Ok((loss, grad, fwd))
}

/// Largest relative error found for one tensor by [`gradient_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub tensor: &'static str,
    pub probes: usize,
    pub max_rel_err: f64,
}

/// Denominator floor of the relative error, so that vanishing gradients are
/// compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-7;

/// Compares train-mode analytic gradients with central differences of step
/// `step`. Each probe draws a random batch of `batch` samples from the pool
/// and a random entry of one trainable tensor.
pub fn gradient_check(
    params: &AutoPrecoderParams<f64>,
    pool: &[ComplexVector<f64>],
    labels: &[LabelVector],
    probes_per_tensor: usize,
    batch: usize,
    step: f64,
    seed: u64,
) -> Result<Vec<GradCheck>> {
    if pool.len() != labels.len() || batch < 2 || batch > pool.len() {
        return Err(Error::InvalidArgument("gradient check needs a labelled pool of at least `batch` >= 2 samples".into()));
    }
    let mut rng = stream_rng(seed, domain::SHUFFLE, u64::MAX);
    let base = params.flatten_all();
    let mut out = Vec::new();
    let mut at = 0;
    for t in params.layout() {
        if t.trainable {
            let mut worst = 0.0f64;
            for _ in 0..probes_per_tensor {
                let idx: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), batch).into_vec();
                let inputs: Vec<&ComplexVector<f64>> = idx.iter().map(|&i| &pool[i]).collect();
                let ls: Vec<&LabelVector> = idx.iter().map(|&i| &labels[i]).collect();
                let k = at + rand::Rng::random_range(&mut rng, 0..t.len);
                let analytic = backward(params, &inputs, &ls)?.1.flatten_all()[k];
                let loss_at = |delta: f64| -> Result<f64> {
                    let mut v = base.clone();
                    v[k] += delta;
                    let mut q = params.clone();
                    q.set_all(&v)?;
                    let fwd = q.forward_batch(&inputs, Mode::Train)?;
                    Ok(loss_and_logit_grads(&fwd, &ls).0)
                };
                let fd = (loss_at(step)? - loss_at(-step)?) / (2.0 * step);
                let err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(GRAD_CHECK_FLOOR);
                worst = worst.max(err);
            }
            out.push(GradCheck { tensor: t.name, probes: probes_per_tensor, max_rel_err: worst });
        }
        at += t.len;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n], step: 0 }
    }
}

/// One bias-corrected Adam update of a flat parameter vector.
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], state: &mut AdamState<T>, cfg: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim(
            "adam_step",
            format!("{} params, {} grads, {} moments", params.len(), grads.len(), state.m.len()),
        ));
    }
    state.step += 1;
    let (b1, b2) = (T::lit(cfg.adam_beta1), T::lit(cfg.adam_beta2));
    let c1 = T::one() - b1.powi(state.step as i32);
    let c2 = T::one() - b2.powi(state.step as i32);
    let lr = T::lit(cfg.learning_rate);
    let eps = T::lit(cfg.adam_eps);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

fn intersection(a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|x| b.contains(x)).count()
}

/// `|truth ∩ pred| / |truth|`.
pub fn sample_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty label set".into()));
    }
    Ok(intersection(pred, truth) as f64 / truth.len() as f64)
}

pub fn precision(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::InvalidArgument("precision of an empty prediction".into()));
    }
    Ok(intersection(pred, truth) as f64 / pred.len() as f64)
}

pub fn recall(pred: &[usize], truth: &[usize]) -> Result<f64> {
    sample_accuracy(pred, truth)
}

/// Mean of per-sample accuracies.
pub fn dataset_accuracy(per_sample: &[f64]) -> Result<f64> {
    if per_sample.is_empty() {
        return Err(Error::InvalidArgument("accuracy over an empty set".into()));
    }
    Ok(per_sample.iter().sum::<f64>() / per_sample.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_tx_acc: f64,
    pub val_rx_acc: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,val_tx_acc,val_rx_acc\n");
    for r in history {
        writeln!(s, "{},{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_tx_acc, r.val_rx_acc).expect("string write");
    }
    s
}

/// Loss and accuracies of a set of examples, inference mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub tx_acc: f64,
    pub rx_acc: f64,
    pub tx_pred: Vec<Vec<usize>>,
    pub rx_pred: Vec<Vec<usize>>,
}

const EVAL_CHUNK: usize = 1024;

pub fn evaluate<T: Real>(params: &AutoPrecoderParams<T>, examples: &[&Example<T>]) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("nothing to evaluate".into()));
    }
    let s = params.shape;
    let mut loss = 0.0;
    let (mut tx_acc, mut rx_acc) = (Vec::new(), Vec::new());
    let (mut tx_pred, mut rx_pred) = (Vec::new(), Vec::new());
    for chunk in examples.chunks(EVAL_CHUNK) {
        let inputs: Vec<&ComplexVector<T>> = chunk.iter().map(|e| &e.input).collect();
        let fwd = params.forward_batch(&inputs, Mode::Inference)?;
        for (i, e) in chunk.iter().enumerate() {
            let out = fwd.output(i, &s);
            let label = LabelVector::from_indices(&e.tx, &e.rx, s.n_tx_beams, s.n_rx_beams)?;
            loss += bce_multitask_loss(&out, &label)?.as_f64();
            let tp = top_k(&out.tx_scores, e.tx.len());
            let rp = top_k(&out.rx_scores, e.rx.len());
            tx_acc.push(sample_accuracy(&tp, &e.tx)?);
            rx_acc.push(sample_accuracy(&rp, &e.rx)?);
            tx_pred.push(tp);
            rx_pred.push(rp);
        }
    }
    Ok(Evaluation {
        loss: loss / examples.len() as f64,
        tx_acc: dataset_accuracy(&tx_acc)?,
        rx_acc: dataset_accuracy(&rx_acc)?,
        tx_pred,
        rx_pred,
    })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters with the lowest validation loss seen, initial ones included.
    pub params: AutoPrecoderParams<T>,
    /// Parameters after the last epoch.
    pub final_params: AutoPrecoderParams<T>,
    pub history: Vec<EpochRecord>,
    pub initial_val_loss: f64,
    /// 0 when no epoch improved on the initial parameters.
    pub best_epoch: usize,
}

/// Seeded split of `0..n` into training and validation indices.
pub fn validation_split(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_val = (n as f64 * val_fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {val_fraction} leaves an empty side for {n} examples"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, domain::SPLIT, 1));
    let val = idx.split_off(n - n_val);
    Ok((idx, val))
}

/// Mini-batch Adam training with best-validation-loss checkpointing.
/// `on_epoch` sees every history row as it is produced.
pub fn train<T: Real>(
    examples: &[Example<T>],
    init: AutoPrecoderParams<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let s = init.shape;
    let labels: Vec<LabelVector> = examples
        .iter()
        .map(|e| LabelVector::from_indices(&e.tx, &e.rx, s.n_tx_beams, s.n_rx_beams))
        .collect::<Result<_>>()?;
    let (train_idx, val_idx) = validation_split(examples.len(), cfg.val_fraction, cfg.seed)?;
    let val: Vec<&Example<T>> = val_idx.iter().map(|&i| &examples[i]).collect();

    let mut params = init;
    let initial_val_loss = evaluate(&params, &val)?.loss;
    let mut best = (initial_val_loss, params.clone(), 0);
    let mut flat = params.flatten_trainable();
    let mut adam = AdamState::new(flat.len());
    let frozen = if cfg.freeze_encoder { params.encoder_len() } else { 0 };
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut last_finite = f64::NAN;

    for epoch in 1..=cfg.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut stream_rng(cfg.seed, domain::SHUFFLE, epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            if batch.len() < 2 {
                continue;
            }
            let inputs: Vec<&ComplexVector<T>> = batch.iter().map(|&i| &examples[i].input).collect();
            let batch_labels: Vec<&LabelVector> = batch.iter().map(|&i| &labels[i]).collect();
            let (loss, grad, fwd) = backward(&params, &inputs, &batch_labels)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi, loss, last_finite });
            }
            last_finite = loss;
            let mut g = grad.flatten_trainable();
            g[..frozen].iter_mut().for_each(|x| *x = T::zero());
            adam_step(&mut flat, &g, &mut adam, cfg)?;
            params.set_trainable(&flat)?;
            params.update_running_stats(&fwd);
            loss_sum += loss;
            batches += 1;
        }
        if !params.all_finite() {
            return Err(Error::Diverged { epoch, batch: batches, loss: f64::NAN, last_finite });
        }
        let ev = evaluate(&params, &val)?;
        let rec = EpochRecord {
            epoch,
            train_loss: if batches > 0 { loss_sum / batches as f64 } else { f64::NAN },
            val_loss: ev.loss,
            val_tx_acc: ev.tx_acc,
            val_rx_acc: ev.rx_acc,
        };
        on_epoch(&rec);
        if rec.val_loss < best.0 {
            best = (rec.val_loss, params.clone(), epoch);
        }
        history.push(rec);
    }
    Ok(TrainOutcome { params: best.1, final_params: params, history, initial_val_loss, best_epoch: best.2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autonet::{random_channel_vector, NetShape};
    use rand::Rng;

    fn out(tx: Vec<f64>, rx: Vec<f64>) -> NetworkOutput<f64> {
        NetworkOutput { tx_scores: tx, rx_scores: rx, sensed: ComplexVector::zeros(1) }
    }

    #[test]
    fn perfect_scores_give_near_zero_loss() {
        let label = LabelVector::from_indices(&[0, 2], &[1], 4, 3).unwrap();
        let o = out(vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]);
        let l = bce_multitask_loss(&o, &label).unwrap();
        assert!((l - -(1.0 - BCE_EPS).ln()).abs() < 1e-12);
        assert!(l > 0.0 && l < 2e-7);
    }

    #[test]
    fn uninformative_scores_give_ln2() {
        let label = LabelVector::from_indices(&[1], &[0, 2], 5, 3).unwrap();
        let l = bce_multitask_loss(&out(vec![0.5; 5], vec![0.5; 3]), &label).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_four_class_loss() {
        let label = LabelVector::from_indices(&[0, 3], &[1, 2], 4, 4).unwrap();
        let tx = vec![0.8, 0.3, 0.1, 0.6];
        let rx = vec![0.2, 0.7, 0.9, 0.4];
        let bt = -(0.8f64.ln() + 0.7f64.ln() + 0.9f64.ln() + 0.6f64.ln()) / 4.0;
        let br = -(0.8f64.ln() + 0.7f64.ln() + 0.9f64.ln() + 0.6f64.ln()) / 4.0;
        let l = bce_multitask_loss(&out(tx, rx), &label).unwrap();
        assert!((l - 0.5 * (bt + br)).abs() < 1e-15);
    }

    #[test]
    fn swapping_tasks_leaves_loss_unchanged() {
        let mut rng = stream_rng(1, 0, 0);
        for _ in 0..50 {
            let tx: Vec<f64> = (0..6).map(|_| rng.random()).collect();
            let rx: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            let a = LabelVector::from_indices(&[1, 4], &[0, 3], 6, 4).unwrap();
            let b = LabelVector::from_indices(&[0, 3], &[1, 4], 4, 6).unwrap();
            let la = bce_multitask_loss(&out(tx.clone(), rx.clone()), &a).unwrap();
            let lb = bce_multitask_loss(&out(rx, tx), &b).unwrap();
            assert!((la - lb).abs() < 1e-15);
        }
    }

    #[test]
    fn labels_validate_indices() {
        assert!(LabelVector::from_indices(&[4], &[0], 4, 4).is_err());
        assert!(LabelVector::from_indices(&[1, 1], &[0], 4, 4).is_err());
        let l = LabelVector::from_indices(&[3, 0], &[2], 4, 3).unwrap();
        assert_eq!(l.tx_hot, vec![true, false, false, true]);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let cfg = TrainConfig::default();
        for g in [3.0, -0.02, 250.0] {
            let mut p = vec![1.0];
            let mut st = AdamState::new(1);
            adam_step(&mut p, &[g], &mut st, &cfg).unwrap();
            let expect = 1.0 - cfg.learning_rate * g / (g.abs() + cfg.adam_eps);
            assert!((p[0] - expect).abs() < 1e-15);
            assert!((p[0] - (1.0 - 0.005 * g.signum())).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = vec![0.3, -1.0];
        let mut st = AdamState::new(2);
        for _ in 0..5 {
            adam_step(&mut p, &[0.0, 0.0], &mut st, &TrainConfig::default()).unwrap();
        }
        assert_eq!(p, vec![0.3, -1.0]);
        assert_eq!(st.step, 5);
        assert!(adam_step(&mut p, &[0.0], &mut st, &TrainConfig::default()).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(sample_accuracy(&[1, 5, 9], &[1, 5, 9]).unwrap(), 1.0);
        assert_eq!(sample_accuracy(&[1, 5, 7], &[1, 5, 9]).unwrap(), 2.0 / 3.0);
        assert_eq!(sample_accuracy(&[0, 2], &[1, 3]).unwrap(), 0.0);
        assert!(sample_accuracy(&[1], &[]).is_err());
        assert_eq!(dataset_accuracy(&[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(dataset_accuracy(&[1.0; 7]).unwrap(), 1.0);
        assert!(dataset_accuracy(&[]).is_err());
    }

    #[test]
    fn precision_recall_reduce_to_accuracy() {
        let mut rng = stream_rng(2, 0, 0);
        for _ in 0..1000 {
            let k = rng.random_range(1..5);
            let mut a: Vec<usize> = (0..16).collect();
            let mut b = a.clone();
            a.shuffle(&mut rng);
            b.shuffle(&mut rng);
            let (pred, truth) = (&a[..k], &b[..k]);
            let acc = sample_accuracy(pred, truth).unwrap();
            assert_eq!(precision(pred, truth).unwrap(), acc);
            assert_eq!(recall(pred, truth).unwrap(), acc);
        }
    }

    fn tiny_shape() -> NetShape {
        NetShape { n_t: 4, n_r: 4, m_t: 2, m_r: 2, n_tx_beams: 4, n_rx_beams: 4, hidden1: 16, hidden2: 16 }
    }

    fn batch(n: usize, seed: u64) -> (Vec<ComplexVector<f64>>, Vec<LabelVector>) {
        let mut rng = stream_rng(seed, 0, 0);
        // scaled to unit max-abs like real inputs
        let hs: Vec<ComplexVector<f64>> = (0..n).map(|_| random_channel_vector(16, &mut rng)).collect();
        let peak = hs.iter().flat_map(|h| h.iter()).map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max);
        let hs = hs.iter().map(|h| h.scale(num_complex::Complex::new(1.0 / peak, 0.0))).collect();
        let labels = (0..n)
            .map(|_| {
                let t = rng.random_range(0..3);
                let r = rng.random_range(1..4);
                LabelVector::from_indices(&[t, t + 1], &[r - 1, r], 4, 4).unwrap()
            })
            .collect();
        (hs, labels)
    }

    #[test]
    fn loss_gradient_matches_central_differences() {
        let p = AutoPrecoderParams::<f64>::init(tiny_shape(), 3).unwrap();
        let (hs, ls) = batch(64, 4);
        let checks = gradient_check(&p, &hs, &ls, 10, 16, 1e-4, 5).unwrap();
        assert_eq!(checks.len(), 14);
        for c in checks {
            assert!(c.max_rel_err < 1e-4, "{c:?}");
        }
    }

    #[test]
    fn head_bias_gradient_at_uninformative_output() {
        let p = AutoPrecoderParams::<f64>::zeros(tiny_shape());
        let (hs, ls) = batch(4, 6);
        let hr: Vec<&ComplexVector<f64>> = hs.iter().collect();
        let lr: Vec<&LabelVector> = ls.iter().collect();
        let (_, grad, _) = backward(&p, &hr, &lr).unwrap();
        for c in 0..4 {
            let mean_y = ls.iter().filter(|l| l.tx_hot[c]).count() as f64 / 4.0;
            let expect = 0.5 * (0.5 - mean_y) / 4.0;
            assert!((grad.head_tx.bias[c] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_halves_for_frozen_statistics() {
        // With batch statistics the samples interact, so compare in inference mode.
        let p = AutoPrecoderParams::<f64>::init(tiny_shape(), 7).unwrap();
        let (hs, ls) = batch(4, 8);
        let grad_of = |idx: &[usize]| {
            let hr: Vec<&ComplexVector<f64>> = idx.iter().map(|&i| &hs[i]).collect();
            let lr: Vec<&LabelVector> = idx.iter().map(|&i| &ls[i]).collect();
            let fwd = p.forward_batch(&hr, Mode::Inference).unwrap();
            let (_, gt, gr) = loss_and_logit_grads(&fwd, &lr);
            p.backward_batch(&hr, &fwd, &gt, &gr).unwrap().flatten_trainable()
        };
        let full = grad_of(&[0, 1, 2, 3]);
        let a = grad_of(&[0, 1]);
        let b = grad_of(&[2, 3]);
        for i in 0..full.len() {
            assert!((full[i] - 0.5 * (a[i] + b[i])).abs() < 1e-12);
        }
    }

    fn toy_examples(n: usize, seed: u64) -> Vec<Example<f64>> {
        let mut rng = stream_rng(seed, 0, 0);
        (0..n)
            .map(|_| {
                let input = random_channel_vector(16, &mut rng);
                let t = rng.random_range(0..3);
                let r = rng.random_range(0..3);
                Example { input, tx: vec![t, t + 1], rx: vec![r, r + 1] }
            })
            .collect()
    }

    #[test]
    fn memorizes_a_small_set() {
        let ex = toy_examples(64, 9);
        let cfg = TrainConfig { batch_size: 16, epochs: 150, seed: 1, ..Default::default() };
        let init = AutoPrecoderParams::<f64>::init(tiny_shape(), 10).unwrap();
        let out = train(&ex, init, &cfg, |_| {}).unwrap();
        assert!(out.history.last().unwrap().train_loss < 0.5 * out.history[0].train_loss);
        let (train_idx, _) = validation_split(64, cfg.val_fraction, cfg.seed).unwrap();
        let seen: Vec<&Example<f64>> = train_idx.iter().map(|&i| &ex[i]).collect();
        let ev = evaluate(&out.final_params, &seen).unwrap();
        assert!(ev.tx_acc > 0.9 && ev.rx_acc > 0.9, "{} {}", ev.tx_acc, ev.rx_acc);
    }

    #[test]
    fn training_is_deterministic() {
        let ex = toy_examples(40, 11);
        let cfg = TrainConfig { batch_size: 8, epochs: 3, seed: 2, ..Default::default() };
        let run = || train(&ex, AutoPrecoderParams::<f64>::init(tiny_shape(), 12).unwrap(), &cfg, |_| {}).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
        assert_eq!(history_csv(&a.history).lines().count(), 4);
    }

    #[test]
    fn frozen_encoder_stays_put() {
        let ex = toy_examples(40, 13);
        let cfg = TrainConfig { batch_size: 8, epochs: 2, freeze_encoder: true, ..Default::default() };
        let init = AutoPrecoderParams::<f64>::init(tiny_shape(), 14).unwrap();
        let out = train(&ex, init.clone(), &cfg, |_| {}).unwrap();
        assert_eq!(out.params.enc_rx, init.enc_rx);
        assert_eq!(out.params.enc_tx, init.enc_tx);
    }

    #[test]
    fn best_checkpoint_never_worse_than_initial() {
        let ex = toy_examples(60, 15);
        let cfg = TrainConfig { batch_size: 8, epochs: 5, learning_rate: 0.05, ..Default::default() };
        let out = train(&ex, AutoPrecoderParams::<f64>::init(tiny_shape(), 16).unwrap(), &cfg, |_| {}).unwrap();
        let (_, val) = validation_split(60, cfg.val_fraction, cfg.seed).unwrap();
        let val: Vec<&Example<f64>> = val.iter().map(|&i| &ex[i]).collect();
        assert!(evaluate(&out.params, &val).unwrap().loss <= out.initial_val_loss);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 1, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { adam_beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { val_fraction: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let (a, b) = validation_split(100, 0.1, 3).unwrap();
        assert_eq!((a.len(), b.len()), (90, 10));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(validation_split(100, 0.1, 3).unwrap(), (a, b));
        assert!(validation_split(3, 0.1, 0).is_err());
    }
}
