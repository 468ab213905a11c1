//! Dataset generation, `APDS1` persistence and splits.
//!
//! `APDS1` layout, little-endian: magic; `u32` sizes `n_t, n_r, n_rf_tx,
//! n_rf_rx, n_tx_beams, n_rx_beams, num_paths, n_samples`; `f64` norm
//! factor; codebook kind byte. Each sample then stores the normalized noisy
//! channel and the clean channel in physical units, both `n_r x n_t` as
//! interleaved `f64 (re, im)` in column-major order, followed by the transmit
//! and receive label indices as `u16`. A CRC32 of everything before it closes
//! the file.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::channel::{add_channel_noise, build_channel, sample_environment, EnvironmentModel};
use crate::codebook::{Codebook, CodebookKind};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::oracle::{greedy_label_search, LinkBudget};
use crate::rng::{domain, stream_rng};
use crate::scalar::Real;
use crate::trainer::Example;

pub const DATASET_MAGIC: &[u8; 5] = b"APDS1";
const FORMAT: &str = "APDS1";
/// Channel redraws allowed per sample before generation gives up.
pub const MAX_RESAMPLES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDims {
    pub n_t: usize,
    pub n_r: usize,
    pub n_rf_tx: usize,
    pub n_rf_rx: usize,
    pub n_tx_beams: usize,
    pub n_rx_beams: usize,
    pub num_paths: usize,
}

impl DatasetDims {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("n_t", self.n_t),
            ("n_r", self.n_r),
            ("n_rf_tx", self.n_rf_tx),
            ("n_rf_rx", self.n_rf_rx),
            ("n_tx_beams", self.n_tx_beams),
            ("n_rx_beams", self.n_rx_beams),
            ("num_paths", self.num_paths),
        ];
        for (name, v) in named {
            if v == 0 {
                return Err(Error::config(format!("dims.{name}"), "must be positive"));
            }
            if v > u16::MAX as usize {
                return Err(Error::config(format!("dims.{name}"), "too large"));
            }
        }
        if self.n_rf_tx > self.n_tx_beams {
            return Err(Error::config("dims.n_rf_tx", "exceeds the transmit codebook size"));
        }
        if self.n_rf_rx > self.n_rx_beams {
            return Err(Error::config("dims.n_rf_rx", "exceeds the receive codebook size"));
        }
        Ok(())
    }

    pub fn codebooks<T: Real>(&self, kind: CodebookKind) -> Result<(Codebook<T>, Codebook<T>)> {
        Ok((
            Codebook::build(kind, self.n_t, self.n_tx_beams)?,
            Codebook::build(kind, self.n_r, self.n_rx_beams)?,
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSample {
    /// Noisy channel divided by the dataset norm factor; what the network sees.
    pub h_noisy: ComplexMatrix<f64>,
    /// Noise-free channel in physical units.
    pub h_true: ComplexMatrix<f64>,
    pub tx: Vec<usize>,
    pub rx: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dims: DatasetDims,
    pub codebook: CodebookKind,
    /// Global max-abs of the noisy channels before normalization.
    pub norm_factor: f64,
    pub samples: Vec<ChannelSample>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateSpec {
    pub env: EnvironmentModel,
    pub dims: DatasetDims,
    pub codebook: CodebookKind,
    /// Link budget the oracle labels are computed for.
    pub link: LinkBudget<f64>,
    /// Variance of the i.i.d. noise added to every channel entry.
    pub channel_noise_power: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Label the noisy channel instead of the clean one.
    pub labels_on_noisy: bool,
}

fn generate_sample(spec: &GenerateSpec, cb_tx: &Codebook<f64>, cb_rx: &Codebook<f64>, i: usize) -> Result<ChannelSample> {
    let d = &spec.dims;
    let mut rng = stream_rng(spec.seed, domain::CHANNEL, i as u64);
    let mut last = None;
    for _ in 0..MAX_RESAMPLES {
        let paths = sample_environment::<f64>(&spec.env, &mut rng);
        let h_true = build_channel(&paths, d.n_t, d.n_r)?;
        let h_noisy = add_channel_noise(&h_true, spec.channel_noise_power, &mut rng);
        let target = if spec.labels_on_noisy { &h_noisy } else { &h_true };
        match greedy_label_search(target, cb_tx, cb_rx, d.n_rf_tx, d.n_rf_rx, &spec.link) {
            Ok(sol) => return Ok(ChannelSample { h_noisy, h_true, tx: sol.tx_indices, rx: sol.rx_indices }),
            Err(e @ (Error::DegenerateChannel { .. } | Error::Singular(_))) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Draws, labels and normalizes `n_samples` channels. Sample `i` uses its own
/// random stream, so the result does not depend on thread count.
pub fn generate_dataset(spec: &GenerateSpec) -> Result<Dataset> {
    if spec.n_samples == 0 {
        return Err(Error::config("dataset.n_samples", "must be at least 1"));
    }
    spec.env.validate()?;
    spec.dims.validate()?;
    if spec.dims.num_paths != spec.env.num_paths {
        return Err(Error::config("dims.num_paths", "disagrees with the environment path count"));
    }
    if !(spec.channel_noise_power >= 0.0) || !spec.channel_noise_power.is_finite() {
        return Err(Error::config("channel_noise_power", "must be finite and non-negative"));
    }
    let (cb_tx, cb_rx) = spec.dims.codebooks::<f64>(spec.codebook)?;
    let samples = (0..spec.n_samples)
        .into_par_iter()
        .map(|i| generate_sample(spec, &cb_tx, &cb_rx, i))
        .collect::<Result<Vec<_>>>()?;
    let mut ds = Dataset { dims: spec.dims, codebook: spec.codebook, norm_factor: 1.0, samples };
    ds.normalize()?;
    Ok(ds)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_abs_noisy(&self) -> f64 {
        self.samples.iter().map(|s| s.h_noisy.max_abs()).fold(0.0, f64::max)
    }

    /// Rescales the noisy channels to unit global max-abs and folds the
    /// factor into `norm_factor`. A dataset already at unit scale (to a few
    /// ulps) is left untouched.
    pub fn normalize(&mut self) -> Result<()> {
        let peak = self.max_abs_noisy();
        if !(peak > 0.0) || !peak.is_finite() {
            return Err(Error::InvalidArgument(format!("cannot normalize channels with peak magnitude {peak}")));
        }
        if (peak - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(());
        }
        let inv = 1.0 / peak;
        for s in &mut self.samples {
            s.h_noisy = s.h_noisy.scale_real(inv);
        }
        self.norm_factor *= peak;
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            dims: self.dims,
            codebook: self.codebook,
            norm_factor: self.norm_factor,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Network inputs (column-stacked noisy channels) with their labels.
    pub fn examples<T: Real>(&self) -> Vec<Example<T>> {
        self.samples
            .iter()
            .map(|s| Example { input: s.h_noisy.vec().cast(), tx: s.tx.clone(), rx: s.rx.clone() })
            .collect()
    }

    pub fn label_histograms(&self) -> (Vec<usize>, Vec<usize>) {
        let mut tx = vec![0; self.dims.n_tx_beams];
        let mut rx = vec![0; self.dims.n_rx_beams];
        for s in &self.samples {
            s.tx.iter().for_each(|&i| tx[i] += 1);
            s.rx.iter().for_each(|&i| rx[i] += 1);
        }
        (tx, rx)
    }

    /// Human-readable summary: sizes, sample count and label histograms.
    pub fn describe(&self) -> serde_json::Value {
        let (tx, rx) = self.label_histograms();
        json!({
            "format": FORMAT,
            "dims": self.dims,
            "codebook": self.codebook,
            "n_samples": self.len(),
            "norm_factor": self.norm_factor,
            "tx_label_histogram": tx,
            "rx_label_histogram": rx,
        })
    }

    pub fn check_labels(&self) -> Result<()> {
        let d = &self.dims;
        for (i, s) in self.samples.iter().enumerate() {
            for (side, idx, k, n) in [("tx", &s.tx, d.n_rf_tx, d.n_tx_beams), ("rx", &s.rx, d.n_rf_rx, d.n_rx_beams)] {
                let mut seen = vec![false; n];
                if idx.len() != k {
                    return Err(Error::InvalidIndex(format!("sample {i}: {} {side} labels, expected {k}", idx.len())));
                }
                for &j in idx {
                    if j >= n || seen[j] {
                        return Err(Error::InvalidIndex(format!("sample {i}: {side} label {j} invalid or repeated")));
                    }
                    seen[j] = true;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = &self.dims;
        let mut out = DATASET_MAGIC.to_vec();
        for v in [d.n_t, d.n_r, d.n_rf_tx, d.n_rf_rx, d.n_tx_beams, d.n_rx_beams, d.num_paths, self.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.norm_factor.to_le_bytes());
        out.push(self.codebook.as_byte());
        for s in &self.samples {
            for h in [&s.h_noisy, &s.h_true] {
                for z in h.vec().iter() {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }
            }
            for &i in s.tx.iter().chain(&s.rx) {
                out.extend_from_slice(&(i as u16).to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(5, "magic").ok() != Some(&DATASET_MAGIC[..]) {
            return Err(Error::format(FORMAT, "magic", "not an APDS1 dataset"));
        }
        const NAMES: [&str; 8] = ["n_t", "n_r", "n_rf_tx", "n_rf_rx", "n_tx_beams", "n_rx_beams", "num_paths", "n_samples"];
        let mut v = [0usize; 8];
        for (slot, name) in v.iter_mut().zip(NAMES) {
            *slot = r.u32(name)? as usize;
        }
        let dims = DatasetDims {
            n_t: v[0],
            n_r: v[1],
            n_rf_tx: v[2],
            n_rf_rx: v[3],
            n_tx_beams: v[4],
            n_rx_beams: v[5],
            num_paths: v[6],
        };
        dims.validate().map_err(|e| Error::format(FORMAT, "dims", e.to_string()))?;
        let n_samples = v[7];
        let norm_factor = r.f64("norm_factor")?;
        if !(norm_factor > 0.0) || !norm_factor.is_finite() {
            return Err(Error::format(FORMAT, "norm_factor", "must be finite and positive"));
        }
        let kind = r.take(1, "codebook_kind")?[0];
        let codebook = CodebookKind::from_byte(kind)
            .ok_or_else(|| Error::format(FORMAT, "codebook_kind", format!("unknown kind {kind}")))?;
        let per_sample = 2 * 16 * dims.n_t * dims.n_r + 2 * (dims.n_rf_tx + dims.n_rf_rx);
        let mut samples = Vec::with_capacity(n_samples.min(bytes.len() / per_sample));
        for i in 0..n_samples {
            let h_noisy = r.matrix(dims.n_r, dims.n_t, &format!("sample[{i}].h_noisy"))?;
            let h_true = r.matrix(dims.n_r, dims.n_t, &format!("sample[{i}].h_true"))?;
            let tx = r.labels(dims.n_rf_tx, &format!("sample[{i}].tx"))?;
            let rx = r.labels(dims.n_rf_rx, &format!("sample[{i}].rx"))?;
            samples.push(ChannelSample { h_noisy, h_true, tx, rx });
        }
        let body_end = r.at;
        let stored = r.u32("crc32")?;
        if r.at != bytes.len() {
            return Err(Error::format(FORMAT, "crc32", format!("{} unexpected trailing bytes", bytes.len() - r.at)));
        }
        if crc32fast::hash(&bytes[..body_end]) != stored {
            return Err(Error::format(FORMAT, "crc32", "checksum mismatch"));
        }
        let ds = Dataset { dims, codebook, norm_factor, samples };
        ds.check_labels().map_err(|e| Error::format(FORMAT, "labels", e.to_string()))?;
        Ok(ds)
    }

    /// Seeded disjoint split; both halves keep the full-dataset norm factor.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!("train fraction {train_fraction} outside (0, 1)")));
        }
        let n_train = (self.len() as f64 * train_fraction).round() as usize;
        if n_train == 0 || n_train >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "train fraction {train_fraction} leaves an empty side for {} samples",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut stream_rng(seed, domain::SPLIT, 0));
        Ok((self.subset(&idx[..n_train]), self.subset(&idx[n_train..])))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let b = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| Error::format(FORMAT, field, "file truncated"))?;
        self.at += n;
        Ok(b)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self, rows: usize, cols: usize, field: &str) -> Result<ComplexMatrix<f64>> {
        let raw = self.take(16 * rows * cols, field)?;
        let vals: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(FORMAT, field, "non-finite value"));
        }
        Ok(ComplexMatrix::from_fn(rows, cols, |i, j| {
            let k = 2 * (j * rows + i);
            num_complex::Complex::new(vals[k], vals[k + 1])
        }))
    }

    fn labels(&mut self, n: usize, field: &str) -> Result<Vec<usize>> {
        let raw = self.take(2 * n, field)?;
        Ok(raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as usize).collect())
    }
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, ds.to_bytes())?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_bytes(&fs::read(path)?)
}
