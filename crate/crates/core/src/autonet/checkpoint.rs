//! `APNV1` parameter files: magic, eight little-endian `u32` sizes
//! (`n_t, n_r, m_t, m_r, n_tx_beams, n_rx_beams, hidden1, hidden2`), then
//! every tensor in layout order as little-endian `f32`, complex values
//! interleaved `(re, im)`.

use std::fs;
use std::path::Path;

use super::{AutoPrecoderParams, NetShape};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"APNV1";
const FORMAT: &str = "APNV1";

impl<T: Real> AutoPrecoderParams<T> {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let s = &self.shape;
        let mut out = CHECKPOINT_MAGIC.to_vec();
        for d in [s.n_t, s.n_r, s.m_t, s.m_r, s.n_tx_beams, s.n_rx_beams, s.hidden1, s.hidden2] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.flatten_all() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 || &bytes[..5] != CHECKPOINT_MAGIC {
            return Err(Error::format(FORMAT, "magic", "not an APNV1 checkpoint"));
        }
        const NAMES: [&str; 8] = ["n_t", "n_r", "m_t", "m_r", "n_tx_beams", "n_rx_beams", "hidden1", "hidden2"];
        let mut dims = [0usize; 8];
        for (i, name) in NAMES.iter().enumerate() {
            let at = 5 + 4 * i;
            let b = bytes
                .get(at..at + 4)
                .ok_or_else(|| Error::format(FORMAT, *name, "file truncated"))?;
            dims[i] = u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
        }
        let shape = NetShape {
            n_t: dims[0],
            n_r: dims[1],
            m_t: dims[2],
            m_r: dims[3],
            n_tx_beams: dims[4],
            n_rx_beams: dims[5],
            hidden1: dims[6],
            hidden2: dims[7],
        };
        shape
            .validate()
            .map_err(|e| Error::format(FORMAT, "dims", e.to_string()))?;
        let mut params = Self::zeros(shape);
        let mut at = 5 + 4 * NAMES.len();
        let mut values = Vec::new();
        for t in params.layout() {
            let end = at + 4 * t.len;
            let b = bytes
                .get(at..end)
                .ok_or_else(|| Error::format(FORMAT, t.name, "file truncated"))?;
            for c in b.chunks_exact(4) {
                let v = f32::from_le_bytes(c.try_into().expect("4 bytes"));
                if !v.is_finite() {
                    return Err(Error::format(FORMAT, t.name, "non-finite value"));
                }
                values.push(T::lit(v as f64));
            }
            at = end;
        }
        if at != bytes.len() {
            return Err(Error::format(FORMAT, "trailer", format!("{} unexpected trailing bytes", bytes.len() - at)));
        }
        params.set_all(&values)?;
        Ok(params)
    }
}

pub fn save_checkpoint<T: Real>(params: &AutoPrecoderParams<T>, path: &Path) -> Result<()> {
    fs::write(path, params.to_checkpoint_bytes())?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<AutoPrecoderParams<T>> {
    AutoPrecoderParams::from_checkpoint_bytes(&fs::read(path)?)
}
