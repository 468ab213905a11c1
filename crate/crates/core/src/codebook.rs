//! Quantized RF beam codebooks.

use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::array_response_ula;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookKind {
    Dft,
    Steering,
}

impl CodebookKind {
    pub fn as_byte(self) -> u8 {
        match self {
            CodebookKind::Dft => 0,
            CodebookKind::Steering => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(CodebookKind::Dft),
            1 => Some(CodebookKind::Steering),
            _ => None,
        }
    }
}

impl fmt::Display for CodebookKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodebookKind::Dft => "dft",
            CodebookKind::Steering => "steering",
        })
    }
}

/// Ordered set of constant-modulus, unit-norm beams. Label class `i` is
/// beam `i`.
#[derive(Clone, Debug)]
pub struct Codebook<T> {
    n_antennas: usize,
    kind: CodebookKind,
    /// Beams as the columns of an `n_antennas x len` matrix.
    beams: ComplexMatrix<T>,
}

impl<T: Real> Codebook<T> {
    /// Orthogonal DFT codebook; beam `m` has entries `exp(-j 2 pi k m / N) / sqrt(N)`.
    pub fn dft(n_antennas: usize, n_beams: usize) -> Result<Self> {
        if n_antennas == 0 {
            return Err(Error::InvalidArgument("codebook needs at least one antenna".into()));
        }
        if n_beams != n_antennas {
            return Err(Error::InvalidArgument(format!(
                "DFT codebook must be square, got {n_beams} beams for {n_antennas} antennas"
            )));
        }
        let n = T::lit(n_antennas as f64);
        let norm = T::one() / n.sqrt();
        let beams = ComplexMatrix::from_fn(n_antennas, n_beams, |k, m| {
            // reduce k*m mod N before scaling to keep the phase argument small
            let km = (k * m) % n_antennas;
            Complex::from_polar(norm, -T::TAU() * T::lit(km as f64) / n)
        });
        Ok(Self { n_antennas, kind: CodebookKind::Dft, beams })
    }

    /// Steering beams at `sin(azimuth)` uniformly spaced over `[-1, 1)`.
    pub fn steering(n_antennas: usize, n_beams: usize, spacing: T) -> Result<Self> {
        if n_antennas == 0 || n_beams < n_antennas {
            return Err(Error::InvalidArgument(format!(
                "steering codebook needs n_beams >= n_antennas >= 1, got {n_beams} and {n_antennas}"
            )));
        }
        let cols: Vec<ComplexVector<T>> = (0..n_beams)
            .map(|m| {
                let s = -T::one() + T::lit(2.0 * m as f64 / n_beams as f64);
                array_response_ula(n_antennas, s.asin(), spacing)
            })
            .collect();
        Ok(Self {
            n_antennas,
            kind: CodebookKind::Steering,
            beams: ComplexMatrix::from_columns(&cols)?,
        })
    }

    pub fn build(kind: CodebookKind, n_antennas: usize, n_beams: usize) -> Result<Self> {
        match kind {
            CodebookKind::Dft => Self::dft(n_antennas, n_beams),
            CodebookKind::Steering => Self::steering(n_antennas, n_beams, T::lit(0.5)),
        }
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn kind(&self) -> CodebookKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.beams.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn beam(&self, i: usize) -> ComplexVector<T> {
        self.beams.column(i)
    }

    /// All beams as columns.
    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.beams
    }

    /// Same beams in a different order; `order[i]` is the old index of new beam `i`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            n_antennas: self.n_antennas,
            kind: self.kind,
            beams: self.beams.select_columns(order),
        }
    }

    pub fn check_indices(&self, indices: &[usize]) -> Result<()> {
        for (pos, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::InvalidIndex(format!(
                    "index {i} out of range for codebook of {}",
                    self.len()
                )));
            }
            if indices[..pos].contains(&i) {
                return Err(Error::InvalidIndex(format!("duplicate index {i}")));
            }
        }
        Ok(())
    }

    /// Beam with the largest gain `|b^H a(azimuth)|` towards a half-wavelength
    /// ULA direction; ties go to the lower index.
    pub fn nearest_beam(&self, azimuth: T) -> usize {
        let a = crate::channel::ula(self.n_antennas, azimuth);
        let mut best = (T::neg_infinity(), 0);
        for i in 0..self.len() {
            let g = self.beam(i).dot(&a).norm();
            if g > best.0 {
                best = (g, i);
            }
        }
        best.1
    }

    /// `N x |indices|` matrix whose columns are the selected beams, in the
    /// order given.
    pub fn assemble_rf_matrix(&self, indices: &[usize]) -> Result<ComplexMatrix<T>> {
        if indices.is_empty() {
            return Err(Error::InvalidIndex("empty index set".into()));
        }
        self.check_indices(indices)?;
        Ok(self.beams.select_columns(indices))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::svd_small;

    #[test]
    fn nearest_beam_recovers_dft_directions() {
        let cb = Codebook::<f64>::dft(16, 16).unwrap();
        for i in 0..16 {
            let b = cb.beam(i);
            // beam i steers to the azimuth whose ULA response it matches exactly
            let s = b[1] / b[0];
            let sin = s.arg() / std::f64::consts::PI;
            if sin.abs() < 1.0 {
                assert_eq!(cb.nearest_beam(sin.asin()), i);
            }
        }
    }

    fn gram_error(m: &ComplexMatrix<f64>) -> f64 {
        let g = m.hermitian().matmul(m).unwrap();
        g.sub(&ComplexMatrix::identity(g.rows())).unwrap().max_abs()
    }

    #[test]
    fn two_point_dft() {
        let cb = Codebook::<f64>::dft(2, 2).unwrap();
        let r = 1.0 / 2f64.sqrt();
        let b0 = cb.beam(0);
        let b1 = cb.beam(1);
        assert!((b0[0] - Complex::new(r, 0.0)).norm() < 1e-15);
        assert!((b0[1] - Complex::new(r, 0.0)).norm() < 1e-15);
        assert!((b1[0] - Complex::new(r, 0.0)).norm() < 1e-15);
        assert!((b1[1] - Complex::new(-r, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn dft_gram_is_identity() {
        let cb = Codebook::<f64>::dft(8, 8).unwrap();
        assert!(gram_error(cb.matrix()) < 1e-10);
    }

    #[test]
    fn constant_modulus_for_every_kind() {
        for cb in [
            Codebook::<f64>::dft(16, 16).unwrap(),
            Codebook::<f64>::steering(16, 16, 0.5).unwrap(),
            Codebook::<f64>::steering(8, 32, 0.5).unwrap(),
        ] {
            let target = 1.0 / (cb.n_antennas() as f64).sqrt();
            assert!(cb.matrix().as_slice().iter().all(|z| (z.norm() - target).abs() < 1e-14));
        }
    }

    #[test]
    fn dft_requires_square() {
        assert!(Codebook::<f64>::dft(8, 16).is_err());
    }

    #[test]
    fn steering_rejects_undersampling() {
        assert!(Codebook::<f64>::steering(8, 4, 0.5).is_err());
    }

    #[test]
    fn critically_sampled_steering_spans_dft() {
        let dft = Codebook::<f64>::dft(8, 8).unwrap();
        let st = Codebook::<f64>::steering(8, 8, 0.5).unwrap();
        // Projection of every steering beam onto the DFT span is lossless,
        // and each steering beam coincides with one DFT beam up to phase.
        let proj = dft.matrix().hermitian().matmul(st.matrix()).unwrap();
        for j in 0..8 {
            let energy: f64 = (0..8).map(|i| proj[(i, j)].norm_sqr()).sum();
            assert!((energy - 1.0).abs() < 1e-8);
            let best = (0..8).map(|i| proj[(i, j)].norm()).fold(0.0, f64::max);
            assert!((best - 1.0).abs() < 1e-8);
        }
        let s = svd_small(&proj).unwrap().s;
        assert!(s.iter().all(|x| (x - 1.0).abs() < 1e-8));
    }

    #[test]
    fn steering_broadside_beam_is_flat() {
        let st = Codebook::<f64>::steering(6, 6, 0.5).unwrap();
        // sin grid is -1, -2/3, -1/3, 0, 1/3, 2/3
        let b = st.beam(3);
        let r = 1.0 / 6f64.sqrt();
        assert!(b.iter().all(|z| (z - Complex::new(r, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn assemble_selects_in_order() {
        let cb = Codebook::<f64>::dft(8, 8).unwrap();
        let one = cb.assemble_rf_matrix(&[0]).unwrap();
        assert_eq!(one.column(0), cb.beam(0));
        let f = cb.assemble_rf_matrix(&[5, 1, 3]).unwrap();
        assert_eq!(f.column(0), cb.beam(5));
        assert_eq!(f.column(2), cb.beam(3));
        assert!(gram_error(&f) < 1e-10);
    }

    #[test]
    fn assemble_rejects_bad_indices() {
        let cb = Codebook::<f64>::dft(4, 4).unwrap();
        assert!(matches!(cb.assemble_rf_matrix(&[4]), Err(Error::InvalidIndex(_))));
        assert!(matches!(cb.assemble_rf_matrix(&[1, 1]), Err(Error::InvalidIndex(_))));
    }
}
