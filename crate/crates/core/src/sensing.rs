//! Compressive channel measurements with analog sensing beams.
//!
//! The receiver observes `Y = sqrt(P_T) Q^H H P + Q^H V`, or equivalently in
//! vectorized form `y = sqrt(P_T) (P^T kron Q^H) vec(H) + vec(Q^H V)`.

use rand::Rng;

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector};
use crate::rng::{complex_gaussian, random_phase};
use crate::scalar::Real;

/// Transmit (`P`, `N_t x M_t`) and receive (`Q`, `N_r x M_r`) sensing beams.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementMatrices<T> {
    pub p: ComplexMatrix<T>,
    pub q: ComplexMatrix<T>,
}

impl<T: Real> MeasurementMatrices<T> {
    pub fn n_t(&self) -> usize {
        self.p.rows()
    }

    pub fn n_r(&self) -> usize {
        self.q.rows()
    }

    pub fn m_t(&self) -> usize {
        self.p.cols()
    }

    pub fn m_r(&self) -> usize {
        self.q.cols()
    }

    /// Pilot transmissions needed for one full measurement.
    pub fn pilots(&self) -> usize {
        self.m_t() * self.m_r()
    }

    /// `P^T kron Q^H`, the linear operator acting on `vec(H)`.
    pub fn operator(&self) -> ComplexMatrix<T> {
        self.p.transpose().kronecker(&self.q.hermitian())
    }

    /// Keeps only the phase of every entry, at magnitude `1/sqrt(N)`.
    /// Zero entries map to phase zero.
    pub fn project_constant_modulus(&self) -> Self {
        let proj = |m: &ComplexMatrix<T>| {
            let r = T::one() / T::lit(m.rows() as f64).sqrt();
            m.map(|z| {
                let a = z.norm();
                if a > T::zero() {
                    z * (r / a)
                } else {
                    num_complex::Complex::new(r, T::zero())
                }
            })
        };
        Self { p: proj(&self.p), q: proj(&self.q) }
    }

    fn check_channel(&self, n_r: usize, n_t: usize) -> Result<()> {
        if n_r != self.n_r() || n_t != self.n_t() {
            return Err(Error::dim(
                "measurement",
                format!(
                    "channel {n_r}x{n_t} vs sensing beams P {:?}, Q {:?}",
                    self.p.shape(),
                    self.q.shape()
                ),
            ));
        }
        Ok(())
    }

    fn check_noise(&self, v: &ComplexMatrix<T>) -> Result<()> {
        if v.shape() != (self.n_r(), self.m_t()) {
            return Err(Error::dim(
                "measurement noise",
                format!("{:?}, expected {}x{}", v.shape(), self.n_r(), self.m_t()),
            ));
        }
        Ok(())
    }
}

/// Constant-modulus random beams with entries `exp(j theta) / sqrt(N)`.
/// `P` is drawn before `Q`, each row-major.
pub fn random_measurements<T: Real>(
    n_t: usize,
    n_r: usize,
    m_t: usize,
    m_r: usize,
    rng: &mut impl Rng,
) -> MeasurementMatrices<T> {
    let st = T::one() / T::lit(n_t as f64).sqrt();
    let sr = T::one() / T::lit(n_r as f64).sqrt();
    let p = ComplexMatrix::from_fn(n_t, m_t, |_, _| random_phase::<T>(rng) * st);
    let q = ComplexMatrix::from_fn(n_r, m_r, |_, _| random_phase::<T>(rng) * sr);
    MeasurementMatrices { p, q }
}

/// `N_r x M_t` receiver noise, one column per transmit sensing beam, with
/// i.i.d. `CN(0, noise_power)` entries drawn row-major.
pub fn draw_noise<T: Real>(n_r: usize, m_t: usize, noise_power: T, rng: &mut impl Rng) -> ComplexMatrix<T> {
    ComplexMatrix::from_fn(n_r, m_t, |_, _| complex_gaussian(rng, noise_power))
}

/// `Y = sqrt(p_t) Q^H H P + Q^H V` for a given noise matrix `V`.
pub fn measure_matrix_with_noise<T: Real>(
    h: &ComplexMatrix<T>,
    mm: &MeasurementMatrices<T>,
    p_t: T,
    v: &ComplexMatrix<T>,
) -> Result<ComplexMatrix<T>> {
    mm.check_channel(h.rows(), h.cols())?;
    mm.check_noise(v)?;
    let qh = mm.q.hermitian();
    let signal = qh.matmul(h)?.matmul(&mm.p)?.scale_real(p_t.sqrt());
    signal.add(&qh.matmul(v)?)
}

/// `y = sqrt(p_t) (P^T kron Q^H) h + (I_{M_t} kron Q^H) vec(V)` for a given noise matrix `V`.
pub fn measure_vector_with_noise<T: Real>(
    h: &ComplexVector<T>,
    mm: &MeasurementMatrices<T>,
    p_t: T,
    v: &ComplexMatrix<T>,
) -> Result<ComplexVector<T>> {
    if h.len() != mm.n_t() * mm.n_r() {
        return Err(Error::dim(
            "measure_vector_form",
            format!("channel vector of {} vs {}x{} arrays", h.len(), mm.n_r(), mm.n_t()),
        ));
    }
    mm.check_noise(v)?;
    let signal = mm.operator().mul_vec(h)?.scale(p_t.sqrt().into());
    let noise_op = ComplexMatrix::identity(mm.m_t()).kronecker(&mm.q.hermitian());
    let noise = noise_op.mul_vec(&v.vec())?;
    Ok(ComplexVector::new(
        signal.iter().zip(noise.iter()).map(|(a, b)| a + b).collect(),
    ))
}

/// Matrix form of the measurement with fresh noise drawn from `rng`.
pub fn measure_matrix_form<T: Real>(
    h: &ComplexMatrix<T>,
    mm: &MeasurementMatrices<T>,
    p_t: T,
    rng: &mut impl Rng,
    noise_power: T,
) -> Result<ComplexMatrix<T>> {
    let v = draw_noise(mm.n_r(), mm.m_t(), noise_power, rng);
    measure_matrix_with_noise(h, mm, p_t, &v)
}

/// Vector form of the measurement. Consumes the generator exactly like
/// [`measure_matrix_form`], so equal seeds give equal noise.
pub fn measure_vector_form<T: Real>(
    h: &ComplexVector<T>,
    mm: &MeasurementMatrices<T>,
    p_t: T,
    rng: &mut impl Rng,
    noise_power: T,
) -> Result<ComplexVector<T>> {
    let v = draw_noise(mm.n_r(), mm.m_t(), noise_power, rng);
    measure_vector_with_noise(h, mm, p_t, &v)
}

/// Beam-space power of a set of sensing kernels: entry `i` is
/// `sum_m |b_i^H k_m|^2` over the columns `k_m` of `kernels`.
pub fn beam_space_profile<T: Real>(codebook: &Codebook<T>, kernels: &ComplexMatrix<T>) -> Result<Vec<T>> {
    if kernels.rows() != codebook.n_antennas() {
        return Err(Error::dim(
            "beam_space_profile",
            format!("kernels have {} rows for a {}-antenna codebook", kernels.rows(), codebook.n_antennas()),
        ));
    }
    let proj = codebook.matrix().hermitian().matmul(kernels)?;
    Ok((0..proj.rows()).map(|i| proj.row(i).iter().map(|z| z.norm_sqr()).sum()).collect())
}

/// Largest normalized inner product between distinct columns.
pub fn coherence<T: Real>(m: &ComplexMatrix<T>) -> Result<T> {
    if m.cols() < 2 {
        return Err(Error::InvalidArgument("coherence needs at least two columns".into()));
    }
    let cols: Vec<ComplexVector<T>> = (0..m.cols()).map(|j| m.column(j)).collect();
    let norms: Vec<T> = cols.iter().map(|c| c.norm()).collect();
    let mut mu = T::zero();
    for i in 0..cols.len() {
        for j in (i + 1)..cols.len() {
            if norms[i] > T::zero() && norms[j] > T::zero() {
                mu = mu.max(cols[i].dot(&cols[j]).norm() / (norms[i] * norms[j]));
            }
        }
    }
    Ok(mu)
}
