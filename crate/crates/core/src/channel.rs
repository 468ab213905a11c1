//! Narrowband geometric channel model with uniform linear arrays.
//!
//! `H = sum_l gain_l * a_r(aoa_l) * a_t(aod_l)^H`, where the array response
//! vectors are unit norm. Path angles come from a clustered environment so
//! that a learned sensing stage has spatial structure to exploit.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector};
use crate::rng::{complex_gaussian, standard_normal};
use crate::scalar::Real;

/// Thermal noise density at room temperature, dBm/Hz.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathParams<T> {
    pub gain: Complex<T>,
    /// Angle of departure, radians in `[-pi/2, pi/2)`.
    pub aod: T,
    /// Angle of arrival, radians in `[-pi/2, pi/2)`.
    pub aoa: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center_aod: f64,
    pub center_aoa: f64,
    /// Standard deviation of the per-path angle offset, radians.
    pub angular_spread: f64,
    /// Linear mean power of a path drawn from this cluster.
    pub mean_power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentModel {
    pub clusters: Vec<Cluster>,
    pub num_paths: usize,
    pub seed: u64,
}

impl EnvironmentModel {
    pub fn validate(&self) -> Result<()> {
        if self.num_paths == 0 {
            return Err(Error::InvalidArgument("environment needs at least one path".into()));
        }
        if self.clusters.is_empty() {
            return Err(Error::InvalidArgument("environment needs at least one cluster".into()));
        }
        for (i, c) in self.clusters.iter().enumerate() {
            if !(c.angular_spread > 0.0) {
                return Err(Error::InvalidArgument(format!("cluster {i}: angular spread must be positive")));
            }
            if !(c.mean_power > 0.0) || !c.mean_power.is_finite() {
                return Err(Error::InvalidArgument(format!("cluster {i}: mean power must be positive")));
            }
            for a in [c.center_aod, c.center_aoa] {
                if !(-FRAC_PI_2..FRAC_PI_2).contains(&a) {
                    return Err(Error::InvalidArgument(format!("cluster {i}: center outside broadside sector")));
                }
            }
        }
        Ok(())
    }
}

const FRAC_PI_2: f64 = std::f64::consts::FRAC_PI_2;

/// Entry `k` is `exp(j 2 pi spacing k sin(azimuth)) / sqrt(n)`.
pub fn array_response_ula<T: Real>(n_antennas: usize, azimuth: T, spacing_wavelengths: T) -> ComplexVector<T> {
    let norm = T::one() / T::lit(n_antennas as f64).sqrt();
    let step = T::TAU() * spacing_wavelengths * azimuth.sin();
    ComplexVector::new(
        (0..n_antennas)
            .map(|k| Complex::from_polar(norm, step * T::lit(k as f64)))
            .collect(),
    )
}

/// Half-wavelength ULA response, the array geometry used throughout.
pub fn ula<T: Real>(n_antennas: usize, azimuth: T) -> ComplexVector<T> {
    array_response_ula(n_antennas, azimuth, T::lit(0.5))
}

pub fn build_channel<T: Real>(paths: &[PathParams<T>], n_t: usize, n_r: usize) -> Result<ComplexMatrix<T>> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument("channel needs at least one path".into()));
    }
    let mut h = ComplexMatrix::zeros(n_r, n_t);
    for p in paths {
        let ar = ula(n_r, p.aoa);
        let at = ula(n_t, p.aod);
        for i in 0..n_r {
            let left = p.gain * ar[i];
            for j in 0..n_t {
                h[(i, j)] += left * at[j].conj();
            }
        }
    }
    Ok(h)
}

fn draw_angle<T: Real>(rng: &mut impl Rng, center: f64, spread: f64) -> T {
    // Truncate to the broadside sector by redrawing; fall back to clamping.
    for _ in 0..64 {
        let a = center + spread * standard_normal::<f64>(rng);
        if (-FRAC_PI_2..FRAC_PI_2).contains(&a) {
            return T::lit(a);
        }
    }
    T::lit(center.clamp(-FRAC_PI_2, FRAC_PI_2 - 1e-12))
}

/// Draws `num_paths` paths: cluster picked proportionally to its mean power,
/// angles jittered around the cluster centers, Rayleigh gains.
pub fn sample_environment<T: Real>(env: &EnvironmentModel, rng: &mut impl Rng) -> Vec<PathParams<T>> {
    let total: f64 = env.clusters.iter().map(|c| c.mean_power).sum();
    (0..env.num_paths)
        .map(|_| {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = env.clusters.len() - 1;
            for (i, c) in env.clusters.iter().enumerate() {
                if u < c.mean_power {
                    chosen = i;
                    break;
                }
                u -= c.mean_power;
            }
            let c = &env.clusters[chosen];
            let aod = draw_angle(rng, c.center_aod, c.angular_spread);
            let aoa = draw_angle(rng, c.center_aoa, c.angular_spread);
            let gain = complex_gaussian(rng, T::lit(c.mean_power));
            PathParams { gain, aod, aoa }
        })
        .collect()
}

/// `H + V` with `V` i.i.d. `CN(0, noise_power)`.
pub fn add_channel_noise<T: Real>(h: &ComplexMatrix<T>, noise_power: T, rng: &mut impl Rng) -> ComplexMatrix<T> {
    if noise_power.is_zero() {
        return h.clone();
    }
    ComplexMatrix::from_fn(h.rows(), h.cols(), |i, j| h[(i, j)] + complex_gaussian(rng, noise_power))
}

/// Receiver noise power in dBm for the given bandwidth and noise figure.
pub fn thermal_noise_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::svd_small;
    use crate::rng::stream_rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn env(spread: f64) -> EnvironmentModel {
        EnvironmentModel {
            clusters: vec![
                Cluster { center_aod: 0.3, center_aoa: -0.2, angular_spread: spread, mean_power: 1.0 },
                Cluster { center_aod: -0.6, center_aoa: 0.5, angular_spread: spread, mean_power: 2.0 },
            ],
            num_paths: 3,
            seed: 9,
        }
    }

    #[test]
    fn broadside_response_is_flat() {
        let a = array_response_ula::<f64>(2, 0.0, 0.5);
        let r = 1.0 / 2f64.sqrt();
        for z in a.iter() {
            assert!((z - Complex::new(r, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn endfire_response_alternates() {
        let a = array_response_ula::<f64>(4, FRAC_PI_2, 0.5);
        for (k, z) in a.iter().enumerate() {
            let expect = if k % 2 == 0 { 0.5 } else { -0.5 };
            assert!((z - Complex::new(expect, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn response_is_unit_norm_and_conjugate_symmetric() {
        let mut rng = stream_rng(1, 0, 0);
        for _ in 0..100 {
            let n = rng.random_range(1..40);
            let phi = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
            let a = ula::<f64>(n, phi);
            assert!((a.norm() - 1.0).abs() < 1e-12);
            let b = ula::<f64>(n, -phi);
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x.conj() - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_path_channel_is_unit_rank_one() {
        let p = PathParams { gain: Complex::new(1.0f64, 0.0), aod: 0.4, aoa: -0.1 };
        let h = build_channel(&[p], 8, 6).unwrap();
        assert!((h.frobenius_norm() - 1.0).abs() < 1e-12);
        let s = svd_small(&h).unwrap().s;
        assert!(s[1] < 1e-10);
    }

    #[test]
    fn coincident_paths_add_gains() {
        let p1 = PathParams { gain: Complex::new(1.0, 0.5), aod: 0.2, aoa: 0.7 };
        let p2 = PathParams { gain: Complex::new(-0.3, 0.1), ..p1 };
        let h = build_channel(&[p1, p2], 5, 4).unwrap();
        let sum = PathParams { gain: p1.gain + p2.gain, ..p1 };
        let expect = build_channel(&[sum], 5, 4).unwrap();
        assert!(h.sub(&expect).unwrap().max_abs() < 1e-14);
        assert!(svd_small(&h).unwrap().s[1] < 1e-10);
    }

    #[test]
    fn channel_rank_bounded_by_path_count() {
        let mut rng = stream_rng(2, 0, 0);
        for _ in 0..20 {
            let paths: Vec<PathParams<f64>> = sample_environment(&env(0.2), &mut rng);
            let h = build_channel(&paths, 16, 16).unwrap();
            let s = svd_small(&h).unwrap().s;
            assert!(s[3..].iter().all(|&x| x < 1e-10), "{s:?}");
        }
    }

    #[test]
    fn build_channel_rejects_no_paths() {
        assert!(build_channel::<f64>(&[], 4, 4).is_err());
    }

    #[test]
    fn degenerate_spread_pins_angles() {
        let mut e = env(1e-300);
        e.clusters.truncate(1);
        let mut rng = stream_rng(3, 0, 0);
        let paths: Vec<PathParams<f64>> = sample_environment(&e, &mut rng);
        assert!(paths.iter().all(|p| p.aod == 0.3 && p.aoa == -0.2));
    }

    #[test]
    fn empirical_spread_matches() {
        let spread = 3f64.to_radians();
        let e = env(spread);
        let mut rng = stream_rng(4, 0, 0);
        let mut offsets = [Vec::new(), Vec::new()];
        for _ in 0..10_000 {
            for p in sample_environment::<f64>(&e, &mut rng) {
                // clusters are far apart relative to the spread
                let k = if (p.aod - 0.3).abs() < (p.aod + 0.6).abs() { 0 } else { 1 };
                offsets[k].push(p.aod - e.clusters[k].center_aod);
            }
        }
        for o in &offsets {
            let n = o.len() as f64;
            let mean = o.iter().sum::<f64>() / n;
            let std = (o.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!((std / spread - 1.0).abs() < 0.1, "std {std} vs {spread}");
        }
        // cluster 1 has twice the power, so roughly twice the paths
        let ratio = offsets[1].len() as f64 / offsets[0].len() as f64;
        assert!((ratio - 2.0).abs() < 0.1);
    }

    #[test]
    fn sampling_is_deterministic() {
        let e = env(0.05);
        let a: Vec<PathParams<f64>> = sample_environment(&e, &mut stream_rng(5, 1, 7));
        let b: Vec<PathParams<f64>> = sample_environment(&e, &mut stream_rng(5, 1, 7));
        assert_eq!(a, b);
        for p in &a {
            assert!(p.aod >= -PI / 2.0 && p.aod < PI / 2.0);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let h = build_channel(&[PathParams { gain: Complex::new(0.7, 0.1), aod: 0.1, aoa: 0.2 }], 4, 3).unwrap();
        assert_eq!(add_channel_noise(&h, 0.0, &mut stream_rng(6, 0, 0)), h);
    }

    #[test]
    fn noise_energy_matches_variance() {
        let h = ComplexMatrix::<f64>::zeros(3, 4);
        let mut rng = stream_rng(7, 0, 0);
        let p = 0.25;
        let mean: f64 = (0..1000)
            .map(|_| add_channel_noise(&h, p, &mut rng).frobenius_norm_sqr())
            .sum::<f64>()
            / 1000.0;
        assert!((mean / (p * 12.0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn link_budget_noise_floor() {
        let n = thermal_noise_dbm(0.5e9, 5.0);
        assert!((n - (-82.0)).abs() < 0.02, "{n}");
    }

    #[test]
    fn environment_validation() {
        assert!(env(0.1).validate().is_ok());
        let mut e = env(0.1);
        e.num_paths = 0;
        assert!(e.validate().is_err());
        let mut e = env(0.1);
        e.clusters[0].angular_spread = 0.0;
        assert!(e.validate().is_err());
    }
}
