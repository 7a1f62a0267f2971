//! ULA steering vectors, LoS path loss, effective downlink channels and
//! SINR / sum-rate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Column-major complex matrix: `rows` antennas by `cols` vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_columns(columns: Vec<Vec<C64>>) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Shape("columns of unequal length".into()));
        }
        Ok(Self {
            rows,
            cols,
            data: columns.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, k: usize) -> &[C64] {
        &self.data[k * self.rows..(k + 1) * self.rows]
    }

    pub fn column_mut(&mut self, k: usize) -> &mut [C64] {
        &mut self.data[k * self.rows..(k + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[C64]> {
        self.data.chunks(self.rows.max(1)).take(self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }
}

/// `K` effective channel vectors `h_k` stacked as columns.
pub type ChannelMatrix = CMatrix;
/// `K` beamforming vectors `w_k` stacked as columns (`N_t × K`).
pub type BeamformingMatrix = CMatrix;

/// `x^H y`.
#[inline]
pub fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sq(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// ULA steering vector: entry `m` is `exp(-jπ m cos θ) / √N`.
pub fn steering(theta: f64, n_ant: usize) -> Vec<C64> {
    let scale = 1.0 / (n_ant as f64).sqrt();
    let phase = -std::f64::consts::PI * theta.cos();
    (0..n_ant)
        .map(|m| C64::from_polar(scale, phase * m as f64))
        .collect()
}

/// `∂a/∂θ`: entry `m` is `jπ m sin θ · exp(-jπ m cos θ) / √N`.
pub fn steering_dtheta(theta: f64, n_ant: usize) -> Vec<C64> {
    let s = std::f64::consts::PI * theta.sin();
    steering(theta, n_ant)
        .into_iter()
        .enumerate()
        .map(|(m, a)| a * C64::new(0.0, s * m as f64))
        .collect()
}

/// LoS amplitude `α = √(α₀ (d/d₀)^{-ζ})`.
pub fn path_loss_amp(dist: f64, config: &SimConfig) -> Result<f64> {
    if !(dist > 0.0) {
        return Err(Error::Geometry(format!("distance must be positive, got {dist}")));
    }
    Ok((config.pathloss_ref * (dist / config.ref_dist).powf(-config.pathloss_exp)).sqrt())
}

/// `h = √N_t · α(d) · a(θ)`.
pub fn effective_channel(theta: f64, dist: f64, config: &SimConfig) -> Result<Vec<C64>> {
    let amp = (config.n_tx as f64).sqrt() * path_loss_amp(dist, config)?;
    Ok(steering(theta, config.n_tx)
        .into_iter()
        .map(|a| a * amp)
        .collect())
}

/// SINR at vehicle `k`, interference from every other column of `w`.
pub fn sinr(h_k: &[C64], w: &BeamformingMatrix, k: usize, sigma2: f64) -> f64 {
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (j, col) in w.columns().enumerate() {
        let g = inner(h_k, col).norm_sqr();
        if j == k {
            signal = g;
        } else {
            interference += g;
        }
    }
    signal / (interference + sigma2)
}

/// Interference-free SNR `|h_k^H w_k|² / σ²`.
pub fn snr(h_k: &[C64], w_k: &[C64], sigma2: f64) -> f64 {
    inner(h_k, w_k).norm_sqr() / sigma2
}

/// `Σ_k log₂(1 + SINR_k)` in bits/s/Hz.
pub fn sum_rate(h: &ChannelMatrix, w: &BeamformingMatrix, sigma2: f64) -> f64 {
    h.columns()
        .enumerate()
        .map(|(k, hk)| (1.0 + sinr(hk, w, k, sigma2)).log2())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian, stream, Purpose};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn steering_examples() {
        for z in steering(FRAC_PI_2, 4) {
            assert!(close(z, C64::new(0.5, 0.0), 1e-15));
        }
        assert_eq!(steering(1.234, 1), vec![C64::new(1.0, 0.0)]);
        let v = steering(0.0, 2);
        let r = 1.0 / 2f64.sqrt();
        assert!(close(v[0], C64::new(r, 0.0), 1e-15));
        assert!(close(v[1], C64::new(-r, 0.0), 1e-15));
    }

    #[test]
    fn path_loss_examples() {
        let cfg = SimConfig::default();
        assert!((path_loss_amp(1.0, &cfg).unwrap() - 3.162_277_660_168_379_5e-4).abs() < 1e-18);
        // 10^-3.5 * 25^-1.275 evaluated with mpmath at 30 digits.
        let a = path_loss_amp(25.0, &cfg).unwrap();
        assert!((a - 5.219_471_000_078_947e-6).abs() < 1e-18, "{a}");
        let flat = SimConfig {
            pathloss_exp: 0.0,
            ..cfg.clone()
        };
        assert_eq!(path_loss_amp(3.0, &flat).unwrap(), path_loss_amp(300.0, &flat).unwrap());
        assert!(path_loss_amp(0.0, &cfg).is_err());
        assert!(path_loss_amp(-1.0, &cfg).is_err());
    }

    #[test]
    fn effective_channel_examples() {
        let cfg = SimConfig {
            n_tx: 1,
            ..SimConfig::default()
        };
        let h = effective_channel(0.3, 1.0, &cfg).unwrap();
        assert!((h[0].norm() - 1e-7f64.sqrt()).abs() < 1e-18);

        let cfg = SimConfig::default();
        let h = effective_channel(0.9273, 25.0, &cfg).unwrap();
        assert!((norm_sq(&h).sqrt() - 2.952_578_670_689_883e-5).abs() < 1e-17);
    }

    #[test]
    fn sinr_examples() {
        let h = vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let zero = CMatrix::zeros(2, 1);
        assert_eq!(sinr(&h, &zero, 0, 1.0), 0.0);

        // K=1 with |h^H w|^2 = sigma^2.
        let w = CMatrix::from_columns(vec![vec![C64::new(0.5, 0.0), C64::new(0.0, 0.5)]]).unwrap();
        assert!((sinr(&h, &w, 0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_interferer_is_harmless() {
        let mut rng = stream(3, Purpose::Scenario, 0);
        let mut rc = |n: usize| -> Vec<C64> {
            (0..n).map(|_| C64::new(gaussian(&mut rng), gaussian(&mut rng))).collect()
        };
        let h1 = rc(8);
        let w1 = rc(8);
        let mut w2 = rc(8);
        // Gram-Schmidt: remove the component of w2 along h1.
        let coef = inner(&h1, &w2) / norm_sq(&h1);
        for (x, hh) in w2.iter_mut().zip(&h1) {
            *x -= coef * hh;
        }
        let single = CMatrix::from_columns(vec![w1.clone()]).unwrap();
        let pair = CMatrix::from_columns(vec![w1, w2]).unwrap();
        let a = sinr(&h1, &single, 0, 0.3);
        let b = sinr(&h1, &pair, 0, 0.3);
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn sum_rate_examples() {
        // Three decoupled unit-SINR users.
        let mut h = CMatrix::zeros(3, 3);
        let mut w = CMatrix::zeros(3, 3);
        for k in 0..3 {
            h.column_mut(k)[k] = C64::new(1.0, 0.0);
            w.column_mut(k)[k] = C64::new(0.0, 1.0);
        }
        assert!((sum_rate(&h, &w, 1.0) - 3.0).abs() < 1e-15);
        assert_eq!(sum_rate(&h, &CMatrix::zeros(3, 3), 1.0), 0.0);
    }

    /// Scalar term-by-term evaluation of the SINR expression.
    fn scalar_sum_rate(h: &[Vec<(f64, f64)>], w: &[Vec<(f64, f64)>], s2: f64) -> f64 {
        let dot = |a: &Vec<(f64, f64)>, b: &Vec<(f64, f64)>| {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..a.len() {
                // conj(a) * b
                re += a[i].0 * b[i].0 + a[i].1 * b[i].1;
                im += a[i].0 * b[i].1 - a[i].1 * b[i].0;
            }
            re * re + im * im
        };
        let mut total = 0.0;
        for k in 0..h.len() {
            let mut interf = 0.0;
            for j in 0..w.len() {
                if j != k {
                    interf += dot(&h[k], &w[j]);
                }
            }
            total += (1.0 + dot(&h[k], &w[k]) / (interf + s2)).log2();
        }
        total
    }

    #[test]
    fn sum_rate_matches_scalar_oracle() {
        let mut rng = stream(11, Purpose::Scenario, 0);
        let mut draw = || -> Vec<(f64, f64)> {
            (0..6).map(|_| (gaussian(&mut rng), gaussian(&mut rng))).collect()
        };
        let hs: Vec<_> = (0..3).map(|_| draw()).collect();
        let ws: Vec<_> = (0..3).map(|_| draw()).collect();
        let to_m = |v: &Vec<Vec<(f64, f64)>>| {
            CMatrix::from_columns(
                v.iter()
                    .map(|c| c.iter().map(|&(r, i)| C64::new(r, i)).collect())
                    .collect(),
            )
            .unwrap()
        };
        let got = sum_rate(&to_m(&hs), &to_m(&ws), 0.7);
        let want = scalar_sum_rate(&hs, &ws, 0.7);
        assert!((got - want).abs() < 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn steering_vectors_separate_for_large_arrays() {
        let n = 32;
        let mut rng = stream(5, Purpose::Scenario, 0);
        for _ in 0..500 {
            let t1 = crate::rng::uniform(&mut rng, 0.05, PI - 0.05);
            let t2 = crate::rng::uniform(&mut rng, 0.05, PI - 0.05);
            // Separation in cos θ wraps with period 2 (half-wavelength spacing).
            let sep = (t1.cos() - t2.cos()).abs();
            if sep.min(2.0 - sep) >= 4.0 / n as f64 {
                let c = inner(&steering(t1, n), &steering(t2, n)).norm();
                assert!(c <= 0.35, "{t1} {t2} {c}");
            }
        }
        // Fixed separation shrinks with the array size.
        let (t1, t2) = (0.8f64, 0.9f64);
        let c32 = inner(&steering(t1, 32), &steering(t2, 32)).norm();
        let c256 = inner(&steering(t1, 256), &steering(t2, 256)).norm();
        assert!(c256 < c32);
        assert!(c256 < 0.05);
    }

    proptest! {
        #[test]
        fn steering_has_unit_norm(theta in 0.0f64..PI, n in 1usize..80) {
            prop_assert!((norm_sq(&steering(theta, n)) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rate_invariant_under_column_phase(phase in 0.0f64..TAU, col in 0usize..3, seed in 0u64..1000) {
            let mut rng = stream(seed, Purpose::Scenario, 1);
            let mut m = || CMatrix::from_columns((0..3).map(|_| (0..4).map(|_| C64::new(gaussian(&mut rng), gaussian(&mut rng))).collect()).collect()).unwrap();
            let h = m();
            let w = m();
            let mut rotated = w.clone();
            let r = C64::from_polar(1.0, phase);
            rotated.column_mut(col).iter_mut().for_each(|z| *z *= r);
            let a = sum_rate(&h, &w, 0.5);
            let b = sum_rate(&h, &rotated, 0.5);
            prop_assert!((a - b).abs() < 1e-10 * a.max(1.0));
        }

        #[test]
        fn single_user_rate_grows_with_power(c in 1.0f64..50.0, theta in 0.2f64..2.9) {
            let cfg = SimConfig::default();
            let h = CMatrix::from_columns(vec![effective_channel(theta, 30.0, &cfg).unwrap()]).unwrap();
            let mut w = CMatrix::from_columns(vec![steering(theta + 0.01, cfg.n_tx)]).unwrap();
            let base = sum_rate(&h, &w, cfg.noise_vehicle);
            w.scale(c.sqrt());
            prop_assert!(sum_rate(&h, &w, cfg.noise_vehicle) >= base);
        }
    }
}
