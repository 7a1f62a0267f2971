//! Echo statistics, noisy motion-parameter observations, the Fisher
//! information of `(θ, d, v̇)` and the closed-form CRLBs.
//!
//! The matched-filtered echo is `r̄ = G β ξ b(θ) a(θ)^H w` with
//! `G = √(N_t N_r)` and `β = ϱ / (2d)`. Delay and Doppler estimates carry
//! Gaussian errors whose variances scale as `1 / |a^H w|²`. In the Fisher
//! information the echo block depends on `θ` only (β is a known nuisance),
//! so the 3×3 matrix over `(θ, d, v̇)` is diagonal.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::channel::{inner, norm_sq, steering, steering_dtheta, C64};
use crate::config::{SimConfig, ThetaMode};
use crate::error::{Error, Result};
use crate::kinematics::VehicleState;
use crate::rng::gaussian;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    /// Round-trip delay estimate (s).
    pub nu_hat: f64,
    /// Doppler estimate (Hz).
    pub mu_hat: f64,
    pub theta_hat: f64,
    pub d_hat: f64,
    pub vdot_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingNoiseModel {
    pub sigma_r2: f64,
    pub sigma_nu2: f64,
    pub sigma_mu2: f64,
}

/// Noise model for one beam, or the marker for a beam with no gain toward
/// the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observability {
    Observable(SensingNoiseModel),
    Unobservable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherInfo {
    /// Information over `(θ, d, v̇)`.
    pub f: [[f64; 3]; 3],
    /// rad²
    pub crlb_theta: f64,
    /// m²
    pub crlb_d: f64,
}

/// `β = ϱ / (2d)`.
pub fn reflection_coeff(dist: f64, config: &SimConfig) -> Result<C64> {
    if !(dist > 0.0) {
        return Err(Error::Geometry(format!("distance must be positive, got {dist}")));
    }
    Ok(config.rcs() / (2.0 * dist))
}

/// `|ψ|² = N_t N_r |β|²`; the Doppler phase has unit modulus.
fn psi_sq(dist: f64, config: &SimConfig) -> Result<f64> {
    Ok((config.n_tx * config.n_rx) as f64 * reflection_coeff(dist, config)?.norm_sqr())
}

/// `|a(θ)^H w|²`, or `None` when `w` is orthogonal to `a(θ)` to machine
/// precision.
fn beam_gain(theta: f64, w: &[C64]) -> Option<f64> {
    let g = inner(&steering(theta, w.len()), w).norm_sqr();
    let floor = f64::EPSILON * f64::EPSILON * norm_sq(w);
    (g > floor && g > 0.0).then_some(g)
}

pub fn obs_noise_vars(theta: f64, dist: f64, w: &[C64], config: &SimConfig) -> Result<Observability> {
    let psi2 = psi_sq(dist, config)?;
    let Some(gain) = beam_gain(theta, w) else {
        return Ok(Observability::Unobservable);
    };
    let denom = config.mf_gain * psi2 * gain;
    Ok(Observability::Observable(SensingNoiseModel {
        sigma_r2: config.echo_noise_var(),
        sigma_nu2: config.rho_nu.powi(2) * config.noise_rsu / denom,
        sigma_mu2: config.rho_mu.powi(2) * config.noise_rsu / denom,
    }))
}

/// Noisy delay/Doppler/angle estimates for one vehicle under beam `w`.
/// Draw order: delay error, Doppler error, angle error (all three are always
/// drawn). Returns `None` when the beam makes the vehicle unobservable.
pub fn generate_observation<R: RngCore>(
    state: &VehicleState,
    w: &[C64],
    config: &SimConfig,
    rng: &mut R,
    mode: ThetaMode,
) -> Result<Option<ObservationRecord>> {
    let e_nu = gaussian(rng);
    let e_mu = gaussian(rng);
    let e_theta = gaussian(rng);
    let Observability::Observable(noise) = obs_noise_vars(state.theta, state.dist, w, config)? else {
        return Ok(None);
    };
    let c = config.wave_speed;
    let nu_hat = 2.0 * state.dist / c + noise.sigma_nu2.sqrt() * e_nu;
    let mu_hat = 2.0 * state.radial_v * config.carrier_hz / c + noise.sigma_mu2.sqrt() * e_mu;
    let theta_hat = match mode {
        ThetaMode::Relative => state.theta * (1.0 + config.obs_rel_mse.sqrt() * e_theta),
        ThetaMode::Crlb => {
            let crlb = crlb_theta(state.theta, state.dist, w, config)?;
            if !crlb.is_finite() {
                return Ok(None);
            }
            state.theta + crlb.sqrt() * e_theta
        }
    };
    Ok(Some(ObservationRecord {
        nu_hat,
        mu_hat,
        theta_hat,
        d_hat: c * nu_hat / 2.0,
        vdot_hat: c * mu_hat / (2.0 * config.carrier_hz),
    }))
}

/// `G β ξ`, the complex echo amplitude.
fn echo_amp(dist: f64, config: &SimConfig) -> Result<C64> {
    Ok(reflection_coeff(dist, config)? * (config.array_gain() * config.mf_gain))
}

/// Noiseless matched-filter output `G β ξ b(θ) (a(θ)^H w)`, length `N_r`.
pub fn echo_mean(theta: f64, dist: f64, w: &[C64], config: &SimConfig) -> Result<Vec<C64>> {
    let s = echo_amp(dist, config)? * inner(&steering(theta, config.n_tx), w);
    Ok(steering(theta, config.n_rx).into_iter().map(|b| b * s).collect())
}

/// `∂r̄/∂θ = G β ξ [b'(θ) (a^H w) + b(θ) (a'^H w)]`.
pub fn echo_dtheta(theta: f64, dist: f64, w: &[C64], config: &SimConfig) -> Result<Vec<C64>> {
    let amp = echo_amp(dist, config)?;
    let u = inner(&steering(theta, config.n_tx), w);
    let v = inner(&steering_dtheta(theta, config.n_tx), w);
    let b = steering(theta, config.n_rx);
    let db = steering_dtheta(theta, config.n_rx);
    Ok(db
        .into_iter()
        .zip(b)
        .map(|(db, b)| amp * (db * u + b * v))
        .collect())
}

/// Full observation mean `g(θ, d, v̇) = [r̄ᵀ, 2d/c, 2 v̇ f_c / c]ᵀ`, with the
/// echo amplitude held at `beta_dist`.
pub fn observation_mean(
    theta: f64,
    dist: f64,
    radial_v: f64,
    beta_dist: f64,
    w: &[C64],
    config: &SimConfig,
) -> Result<Vec<C64>> {
    let mut g = echo_mean(theta, beta_dist, w, config)?;
    g.push(C64::new(2.0 * dist / config.wave_speed, 0.0));
    g.push(C64::new(
        2.0 * radial_v * config.carrier_hz / config.wave_speed,
        0.0,
    ));
    Ok(g)
}

/// `CRLB(θ, w) = σ_r² / ‖∂r̄/∂θ‖²`, infinite when the derivative vanishes.
pub fn crlb_theta(theta: f64, dist: f64, w: &[C64], config: &SimConfig) -> Result<f64> {
    let info = norm_sq(&echo_dtheta(theta, dist, w, config)?);
    Ok(if info > 0.0 {
        config.echo_noise_var() / info
    } else {
        f64::INFINITY
    })
}

/// `CRLB(d, w) = σ_ν² c² / 4`, infinite when unobservable.
pub fn crlb_d(theta: f64, dist: f64, w: &[C64], config: &SimConfig) -> Result<f64> {
    Ok(match obs_noise_vars(theta, dist, w, config)? {
        Observability::Observable(n) => n.sigma_nu2 * config.wave_speed.powi(2) / 4.0,
        Observability::Unobservable => f64::INFINITY,
    })
}

pub fn fisher_information(state: &VehicleState, w: &[C64], config: &SimConfig) -> Result<FisherInfo> {
    let info_theta = norm_sq(&echo_dtheta(state.theta, state.dist, w, config)?);
    let sigma_r2 = config.echo_noise_var();
    let c = config.wave_speed;
    let (f22, f33) = match obs_noise_vars(state.theta, state.dist, w, config)? {
        Observability::Observable(n) => (
            (2.0 / c).powi(2) / n.sigma_nu2,
            (2.0 * config.carrier_hz / c).powi(2) / n.sigma_mu2,
        ),
        Observability::Unobservable => (0.0, 0.0),
    };
    let f11 = info_theta / sigma_r2;
    let inv = |x: f64| if x > 0.0 { 1.0 / x } else { f64::INFINITY };
    Ok(FisherInfo {
        f: [[f11, 0.0, 0.0], [0.0, f22, 0.0], [0.0, 0.0, f33]],
        crlb_theta: inv(f11),
        crlb_d: if f22.is_infinite() { 0.0 } else { inv(f22) },
    })
}

/// A CRLB value with its gradient `2 ∂/∂w̄` (real part = derivative w.r.t.
/// `Re w`, imaginary part = derivative w.r.t. `Im w`).
#[derive(Debug, Clone, PartialEq)]
pub struct CrlbGrad {
    pub value: f64,
    pub grad: Vec<C64>,
}

/// `CRLB(θ, w)` with its gradient. `None` when the bound is infinite.
pub fn crlb_theta_grad(theta: f64, dist: f64, w: &[C64], config: &SimConfig) -> Result<Option<CrlbGrad>> {
    let amp = echo_amp(dist, config)?;
    let a = steering(theta, config.n_tx);
    let da = steering_dtheta(theta, config.n_tx);
    let b = steering(theta, config.n_rx);
    let db = steering_dtheta(theta, config.n_rx);
    let u = inner(&a, w);
    let v = inner(&da, w);
    // q = D w with D = amp (b' a^H + b a'^H)
    let q: Vec<C64> = db.iter().zip(&b).map(|(db, b)| amp * (db * u + b * v)).collect();
    let info = norm_sq(&q);
    if !(info > 0.0) {
        return Ok(None);
    }
    let value = config.echo_noise_var() / info;
    // ∇‖Dw‖² = 2 D^H q = 2 conj(amp) (a (b'^H q) + a' (b^H q))
    let s1 = inner(&db, &q);
    let s2 = inner(&b, &q);
    let coef = -value / info * 2.0;
    let grad = a
        .iter()
        .zip(&da)
        .map(|(a, da)| amp.conj() * (a * s1 + da * s2) * coef)
        .collect();
    Ok(Some(CrlbGrad { value, grad }))
}

/// `CRLB(d, w)` with its gradient. `None` when unobservable.
pub fn crlb_d_grad(theta: f64, dist: f64, w: &[C64], config: &SimConfig) -> Result<Option<CrlbGrad>> {
    let psi2 = psi_sq(dist, config)?;
    let a = steering(theta, config.n_tx);
    let u = inner(&a, w);
    let gain = u.norm_sqr();
    if beam_gain(theta, w).is_none() {
        return Ok(None);
    }
    let k = config.rho_nu.powi(2) * config.noise_rsu * config.wave_speed.powi(2)
        / (4.0 * config.mf_gain * psi2);
    let value = k / gain;
    // d(k/|u|²) = -k/|u|⁴ · 2 u a
    let coef = u * (-2.0 * k / (gain * gain));
    let grad = a.iter().map(|a| a * coef).collect();
    Ok(Some(CrlbGrad { value, grad }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, uniform, Purpose};

    fn aligned(theta: f64, power: f64, n: usize) -> Vec<C64> {
        steering(theta, n).into_iter().map(|z| z * power.sqrt()).collect()
    }

    fn random_w(seed: u64, n: usize) -> Vec<C64> {
        let mut rng = stream(seed, Purpose::Scenario, 9);
        (0..n)
            .map(|_| C64::new(gaussian(&mut rng), gaussian(&mut rng)) * 0.2)
            .collect()
    }

    #[test]
    fn reflection_examples() {
        let cfg = SimConfig::default();
        let b = reflection_coeff(25.0, &cfg).unwrap();
        assert!((b - C64::new(0.2, 0.2)).norm() < 1e-16);
        assert!((b.norm_sqr() - 0.08).abs() < 1e-16);
        assert!(reflection_coeff(1e12, &cfg).unwrap().norm() < 1e-10);
        assert!(reflection_coeff(0.0, &cfg).is_err());
    }

    #[test]
    fn delay_variance_reference_value() {
        let cfg = SimConfig::default();
        let w = aligned(0.9273, 1.0, 32);
        let Observability::Observable(n) = obs_noise_vars(0.9273, 25.0, &w, &cfg).unwrap() else {
            panic!("aligned beam must be observable");
        };
        // (2e-6)^2 * 1e-11 / (10 * 81.92 * 1)
        let want = 4e-12 * 1e-11 / 819.2;
        assert!((n.sigma_nu2 - want).abs() < 1e-12 * want);
        assert!((n.sigma_nu2 - 4.88e-26).abs() < 0.01e-26);
    }

    #[test]
    fn doubling_gain_halves_variances() {
        let cfg = SimConfig::default();
        let w = random_w(1, 32);
        let w2: Vec<C64> = w.iter().map(|z| z * 2f64.sqrt()).collect();
        let (Observability::Observable(a), Observability::Observable(b)) = (
            obs_noise_vars(0.7, 30.0, &w, &cfg).unwrap(),
            obs_noise_vars(0.7, 30.0, &w2, &cfg).unwrap(),
        ) else {
            panic!()
        };
        assert!((a.sigma_nu2 / b.sigma_nu2 - 2.0).abs() < 1e-12);
        assert!((a.sigma_mu2 / b.sigma_mu2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rho_means_exact_delay() {
        let cfg = SimConfig {
            rho_nu: 0.0,
            ..SimConfig::default()
        };
        let Observability::Observable(n) = obs_noise_vars(0.7, 30.0, &random_w(2, 32), &cfg).unwrap() else {
            panic!()
        };
        assert_eq!(n.sigma_nu2, 0.0);
    }

    #[test]
    fn zero_beam_is_unobservable() {
        let cfg = SimConfig::default();
        let w = vec![C64::new(0.0, 0.0); 32];
        assert_eq!(obs_noise_vars(0.7, 30.0, &w, &cfg).unwrap(), Observability::Unobservable);
        let fi = fisher_information(&VehicleState::new(15.0, 20.0, 8.0).unwrap(), &w, &cfg).unwrap();
        assert!(fi.crlb_theta.is_infinite() && fi.crlb_d.is_infinite());
        assert_eq!(fi.f, [[0.0; 3]; 3]);
    }

    #[test]
    fn noiseless_observation_is_exact() {
        let cfg = SimConfig {
            rho_nu: 0.0,
            rho_mu: 0.0,
            obs_rel_mse: 0.0,
            ..SimConfig::default()
        };
        let s = VehicleState::new(15.0, 20.0, 8.0).unwrap();
        let w = aligned(s.theta, 0.3, 32);
        let o = generate_observation(&s, &w, &cfg, &mut stream(0, Purpose::Scenario, 0), ThetaMode::Relative)
            .unwrap()
            .unwrap();
        assert_eq!(o.theta_hat, s.theta);
        assert!((o.d_hat - s.dist).abs() < 1e-12);
        assert!((o.vdot_hat - s.radial_v).abs() < 1e-12);
        assert!((o.nu_hat - 2.0 * 25.0 / 3e8).abs() < 1e-22);
        assert!((o.nu_hat - 1.6667e-7).abs() < 1e-11);
    }

    #[test]
    fn delay_sample_variance_matches_model() {
        let cfg = SimConfig::default();
        let s = VehicleState::new(15.0, 20.0, 8.0).unwrap();
        let w = random_w(4, 32);
        let Observability::Observable(n) = obs_noise_vars(s.theta, s.dist, &w, &cfg).unwrap() else {
            panic!()
        };
        let mut rng = stream(10, Purpose::Scenario, 0);
        let draws = 100_000;
        let xs: Vec<f64> = (0..draws)
            .map(|_| {
                generate_observation(&s, &w, &cfg, &mut rng, ThetaMode::Relative)
                    .unwrap()
                    .unwrap()
                    .nu_hat
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / draws as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        assert!((var / n.sigma_nu2 - 1.0).abs() < 0.03, "{var} vs {}", n.sigma_nu2);
    }

    #[test]
    fn echo_mean_examples() {
        let cfg = SimConfig::default();
        let theta: f64 = 0.9;
        // Orthogonal beam: a steering vector whose cosine differs by exactly 2/N.
        let w = steering((theta.cos() + 2.0 / 32.0).acos(), 32);
        assert!(inner(&steering(theta, 32), &w).norm() < 1e-14);
        let r = echo_mean(theta, 25.0, &w, &cfg).unwrap();
        assert!(norm_sq(&r) < 1e-20);

        let one = SimConfig {
            n_rx: 1,
            ..cfg.clone()
        };
        let w = random_w(5, 32);
        let r = echo_mean(theta, 25.0, &w, &one).unwrap();
        let want = 32f64.sqrt() * 0.08f64.sqrt() * 10.0 * inner(&steering(theta, 32), &w).norm();
        assert_eq!(r.len(), 1);
        assert!((r[0].norm() - want).abs() < 1e-12 * want);
    }

    #[test]
    fn echo_mean_matches_scalar_loop() {
        let cfg = SimConfig {
            n_tx: 8,
            n_rx: 6,
            ..SimConfig::default()
        };
        let (theta, d) = (1.1, 31.0);
        let w = random_w(6, 8);
        let r = echo_mean(theta, d, &w, &cfg).unwrap();
        let pi = std::f64::consts::PI;
        let mut aw = C64::new(0.0, 0.0);
        for (m, wm) in w.iter().enumerate() {
            let am = C64::from_polar(1.0 / 8f64.sqrt(), -pi * m as f64 * theta.cos());
            aw += am.conj() * wm;
        }
        let beta = C64::new(10.0, 10.0) / (2.0 * d);
        for (m, rm) in r.iter().enumerate() {
            let bm = C64::from_polar(1.0 / 6f64.sqrt(), -pi * m as f64 * theta.cos());
            let want = (48f64).sqrt() * beta * 10.0 * bm * aw;
            assert!((rm - want).norm() < 1e-12 * want.norm().max(1e-300));
        }
    }

    #[test]
    fn single_antenna_echo_has_no_angle_dependence() {
        let cfg = SimConfig {
            n_tx: 1,
            n_rx: 1,
            ..SimConfig::default()
        };
        let d = echo_dtheta(0.8, 20.0, &[C64::new(0.3, 0.1)], &cfg).unwrap();
        assert_eq!(d, vec![C64::new(0.0, 0.0)]);
    }

    #[test]
    fn echo_derivative_matches_finite_difference() {
        let cfg = SimConfig::default();
        let mut rng = stream(12, Purpose::Scenario, 0);
        for i in 0..20 {
            let theta = uniform(&mut rng, 0.3, 2.8);
            let d = uniform(&mut rng, 10.0, 60.0);
            let w = random_w(100 + i, 32);
            let h = 1e-6;
            let plus = echo_mean(theta + h, d, &w, &cfg).unwrap();
            let minus = echo_mean(theta - h, d, &w, &cfg).unwrap();
            let fd: Vec<C64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect();
            let an = echo_dtheta(theta, d, &w, &cfg).unwrap();
            let err = fd.iter().zip(&an).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err / norm_sq(&an).sqrt() < 1e-5, "rel err {}", err / norm_sq(&an).sqrt());
        }
    }

    #[test]
    fn broadside_derivative_magnitudes_are_symmetric() {
        // At θ = π/2 with w = a(π/2), a'^H w = -jπ (N-1)/2 / ... and entry m of
        // ∂r̄/∂θ is proportional to (m - (N_r - 1)/2), so |entry m| = |entry N_r-1-m|.
        let cfg = SimConfig::default();
        let theta = std::f64::consts::FRAC_PI_2;
        let w = aligned(theta, 1.0, 32);
        let d = echo_dtheta(theta, 25.0, &w, &cfg).unwrap();
        for m in 0..32 {
            assert!((d[m].norm() - d[31 - m].norm()).abs() < 1e-9 * d[0].norm());
        }
    }

    #[test]
    fn crlb_d_reference_value() {
        let cfg = SimConfig::default();
        // σ_ν² = 4e-17 s² corresponds to crlb_d = σ_ν² c² / 4 = 0.9 m².
        assert!((4e-17 * cfg.wave_speed.powi(2) / 4.0 - 0.9).abs() < 1e-12);
        let s = VehicleState::new(15.0, 20.0, 8.0).unwrap();
        let w = aligned(s.theta, 1.0, 32);
        let fi = fisher_information(&s, &w, &cfg).unwrap();
        let Observability::Observable(n) = obs_noise_vars(s.theta, s.dist, &w, &cfg).unwrap() else {
            panic!()
        };
        assert!((fi.crlb_d - n.sigma_nu2 * 9e16 / 4.0).abs() < 1e-12 * fi.crlb_d);
        assert!((fi.crlb_d - crlb_d(s.theta, s.dist, &w, &cfg).unwrap()).abs() < 1e-12 * fi.crlb_d);
        assert!((fi.crlb_theta - crlb_theta(s.theta, s.dist, &w, &cfg).unwrap()).abs() < 1e-12 * fi.crlb_theta);
    }

    #[test]
    fn doubling_power_halves_both_bounds() {
        let cfg = SimConfig::default();
        let s = VehicleState::new(25.0, 20.0, 8.0).unwrap();
        let w = random_w(7, 32);
        let w2: Vec<C64> = w.iter().map(|z| z * 2f64.sqrt()).collect();
        let a = fisher_information(&s, &w, &cfg).unwrap();
        let b = fisher_information(&s, &w2, &cfg).unwrap();
        assert!((a.crlb_theta / b.crlb_theta - 2.0).abs() < 1e-12);
        assert!((a.crlb_d / b.crlb_d - 2.0).abs() < 1e-12);
    }

    fn fd_grad(f: impl Fn(&[C64]) -> f64, w: &[C64], h: f64) -> Vec<C64> {
        (0..w.len())
            .map(|i| {
                let mut p = w.to_vec();
                let mut m = w.to_vec();
                p[i].re += h;
                m[i].re -= h;
                let dre = (f(&p) - f(&m)) / (2.0 * h);
                let mut p = w.to_vec();
                let mut m = w.to_vec();
                p[i].im += h;
                m[i].im -= h;
                let dim = (f(&p) - f(&m)) / (2.0 * h);
                C64::new(dre, dim)
            })
            .collect()
    }

    #[test]
    fn crlb_gradients_match_finite_differences() {
        let cfg = SimConfig::default();
        for seed in 0..5 {
            let w = random_w(200 + seed, 32);
            let (theta, d) = (0.6 + 0.1 * seed as f64, 28.0);
            let g = crlb_theta_grad(theta, d, &w, &cfg).unwrap().unwrap();
            let fd = fd_grad(|w| crlb_theta(theta, d, w, &cfg).unwrap(), &w, 1e-6);
            let scale = norm_sq(&g.grad).sqrt();
            for (a, b) in g.grad.iter().zip(&fd) {
                assert!((a - b).norm() < 1e-5 * scale, "{a} vs {b}");
            }
            let g = crlb_d_grad(theta, d, &w, &cfg).unwrap().unwrap();
            let fd = fd_grad(|w| crlb_d(theta, d, w, &cfg).unwrap(), &w, 1e-6);
            let scale = norm_sq(&g.grad).sqrt();
            for (a, b) in g.grad.iter().zip(&fd) {
                assert!((a - b).norm() < 1e-5 * scale, "{a} vs {b}");
            }
        }
    }
}
