//! Simulation configuration and its flat key-value text format.
//!
//! The file format is line oriented:
//!
//! ```text
//! # comment
//! [array]
//! n_tx = 32
//! n_rx = 32
//! ```
//!
//! Section headers only group keys for readability; every key is globally
//! unique and maps onto one [`SimConfig`] field. Overrides use the same
//! `key=value` syntax.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How historical angle estimates are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaMode {
    /// `θ̃ = θ (1 + e)`, `e ~ N(0, obs_rel_mse)`.
    Relative,
    /// `θ̃ = θ + N(0, CRLB(θ, w))`.
    Crlb,
}

impl FromStr for ThetaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative" => Ok(ThetaMode::Relative),
            "crlb" => Ok(ThetaMode::Crlb),
            other => Err(Error::InvalidConfig(format!(
                "theta_mode must be `relative` or `crlb`, got `{other}`"
            ))),
        }
    }
}

impl ThetaMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ThetaMode::Relative => "relative",
            ThetaMode::Crlb => "crlb",
        }
    }
}

/// Every scalar constant of the physical model and the training objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Transmit antennas `N_t`.
    pub n_tx: usize,
    /// Receive antennas `N_r`.
    pub n_rx: usize,
    /// Served vehicles `K`.
    pub n_vehicles: usize,
    /// Carrier frequency (Hz).
    pub carrier_hz: f64,
    /// Propagation speed (m/s).
    pub wave_speed: f64,
    /// Echo noise power at the RSU `σ_z²` (W).
    pub noise_rsu: f64,
    /// Receiver noise power at each vehicle `σ_k²` (W).
    pub noise_vehicle: f64,
    /// Radar cross-section fading coefficient `ϱ`.
    pub rcs_re: f64,
    pub rcs_im: f64,
    /// Matched-filtering gain `ξ`.
    pub mf_gain: f64,
    pub rho_nu: f64,
    pub rho_mu: f64,
    /// Post-matched-filter echo noise `σ_r²`; `None` means `ξ σ_z²`.
    pub echo_noise: Option<f64>,
    /// Path loss at the reference distance, linear.
    pub pathloss_ref: f64,
    pub ref_dist: f64,
    pub pathloss_exp: f64,
    /// Slot duration `ΔT` (s).
    pub slot_dur: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Standard deviation of the initial position jitter (m).
    pub position_jitter: f64,
    /// Lateral road offset of the anchor points (m).
    pub road_y: f64,
    pub gamma_theta: f64,
    pub gamma_d: f64,
    /// Transmit power budget `P` (W).
    pub power_budget: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// History window length `τ`.
    pub history_len: usize,
    /// Slots per episode.
    pub n_slots: usize,
    /// Normalized MSE of historical angle estimates.
    pub obs_rel_mse: f64,
    pub theta_mode: ThetaMode,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_tx: 32,
            n_rx: 32,
            n_vehicles: 3,
            carrier_hz: 30e9,
            wave_speed: 3e8,
            noise_rsu: 1e-11,
            noise_vehicle: 1e-11,
            rcs_re: 10.0,
            rcs_im: 10.0,
            mf_gain: 10.0,
            rho_nu: 2.0e-6,
            rho_mu: 2.0e-6,
            echo_noise: None,
            pathloss_ref: 1e-7,
            ref_dist: 1.0,
            pathloss_exp: 2.55,
            slot_dur: 0.02,
            v_min: 8.0,
            v_max: 8.25,
            position_jitter: 1.0,
            road_y: 20.0,
            gamma_theta: 0.01,
            gamma_d: 0.01,
            power_budget: 1.0,
            lambda1: 1e3,
            lambda2: 1e3,
            lambda3: 1e3,
            history_len: 5,
            n_slots: 50,
            obs_rel_mse: 0.01,
            theta_mode: ThetaMode::Relative,
            rng_seed: 42,
        }
    }
}

/// Section each key is written under when serializing.
const SECTIONS: &[(&str, &[&str])] = &[
    ("array", &["n_tx", "n_rx", "n_vehicles"]),
    (
        "radio",
        &[
            "carrier_hz",
            "wave_speed",
            "noise_rsu",
            "noise_vehicle",
            "pathloss_ref",
            "ref_dist",
            "pathloss_exp",
        ],
    ),
    (
        "sensing",
        &[
            "rcs_re",
            "rcs_im",
            "mf_gain",
            "rho_nu",
            "rho_mu",
            "echo_noise",
            "obs_rel_mse",
            "theta_mode",
        ],
    ),
    (
        "mobility",
        &[
            "slot_dur",
            "v_min",
            "v_max",
            "position_jitter",
            "road_y",
            "n_slots",
        ],
    ),
    (
        "objective",
        &[
            "gamma_theta",
            "gamma_d",
            "power_budget",
            "lambda1",
            "lambda2",
            "lambda3",
            "history_len",
        ],
    ),
    ("run", &["rng_seed"]),
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::InvalidConfig(format!("`{key}`: cannot parse `{value}`")))
}

impl SimConfig {
    pub fn rcs(&self) -> Complex64 {
        Complex64::new(self.rcs_re, self.rcs_im)
    }

    /// `σ_r²`, the post-matched-filter echo noise variance.
    pub fn echo_noise_var(&self) -> f64 {
        self.echo_noise.unwrap_or(self.mf_gain * self.noise_rsu)
    }

    /// Array gain `G = √(N_t N_r)`.
    pub fn array_gain(&self) -> f64 {
        ((self.n_tx * self.n_rx) as f64).sqrt()
    }

    /// Set one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "n_tx" => self.n_tx = parse_num(key, value)?,
            "n_rx" => self.n_rx = parse_num(key, value)?,
            "n_vehicles" => self.n_vehicles = parse_num(key, value)?,
            "carrier_hz" => self.carrier_hz = parse_num(key, value)?,
            "wave_speed" => self.wave_speed = parse_num(key, value)?,
            "noise_rsu" => self.noise_rsu = parse_num(key, value)?,
            "noise_vehicle" => self.noise_vehicle = parse_num(key, value)?,
            "rcs_re" => self.rcs_re = parse_num(key, value)?,
            "rcs_im" => self.rcs_im = parse_num(key, value)?,
            "mf_gain" => self.mf_gain = parse_num(key, value)?,
            "rho_nu" => self.rho_nu = parse_num(key, value)?,
            "rho_mu" => self.rho_mu = parse_num(key, value)?,
            "echo_noise" => {
                self.echo_noise = match value {
                    "auto" | "" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "pathloss_ref" => self.pathloss_ref = parse_num(key, value)?,
            "ref_dist" => self.ref_dist = parse_num(key, value)?,
            "pathloss_exp" => self.pathloss_exp = parse_num(key, value)?,
            "slot_dur" => self.slot_dur = parse_num(key, value)?,
            "v_min" => self.v_min = parse_num(key, value)?,
            "v_max" => self.v_max = parse_num(key, value)?,
            "position_jitter" => self.position_jitter = parse_num(key, value)?,
            "road_y" => self.road_y = parse_num(key, value)?,
            "gamma_theta" => self.gamma_theta = parse_num(key, value)?,
            "gamma_d" => self.gamma_d = parse_num(key, value)?,
            "power_budget" => self.power_budget = parse_num(key, value)?,
            "lambda1" => self.lambda1 = parse_num(key, value)?,
            "lambda2" => self.lambda2 = parse_num(key, value)?,
            "lambda3" => self.lambda3 = parse_num(key, value)?,
            "history_len" => self.history_len = parse_num(key, value)?,
            "n_slots" => self.n_slots = parse_num(key, value)?,
            "obs_rel_mse" => self.obs_rel_mse = parse_num(key, value)?,
            "theta_mode" => self.theta_mode = value.parse()?,
            "rng_seed" => self.rng_seed = parse_num(key, value)?,
            other => return Err(Error::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "n_tx" => self.n_tx.to_string(),
            "n_rx" => self.n_rx.to_string(),
            "n_vehicles" => self.n_vehicles.to_string(),
            "carrier_hz" => fmt_f64(self.carrier_hz),
            "wave_speed" => fmt_f64(self.wave_speed),
            "noise_rsu" => fmt_f64(self.noise_rsu),
            "noise_vehicle" => fmt_f64(self.noise_vehicle),
            "rcs_re" => fmt_f64(self.rcs_re),
            "rcs_im" => fmt_f64(self.rcs_im),
            "mf_gain" => fmt_f64(self.mf_gain),
            "rho_nu" => fmt_f64(self.rho_nu),
            "rho_mu" => fmt_f64(self.rho_mu),
            "echo_noise" => self.echo_noise.map_or("auto".into(), fmt_f64),
            "pathloss_ref" => fmt_f64(self.pathloss_ref),
            "ref_dist" => fmt_f64(self.ref_dist),
            "pathloss_exp" => fmt_f64(self.pathloss_exp),
            "slot_dur" => fmt_f64(self.slot_dur),
            "v_min" => fmt_f64(self.v_min),
            "v_max" => fmt_f64(self.v_max),
            "position_jitter" => fmt_f64(self.position_jitter),
            "road_y" => fmt_f64(self.road_y),
            "gamma_theta" => fmt_f64(self.gamma_theta),
            "gamma_d" => fmt_f64(self.gamma_d),
            "power_budget" => fmt_f64(self.power_budget),
            "lambda1" => fmt_f64(self.lambda1),
            "lambda2" => fmt_f64(self.lambda2),
            "lambda3" => fmt_f64(self.lambda3),
            "history_len" => self.history_len.to_string(),
            "n_slots" => self.n_slots.to_string(),
            "obs_rel_mse" => fmt_f64(self.obs_rel_mse),
            "theta_mode" => self.theta_mode.as_str().to_string(),
            "rng_seed" => self.rng_seed.to_string(),
            _ => unreachable!("key table out of sync: {key}"),
        }
    }

    /// Parse the key-value text format on top of the defaults.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') || line.len() < 3 {
                    return Err(Error::ConfigParse {
                        line: idx + 1,
                        msg: format!("bad section header `{line}`"),
                    });
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text)
    }

    /// Apply `key=value` overrides in order, then re-validate.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override `{o}` is not key=value")))?;
            self.set(key, value)?;
        }
        self.validate()
    }

    /// Every `(key, value)` pair in section order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        SECTIONS
            .iter()
            .flat_map(|(_, keys)| keys.iter())
            .map(|&k| (k, self.get(k)))
            .collect()
    }

    /// Serialize to the sectioned key-value format. Round-trips through
    /// [`SimConfig::from_kv_str`].
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for (section, keys) in SECTIONS {
            let _ = writeln!(out, "[{section}]");
            for key in *keys {
                let _ = writeln!(out, "{key} = {}", self.get(key));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_tx == 0 || self.n_rx == 0 || self.n_vehicles == 0 || self.history_len == 0 {
            return bad("n_tx, n_rx, n_vehicles and history_len must be >= 1");
        }
        if self.n_slots == 0 {
            return bad("n_slots must be >= 1");
        }
        if !(self.v_min <= self.v_max) || self.v_min < 0.0 {
            return bad("need 0 <= v_min <= v_max");
        }
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("wave_speed", self.wave_speed),
            ("noise_rsu", self.noise_rsu),
            ("noise_vehicle", self.noise_vehicle),
            ("mf_gain", self.mf_gain),
            ("pathloss_ref", self.pathloss_ref),
            ("ref_dist", self.ref_dist),
            ("slot_dur", self.slot_dur),
            ("gamma_theta", self.gamma_theta),
            ("gamma_d", self.gamma_d),
            ("power_budget", self.power_budget),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("rho_nu", self.rho_nu),
            ("rho_mu", self.rho_mu),
            ("pathloss_exp", self.pathloss_exp),
            ("position_jitter", self.position_jitter),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("obs_rel_mse", self.obs_rel_mse),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if let Some(s) = self.echo_noise {
            if !(s > 0.0) {
                return bad("echo_noise must be positive");
            }
        }
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = SimConfig::default();
        cfg.power_budget = 0.123456789;
        cfg.echo_noise = Some(2.5e-9);
        cfg.theta_mode = ThetaMode::Crlb;
        let back = SimConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn parses_sections_and_comments() {
        let text = "# test\n[array]\nn_tx = 16 # fewer\n\n[objective]\npower_budget=2\n";
        let cfg = SimConfig::from_kv_str(text).unwrap();
        assert_eq!(cfg.n_tx, 16);
        assert_eq!(cfg.power_budget, 2.0);
        assert_eq!(cfg.n_rx, 32);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = SimConfig::from_kv_str("n_antennas = 3").unwrap_err();
        assert!(matches!(err, Error::UnknownKey(k) if k == "n_antennas"));
    }

    #[test]
    fn bad_line_reports_position() {
        let err = SimConfig::from_kv_str("[array]\nn_tx 32").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 2, .. }));
    }

    #[test]
    fn overrides_validate() {
        let mut cfg = SimConfig::default();
        cfg.apply_overrides(&["v_min=9", "v_max=9.5"]).unwrap();
        assert_eq!(cfg.v_min, 9.0);
        assert!(cfg.apply_overrides(&["v_max=1"]).is_err());
        assert!(cfg.apply_overrides(&["n_vehicles=0"]).is_err());
        assert!(cfg.apply_overrides(&["nonsense"]).is_err());
    }

    #[test]
    fn default_echo_noise_is_filter_scaled() {
        let cfg = SimConfig::default();
        assert!((cfg.echo_noise_var() - 1e-10).abs() < 1e-24);
        assert_eq!(cfg.array_gain(), 32.0);
    }
}
