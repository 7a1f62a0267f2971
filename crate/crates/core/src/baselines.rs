//! Comparison beamformers: the genie-aided upper bound, a naive fully
//! connected network fed with last-slot estimates, and random beams.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::channel::{path_loss_amp, steering, BeamformingMatrix, C64};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::kinematics::VehicleState;
use crate::nn::hcl::output_to_beams;
use crate::nn::loss::BeamNet;
use crate::nn::window::{HistoryWindow, TrainingExample};
use crate::nn::train::{calibrate_output_scale, fit, TrainHyper, TrainReport};
use crate::rng::{stream, uniform, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Genie,
    NaiveDl,
    Random,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Genie => "genie",
            BaselineKind::NaiveDl => "naive_dl",
            BaselineKind::Random => "random",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genie" => Ok(BaselineKind::Genie),
            "naive_dl" => Ok(BaselineKind::NaiveDl),
            "random" => Ok(BaselineKind::Random),
            _ => Err(Error::InvalidConfig(format!("unknown baseline `{s}`"))),
        }
    }
}

/// Interference-free rate with equal power split and perfectly aligned
/// beams: `Σ_k log₂(1 + (P/K) N_t α_k² / σ²)`.
pub fn genie_rate(true_states: &[VehicleState], config: &SimConfig) -> Result<f64> {
    let p_k = config.power_budget / true_states.len().max(1) as f64;
    true_states.iter().try_fold(0.0, |acc, s| {
        let alpha = path_loss_amp(s.dist, config)?;
        Ok(acc + (1.0 + p_k * config.n_tx as f64 * alpha * alpha / config.noise_vehicle).log2())
    })
}

/// `w_k = √(P/K) a(θ_k)` at the true angles.
pub fn genie_beamformer(true_states: &[VehicleState], config: &SimConfig) -> BeamformingMatrix {
    aligned_beams(true_states.iter().map(|s| s.theta), config)
}

fn aligned_beams(thetas: impl Iterator<Item = f64>, config: &SimConfig) -> BeamformingMatrix {
    let k = config.n_vehicles;
    let amp = (config.power_budget / k as f64).sqrt();
    let cols: Vec<Vec<C64>> = thetas
        .map(|t| steering(t, config.n_tx).into_iter().map(|z| z * amp).collect())
        .collect();
    let mut w = BeamformingMatrix::zeros(config.n_tx, cols.len());
    for (i, c) in cols.into_iter().enumerate() {
        w.column_mut(i).copy_from_slice(&c);
    }
    w
}

/// `w_k = √(P/K) a(θ_k)` with `θ_k ∼ U(0, π)`, one draw per vehicle.
pub fn random_beamformer<R: RngCore>(config: &SimConfig, rng: &mut R) -> BeamformingMatrix {
    let thetas: Vec<f64> = (0..config.n_vehicles)
        .map(|_| uniform(rng, 0.0, std::f64::consts::PI))
        .collect();
    aligned_beams(thetas.into_iter(), config)
}

pub const NAIVE_HIDDEN: usize = 128;

/// Per-feature affine normalization of the naive network's input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Flat layout: `w1 [H][2K]`, `b1`, `w2 [H][H]`, `b2`, `w3 [2KM][H]`, `b3`.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveNet {
    pub k: usize,
    pub m: usize,
    pub flat: Vec<f64>,
    /// Absent until fitted to a training set.
    pub norm: Option<InputNorm>,
}

pub struct NaiveCache {
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl NaiveNet {
    pub fn param_count(k: usize, m: usize) -> usize {
        let (i, h, o) = (2 * k, NAIVE_HIDDEN, 2 * k * m);
        h * i + h + h * h + h + o * h + o
    }

    pub fn zeros(k: usize, m: usize) -> Self {
        Self {
            k,
            m,
            flat: vec![0.0; Self::param_count(k, m)],
            norm: None,
        }
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init<R: RngCore>(k: usize, m: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(k, m);
        let (i, h, o) = (2 * k, NAIVE_HIDDEN, 2 * k * m);
        let mut at = 0;
        for (fan_in, fan_out) in [(i, h), (h, h), (h, o)] {
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in &mut net.flat[at..at + fan_in * fan_out] {
                *x = uniform(rng, -lim, lim);
            }
            at += fan_in * fan_out + fan_out;
        }
        net
    }

    fn offsets(&self) -> [usize; 6] {
        let (i, h, o) = (2 * self.k, NAIVE_HIDDEN, 2 * self.k * self.m);
        let w1 = 0;
        let b1 = w1 + h * i;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + o * h;
        [w1, b1, w2, b2, w3, b3]
    }

    /// Fits the input normalization to the newest estimates of a set.
    pub fn fit_norm(&mut self, dataset: &[TrainingExample]) -> Result<()> {
        let n = 2 * self.k;
        let rows: Vec<Vec<f64>> = dataset
            .iter()
            .map(|ex| raw_features(&ex.history, self.k))
            .collect::<Result<_>>()?;
        if rows.is_empty() {
            return Err(Error::InvalidConfig("training set is empty".into()));
        }
        let cnt = rows.len() as f64;
        let mut mean = vec![0.0; n];
        for r in &rows {
            mean.iter_mut().zip(r).for_each(|(m, x)| *m += x / cnt);
        }
        let mut std = vec![0.0; n];
        for r in &rows {
            std.iter_mut().zip(r).zip(&mean).for_each(|((s, x), m)| *s += (x - m).powi(2) / cnt);
        }
        std.iter_mut().for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });
        self.norm = Some(InputNorm { mean, std });
        Ok(())
    }

    fn input(&self, window: &HistoryWindow) -> Result<Vec<f64>> {
        let norm = self
            .norm
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("naive network is untrained".into()))?;
        let mut x = raw_features(window, self.k)?;
        for ((x, m), s) in x.iter_mut().zip(&norm.mean).zip(&norm.std) {
            *x = (*x - m) / s;
        }
        Ok(x)
    }
}

/// `[θ̃_1..θ̃_K, d̃_1..d̃_K]` from the newest slot.
fn raw_features(window: &HistoryWindow, k: usize) -> Result<Vec<f64>> {
    let (t, d) = window
        .newest_estimates()
        .ok_or_else(|| Error::Shape("empty history window".into()))?;
    if t.len() != k || d.len() != k {
        return Err(Error::Shape(format!("expected {k} estimates per slot")));
    }
    Ok(t.iter().chain(d).copied().collect())
}

fn dense(w: &[f64], b: &[f64], x: &[f64], relu: bool) -> Vec<f64> {
    b.iter()
        .zip(w.chunks_exact(x.len()))
        .map(|(b, row)| {
            let z = b + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            if relu {
                z.max(0.0)
            } else {
                z
            }
        })
        .collect()
}

/// Accumulates weight/bias gradients and returns the input adjoint.
fn dense_back(w: &[f64], x: &[f64], dz: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
    let n = x.len();
    let mut dx = vec![0.0; n];
    for (o, &d) in dz.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        gb[o] += d;
        let row = &w[o * n..(o + 1) * n];
        for ((g, xv), (wv, dxv)) in gw[o * n..(o + 1) * n].iter_mut().zip(x).zip(row.iter().zip(dx.iter_mut())) {
            *g += d * xv;
            *dxv += d * wv;
        }
    }
    dx
}

impl BeamNet for NaiveNet {
    type Cache = NaiveCache;

    fn dims(&self) -> (usize, usize) {
        (self.k, self.m)
    }

    fn params(&self) -> &[f64] {
        &self.flat
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    fn forward_packed(&self, window: &HistoryWindow) -> Result<(Vec<f64>, NaiveCache)> {
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let f = &self.flat;
        let x = self.input(window)?;
        let h1 = dense(&f[w1..b1], &f[b1..w2], &x, true);
        let h2 = dense(&f[w2..b2], &f[b2..w3], &h1, true);
        let y = dense(&f[w3..b3], &f[b3..], &h2, false);
        Ok((y, NaiveCache { x, h1, h2 }))
    }

    fn backward_packed(&self, cache: &NaiveCache, d_output: &[f64], grad: &mut [f64]) {
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let f = &self.flat;
        let (g12, g3) = grad.split_at_mut(w3);
        let (gw3, gb3) = g3.split_at_mut(b3 - w3);
        let mut d2 = dense_back(&f[w3..b3], &cache.h2, d_output, gw3, gb3);
        d2.iter_mut().zip(&cache.h2).for_each(|(d, h)| if *h <= 0.0 { *d = 0.0 });
        let (g1, g2) = g12.split_at_mut(w2);
        let (gw2, gb2) = g2.split_at_mut(b2 - w2);
        let mut d1 = dense_back(&f[w2..b2], &cache.h1, &d2, gw2, gb2);
        d1.iter_mut().zip(&cache.h1).for_each(|(d, h)| if *h <= 0.0 { *d = 0.0 });
        let (gw1, gb1) = g1.split_at_mut(b1 - w1);
        dense_back(&f[w1..b1], &cache.x, &d1, gw1, gb1);
    }

    fn scale_output_column(&mut self, k: usize, s: f64) {
        let [.., w3, b3] = self.offsets();
        let h = NAIVE_HIDDEN;
        for o in (k * self.m * 2)..((k + 1) * self.m * 2) {
            self.flat[w3 + o * h..w3 + (o + 1) * h].iter_mut().for_each(|x| *x *= s);
            self.flat[b3 + o] *= s;
        }
    }
}

/// Initializes, normalizes and trains the naive network with the same
/// penalty loss as the HCL-Net.
pub fn train_naive(dataset: &[TrainingExample], config: &SimConfig, hyper: &TrainHyper) -> Result<(NaiveNet, TrainReport)> {
    let mut rng = stream(hyper.seed, Purpose::Init, 1);
    let mut net = NaiveNet::init(config.n_vehicles, config.n_tx, &mut rng);
    net.fit_norm(dataset)?;
    calibrate_output_scale(&mut net, dataset, config.power_budget)?;
    let report = fit(&mut net, dataset, config, hyper)?;
    Ok((net, report))
}

/// Beams from the naive network given the newest `(θ̃, d̃)` estimates.
pub fn naive_dl_beamformer(window: &HistoryWindow, net: &NaiveNet) -> Result<BeamformingMatrix> {
    let (y, _) = net.forward_packed(window)?;
    Ok(output_to_beams(&y, net.k, net.m))
}
