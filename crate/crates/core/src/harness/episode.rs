//! One episode of the two-stage slot protocol.
//!
//! Slot `n` applies the beams decided at the end of slot `n − 1`, scores
//! them against the true channels, senses every vehicle with its beam,
//! appends the estimated channels to the history, moves the vehicles and
//! finally decides the beams for slot `n + 1`. The first `τ` slots use
//! random beams while the history fills up.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::baselines::{genie_beamformer, naive_dl_beamformer, random_beamformer, NaiveNet};
use crate::channel::{effective_channel, inner, sum_rate, BeamformingMatrix, ChannelMatrix};
use crate::config::SimConfig;
use crate::error::Result;
use crate::kinematics::{anchor, derive_geometry, init_vehicles, step_motion, VehicleState};
use crate::nn::hcl::{project_power, HclNet};
use crate::nn::window::HistoryWindow;
use crate::rng::{stream, Purpose, SimRng};
use crate::sensing::{fisher_information, generate_observation, ObservationRecord};

/// Bit set in the stream index of the beam-randomness stream.
const BEAM_STREAM_BIT: u64 = 1 << 31;

/// A beamforming policy under evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Method<'a> {
    Genie,
    Hcl { net: &'a HclNet, project: bool },
    NaiveDl { net: &'a NaiveNet, project: bool },
    Random,
}

impl Method<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Genie => "genie",
            Method::Hcl { .. } => "hcl_net",
            Method::NaiveDl { .. } => "naive_dl",
            Method::Random => "random",
        }
    }
}

/// Independent streams for the physical scenario and for beam randomness,
/// so every method sees the same trajectories and sensing noise draws.
pub struct EpisodeRngs {
    pub scenario: SimRng,
    pub beams: SimRng,
}

impl EpisodeRngs {
    pub fn new(seed: u64, purpose: Purpose, index: u64) -> Self {
        Self {
            scenario: stream(seed, purpose, index),
            beams: stream(seed, purpose, index | BEAM_STREAM_BIT),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub states: Vec<VehicleState>,
    pub w: BeamformingMatrix,
    /// Slot at whose end `w` was decided; `None` for beams drawn at the
    /// start of this slot (random policy and warm-up).
    pub decided_at: Option<usize>,
    /// Newest slot whose measurements fed the decision.
    pub inputs_upto: Option<usize>,
    pub warmup: bool,
    pub observations: Vec<Option<ObservationRecord>>,
    pub est_thetas: Vec<f64>,
    pub est_dists: Vec<f64>,
    pub est_channels: ChannelMatrix,
    pub user_rates: Vec<f64>,
    pub sum_rate: f64,
    pub crlb_theta: Vec<f64>,
    pub crlb_d: Vec<f64>,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub method: String,
    pub slots: Vec<SlotRecord>,
}

impl EpisodeTrace {
    /// Slots after the warm-up, or every slot when the episode is all warm-up.
    pub fn scored_slots(&self) -> &[SlotRecord] {
        let first = self.slots.iter().position(|s| !s.warmup).unwrap_or(0);
        &self.slots[first..]
    }

    pub fn mean_rate(&self) -> f64 {
        mean(self.scored_slots().iter().map(|s| s.sum_rate))
    }

    pub fn mean_crlb_theta(&self) -> f64 {
        mean(self.scored_slots().iter().flat_map(|s| s.crlb_theta.iter().copied()))
    }

    pub fn mean_crlb_d(&self) -> f64 {
        mean(self.scored_slots().iter().flat_map(|s| s.crlb_d.iter().copied()))
    }

    pub fn mean_power(&self) -> f64 {
        mean(self.scored_slots().iter().map(|s| s.power))
    }

    /// Every applied beam depends only on data from earlier slots.
    pub fn is_causal(&self) -> bool {
        self.slots.iter().all(|s| {
            s.decided_at.is_none_or(|d| d < s.slot) && s.inputs_upto.is_none_or(|i| i < s.slot)
        })
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// The last `τ` estimated channels plus their estimates.
struct History {
    tau: usize,
    slots: VecDeque<(ChannelMatrix, Vec<f64>, Vec<f64>)>,
}

impl History {
    fn push(&mut self, h: ChannelMatrix, t: Vec<f64>, d: Vec<f64>) {
        if self.slots.len() == self.tau {
            self.slots.pop_front();
        }
        self.slots.push_back((h, t, d));
    }

    fn window(&self) -> Option<HistoryWindow> {
        (self.slots.len() == self.tau).then(|| HistoryWindow {
            slots: self.slots.iter().map(|s| s.0.clone()).collect(),
            est_thetas: self.slots.iter().map(|s| s.1.clone()).collect(),
            est_dists: self.slots.iter().map(|s| s.2.clone()).collect(),
        })
    }
}

pub fn channel_matrix(states: &[VehicleState], config: &SimConfig) -> Result<ChannelMatrix> {
    ChannelMatrix::from_columns(
        states
            .iter()
            .map(|s| effective_channel(s.theta, s.dist, config))
            .collect::<Result<_>>()?,
    )
}

struct Decision {
    w: BeamformingMatrix,
    decided_at: usize,
    inputs_upto: usize,
}

fn decide(
    method: &Method<'_>,
    window: &HistoryWindow,
    next_states: &[VehicleState],
    config: &SimConfig,
) -> Result<Option<BeamformingMatrix>> {
    Ok(match method {
        Method::Random => None,
        Method::Genie => Some(genie_beamformer(next_states, config)),
        Method::Hcl { net, project } => Some(net.predict(window, config.power_budget, *project)?),
        Method::NaiveDl { net, project } => {
            let mut w = naive_dl_beamformer(window, net)?;
            if *project {
                project_power(&mut w, config.power_budget);
            }
            Some(w)
        }
    })
}

/// Simulates `config.n_slots` slots under `method`.
///
/// A vehicle whose beam gives no usable echo keeps its previous estimate;
/// before the first observation the nominal anchor geometry stands in.
pub fn run_episode(config: &SimConfig, method: Method<'_>, rngs: &mut EpisodeRngs) -> Result<EpisodeTrace> {
    let k_n = config.n_vehicles;
    let tau = config.history_len;
    let mut states = init_vehicles(config, &mut rngs.scenario)?;
    let mut last_est: Vec<(f64, f64)> = (0..k_n)
        .map(|k| {
            let (x, y) = anchor(k, config);
            derive_geometry(x, y, 0.0).map(|(t, d, _)| (t, d))
        })
        .collect::<Result<_>>()?;
    let mut history = History {
        tau,
        slots: VecDeque::with_capacity(tau),
    };
    let mut pending: Option<Decision> = None;
    let mut slots = Vec::with_capacity(config.n_slots);
    let is_genie = matches!(method, Method::Genie);

    for n in 0..config.n_slots {
        let warmup = n < tau;
        let (w, decided_at, inputs_upto) = match pending.take() {
            Some(d) => (d.w, Some(d.decided_at), Some(d.inputs_upto)),
            None => (random_beamformer(config, &mut rngs.beams), None, None),
        };

        let h = channel_matrix(&states, config)?;
        let user_rates: Vec<f64> = if is_genie && !warmup {
            // The bound ignores multi-user interference.
            (0..k_n)
                .map(|k| (1.0 + inner(h.column(k), w.column(k)).norm_sqr() / config.noise_vehicle).log2())
                .collect()
        } else {
            (0..k_n)
                .map(|k| (1.0 + crate::channel::sinr(h.column(k), &w, k, config.noise_vehicle)).log2())
                .collect()
        };
        let rate = if is_genie && !warmup {
            user_rates.iter().sum()
        } else {
            sum_rate(&h, &w, config.noise_vehicle)
        };

        let mut crlb_theta = Vec::with_capacity(k_n);
        let mut crlb_d = Vec::with_capacity(k_n);
        let mut observations = Vec::with_capacity(k_n);
        for (k, s) in states.iter().enumerate() {
            let fi = fisher_information(s, w.column(k), config)?;
            crlb_theta.push(fi.crlb_theta);
            crlb_d.push(fi.crlb_d);
            let obs = generate_observation(s, w.column(k), config, &mut rngs.scenario, config.theta_mode)?;
            // A non-positive range estimate (possible when the beam barely
            // illuminates the vehicle) counts as a missed detection.
            if let Some(o) = obs.filter(|o| o.d_hat > 0.0 && o.d_hat.is_finite() && o.theta_hat.is_finite()) {
                last_est[k] = (o.theta_hat, o.d_hat);
            }
            observations.push(obs);
        }
        let est_thetas: Vec<f64> = last_est.iter().map(|e| e.0).collect();
        let est_dists: Vec<f64> = last_est.iter().map(|e| e.1).collect();
        let est_channels = ChannelMatrix::from_columns(
            last_est
                .iter()
                .map(|&(t, d)| effective_channel(t, d, config))
                .collect::<Result<_>>()?,
        )?;
        history.push(est_channels.clone(), est_thetas.clone(), est_dists.clone());

        let next_states: Vec<VehicleState> = states
            .iter()
            .map(|s| step_motion(s, config, &mut rngs.scenario))
            .collect::<Result<_>>()?;

        if n + 1 < config.n_slots && n + 1 >= tau {
            if let Some(window) = history.window() {
                if let Some(w_next) = decide(&method, &window, &next_states, config)? {
                    pending = Some(Decision {
                        w: w_next,
                        decided_at: n,
                        inputs_upto: n,
                    });
                }
            }
        }

        slots.push(SlotRecord {
            slot: n,
            power: w.frob_norm_sq(),
            states,
            w,
            decided_at,
            inputs_upto,
            warmup,
            observations,
            est_thetas,
            est_dists,
            est_channels,
            user_rates,
            sum_rate: rate,
            crlb_theta,
            crlb_d,
        });
        states = next_states;
    }
    Ok(EpisodeTrace {
        method: method.name().to_string(),
        slots,
    })
}
