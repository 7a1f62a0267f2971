//! Offline training: initialization and mini-batch gradient descent.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::norm_sq;
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::nn::hcl::{output_to_beams, HclNet, HclShape, NetworkParams};
use crate::nn::loss::{try_loss_and_gradient, BeamNet};
use crate::nn::window::TrainingExample;
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Gradient descent with heavy-ball momentum (`momentum = 0` is plain GD).
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub batch_size: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub momentum: f64,
    /// Rescale the gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
    /// Final learning rate as a fraction of `lr`, reached by cosine decay.
    pub lr_floor: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            max_iters: 6000,
            seed: 42,
            optimizer: Optimizer::Adam,
            momentum: 0.9,
            clip_norm: Some(10.0),
            lr_floor: 0.05,
        }
    }
}

impl TrainHyper {
    pub fn lr_at(&self, iter: usize) -> f64 {
        if self.max_iters <= 1 {
            return self.lr;
        }
        let t = iter as f64 / (self.max_iters - 1) as f64;
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
        self.lr * (self.lr_floor + (1.0 - self.lr_floor) * cos)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    /// Batch loss before each update.
    pub loss_trace: Vec<f64>,
    /// Mean batch sum-rate before each update.
    pub rate_trace: Vec<f64>,
}

/// Optimizer state over a flat parameter vector.
struct Stepper {
    hyper: TrainHyper,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Stepper {
    fn new(hyper: TrainHyper, n: usize) -> Self {
        let v = match hyper.optimizer {
            Optimizer::Adam => vec![0.0; n],
            Optimizer::Sgd => Vec::new(),
        };
        Self {
            hyper,
            m: vec![0.0; n],
            v,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        match self.hyper.optimizer {
            Optimizer::Sgd => {
                let mu = self.hyper.momentum;
                for ((p, m), g) in params.iter_mut().zip(&mut self.m).zip(grad) {
                    *m = mu * *m + g;
                    *p -= lr * *m;
                }
            }
            Optimizer::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                let c1 = 1.0 - B1.powi(self.t);
                let c2 = 1.0 - B2.powi(self.t);
                for (((p, m), v), g) in params.iter_mut().zip(&mut self.m).zip(&mut self.v).zip(grad) {
                    *m = B1 * *m + (1.0 - B1) * g;
                    *v = B2 * *v + (1.0 - B2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                }
            }
        }
    }
}

/// Runs the descent loop on an already initialized network.
pub fn fit<N: BeamNet>(net: &mut N, dataset: &[TrainingExample], cfg: &SimConfig, hyper: &TrainHyper) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    if hyper.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be >= 1".into()));
    }
    let bs = hyper.batch_size.min(dataset.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut shuffle_rng = stream(hyper.seed, Purpose::Shuffle, 0);
    let mut cursor = dataset.len();
    let mut stepper = Stepper::new(*hyper, net.params().len());
    let mut report = TrainReport::default();
    for iter in 0..hyper.max_iters {
        if cursor + bs > dataset.len() {
            if bs < dataset.len() {
                order.shuffle(&mut shuffle_rng);
            }
            cursor = 0;
        }
        let batch: Vec<&TrainingExample> = order[cursor..cursor + bs].iter().map(|&i| &dataset[i]).collect();
        cursor += bs;
        let (loss, grad) = try_loss_and_gradient(net, &batch, cfg)?;
        let Some(mut grad) = grad else {
            return Err(Error::Diverged {
                iteration: iter,
                loss: loss.total,
                trace: report.loss_trace,
            });
        };
        report.loss_trace.push(loss.total);
        report.rate_trace.push(loss.rate);
        if let Some(clip) = hyper.clip_norm {
            let n = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if n > clip {
                grad.iter_mut().for_each(|g| *g *= clip / n);
            }
        }
        stepper.step(net.params_mut(), &grad, hyper.lr_at(iter));
        if net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                iteration: iter,
                loss: f64::NAN,
                trace: report.loss_trace,
            });
        }
    }
    Ok(report)
}

/// `κ = 1 / median ‖h̃‖` over every estimated channel column in the set.
pub fn input_scale(dataset: &[TrainingExample]) -> Result<f64> {
    let mut norms: Vec<f64> = dataset
        .iter()
        .flat_map(|ex| ex.history.slots.iter())
        .flat_map(|s| s.columns().map(|c| norm_sq(c).sqrt()).collect::<Vec<_>>())
        .collect();
    if norms.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    norms.sort_by(f64::total_cmp);
    let n = norms.len();
    let median = if n % 2 == 1 {
        norms[n / 2]
    } else {
        0.5 * (norms[n / 2 - 1] + norms[n / 2])
    };
    if !(median > 0.0 && median.is_finite()) {
        return Err(Error::NonFinite(format!("median channel norm is {median}")));
    }
    Ok(1.0 / median)
}

/// Examples used to calibrate the initial output scale.
const CALIBRATION_EXAMPLES: usize = 64;

/// Scales each output column so that, on average over the first examples of
/// the set, `‖w_k‖² = P/K` at initialization.
pub fn calibrate_output_scale<N: BeamNet>(net: &mut N, dataset: &[TrainingExample], power_budget: f64) -> Result<()> {
    let (k_n, m) = net.dims();
    let n = dataset.len().min(CALIBRATION_EXAMPLES);
    let mut col_power = vec![0.0; k_n];
    for ex in &dataset[..n] {
        let w = output_to_beams(&net.forward_packed(&ex.history)?.0, k_n, m);
        for (k, p) in col_power.iter_mut().enumerate() {
            *p += norm_sq(w.column(k)) / n as f64;
        }
    }
    let target = power_budget / k_n as f64;
    for (k, &p) in col_power.iter().enumerate() {
        if p > 0.0 {
            net.scale_output_column(k, (target / p).sqrt());
        }
    }
    Ok(())
}

/// Initializes an HCL-Net from `hyper.seed` and the data.
pub fn init_network(dataset: &[TrainingExample], cfg: &SimConfig, seed: u64) -> Result<HclNet> {
    let shape = HclShape::new(cfg.n_vehicles, cfg.n_tx, cfg.history_len)?;
    let mut rng = stream(seed, Purpose::Init, 0);
    let params = NetworkParams::init(shape, &mut rng);
    let mut net = HclNet::new(params, input_scale(dataset)?);
    calibrate_output_scale(&mut net, dataset, cfg.power_budget)?;
    Ok(net)
}

/// Initializes and trains an HCL-Net.
pub fn train(dataset: &[TrainingExample], cfg: &SimConfig, hyper: &TrainHyper) -> Result<(HclNet, TrainReport)> {
    let mut net = init_network(dataset, cfg, hyper.seed)?;
    let report = fit(&mut net, dataset, cfg, hyper)?;
    Ok((net, report))
}

/// Mean `‖W‖_F²` of a network's raw output over a set of examples.
pub fn mean_output_power<N: BeamNet>(net: &N, dataset: &[TrainingExample]) -> Result<f64> {
    let mut acc = 0.0;
    for ex in dataset {
        acc += net.forward_packed(&ex.history)?.0.iter().map(|x| x * x).sum::<f64>();
    }
    Ok(acc / dataset.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{effective_channel, ChannelMatrix};
    use crate::nn::loss::penalty_loss;
    use crate::nn::window::HistoryWindow;
    use crate::rng::{gaussian, uniform};

    fn dataset(n: usize, cfg: &SimConfig) -> Vec<TrainingExample> {
        let mut rng = stream(77, Purpose::Dataset, 0);
        (0..n)
            .map(|_| {
                let th: Vec<f64> = (0..cfg.n_vehicles).map(|_| uniform(&mut rng, 0.5, 1.1)).collect();
                let d: Vec<f64> = (0..cfg.n_vehicles).map(|_| uniform(&mut rng, 20.0, 40.0)).collect();
                let mk = |t: &[f64]| {
                    ChannelMatrix::from_columns(
                        t.iter().zip(&d).map(|(&t, &d)| effective_channel(t, d, cfg).unwrap()).collect(),
                    )
                    .unwrap()
                };
                let mut slots = Vec::new();
                let mut et = Vec::new();
                for _ in 0..cfg.history_len {
                    let t: Vec<f64> = th.iter().map(|t| t + 0.02 * gaussian(&mut rng)).collect();
                    slots.push(mk(&t));
                    et.push(t);
                }
                TrainingExample {
                    history: HistoryWindow {
                        slots,
                        est_thetas: et,
                        est_dists: vec![d.clone(); cfg.history_len],
                    },
                    true_channels: mk(&th),
                    true_thetas: th,
                    true_dists: d,
                }
            })
            .collect()
    }

    fn hyper(lr: f64, iters: usize) -> TrainHyper {
        TrainHyper {
            lr,
            batch_size: 8,
            max_iters: iters,
            seed: 5,
            optimizer: Optimizer::Sgd,
            momentum: 0.0,
            clip_norm: None,
            lr_floor: 1.0,
        }
    }

    #[test]
    fn full_batch_descent_reduces_loss() {
        let cfg = SimConfig::default();
        let data = dataset(8, &cfg);
        let (_, report) = train(&data, &cfg, &hyper(1e-4, 11)).unwrap();
        assert!(report.loss_trace[10] < report.loss_trace[0], "{:?}", report.loss_trace);
    }

    #[test]
    fn zero_learning_rate_freezes_everything() {
        let cfg = SimConfig::default();
        let data = dataset(8, &cfg);
        let init = init_network(&data, &cfg, 5).unwrap();
        let (net, report) = train(&data, &cfg, &hyper(0.0, 5)).unwrap();
        assert_eq!(net, init);
        assert!(report.loss_trace.iter().all(|&l| l == report.loss_trace[0]));
        let l = penalty_loss(&net, &data, &cfg).unwrap().total;
        assert_eq!(l, report.loss_trace[0]);
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = SimConfig::default();
        let data = dataset(12, &cfg);
        let mut h = hyper(1e-3, 6);
        h.batch_size = 4;
        h.optimizer = Optimizer::Adam;
        let (a, ra) = train(&data, &cfg, &h).unwrap();
        let (b, rb) = train(&data, &cfg, &h).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }

    #[test]
    fn calibrated_power_matches_budget() {
        let cfg = SimConfig::default();
        let data = dataset(16, &cfg);
        let net = init_network(&data, &cfg, 3).unwrap();
        let p = mean_output_power(&net, &data).unwrap();
        assert!((p - cfg.power_budget).abs() < 1e-9, "{p}");
    }

    #[test]
    fn input_scale_is_inverse_median() {
        let cfg = SimConfig::default();
        let data = dataset(3, &cfg);
        let mut norms: Vec<f64> = data
            .iter()
            .flat_map(|e| e.history.slots.iter().flat_map(|s| s.columns().map(|c| norm_sq(c).sqrt()).collect::<Vec<_>>()))
            .collect();
        norms.sort_by(f64::total_cmp);
        assert_eq!(norms.len(), 45);
        assert_eq!(input_scale(&data).unwrap(), 1.0 / norms[22]);
    }

    #[test]
    fn divergence_reports_trace() {
        let cfg = SimConfig::default();
        let data = dataset(8, &cfg);
        let err = train(&data, &cfg, &hyper(1e30, 5)).unwrap_err();
        match err {
            Error::Diverged { iteration, trace, .. } => {
                assert!(trace.len() == iteration || trace.len() == iteration + 1);
                assert!(trace.iter().all(|l| l.is_finite()));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let h = TrainHyper {
            lr: 2.0,
            max_iters: 11,
            lr_floor: 0.1,
            ..TrainHyper::default()
        };
        assert_eq!(h.lr_at(0), 2.0);
        assert!((h.lr_at(10) - 0.2).abs() < 1e-15);
        assert!((h.lr_at(5) - 1.1).abs() < 1e-12);
    }
}
