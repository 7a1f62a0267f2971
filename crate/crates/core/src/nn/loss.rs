//! Penalty loss over a batch and its exact gradient.
//!
//! `J = −(1/N_b) Σ_i Σ_k log₂(1 + SINR_k⁽ⁱ⁾)
//!      + λ₁ relu(mean CRLB_θ − γ_θ)² + λ₂ relu(mean CRLB_d − γ_d)²
//!      + λ₃ (1/N_b) Σ_i relu(‖W⁽ⁱ⁾‖_F² − P)²`
//!
//! The CRLB means run over every (example, vehicle) pair of the batch and
//! are evaluated at the true geometry of the predicted slot. Each CRLB term
//! is clamped at `10⁶·γ`; an unobservable beam therefore contributes the
//! cap and no gradient.

use std::borrow::Borrow;

use rayon::prelude::*;

use crate::channel::{inner, BeamformingMatrix, ChannelMatrix, C64};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::nn::hcl::{beams_to_output, output_to_beams, HclCache, HclNet};
use crate::nn::window::{HistoryWindow, TrainingExample};
use crate::sensing::{crlb_d_grad, crlb_theta_grad};

/// Ratio between the CRLB clamp and the matching threshold.
pub const CRLB_CAP_FACTOR: f64 = 1e6;

/// Examples evaluated per work unit. Partial gradients are summed in chunk
/// order, so results do not depend on the thread count.
const CHUNK: usize = 4;

/// A network that maps a history window to a packed `K × M × 2` output and
/// can back-propagate an output adjoint into its flat parameters.
pub trait BeamNet: Sync {
    type Cache: Send + Sync;

    /// `(K, M)`.
    fn dims(&self) -> (usize, usize);
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn forward_packed(&self, window: &HistoryWindow) -> Result<(Vec<f64>, Self::Cache)>;
    fn backward_packed(&self, cache: &Self::Cache, d_output: &[f64], grad: &mut [f64]);
    /// Multiply every output entry of beam `k` by `s` (used to set the
    /// initial output power).
    fn scale_output_column(&mut self, k: usize, s: f64);
}

impl BeamNet for HclNet {
    type Cache = HclCache;

    fn dims(&self) -> (usize, usize) {
        (self.params.shape.k, self.params.shape.m)
    }

    fn params(&self) -> &[f64] {
        &self.params.flat
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params.flat
    }

    fn forward_packed(&self, window: &HistoryWindow) -> Result<(Vec<f64>, HclCache)> {
        let cache = self.forward_cached(window)?;
        Ok((cache.output.clone(), cache))
    }

    fn backward_packed(&self, cache: &HclCache, d_output: &[f64], grad: &mut [f64]) {
        self.backward(cache, d_output, grad)
    }

    fn scale_output_column(&mut self, k: usize, s: f64) {
        let shape = self.params.shape;
        let l = self.params.layout.clone();
        let h = shape.hidden;
        for o in (k * shape.m * 2)..((k + 1) * shape.m * 2) {
            self.params.flat[l.fc_w.start + o * h..l.fc_w.start + (o + 1) * h]
                .iter_mut()
                .for_each(|x| *x *= s);
            self.params.flat[l.fc_b.start + o] *= s;
        }
    }
}

/// The individual terms of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean sum-rate over the batch (bits/s/Hz), the negated first term.
    pub rate: f64,
    pub crlb_theta_mean: f64,
    pub crlb_d_mean: f64,
    /// Mean `‖W‖_F²`.
    pub power_mean: f64,
    pub penalty_theta: f64,
    pub penalty_d: f64,
    pub penalty_power: f64,
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Sum-rate and its gradient `2 ∂R/∂w̄`, laid out like `w` (column-major).
pub fn sum_rate_with_grad(h: &ChannelMatrix, w: &BeamformingMatrix, sigma2: f64) -> (f64, Vec<C64>) {
    let m = w.rows();
    // g[k][j] = h_k^H w_j
    let g: Vec<Vec<C64>> = h
        .columns()
        .map(|hk| w.columns().map(|wj| inner(hk, wj)).collect())
        .collect();
    let mut rate = 0.0;
    let mut grad = vec![C64::new(0.0, 0.0); m * w.cols()];
    for (k, gk) in g.iter().enumerate() {
        let total: f64 = gk.iter().map(|z| z.norm_sqr()).sum::<f64>() + sigma2;
        let rest = total - gk[k].norm_sqr();
        rate += (total / rest).log2();
        let hk = h.column(k);
        for (j, gkj) in gk.iter().enumerate() {
            let mut c = 2.0 / total;
            if j != k {
                c -= 2.0 / rest;
            }
            let coef = gkj * (c / std::f64::consts::LN_2);
            for (out, h) in grad[j * m..(j + 1) * m].iter_mut().zip(hk) {
                *out += h * coef;
            }
        }
    }
    (rate, grad)
}

/// A clamped CRLB term with its gradient when not clamped.
struct Clamped {
    value: f64,
    grad: Option<Vec<C64>>,
}

fn clamp(raw: Option<crate::sensing::CrlbGrad>, cap: f64) -> Clamped {
    match raw {
        Some(g) if g.value < cap => Clamped {
            value: g.value,
            grad: Some(g.grad),
        },
        _ => Clamped {
            value: cap,
            grad: None,
        },
    }
}

struct ExampleEval<C> {
    cache: C,
    rate: f64,
    rate_grad: Vec<C64>,
    w: BeamformingMatrix,
    power: f64,
    theta: Vec<Clamped>,
    dist: Vec<Clamped>,
}

fn eval_example<N: BeamNet>(net: &N, ex: &TrainingExample, cfg: &SimConfig) -> Result<ExampleEval<N::Cache>> {
    let (k, m) = net.dims();
    if ex.true_channels.cols() != k || ex.true_channels.rows() != m {
        return Err(Error::Shape(format!(
            "example channels are {}×{}, network expects {m}×{k}",
            ex.true_channels.rows(),
            ex.true_channels.cols()
        )));
    }
    let (y, cache) = net.forward_packed(&ex.history)?;
    let w = output_to_beams(&y, k, m);
    let (rate, rate_grad) = sum_rate_with_grad(&ex.true_channels, &w, cfg.noise_vehicle);
    let cap_t = CRLB_CAP_FACTOR * cfg.gamma_theta;
    let cap_d = CRLB_CAP_FACTOR * cfg.gamma_d;
    let mut theta = Vec::with_capacity(k);
    let mut dist = Vec::with_capacity(k);
    for ki in 0..k {
        let (t, d) = (ex.true_thetas[ki], ex.true_dists[ki]);
        theta.push(clamp(crlb_theta_grad(t, d, w.column(ki), cfg)?, cap_t));
        dist.push(clamp(crlb_d_grad(t, d, w.column(ki), cfg)?, cap_d));
    }
    Ok(ExampleEval {
        cache,
        rate,
        rate_grad,
        power: w.frob_norm_sq(),
        w,
        theta,
        dist,
    })
}

/// Hinge coefficients shared by every example of a batch.
struct BatchTerms {
    breakdown: LossBreakdown,
    /// `∂J/∂(mean CRLB)` divided by the number of CRLB terms.
    coef_theta: f64,
    coef_d: f64,
}

fn combine<C>(evals: &[ExampleEval<C>], cfg: &SimConfig) -> BatchTerms {
    let nb = evals.len() as f64;
    let n_terms = evals.iter().map(|e| e.theta.len()).sum::<usize>() as f64;
    let rate = evals.iter().map(|e| e.rate).sum::<f64>() / nb;
    let ct = evals.iter().flat_map(|e| &e.theta).map(|c| c.value).sum::<f64>() / n_terms;
    let cd = evals.iter().flat_map(|e| &e.dist).map(|c| c.value).sum::<f64>() / n_terms;
    let power_mean = evals.iter().map(|e| e.power).sum::<f64>() / nb;
    let et = relu(ct - cfg.gamma_theta);
    let ed = relu(cd - cfg.gamma_d);
    let penalty_theta = cfg.lambda1 * et * et;
    let penalty_d = cfg.lambda2 * ed * ed;
    let penalty_power = cfg.lambda3
        * evals
            .iter()
            .map(|e| relu(e.power - cfg.power_budget).powi(2))
            .sum::<f64>()
        / nb;
    BatchTerms {
        breakdown: LossBreakdown {
            total: -rate + penalty_theta + penalty_d + penalty_power,
            rate,
            crlb_theta_mean: ct,
            crlb_d_mean: cd,
            power_mean,
            penalty_theta,
            penalty_d,
            penalty_power,
        },
        coef_theta: 2.0 * cfg.lambda1 * et / n_terms,
        coef_d: 2.0 * cfg.lambda2 * ed / n_terms,
    }
}

/// `∂J/∂W` for one example, packed like the network output.
fn output_adjoint<C>(e: &ExampleEval<C>, terms: &BatchTerms, nb: f64, cfg: &SimConfig) -> Vec<f64> {
    let m = e.w.rows();
    let mut dw: Vec<C64> = e.rate_grad.iter().map(|g| -g / nb).collect();
    let excess = relu(e.power - cfg.power_budget);
    if excess > 0.0 {
        let c = cfg.lambda3 / nb * 2.0 * excess * 2.0;
        for (d, w) in dw.iter_mut().zip(e.w.as_slice()) {
            *d += w * c;
        }
    }
    for (k, (t, d)) in e.theta.iter().zip(&e.dist).enumerate() {
        for (c, g) in [(terms.coef_theta, &t.grad), (terms.coef_d, &d.grad)] {
            if let (true, Some(g)) = (c != 0.0, g) {
                for (out, gi) in dw[k * m..(k + 1) * m].iter_mut().zip(g) {
                    *out += gi * c;
                }
            }
        }
    }
    let mut packed = BeamformingMatrix::zeros(m, e.w.cols());
    packed.as_mut_slice().copy_from_slice(&dw);
    beams_to_output(&packed)
}

fn evaluate_all<N, B>(net: &N, batch: &[B], cfg: &SimConfig) -> Result<Vec<ExampleEval<N::Cache>>>
where
    N: BeamNet,
    B: Borrow<TrainingExample> + Sync,
{
    if batch.is_empty() {
        return Err(Error::InvalidConfig("loss needs a non-empty batch".into()));
    }
    batch
        .par_iter()
        .map(|ex| eval_example(net, ex.borrow(), cfg))
        .collect()
}

pub fn penalty_loss<N, B>(net: &N, batch: &[B], cfg: &SimConfig) -> Result<LossBreakdown>
where
    N: BeamNet,
    B: Borrow<TrainingExample> + Sync,
{
    let evals = evaluate_all(net, batch, cfg)?;
    Ok(combine(&evals, cfg).breakdown)
}

/// Loss and its gradient with respect to the flat parameter vector.
pub fn loss_and_gradient<N, B>(net: &N, batch: &[B], cfg: &SimConfig) -> Result<(LossBreakdown, Vec<f64>)>
where
    N: BeamNet,
    B: Borrow<TrainingExample> + Sync,
{
    match try_loss_and_gradient(net, batch, cfg)? {
        (l, Some(g)) => Ok((l, g)),
        (l, None) => Err(Error::NonFinite(format!("loss is {}", l.total))),
    }
}

/// Like [`loss_and_gradient`], but a non-finite loss yields `None` for the
/// gradient instead of an error.
pub(crate) fn try_loss_and_gradient<N, B>(
    net: &N,
    batch: &[B],
    cfg: &SimConfig,
) -> Result<(LossBreakdown, Option<Vec<f64>>)>
where
    N: BeamNet,
    B: Borrow<TrainingExample> + Sync,
{
    let evals = evaluate_all(net, batch, cfg)?;
    let terms = combine(&evals, cfg);
    if !terms.breakdown.total.is_finite() {
        return Ok((terms.breakdown, None));
    }
    let nb = evals.len() as f64;
    let n_params = net.params().len();
    let partials: Vec<Vec<f64>> = evals
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n_params];
            for e in chunk {
                let d = output_adjoint(e, &terms, nb, cfg);
                net.backward_packed(&e.cache, &d, &mut g);
            }
            g
        })
        .collect();
    let mut grad = vec![0.0; n_params];
    for p in &partials {
        grad.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    Ok((terms.breakdown, Some(grad)))
}

pub fn gradient<N, B>(net: &N, batch: &[B], cfg: &SimConfig) -> Result<Vec<f64>>
where
    N: BeamNet,
    B: Borrow<TrainingExample> + Sync,
{
    loss_and_gradient(net, batch, cfg).map(|(_, g)| g)
}
