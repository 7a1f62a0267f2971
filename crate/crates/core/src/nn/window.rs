use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMatrix, C64};
use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// The last `τ` estimated channel matrices, oldest first, together with the
/// angle/distance estimates they were built from (`[slot][vehicle]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryWindow {
    pub slots: Vec<ChannelMatrix>,
    pub est_thetas: Vec<Vec<f64>>,
    pub est_dists: Vec<Vec<f64>>,
}

impl HistoryWindow {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// `(θ̃, d̃)` per vehicle from the newest slot.
    pub fn newest_estimates(&self) -> Option<(&[f64], &[f64])> {
        Some((self.est_thetas.last()?, self.est_dists.last()?))
    }

    /// Real tensor `τ × K × M × 2`: `[t, k, m, 0]` is `Re h̃`, `[.., 1]` is `Im h̃`.
    pub fn as_tensor(&self) -> Result<Tensor> {
        let tau = self.slots.len();
        let first = self
            .slots
            .first()
            .ok_or_else(|| Error::Shape("empty history window".into()))?;
        let (m, k) = (first.rows(), first.cols());
        let mut data = Vec::with_capacity(tau * k * m * 2);
        for slot in &self.slots {
            if slot.rows() != m || slot.cols() != k {
                return Err(Error::Shape("history slots of differing shape".into()));
            }
            for col in slot.columns() {
                for z in col {
                    data.push(z.re);
                    data.push(z.im);
                }
            }
        }
        Tensor::new(vec![tau, k, m, 2], data)
    }

    /// Inverse of [`HistoryWindow::as_tensor`] for the channel part.
    pub fn channels_from_tensor(t: &Tensor) -> Result<Vec<ChannelMatrix>> {
        let &[tau, k, m, 2] = t.shape() else {
            return Err(Error::Shape(format!("expected τ×K×M×2, got {:?}", t.shape())));
        };
        (0..tau)
            .map(|ti| {
                ChannelMatrix::from_columns(
                    (0..k)
                        .map(|ki| {
                            (0..m)
                                .map(|mi| C64::new(t.at(&[ti, ki, mi, 0]), t.at(&[ti, ki, mi, 1])))
                                .collect()
                        })
                        .collect(),
                )
            })
            .collect()
    }
}

/// One unlabeled training example: the estimated history and the true
/// geometry of the slot the beamformer is predicted for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub history: HistoryWindow,
    pub true_channels: ChannelMatrix,
    pub true_thetas: Vec<f64>,
    pub true_dists: Vec<f64>,
}

/// Network input: the window packed as `τ × K × M × 2` and scaled by `kappa`.
pub fn map_input(window: &HistoryWindow, tau: usize, kappa: f64) -> Result<Tensor> {
    if window.len() != tau {
        return Err(Error::Shape(format!(
            "history window has {} slots, expected {tau}",
            window.len()
        )));
    }
    let mut t = window.as_tensor()?;
    t.scale(kappa);
    Ok(t)
}
