//! The historical-channels convolutional LSTM network.
//!
//! Per time step every vehicle's `M × 2` channel slice is reshaped to a
//! `4 × (M/4)` map with two planes (real, imaginary), convolved by 4 shared
//! `3 × 3 × 2` filters ("same" zero padding, ReLU) and max-pooled `2 × 2`
//! with stride 2, giving `M` features. The `K` feature vectors are
//! concatenated and fed oldest-to-newest through an LSTM with 64 hidden
//! units; a linear layer maps the final hidden state to `K × M × 2` reals,
//! the real and imaginary parts of the beamforming matrix.

use std::ops::Range;

use rand::RngCore;

use crate::channel::{BeamformingMatrix, C64};
use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::nn::window::{map_input, HistoryWindow};
use crate::rng::uniform;

pub const CONV_FILTERS: usize = 4;
pub const CONV_KERNEL: usize = 3;
pub const MAP_ROWS: usize = 4;
pub const LSTM_HIDDEN: usize = 64;
/// Gate order inside every `4H` block.
pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_OUTPUT: usize = 2;
pub const GATE_CELL: usize = 3;

/// Problem dimensions that fix every layer shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HclShape {
    pub k: usize,
    pub m: usize,
    pub tau: usize,
    pub hidden: usize,
}

impl HclShape {
    pub fn new(k: usize, m: usize, tau: usize) -> Result<Self> {
        if k == 0 || tau == 0 {
            return Err(Error::Shape("K and τ must be >= 1".into()));
        }
        if m < 8 || !m.is_multiple_of(8) {
            return Err(Error::Shape(format!(
                "the CNN reshape needs M divisible by 8, got M = {m}"
            )));
        }
        Ok(Self {
            k,
            m,
            tau,
            hidden: LSTM_HIDDEN,
        })
    }

    pub fn map_cols(&self) -> usize {
        self.m / MAP_ROWS
    }

    /// Length of one vehicle's flattened CNN output.
    pub fn cnn_out(&self) -> usize {
        CONV_FILTERS * (MAP_ROWS / 2) * (self.map_cols() / 2)
    }

    pub fn lstm_in(&self) -> usize {
        self.k * self.cnn_out()
    }

    pub fn fc_out(&self) -> usize {
        2 * self.k * self.m
    }

    pub fn layout(&self) -> ParamLayout {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let g = 4 * self.hidden;
        let conv_w = take(CONV_FILTERS * CONV_KERNEL * CONV_KERNEL * 2);
        let conv_b = take(CONV_FILTERS);
        let w_ih = take(g * self.lstm_in());
        let w_hh = take(g * self.hidden);
        let b_lstm = take(g);
        let fc_w = take(self.fc_out() * self.hidden);
        let fc_b = take(self.fc_out());
        ParamLayout {
            conv_w,
            conv_b,
            w_ih,
            w_hh,
            b_lstm,
            fc_w,
            fc_b,
            total: at,
        }
    }
}

/// Offsets of each layer inside the flat parameter vector.
///
/// * `conv_w`: `[filter][dr][dc][plane]`
/// * `w_ih`: `[gate·H + j][input]`, `w_hh`: `[gate·H + j][hidden]`
/// * `fc_w`: `[output][hidden]`, outputs ordered `[k][m][re|im]`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub conv_w: Range<usize>,
    pub conv_b: Range<usize>,
    pub w_ih: Range<usize>,
    pub w_hh: Range<usize>,
    pub b_lstm: Range<usize>,
    pub fc_w: Range<usize>,
    pub fc_b: Range<usize>,
    pub total: usize,
}

/// All trainable weights as one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub shape: HclShape,
    pub layout: ParamLayout,
    pub flat: Vec<f64>,
}

fn glorot<R: RngCore>(rng: &mut R, out: &mut [f64], fan_in: usize, fan_out: usize) {
    let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
    out.iter_mut().for_each(|x| *x = uniform(rng, -lim, lim));
}

impl NetworkParams {
    pub fn zeros(shape: HclShape) -> Self {
        let layout = shape.layout();
        Self {
            flat: vec![0.0; layout.total],
            shape,
            layout,
        }
    }

    /// Glorot-uniform weights, zero biases, forget-gate bias +1.
    pub fn init<R: RngCore>(shape: HclShape, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        let l = p.layout.clone();
        let h = shape.hidden;
        glorot(rng, &mut p.flat[l.conv_w.clone()], CONV_KERNEL * CONV_KERNEL * 2, CONV_KERNEL * CONV_KERNEL * CONV_FILTERS);
        glorot(rng, &mut p.flat[l.w_ih.clone()], shape.lstm_in(), h);
        glorot(rng, &mut p.flat[l.w_hh.clone()], h, h);
        glorot(rng, &mut p.flat[l.fc_w.clone()], h, shape.fc_out());
        let b = &mut p.flat[l.b_lstm];
        b[GATE_FORGET * h..(GATE_FORGET + 1) * h].fill(1.0);
        p
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn from_flat(shape: HclShape, flat: Vec<f64>) -> Result<Self> {
        let layout = shape.layout();
        if flat.len() != layout.total {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, shape needs {}",
                flat.len(),
                layout.total
            )));
        }
        Ok(Self {
            shape,
            layout,
            flat,
        })
    }

    fn slice(&self, r: &Range<usize>) -> &[f64] {
        &self.flat[r.clone()]
    }
}

// ── CNN ──────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct CnnCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    argmax: Vec<usize>,
    pub out: Vec<f64>,
}

/// Input value of plane `c` at map position `(r, col)`; zero outside.
#[inline]
fn map_at(x: &[f64], cols: usize, r: isize, col: isize, c: usize) -> f64 {
    if r < 0 || col < 0 || r >= MAP_ROWS as isize || col >= cols as isize {
        0.0
    } else {
        x[(r as usize * cols + col as usize) * 2 + c]
    }
}

fn cnn_forward_cached(x: &[f64], p: &NetworkParams) -> CnnCache {
    let shape = p.shape;
    let cols = shape.map_cols();
    let w = p.slice(&p.layout.conv_w);
    let b = p.slice(&p.layout.conv_b);
    let mut pre = vec![0.0; CONV_FILTERS * MAP_ROWS * cols];
    for f in 0..CONV_FILTERS {
        for r in 0..MAP_ROWS {
            for col in 0..cols {
                let mut acc = b[f];
                for dr in 0..CONV_KERNEL {
                    for dc in 0..CONV_KERNEL {
                        let rr = r as isize + dr as isize - 1;
                        let cc = col as isize + dc as isize - 1;
                        for c in 0..2 {
                            acc += w[((f * CONV_KERNEL + dr) * CONV_KERNEL + dc) * 2 + c]
                                * map_at(x, cols, rr, cc, c);
                        }
                    }
                }
                pre[(f * MAP_ROWS + r) * cols + col] = acc;
            }
        }
    }
    let (pr, pc) = (MAP_ROWS / 2, cols / 2);
    let mut out = Vec::with_capacity(CONV_FILTERS * pr * pc);
    let mut argmax = Vec::with_capacity(out.capacity());
    for f in 0..CONV_FILTERS {
        for i in 0..pr {
            for j in 0..pc {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let idx = (f * MAP_ROWS + 2 * i + di) * cols + 2 * j + dj;
                    let a = pre[idx].max(0.0);
                    if a > best {
                        best = a;
                        best_idx = idx;
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    CnnCache {
        input: x.to_vec(),
        pre,
        argmax,
        out,
    }
}

fn cnn_backward(cache: &CnnCache, d_out: &[f64], p: &NetworkParams, grad: &mut [f64]) {
    let cols = p.shape.map_cols();
    let mut d_pre = vec![0.0; cache.pre.len()];
    for (&idx, &d) in cache.argmax.iter().zip(d_out) {
        if cache.pre[idx] > 0.0 {
            d_pre[idx] += d;
        }
    }
    let (w_range, b_range) = (p.layout.conv_w.clone(), p.layout.conv_b.clone());
    for f in 0..CONV_FILTERS {
        for r in 0..MAP_ROWS {
            for col in 0..cols {
                let d = d_pre[(f * MAP_ROWS + r) * cols + col];
                if d == 0.0 {
                    continue;
                }
                grad[b_range.start + f] += d;
                for dr in 0..CONV_KERNEL {
                    for dc in 0..CONV_KERNEL {
                        let rr = r as isize + dr as isize - 1;
                        let cc = col as isize + dc as isize - 1;
                        for c in 0..2 {
                            grad[w_range.start + ((f * CONV_KERNEL + dr) * CONV_KERNEL + dc) * 2 + c] +=
                                d * map_at(&cache.input, cols, rr, cc, c);
                        }
                    }
                }
            }
        }
    }
}

/// One vehicle's `M × 2` slice through conv, ReLU, pooling and flatten.
pub fn cnn_forward(slice: &Tensor, params: &NetworkParams) -> Result<Tensor> {
    let m = params.shape.m;
    if slice.shape() != [m, 2] {
        return Err(Error::Shape(format!(
            "CNN expects a {m}×2 slice, got {:?}",
            slice.shape()
        )));
    }
    let c = cnn_forward_cached(slice.data(), params);
    Tensor::new(vec![c.out.len()], c.out)
}

// ── LSTM ─────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct LstmCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `[i | f | o | g]`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn lstm_forward_cached(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &NetworkParams) -> LstmCache {
    let h = p.shape.hidden;
    let mut z = p.slice(&p.layout.b_lstm).to_vec();
    matvec_acc(p.slice(&p.layout.w_ih), x, &mut z);
    matvec_acc(p.slice(&p.layout.w_hh), h_prev, &mut z);
    for (idx, v) in z.iter_mut().enumerate() {
        *v = if idx / h == GATE_CELL { v.tanh() } else { sigmoid(*v) };
    }
    let mut c = vec![0.0; h];
    let mut tanh_c = vec![0.0; h];
    let mut hn = vec![0.0; h];
    for j in 0..h {
        let (i, f, o, g) = (
            z[GATE_INPUT * h + j],
            z[GATE_FORGET * h + j],
            z[GATE_OUTPUT * h + j],
            z[GATE_CELL * h + j],
        );
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        hn[j] = o * tanh_c[j];
    }
    LstmCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates: z,
        tanh_c,
        h: hn,
        c,
    }
}

/// Backward through one step. Returns `(dx, dh_prev, dc_prev)`.
fn lstm_backward(
    cache: &LstmCache,
    dh: &[f64],
    dc_next: &[f64],
    p: &NetworkParams,
    grad: &mut [f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = p.shape.hidden;
    let n_in = cache.x.len();
    let z = &cache.gates;
    let mut dz = vec![0.0; 4 * h];
    let mut dc_prev = vec![0.0; h];
    for j in 0..h {
        let (i, f, o, g) = (
            z[GATE_INPUT * h + j],
            z[GATE_FORGET * h + j],
            z[GATE_OUTPUT * h + j],
            z[GATE_CELL * h + j],
        );
        let tc = cache.tanh_c[j];
        let d_o = dh[j] * tc;
        let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
        dz[GATE_INPUT * h + j] = dc * g * i * (1.0 - i);
        dz[GATE_FORGET * h + j] = dc * cache.c_prev[j] * f * (1.0 - f);
        dz[GATE_OUTPUT * h + j] = d_o * o * (1.0 - o);
        dz[GATE_CELL * h + j] = dc * i * (1.0 - g * g);
        dc_prev[j] = dc * f;
    }
    let l = &p.layout;
    let mut dx = vec![0.0; n_in];
    let mut dh_prev = vec![0.0; h];
    let w_ih = p.slice(&l.w_ih);
    let w_hh = p.slice(&l.w_hh);
    for (row, &d) in dz.iter().enumerate() {
        grad[l.b_lstm.start + row] += d;
        if d == 0.0 {
            continue;
        }
        let gi = &mut grad[l.w_ih.start + row * n_in..l.w_ih.start + (row + 1) * n_in];
        for ((gw, &xv), (&w, dxv)) in gi.iter_mut().zip(&cache.x).zip(w_ih[row * n_in..].iter().zip(dx.iter_mut())) {
            *gw += d * xv;
            *dxv += d * w;
        }
        let gh = &mut grad[l.w_hh.start + row * h..l.w_hh.start + (row + 1) * h];
        for ((gw, &hv), (&w, dhv)) in gh.iter_mut().zip(&cache.h_prev).zip(w_hh[row * h..].iter().zip(dh_prev.iter_mut())) {
            *gw += d * hv;
            *dhv += d * w;
        }
    }
    (dx, dh_prev, dc_prev)
}

/// One LSTM step on tensors of width `K·M` (input) and `H` (state).
pub fn lstm_step(x: &Tensor, h_prev: &Tensor, c_prev: &Tensor, params: &NetworkParams) -> Result<(Tensor, Tensor)> {
    let s = params.shape;
    if x.len() != s.lstm_in() || h_prev.len() != s.hidden || c_prev.len() != s.hidden {
        return Err(Error::Shape(format!(
            "LSTM expects input {} and state {}",
            s.lstm_in(),
            s.hidden
        )));
    }
    let c = lstm_forward_cached(x.data(), h_prev.data(), c_prev.data(), params);
    Ok((Tensor::new(vec![s.hidden], c.h)?, Tensor::new(vec![s.hidden], c.c)?))
}

// ── Whole network ────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct HclCache {
    cnn: Vec<CnnCache>,
    lstm: Vec<LstmCache>,
    pub output: Vec<f64>,
}

/// The trained model: parameters plus the input scale `κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HclNet {
    pub params: NetworkParams,
    pub kappa: f64,
}

/// `F(·)`: `K × M × 2` reals to the `M × K` complex beamforming matrix.
pub fn output_to_beams(y: &[f64], k: usize, m: usize) -> BeamformingMatrix {
    let mut w = BeamformingMatrix::zeros(m, k);
    for ki in 0..k {
        for (mi, z) in w.column_mut(ki).iter_mut().enumerate() {
            let o = (ki * m + mi) * 2;
            *z = C64::new(y[o], y[o + 1]);
        }
    }
    w
}

/// Inverse of [`output_to_beams`] for adjoints.
pub fn beams_to_output(w: &BeamformingMatrix) -> Vec<f64> {
    w.as_slice().iter().flat_map(|z| [z.re, z.im]).collect()
}

impl HclNet {
    pub fn new(params: NetworkParams, kappa: f64) -> Self {
        Self { params, kappa }
    }

    pub fn shape(&self) -> HclShape {
        self.params.shape
    }

    /// Forward pass on an already mapped `τ × K × M × 2` input.
    pub fn forward_tensor(&self, input: &Tensor) -> Result<HclCache> {
        let s = self.params.shape;
        if input.shape() != [s.tau, s.k, s.m, 2] {
            return Err(Error::Shape(format!(
                "network expects {}×{}×{}×2 input, got {:?}",
                s.tau,
                s.k,
                s.m,
                input.shape()
            )));
        }
        let p = &self.params;
        let slice_len = s.m * 2;
        let mut cnn = Vec::with_capacity(s.tau * s.k);
        let mut lstm: Vec<LstmCache> = Vec::with_capacity(s.tau);
        let zero = vec![0.0; s.hidden];
        for t in 0..s.tau {
            let mut x = Vec::with_capacity(s.lstm_in());
            for k in 0..s.k {
                let o = (t * s.k + k) * slice_len;
                let c = cnn_forward_cached(&input.data()[o..o + slice_len], p);
                x.extend_from_slice(&c.out);
                cnn.push(c);
            }
            let (h_prev, c_prev) = lstm.last().map_or((&zero, &zero), |c| (&c.h, &c.c));
            let step = lstm_forward_cached(&x, h_prev, c_prev, p);
            lstm.push(step);
        }
        let h_last = &lstm.last().expect("τ >= 1").h;
        let mut output = p.slice(&p.layout.fc_b).to_vec();
        matvec_acc(p.slice(&p.layout.fc_w), h_last, &mut output);
        Ok(HclCache { cnn, lstm, output })
    }

    pub fn forward_cached(&self, window: &HistoryWindow) -> Result<HclCache> {
        let s = self.params.shape;
        let input = map_input(window, s.tau, self.kappa)?;
        self.forward_tensor(&input)
    }

    pub fn forward(&self, window: &HistoryWindow) -> Result<BeamformingMatrix> {
        let s = self.params.shape;
        Ok(output_to_beams(&self.forward_cached(window)?.output, s.k, s.m))
    }

    /// Accumulate `∂J/∂ς` into `grad` given `∂J/∂W` packed like the output.
    pub fn backward(&self, cache: &HclCache, d_output: &[f64], grad: &mut [f64]) {
        let p = &self.params;
        let s = p.shape;
        let l = &p.layout;
        let h_last = &cache.lstm.last().expect("τ >= 1").h;
        let mut dh = vec![0.0; s.hidden];
        let fc_w = p.slice(&l.fc_w);
        for (o, &d) in d_output.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[l.fc_b.start + o] += d;
            let row = l.fc_w.start + o * s.hidden;
            for j in 0..s.hidden {
                grad[row + j] += d * h_last[j];
                dh[j] += d * fc_w[o * s.hidden + j];
            }
        }
        let mut dc = vec![0.0; s.hidden];
        let feat = s.cnn_out();
        for t in (0..s.tau).rev() {
            let (dx, dh_prev, dc_prev) = lstm_backward(&cache.lstm[t], &dh, &dc, p, grad);
            for k in 0..s.k {
                cnn_backward(&cache.cnn[t * s.k + k], &dx[k * feat..(k + 1) * feat], p, grad);
            }
            dh = dh_prev;
            dc = dc_prev;
        }
    }

    /// Output plus optional projection onto `‖W‖_F² ≤ P`.
    pub fn predict(&self, window: &HistoryWindow, power_budget: f64, project: bool) -> Result<BeamformingMatrix> {
        let mut w = self.forward(window)?;
        if project {
            project_power(&mut w, power_budget);
        }
        Ok(w)
    }
}

/// Rescale `W` onto the power ball when it exceeds the budget.
pub fn project_power(w: &mut BeamformingMatrix, power_budget: f64) {
    let p = w.frob_norm_sq();
    if p > power_budget {
        w.scale((power_budget / p).sqrt());
        // Rounding can leave the norm an ulp above the budget.
        while w.frob_norm_sq() > power_budget {
            w.scale(1.0 - f64::EPSILON);
        }
    }
}
