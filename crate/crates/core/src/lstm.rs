//! Two-layer LSTM classifier trained from scratch with BPTT and Adam.
//!
//! Geometry is fixed: 96 inputs, two layers of 128 units, a dense head
//! over the final hidden state. Each layer keeps one fused weight matrix
//! of shape 4H×(D+H) acting on [x_t; h_{t−1}], gate blocks ordered
//! input, forget, cell, output.
//!
//! Training math runs in f64. Batch gradients are reduced pairwise, so a
//! batch with every window duplicated yields bit-identical mean gradients
//! (x+x and scaling by powers of two are exact in IEEE arithmetic).
//! Evaluation during training goes through a separate f32 path that
//! batches all windows into a handful of GEMMs per time step.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureWindow;

/// Feature columns per frame.
pub const INPUT_DIM: usize = 96;
/// Units per LSTM layer.
pub const HIDDEN_SIZE: usize = 128;
/// Gates per unit (input, forget, cell, output).
pub const NUM_GATES: usize = 4;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("label {label} out of range for {num_users} users")]
    LabelOutOfRange { label: u32, num_users: usize },
    #[error("window has {got} feature columns, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
}

/// Loss applied to the softmax head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// −ln p\[label\]; the default.
    CrossEntropy,
    /// Σ (p − onehot)² on the softmax probabilities.
    L2OneHot,
}

/// One fused LSTM layer: `w` is 4H×(D+H), `b` is 4H.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// The full classifier. `window_len` is carried as metadata so stored
/// models remember the window geometry they were trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub layer1: LayerParams,
    pub layer2: LayerParams,
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
    pub num_users: usize,
    pub input_dim: usize,
    pub hidden_size: usize,
    pub window_len: usize,
}

impl LstmModel {
    /// Glorot-uniform weights (r = √(6/(fan_in + fan_out))), zero biases
    /// except the forget gates, which start at 1 so early memory survives.
    #[must_use]
    pub fn new(num_users: usize, window_len: usize, seed: u64) -> LstmModel {
        assert!(num_users >= 2, "classification needs at least 2 users");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = HIDDEN_SIZE;
        let d = INPUT_DIM;

        let mut layer = |input_dim: usize| {
            let fan_in = input_dim + h;
            let fan_out = NUM_GATES * h;
            let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-r..r));
            let mut b = Array1::zeros(fan_out);
            b.slice_mut(s![h..2 * h]).fill(1.0);
            LayerParams { w, b }
        };
        let layer1 = layer(d);
        let layer2 = layer(h);

        let r = (6.0 / (h + num_users) as f64).sqrt();
        let dense_w = Array2::from_shape_fn((num_users, h), |_| rng.random_range(-r..r));
        let dense_b = Array1::zeros(num_users);

        LstmModel {
            layer1,
            layer2,
            dense_w,
            dense_b,
            num_users,
            input_dim: d,
            hidden_size: h,
            window_len,
        }
    }

    /// Total trainable parameters: 115 200 + 131 584 + 129·N.
    #[must_use]
    pub fn param_count(&self) -> usize {
        let h = self.hidden_size;
        let per_layer1 = NUM_GATES * h * (self.input_dim + h) + NUM_GATES * h;
        let per_layer2 = NUM_GATES * h * (h + h) + NUM_GATES * h;
        per_layer1 + per_layer2 + self.num_users * h + self.num_users
    }

    /// Logits for one window.
    ///
    /// # Errors
    ///
    /// `DimensionMismatch` unless the window has [`INPUT_DIM`] columns.
    pub fn forward(&self, window: ArrayView2<'_, f64>) -> Result<Array1<f64>, LstmError> {
        if window.ncols() != self.input_dim {
            return Err(LstmError::DimensionMismatch {
                expected: self.input_dim,
                got: window.ncols(),
            });
        }
        let c1 = forward_layer(&self.layer1, window);
        let c2 = forward_layer(&self.layer2, c1.h.view());
        let h_last = c2.h.row(c2.h.nrows() - 1);
        Ok(self.dense_w.dot(&h_last) + &self.dense_b)
    }

    /// Canonical flat order of the six tensors: layer1.w, layer1.b,
    /// layer2.w, layer2.b, dense.w, dense.b, each row-major.
    #[must_use]
    pub fn pack_f32(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.param_count());
        for t in self.tensors() {
            out.extend(t.iter().map(|&v| v as f32));
        }
        out
    }

    /// Rebuilds a model from [`pack_f32`](Self::pack_f32) output.
    #[must_use]
    pub fn unpack_f32(
        packed: &[f32],
        num_users: usize,
        window_len: usize,
    ) -> LstmModel {
        let mut model = LstmModel::new(num_users.max(2), window_len, 0);
        model.num_users = num_users;
        assert_eq!(packed.len(), model.param_count(), "packed length mismatch");
        let mut offset = 0;
        for t in model.tensors_mut() {
            for v in t {
                *v = f64::from(packed[offset]);
                offset += 1;
            }
        }
        model
    }

    /// The six tensors as flat slices, canonical order.
    #[must_use]
    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.layer1.w.as_slice().unwrap(),
            self.layer1.b.as_slice().unwrap(),
            self.layer2.w.as_slice().unwrap(),
            self.layer2.b.as_slice().unwrap(),
            self.dense_w.as_slice().unwrap(),
            self.dense_b.as_slice().unwrap(),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.layer1.w.as_slice_mut().unwrap(),
            self.layer1.b.as_slice_mut().unwrap(),
            self.layer2.w.as_slice_mut().unwrap(),
            self.layer2.b.as_slice_mut().unwrap(),
            self.dense_w.as_slice_mut().unwrap(),
            self.dense_b.as_slice_mut().unwrap(),
        ]
    }

    /// Reads one parameter by its flat index in canonical order.
    #[must_use]
    pub fn param_at(&self, index: usize) -> f64 {
        let mut rest = index;
        for t in self.tensors() {
            if rest < t.len() {
                return t[rest];
            }
            rest -= t.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Writes one parameter by its flat index in canonical order.
    pub fn set_param_at(&mut self, index: usize, value: f64) {
        let mut rest = index;
        for t in self.tensors_mut() {
            if rest < t.len() {
                t[rest] = value;
                return;
            }
            rest -= t.len();
        }
        panic!("parameter index {index} out of range");
    }
}

/// Numerically stable softmax (shift by the max).
#[must_use]
pub fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|z| (z - max).exp());
    let sum = exps.sum();
    exps / sum
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Everything the backward pass needs from one layer's forward sweep.
struct LayerCache {
    /// T×(D+H): concatenated [x_t ; h_{t−1}] rows.
    xh: Array2<f64>,
    /// T×4H activated gates (i, f, g, o blocks).
    gates: Array2<f64>,
    /// T×H cell states.
    c: Array2<f64>,
    /// T×H tanh of cell states.
    tanh_c: Array2<f64>,
    /// T×H hidden states (this layer's output sequence).
    h: Array2<f64>,
}

/// One layer's forward sweep. The input projection X·Wxᵀ runs as a single
/// GEMM; only the recurrent term is sequential.
fn forward_layer(params: &LayerParams, input: ArrayView2<'_, f64>) -> LayerCache {
    let t_len = input.nrows();
    let d = input.ncols();
    let h_dim = params.b.len() / NUM_GATES;

    let wx = params.w.slice(s![.., 0..d]);
    let wh = params.w.slice(s![.., d..d + h_dim]);
    let proj = input.dot(&wx.t()); // T×4H

    let mut xh = Array2::zeros((t_len, d + h_dim));
    let mut gates = Array2::zeros((t_len, NUM_GATES * h_dim));
    let mut c = Array2::zeros((t_len, h_dim));
    let mut tanh_c = Array2::zeros((t_len, h_dim));
    let mut h = Array2::zeros((t_len, h_dim));

    let mut h_prev = Array1::zeros(h_dim);
    let mut c_prev = Array1::<f64>::zeros(h_dim);
    for t in 0..t_len {
        xh.slice_mut(s![t, 0..d]).assign(&input.row(t));
        xh.slice_mut(s![t, d..]).assign(&h_prev);

        let mut z = &proj.row(t) + &wh.dot(&h_prev);
        z += &params.b;

        for u in 0..h_dim {
            let i = sigmoid(z[u]);
            let f = sigmoid(z[h_dim + u]);
            let g = z[2 * h_dim + u].tanh();
            let o = sigmoid(z[3 * h_dim + u]);
            let cu = f * c_prev[u] + i * g;
            let tc = cu.tanh();
            gates[[t, u]] = i;
            gates[[t, h_dim + u]] = f;
            gates[[t, 2 * h_dim + u]] = g;
            gates[[t, 3 * h_dim + u]] = o;
            c[[t, u]] = cu;
            tanh_c[[t, u]] = tc;
            h[[t, u]] = o * tc;
        }
        h_prev.assign(&h.row(t));
        c_prev.assign(&c.row(t));
    }

    LayerCache {
        xh,
        gates,
        c,
        tanh_c,
        h,
    }
}

/// Parameter gradients for one layer.
struct LayerGrads {
    dw: Array2<f64>,
    db: Array1<f64>,
}

/// BPTT through one layer given dL/dh at every step. Returns the layer's
/// parameter gradients and, when `need_dx`, dL/dx for the layer below.
/// Weight gradients collapse into one dZᵀ·XH GEMM after the time loop.
fn backward_layer(
    params: &LayerParams,
    cache: &LayerCache,
    dh_ext: &Array2<f64>,
    need_dx: bool,
) -> (LayerGrads, Option<Array2<f64>>) {
    let t_len = cache.h.nrows();
    let h_dim = cache.h.ncols();
    let d = cache.xh.ncols() - h_dim;
    let wh = params.w.slice(s![.., d..]);

    let mut dz_all = Array2::zeros((t_len, NUM_GATES * h_dim));
    let mut dh_next = Array1::zeros(h_dim);
    let mut dc_next = Array1::<f64>::zeros(h_dim);

    for t in (0..t_len).rev() {
        let mut dz_row = Array1::zeros(NUM_GATES * h_dim);
        for u in 0..h_dim {
            let i = cache.gates[[t, u]];
            let f = cache.gates[[t, h_dim + u]];
            let g = cache.gates[[t, 2 * h_dim + u]];
            let o = cache.gates[[t, 3 * h_dim + u]];
            let tc = cache.tanh_c[[t, u]];
            let c_prev = if t == 0 { 0.0 } else { cache.c[[t - 1, u]] };

            let dh = dh_ext[[t, u]] + dh_next[u];
            let d_o = dh * tc;
            let dc = dc_next[u] + dh * o * (1.0 - tc * tc);

            let di = dc * g;
            let df = dc * c_prev;
            let dg = dc * i;

            dz_row[u] = di * i * (1.0 - i);
            dz_row[h_dim + u] = df * f * (1.0 - f);
            dz_row[2 * h_dim + u] = dg * (1.0 - g * g);
            dz_row[3 * h_dim + u] = d_o * o * (1.0 - o);

            dc_next[u] = dc * f;
        }
        dh_next = wh.t().dot(&dz_row);
        dz_all.row_mut(t).assign(&dz_row);
    }

    let dw = dz_all.t().dot(&cache.xh);
    let db = dz_all.sum_axis(Axis(0));
    let dx = if need_dx {
        Some(dz_all.dot(&params.w.slice(s![.., 0..d])))
    } else {
        None
    };
    (LayerGrads { dw, db }, dx)
}

/// Gradients for every tensor, same shapes as the model.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
}

impl Gradients {
    fn zeros_like(model: &LstmModel) -> Gradients {
        Gradients {
            w1: Array2::zeros(model.layer1.w.dim()),
            b1: Array1::zeros(model.layer1.b.len()),
            w2: Array2::zeros(model.layer2.w.dim()),
            b2: Array1::zeros(model.layer2.b.len()),
            dense_w: Array2::zeros(model.dense_w.dim()),
            dense_b: Array1::zeros(model.dense_b.len()),
        }
    }

    fn add(mut self, other: &Gradients) -> Gradients {
        self.w1 += &other.w1;
        self.b1 += &other.b1;
        self.w2 += &other.w2;
        self.b2 += &other.b2;
        self.dense_w += &other.dense_w;
        self.dense_b += &other.dense_b;
        self
    }

    fn scale(&mut self, factor: f64) {
        self.w1 *= factor;
        self.b1 *= factor;
        self.w2 *= factor;
        self.b2 *= factor;
        self.dense_w *= factor;
        self.dense_b *= factor;
    }

    /// Reads one gradient component by flat index, canonical tensor order.
    #[must_use]
    pub fn at(&self, index: usize) -> f64 {
        let slices: [&[f64]; 6] = [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
            self.dense_w.as_slice().unwrap(),
            self.dense_b.as_slice().unwrap(),
        ];
        let mut rest = index;
        for t in slices {
            if rest < t.len() {
                return t[rest];
            }
            rest -= t.len();
        }
        panic!("gradient index {index} out of range");
    }
}

/// dL/dlogits for one window.
fn loss_and_dlogits(
    logits: ArrayView1<'_, f64>,
    label: usize,
    loss: LossKind,
) -> (f64, Array1<f64>) {
    let p = softmax(logits);
    match loss {
        LossKind::CrossEntropy => {
            let value = -p[label].ln();
            let mut d = p;
            d[label] -= 1.0;
            (value, d)
        }
        LossKind::L2OneHot => {
            let mut value = 0.0;
            let mut e = Array1::zeros(p.len());
            for j in 0..p.len() {
                let y = if j == label { 1.0 } else { 0.0 };
                value += (p[j] - y) * (p[j] - y);
                e[j] = 2.0 * (p[j] - y);
            }
            let dot = e.dot(&p);
            let d = Array1::from_shape_fn(p.len(), |j| p[j] * (e[j] - dot));
            (value, d)
        }
    }
}

/// Loss and full parameter gradients for one window.
fn window_gradient(
    model: &LstmModel,
    window: &FeatureWindow,
    loss: LossKind,
) -> Result<(f64, Gradients), LstmError> {
    let data = window.data();
    if data.ncols() != model.input_dim {
        return Err(LstmError::DimensionMismatch {
            expected: model.input_dim,
            got: data.ncols(),
        });
    }
    let label = window.label as usize;
    if label >= model.num_users {
        return Err(LstmError::LabelOutOfRange {
            label: window.label,
            num_users: model.num_users,
        });
    }

    let c1 = forward_layer(&model.layer1, data);
    let c2 = forward_layer(&model.layer2, c1.h.view());
    let t_len = c2.h.nrows();
    let h_last = c2.h.row(t_len - 1);
    let logits = model.dense_w.dot(&h_last) + &model.dense_b;

    let (value, dlogits) = loss_and_dlogits(logits.view(), label, loss);

    let dense_w_grad =
        Array2::from_shape_fn((model.num_users, model.hidden_size), |(j, k)| {
            dlogits[j] * h_last[k]
        });
    let dh_last = model.dense_w.t().dot(&dlogits);

    let mut dh2 = Array2::zeros(c2.h.dim());
    dh2.row_mut(t_len - 1).assign(&dh_last);
    let (g2, dx2) = backward_layer(&model.layer2, &c2, &dh2, true);
    let (g1, _) = backward_layer(&model.layer1, &c1, &dx2.unwrap(), false);

    Ok((
        value,
        Gradients {
            w1: g1.dw,
            b1: g1.db,
            w2: g2.dw,
            b2: g2.db,
            dense_w: dense_w_grad,
            dense_b: dlogits,
        },
    ))
}

/// Mean loss and mean gradients over a batch.
///
/// Per-window contributions are combined by pairwise (tree) reduction and
/// the mean is taken by one final division, so duplicating every window in
/// place scales each subtree by exactly 2 and the means come out
/// bit-identical.
///
/// # Errors
///
/// Empty batches, label or dimension mismatches.
pub fn compute_batch_gradient(
    model: &LstmModel,
    windows: &[&FeatureWindow],
    loss: LossKind,
) -> Result<(f64, Gradients), LstmError> {
    if windows.is_empty() {
        return Err(LstmError::EmptyTrainingSet);
    }

    // Streaming pairwise reduction: stack of (level, partial) pairs.
    let mut stack: Vec<(u32, f64, Gradients)> = Vec::new();
    for window in windows {
        let (value, grads) = window_gradient(model, window, loss)?;
        let mut level = 0u32;
        let mut cur = (value, grads);
        while stack.last().is_some_and(|(l, _, _)| *l == level) {
            let (_, lv, lg) = stack.pop().unwrap();
            cur = (lv + cur.0, lg.add(&cur.1));
            level += 1;
        }
        stack.push((level, cur.0, cur.1));
    }
    let (_, mut total_loss, mut total) = stack.pop().unwrap();
    while let Some((_, lv, lg)) = stack.pop() {
        total_loss = lv + total_loss;
        total = lg.add(&total);
    }

    let scale = 1.0 / windows.len() as f64;
    total.scale(scale);
    Ok((total_loss * scale, total))
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// Adam moment accumulators (β1 = 0.9, β2 = 0.999, ε = 1e-8).
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    step: u64,
}

impl AdamState {
    #[must_use]
    pub fn new(model: &LstmModel) -> AdamState {
        AdamState {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            step: 0,
        }
    }

    /// One bias-corrected update of every tensor.
    pub fn update(&mut self, model: &mut LstmModel, grads: &Gradients, learning_rate: f64) {
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);

        let apply = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for k in 0..theta.len() {
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g[k];
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                theta[k] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
            }
        };

        apply(
            model.layer1.w.as_slice_mut().unwrap(),
            grads.w1.as_slice().unwrap(),
            self.m.w1.as_slice_mut().unwrap(),
            self.v.w1.as_slice_mut().unwrap(),
        );
        apply(
            model.layer1.b.as_slice_mut().unwrap(),
            grads.b1.as_slice().unwrap(),
            self.m.b1.as_slice_mut().unwrap(),
            self.v.b1.as_slice_mut().unwrap(),
        );
        apply(
            model.layer2.w.as_slice_mut().unwrap(),
            grads.w2.as_slice().unwrap(),
            self.m.w2.as_slice_mut().unwrap(),
            self.v.w2.as_slice_mut().unwrap(),
        );
        apply(
            model.layer2.b.as_slice_mut().unwrap(),
            grads.b2.as_slice().unwrap(),
            self.m.b2.as_slice_mut().unwrap(),
            self.v.b2.as_slice_mut().unwrap(),
        );
        apply(
            model.dense_w.as_slice_mut().unwrap(),
            grads.dense_w.as_slice().unwrap(),
            self.m.dense_w.as_slice_mut().unwrap(),
            self.v.dense_w.as_slice_mut().unwrap(),
        );
        apply(
            model.dense_b.as_slice_mut().unwrap(),
            grads.dense_b.as_slice().unwrap(),
            self.m.dense_b.as_slice_mut().unwrap(),
            self.v.dense_b.as_slice_mut().unwrap(),
        );
    }
}

// ---------------------------------------------------------------------------
// f32 batched evaluation
// ---------------------------------------------------------------------------

/// f32 snapshot of a model laid out for batched inference: weight blocks
/// pre-transposed so every step is a row-major GEMM.
pub struct EvalModel {
    wx1_t: Array2<f32>,
    wh1_t: Array2<f32>,
    b1: Array1<f32>,
    wx2_t: Array2<f32>,
    wh2_t: Array2<f32>,
    b2: Array1<f32>,
    dense_w_t: Array2<f32>,
    dense_b: Array1<f32>,
    hidden: usize,
    input_dim: usize,
    num_users: usize,
}

/// Rows of GEMM work per evaluation chunk; bounds transient memory.
const EVAL_CHUNK_ROWS: usize = 8192;

impl EvalModel {
    #[must_use]
    pub fn from_model(model: &LstmModel) -> EvalModel {
        let d = model.input_dim;
        let h = model.hidden_size;
        let cast = |a: ArrayView2<'_, f64>| a.mapv(|v| v as f32);
        EvalModel {
            wx1_t: cast(model.layer1.w.slice(s![.., 0..d])).reversed_axes().as_standard_layout().to_owned(),
            wh1_t: cast(model.layer1.w.slice(s![.., d..])).reversed_axes().as_standard_layout().to_owned(),
            b1: model.layer1.b.mapv(|v| v as f32),
            wx2_t: cast(model.layer2.w.slice(s![.., 0..h])).reversed_axes().as_standard_layout().to_owned(),
            wh2_t: cast(model.layer2.w.slice(s![.., h..])).reversed_axes().as_standard_layout().to_owned(),
            b2: model.layer2.b.mapv(|v| v as f32),
            dense_w_t: model.dense_w.mapv(|v| v as f32).reversed_axes().as_standard_layout().to_owned(),
            dense_b: model.dense_b.mapv(|v| v as f32),
            hidden: h,
            input_dim: d,
            num_users: model.num_users,
        }
    }

    /// Logits for every window, one row per window. All windows must share
    /// one window length; work is chunked to bound memory.
    #[must_use]
    pub fn logits(&self, windows: &[FeatureWindow]) -> Array2<f32> {
        let mut out = Array2::zeros((windows.len(), self.num_users));
        if windows.is_empty() {
            return out;
        }
        let w_len = windows[0].window_len();
        assert!(
            windows.iter().all(|w| w.window_len() == w_len),
            "evaluation batch mixes window lengths"
        );
        let chunk = (EVAL_CHUNK_ROWS / w_len).max(1);
        for (c, group) in windows.chunks(chunk).enumerate() {
            let block = self.logits_chunk(group, w_len);
            out.slice_mut(s![c * chunk..c * chunk + group.len(), ..])
                .assign(&block);
        }
        out
    }

    /// One chunk, time-major: row t·B + j holds window j's frame t.
    fn logits_chunk(&self, windows: &[FeatureWindow], w_len: usize) -> Array2<f32> {
        let b = windows.len();
        let h = self.hidden;

        let mut x = Array2::zeros((w_len * b, self.input_dim));
        for (j, win) in windows.iter().enumerate() {
            let data = win.data();
            for t in 0..w_len {
                for (dst, &v) in x
                    .row_mut(t * b + j)
                    .iter_mut()
                    .zip(data.row(t).iter())
                {
                    *dst = v as f32;
                }
            }
        }

        let proj1 = x.dot(&self.wx1_t); // (W·B)×4H
        let mut h1_all = Array2::zeros((w_len * b, h));
        let mut hidden = Array2::zeros((b, h));
        let mut cell = Array2::<f32>::zeros((b, h));
        for t in 0..w_len {
            let mut z = &proj1.slice(s![t * b..(t + 1) * b, ..]) + &hidden.dot(&self.wh1_t);
            z += &self.b1;
            step_gates(&z, &mut hidden, &mut cell, h);
            h1_all.slice_mut(s![t * b..(t + 1) * b, ..]).assign(&hidden);
        }

        let proj2 = h1_all.dot(&self.wx2_t);
        hidden.fill(0.0);
        cell.fill(0.0);
        for t in 0..w_len {
            let mut z = &proj2.slice(s![t * b..(t + 1) * b, ..]) + &hidden.dot(&self.wh2_t);
            z += &self.b2;
            step_gates(&z, &mut hidden, &mut cell, h);
        }

        hidden.dot(&self.dense_w_t) + &self.dense_b
    }

    /// Fraction of windows whose argmax logit matches the label. Ties go
    /// to the lowest class index.
    #[must_use]
    pub fn window_accuracy(&self, windows: &[FeatureWindow]) -> f64 {
        if windows.is_empty() {
            return 0.0;
        }
        let logits = self.logits(windows);
        let mut correct = 0usize;
        for (j, win) in windows.iter().enumerate() {
            if argmax_f32(logits.row(j)) == win.label as usize {
                correct += 1;
            }
        }
        correct as f64 / windows.len() as f64
    }
}

/// Applies the gate nonlinearity block to a batch step, updating hidden
/// and cell states in place.
fn step_gates(z: &Array2<f32>, hidden: &mut Array2<f32>, cell: &mut Array2<f32>, h: usize) {
    let b = hidden.nrows();
    for j in 0..b {
        for u in 0..h {
            let i = 1.0 / (1.0 + (-z[[j, u]]).exp());
            let f = 1.0 / (1.0 + (-z[[j, h + u]]).exp());
            let g = z[[j, 2 * h + u]].tanh();
            let o = 1.0 / (1.0 + (-z[[j, 3 * h + u]]).exp());
            let c = f * cell[[j, u]] + i * g;
            cell[[j, u]] = c;
            hidden[[j, u]] = o * c.tanh();
        }
    }
}

/// First strict maximum, so ties resolve to the lowest index.
#[must_use]
pub fn argmax_f32(row: ndarray::ArrayView1<'_, f32>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Knobs for [`train`]. One iteration is one minibatch update.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl TrainConfig {
    #[must_use]
    pub fn new(iterations: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations,
            batch_size: 32,
            learning_rate: 1e-3,
            loss: LossKind::CrossEntropy,
            seed,
        }
    }
}

/// What one iteration produced. `iteration` is 1-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub train_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<IterationRecord>,
}

impl TrainHistory {
    /// The per-iteration validation accuracy series.
    #[must_use]
    pub fn validation_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.validation_accuracy).collect()
    }
}

/// Hook invoked after every iteration, typically to snapshot checkpoints.
pub trait TrainObserver {
    fn on_iteration(&mut self, model: &LstmModel, record: &IterationRecord);
}

/// Observer that does nothing.
impl TrainObserver for () {
    fn on_iteration(&mut self, _model: &LstmModel, _record: &IterationRecord) {}
}

/// Minibatch BPTT training with Adam.
///
/// Batches are consecutive slices of an index list reshuffled (ChaCha,
/// seeded from the config) whenever fewer than a full batch remains, so a
/// run is a pure function of model, data, and config. Validation accuracy
/// is measured after every update through the f32 evaluation path.
///
/// # Errors
///
/// Empty sets, bad labels or dimensions, zero batch size, and
/// `NonFiniteLoss` the moment the batch loss stops being finite.
pub fn train(
    model: &mut LstmModel,
    train_set: &[FeatureWindow],
    validation: &[FeatureWindow],
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainHistory, LstmError> {
    if train_set.is_empty() {
        return Err(LstmError::EmptyTrainingSet);
    }
    if validation.is_empty() {
        return Err(LstmError::EmptyValidationSet);
    }
    if config.batch_size == 0 {
        return Err(LstmError::InvalidBatchSize);
    }
    for w in train_set.iter().chain(validation) {
        if (w.label as usize) >= model.num_users {
            return Err(LstmError::LabelOutOfRange {
                label: w.label,
                num_users: model.num_users,
            });
        }
    }

    let batch = config.batch_size.min(train_set.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len(); // force an initial shuffle

    let mut adam = AdamState::new(model);
    let mut history = TrainHistory::default();

    for iteration in 1..=config.iterations {
        if cursor + batch > order.len() {
            shuffle(&mut order, &mut rng);
            cursor = 0;
        }
        let members: Vec<&FeatureWindow> =
            order[cursor..cursor + batch].iter().map(|&i| &train_set[i]).collect();
        cursor += batch;

        let (loss, grads) = compute_batch_gradient(model, &members, config.loss)?;
        if !loss.is_finite() {
            return Err(LstmError::NonFiniteLoss { iteration });
        }
        adam.update(model, &grads, config.learning_rate);

        let eval = EvalModel::from_model(model);
        let record = IterationRecord {
            iteration,
            train_loss: loss,
            validation_accuracy: eval.window_accuracy(validation),
        };
        observer.on_iteration(model, &record);
        history.records.push(record);
    }
    Ok(history)
}

/// Fisher-Yates with rand's index sampling.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}
