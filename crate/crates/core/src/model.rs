//! LSTM encoder with sequential self-attention and a linear regression head.
//!
//! Shapes for the default configuration:
//!
//! ```text
//! window (10, 1) -> LSTM, all hidden states (10, 50)
//!                -> self-attention softmax(QK^T / sqrt(d_k)) V, then ReLU (10, 50)
//!                -> flatten (500) -> dense (1)
//! ```
//!
//! The plain `Lstm` architecture skips attention and feeds the final hidden
//! state to the dense head; it is the comparison baseline.
//!
//! Every forward function returns a cache holding the intermediate values the
//! reverse pass needs. `accumulate_gradients` walks those caches backwards.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, sigmoid, softmax_in_place, Activation, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// LSTM (return sequences) -> self-attention -> flatten -> dense.
    LstmSsam,
    /// LSTM (final state) -> dense.
    Lstm,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::LstmSsam => "lstm-ssam",
            Architecture::Lstm => "lstm",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm-ssam" => Ok(Architecture::LstmSsam),
            "lstm" => Ok(Architecture::Lstm),
            other => Err(Error::InvalidConfig(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub hidden_units: usize,
    pub time_step: usize,
    /// Width of the query/key/value projections (`d_k`).
    pub attention_dim: usize,
    pub post_attention_activation: Activation,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::LstmSsam,
            input_dim: 1,
            hidden_units: 50,
            time_step: 10,
            attention_dim: 50,
            post_attention_activation: Activation::Relu,
            seed: 42,
        }
    }
}

impl ModelConfig {
    /// Plain LSTM baseline with `hidden` units.
    pub fn lstm(hidden: usize) -> Self {
        Self {
            architecture: Architecture::Lstm,
            hidden_units: hidden,
            attention_dim: hidden,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("hidden_units", self.hidden_units),
            ("time_step", self.time_step),
            ("attention_dim", self.attention_dim),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Length of the vector the dense head sees.
    pub fn flatten_len(&self) -> usize {
        match self.architecture {
            Architecture::LstmSsam => self.time_step * self.attention_dim,
            Architecture::Lstm => self.hidden_units,
        }
    }
}

/// Scalar counts per layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    pub lstm: usize,
    pub attention: usize,
    pub flatten: usize,
    pub dense: usize,
}

impl ParamCounts {
    pub fn total(&self) -> usize {
        self.lstm + self.attention + self.flatten + self.dense
    }
}

pub fn count_params(config: &ModelConfig) -> ParamCounts {
    let h = config.hidden_units;
    let attention = match config.architecture {
        Architecture::LstmSsam => 3 * (h * config.attention_dim + config.attention_dim),
        Architecture::Lstm => 0,
    };
    ParamCounts {
        lstm: 4 * (config.input_dim + h + 1) * h,
        attention,
        flatten: 0,
        dense: config.flatten_len() + 1,
    }
}

/// One LSTM gate: `x W + h U + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Matrix,
}

impl Gate {
    fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w: Matrix::zeros(input_dim, hidden),
            u: Matrix::zeros(hidden, hidden),
            b: Matrix::zeros(1, hidden),
        }
    }

    // z = b + x W + h U
    fn preactivation(&self, x: &[f64], h: &[f64], z: &mut [f64]) {
        z.copy_from_slice(self.b.values());
        for (k, &xk) in x.iter().enumerate() {
            axpy(z, xk, self.w.row(k));
        }
        for (k, &hk) in h.iter().enumerate() {
            if hk != 0.0 {
                axpy(z, hk, self.u.row(k));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub forget: Gate,
    pub input: Gate,
    pub candidate: Gate,
    pub output: Gate,
}

impl LstmParams {
    pub fn input_dim(&self) -> usize {
        self.forget.w.rows()
    }

    pub fn hidden(&self) -> usize {
        self.forget.u.rows()
    }

    pub fn scalar_count(&self) -> usize {
        [&self.forget, &self.input, &self.candidate, &self.output]
            .iter()
            .map(|g| g.w.len() + g.u.len() + g.b.len())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub b_q: Matrix,
    pub b_k: Matrix,
    pub b_v: Matrix,
}

impl AttentionParams {
    pub fn scalar_count(&self) -> usize {
        [&self.w_q, &self.w_k, &self.w_v, &self.b_q, &self.b_k, &self.b_v]
            .iter()
            .map(|m| m.len())
            .sum()
    }

    pub fn dim(&self) -> usize {
        self.w_q.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams {
    /// Column vector over the flattened features.
    pub w: Matrix,
    /// 1x1.
    pub b: Matrix,
}

impl DenseParams {
    pub fn bias(&self) -> f64 {
        self.b.values()[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub lstm: LstmParams,
    pub attention: Option<AttentionParams>,
    pub dense: DenseParams,
}

/// Same layout as the parameters they differentiate.
pub type Gradients = ModelParams;

impl ModelParams {
    /// All-zero parameters; also the starting point for gradient accumulation.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let (n, h, d) = (config.input_dim, config.hidden_units, config.attention_dim);
        let attention = match config.architecture {
            Architecture::LstmSsam => Some(AttentionParams {
                w_q: Matrix::zeros(h, d),
                w_k: Matrix::zeros(h, d),
                w_v: Matrix::zeros(h, d),
                b_q: Matrix::zeros(1, d),
                b_k: Matrix::zeros(1, d),
                b_v: Matrix::zeros(1, d),
            }),
            Architecture::Lstm => None,
        };
        Ok(Self {
            config: config.clone(),
            lstm: LstmParams {
                forget: Gate::zeros(n, h),
                input: Gate::zeros(n, h),
                candidate: Gate::zeros(n, h),
                output: Gate::zeros(n, h),
            },
            attention,
            dense: DenseParams {
                w: Matrix::zeros(config.flatten_len(), 1),
                b: Matrix::zeros(1, 1),
            },
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config was validated at construction")
    }

    /// Named tensors in canonical order.
    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let l = &self.lstm;
        let mut out = vec![
            ("lstm.forget.W", &l.forget.w),
            ("lstm.forget.U", &l.forget.u),
            ("lstm.forget.b", &l.forget.b),
            ("lstm.input.W", &l.input.w),
            ("lstm.input.U", &l.input.u),
            ("lstm.input.b", &l.input.b),
            ("lstm.candidate.W", &l.candidate.w),
            ("lstm.candidate.U", &l.candidate.u),
            ("lstm.candidate.b", &l.candidate.b),
            ("lstm.output.W", &l.output.w),
            ("lstm.output.U", &l.output.u),
            ("lstm.output.b", &l.output.b),
        ];
        if let Some(a) = &self.attention {
            out.extend([
                ("attention.W_Q", &a.w_q),
                ("attention.W_K", &a.w_k),
                ("attention.W_V", &a.w_v),
                ("attention.b_Q", &a.b_q),
                ("attention.b_K", &a.b_k),
                ("attention.b_V", &a.b_v),
            ]);
        }
        out.extend([("dense.W", &self.dense.w), ("dense.b", &self.dense.b)]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let l = &mut self.lstm;
        let mut out = vec![
            ("lstm.forget.W", &mut l.forget.w),
            ("lstm.forget.U", &mut l.forget.u),
            ("lstm.forget.b", &mut l.forget.b),
            ("lstm.input.W", &mut l.input.w),
            ("lstm.input.U", &mut l.input.u),
            ("lstm.input.b", &mut l.input.b),
            ("lstm.candidate.W", &mut l.candidate.w),
            ("lstm.candidate.U", &mut l.candidate.u),
            ("lstm.candidate.b", &mut l.candidate.b),
            ("lstm.output.W", &mut l.output.w),
            ("lstm.output.U", &mut l.output.u),
            ("lstm.output.b", &mut l.output.b),
        ];
        if let Some(a) = &mut self.attention {
            out.extend([
                ("attention.W_Q", &mut a.w_q),
                ("attention.W_K", &mut a.w_k),
                ("attention.W_V", &mut a.w_v),
                ("attention.b_Q", &mut a.b_q),
                ("attention.b_K", &mut a.b_k),
                ("attention.b_V", &mut a.b_v),
            ]);
        }
        out.extend([("dense.W", &mut self.dense.w), ("dense.b", &mut self.dense.b)]);
        out
    }

    /// Expected `(name, rows, cols)` for every tensor of `config`.
    pub fn expected_shapes(config: &ModelConfig) -> Result<Vec<(&'static str, (usize, usize))>> {
        Ok(Self::zeros(config)?
            .tensors()
            .into_iter()
            .map(|(n, m)| (n, m.shape()))
            .collect())
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    /// All scalars in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, m)| m.values().iter().copied())
            .collect()
    }

    pub fn predict(&self, window: &Matrix) -> Result<f64> {
        model_forward(self, window).map(|(y, _)| y)
    }
}

/// Glorot-uniform weights drawn from a seeded ChaCha stream; zero biases.
pub fn init_params(config: &ModelConfig) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for (name, m) in params.tensors_mut() {
        if is_bias(name) {
            continue;
        }
        let limit = glorot_limit(m.rows(), m.cols());
        let dist = Uniform::new_inclusive(-limit, limit);
        for v in m.values_mut() {
            *v = dist.sample(&mut rng);
        }
    }
    Ok(params)
}

/// `sqrt(6 / (fan_in + fan_out))` for a `fan_in x fan_out` weight matrix.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub(crate) fn is_bias(name: &str) -> bool {
    name.ends_with(".b") || name.contains(".b_")
}

/// Intermediate values of one LSTM pass. Row `t` of `h`/`c` is the state
/// after step `t - 1`; row 0 is the zero initial state.
#[derive(Clone, Debug)]
pub struct LstmCache {
    steps: usize,
    hidden: usize,
    x: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCache {
    /// Hidden states `h_1..h_T` as a `T x hidden` matrix.
    pub fn hidden_states(&self) -> Matrix {
        Matrix::from_vec_unchecked(self.steps, self.hidden, self.h[self.hidden..].to_vec())
    }

    /// Cell states `c_1..c_T`.
    pub fn cell_states(&self) -> Matrix {
        Matrix::from_vec_unchecked(self.steps, self.hidden, self.c[self.hidden..].to_vec())
    }
}

/// Runs the recurrence from zero state and returns every hidden state.
pub fn lstm_forward(params: &LstmParams, window: &Matrix) -> Result<(Matrix, LstmCache)> {
    let (n, hd) = (params.input_dim(), params.hidden());
    if window.cols() != n {
        return Err(Error::ShapeMismatch {
            op: "lstm_forward",
            left: window.shape(),
            right: (window.rows(), n),
        });
    }
    let t_len = window.rows();
    let mut cache = LstmCache {
        steps: t_len,
        hidden: hd,
        x: window.values().to_vec(),
        f: vec![0.0; t_len * hd],
        i: vec![0.0; t_len * hd],
        g: vec![0.0; t_len * hd],
        o: vec![0.0; t_len * hd],
        c: vec![0.0; (t_len + 1) * hd],
        h: vec![0.0; (t_len + 1) * hd],
        tanh_c: vec![0.0; t_len * hd],
    };

    for t in 0..t_len {
        let x = window.row(t);
        let cur = t * hd..(t + 1) * hd;
        let (h_prev, h_rest) = cache.h.split_at_mut((t + 1) * hd);
        let h_prev = &h_prev[t * hd..];
        params.forget.preactivation(x, h_prev, &mut cache.f[cur.clone()]);
        params.input.preactivation(x, h_prev, &mut cache.i[cur.clone()]);
        params.candidate.preactivation(x, h_prev, &mut cache.g[cur.clone()]);
        params.output.preactivation(x, h_prev, &mut cache.o[cur.clone()]);

        let h_next = &mut h_rest[..hd];
        for (j, h_out) in h_next.iter_mut().enumerate() {
            let k = t * hd + j;
            let f = sigmoid(cache.f[k]);
            let i = sigmoid(cache.i[k]);
            let g = cache.g[k].tanh();
            let o = sigmoid(cache.o[k]);
            let c = f * cache.c[k] + i * g;
            let tc = c.tanh();
            cache.f[k] = f;
            cache.i[k] = i;
            cache.g[k] = g;
            cache.o[k] = o;
            cache.c[k + hd] = c;
            cache.tanh_c[k] = tc;
            *h_out = o * tc;
        }
    }
    Ok((cache.hidden_states(), cache))
}

/// Intermediate values of one attention pass.
#[derive(Clone, Debug)]
pub struct AttentionCache {
    steps: usize,
    dim: usize,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    z: Vec<f64>,
    a: Vec<f64>,
    activation: Activation,
}

impl AttentionCache {
    /// Row-stochastic `T x T` attention weights.
    pub fn scores(&self) -> Matrix {
        Matrix::from_vec_unchecked(self.steps, self.steps, self.probs.clone())
    }

    pub fn values(&self) -> Matrix {
        Matrix::from_vec_unchecked(self.steps, self.dim, self.v.clone())
    }
}

fn project(h: &Matrix, w: &Matrix, b: &Matrix) -> Vec<f64> {
    let d = w.cols();
    let mut out = Vec::with_capacity(h.rows() * d);
    for t in 0..h.rows() {
        let start = out.len();
        out.extend_from_slice(b.values());
        let row = &mut out[start..];
        for (k, &hk) in h.row(t).iter().enumerate() {
            axpy(row, hk, w.row(k));
        }
    }
    out
}

/// `activation(softmax(Q K^T / sqrt(d_k)) V)` with `Q = H W_Q + b_Q` and so on.
pub fn attention_forward(
    params: &AttentionParams,
    h: &Matrix,
    activation: Activation,
) -> Result<(Matrix, AttentionCache)> {
    if h.cols() != params.w_q.rows() {
        return Err(Error::ShapeMismatch {
            op: "attention_forward",
            left: h.shape(),
            right: params.w_q.shape(),
        });
    }
    let (t_len, d) = (h.rows(), params.dim());
    let q = project(h, &params.w_q, &params.b_q);
    let k = project(h, &params.w_k, &params.b_k);
    let v = project(h, &params.w_v, &params.b_v);
    let scale = (d as f64).sqrt().recip();

    let mut probs = vec![0.0; t_len * t_len];
    for i in 0..t_len {
        let row = &mut probs[i * t_len..(i + 1) * t_len];
        for (j, s) in row.iter_mut().enumerate() {
            *s = dot(&q[i * d..(i + 1) * d], &k[j * d..(j + 1) * d]) * scale;
        }
        softmax_in_place(row);
    }

    let mut z = vec![0.0; t_len * d];
    for i in 0..t_len {
        let zi = &mut z[i * d..(i + 1) * d];
        for j in 0..t_len {
            axpy(zi, probs[i * t_len + j], &v[j * d..(j + 1) * d]);
        }
    }
    let a: Vec<f64> = z.iter().map(|&x| activation.apply(x)).collect();
    let out = Matrix::from_vec_unchecked(t_len, d, a.clone());
    Ok((
        out,
        AttentionCache {
            steps: t_len,
            dim: d,
            q,
            k,
            v,
            probs,
            z,
            a,
            activation,
        },
    ))
}

/// Everything `model_forward` computed on the way to its prediction.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub lstm: LstmCache,
    pub attention: Option<AttentionCache>,
    /// Input to the dense head.
    pub features: Vec<f64>,
    pub prediction: f64,
}

pub fn model_forward(params: &ModelParams, window: &Matrix) -> Result<(f64, ForwardCache)> {
    let cfg = &params.config;
    if window.shape() != (cfg.time_step, cfg.input_dim) {
        return Err(Error::ShapeMismatch {
            op: "model_forward",
            left: window.shape(),
            right: (cfg.time_step, cfg.input_dim),
        });
    }
    let (h, lstm) = lstm_forward(&params.lstm, window)?;
    let (features, attention) = match &params.attention {
        Some(att) => {
            let (a, cache) = attention_forward(att, &h, cfg.post_attention_activation)?;
            (a.into_values(), Some(cache))
        }
        None => (h.row(h.rows() - 1).to_vec(), None),
    };
    let prediction = dot(&features, params.dense.w.values()) + params.dense.bias();
    Ok((
        prediction,
        ForwardCache {
            lstm,
            attention,
            features,
            prediction,
        },
    ))
}

/// Adds `d(prediction)/d(theta) * d_output` into `grads`.
pub(crate) fn accumulate_gradients(params: &ModelParams, cache: &ForwardCache, d_output: f64, grads: &mut Gradients) {
    axpy(grads.dense.w.values_mut(), d_output, &cache.features);
    grads.dense.b.values_mut()[0] += d_output;

    let d_features: Vec<f64> = params.dense.w.values().iter().map(|w| w * d_output).collect();
    let (t_len, hd) = (cache.lstm.steps, cache.lstm.hidden);
    let d_hidden = match (&params.attention, &cache.attention) {
        (Some(att), Some(att_cache)) => {
            let grads_att = grads.attention.as_mut().expect("gradient layout matches params");
            attention_backward(att, att_cache, &cache.lstm.h[hd..], &d_features, grads_att)
        }
        _ => {
            let mut d = vec![0.0; t_len * hd];
            d[(t_len - 1) * hd..].copy_from_slice(&d_features);
            d
        }
    };
    lstm_backward(&params.lstm, &cache.lstm, &d_hidden, &mut grads.lstm);
}

// Returns dL/dH given dL/dA.
fn attention_backward(
    params: &AttentionParams,
    cache: &AttentionCache,
    h: &[f64],
    d_a: &[f64],
    grads: &mut AttentionParams,
) -> Vec<f64> {
    let (t_len, d) = (cache.steps, cache.dim);
    let hd = params.w_q.rows();
    let scale = (d as f64).sqrt().recip();

    let d_z: Vec<f64> = d_a
        .iter()
        .zip(cache.z.iter().zip(&cache.a))
        .map(|(&g, (&z, &a))| g * cache.activation.derivative(z, a))
        .collect();

    let mut d_v = vec![0.0; t_len * d];
    let mut d_scores = vec![0.0; t_len * t_len];
    for i in 0..t_len {
        let dzi = &d_z[i * d..(i + 1) * d];
        let p = &cache.probs[i * t_len..(i + 1) * t_len];
        let mut d_p = vec![0.0; t_len];
        for j in 0..t_len {
            d_p[j] = dot(dzi, &cache.v[j * d..(j + 1) * d]);
            axpy(&mut d_v[j * d..(j + 1) * d], p[j], dzi);
        }
        // softmax Jacobian-vector product
        let weighted: f64 = d_p.iter().zip(p).map(|(a, b)| a * b).sum();
        for j in 0..t_len {
            d_scores[i * t_len + j] = p[j] * (d_p[j] - weighted) * scale;
        }
    }

    let mut d_q = vec![0.0; t_len * d];
    let mut d_k = vec![0.0; t_len * d];
    for i in 0..t_len {
        for j in 0..t_len {
            let s = d_scores[i * t_len + j];
            if s != 0.0 {
                axpy(&mut d_q[i * d..(i + 1) * d], s, &cache.k[j * d..(j + 1) * d]);
                axpy(&mut d_k[j * d..(j + 1) * d], s, &cache.q[i * d..(i + 1) * d]);
            }
        }
    }

    let mut d_h = vec![0.0; t_len * hd];
    for (w, gw, gb, d_proj) in [
        (&params.w_q, &mut grads.w_q, &mut grads.b_q, &d_q),
        (&params.w_k, &mut grads.w_k, &mut grads.b_k, &d_k),
        (&params.w_v, &mut grads.w_v, &mut grads.b_v, &d_v),
    ] {
        for t in 0..t_len {
            let g = &d_proj[t * d..(t + 1) * d];
            let h_t = &h[t * hd..(t + 1) * hd];
            axpy(gb.values_mut(), 1.0, g);
            let gw_vals = gw.values_mut();
            for k in 0..hd {
                axpy(&mut gw_vals[k * d..(k + 1) * d], h_t[k], g);
                d_h[t * hd + k] += dot(w.row(k), g);
            }
        }
    }
    d_h
}

// Backpropagation through time given dL/dh_t for every step.
fn lstm_backward(params: &LstmParams, cache: &LstmCache, d_hidden: &[f64], grads: &mut LstmParams) {
    let (t_len, hd) = (cache.steps, cache.hidden);
    let n = params.input_dim();
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut dz = [vec![0.0; hd], vec![0.0; hd], vec![0.0; hd], vec![0.0; hd]];

    for t in (0..t_len).rev() {
        for j in 0..hd {
            let k = t * hd + j;
            let dh = d_hidden[k] + dh_next[j];
            let (f, i, g, o, tc) = (cache.f[k], cache.i[k], cache.g[k], cache.o[k], cache.tanh_c[k]);
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            dz[0][j] = dc * cache.c[k] * f * (1.0 - f);
            dz[1][j] = dc * g * i * (1.0 - i);
            dz[2][j] = dc * i * (1.0 - g * g);
            dz[3][j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }

        let x = &cache.x[t * n..(t + 1) * n];
        let h_prev = &cache.h[t * hd..(t + 1) * hd];
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        let gates = [&params.forget, &params.input, &params.candidate, &params.output];
        let grad_gates = [
            &mut grads.forget,
            &mut grads.input,
            &mut grads.candidate,
            &mut grads.output,
        ];
        for ((gate, grad), d) in gates.into_iter().zip(grad_gates).zip(&dz) {
            axpy(grad.b.values_mut(), 1.0, d);
            let gw = grad.w.values_mut();
            for (k, &xk) in x.iter().enumerate() {
                axpy(&mut gw[k * hd..(k + 1) * hd], xk, d);
            }
            let gu = grad.u.values_mut();
            for (k, &hk) in h_prev.iter().enumerate() {
                if hk != 0.0 {
                    axpy(&mut gu[k * hd..(k + 1) * hd], hk, d);
                }
                dh_next[k] += dot(gate.u.row(k), d);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn small_config(arch: Architecture, t: usize, h: usize, d: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            architecture: arch,
            input_dim: 1,
            hidden_units: h,
            time_step: t,
            attention_dim: d,
            post_attention_activation: Activation::Relu,
            seed,
        }
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_attention(rng: &mut ChaCha8Rng, h: usize, d: usize) -> AttentionParams {
        AttentionParams {
            w_q: random_matrix(rng, h, d),
            w_k: random_matrix(rng, h, d),
            w_v: random_matrix(rng, h, d),
            b_q: random_matrix(rng, 1, d),
            b_k: random_matrix(rng, 1, d),
            b_v: random_matrix(rng, 1, d),
        }
    }

    #[test]
    fn default_counts() {
        let c = count_params(&ModelConfig::default());
        assert_eq!(c.lstm, 10400);
        assert_eq!(c.attention, 7650);
        assert_eq!(c.flatten, 0);
        assert_eq!(c.dense, 501);
        let p = init_params(&ModelConfig::default()).unwrap();
        assert_eq!(p.scalar_count(), c.total());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases_and_bounded_weights() {
        let cfg = ModelConfig::default();
        let a = init_params(&cfg).unwrap();
        let b = init_params(&cfg).unwrap();
        assert_eq!(
            a.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let other = init_params(&ModelConfig { seed: 7, ..cfg }).unwrap();
        assert_ne!(a.flatten(), other.flatten());
        for (name, m) in a.tensors() {
            if is_bias(name) {
                assert!(m.values().iter().all(|&v| v == 0.0), "{name} not zero");
            } else {
                let limit = glorot_limit(m.rows(), m.cols());
                assert!(m.max_abs() <= limit, "{name} exceeds {limit}");
                assert!(m.max_abs() > 0.0);
            }
        }
    }

    #[test]
    fn zero_params_give_zero_hidden_states() {
        let cfg = small_config(Architecture::LstmSsam, 6, 4, 3, 0);
        let p = ModelParams::zeros(&cfg).unwrap();
        let window = Matrix::column(&[0.3, -1.0, 2.0, 0.5, 0.1, 0.9]).unwrap();
        let (h, cache) = lstm_forward(&p.lstm, &window).unwrap();
        assert!(h.values().iter().all(|&v| v == 0.0));
        assert!(cache.f.iter().all(|&v| v == 0.5));
        let (y, _) = model_forward(&p, &window).unwrap();
        assert_eq!(y, 0.0);
    }

    #[test]
    fn single_step_matches_cell_equations() {
        let cfg = small_config(Architecture::Lstm, 1, 3, 3, 11);
        let p = init_params(&cfg).unwrap();
        let x = 0.7;
        let (h, _) = lstm_forward(&p.lstm, &Matrix::column(&[x]).unwrap()).unwrap();
        for j in 0..3 {
            let gate = |g: &Gate| g.w.get(0, j) * x + g.b.get(0, j);
            let i = sigmoid(gate(&p.lstm.input));
            let g = gate(&p.lstm.candidate).tanh();
            let o = sigmoid(gate(&p.lstm.output));
            let expected = o * (i * g).tanh();
            assert!((h.get(0, j) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn default_shapes() {
        let cfg = ModelConfig::default();
        let p = init_params(&cfg).unwrap();
        let window = Matrix::column(&[0.5; 10]).unwrap();
        let (h, _) = lstm_forward(&p.lstm, &window).unwrap();
        assert_eq!(h.shape(), (10, 50));
        let (a, _) = attention_forward(p.attention.as_ref().unwrap(), &h, Activation::Relu).unwrap();
        assert_eq!(a.shape(), (10, 50));
        let (y, cache) = model_forward(&p, &window).unwrap();
        assert_eq!(cache.features.len(), 500);
        assert!(y.is_finite());
    }

    #[test]
    fn wrong_window_shape_is_rejected() {
        let p = init_params(&ModelConfig::default()).unwrap();
        assert!(matches!(
            model_forward(&p, &Matrix::column(&[0.5; 9]).unwrap()),
            Err(Error::ShapeMismatch { .. })
        ));
        let h = Matrix::zeros(4, 49);
        assert!(attention_forward(p.attention.as_ref().unwrap(), &h, Activation::Relu).is_err());
    }

    #[test]
    fn singleton_attention_is_activated_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let att = random_attention(&mut rng, 4, 3);
        let h = random_matrix(&mut rng, 1, 4);
        let (a, cache) = attention_forward(&att, &h, Activation::Relu).unwrap();
        assert_eq!(cache.scores().values(), &[1.0]);
        let v = cache.values();
        let expected: Vec<f64> = v.values().iter().map(|&x| x.max(0.0)).collect();
        assert_eq!(a.values(), expected.as_slice());
    }

    #[test]
    fn zero_value_projection_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut att = random_attention(&mut rng, 4, 3);
        att.w_v = Matrix::zeros(4, 3);
        att.b_v = Matrix::zeros(1, 3);
        let h = random_matrix(&mut rng, 5, 4);
        let (a, _) = attention_forward(&att, &h, Activation::Relu).unwrap();
        assert!(a.values().iter().all(|&v| v == 0.0));
    }

    // Direct triple-loop evaluation, independent of the cached kernels.
    fn attention_oracle(att: &AttentionParams, h: &Matrix) -> Vec<Vec<f64>> {
        let (t, hd, d) = (h.rows(), h.cols(), att.w_q.cols());
        let proj = |w: &Matrix, b: &Matrix| -> Vec<Vec<f64>> {
            (0..t)
                .map(|r| {
                    (0..d)
                        .map(|c| b.get(0, c) + (0..hd).map(|k| h.get(r, k) * w.get(k, c)).sum::<f64>())
                        .collect()
                })
                .collect()
        };
        let (q, k, v) = (
            proj(&att.w_q, &att.b_q),
            proj(&att.w_k, &att.b_k),
            proj(&att.w_v, &att.b_v),
        );
        (0..t)
            .map(|i| {
                let s: Vec<f64> = (0..t)
                    .map(|j| (0..d).map(|c| q[i][c] * k[j][c]).sum::<f64>() / (d as f64).sqrt())
                    .collect();
                let m = s.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
                let z: f64 = e.iter().sum();
                (0..d)
                    .map(|c| (0..t).map(|j| e[j] / z * v[j][c]).sum::<f64>().max(0.0))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn attention_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let att = random_attention(&mut rng, 4, 4);
            let h = random_matrix(&mut rng, 3, 4);
            let (a, _) = attention_forward(&att, &h, Activation::Relu).unwrap();
            let expected = attention_oracle(&att, &h);
            for (i, row) in expected.iter().enumerate() {
                for (c, want) in row.iter().enumerate() {
                    assert!((a.get(i, c) - want).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn dense_head_is_linear() {
        let cfg = small_config(Architecture::LstmSsam, 4, 5, 5, 9);
        let mut p = init_params(&cfg).unwrap();
        let window = Matrix::column(&[0.1, 0.4, 0.2, 0.8]).unwrap();
        let (y0, cache) = model_forward(&p, &window).unwrap();
        let idx = cache.features.iter().position(|&f| f != 0.0).unwrap();
        let delta = 0.25;
        p.dense.w.values_mut()[idx] += delta;
        let (y1, _) = model_forward(&p, &window).unwrap();
        assert!((y1 - y0 - delta * cache.features[idx]).abs() < 1e-15);
    }

    #[test]
    fn lstm_only_uses_final_state() {
        let cfg = small_config(Architecture::Lstm, 5, 3, 3, 2);
        let p = init_params(&cfg).unwrap();
        assert!(p.attention.is_none());
        let window = Matrix::column(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let (y, cache) = model_forward(&p, &window).unwrap();
        let h = cache.lstm.hidden_states();
        assert_eq!(cache.features, h.row(4));
        assert_eq!(count_params(&cfg).dense, 4);
        assert!(y.is_finite());
    }

    proptest! {
        #[test]
        fn attention_rows_are_stochastic_and_permutation_equivariant(seed in any::<u64>(), t in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let att = random_attention(&mut rng, 4, 3);
            let h = random_matrix(&mut rng, t, 4);
            let (a, cache) = attention_forward(&att, &h, Activation::Relu).unwrap();
            let s = cache.scores();
            for r in 0..t {
                prop_assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            // reverse the rows of H
            let rev: Vec<Vec<f64>> = (0..t).rev().map(|r| h.row(r).to_vec()).collect();
            let (a_rev, _) = attention_forward(&att, &Matrix::from_rows(&rev).unwrap(), Activation::Relu).unwrap();
            for r in 0..t {
                for c in 0..3 {
                    prop_assert!((a_rev.get(t - 1 - r, c) - a.get(r, c)).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn hidden_states_are_bounded(seed in any::<u64>(), values in prop::collection::vec(-5.0f64..5.0, 8)) {
            let cfg = small_config(Architecture::LstmSsam, 8, 6, 4, seed);
            let p = init_params(&cfg).unwrap();
            let (h, _) = lstm_forward(&p.lstm, &Matrix::column(&values).unwrap()).unwrap();
            prop_assert!(h.values().iter().all(|v| v.abs() < 1.0));
            let (y, cache) = model_forward(&p, &Matrix::column(&values).unwrap()).unwrap();
            prop_assert!(y.is_finite());
            prop_assert_eq!(cache.features.len(), 8 * 4);
        }

        #[test]
        fn lstm_count_matches_enumeration(n in 1usize..4, h in 1usize..12, t in 1usize..6, d in 1usize..8) {
            let cfg = ModelConfig { input_dim: n, hidden_units: h, time_step: t, attention_dim: d, ..ModelConfig::default() };
            let p = ModelParams::zeros(&cfg).unwrap();
            let counts = count_params(&cfg);
            prop_assert_eq!(counts.lstm, p.lstm.scalar_count());
            prop_assert_eq!(counts.attention, p.attention.as_ref().unwrap().scalar_count());
            prop_assert_eq!(counts.dense, p.dense.w.len() + 1);
        }
    }
}
