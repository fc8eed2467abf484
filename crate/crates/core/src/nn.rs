//! Small recurrent networks: stacked LSTM layers with a dense head,
//! backpropagation through time, Adam, and the BCE / MSE losses.
//!
//! Gate layout inside every LSTM weight matrix is `[input, forget, cell,
//! output]`, each block `hidden_dim` rows. Matrices are row-major
//! `rows x cols`. All arithmetic is `f64`.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::rng_from_seed;
use crate::trace::Sequence;

pub const NET_FORMAT_VERSION: u32 = 1;
pub const BCE_CLAMP: f64 = 1e-7;

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += m * v` for a row-major `rows x cols` matrix.
#[inline]
fn matvec_acc(m: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += m^T * v`.
#[inline]
fn matvec_t_acc(m: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (row, &vi) in m.chunks_exact(cols).zip(v) {
        if vi != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
    }
}

/// `m += a ⊗ b` (outer product).
#[inline]
fn outer_acc(m: &mut [f64], cols: usize, a: &[f64], b: &[f64]) {
    for (row, &ai) in m.chunks_exact_mut(cols).zip(a) {
        if ai != 0.0 {
            for (x, bj) in row.iter_mut().zip(b) {
                *x += ai * bj;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `4h x input_dim`
    pub w_input: Vec<f64>,
    /// `4h x h`
    pub w_recurrent: Vec<f64>,
    /// `4h`
    pub bias: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w_input: vec![0.0; 4 * hidden_dim * input_dim],
            w_recurrent: vec![0.0; 4 * hidden_dim * hidden_dim],
            bias: vec![0.0; 4 * hidden_dim],
        }
    }

    pub fn param_count(&self) -> usize {
        self.w_input.len() + self.w_recurrent.len() + self.bias.len()
    }

    fn check(&self) -> Result<()> {
        let h4 = 4 * self.hidden_dim;
        if self.hidden_dim == 0
            || self.input_dim == 0
            || self.w_input.len() != h4 * self.input_dim
            || self.w_recurrent.len() != h4 * self.hidden_dim
            || self.bias.len() != h4
        {
            return Err(Error::ShapeMismatch(format!(
                "lstm layer {}->{} has inconsistent arrays",
                self.input_dim, self.hidden_dim
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub input_dim: usize,
    pub output_dim: usize,
    /// `output_dim x input_dim`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    /// Scalar probability computed from the final hidden state.
    Sigmoid,
    /// One output row per timestep.
    Linear,
}

/// Shape and initialization recipe for a [`SequenceNet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: OutputActivation,
    pub init_scale: f64,
    pub forget_bias: f64,
}

impl NetArch {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, activation: OutputActivation) -> Self {
        Self {
            input_dim,
            hidden,
            output_dim,
            activation,
            init_scale: 0.08,
            forget_bias: 1.0,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SequenceNet {
    pub format_version: u32,
    pub lstm: Vec<LstmLayerParams>,
    pub dense: DenseParams,
    pub activation: OutputActivation,
    #[serde(skip, default = "fresh_uid")]
    uid: u64,
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for SequenceNet {
    fn eq(&self, other: &Self) -> bool {
        self.format_version == other.format_version
            && self.lstm == other.lstm
            && self.dense == other.dense
            && self.activation == other.activation
    }
}

impl Clone for SequenceNet {
    fn clone(&self) -> Self {
        Self {
            format_version: self.format_version,
            lstm: self.lstm.clone(),
            dense: self.dense.clone(),
            activation: self.activation,
            uid: fresh_uid(),
            generation: 0,
        }
    }
}

#[derive(Clone, Debug)]
struct LayerCache {
    inputs: Sequence,
    /// Post-activation gates per step, `[i, f, g, o]` blocks.
    gates: Vec<Vec<f64>>,
    cells: Sequence,
    hidden: Sequence,
}

/// Activations retained by [`SequenceNet::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    uid: u64,
    generation: u64,
    layers: Vec<LayerCache>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Parameter gradients (same order and lengths as [`SequenceNet::params`])
/// plus the gradient with respect to the input sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: Vec<Vec<f64>>,
    pub input: Sequence,
}

impl Gradients {
    pub fn zeros_like(net: &SequenceNet) -> Vec<Vec<f64>> {
        net.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    pub fn norm(params: &[Vec<f64>]) -> f64 {
        params.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescales `params` so that its global L2 norm is at most `max_norm`.
    pub fn clip_norm(params: &mut [Vec<f64>], max_norm: f64) {
        let n = Self::norm(params);
        if n > max_norm && n > 0.0 {
            let s = max_norm / n;
            params.iter_mut().flatten().for_each(|g| *g *= s);
        }
    }
}

impl SequenceNet {
    /// Uniform initialization in `[-init_scale, init_scale]`, with the
    /// forget-gate bias set to `forget_bias`.
    pub fn new(arch: &NetArch, seed: u64) -> Result<Self> {
        if arch.hidden.is_empty() || arch.hidden.len() > 2 {
            return Err(Error::InvalidConfig("networks have one or two LSTM layers".into()));
        }
        if arch.input_dim == 0 || arch.output_dim == 0 || arch.hidden.contains(&0) {
            return Err(Error::InvalidConfig("network dimensions must be positive".into()));
        }
        if arch.activation == OutputActivation::Sigmoid && arch.output_dim != 1 {
            return Err(Error::InvalidConfig("sigmoid head produces a single score".into()));
        }
        let mut rng = rng_from_seed(seed);
        let scale = arch.init_scale;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| if scale > 0.0 { rng.random_range(-scale..=scale) } else { 0.0 })
                .collect()
        };
        let mut lstm = Vec::new();
        let mut d_in = arch.input_dim;
        for &h in &arch.hidden {
            let mut layer = LstmLayerParams {
                input_dim: d_in,
                hidden_dim: h,
                w_input: draw(4 * h * d_in),
                w_recurrent: draw(4 * h * h),
                bias: vec![0.0; 4 * h],
            };
            layer.bias[h..2 * h].iter_mut().for_each(|b| *b = arch.forget_bias);
            lstm.push(layer);
            d_in = h;
        }
        let dense = DenseParams {
            input_dim: d_in,
            output_dim: arch.output_dim,
            weight: draw(arch.output_dim * d_in),
            bias: vec![0.0; arch.output_dim],
        };
        let net = Self {
            format_version: NET_FORMAT_VERSION,
            lstm,
            dense,
            activation: arch.activation,
            uid: fresh_uid(),
            generation: 0,
        };
        net.validate()?;
        Ok(net)
    }

    /// All parameters zero (forget bias included).
    pub fn zeros(arch: &NetArch) -> Result<Self> {
        let arch = NetArch {
            init_scale: 0.0,
            forget_bias: 0.0,
            ..arch.clone()
        };
        Self::new(&arch, 0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != NET_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: self.format_version,
                expected: NET_FORMAT_VERSION,
            });
        }
        if self.lstm.is_empty() || self.lstm.len() > 2 {
            return Err(Error::ShapeMismatch("expected 1 or 2 LSTM layers".into()));
        }
        for l in &self.lstm {
            l.check()?;
        }
        for w in self.lstm.windows(2) {
            if w[1].input_dim != w[0].hidden_dim {
                return Err(Error::ShapeMismatch("LSTM layer dimensions do not chain".into()));
            }
        }
        let d = &self.dense;
        if d.input_dim != self.lstm[self.lstm.len() - 1].hidden_dim
            || d.weight.len() != d.input_dim * d.output_dim
            || d.bias.len() != d.output_dim
            || (self.activation == OutputActivation::Sigmoid && d.output_dim != 1)
        {
            return Err(Error::ShapeMismatch("dense head inconsistent with LSTM stack".into()));
        }
        if self.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::ShapeMismatch("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.lstm[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.dense.output_dim
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameter tensors in fixed order: per layer `w_input, w_recurrent,
    /// bias`, then dense `weight, bias`.
    pub fn params(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::with_capacity(3 * self.lstm.len() + 2);
        for l in &self.lstm {
            out.extend([&l.w_input, &l.w_recurrent, &l.bias]);
        }
        out.extend([&self.dense.weight, &self.dense.bias]);
        out
    }

    /// Mutable view of the parameters; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.generation += 1;
        let mut out = Vec::with_capacity(3 * self.lstm.len() + 2);
        for l in &mut self.lstm {
            out.push(&mut l.w_input);
            out.push(&mut l.w_recurrent);
            out.push(&mut l.bias);
        }
        out.push(&mut self.dense.weight);
        out.push(&mut self.dense.bias);
        out
    }

    /// Order-sensitive hash of every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.params().into_iter().flatten() {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    pub fn predict(&self, seq: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.forward(seq).map(|(out, _)| out)
    }

    /// Runs the stack over `seq` (`T x input_dim`). The sigmoid head yields
    /// one value; the linear head yields `T * output_dim` values, row-major.
    pub fn forward(&self, seq: &[Vec<f64>]) -> Result<(Vec<f64>, ForwardCache)> {
        if seq.is_empty() {
            return Err(Error::ShapeMismatch("empty input sequence".into()));
        }
        if let Some(row) = seq.iter().find(|r| r.len() != self.input_dim()) {
            return Err(Error::ShapeMismatch(format!(
                "input rows have {} channels, network expects {}",
                row.len(),
                self.input_dim()
            )));
        }
        if seq.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }

        let mut layers = Vec::with_capacity(self.lstm.len());
        let mut inputs: Sequence = seq.to_vec();
        for layer in &self.lstm {
            let cache = lstm_forward(layer, inputs);
            inputs = cache.hidden.clone();
            layers.push(cache);
        }
        let top = &layers[layers.len() - 1].hidden;
        let d = &self.dense;
        let output = match self.activation {
            OutputActivation::Sigmoid => {
                let mut z = d.bias.clone();
                matvec_acc(&d.weight, d.input_dim, &top[top.len() - 1], &mut z);
                vec![sigmoid(z[0])]
            }
            OutputActivation::Linear => {
                let mut out = Vec::with_capacity(top.len() * d.output_dim);
                for h in top {
                    let mut z = d.bias.clone();
                    matvec_acc(&d.weight, d.input_dim, h, &mut z);
                    out.extend(z);
                }
                out
            }
        };
        let cache = ForwardCache {
            uid: self.uid,
            generation: self.generation,
            layers,
            output: output.clone(),
        };
        Ok((output, cache))
    }

    /// Backpropagation through time. `output_grad` is dLoss/dOutput in the
    /// layout returned by [`forward`](Self::forward).
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<Gradients> {
        if cache.uid != self.uid || cache.generation != self.generation {
            return Err(Error::StaleCache);
        }
        if output_grad.len() != cache.output.len() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient has {} values, expected {}",
                output_grad.len(),
                cache.output.len()
            )));
        }
        let mut grads = Gradients {
            params: Gradients::zeros_like(self),
            input: Vec::new(),
        };
        let n_layers = self.lstm.len();
        let top = &cache.layers[n_layers - 1].hidden;
        let steps = top.len();
        let d = &self.dense;

        // Dense head: gradient w.r.t. the top hidden sequence.
        let mut dh_above: Sequence = vec![vec![0.0; d.input_dim]; steps];
        {
            let (dw, db) = grads.params.split_at_mut(3 * n_layers + 1);
            let (dw, db) = (&mut dw[3 * n_layers], &mut db[0]);
            match self.activation {
                OutputActivation::Sigmoid => {
                    let p = cache.output[0];
                    let dz = [output_grad[0] * p * (1.0 - p)];
                    outer_acc(dw, d.input_dim, &dz, &top[steps - 1]);
                    db[0] += dz[0];
                    matvec_t_acc(&d.weight, d.input_dim, &dz, &mut dh_above[steps - 1]);
                }
                OutputActivation::Linear => {
                    for (t, h) in top.iter().enumerate() {
                        let dz = &output_grad[t * d.output_dim..(t + 1) * d.output_dim];
                        outer_acc(dw, d.input_dim, dz, h);
                        for (b, g) in db.iter_mut().zip(dz) {
                            *b += g;
                        }
                        matvec_t_acc(&d.weight, d.input_dim, dz, &mut dh_above[t]);
                    }
                }
            }
        }

        for li in (0..n_layers).rev() {
            let (head, _) = grads.params.split_at_mut(3 * li + 3);
            let [dwx, dwh, db] = &mut head[3 * li..3 * li + 3] else {
                unreachable!()
            };
            dh_above = lstm_backward(&self.lstm[li], &cache.layers[li], &dh_above, dwx, dwh, db);
        }
        grads.input = dh_above;
        Ok(grads)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let net: Self = serde_json::from_str(s)?;
        net.validate()?;
        Ok(net)
    }
}

fn lstm_forward(p: &LstmLayerParams, inputs: Sequence) -> LayerCache {
    let h = p.hidden_dim;
    let steps = inputs.len();
    let mut gates = Vec::with_capacity(steps);
    let mut cells = Vec::with_capacity(steps);
    let mut hidden: Sequence = Vec::with_capacity(steps);
    let zeros = vec![0.0; h];
    for (t, x) in inputs.iter().enumerate() {
        let (h_prev, c_prev) = if t == 0 {
            (&zeros, &zeros)
        } else {
            (&hidden[t - 1], &cells[t - 1])
        };
        let mut z = p.bias.clone();
        matvec_acc(&p.w_input, p.input_dim, x, &mut z);
        matvec_acc(&p.w_recurrent, h, h_prev, &mut z);
        for (k, v) in z.iter_mut().enumerate() {
            *v = if (2 * h..3 * h).contains(&k) { v.tanh() } else { sigmoid(*v) };
        }
        let mut c = vec![0.0; h];
        let mut hn = vec![0.0; h];
        for j in 0..h {
            c[j] = z[h + j] * c_prev[j] + z[j] * z[2 * h + j];
            hn[j] = z[3 * h + j] * c[j].tanh();
        }
        gates.push(z);
        cells.push(c);
        hidden.push(hn);
    }
    LayerCache {
        inputs,
        gates,
        cells,
        hidden,
    }
}

/// Returns the gradient w.r.t. the layer inputs.
fn lstm_backward(
    p: &LstmLayerParams,
    cache: &LayerCache,
    dh_above: &[Vec<f64>],
    dwx: &mut [f64],
    dwh: &mut [f64],
    db: &mut [f64],
) -> Sequence {
    let h = p.hidden_dim;
    let steps = cache.inputs.len();
    let mut dx: Sequence = vec![vec![0.0; p.input_dim]; steps];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let zeros = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for t in (0..steps).rev() {
        let g = &cache.gates[t];
        let c = &cache.cells[t];
        let c_prev = if t == 0 { &zeros } else { &cache.cells[t - 1] };
        let h_prev = if t == 0 { &zeros } else { &cache.hidden[t - 1] };
        for j in 0..h {
            let (gi, gf, gg, go) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let dh = dh_above[t][j] + dh_next[j];
            let tc = c[j].tanh();
            let dc = dh * go * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * gg * gi * (1.0 - gi);
            dz[h + j] = dc * c_prev[j] * gf * (1.0 - gf);
            dz[2 * h + j] = dc * gi * (1.0 - gg * gg);
            dz[3 * h + j] = dh * tc * go * (1.0 - go);
            dc_next[j] = dc * gf;
        }
        outer_acc(dwx, p.input_dim, &dz, &cache.inputs[t]);
        outer_acc(dwh, h, &dz, h_prev);
        for (b, v) in db.iter_mut().zip(&dz) {
            *b += v;
        }
        matvec_t_acc(&p.w_input, p.input_dim, &dz, &mut dx[t]);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        matvec_t_acc(&p.w_recurrent, h, &dz, &mut dh_next);
    }
    dx
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn for_net(config: AdamConfig, net: &SequenceNet) -> Self {
        let shapes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        Self::new(config, &shapes)
    }

    pub fn step(&mut self, params: Vec<&mut Vec<f64>>, grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam: {} parameter tensors, {} gradients, {} moments",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::ShapeMismatch("adam: tensor length mismatch".into()));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

pub fn adam_step(params: Vec<&mut Vec<f64>>, grads: &[Vec<f64>], state: &mut AdamState) -> Result<()> {
    state.step(params, grads)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    Mse,
}

/// Mean loss over all elements and its gradient w.r.t. `prediction`.
pub fn compute_loss(kind: LossKind, prediction: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if prediction.len() != target.len() || prediction.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "loss: {} predictions vs {} targets",
            prediction.len(),
            target.len()
        )));
    }
    let n = prediction.len() as f64;
    match kind {
        LossKind::Bce => {
            let mut loss = 0.0;
            let grad = prediction
                .iter()
                .zip(target)
                .map(|(&p, &y)| {
                    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                    loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
                    (-y / p + (1.0 - y) / (1.0 - p)) / n
                })
                .collect();
            Ok((loss / n, grad))
        }
        LossKind::Mse => {
            let mut loss = 0.0;
            let grad = prediction
                .iter()
                .zip(target)
                .map(|(&p, &y)| {
                    loss += (p - y) * (p - y);
                    2.0 * (p - y) / n
                })
                .collect();
            Ok((loss / n, grad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(hidden: Vec<usize>, act: OutputActivation) -> NetArch {
        let out = if act == OutputActivation::Sigmoid { 1 } else { 2 };
        NetArch::new(3, hidden, out, act)
    }

    fn random_seq(t: usize, d: usize, seed: u64) -> Sequence {
        let mut rng = rng_from_seed(seed);
        (0..t).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn zero_net_outputs_half() {
        let net = SequenceNet::zeros(&arch(vec![4, 3], OutputActivation::Sigmoid)).unwrap();
        assert_eq!(net.predict(&random_seq(5, 3, 1)).unwrap(), vec![0.5]);
    }

    #[test]
    fn zero_input_fixed_point() {
        let mut net = SequenceNet::new(&arch(vec![4], OutputActivation::Linear), 3).unwrap();
        for l in &mut net.lstm {
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        net.dense.bias.iter_mut().for_each(|b| *b = 0.0);
        let (out, cache) = net.forward(&vec![vec![0.0; 3]; 6]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert!(cache.layers[0].hidden.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_output_range() {
        for seed in 0..1000 {
            let mut a = arch(vec![3], OutputActivation::Sigmoid);
            a.init_scale = 2.0;
            let net = SequenceNet::new(&a, seed).unwrap();
            let p = net.predict(&random_seq(4, 3, seed + 7)).unwrap()[0];
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let net = SequenceNet::new(&arch(vec![5, 4], OutputActivation::Linear), 11).unwrap();
        let s = random_seq(7, 3, 2);
        let a = net.predict(&s).unwrap();
        let b = net.predict(&s).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn param_count_formula() {
        let net = SequenceNet::new(&NetArch::new(2, vec![32, 16], 2, OutputActivation::Linear), 0).unwrap();
        let lstm = 4 * (2 * 32 + 32 * 32 + 32) + 4 * (32 * 16 + 16 * 16 + 16);
        assert_eq!(net.param_count(), lstm + 16 * 2 + 2);
        for l in &net.lstm {
            assert_eq!(l.param_count(), 4 * (l.input_dim * l.hidden_dim + l.hidden_dim.pow(2) + l.hidden_dim));
        }
    }

    #[test]
    fn shape_and_input_errors() {
        let net = SequenceNet::new(&arch(vec![4], OutputActivation::Sigmoid), 0).unwrap();
        assert!(matches!(net.predict(&random_seq(3, 2, 0)), Err(Error::ShapeMismatch(_))));
        let mut s = random_seq(3, 3, 0);
        s[1][2] = f64::NAN;
        assert!(matches!(net.predict(&s), Err(Error::NonFiniteInput)));
    }

    #[test]
    fn stale_cache_is_detected() {
        let mut net = SequenceNet::new(&arch(vec![4], OutputActivation::Sigmoid), 0).unwrap();
        let (_, cache) = net.forward(&random_seq(3, 3, 0)).unwrap();
        let other = net.clone();
        assert!(matches!(other.backward(&cache, &[1.0]), Err(Error::StaleCache)));
        net.params_mut()[0][0] += 0.1;
        assert!(matches!(net.backward(&cache, &[1.0]), Err(Error::StaleCache)));
    }

    #[test]
    fn backward_is_linear_in_output_gradient() {
        let net = SequenceNet::new(&arch(vec![4, 3], OutputActivation::Linear), 5).unwrap();
        let (out, cache) = net.forward(&random_seq(6, 3, 9)).unwrap();
        let zero = net.backward(&cache, &vec![0.0; out.len()]).unwrap();
        assert!(zero.params.iter().flatten().all(|&g| g == 0.0));
        let g: Vec<f64> = (0..out.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let g2: Vec<f64> = g.iter().map(|v| 2.0 * v).collect();
        let a = net.backward(&cache, &g).unwrap();
        let b = net.backward(&cache, &g2).unwrap();
        for (x, y) in a.params.iter().flatten().zip(b.params.iter().flatten()) {
            assert!((2.0 * x - y).abs() <= 1e-15 * y.abs().max(1.0));
        }
    }

    #[test]
    fn adam_first_step() {
        let mut st = AdamState::new(AdamConfig::default(), &[1]);
        let mut p = vec![0.0];
        st.step(vec![&mut p], &[vec![1.0]]).unwrap();
        assert!((p[0] - (-2e-4 / (1.0 + 1e-8))).abs() < 1e-18);

        let mut st = AdamState::new(AdamConfig::default(), &[1]);
        let mut q = vec![0.0];
        st.step(vec![&mut q], &[vec![-1.0]]).unwrap();
        assert_eq!(q[0], -p[0]);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut st = AdamState::new(AdamConfig::default(), &[3]);
        let mut p = vec![1.0, -2.0, 3.0];
        st.step(vec![&mut p], &[vec![0.0; 3]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(st.step, 1);
        assert!(matches!(st.step(vec![&mut p], &[vec![0.0; 2]]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn loss_examples() {
        let (l, _) = compute_loss(LossKind::Bce, &[0.5], &[1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let (l, g) = compute_loss(LossKind::Mse, &[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let (l, g) = compute_loss(LossKind::Bce, &[1.0], &[1.0]).unwrap();
        assert!(l.is_finite() && (l - 1e-7).abs() < 1e-12);
        assert!(g[0].is_finite());
        assert!(compute_loss(LossKind::Mse, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn json_round_trip_preserves_outputs() {
        let net = SequenceNet::new(&arch(vec![4, 3], OutputActivation::Linear), 21).unwrap();
        let back = SequenceNet::from_json(&net.to_json().unwrap()).unwrap();
        let s = random_seq(5, 3, 4);
        assert_eq!(net.predict(&s).unwrap(), back.predict(&s).unwrap());
        let mut bad: serde_json::Value = serde_json::from_str(&net.to_json().unwrap()).unwrap();
        bad["dense"]["bias"] = serde_json::json!([0.0]);
        assert!(SequenceNet::from_json(&bad.to_string()).is_err());
    }

    #[test]
    fn small_steps_reduce_loss() {
        let mut net = SequenceNet::new(&NetArch::new(2, vec![4], 1, OutputActivation::Linear), 3).unwrap();
        let batch: Vec<(Sequence, Vec<f64>)> = (0..8)
            .map(|k| {
                let s = random_seq(5, 2, 100 + k);
                let target = s.iter().map(|r| 0.5 * r[0] - r[1]).collect();
                (s, target)
            })
            .collect();
        let eval = |net: &SequenceNet| -> (f64, Vec<Vec<f64>>) {
            let mut total = 0.0;
            let mut acc = Gradients::zeros_like(net);
            for (s, y) in &batch {
                let (out, cache) = net.forward(s).unwrap();
                let (l, g) = compute_loss(LossKind::Mse, &out, y).unwrap();
                total += l;
                let gr = net.backward(&cache, &g).unwrap();
                for (a, b) in acc.iter_mut().zip(gr.params) {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                }
            }
            (total, acc)
        };
        let mut adam = AdamState::for_net(AdamConfig { learning_rate: 1e-5, ..Default::default() }, &net);
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            let (l, g) = eval(&net);
            assert!(l <= prev + 1e-12, "loss rose from {prev} to {l}");
            prev = l;
            adam.step(net.params_mut(), &g).unwrap();
        }
    }
}
