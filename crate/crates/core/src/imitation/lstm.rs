//! From-scratch recurrent policy: a stack of LSTM layers with the planar
//! object coordinates injected additively into every layer's gate
//! pre-activations through learned 2-column maps, a linear output head,
//! exact backpropagation through time, and Adam.
//!
//! All parameters live in one flat `Vec<f64>` (layer blocks of W_x, W_h,
//! W_c, bias, then the output head), which keeps the optimizer, the
//! serialization and the finite-difference checks trivial and bit-stable.

use crate::binio;
use std::io::{self, Read, Write};

/// Width of the injected coordinate vector (x, y).
pub const COORD_WIDTH: usize = 2;

/// Network shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyConfig {
    /// Number of stacked LSTM layers.
    pub layers: usize,
    /// Hidden units per layer.
    pub hidden: usize,
    /// Per-step state input width (without coordinates).
    pub state_width: usize,
    /// Output width.
    pub output_width: usize,
}

impl PolicyConfig {
    /// Full-size stack: 8 layers of 120 units.
    pub fn paper(state_width: usize, output_width: usize) -> Self {
        PolicyConfig { layers: 8, hidden: 120, state_width, output_width }
    }

    /// Small stack for fast desk-scale experiments: 2 layers of 16 units.
    pub fn desk(state_width: usize, output_width: usize) -> Self {
        PolicyConfig { layers: 2, hidden: 16, state_width, output_width }
    }

    fn layer_input_width(&self, layer: usize) -> usize {
        if layer == 0 {
            self.state_width
        } else {
            self.hidden
        }
    }

    /// Total parameter count.
    pub fn param_count(&self) -> usize {
        let h = self.hidden;
        let mut total = 0;
        for l in 0..self.layers {
            let input = self.layer_input_width(l);
            total += 4 * h * input + 4 * h * h + 4 * h * COORD_WIDTH + 4 * h;
        }
        total + self.output_width * h + self.output_width
    }
}

/// Offsets of one layer's blocks in the flat weight vector.
#[derive(Clone, Copy, Debug)]
struct LayerOffsets {
    w_x: usize,
    input_width: usize,
    w_h: usize,
    w_c: usize,
    bias: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    layers: Vec<LayerOffsets>,
    w_out: usize,
    b_out: usize,
    total: usize,
}

impl Layout {
    fn new(cfg: &PolicyConfig) -> Layout {
        let h = cfg.hidden;
        let mut offset = 0;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let input_width = cfg.layer_input_width(l);
            let w_x = offset;
            offset += 4 * h * input_width;
            let w_h = offset;
            offset += 4 * h * h;
            let w_c = offset;
            offset += 4 * h * COORD_WIDTH;
            let bias = offset;
            offset += 4 * h;
            layers.push(LayerOffsets { w_x, input_width, w_h, w_c, bias });
        }
        let w_out = offset;
        offset += cfg.output_width * h;
        let b_out = offset;
        offset += cfg.output_width;
        Layout { layers, w_out, b_out, total: offset }
    }
}

/// Adam first/second moment accumulators and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

impl AdamState {
    fn zeros(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

/// Weights and optimizer state of the recurrent policy.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub cfg: PolicyConfig,
    pub weights: Vec<f64>,
    pub adam: AdamState,
}

impl NetworkParams {
    /// All-zero network: outputs zero for any input.
    pub fn zeros(cfg: PolicyConfig) -> Self {
        let total = cfg.param_count();
        NetworkParams { cfg, weights: vec![0.0; total], adam: AdamState::zeros(total) }
    }

    /// Seeded uniform init, 1/sqrt(fan-in) scale per block, forget-gate
    /// biases at 1.
    pub fn init_seeded(cfg: PolicyConfig, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let layout = Layout::new(&cfg);
        let mut net = NetworkParams::zeros(cfg);
        let h = cfg.hidden;
        for (l, off) in layout.layers.iter().enumerate() {
            let sx = 1.0 / (cfg.layer_input_width(l) as f64).sqrt();
            let sh = 1.0 / (h as f64).sqrt();
            for k in 0..4 * h * off.input_width {
                net.weights[off.w_x + k] = rng.gen_range(-sx..sx);
            }
            for k in 0..4 * h * h {
                net.weights[off.w_h + k] = rng.gen_range(-sh..sh);
            }
            for k in 0..4 * h * COORD_WIDTH {
                net.weights[off.w_c + k] = rng.gen_range(-sh..sh);
            }
            for k in 0..h {
                net.weights[off.bias + h + k] = 1.0; // forget gate
            }
        }
        let so = 1.0 / (h as f64).sqrt();
        for k in 0..cfg.output_width * h {
            net.weights[layout.w_out + k] = rng.gen_range(-so..so);
        }
        net
    }

    /// Full input width of one step: state plus coordinates.
    pub fn input_width(&self) -> usize {
        self.cfg.state_width + COORD_WIDTH
    }

    pub fn write<W: Write>(&self, w: &mut W) -> io::Result<()> {
        binio::write_u32(w, self.cfg.layers as u32)?;
        binio::write_u32(w, self.cfg.hidden as u32)?;
        binio::write_u32(w, self.cfg.state_width as u32)?;
        binio::write_u32(w, self.cfg.output_width as u32)?;
        binio::write_f64_slice(w, &self.weights)?;
        binio::write_f64_slice(w, &self.adam.m)?;
        binio::write_f64_slice(w, &self.adam.v)?;
        binio::write_u64(w, self.adam.step)
    }

    pub fn read<R: Read>(r: &mut R) -> io::Result<Self> {
        let cfg = PolicyConfig {
            layers: binio::read_u32(r)? as usize,
            hidden: binio::read_u32(r)? as usize,
            state_width: binio::read_u32(r)? as usize,
            output_width: binio::read_u32(r)? as usize,
        };
        let weights = binio::read_f64_vec(r)?;
        let m = binio::read_f64_vec(r)?;
        let v = binio::read_f64_vec(r)?;
        let step = binio::read_u64(r)?;
        if weights.len() != cfg.param_count() || m.len() != weights.len() || v.len() != weights.len()
        {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "weight size mismatch"));
        }
        Ok(NetworkParams { cfg, weights, adam: AdamState { m, v, step } })
    }
}

/// Recurrent state: hidden and cell vectors per layer. Zero at episode
/// start.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl HiddenState {
    pub fn zeros(cfg: &PolicyConfig) -> Self {
        HiddenState {
            h: vec![vec![0.0; cfg.hidden]; cfg.layers],
            c: vec![vec![0.0; cfg.hidden]; cfg.layers],
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub(crate) struct StepCache {
    layer_input: Vec<Vec<f64>>,
    h_prev: Vec<Vec<f64>>,
    c_prev: Vec<Vec<f64>>,
    gate_i: Vec<Vec<f64>>,
    gate_f: Vec<Vec<f64>>,
    gate_g: Vec<Vec<f64>>,
    gate_o: Vec<Vec<f64>>,
    tanh_c: Vec<Vec<f64>>,
    pub(crate) preact: Vec<Vec<f64>>,
    h_top: Vec<f64>,
    coords: [f64; 2],
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One recurrent step. `input` is the normalized state followed by the two
/// coordinates; the returned vector is the normalized predicted command.
pub fn policy_forward(net: &NetworkParams, input: &[f64], hidden: &mut HiddenState) -> Vec<f64> {
    forward_step(net, input, hidden, None)
}

pub(crate) fn forward_step(
    net: &NetworkParams,
    input: &[f64],
    hidden: &mut HiddenState,
    mut cache: Option<&mut StepCache>,
) -> Vec<f64> {
    let cfg = &net.cfg;
    assert_eq!(input.len(), cfg.state_width + COORD_WIDTH, "input width mismatch");
    let layout = Layout::new(cfg);
    let h = cfg.hidden;
    let w = &net.weights;
    let coords = [input[cfg.state_width], input[cfg.state_width + 1]];
    let mut layer_in: Vec<f64> = input[..cfg.state_width].to_vec();

    for (l, off) in layout.layers.iter().enumerate() {
        let mut preact = vec![0.0; 4 * h];
        for r in 0..4 * h {
            let mut acc = w[off.bias + r];
            let wx = &w[off.w_x + r * off.input_width..off.w_x + (r + 1) * off.input_width];
            for (c, x) in layer_in.iter().enumerate() {
                acc += wx[c] * x;
            }
            let wh = &w[off.w_h + r * h..off.w_h + (r + 1) * h];
            for (c, x) in hidden.h[l].iter().enumerate() {
                acc += wh[c] * x;
            }
            acc += w[off.w_c + r * COORD_WIDTH] * coords[0]
                + w[off.w_c + r * COORD_WIDTH + 1] * coords[1];
            preact[r] = acc;
        }
        let mut gate_i = vec![0.0; h];
        let mut gate_f = vec![0.0; h];
        let mut gate_g = vec![0.0; h];
        let mut gate_o = vec![0.0; h];
        for k in 0..h {
            gate_i[k] = sigmoid(preact[k]);
            gate_f[k] = sigmoid(preact[h + k]);
            gate_g[k] = preact[2 * h + k].tanh();
            gate_o[k] = sigmoid(preact[3 * h + k]);
        }
        let c_prev = hidden.c[l].clone();
        let h_prev = hidden.h[l].clone();
        let mut c_new = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        let mut h_new = vec![0.0; h];
        for k in 0..h {
            c_new[k] = gate_f[k] * c_prev[k] + gate_i[k] * gate_g[k];
            tanh_c[k] = c_new[k].tanh();
            h_new[k] = gate_o[k] * tanh_c[k];
        }
        hidden.c[l] = c_new;
        hidden.h[l] = h_new.clone();

        if let Some(cache) = cache.as_deref_mut() {
            cache.layer_input.push(std::mem::take(&mut layer_in));
            cache.h_prev.push(h_prev);
            cache.c_prev.push(c_prev);
            cache.gate_i.push(gate_i);
            cache.gate_f.push(gate_f);
            cache.gate_g.push(gate_g);
            cache.gate_o.push(gate_o);
            cache.tanh_c.push(tanh_c);
            cache.preact.push(preact);
        }
        layer_in = h_new;
    }

    let mut output = vec![0.0; cfg.output_width];
    for r in 0..cfg.output_width {
        let mut acc = w[layout.b_out + r];
        let row = &w[layout.w_out + r * h..layout.w_out + (r + 1) * h];
        for (c, x) in layer_in.iter().enumerate() {
            acc += row[c] * x;
        }
        output[r] = acc;
    }
    if let Some(cache) = cache {
        cache.h_top = layer_in;
        cache.coords = coords;
    }
    output
}

pub(crate) fn empty_cache() -> StepCache {
    StepCache {
        layer_input: Vec::new(),
        h_prev: Vec::new(),
        c_prev: Vec::new(),
        gate_i: Vec::new(),
        gate_f: Vec::new(),
        gate_g: Vec::new(),
        gate_o: Vec::new(),
        tanh_c: Vec::new(),
        preact: Vec::new(),
        h_top: Vec::new(),
        coords: [0.0; 2],
    }
}

/// Backward pass over a window of cached steps. `d_outputs[t]` is dL/dy at
/// step t. Gradients accumulate into `grads`; the derivative into the hidden
/// state entering the window is dropped (truncation boundary).
pub(crate) fn backward_window(
    net: &NetworkParams,
    caches: &[StepCache],
    d_outputs: &[Vec<f64>],
    grads: &mut [f64],
) {
    let cfg = &net.cfg;
    let layout = Layout::new(cfg);
    let h = cfg.hidden;
    let w = &net.weights;
    assert_eq!(caches.len(), d_outputs.len());
    assert_eq!(grads.len(), layout.total);

    let mut dh_time = vec![vec![0.0; h]; cfg.layers];
    let mut dc_time = vec![vec![0.0; h]; cfg.layers];

    for t in (0..caches.len()).rev() {
        let cache = &caches[t];
        let dy = &d_outputs[t];

        // Output head.
        let mut dh_from_above = vec![0.0; h];
        for r in 0..cfg.output_width {
            grads[layout.b_out + r] += dy[r];
            let row = layout.w_out + r * h;
            for c in 0..h {
                grads[row + c] += dy[r] * cache.h_top[c];
                dh_from_above[c] += w[row + c] * dy[r];
            }
        }

        for l in (0..cfg.layers).rev() {
            let off = layout.layers[l];
            let mut dh = dh_time[l].clone();
            for k in 0..h {
                dh[k] += dh_from_above[k];
            }

            let gate_i = &cache.gate_i[l];
            let gate_f = &cache.gate_f[l];
            let gate_g = &cache.gate_g[l];
            let gate_o = &cache.gate_o[l];
            let tanh_c = &cache.tanh_c[l];
            let c_prev = &cache.c_prev[l];

            let mut dc = dc_time[l].clone();
            let mut da = vec![0.0; 4 * h];
            for k in 0..h {
                dc[k] += dh[k] * gate_o[k] * (1.0 - tanh_c[k] * tanh_c[k]);
                let d_o = dh[k] * tanh_c[k];
                let d_i = dc[k] * gate_g[k];
                let d_g = dc[k] * gate_i[k];
                let d_f = dc[k] * c_prev[k];
                da[k] = d_i * gate_i[k] * (1.0 - gate_i[k]);
                da[h + k] = d_f * gate_f[k] * (1.0 - gate_f[k]);
                da[2 * h + k] = d_g * (1.0 - gate_g[k] * gate_g[k]);
                da[3 * h + k] = d_o * gate_o[k] * (1.0 - gate_o[k]);
                dc_time[l][k] = dc[k] * gate_f[k];
            }

            let input = &cache.layer_input[l];
            let h_prev = &cache.h_prev[l];
            let mut d_input = vec![0.0; off.input_width];
            let mut dh_prev = vec![0.0; h];
            for r in 0..4 * h {
                let dar = da[r];
                grads[off.bias + r] += dar;
                let wx_row = off.w_x + r * off.input_width;
                for c in 0..off.input_width {
                    grads[wx_row + c] += dar * input[c];
                    d_input[c] += w[wx_row + c] * dar;
                }
                let wh_row = off.w_h + r * h;
                for c in 0..h {
                    grads[wh_row + c] += dar * h_prev[c];
                    dh_prev[c] += w[wh_row + c] * dar;
                }
                grads[off.w_c + r * COORD_WIDTH] += dar * cache.coords[0];
                grads[off.w_c + r * COORD_WIDTH + 1] += dar * cache.coords[1];
            }
            dh_time[l] = dh_prev;
            if l > 0 {
                dh_from_above = d_input;
            }
        }
    }
}

/// Mean squared error of the network over one sequence plus its analytic
/// gradient. Inputs carry the coordinates as their last two channels; the
/// hidden state starts at zero and the sequence is processed without
/// truncation.
pub fn sequence_gradients(
    net: &NetworkParams,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> (f64, Vec<f64>) {
    assert_eq!(inputs.len(), targets.len());
    let steps = inputs.len();
    let out_width = net.cfg.output_width;
    let scale = 1.0 / (steps * out_width) as f64;
    let mut hidden = HiddenState::zeros(&net.cfg);
    let mut caches = Vec::with_capacity(steps);
    let mut d_outputs = Vec::with_capacity(steps);
    let mut loss = 0.0;
    for (input, target) in inputs.iter().zip(targets) {
        let mut cache = empty_cache();
        let y = forward_step(net, input, &mut hidden, Some(&mut cache));
        let mut dy = vec![0.0; out_width];
        for k in 0..out_width {
            let e = y[k] - target[k];
            loss += e * e * scale;
            dy[k] = 2.0 * e * scale;
        }
        caches.push(cache);
        d_outputs.push(dy);
    }
    let mut grads = vec![0.0; net.weights.len()];
    backward_window(net, &caches, &d_outputs, &mut grads);
    (loss, grads)
}

/// Loss only, for finite-difference oracles.
pub fn sequence_loss(net: &NetworkParams, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    let steps = inputs.len();
    let out_width = net.cfg.output_width;
    let scale = 1.0 / (steps * out_width) as f64;
    let mut hidden = HiddenState::zeros(&net.cfg);
    let mut loss = 0.0;
    for (input, target) in inputs.iter().zip(targets) {
        let y = forward_step(net, input, &mut hidden, None);
        for k in 0..out_width {
            let e = y[k] - target[k];
            loss += e * e * scale;
        }
    }
    loss
}

/// One Adam update of the flat weight vector.
pub fn adam_step(net: &mut NetworkParams, grads: &[f64], lr: f64) {
    assert_eq!(grads.len(), net.weights.len());
    let adam = &mut net.adam;
    adam.step += 1;
    let t = adam.step as i32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t);
    let bias2 = 1.0 - ADAM_BETA2.powi(t);
    for k in 0..grads.len() {
        adam.m[k] = ADAM_BETA1 * adam.m[k] + (1.0 - ADAM_BETA1) * grads[k];
        adam.v[k] = ADAM_BETA2 * adam.v[k] + (1.0 - ADAM_BETA2) * grads[k] * grads[k];
        let m_hat = adam.m[k] / bias1;
        let v_hat = adam.v[k] / bias2;
        net.weights[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sequence(
        net: &NetworkParams,
        steps: usize,
        seed: u64,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = (0..steps)
            .map(|_| (0..net.input_width()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let targets = (0..steps)
            .map(|_| (0..net.cfg.output_width).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        (inputs, targets)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = NetworkParams::zeros(PolicyConfig::desk(6, 6));
        let mut hidden = HiddenState::zeros(&net.cfg);
        let input = vec![0.7; net.input_width()];
        let out = policy_forward(&net, &input, &mut hidden);
        assert_eq!(out, vec![0.0; 6]);
    }

    #[test]
    fn output_width_matches_command_width() {
        // One arm: 8 angles + 8 velocities + 8 torques.
        let net = NetworkParams::init_seeded(PolicyConfig::paper(24, 24), 1);
        let mut hidden = HiddenState::zeros(&net.cfg);
        let input = vec![0.1; net.input_width()];
        let out = policy_forward(&net, &input, &mut hidden);
        assert_eq!(out.len(), 24);
        assert_eq!(net.weights.len(), net.cfg.param_count());
    }

    #[test]
    fn coordinates_reach_every_layer_preactivation() {
        let net = NetworkParams::init_seeded(PolicyConfig::desk(6, 6), 7);
        let mut base_in = vec![0.3; net.input_width()];
        let mut hidden_a = HiddenState::zeros(&net.cfg);
        let mut cache_a = empty_cache();
        forward_step(&net, &base_in, &mut hidden_a, Some(&mut cache_a));

        base_in[net.cfg.state_width] += 0.25; // perturb x
        let mut hidden_b = HiddenState::zeros(&net.cfg);
        let mut cache_b = empty_cache();
        forward_step(&net, &base_in, &mut hidden_b, Some(&mut cache_b));

        for l in 0..net.cfg.layers {
            let changed = cache_a.preact[l]
                .iter()
                .zip(&cache_b.preact[l])
                .any(|(a, b)| (a - b).abs() > 1e-12);
            assert!(changed, "layer {l} pre-activation ignored the coordinates");
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let cfg = PolicyConfig { layers: 2, hidden: 5, state_width: 4, output_width: 3 };
        let mut net = NetworkParams::init_seeded(cfg, 3);
        let (inputs, targets) = random_sequence(&net, 12, 5);
        let (_, analytic) = sequence_gradients(&net, &inputs, &targets);
        let step = 1e-5;
        let mut worst = 0.0f64;
        for k in 0..net.weights.len() {
            let saved = net.weights[k];
            net.weights[k] = saved + step;
            let up = sequence_loss(&net, &inputs, &targets);
            net.weights[k] = saved - step;
            let down = sequence_loss(&net, &inputs, &targets);
            net.weights[k] = saved;
            let numeric = (up - down) / (2.0 * step);
            let rel = (analytic[k] - numeric).abs()
                / analytic[k].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn first_adam_step_is_signed_learning_rate() {
        let cfg = PolicyConfig::desk(6, 6);
        let mut net = NetworkParams::init_seeded(cfg, 11);
        let before = net.weights.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let grads: Vec<f64> = (0..net.weights.len())
            .map(|_| {
                let g: f64 = rng.gen_range(-1.0..1.0);
                if g.abs() < 1e-3 {
                    1e-3
                } else {
                    g
                }
            })
            .collect();
        let lr = 0.001;
        adam_step(&mut net, &grads, lr);
        for k in 0..net.weights.len() {
            let update = net.weights[k] - before[k];
            let expected = -lr * grads[k].signum();
            assert!(
                (update - expected).abs() < 1e-4 * lr,
                "param {k}: update {update} vs {expected}"
            );
        }
        assert_eq!(net.adam.step, 1);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let cfg = PolicyConfig::desk(6, 6);
        let a = NetworkParams::init_seeded(cfg, 42);
        let b = NetworkParams::init_seeded(cfg, 42);
        let c = NetworkParams::init_seeded(cfg, 43);
        assert_eq!(a.weights, b.weights);
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn serialization_round_trip() {
        let mut net = NetworkParams::init_seeded(PolicyConfig::desk(6, 6), 5);
        let (inputs, targets) = random_sequence(&net, 4, 6);
        let (_, grads) = sequence_gradients(&net, &inputs, &targets);
        adam_step(&mut net, &grads, 0.001);
        let mut buf = Vec::new();
        net.write(&mut buf).unwrap();
        let back = NetworkParams::read(&mut buf.as_slice()).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn hidden_state_carries_memory() {
        let net = NetworkParams::init_seeded(PolicyConfig::desk(4, 2), 9);
        let mut hidden = HiddenState::zeros(&net.cfg);
        let input = vec![0.5; net.input_width()];
        let first = policy_forward(&net, &input, &mut hidden);
        let second = policy_forward(&net, &input, &mut hidden);
        assert_ne!(first, second, "identical inputs must differ through state");
    }
}
