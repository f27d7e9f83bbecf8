use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log, sqrt};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, NUM_CLASSES};
use crate::{Error, Result};

/// Layer widths of a fully connected ReLU network, input first. The last
/// layer emits logits.
///
/// Parameters are laid out layer by layer: weights `[fan_in][fan_out]`
/// (input-major, so one input's fan-out is contiguous) followed by the
/// `fan_out` biases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layers: Vec<usize>,
}

impl Architecture {
    pub fn new(layers: Vec<usize>) -> Result<Self> {
        if layers.len() < 2 || layers.contains(&0) {
            return Err(Error::InvalidParams(alloc::format!(
                "architecture needs at least two non-empty layers, got {layers:?}"
            )));
        }
        Ok(Self { layers })
    }

    /// 784 → 128 (ReLU) → 10.
    pub fn mnist_mlp() -> Self {
        Self {
            layers: vec![784, 128, NUM_CLASSES],
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0]
    }

    pub fn outputs(&self) -> usize {
        *self.layers.last().expect("validated")
    }

    pub fn param_count(&self) -> usize {
        self.layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(weight offset, bias offset)` of layer `l`.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let start: usize = self.layers[..l + 1]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        (start, start + self.layers[l] * self.layers[l + 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Architecture,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.param_count();
        Self {
            arch,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::LengthMismatch {
                expected: arch.param_count(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { arch, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
pub fn init_model(arch: &Architecture, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(arch.clone());
    for l in 0..arch.layers.len() - 1 {
        let (fan_in, fan_out) = (arch.layers[l], arch.layers[l + 1]);
        let limit = sqrt(6.0 / (fan_in + fan_out) as f64);
        let (w, b) = arch.offsets(l);
        for v in &mut params.values[w..b] {
            *v = rng.random_range(-limit..limit);
        }
    }
    params
}

struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(arch: &Architecture) -> Self {
        Self {
            acts: arch.layers.iter().map(|&w| vec![0.0; w]).collect(),
            deltas: arch.layers.iter().map(|&w| vec![0.0; w]).collect(),
        }
    }
}

fn check_shape(params: &ModelParams, data: &Dataset) -> Result<()> {
    if params.arch.inputs() != data.dim() {
        return Err(Error::LengthMismatch {
            expected: params.arch.inputs(),
            found: data.dim(),
        });
    }
    if params.arch.outputs() != NUM_CLASSES {
        return Err(Error::LengthMismatch {
            expected: NUM_CLASSES,
            found: params.arch.outputs(),
        });
    }
    Ok(())
}

/// Fills `ws.acts` for example `i`; the last entry holds the logits.
fn forward(params: &ModelParams, data: &Dataset, i: usize, ws: &mut Workspace) {
    let arch = &params.arch;
    for (dst, &b) in ws.acts[0].iter_mut().zip(data.image_bytes(i)) {
        *dst = f64::from(b) / 255.0;
    }
    let last = arch.layers.len() - 1;
    for l in 0..last {
        let (fan_in, fan_out) = (arch.layers[l], arch.layers[l + 1]);
        let (w_off, b_off) = arch.offsets(l);
        let (lower, upper) = ws.acts.split_at_mut(l + 1);
        let input = &lower[l];
        let out = &mut upper[0];
        out.copy_from_slice(&params.values[b_off..b_off + fan_out]);
        for (j, &a) in input.iter().enumerate().take(fan_in) {
            if a == 0.0 {
                continue;
            }
            let row = &params.values[w_off + j * fan_out..w_off + (j + 1) * fan_out];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += a * w;
            }
        }
        if l + 1 < last {
            for o in out.iter_mut() {
                if *o < 0.0 {
                    *o = 0.0;
                }
            }
        }
    }
}

/// Softmax of `logits` into `out`; returns `-log p[label]`.
fn softmax_xent(logits: &[f64], label: usize, out: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = exp(z - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    -(logits[label] - max - log(sum))
}

/// Accumulates the gradient of one example's loss into `grad`.
fn backward(params: &ModelParams, label: usize, ws: &mut Workspace, grad: &mut [f64]) -> f64 {
    let arch = &params.arch;
    let last = arch.layers.len() - 1;
    let loss = {
        let (acts, deltas) = (&ws.acts, &mut ws.deltas);
        let l = softmax_xent(&acts[last], label, &mut deltas[last]);
        deltas[last][label] -= 1.0;
        l
    };
    for l in (0..last).rev() {
        let (fan_in, fan_out) = (arch.layers[l], arch.layers[l + 1]);
        let (w_off, b_off) = arch.offsets(l);
        let (d_lower, d_upper) = ws.deltas.split_at_mut(l + 1);
        let delta = &d_upper[0];
        for (g, &d) in grad[b_off..b_off + fan_out].iter_mut().zip(delta) {
            *g += d;
        }
        let input = &ws.acts[l];
        let prev = &mut d_lower[l];
        for j in 0..fan_in {
            let a = input[j];
            if a == 0.0 {
                // ReLU is flat here; input-layer zeros contribute nothing.
                prev[j] = 0.0;
                continue;
            }
            let gw = &mut grad[w_off + j * fan_out..w_off + (j + 1) * fan_out];
            for (g, &d) in gw.iter_mut().zip(delta) {
                *g += a * d;
            }
            if l > 0 {
                let row = &params.values[w_off + j * fan_out..w_off + (j + 1) * fan_out];
                prev[j] = row.iter().zip(delta).map(|(w, d)| w * d).sum();
            }
        }
    }
    loss
}

/// Mean cross-entropy over `indices`, with its gradient written to `grad`.
pub fn batch_gradient(
    params: &ModelParams,
    data: &Dataset,
    indices: &[usize],
    grad: &mut [f64],
) -> Result<f64> {
    check_shape(params, data)?;
    if indices.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if grad.len() != params.len() {
        return Err(Error::LengthMismatch {
            expected: params.len(),
            found: grad.len(),
        });
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut ws = Workspace::new(&params.arch);
    let mut total = 0.0;
    for &i in indices {
        forward(params, data, i, &mut ws);
        total += backward(params, usize::from(data.label(i)), &mut ws, grad);
    }
    let scale = 1.0 / indices.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(total * scale)
}

/// Mean cross-entropy over `indices`.
pub fn loss(params: &ModelParams, data: &Dataset, indices: &[usize]) -> Result<f64> {
    check_shape(params, data)?;
    if indices.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut ws = Workspace::new(&params.arch);
    let mut probs = vec![0.0; params.arch.outputs()];
    let last = params.arch.layers.len() - 1;
    let mut total = 0.0;
    for &i in indices {
        forward(params, data, i, &mut ws);
        total += softmax_xent(&ws.acts[last], usize::from(data.label(i)), &mut probs);
    }
    Ok(total / indices.len() as f64)
}

/// Arg-max class for example `i`; ties go to the lowest class.
pub fn predict(params: &ModelParams, data: &Dataset, i: usize) -> usize {
    let mut ws = Workspace::new(&params.arch);
    forward(params, data, i, &mut ws);
    argmax(ws.acts.last().expect("non-empty"))
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

/// Fraction of examples classified correctly.
pub fn evaluate(params: &ModelParams, data: &Dataset) -> f64 {
    if data.is_empty() || check_shape(params, data).is_err() {
        return 0.0;
    }
    let mut ws = Workspace::new(&params.arch);
    let correct = (0..data.len())
        .filter(|&i| {
            forward(params, data, i, &mut ws);
            argmax(ws.acts.last().expect("non-empty")) == usize::from(data.label(i))
        })
        .count();
    correct as f64 / data.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub batches: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            batches: 30,
            batch_size: 64,
            lr: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    /// Sum of the per-batch mean gradients along the local SGD path, so that
    /// `start - lr * gradient` is the locally trained model.
    pub gradient: Vec<f64>,
    pub params: ModelParams,
    pub mean_loss: f64,
}

/// Runs `spec.batches` SGD steps on the examples in `indices`, cycling
/// through a seeded shuffle of them.
pub fn local_train(
    params: &ModelParams,
    data: &Dataset,
    indices: &[usize],
    spec: &TrainSpec,
    seed: u64,
) -> Result<LocalUpdate> {
    check_shape(params, data)?;
    if indices.is_empty() {
        return Err(Error::Empty("partition"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = indices.to_vec();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let mut local = params.clone();
    let mut total = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut batch = Vec::with_capacity(spec.batch_size);
    let mut loss_sum = 0.0;
    for _ in 0..spec.batches {
        batch.clear();
        while batch.len() < spec.batch_size.max(1) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        loss_sum += batch_gradient(&local, data, &batch, &mut grad)?;
        for ((t, w), g) in total.iter_mut().zip(local.values.iter_mut()).zip(&grad) {
            *t += g;
            *w -= spec.lr * g;
        }
    }
    let mean_loss = if spec.batches == 0 {
        0.0
    } else {
        loss_sum / spec.batches as f64
    };
    Ok(LocalUpdate {
        gradient: total,
        params: local,
        mean_loss,
    })
}
