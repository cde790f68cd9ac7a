//! Dense classifiers with exact gradients and a temperature-calibrated head.
//!
//! Networks are stacks of affine layers with ReLU between them. Parameters
//! live in one flat `f64` buffer ([`Params`]) so optimizers, EMA and
//! shrink & perturb can treat them uniformly. Weight rows are stored
//! row-major, one row per output unit.
//!
//! Training always uses the plain head `softmax(h)`; evaluation uses the
//! calibrated head `softmax(softplus(beta) * h)`.

use rayon::prelude::*;

use crate::dataset::Example;
use crate::error::{arg_err, Result};
use crate::rng;

/// Epsilon added to the row variance by weight standardization.
pub const WS_EPS: f64 = 1e-12;

/// Examples per gradient chunk. Chunks may run on different threads but are
/// always reduced in index order, so results do not depend on thread count.
const CHUNK: usize = 16;

/// `beta_0 = ln(e - 1)`, the calibration parameter at which `softplus(beta) = 1`.
pub fn beta0() -> f64 {
    (std::f64::consts::E - 1.0).ln()
}

/// `zeta(beta) = softplus(beta) = ln(1 + e^beta)`.
pub fn softplus(beta: f64) -> f64 {
    beta.max(0.0) + (-beta.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// ReLU-scaled Gaussian weights, `std = sqrt(2 / fan_in)`, zero biases.
    He,
    /// Everything zero: the network predicts the uniform distribution.
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden_sizes: Vec<usize>,
    pub input_dim: usize,
    pub num_classes: usize,
    pub weight_standardization: bool,
    /// Also standardize the classification layer when standardization is on.
    pub standardize_output: bool,
    pub init: Init,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Linear,
            hidden_sizes: Vec::new(),
            input_dim,
            num_classes,
            weight_standardization: false,
            standardize_output: false,
            init: Init::He,
        }
    }

    pub fn mlp(input_dim: usize, hidden_sizes: Vec<usize>, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Mlp,
            hidden_sizes,
            ..Self::linear(input_dim, num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return arg_err("input_dim must be positive");
        }
        if self.num_classes < 2 {
            return arg_err("num_classes must be at least 2");
        }
        match self.kind {
            ModelKind::Linear if !self.hidden_sizes.is_empty() => {
                return arg_err("linear model takes no hidden layers")
            }
            ModelKind::Mlp if self.hidden_sizes.is_empty() => {
                return arg_err("mlp needs at least one hidden layer")
            }
            _ => {}
        }
        if self.hidden_sizes.contains(&0) {
            return arg_err("hidden layer sizes must be positive");
        }
        let dims = self.layer_dims();
        for l in 0..dims.len() - 1 {
            if self.standardizes(l) && dims[l] < 2 {
                return arg_err(format!(
                    "weight standardization needs fan_in >= 2 (layer {l} has {})",
                    dims[l]
                ));
            }
        }
        Ok(())
    }

    /// `[input_dim, hidden..., num_classes]`
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_sizes.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_sizes);
        dims.push(self.num_classes);
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_sizes.len() + 1
    }

    fn standardizes(&self, layer: usize) -> bool {
        self.weight_standardization && (layer + 1 < self.num_layers() || self.standardize_output)
    }

    /// Multiply-accumulate count of one forward pass for a single example.
    pub fn macs_per_example(&self) -> u64 {
        self.layer_dims()
            .windows(2)
            .map(|w| (w[0] * w[1]) as u64)
            .sum()
    }

    /// `2 * sum(fan_in * fan_out)`: forward FLOPs per example.
    pub fn forward_flops_per_example(&self) -> u64 {
        2 * self.macs_per_example()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

/// All weights and biases of a network in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    layers: Vec<Layout>,
    values: Vec<f64>,
}

impl Params {
    pub fn zeros(spec: &ModelSpec) -> Self {
        let mut layers = Vec::new();
        let mut offset = 0;
        for w in spec.layer_dims().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            layers.push(Layout {
                fan_in,
                fan_out,
                w: offset,
                b: offset + fan_in * fan_out,
            });
            offset += fan_in * fan_out + fan_out;
        }
        Self {
            layers,
            values: vec![0.0; offset],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `(fan_in, fan_out)` of a layer.
    pub fn layer_shape(&self, layer: usize) -> (usize, usize) {
        let l = self.layers[layer];
        (l.fan_in, l.fan_out)
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        let l = self.layers[layer];
        &self.values[l.w..l.b]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut [f64] {
        let l = self.layers[layer];
        &mut self.values[l.w..l.b]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let l = self.layers[layer];
        &self.values[l.b..l.b + l.fan_out]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let l = self.layers[layer];
        &mut self.values[l.b..l.b + l.fan_out]
    }

    /// `true` for weight entries, `false` for biases. Biases are exempt from
    /// weight decay and from perturbation.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.values.len()];
        for l in &self.layers {
            mask[l.w..l.b].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.layers == other.layers
    }

    fn check_spec(&self, spec: &ModelSpec) -> Result<()> {
        if !self.same_shape(&Params::zeros(spec)) {
            return arg_err("parameter shapes do not match the model spec");
        }
        Ok(())
    }
}

pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<Params> {
    spec.validate()?;
    let mut params = Params::zeros(spec);
    if spec.init == Init::He {
        let mut rng = rng::seeded(seed);
        for layer in 0..params.num_layers() {
            let (fan_in, _) = params.layer_shape(layer);
            let std = (2.0 / fan_in as f64).sqrt();
            for w in params.weight_mut(layer) {
                *w = std * rng::normal(&mut rng);
            }
        }
    }
    Ok(params)
}

/// A batch of inputs (row-major, `len x dim`) with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub labels: Vec<u32>,
    pub dim: usize,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, labels: Vec<u32>, dim: usize) -> Result<Self> {
        if dim == 0 || inputs.len() != labels.len() * dim {
            return arg_err("batch inputs do not match labels x dim");
        }
        Ok(Self { inputs, labels, dim })
    }

    pub fn from_examples<'a>(examples: impl IntoIterator<Item = &'a Example>, dim: usize) -> Self {
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for ex in examples {
            inputs.extend(ex.features.iter().map(|&f| f64::from(f)));
            labels.push(ex.label);
        }
        Self { inputs, labels, dim }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }
}

/// Row-wise standardization: `r' = (r - mean(r)) / sqrt(var(r) + eps)`,
/// with the population variance. `cols` is the row length.
pub fn weight_standardize(w: &[f64], cols: usize, eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for (row, dst) in w.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let (mean, inv_std) = row_stats(row, eps);
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - mean) * inv_std;
        }
    }
    out
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

/// Maps a gradient w.r.t. standardized weights back to raw weights.
fn standardize_backward(raw: &[f64], grad_std: &[f64], cols: usize, eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; raw.len()];
    let n = cols as f64;
    for ((row, g), dst) in raw
        .chunks_exact(cols)
        .zip(grad_std.chunks_exact(cols))
        .zip(out.chunks_exact_mut(cols))
    {
        let (mean, inv_std) = row_stats(row, eps);
        let g_mean = g.iter().sum::<f64>() / n;
        let gy_mean = g
            .iter()
            .zip(row)
            .map(|(gi, v)| gi * (v - mean) * inv_std)
            .sum::<f64>()
            / n;
        for ((d, gi), v) in dst.iter_mut().zip(g).zip(row) {
            let y = (v - mean) * inv_std;
            *d = inv_std * (gi - g_mean - y * gy_mean);
        }
    }
    out
}

/// Weights as used in the forward pass (standardized where configured).
fn effective_weights(spec: &ModelSpec, params: &Params) -> Vec<Vec<f64>> {
    (0..params.num_layers())
        .map(|l| {
            let (fan_in, _) = params.layer_shape(l);
            if spec.standardizes(l) {
                weight_standardize(params.weight(l), fan_in, WS_EPS)
            } else {
                params.weight(l).to_vec()
            }
        })
        .collect()
}

fn check_shapes(spec: &ModelSpec, params: &Params, batch: &Batch) -> Result<()> {
    spec.validate()?;
    params.check_spec(spec)?;
    if batch.dim != spec.input_dim {
        return arg_err(format!(
            "batch dim {} does not match model input {}",
            batch.dim, spec.input_dim
        ));
    }
    if let Some(&y) = batch.labels.iter().find(|&&y| y as usize >= spec.num_classes) {
        return arg_err(format!("label {y} out of range"));
    }
    Ok(())
}

/// Forward pass of one example, keeping every layer's pre-activation.
fn forward_one(params: &Params, weights: &[Vec<f64>], x: &[f64]) -> Vec<Vec<f64>> {
    let mut pre = Vec::with_capacity(weights.len());
    let mut act: Vec<f64> = x.to_vec();
    for (l, w) in weights.iter().enumerate() {
        let (fan_in, _) = params.layer_shape(l);
        let z: Vec<f64> = w
            .chunks_exact(fan_in)
            .zip(params.bias(l))
            .map(|(row, b)| b + row.iter().zip(&act).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        act = if l + 1 < weights.len() {
            z.iter().map(|v| v.max(0.0)).collect()
        } else {
            z.clone()
        };
        pre.push(z);
    }
    pre
}

/// Logits (`len x C`, row-major) of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub num_classes: usize,
    pub flops: u64,
}

impl Forward {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.logits[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn len(&self) -> usize {
        self.logits.len() / self.num_classes
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }
}

pub fn forward(spec: &ModelSpec, params: &Params, batch: &Batch) -> Result<Forward> {
    check_shapes(spec, params, batch)?;
    let weights = effective_weights(spec, params);
    let rows: Vec<Vec<f64>> = chunked(batch.len(), |range| {
        range
            .map(|i| forward_one(params, &weights, batch.row(i)).pop().unwrap())
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    Ok(Forward {
        logits: rows.concat(),
        num_classes: spec.num_classes,
        flops: spec.forward_flops_per_example() * batch.len() as u64,
    })
}

/// Runs `f` over fixed-size index chunks, in parallel when there is more than
/// one chunk, and returns the per-chunk results in order.
fn chunked<T: Send>(n: usize, f: impl Fn(std::ops::Range<usize>) -> T + Sync) -> Vec<T> {
    let chunks = n.div_ceil(CHUNK);
    if chunks <= 1 {
        return vec![f(0..n)];
    }
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect()
}

fn log_softmax_scaled(h: &[f64], scale: f64) -> Vec<f64> {
    let max = h.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(scale * v));
    let lse = max + h.iter().map(|&v| (scale * v - max).exp()).sum::<f64>().ln();
    h.iter().map(|&v| scale * v - lse).collect()
}

pub fn softmax_scaled(h: &[f64], scale: f64) -> Vec<f64> {
    log_softmax_scaled(h, scale).into_iter().map(f64::exp).collect()
}

/// Calibrated class probabilities `softmax(softplus(beta) * h)`, row-major.
pub fn predict(spec: &ModelSpec, params: &Params, beta: f64, batch: &Batch) -> Result<Vec<f64>> {
    let fwd = forward(spec, params, batch)?;
    let z = softplus(beta);
    Ok((0..fwd.len()).flat_map(|i| softmax_scaled(fwd.row(i), z)).collect())
}

/// Per-example calibrated negative log-likelihood and argmax error.
pub fn calibrated_losses(fwd: &Forward, labels: &[u32], beta: f64) -> Vec<(f64, bool)> {
    let z = softplus(beta);
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let h = fwd.row(i);
            let nll = -log_softmax_scaled(h, z)[y as usize];
            (nll, argmax(h) != y as usize)
        })
        .collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    /// Mean label-smoothed cross-entropy over the batch, in nats.
    pub loss: f64,
    pub grads: Params,
    pub flops: u64,
}

/// Mean label-smoothed cross-entropy under the uncalibrated head, with exact
/// gradients. Targets are `(1 - eps) * onehot(y) + eps / C`. Backward work is
/// counted as twice the forward, so `flops = 3 * forward flops`.
pub fn loss_and_grads(
    spec: &ModelSpec,
    params: &Params,
    batch: &Batch,
    label_smoothing: f64,
) -> Result<LossGrad> {
    if !(0.0..1.0).contains(&label_smoothing) {
        return arg_err(format!("label smoothing {label_smoothing} not in [0, 1)"));
    }
    if batch.is_empty() {
        return arg_err("empty batch");
    }
    check_shapes(spec, params, batch)?;
    let weights = effective_weights(spec, params);
    let n = batch.len() as f64;
    let c = spec.num_classes;
    let off = label_smoothing / c as f64;
    let on = 1.0 - label_smoothing + off;

    // Gradients w.r.t. effective weights, accumulated per chunk.
    let parts = chunked(batch.len(), |range| {
        let mut g = params.zeros_like();
        let mut loss = 0.0;
        for i in range {
            let x = batch.row(i);
            let y = batch.labels[i] as usize;
            let pre = forward_one(params, &weights, x);
            let logp = log_softmax_scaled(pre.last().unwrap(), 1.0);
            let mut delta: Vec<f64> = logp
                .iter()
                .enumerate()
                .map(|(k, lp)| {
                    let q = if k == y { on } else { off };
                    loss -= q * lp;
                    (lp.exp() - q) / n
                })
                .collect();
            for l in (0..weights.len()).rev() {
                let (fan_in, _) = params.layer_shape(l);
                let input: Vec<f64> = if l == 0 {
                    x.to_vec()
                } else {
                    pre[l - 1].iter().map(|v| v.max(0.0)).collect()
                };
                {
                    let gw = g.weight_mut(l);
                    for (row, d) in gw.chunks_exact_mut(fan_in).zip(&delta) {
                        for (gij, a) in row.iter_mut().zip(&input) {
                            *gij += d * a;
                        }
                    }
                }
                for (gb, d) in g.bias_mut(l).iter_mut().zip(&delta) {
                    *gb += d;
                }
                if l > 0 {
                    let mut back = vec![0.0; fan_in];
                    for (row, d) in weights[l].chunks_exact(fan_in).zip(&delta) {
                        for (b, w) in back.iter_mut().zip(row) {
                            *b += d * w;
                        }
                    }
                    for (b, z) in back.iter_mut().zip(&pre[l - 1]) {
                        if *z <= 0.0 {
                            *b = 0.0;
                        }
                    }
                    delta = back;
                }
            }
        }
        (loss, g)
    });

    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        for (a, b) in grads.values.iter_mut().zip(&g.values) {
            *a += b;
        }
    }
    for l in 0..params.num_layers() {
        if spec.standardizes(l) {
            let (fan_in, _) = params.layer_shape(l);
            let raw = standardize_backward(params.weight(l), grads.weight(l), fan_in, WS_EPS);
            grads.weight_mut(l).copy_from_slice(&raw);
        }
    }
    Ok(LossGrad {
        loss: loss / n,
        grads,
        flops: 3 * spec.forward_flops_per_example() * batch.len() as u64,
    })
}

/// Mean calibrated negative log-likelihood over a batch of logits.
pub fn calibrated_nll(logits: &[f64], labels: &[u32], num_classes: usize, beta: f64) -> f64 {
    let z = softplus(beta);
    let total: f64 = labels
        .iter()
        .zip(logits.chunks_exact(num_classes))
        .map(|(&y, h)| -log_softmax_scaled(h, z)[y as usize])
        .sum();
    total / labels.len() as f64
}

/// Derivative of the mean calibrated NLL w.r.t. `beta`:
/// `sigmoid(beta) * mean(E_p[h] - h_y)` with `p = softmax(softplus(beta) h)`.
pub fn calibration_grad(logits: &[f64], labels: &[u32], num_classes: usize, beta: f64) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let z = softplus(beta);
    let total: f64 = labels
        .iter()
        .zip(logits.chunks_exact(num_classes))
        .map(|(&y, h)| {
            let p = softmax_scaled(h, z);
            p.iter().zip(h).map(|(pi, hi)| pi * hi).sum::<f64>() - h[y as usize]
        })
        .sum();
    sigmoid(beta) * total / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn batch(rows: &[&[f64]], labels: &[u32]) -> Batch {
        Batch::new(rows.concat(), labels.to_vec(), rows[0].len()).unwrap()
    }

    #[test]
    fn beta0_is_unit_temperature() {
        assert!((beta0() - 0.541_324_854_612_918).abs() < 1e-12);
        assert!((softplus(beta0()) - 1.0).abs() < 1e-15);
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn linear_init_has_zero_bias_and_is_deterministic() {
        let spec = ModelSpec::linear(4, 3);
        let a = init_params(&spec, 9).unwrap();
        assert!(a.bias(0).iter().all(|&b| b == 0.0));
        assert_eq!(a, init_params(&spec, 9).unwrap());
        assert_ne!(a, init_params(&spec, 10).unwrap());
    }

    #[test]
    fn he_init_std_matches_fan_in() {
        let spec = ModelSpec::mlp(10, vec![32], 4);
        let mut draws = Vec::new();
        let mut seed = 0;
        while draws.len() < 10_000 {
            draws.extend_from_slice(init_params(&spec, seed).unwrap().weight(0));
            seed += 1;
        }
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let std = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let target = (2.0f64 / 10.0).sqrt();
        assert!((std - target).abs() < 0.1 * target, "std {std}");
    }

    #[test]
    fn forward_by_hand() {
        let spec = ModelSpec::linear(2, 2);
        let mut p = Params::zeros(&spec);
        p.weight_mut(0).copy_from_slice(&[2.0, 0.0, 0.0, 3.0]);
        let f = forward(&spec, &p, &batch(&[&[1.0, 0.0]], &[0])).unwrap();
        assert_eq!(f.logits, vec![2.0, 0.0]);
        assert_eq!(f.flops, 8);
    }

    #[test]
    fn zero_params_predict_uniform() {
        let spec = ModelSpec::mlp(3, vec![4], 5);
        let p = Params::zeros(&spec);
        let b = batch(&[&[1.0, -2.0, 0.5]], &[1]);
        assert!(forward(&spec, &p, &b).unwrap().logits.iter().all(|&v| v == 0.0));
        let probs = predict(&spec, &p, 3.0, &b).unwrap();
        assert!(probs.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn identical_rows_give_identical_logits() {
        let spec = ModelSpec::mlp(3, vec![5], 4);
        let p = init_params(&spec, 1).unwrap();
        let f = forward(&spec, &p, &batch(&[&[0.3, 0.1, -1.0], &[0.3, 0.1, -1.0]], &[0, 0])).unwrap();
        assert_eq!(f.row(0), f.row(1));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let spec = ModelSpec::linear(3, 2);
        let p = init_params(&spec, 0).unwrap();
        assert!(forward(&spec, &p, &batch(&[&[1.0, 2.0]], &[0])).is_err());
        let other = init_params(&ModelSpec::linear(4, 2), 0).unwrap();
        assert!(forward(&spec, &other, &batch(&[&[1.0, 2.0, 3.0]], &[0])).is_err());
    }

    #[test]
    fn predict_closed_form_and_limits() {
        let p = softmax_scaled(&[1.0, 0.0], softplus(beta0()));
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        let cold = softmax_scaled(&[3.0, -2.0, 1.0], softplus(-20.0));
        assert!(cold.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-6));
    }

    #[test]
    fn smoothed_loss_edge_cases() {
        let spec = ModelSpec::linear(2, 4);
        let p = Params::zeros(&spec);
        let b = batch(&[&[1.0, 1.0]], &[2]);
        let lg = loss_and_grads(&spec, &p, &b, 0.0).unwrap();
        assert!((lg.loss - 4f64.ln()).abs() < 1e-15);
        assert_eq!(lg.flops, 3 * 2 * 8);
        assert!(loss_and_grads(&spec, &p, &b, 1.0).is_err());
        assert!(loss_and_grads(&spec, &p, &b, -0.1).is_err());

        // one-hot perfect: margin 50 on the true class
        let mut q = Params::zeros(&spec);
        q.bias_mut(0)[2] = 50.0;
        let lg = loss_and_grads(&spec, &q, &b, 0.0).unwrap();
        assert!(lg.loss < 1e-20);
    }

    #[test]
    fn calibration_grad_edge_cases() {
        assert!(calibration_grad(&[2.0, 2.0, 2.0, -1.0, -1.0, -1.0], &[0, 2], 3, 0.3).abs() < 1e-15);
        assert!(calibration_grad(&[10.0, 0.0], &[0], 2, beta0()) < 0.0);
        assert!(calibration_grad(&[10.0, 0.0], &[1], 2, beta0()) > 0.0);
    }

    #[test]
    fn calibration_grad_matches_finite_differences() {
        let mut rng = crate::rng::seeded(5);
        for _ in 0..50 {
            let c = 2 + crate::rng::index(&mut rng, 5);
            let n = 1 + crate::rng::index(&mut rng, 6);
            let logits: Vec<f64> = (0..n * c).map(|_| 3.0 * crate::rng::normal(&mut rng)).collect();
            let labels: Vec<u32> = (0..n).map(|_| crate::rng::index(&mut rng, c) as u32).collect();
            let beta: f64 = rng.random_range(-2.0..2.0);
            let h = 1e-5;
            let fd = (calibrated_nll(&logits, &labels, c, beta + h)
                - calibrated_nll(&logits, &labels, c, beta - h))
                / (2.0 * h);
            let g = calibration_grad(&logits, &labels, c, beta);
            assert!((fd - g).abs() <= 1e-6 * g.abs().max(1e-3), "{fd} vs {g}");
        }
    }

    #[test]
    fn weight_standardize_properties() {
        let w = vec![1.0, 2.0, 3.0, 7.0, -4.0, 4.0, 4.0, 4.0, 4.0];
        let s = weight_standardize(&w, 3, WS_EPS);
        for row in s.chunks(3).take(2) {
            let mean = row.iter().sum::<f64>() / 3.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
        assert!(s[6..].iter().all(|v| v.abs() < 1e-3));
        let twice = weight_standardize(&s, 3, WS_EPS);
        for (a, b) in twice[..6].iter().zip(&s[..6]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn ws_requires_two_columns() {
        let mut spec = ModelSpec::mlp(1, vec![3], 2);
        spec.weight_standardization = true;
        assert!(spec.validate().is_err());
        spec.input_dim = 2;
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn parallel_chunks_match_sequential_sum() {
        // 40 examples span three chunks; the per-example sum must agree.
        let spec = ModelSpec::mlp(3, vec![4], 3);
        let p = init_params(&spec, 2).unwrap();
        let mut rng = crate::rng::seeded(8);
        let inputs: Vec<f64> = (0..120).map(|_| crate::rng::normal(&mut rng)).collect();
        let labels: Vec<u32> = (0..40).map(|i| (i % 3) as u32).collect();
        let b = Batch::new(inputs, labels, 3).unwrap();
        let full = loss_and_grads(&spec, &p, &b, 0.1).unwrap();
        let mut loss = 0.0;
        for i in 0..40 {
            let one = Batch::new(b.row(i).to_vec(), vec![b.labels[i]], 3).unwrap();
            loss += loss_and_grads(&spec, &p, &one, 0.1).unwrap().loss;
        }
        assert!((full.loss - loss / 40.0).abs() < 1e-12);
    }
}
