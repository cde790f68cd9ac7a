//! Gradient-based optimizers and parameter tracking.
//!
//! Optimizers work on flat `f64` slices together with a weight mask: entries
//! whose mask is `false` (biases, the calibration parameter) are exempt from
//! weight decay.

use crate::error::{arg_err, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    SgdMomentum,
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// SGD only.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            lr: 1e-3,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return arg_err(format!("learning rate {} must be finite and >= 0", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return arg_err("momentum must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return arg_err("adam betas must be in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return arg_err("adam eps must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return arg_err("weight decay must be >= 0");
        }
        Ok(())
    }

    /// Same optimizer with the learning rate multiplied by `factor`.
    pub fn scaled_lr(mut self, factor: f64) -> Self {
        self.lr *= factor;
        self
    }
}

/// Optimizer state for one parameter vector: step count plus first/second
/// moments (AdamW) or velocity (SGD, kept in `first`).
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, len: usize) -> Self {
        let second = match config.kind {
            OptimizerKind::AdamW => vec![0.0; len],
            OptimizerKind::SgdMomentum => Vec::new(),
        };
        Self {
            config,
            step: 0,
            first: vec![0.0; len],
            second,
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], decay_mask: &[bool]) -> Result<()> {
        if params.len() != self.first.len()
            || grads.len() != params.len()
            || decay_mask.len() != params.len()
        {
            return arg_err(format!(
                "optimizer holds {} entries, got params {} grads {} mask {}",
                self.first.len(),
                params.len(),
                grads.len(),
                decay_mask.len()
            ));
        }
        match self.config.kind {
            OptimizerKind::AdamW => self.adamw_step(params, grads, decay_mask),
            OptimizerKind::SgdMomentum => self.sgd_step(params, grads, decay_mask),
        }
        Ok(())
    }

    /// Decoupled weight decay:
    /// `p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)`, decay on weights only.
    fn adamw_step(&mut self, params: &mut [f64], grads: &[f64], mask: &[bool]) {
        let c = self.config;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.first[i] = c.beta1 * self.first[i] + (1.0 - c.beta1) * g;
            self.second[i] = c.beta2 * self.second[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.first[i] / bc1;
            let v_hat = self.second[i] / bc2;
            let decay = if mask[i] { c.weight_decay * params[i] } else { 0.0 };
            params[i] -= c.lr * (m_hat / (v_hat.sqrt() + c.eps) + decay);
        }
    }

    /// `v = mu * v + (g + wd * p)`, `p -= lr * v`; decay on weights only.
    fn sgd_step(&mut self, params: &mut [f64], grads: &[f64], mask: &[bool]) {
        let c = self.config;
        self.step += 1;
        for i in 0..params.len() {
            let g = if mask[i] {
                grads[i] + c.weight_decay * params[i]
            } else {
                grads[i]
            };
            self.first[i] = c.momentum * self.first[i] + g;
            params[i] -= c.lr * self.first[i];
        }
    }
}

/// Exponential moving average of parameters, `avg <- (1 - alpha) avg + alpha p`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    pub values: Vec<f64>,
    pub alpha: f64,
}

impl EmaState {
    pub fn new(initial: &[f64], alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return arg_err(format!("EMA alpha {alpha} not in [0, 1]"));
        }
        Ok(Self {
            values: initial.to_vec(),
            alpha,
        })
    }

    pub fn update(&mut self, params: &[f64]) {
        let a = self.alpha;
        for (avg, &p) in self.values.iter_mut().zip(params) {
            *avg = (1.0 - a) * *avg + a * p;
        }
    }

    pub fn reset(&mut self, params: &[f64]) {
        self.values.copy_from_slice(params);
    }
}

/// `p <- shrink * p + noise_std * N(0, 1)`; entries with a `false` mask are
/// shrunk but not perturbed.
pub fn shrink_perturb(
    params: &mut [f64],
    mask: &[bool],
    shrink: f64,
    noise_std: f64,
    seed: u64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&shrink) {
        return arg_err(format!("shrink {shrink} not in [0, 1]"));
    }
    if !(noise_std >= 0.0) {
        return arg_err("noise std must be >= 0");
    }
    let mut rng = rng::seeded(seed);
    for (p, &m) in params.iter_mut().zip(mask) {
        *p *= shrink;
        if m && noise_std > 0.0 {
            *p += noise_std * rng::normal(&mut rng);
        }
    }
    Ok(())
}
