//! Prequential description-length estimators.
//!
//! Each protocol walks the sequence once and charges every example the
//! negative log-likelihood the model assigned to it *before* any update that
//! used it. The sum of those charges is the prequential description length.
//!
//! * [`run_mi_rs`]: mini-batch incremental learning with replay streams.
//! * [`run_mi_rb`]: mini-batch incremental learning with a replay buffer.
//! * [`run_ci_fs`]: chunk-incremental, retrained from scratch per chunk.
//! * [`run_ci_cf`]: chunk-incremental, continually fine-tuned.
//!
//! All protocols evaluate with the EMA parameters and the calibrated head.

use std::path::Path;

use crate::dataset::{self, Example, SequenceDataset, SequentialReader};
use crate::error::{arg_err, Error, Result};
use crate::models::{self, Batch, Forward, ModelSpec, Params};
use crate::optim::{self, EmaState, OptimizerConfig, OptimizerState};
use crate::replay::{BufferPolicy, ReplayBuffer, ReplayDistribution, ReplayStreamSet};
use crate::rng::{self, Rng64};

/// Fraction of each chunk prefix used for training in the CI protocols; the
/// rest calibrates the temperature.
pub const CI_TRAIN_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    MiRs,
    MiRb,
    CiFs,
    CiCf,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Self::MiRs => "mi_rs",
            Self::MiRb => "mi_rb",
            Self::CiFs => "ci_fs",
            Self::CiCf => "ci_cf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mi_rs" => Some(Self::MiRs),
            "mi_rb" => Some(Self::MiRb),
            "ci_fs" => Some(Self::CiFs),
            "ci_cf" => Some(Self::CiCf),
            _ => None,
        }
    }

    pub fn all() -> [Protocol; 4] {
        [Self::MiRs, Self::MiRb, Self::CiFs, Self::CiCf]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkPerturb {
    pub shrink: f64,
    pub noise_std: f64,
}

impl Default for ShrinkPerturb {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            noise_std: 0.01,
        }
    }
}

impl ShrinkPerturb {
    pub fn is_identity(&self) -> bool {
        self.shrink == 1.0 && self.noise_std == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub optimizer: OptimizerConfig,
    pub ema_alpha: f64,
    pub label_smoothing: f64,
    pub batch_size: usize,
    /// Replay streams (MI/RS) or replay batches per fresh batch (MI/RB).
    pub num_streams: usize,
    pub replay: ReplayDistribution,
    pub buffer_capacity: usize,
    pub buffer_policy: BufferPolicy,
    pub split_first: usize,
    pub split_ratio: f64,
    /// Passes over the chunk prefix per CI stage.
    pub epochs: usize,
    pub random_calibration_split: bool,
    /// `None` disables shrink & perturb between CI/CF stages.
    pub shrink_perturb: Option<ShrinkPerturb>,
    pub forward_calibration: bool,
    /// Standard deviation of Gaussian input jitter applied before training
    /// steps; zero disables augmentation.
    pub augment_std: f64,
    pub seed: u64,
    /// Keep `(learner time, replayed index)` pairs in the result.
    pub record_replay: bool,
}

impl RunConfig {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            model,
            optimizer: OptimizerConfig::default(),
            ema_alpha: 0.01,
            label_smoothing: 0.01,
            batch_size: 32,
            num_streams: 10,
            replay: ReplayDistribution::Uniform,
            buffer_capacity: 10_000,
            buffer_policy: BufferPolicy::Fifo,
            split_first: 64,
            split_ratio: 2.0,
            epochs: 10,
            random_calibration_split: false,
            shrink_perturb: None,
            forward_calibration: true,
            augment_std: 0.0,
            seed: 0,
            record_replay: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        self.replay.validate()?;
        if self.batch_size == 0 {
            return arg_err("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return arg_err("label_smoothing must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.ema_alpha) {
            return arg_err("ema_alpha must be in [0, 1]");
        }
        if !(self.augment_std >= 0.0) {
            return arg_err("augment_std must be >= 0");
        }
        Ok(())
    }

    fn check_dataset(&self, data: &SequenceDataset) -> Result<()> {
        self.validate()?;
        if data.dim() != self.model.input_dim || data.num_classes() != self.model.num_classes {
            return arg_err(format!(
                "model expects dim {} / {} classes, dataset has {} / {}",
                self.model.input_dim,
                self.model.num_classes,
                data.dim(),
                data.num_classes()
            ));
        }
        Ok(())
    }

    /// Calibration learning-rate factor `sqrt(K + 1)`: the number of training
    /// steps per evaluation step is the replay count plus the fresh step.
    pub fn calibration_lr_factor(&self, protocol: Protocol) -> f64 {
        match protocol {
            Protocol::MiRs | Protocol::MiRb => ((self.num_streams + 1) as f64).sqrt(),
            Protocol::CiFs | Protocol::CiCf => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopsLedger {
    pub eval: u64,
    pub train: u64,
}

impl FlopsLedger {
    pub fn total(&self) -> u64 {
        self.eval + self.train
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrequentialResult {
    pub protocol: Protocol,
    pub num_classes: usize,
    /// Next-step loss (nats) of every example, in sequence order.
    pub per_step_loss: Vec<f64>,
    pub per_step_error: Vec<bool>,
    /// Calibration parameter used to evaluate each example.
    pub per_step_beta: Vec<f64>,
    /// FLOP counters after the batch containing each example was processed.
    pub per_step_flops: Vec<FlopsLedger>,
    pub cumulative_loss: f64,
    pub cumulative_errors: u64,
    pub flops: FlopsLedger,
    pub replay_log: Vec<(u64, u64)>,
}

impl PrequentialResult {
    fn new(protocol: Protocol, num_classes: usize, n: usize) -> Self {
        Self {
            protocol,
            num_classes,
            per_step_loss: Vec::with_capacity(n),
            per_step_error: Vec::with_capacity(n),
            per_step_beta: Vec::with_capacity(n),
            per_step_flops: Vec::with_capacity(n),
            cumulative_loss: 0.0,
            cumulative_errors: 0,
            flops: FlopsLedger::default(),
            replay_log: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.per_step_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_step_loss.is_empty()
    }

    pub fn description_length(&self) -> f64 {
        self.cumulative_loss
    }

    /// Running sum of per-step losses, accumulated in sequence order.
    pub fn cumulative_series(&self) -> Vec<f64> {
        self.per_step_loss
            .iter()
            .scan(0.0, |acc, l| {
                *acc += l;
                Some(*acc)
            })
            .collect()
    }

    fn record(&mut self, loss: f64, error: bool, beta: f64) {
        self.per_step_loss.push(loss);
        self.per_step_error.push(error);
        self.per_step_beta.push(beta);
        self.cumulative_loss += loss;
        self.cumulative_errors += u64::from(error);
    }

    fn stamp_flops(&mut self) {
        let f = self.flops;
        self.per_step_flops.resize(self.per_step_loss.len(), f);
    }

    /// Accounting identities that must hold for every completed run.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.per_step_loss.len();
        if self.per_step_error.len() != n || self.per_step_beta.len() != n || self.per_step_flops.len() != n {
            return Err(Error::Invariant("per-step series lengths differ".into()));
        }
        let sum: f64 = self.per_step_loss.iter().sum();
        if (sum - self.cumulative_loss).abs() > 1e-9 * sum.abs().max(1.0) {
            return Err(Error::Invariant(format!(
                "cumulative loss {} != sum of steps {sum}",
                self.cumulative_loss
            )));
        }
        let errors = self.per_step_error.iter().filter(|&&e| e).count() as u64;
        if errors != self.cumulative_errors {
            return Err(Error::Invariant("error count mismatch".into()));
        }
        if self.per_step_loss.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Invariant("non-finite or negative step loss".into()));
        }
        if self.per_step_flops.last().is_some_and(|f| *f != self.flops) {
            return Err(Error::Invariant("final per-step flops differ from totals".into()));
        }
        Ok(())
    }
}

/// Exponentially spaced chunk boundaries ending at the sequence length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSchedule {
    points: Vec<usize>,
}

impl SplitSchedule {
    pub fn new(points: Vec<usize>) -> Result<Self> {
        if points.is_empty() {
            return arg_err("schedule needs at least one split point");
        }
        if points[0] < 2 {
            return arg_err("first split point must be >= 2");
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return arg_err("split points must be strictly increasing");
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn last(&self) -> usize {
        *self.points.last().unwrap()
    }
}

/// `s_k = round(s_first * ratio^(k-1))`, deduplicated, with the final point
/// forced to `n`.
pub fn make_schedule(n: usize, s_first: usize, ratio: f64) -> Result<SplitSchedule> {
    if n < 2 {
        return arg_err("sequence length must be >= 2");
    }
    if !(2..=n).contains(&s_first) {
        return arg_err(format!("s_first {s_first} not in [2, {n}]"));
    }
    if !(ratio > 1.0 && ratio.is_finite()) {
        return arg_err("ratio must be > 1");
    }
    let mut points: Vec<usize> = Vec::new();
    let mut x = s_first as f64;
    while x.round() < n as f64 {
        let s = x.round() as usize;
        if points.last().is_none_or(|&p| s > p) {
            points.push(s);
        }
        x *= ratio;
    }
    points.push(n);
    SplitSchedule::new(points)
}

/// Where replayed examples come from.
pub trait ReplaySource {
    /// Returns example `index` (1-based) for replay stream `stream`.
    fn fetch(&mut self, stream: usize, index: u64) -> Result<Example>;
}

pub struct InMemorySource<'a>(pub &'a SequenceDataset);

impl ReplaySource for InMemorySource<'_> {
    fn fetch(&mut self, _stream: usize, index: u64) -> Result<Example> {
        index
            .checked_sub(1)
            .and_then(|i| self.0.examples().get(i as usize))
            .cloned()
            .ok_or_else(|| Error::Argument(format!("replay index {index} out of range")))
    }
}

/// One sequential file reader per replay stream. Streams only ever read the
/// next record or restart at the first one, so no random access is needed.
pub struct FileStreams {
    readers: Vec<SequentialReader>,
}

impl FileStreams {
    pub fn open(path: &Path, num_streams: usize) -> Result<Self> {
        let readers = (0..num_streams)
            .map(|_| dataset::open_stream(path))
            .collect::<Result<_>>()?;
        Ok(Self { readers })
    }
}

impl ReplaySource for FileStreams {
    fn fetch(&mut self, stream: usize, index: u64) -> Result<Example> {
        let reader = self
            .readers
            .get_mut(stream)
            .ok_or_else(|| Error::Argument(format!("no reader for stream {stream}")))?;
        if index == 1 && reader.position() != 1 {
            reader.reset()?;
        }
        if reader.position() != index {
            return Err(Error::Argument(format!(
                "stream {stream} asked for {index} at position {}",
                reader.position()
            )));
        }
        reader.read_next()
    }
}

/// Model, EMA copy, temperature and their optimizer states.
struct Learner<'a> {
    spec: &'a ModelSpec,
    params: Params,
    ema_params: Params,
    ema: EmaState,
    opt: OptimizerState,
    mask: Vec<bool>,
    beta: f64,
    beta_opt: OptimizerState,
    beta_opt_config: OptimizerConfig,
    calibrate: bool,
    label_smoothing: f64,
    augment_std: f64,
    aug_rng: Rng64,
}

impl<'a> Learner<'a> {
    fn new(config: &'a RunConfig, protocol: Protocol, init_seed: u64) -> Result<Self> {
        let params = models::init_params(&config.model, init_seed)?;
        let beta_opt_config = config
            .optimizer
            .scaled_lr(config.calibration_lr_factor(protocol));
        Ok(Self {
            spec: &config.model,
            ema_params: params.clone(),
            ema: EmaState::new(params.values(), config.ema_alpha)?,
            opt: OptimizerState::new(config.optimizer, params.len()),
            mask: params.weight_mask(),
            params,
            beta: models::beta0(),
            beta_opt: OptimizerState::new(beta_opt_config, 1),
            beta_opt_config,
            calibrate: config.forward_calibration,
            label_smoothing: config.label_smoothing,
            augment_std: config.augment_std,
            aug_rng: rng::seeded(rng::derive_seed(config.seed, "augment", 0)),
        })
    }

    /// Fresh parameters, optimizer, EMA and temperature.
    fn reinitialize(&mut self, config: &RunConfig, init_seed: u64) -> Result<()> {
        self.params = models::init_params(&config.model, init_seed)?;
        self.ema_params = self.params.clone();
        self.ema.reset(self.params.values());
        self.opt = OptimizerState::new(config.optimizer, self.params.len());
        self.beta = models::beta0();
        self.beta_opt = OptimizerState::new(self.beta_opt_config, 1);
        Ok(())
    }

    fn reset_ema(&mut self) {
        self.ema.reset(self.params.values());
        self.ema_params = self.params.clone();
    }

    fn evaluate(&self, batch: &Batch) -> Result<Forward> {
        models::forward(self.spec, &self.ema_params, batch)
    }

    /// One gradient step on the temperature from logits of the EMA model.
    fn calibration_step(&mut self, fwd: &Forward, labels: &[u32]) -> Result<()> {
        if !self.calibrate || labels.is_empty() {
            return Ok(());
        }
        let g = models::calibration_grad(&fwd.logits, labels, fwd.num_classes, self.beta);
        let mut beta = [self.beta];
        self.beta_opt.step(&mut beta, &[g], &[false])?;
        self.beta = beta[0];
        Ok(())
    }

    /// Augmented, label-smoothed step at unit temperature, then EMA update.
    fn train_step(&mut self, batch: &Batch) -> Result<u64> {
        let owned;
        let batch = if self.augment_std > 0.0 {
            let mut b = batch.clone();
            dataset::augment(&mut b.inputs, self.augment_std, &mut self.aug_rng);
            owned = b;
            &owned
        } else {
            batch
        };
        let lg = models::loss_and_grads(self.spec, &self.params, batch, self.label_smoothing)?;
        self.opt
            .step(self.params.values_mut(), lg.grads.values(), &self.mask)?;
        self.ema.update(self.params.values());
        self.ema_params.values_mut().copy_from_slice(&self.ema.values);
        Ok(lg.flops)
    }
}

fn batch_of(data: &SequenceDataset, range: std::ops::Range<usize>) -> Batch {
    Batch::from_examples(&data.examples()[range], data.dim())
}

/// Evaluates a batch and records its losses; returns the logits.
fn evaluate_into(
    learner: &Learner,
    batch: &Batch,
    result: &mut PrequentialResult,
) -> Result<Forward> {
    let fwd = learner.evaluate(batch)?;
    result.flops.eval += fwd.flops;
    for (loss, err) in models::calibrated_losses(&fwd, &batch.labels, learner.beta) {
        result.record(loss, err, learner.beta);
    }
    Ok(fwd)
}

pub fn run_mi_rs(config: &RunConfig, data: &SequenceDataset) -> Result<PrequentialResult> {
    run_mi_rs_with_source(config, data, &mut InMemorySource(data))
}

/// Mini-batch incremental training with replay streams.
///
/// For every batch of fresh examples: evaluate it, take one temperature step
/// on it, take one parameter step on it, then let each of the `K` streams
/// contribute one replay batch of the same size.
pub fn run_mi_rs_with_source(
    config: &RunConfig,
    data: &SequenceDataset,
    source: &mut dyn ReplaySource,
) -> Result<PrequentialResult> {
    config.check_dataset(data)?;
    let protocol = Protocol::MiRs;
    let mut learner = Learner::new(config, protocol, rng::derive_seed(config.seed, "init", 0))?;
    let mut streams = ReplayStreamSet::new(config.num_streams, config.replay)?;
    let mut replay_rng = rng::seeded(rng::derive_seed(config.seed, "replay", 0));
    let mut result = PrequentialResult::new(protocol, data.num_classes(), data.len());

    let mut start = 0;
    while start < data.len() {
        let end = (start + config.batch_size).min(data.len());
        let fresh = batch_of(data, start..end);
        let fwd = evaluate_into(&learner, &fresh, &mut result)?;
        learner.calibration_step(&fwd, &fresh.labels)?;
        result.flops.train += learner.train_step(&fresh)?;

        let t_new = end as u64;
        if config.num_streams > 0 {
            let reads = streams.streams_step(t_new, end - start, &mut replay_rng)?;
            for (k, indices) in reads.iter().enumerate() {
                let examples = indices
                    .iter()
                    .map(|&i| source.fetch(k, i))
                    .collect::<Result<Vec<_>>>()?;
                if config.record_replay {
                    result.replay_log.extend(indices.iter().map(|&i| (t_new, i)));
                }
                let batch = Batch::from_examples(&examples, data.dim());
                result.flops.train += learner.train_step(&batch)?;
            }
        }
        result.stamp_flops();
        start = end;
    }
    Ok(result)
}

/// Mini-batch incremental training with an in-memory replay buffer.
///
/// Like [`run_mi_rs`], but after training on a fresh batch its examples are
/// offered to the buffer and `K` batches are sampled from it uniformly.
pub fn run_mi_rb(config: &RunConfig, data: &SequenceDataset) -> Result<PrequentialResult> {
    config.check_dataset(data)?;
    if config.buffer_capacity < config.batch_size {
        return arg_err(format!(
            "buffer capacity {} smaller than batch size {}",
            config.buffer_capacity, config.batch_size
        ));
    }
    let protocol = Protocol::MiRb;
    let mut learner = Learner::new(config, protocol, rng::derive_seed(config.seed, "init", 0))?;
    let mut buffer: ReplayBuffer<()> = ReplayBuffer::new(config.buffer_capacity, config.buffer_policy);
    let mut buffer_rng = rng::seeded(rng::derive_seed(config.seed, "buffer", 0));
    let mut result = PrequentialResult::new(protocol, data.num_classes(), data.len());

    let mut start = 0;
    while start < data.len() {
        let end = (start + config.batch_size).min(data.len());
        let fresh = batch_of(data, start..end);
        let fwd = evaluate_into(&learner, &fresh, &mut result)?;
        learner.calibration_step(&fwd, &fresh.labels)?;
        result.flops.train += learner.train_step(&fresh)?;
        for i in start..end {
            buffer.insert((), i as u64 + 1, &mut buffer_rng)?;
        }
        for _ in 0..config.num_streams {
            let sample = buffer.sample(end - start, &mut buffer_rng)?;
            if config.record_replay {
                result.replay_log.extend(sample.iter().map(|(i, _)| (end as u64, *i)));
            }
            let batch = Batch::from_examples(
                sample.iter().map(|(i, _)| data.get(*i as usize - 1)),
                data.dim(),
            );
            result.flops.train += learner.train_step(&batch)?;
        }
        result.stamp_flops();
        start = end;
    }
    Ok(result)
}

pub fn run_ci_fs(
    config: &RunConfig,
    data: &SequenceDataset,
    schedule: &SplitSchedule,
) -> Result<PrequentialResult> {
    run_chunked(config, data, schedule, Protocol::CiFs, false)
}

pub fn run_ci_cf(
    config: &RunConfig,
    data: &SequenceDataset,
    schedule: &SplitSchedule,
    shrink_perturb: bool,
) -> Result<PrequentialResult> {
    run_chunked(config, data, schedule, Protocol::CiCf, shrink_perturb)
}

/// Train and calibration index sets for the prefix of length `s`.
fn ci_split(config: &RunConfig, s: usize, stage: usize) -> (Vec<usize>, Vec<usize>) {
    let n_train = ci_train_len(s);
    let mut order: Vec<usize> = (0..s).collect();
    if config.random_calibration_split {
        shuffle(&mut order, rng::derive_seed(config.seed, "split", stage as u64));
    }
    let cal = order.split_off(n_train);
    (order, cal)
}

/// `ceil(0.9 * s)`
pub fn ci_train_len(s: usize) -> usize {
    ((s as f64) * CI_TRAIN_FRACTION).ceil() as usize
}

fn shuffle(v: &mut [usize], seed: u64) {
    let mut r = rng::seeded(seed);
    for i in (1..v.len()).rev() {
        v.swap(i, rng::index(&mut r, i + 1));
    }
}

/// Chunk-incremental protocols.
///
/// The first `s_1` examples are charged the uniform code `ln C` each. For
/// every later chunk `[s_k, s_{k+1})` the model is trained for `epochs`
/// passes over the first `s_k` examples (θ steps on the train split at unit
/// temperature alternating with temperature steps on the calibration split)
/// and then evaluates the chunk without further updates.
fn run_chunked(
    config: &RunConfig,
    data: &SequenceDataset,
    schedule: &SplitSchedule,
    protocol: Protocol,
    shrink_perturb: bool,
) -> Result<PrequentialResult> {
    config.check_dataset(data)?;
    if schedule.last() != data.len() {
        return arg_err(format!(
            "schedule ends at {} but the sequence has {} examples",
            schedule.last(),
            data.len()
        ));
    }
    let c = data.num_classes();
    let mut result = PrequentialResult::new(protocol, c, data.len());
    let beta0 = models::beta0();
    let uniform = (c as f64).ln();
    let points = schedule.points();
    for ex in &data.examples()[..points[0]] {
        // argmax of a uniform prediction is class 0
        result.record(uniform, ex.label != 0, beta0);
    }
    result.stamp_flops();

    let mut learner = Learner::new(config, protocol, rng::derive_seed(config.seed, "init", 0))?;
    for (k, w) in points.windows(2).enumerate() {
        let (s, s_next) = (w[0], w[1]);
        match protocol {
            Protocol::CiFs => {
                if k > 0 {
                    learner.reinitialize(config, rng::derive_seed(config.seed, "init", k as u64))?;
                }
            }
            _ => {
                let sp = config.shrink_perturb.unwrap_or_default();
                // the identity transform leaves the learner (and its EMA) untouched
                if k > 0 && shrink_perturb && !sp.is_identity() {
                    optim::shrink_perturb(
                        learner.params.values_mut(),
                        &learner.mask,
                        sp.shrink,
                        sp.noise_std,
                        rng::derive_seed(config.seed, "shrink_perturb", k as u64),
                    )?;
                    learner.reset_ema();
                }
            }
        }

        let (train, cal) = ci_split(config, s, k);
        let mut cal_cursor = 0;
        for epoch in 0..config.epochs {
            let mut order = train.clone();
            shuffle(
                &mut order,
                rng::derive_seed(config.seed, "epoch", ((k as u64) << 32) | epoch as u64),
            );
            for chunk in order.chunks(config.batch_size) {
                let batch = Batch::from_examples(chunk.iter().map(|&i| data.get(i)), data.dim());
                result.flops.train += learner.train_step(&batch)?;
                if learner.calibrate && !cal.is_empty() {
                    let take = config.batch_size.min(cal.len());
                    let idx: Vec<usize> = (0..take).map(|j| cal[(cal_cursor + j) % cal.len()]).collect();
                    cal_cursor = (cal_cursor + take) % cal.len();
                    let cal_batch = Batch::from_examples(idx.iter().map(|&i| data.get(i)), data.dim());
                    let fwd = learner.evaluate(&cal_batch)?;
                    result.flops.train += fwd.flops;
                    learner.calibration_step(&fwd, &cal_batch.labels)?;
                }
            }
        }

        let mut start = s;
        while start < s_next {
            let end = (start + config.batch_size).min(s_next);
            evaluate_into(&learner, &batch_of(data, start..end), &mut result)?;
            start = end;
        }
        result.stamp_flops();
    }
    Ok(result)
}

/// Runs a protocol, building the CI schedule from the config.
pub fn run(protocol: Protocol, config: &RunConfig, data: &SequenceDataset) -> Result<PrequentialResult> {
    match protocol {
        Protocol::MiRs => run_mi_rs(config, data),
        Protocol::MiRb => run_mi_rb(config, data),
        Protocol::CiFs | Protocol::CiCf => {
            let schedule = make_schedule(data.len(), config.split_first.min(data.len()), config.split_ratio)?;
            if protocol == Protocol::CiFs {
                run_ci_fs(config, data, &schedule)
            } else {
                run_ci_cf(config, data, &schedule, config.shrink_perturb.is_some())
            }
        }
    }
}

/// Closed-form FLOP counts for a run over `n` examples.
///
/// With `f` the forward cost of one example:
///
/// * MI/RS, MI/RB: `eval = n f`, `train = (1 + K) * 3 n f`.
/// * CI: `eval = (n - s_1) f`; per stage `k < last` with train split `m_k`
///   and calibration split `c_k`,
///   `train += E * (3 m_k + ceil(m_k / B) * min(B, c_k)) f`, the second
///   term being the calibration forward passes (absent when `c_k = 0` or
///   calibration is off).
pub fn flops_report(
    protocol: Protocol,
    config: &RunConfig,
    n: usize,
    schedule: Option<&SplitSchedule>,
) -> Result<FlopsLedger> {
    let f = config.model.forward_flops_per_example();
    let n64 = n as u64;
    match protocol {
        Protocol::MiRs | Protocol::MiRb => Ok(FlopsLedger {
            eval: n64 * f,
            train: (1 + config.num_streams as u64) * 3 * n64 * f,
        }),
        Protocol::CiFs | Protocol::CiCf => {
            let owned;
            let schedule = match schedule {
                Some(s) => s,
                None => {
                    owned = make_schedule(n, config.split_first.min(n), config.split_ratio)?;
                    &owned
                }
            };
            let points = schedule.points();
            let b = config.batch_size as u64;
            let mut train = 0u64;
            for &s in &points[..points.len() - 1] {
                let m = ci_train_len(s) as u64;
                let c = s as u64 - m;
                let cal = if config.forward_calibration && c > 0 {
                    m.div_ceil(b) * b.min(c)
                } else {
                    0
                };
                train += config.epochs as u64 * (3 * m + cal) * f;
            }
            Ok(FlopsLedger {
                eval: (n64 - points[0] as u64) * f,
                train,
            })
        }
    }
}

/// `T ln C`: the code length of always predicting the uniform distribution.
pub fn uniform_code_length(len: u64, num_classes: usize) -> Result<f64> {
    if num_classes < 2 {
        return arg_err("need at least 2 classes");
    }
    Ok(len as f64 * (num_classes as f64).ln())
}
