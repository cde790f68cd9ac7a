//! Prequential description lengths for classification sequences.
//!
//! The crate evaluates how well a model family compresses a labelled
//! sequence by predicting every example before it is trained on. Four
//! online-learning protocols are provided in [`estimators`]: chunk-wise
//! retraining from scratch, chunk-wise continual fine-tuning, mini-batch
//! learning with an in-memory replay buffer and mini-batch learning with
//! replay streams over the stored sequence.
//!
//! Supporting modules:
//!
//! * [`dataset`]: example sequences, the `PQDS` binary format, IDX import and
//!   a synthetic channel task for model-selection experiments.
//! * [`models`]: linear and MLP classifiers with hand-derived gradients and a
//!   temperature-calibrated prediction head.
//! * [`optim`]: AdamW, SGD with momentum, parameter EMA and shrink & perturb.
//! * [`replay`]: replay distributions, stream resets, FIFO/reservoir buffers.
//! * [`analysis`]: model posteriors, regret curves and Pareto fronts.
//! * [`oracle`]: exact Bernoulli NML and KT code lengths.
//! * [`config`] and [`cli`]: the experiment runner behind the `preqmdl` binary.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod models;
pub mod optim;
pub mod oracle;
pub mod replay;
pub mod rng;

pub use error::{Error, Result};
