//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment. Unknown and duplicate keys are
//! errors. Every key except `protocol` and the data source has a default;
//! [`ExperimentConfig::to_text`] writes the fully resolved form, which parses
//! back to the same configuration.
//!
//! ```text
//! protocol = mi_rs
//! synthetic = channel
//! synth_n = 5000
//! num_streams = 8
//! lr = 0.003
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::dataset::ChannelTaskSpec;
use crate::error::{Error, Result};
use crate::estimators::{Protocol, RunConfig, ShrinkPerturb};
use crate::models::{Init, ModelKind, ModelSpec};
use crate::optim::OptimizerKind;
use crate::replay::{default_pareto_shape, BufferPolicy, ReplayDistribution};

const KEYS: &[&str] = &[
    "protocol",
    "data",
    "idx_images",
    "idx_labels",
    "synthetic",
    "synth_n",
    "synth_channels",
    "synth_classes",
    "synth_dim_per_channel",
    "synth_noise_std",
    "synth_seed",
    "synth_condition_on",
    "shuffle_seed",
    "model",
    "hidden",
    "weight_standardization",
    "standardize_output",
    "init",
    "optimizer",
    "lr",
    "momentum",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "weight_decay",
    "ema_alpha",
    "label_smoothing",
    "batch_size",
    "num_streams",
    "replay",
    "replay_rate",
    "replay_scale",
    "replay_shape",
    "buffer_capacity",
    "buffer_policy",
    "split_first",
    "split_ratio",
    "epochs",
    "random_calibration_split",
    "shrink_perturb",
    "shrink",
    "perturb_std",
    "forward_calibration",
    "augment_std",
    "seed",
    "replay_from_disk",
    "out",
    "sweep_runs",
    "sweep_seed",
    "sweep_lr",
    "sweep_adam_eps",
    "sweep_ema_alpha",
    "sweep_weight_decay",
    "sweep_num_streams",
];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Pqds(PathBuf),
    Idx { images: PathBuf, labels: PathBuf },
    Synthetic(ChannelTaskSpec),
}

/// Log-uniform sampling intervals for hyperparameter sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub runs: usize,
    pub seed: u64,
    pub lr: (f64, f64),
    pub adam_eps: (f64, f64),
    pub ema_alpha: (f64, f64),
    pub weight_decay: (f64, f64),
    pub num_streams: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub source: DataSource,
    pub shuffle_seed: Option<u64>,
    /// Model input size and class count are placeholders until the data is
    /// loaded; see [`ExperimentConfig::run_config`].
    pub run: RunConfig,
    pub replay_from_disk: bool,
    pub out: Option<PathBuf>,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    /// The run configuration with model dimensions taken from the data.
    pub fn run_config(&self, input_dim: usize, num_classes: usize) -> RunConfig {
        let mut run = self.run.clone();
        run.model.input_dim = input_dim;
        run.model.num_classes = num_classes;
        run
    }
}

struct Entry {
    value: String,
    line: usize,
}

struct Fields {
    entries: HashMap<String, Entry>,
}

impl Fields {
    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(e) => e.value.parse().map_err(|_| Error::Config {
                line: e.line,
                message: format!("cannot parse `{key}` from {:?}", e.value),
            }),
        }
    }

    fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| Error::Config {
                line: e.line,
                message: format!("cannot parse `{key}` from {:?}", e.value),
            }),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.raw(key) {
            None => Ok(default),
            Some(e) => e
                .value
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|_| Error::Config {
                        line: e.line,
                        message: format!("cannot parse `{key}` element {s:?}"),
                    })
                })
                .collect(),
        }
    }

    fn pair<T: FromStr + Copy + PartialOrd>(&self, key: &str, default: (T, T)) -> Result<(T, T)> {
        if self.raw(key).is_none() {
            return Ok(default);
        }
        let v = self.list::<T>(key, Vec::new())?;
        let line = self.line(key);
        match v[..] {
            [lo, hi] if lo <= hi => Ok((lo, hi)),
            _ => Err(Error::Config {
                line,
                message: format!("`{key}` must be `low, high` with low <= high"),
            }),
        }
    }

    fn choice<T>(&self, key: &str, default: T, options: &[(&str, T)]) -> Result<T>
    where
        T: Copy,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(e) => options
                .iter()
                .find(|(name, _)| *name == e.value)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Config {
                    line: e.line,
                    message: format!(
                        "invalid `{key}` {:?}; expected one of {}",
                        e.value,
                        options.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
                    ),
                }),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.raw(key).map_or(0, |e| e.line)
    }
}

fn tokenize(text: &str) -> Result<Fields> {
    let mut entries = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `key = value`, got {content:?}"),
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        if let Some(prev) = entries.get(key) {
            let prev: &Entry = prev;
            return Err(Error::Config {
                line,
                message: format!("duplicate key `{key}` (first set on line {})", prev.line),
            });
        }
        entries.insert(
            key.to_string(),
            Entry {
                value: value.trim().to_string(),
                line,
            },
        );
    }
    Ok(Fields { entries })
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let f = tokenize(text)?;

    let protocol = match f.raw("protocol") {
        None => {
            return Err(Error::Config {
                line: 0,
                message: "missing required key `protocol`".into(),
            })
        }
        Some(e) => Protocol::parse(&e.value).ok_or_else(|| Error::Config {
            line: e.line,
            message: format!(
                "invalid `protocol` {:?}; expected one of mi_rs, mi_rb, ci_fs, ci_cf",
                e.value
            ),
        })?,
    };

    let has = |k: &str| f.raw(k).is_some();
    let sources = [has("data"), has("idx_images") || has("idx_labels"), has("synthetic")]
        .iter()
        .filter(|&&b| b)
        .count();
    if sources != 1 {
        return Err(Error::Config {
            line: 0,
            message: "exactly one data source required: `data`, `idx_images`+`idx_labels`, or `synthetic`".into(),
        });
    }
    let source = if has("data") {
        DataSource::Pqds(f.get("data", PathBuf::new())?)
    } else if has("synthetic") {
        f.choice("synthetic", (), &[("channel", ())])?;
        DataSource::Synthetic(ChannelTaskSpec {
            n: f.get("synth_n", 5000)?,
            channels: f.get("synth_channels", 3)?,
            classes: f.get("synth_classes", 2)?,
            dim_per_channel: f.get("synth_dim_per_channel", 2)?,
            noise_std: f.get("synth_noise_std", 1.0)?,
            seed: f.get("synth_seed", 0)?,
            condition_on: f.list("synth_condition_on", vec![0, 1, 2])?,
        })
    } else {
        for k in ["idx_images", "idx_labels"] {
            if !has(k) {
                return Err(Error::Config {
                    line: 0,
                    message: format!("missing required key `{k}`"),
                });
            }
        }
        DataSource::Idx {
            images: f.get("idx_images", PathBuf::new())?,
            labels: f.get("idx_labels", PathBuf::new())?,
        }
    };

    let kind = f.choice("model", ModelKind::Linear, &[("linear", ModelKind::Linear), ("mlp", ModelKind::Mlp)])?;
    let hidden = f.list("hidden", vec![64usize])?;
    let model = ModelSpec {
        kind,
        hidden_sizes: if kind == ModelKind::Mlp { hidden } else { Vec::new() },
        input_dim: 0,
        num_classes: 0,
        weight_standardization: f.get("weight_standardization", false)?,
        standardize_output: f.get("standardize_output", false)?,
        init: f.choice("init", Init::He, &[("he", Init::He), ("zeros", Init::Zeros)])?,
    };

    let mut run = RunConfig::new(model);
    let o = &mut run.optimizer;
    o.kind = f.choice(
        "optimizer",
        OptimizerKind::AdamW,
        &[("adamw", OptimizerKind::AdamW), ("sgd", OptimizerKind::SgdMomentum)],
    )?;
    o.lr = f.get("lr", o.lr)?;
    o.momentum = f.get("momentum", o.momentum)?;
    o.beta1 = f.get("adam_beta1", o.beta1)?;
    o.beta2 = f.get("adam_beta2", o.beta2)?;
    o.eps = f.get("adam_eps", o.eps)?;
    o.weight_decay = f.get("weight_decay", o.weight_decay)?;
    run.ema_alpha = f.get("ema_alpha", run.ema_alpha)?;
    run.label_smoothing = f.get("label_smoothing", run.label_smoothing)?;
    run.batch_size = f.get("batch_size", run.batch_size)?;
    run.num_streams = f.get("num_streams", run.num_streams)?;
    #[derive(Clone, Copy)]
    enum ReplayKind {
        Uniform,
        Exponential,
        Pareto,
    }
    run.replay = match f.choice(
        "replay",
        ReplayKind::Uniform,
        &[
            ("uniform", ReplayKind::Uniform),
            ("exponential", ReplayKind::Exponential),
            ("pareto", ReplayKind::Pareto),
        ],
    )? {
        ReplayKind::Uniform => ReplayDistribution::Uniform,
        ReplayKind::Exponential => ReplayDistribution::Exponential {
            rate: f.get("replay_rate", 0.01)?,
        },
        ReplayKind::Pareto => ReplayDistribution::Pareto {
            scale: f.get("replay_scale", 100.0)?,
            shape: f.get("replay_shape", default_pareto_shape())?,
        },
    };
    run.buffer_capacity = f.get("buffer_capacity", run.buffer_capacity)?;
    run.buffer_policy = f.choice(
        "buffer_policy",
        BufferPolicy::Fifo,
        &[("fifo", BufferPolicy::Fifo), ("reservoir", BufferPolicy::Reservoir)],
    )?;
    run.split_first = f.get("split_first", run.split_first)?;
    run.split_ratio = f.get("split_ratio", run.split_ratio)?;
    run.epochs = f.get("epochs", run.epochs)?;
    run.random_calibration_split = f.get("random_calibration_split", false)?;
    let sp_default = ShrinkPerturb::default();
    let sp = ShrinkPerturb {
        shrink: f.get("shrink", sp_default.shrink)?,
        noise_std: f.get("perturb_std", sp_default.noise_std)?,
    };
    run.shrink_perturb = f.get("shrink_perturb", false)?.then_some(sp);
    run.forward_calibration = f.get("forward_calibration", true)?;
    run.augment_std = f.get("augment_std", 0.0)?;
    run.seed = f.get("seed", 0)?;

    let sweep = SweepConfig {
        runs: f.get("sweep_runs", 10)?,
        seed: f.get("sweep_seed", run.seed)?,
        lr: f.pair("sweep_lr", (1e-4, 3e-3))?,
        adam_eps: f.pair("sweep_adam_eps", (1e-4, 1.0))?,
        ema_alpha: f.pair("sweep_ema_alpha", (1e-3, 1e-1))?,
        weight_decay: f.pair("sweep_weight_decay", (1e-4, 1.0))?,
        num_streams: f.pair("sweep_num_streams", (10, 100))?,
    };

    let cfg = ExperimentConfig {
        protocol,
        source,
        shuffle_seed: f.get_opt("shuffle_seed")?,
        run,
        replay_from_disk: f.get("replay_from_disk", false)?,
        out: f.get_opt("out")?,
        sweep,
    };
    validate(&cfg, &f)?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig, f: &Fields) -> Result<()> {
    let check = |key: &str, ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(Error::Config {
                line: f.line(key),
                message: format!("`{key}` {what}"),
            })
        }
    };
    let r = &cfg.run;
    check("batch_size", r.batch_size >= 1, "must be >= 1")?;
    check("label_smoothing", (0.0..1.0).contains(&r.label_smoothing), "must be in [0, 1)")?;
    check("ema_alpha", (0.0..=1.0).contains(&r.ema_alpha), "must be in [0, 1]")?;
    check("lr", r.optimizer.lr >= 0.0 && r.optimizer.lr.is_finite(), "must be >= 0")?;
    check("adam_eps", r.optimizer.eps > 0.0, "must be > 0")?;
    check("split_ratio", r.split_ratio > 1.0, "must be > 1")?;
    check("split_first", r.split_first >= 2, "must be >= 2")?;
    check("hidden", !r.model.hidden_sizes.contains(&0), "sizes must be >= 1")?;
    check("augment_std", r.augment_std >= 0.0, "must be >= 0")?;
    check("sweep_lr", cfg.sweep.lr.0 > 0.0, "must be positive")?;
    check("sweep_adam_eps", cfg.sweep.adam_eps.0 > 0.0, "must be positive")?;
    check("sweep_ema_alpha", cfg.sweep.ema_alpha.0 > 0.0 && cfg.sweep.ema_alpha.1 <= 1.0, "must lie in (0, 1]")?;
    check("sweep_weight_decay", cfg.sweep.weight_decay.0 > 0.0, "must be positive")?;
    check("sweep_num_streams", cfg.sweep.num_streams.0 >= 1, "must be >= 1")?;
    if let Err(e) = r.replay.validate() {
        let key = if matches!(r.replay, ReplayDistribution::Exponential { .. }) {
            "replay_rate"
        } else {
            "replay_scale"
        };
        return Err(Error::Config {
            line: f.line(key),
            message: e.to_string(),
        });
    }
    if cfg.replay_from_disk && !matches!(cfg.source, DataSource::Pqds(_)) {
        return Err(Error::Config {
            line: f.line("replay_from_disk"),
            message: "`replay_from_disk` needs a `data` (PQDS) source".into(),
        });
    }
    Ok(())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Fully resolved configuration in canonical key order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("protocol", self.protocol.name().into());
        match &self.source {
            DataSource::Pqds(p) => put("data", p.display().to_string()),
            DataSource::Idx { images, labels } => {
                put("idx_images", images.display().to_string());
                put("idx_labels", labels.display().to_string());
            }
            DataSource::Synthetic(c) => {
                put("synthetic", "channel".into());
                put("synth_n", c.n.to_string());
                put("synth_channels", c.channels.to_string());
                put("synth_classes", c.classes.to_string());
                put("synth_dim_per_channel", c.dim_per_channel.to_string());
                put("synth_noise_std", c.noise_std.to_string());
                put("synth_seed", c.seed.to_string());
                put("synth_condition_on", join(&c.condition_on));
            }
        }
        if let Some(s) = self.shuffle_seed {
            put("shuffle_seed", s.to_string());
        }
        let r = &self.run;
        let m = &r.model;
        put("model", if m.kind == ModelKind::Mlp { "mlp" } else { "linear" }.into());
        if m.kind == ModelKind::Mlp {
            put("hidden", join(&m.hidden_sizes));
        }
        put("weight_standardization", m.weight_standardization.to_string());
        put("standardize_output", m.standardize_output.to_string());
        put("init", if m.init == Init::Zeros { "zeros" } else { "he" }.into());
        let o = &r.optimizer;
        put("optimizer", if o.kind == OptimizerKind::AdamW { "adamw" } else { "sgd" }.into());
        put("lr", o.lr.to_string());
        put("momentum", o.momentum.to_string());
        put("adam_beta1", o.beta1.to_string());
        put("adam_beta2", o.beta2.to_string());
        put("adam_eps", o.eps.to_string());
        put("weight_decay", o.weight_decay.to_string());
        put("ema_alpha", r.ema_alpha.to_string());
        put("label_smoothing", r.label_smoothing.to_string());
        put("batch_size", r.batch_size.to_string());
        put("num_streams", r.num_streams.to_string());
        match r.replay {
            ReplayDistribution::Uniform => put("replay", "uniform".into()),
            ReplayDistribution::Exponential { rate } => {
                put("replay", "exponential".into());
                put("replay_rate", rate.to_string());
            }
            ReplayDistribution::Pareto { scale, shape } => {
                put("replay", "pareto".into());
                put("replay_scale", scale.to_string());
                put("replay_shape", shape.to_string());
            }
        }
        put("buffer_capacity", r.buffer_capacity.to_string());
        put(
            "buffer_policy",
            if r.buffer_policy == BufferPolicy::Fifo { "fifo" } else { "reservoir" }.into(),
        );
        put("split_first", r.split_first.to_string());
        put("split_ratio", r.split_ratio.to_string());
        put("epochs", r.epochs.to_string());
        put("random_calibration_split", r.random_calibration_split.to_string());
        put("shrink_perturb", r.shrink_perturb.is_some().to_string());
        let sp = r.shrink_perturb.unwrap_or_default();
        put("shrink", sp.shrink.to_string());
        put("perturb_std", sp.noise_std.to_string());
        put("forward_calibration", r.forward_calibration.to_string());
        put("augment_std", r.augment_std.to_string());
        put("seed", r.seed.to_string());
        put("replay_from_disk", self.replay_from_disk.to_string());
        if let Some(out) = &self.out {
            put("out", out.display().to_string());
        }
        let w = &self.sweep;
        put("sweep_runs", w.runs.to_string());
        put("sweep_seed", w.seed.to_string());
        put("sweep_lr", format!("{},{}", w.lr.0, w.lr.1));
        put("sweep_adam_eps", format!("{},{}", w.adam_eps.0, w.adam_eps.1));
        put("sweep_ema_alpha", format!("{},{}", w.ema_alpha.0, w.ema_alpha.1));
        put("sweep_weight_decay", format!("{},{}", w.weight_decay.0, w.weight_decay.1));
        put("sweep_num_streams", format!("{},{}", w.num_streams.0, w.num_streams.1));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "protocol = mi_rs\nsynthetic = channel\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.protocol, Protocol::MiRs);
        assert_eq!(c.run.label_smoothing, 0.01);
        assert_eq!(c.run.ema_alpha, 0.01);
        assert_eq!(c.run.optimizer.kind, OptimizerKind::AdamW);
        assert_eq!(c.run.batch_size, 32);
        assert_eq!(c.run.replay, ReplayDistribution::Uniform);
        assert_eq!(c.run.shrink_perturb, None);
        assert!(c.run.forward_calibration);
        assert_eq!(c.sweep.lr, (1e-4, 3e-3));
    }

    #[test]
    fn values_and_comments() {
        let c = parse_config(
            "# header\nprotocol = ci_cf  # trailing\nsynthetic = channel\nlabel_smoothing = 0.01\n\
             synth_condition_on = 0, 1\nreplay = pareto\nreplay_scale = 5\nmodel = mlp\nhidden = 8,4\n\
             shrink_perturb = true\n",
        )
        .unwrap();
        assert_eq!(c.run.label_smoothing, 0.01);
        assert_eq!(c.run.model.hidden_sizes, vec![8, 4]);
        assert!(c.run.shrink_perturb.is_some());
        match &c.source {
            DataSource::Synthetic(s) => assert_eq!(s.condition_on, vec![0, 1]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(c.run.replay, ReplayDistribution::Pareto { scale, .. } if scale == 5.0));
    }

    fn err_line(text: &str) -> (usize, String) {
        match parse_config(text) {
            Err(Error::Config { line, message }) => (line, message),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_key_and_line() {
        let (line, msg) = err_line("synthetic = channel\nprotocol = nonsense\n");
        assert_eq!(line, 2);
        assert!(msg.contains("protocol"));
        let (line, msg) = err_line("protocol = mi_rs\nsynthetic = channel\nbogus = 1\n");
        assert_eq!(line, 3);
        assert!(msg.contains("bogus"));
        let (line, msg) = err_line("protocol = mi_rs\nlr = 0.1\nsynthetic = channel\nlr = 0.2\n");
        assert_eq!(line, 4);
        assert!(msg.contains("duplicate") && msg.contains("lr"));
        let (_, msg) = err_line("synthetic = channel\n");
        assert!(msg.contains("protocol"));
        let (line, msg) = err_line("protocol = mi_rs\nsynthetic = channel\nbatch_size = x\n");
        assert_eq!(line, 3);
        assert!(msg.contains("batch_size"));
        let (line, _) = err_line("protocol = mi_rs\nsynthetic = channel\nlabel_smoothing = 1.5\n");
        assert_eq!(line, 3);
        err_line("protocol = mi_rs\n");
        err_line("protocol = mi_rs\ndata = a.pqds\nsynthetic = channel\n");
        err_line("protocol = mi_rs\nidx_images = a\n");
        err_line("protocol = mi_rs\nsynthetic = channel\nsweep_lr = 3,1\n");
        err_line("protocol = mi_rs\nsynthetic = channel\nreplay_from_disk = true\n");
    }

    #[test]
    fn canonical_text_round_trips() {
        let c = parse_config(
            "protocol = mi_rb\ndata = /tmp/x.pqds\nreplay = exponential\nreplay_rate = 0.25\n\
             optimizer = sgd\nlr = 0.0123\nshuffle_seed = 4\nout = /tmp/o\n",
        )
        .unwrap();
        let again = parse_config(&c.to_text()).unwrap();
        assert_eq!(c, again);
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
    }
}
