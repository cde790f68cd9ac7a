//! Command-line front end and the file-level commands behind it.
//!
//! Every output file is written to a temporary sibling and renamed into
//! place. Floats are printed with 17 significant digits so the CSVs
//! round-trip exactly.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 failed invariant.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::analysis::{model_posterior, pareto_front, regret_curve, FrontPoint, RunSummary};
use crate::config::{parse_config, DataSource, ExperimentConfig};
use crate::dataset::{
    generate_channel_task, import_idx, read_sequence, shuffle_sequence, write_sequence, ChannelTaskSpec,
    SequenceDataset,
};
use crate::error::{arg_err, Error, Result};
use crate::estimators::{self, flops_report, FileStreams, PrequentialResult, Protocol, RunConfig};
use crate::oracle::{oracle_table, MAX_ENUM_LEN};
use crate::rng;

pub const STEPS_HEADER: &str = "step,next_step_loss_nats,cumulative_loss_nats,cumulative_errors,beta,eval_flops,train_flops";
pub const SUMMARY_HEADER: &str = "description_length_nats,total_errors,total_flops,seed,config_hash";
pub const SWEEP_INDEX_HEADER: &str = "run_id,seed,lr,adam_eps,ema_alpha,weight_decay,num_streams,description_length_nats,total_errors,total_flops,config_hash";
pub const REGRET_HEADER: &str = "step,regret_nats";
pub const PARETO_HEADER: &str = "label,total_flops,description_length_nats";
pub const POSTERIOR_HEADER: &str = "label,description_length_nats,log_posterior,posterior";

#[derive(Debug, Parser)]
#[command(name = "preqmdl", version, about = "Prequential description lengths of neural learners")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment configuration file (`key = value` lines).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `seed` (run) or `sweep_seed` (sweep).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one prequential estimate and write steps.csv and summary.csv.
    Run(RunArgs),
    /// Run log-uniformly sampled hyperparameter settings.
    Sweep(RunArgs),
    /// Regret curve of one run against a baseline (steps.csv files or run directories).
    Regret {
        /// Run directory or its steps.csv.
        #[arg(long)]
        run: PathBuf,
        /// Baseline run directory or steps.csv; must have the same length.
        #[arg(long)]
        baseline: PathBuf,
        /// Output CSV; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// FLOPs / description-length Pareto front of a sweep index.
    Pareto {
        /// sweep_index.csv written by `sweep`.
        #[arg(long)]
        index: PathBuf,
        /// Output CSV; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior over models from their description lengths.
    Posterior {
        /// summary.csv files or run directories.
        inputs: Vec<PathBuf>,
        /// Description lengths in nats, instead of summary files.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        lengths: Vec<f64>,
        /// Output CSV; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the NML / KT reference codes by enumeration.
    OracleCheck {
        /// Longest sequence to enumerate.
        #[arg(long, default_value_t = MAX_ENUM_LEN)]
        t_max: usize,
    },
    /// Generate the synthetic channel task as a PQDS file.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 2)]
        dim_per_channel: usize,
        #[arg(long, default_value_t = 1.0)]
        noise_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Channels the label is a function of; the rest are distractors.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        condition_on: Vec<usize>,
        /// Permute the example order with this seed.
        #[arg(long)]
        shuffle_seed: Option<u64>,
    },
    /// Convert an IDX image/label pair to a PQDS file.
    ImportIdx {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Permute the example order with this seed.
        #[arg(long)]
        shuffle_seed: Option<u64>,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Argument(_) | Error::Config { .. } => 1,
        Error::Format(_) | Error::Exhausted { .. } | Error::Io(_) => 2,
        Error::Invariant(_) => 3,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run(a) => {
            let cfg = load_config(&a.config, a.seed, false)?;
            let out = output_dir(&cfg, a.out)?;
            let outcome = with_pool(a.parallelism, || cmd_run(&cfg, &out))??;
            println!(
                "{} description_length_nats={} total_errors={} total_flops={}",
                cfg.protocol.name(),
                fmt_f(outcome.summary.description_length),
                outcome.summary.total_errors,
                outcome.summary.total_flops
            );
            Ok(0)
        }
        Command::Sweep(a) => {
            let cfg = load_config(&a.config, a.seed, true)?;
            let out = output_dir(&cfg, a.out)?;
            let rows = cmd_sweep(&cfg, &out, a.parallelism)?;
            println!("{} runs written to {}", rows.len(), out.display());
            Ok(0)
        }
        Command::Regret { run, baseline, out } => {
            let text = cmd_regret(&run, &baseline)?;
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
        Command::Pareto { index, out } => {
            let text = cmd_pareto(&index)?;
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
        Command::Posterior { inputs, lengths, out } => {
            let text = cmd_posterior(&inputs, &lengths)?;
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
        Command::OracleCheck { t_max } => {
            let (text, ok) = cmd_oracle_check(t_max)?;
            print!("{text}");
            Ok(if ok { 0 } else { 3 })
        }
        Command::GenData {
            out,
            n,
            channels,
            classes,
            dim_per_channel,
            noise_std,
            seed,
            condition_on,
            shuffle_seed,
        } => {
            let spec = ChannelTaskSpec {
                n,
                channels,
                classes,
                dim_per_channel,
                noise_std,
                seed,
                condition_on,
            };
            let mut data = generate_channel_task(&spec)?;
            if let Some(s) = shuffle_seed {
                data = shuffle_sequence(&data, s);
            }
            write_dataset_atomic(&data, &out)?;
            Ok(0)
        }
        Command::ImportIdx {
            images,
            labels,
            out,
            shuffle_seed,
        } => {
            let mut data = import_idx(&images, &labels)?;
            if let Some(s) = shuffle_seed {
                data = shuffle_sequence(&data, s);
            }
            write_dataset_atomic(&data, &out)?;
            Ok(0)
        }
    }
}

fn with_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(0) => arg_err("--parallelism must be >= 1"),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn output_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| cfg.out.clone())
        .ok_or_else(|| Error::Argument("no output directory: pass --out or set `out`".into()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Reads a configuration file. Relative data paths are resolved against the
/// file's directory.
pub fn load_config(path: &Path, seed: Option<u64>, sweep: bool) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    match &mut cfg.source {
        DataSource::Pqds(p) => resolve(p),
        DataSource::Idx { images, labels } => {
            resolve(images);
            resolve(labels);
        }
        DataSource::Synthetic(_) => {}
    }
    if let Some(s) = seed {
        if sweep {
            cfg.sweep.seed = s;
        } else {
            cfg.run.seed = s;
        }
    }
    Ok(cfg)
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<SequenceDataset> {
    let data = match &cfg.source {
        DataSource::Pqds(p) => read_sequence(p)?,
        DataSource::Idx { images, labels } => import_idx(images, labels)?,
        DataSource::Synthetic(spec) => generate_channel_task(spec)?,
    };
    Ok(match cfg.shuffle_seed {
        Some(s) => shuffle_sequence(&data, s),
        None => data,
    })
}

/// SHA-256 of the resolved configuration, ignoring the output location.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.out = None;
    Sha256::digest(c.to_text().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub description_length: f64,
    pub total_errors: u64,
    pub total_flops: u64,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Run settings with model dimensions filled in from the data.
    pub run_config: RunConfig,
    pub result: PrequentialResult,
    pub summary: Summary,
}

/// Runs the configured protocol without writing anything.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let data = load_data(cfg)?;
    let run = cfg.run_config(data.dim(), data.num_classes());
    let result = match (&cfg.source, cfg.protocol, cfg.replay_from_disk) {
        (DataSource::Pqds(path), Protocol::MiRs, true) if cfg.shuffle_seed.is_none() => {
            let mut streams = FileStreams::open(path, run.num_streams)?;
            estimators::run_mi_rs_with_source(&run, &data, &mut streams)?
        }
        (_, _, true) => {
            return arg_err("`replay_from_disk` needs protocol mi_rs and an unshuffled `data` file");
        }
        _ => estimators::run(cfg.protocol, &run, &data)?,
    };
    let summary = Summary {
        description_length: result.description_length(),
        total_errors: result.cumulative_errors,
        total_flops: result.flops.total(),
        seed: run.seed,
        config_hash: config_hash(cfg),
    };
    Ok(RunOutcome {
        run_config: run,
        result,
        summary,
    })
}

fn verify(protocol: Protocol, outcome: &RunOutcome) -> Result<()> {
    outcome.result.check_invariants()?;
    let expected = flops_report(protocol, &outcome.run_config, outcome.result.len(), None)?;
    if expected != outcome.result.flops {
        return Err(Error::Invariant(format!(
            "flop counters {:?} differ from closed form {:?}",
            outcome.result.flops, expected
        )));
    }
    Ok(())
}

/// Runs one configuration and writes `steps.csv`, `summary.csv` and the
/// resolved `config.txt` into `out`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let outcome = execute(cfg)?;
    fs::create_dir_all(out)?;
    let mut resolved = cfg.clone();
    resolved.out = None;
    write_atomic(&out.join("config.txt"), resolved.to_text().as_bytes())?;
    write_atomic(&out.join("steps.csv"), steps_csv(&outcome.result).as_bytes())?;
    write_atomic(&out.join("summary.csv"), summary_csv(&outcome.summary).as_bytes())?;
    verify(cfg.protocol, &outcome)?;
    Ok(outcome)
}

/// Float formatting used in every CSV: 17 significant digits.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn steps_csv(result: &PrequentialResult) -> String {
    let mut s = String::with_capacity(result.len() * 120);
    s.push_str(STEPS_HEADER);
    s.push('\n');
    let cumulative = result.cumulative_series();
    let mut errors = 0u64;
    for i in 0..result.len() {
        errors += u64::from(result.per_step_error[i]);
        let f = result.per_step_flops[i];
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            i + 1,
            fmt_f(result.per_step_loss[i]),
            fmt_f(cumulative[i]),
            errors,
            fmt_f(result.per_step_beta[i]),
            f.eval,
            f.train
        ));
    }
    s
}

pub fn summary_csv(s: &Summary) -> String {
    format!(
        "{SUMMARY_HEADER}\n{},{},{},{},{}\n",
        fmt_f(s.description_length),
        s.total_errors,
        s.total_flops,
        s.seed,
        s.config_hash
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub run_id: String,
    pub config: ExperimentConfig,
    pub summary: Summary,
}

fn log_uniform(r: &mut rng::Rng64, (lo, hi): (f64, f64)) -> f64 {
    (lo.ln() + rng::uniform01(r) * (hi.ln() - lo.ln())).exp()
}

/// The configurations a sweep runs, in index order.
pub fn sweep_configs(base: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let w = &base.sweep;
    (0..w.runs as u64)
        .map(|i| {
            let mut r = rng::seeded(rng::derive_seed(w.seed, "sweep", i));
            let mut c = base.clone();
            c.out = None;
            let o = &mut c.run.optimizer;
            o.lr = log_uniform(&mut r, w.lr);
            o.eps = log_uniform(&mut r, w.adam_eps);
            c.run.ema_alpha = log_uniform(&mut r, w.ema_alpha);
            c.run.optimizer.weight_decay = log_uniform(&mut r, w.weight_decay);
            let (klo, khi) = w.num_streams;
            let k = log_uniform(&mut r, (klo as f64, khi as f64)).round() as usize;
            c.run.num_streams = k.clamp(klo, khi);
            c.run.seed = rng::derive_seed(w.seed, "run", i);
            c
        })
        .collect()
}

/// Runs every sweep configuration into `out/run_XXXX/` and writes
/// `out/sweep_index.csv`.
pub fn cmd_sweep(base: &ExperimentConfig, out: &Path, parallelism: Option<usize>) -> Result<Vec<SweepRow>> {
    if base.sweep.runs == 0 {
        return arg_err("`sweep_runs` must be >= 1");
    }
    fs::create_dir_all(out)?;
    let configs = sweep_configs(base);
    let rows = with_pool(parallelism, || {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let run_id = format!("run_{i:04}");
                let outcome = cmd_run(c, &out.join(&run_id))?;
                Ok(SweepRow {
                    run_id,
                    config: c.clone(),
                    summary: outcome.summary,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut s = format!("{SWEEP_INDEX_HEADER}\n");
    for r in &rows {
        let o = &r.config.run.optimizer;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.run_id,
            r.summary.seed,
            fmt_f(o.lr),
            fmt_f(o.eps),
            fmt_f(r.config.run.ema_alpha),
            fmt_f(o.weight_decay),
            r.config.run.num_streams,
            fmt_f(r.summary.description_length),
            r.summary.total_errors,
            r.summary.total_flops,
            r.summary.config_hash
        ));
    }
    write_atomic(&out.join("sweep_index.csv"), s.as_bytes())?;
    Ok(rows)
}

/// Reads named columns of a CSV file as strings.
fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let idx = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| Error::Format(format!("{}: missing column `{n}`", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        rows.push(idx.iter().map(|&i| rec.get(i).unwrap_or("").to_string()).collect());
    }
    Ok(rows)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(format!("{}: {e}", path.display()))
    }
}

fn parse_num<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("{}: bad number {s:?}", path.display())))
}

fn in_dir(path: &Path, file: &str) -> PathBuf {
    if path.is_dir() {
        path.join(file)
    } else {
        path.to_path_buf()
    }
}

fn label_of(path: &Path) -> String {
    let p = if path.is_dir() { Some(path) } else { path.parent() };
    p.and_then(|d| d.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_cumulative(path: &Path) -> Result<RunSummary> {
    let file = in_dir(path, "steps.csv");
    let rows = read_columns(&file, &["cumulative_loss_nats", "eval_flops", "train_flops"])?;
    let cumulative = rows.iter().map(|r| parse_num(&file, &r[0])).collect::<Result<Vec<f64>>>()?;
    let flops = match rows.last() {
        Some(r) => parse_num::<u64>(&file, &r[1])? + parse_num::<u64>(&file, &r[2])?,
        None => 0,
    };
    Ok(RunSummary::new(label_of(path), flops, cumulative))
}

/// `regret.csv` contents: cumulative loss of `run` minus that of `baseline`.
pub fn cmd_regret(run: &Path, baseline: &Path) -> Result<String> {
    let a = read_cumulative(run)?;
    let b = read_cumulative(baseline)?;
    let regret = regret_curve(&a, &b)?;
    let mut s = format!("{REGRET_HEADER}\n");
    for (i, r) in regret.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, fmt_f(*r)));
    }
    Ok(s)
}

/// `pareto.csv` contents from a sweep index.
pub fn cmd_pareto(index: &Path) -> Result<String> {
    let file = in_dir(index, "sweep_index.csv");
    let rows = read_columns(&file, &["run_id", "total_flops", "description_length_nats"])?;
    let points = rows
        .iter()
        .map(|r| {
            Ok(FrontPoint::new(
                r[0].clone(),
                parse_num::<u64>(&file, &r[1])? as f64,
                parse_num(&file, &r[2])?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let front = pareto_front(&points)?;
    let mut s = format!("{PARETO_HEADER}\n");
    for p in front {
        s.push_str(&format!("{},{},{}\n", p.label, p.flops as u64, fmt_f(p.length)));
    }
    Ok(s)
}

/// `posterior.csv` contents from summary files or raw lengths.
pub fn cmd_posterior(inputs: &[PathBuf], lengths: &[f64]) -> Result<String> {
    let mut labelled: Vec<(String, f64)> = Vec::new();
    for p in inputs {
        let file = in_dir(p, "summary.csv");
        let rows = read_columns(&file, &["description_length_nats"])?;
        let [row] = &rows[..] else {
            return Err(Error::Format(format!("{}: expected one summary row", file.display())));
        };
        labelled.push((label_of(p), parse_num(&file, &row[0])?));
    }
    for (i, l) in lengths.iter().enumerate() {
        labelled.push((format!("model_{i}"), *l));
    }
    let post = model_posterior(&labelled.iter().map(|(_, l)| *l).collect::<Vec<_>>())?;
    let mut s = format!("{POSTERIOR_HEADER}\n");
    for ((label, l), lp) in labelled.iter().zip(&post.log_probs) {
        s.push_str(&format!("{label},{},{},{}\n", fmt_f(*l), fmt_f(*lp), fmt_f(lp.exp())));
    }
    Ok(s)
}

/// The oracle table as CSV and whether every row passed.
pub fn cmd_oracle_check(t_max: usize) -> Result<(String, bool)> {
    let rows = oracle_table(t_max)?;
    let mut s = String::from(
        "T,nml_complexity_nats,nml_normalization_error,complexity_enum_error,max_kt_regret_nats,kt_regret_bound_nats,max_kt_minus_nml_nats,ok\n",
    );
    for r in &rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.len,
            fmt_f(r.complexity),
            fmt_f(r.nml_normalization_error),
            fmt_f(r.complexity_enum_error),
            fmt_f(r.max_kt_regret),
            fmt_f(r.kt_regret_bound),
            fmt_f(r.max_kt_minus_nml),
            r.ok
        ));
    }
    Ok((s, rows.iter().all(|r| r.ok)))
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_dataset_atomic(data: &SequenceDataset, path: &Path) -> Result<()> {
    let tmp = tmp_path(path);
    write_sequence(data, &tmp)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 230.25850929940458, 1e-300, 2f64.ln(), 0.0] {
            assert_eq!(fmt_f(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Argument("x".into())), 1);
        assert_eq!(exit_code(&Error::Config { line: 1, message: "x".into() }), 1);
        assert_eq!(exit_code(&Error::Format("x".into())), 2);
        assert_eq!(exit_code(&Error::Invariant("x".into())), 3);
    }

    #[test]
    fn usage_errors_exit_one_and_help_exits_zero() {
        assert_eq!(main_with_args(["preqmdl", "no-such-command"]), 1);
        assert_eq!(main_with_args(["preqmdl", "run"]), 1);
        assert_eq!(main_with_args(["preqmdl", "--help"]), 0);
    }

    #[test]
    fn sweep_configs_stay_in_range_and_are_deterministic() {
        let mut base = parse_config("protocol = mi_rs\nsynthetic = channel\nsweep_runs = 50\n").unwrap();
        base.sweep.seed = 9;
        let a = sweep_configs(&base);
        assert_eq!(a, sweep_configs(&base));
        for c in &a {
            let o = &c.run.optimizer;
            assert!((1e-4..=3e-3).contains(&o.lr));
            assert!((1e-4..=1.0).contains(&o.eps));
            assert!((1e-3..=1e-1).contains(&c.run.ema_alpha));
            assert!((1e-4..=1.0).contains(&o.weight_decay));
            assert!((10..=100).contains(&c.run.num_streams));
        }
        let seeds: std::collections::HashSet<_> = a.iter().map(|c| c.run.seed).collect();
        assert_eq!(seeds.len(), a.len());
    }

    #[test]
    fn posterior_from_lengths() {
        let text = cmd_posterior(&[], &[0.0, 300.0]).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], POSTERIOR_HEADER);
        let p0: f64 = lines[1].split(',').nth(3).unwrap().parse().unwrap();
        let lp1: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
        assert!((p0 - 1.0).abs() < 1e-12);
        assert!((lp1 + 300.0).abs() < 1e-9);
    }
}
