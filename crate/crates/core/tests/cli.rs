use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use preqmdl::cli::{self, cmd_posterior, cmd_regret, main_with_args, STEPS_HEADER, SUMMARY_HEADER};
use preqmdl::config::parse_config;
use preqmdl::dataset::{generate_channel_task, read_sequence, write_sequence, ChannelTaskSpec};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_preqmdl"))
}

fn run_args(config: &Path, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = vec![
        "preqmdl".into(),
        "run".into(),
        "--config".into(),
        config.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn write_channel(dir: &Path, n: usize, classes: usize) -> PathBuf {
    let data = generate_channel_task(&ChannelTaskSpec {
        n,
        channels: 3,
        classes,
        dim_per_channel: 2,
        noise_std: 1.0,
        seed: 3,
        condition_on: vec![0, 1, 2],
    })
    .unwrap();
    let p = dir.join("data.pqds");
    write_sequence(&data, &p).unwrap();
    p
}

fn summary_field(out: &Path, column: &str) -> String {
    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == column).unwrap();
    row[i].to_string()
}

#[test]
fn uniform_predictor_costs_t_ln_c() {
    let dir = TempDir::new().unwrap();
    write_channel(dir.path(), 100, 10);
    let cfg = dir.path().join("uniform.txt");
    fs::write(&cfg, "protocol = mi_rs\ndata = data.pqds\ninit = zeros\nlr = 0\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(main_with_args(run_args(&cfg, &out, &[])), 0);
    let dl: f64 = summary_field(&out, "description_length_nats").parse().unwrap();
    assert!((dl - 230.2585).abs() < 1e-4, "{dl}");
    assert!((dl - 100.0 * 10f64.ln()).abs() < 1e-6);
}

#[test]
fn steps_and_summary_agree() {
    let dir = TempDir::new().unwrap();
    write_channel(dir.path(), 150, 3);
    let cfg = dir.path().join("c.txt");
    fs::write(&cfg, "protocol = ci_fs\ndata = data.pqds\nsplit_first = 8\nepochs = 2\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(main_with_args(run_args(&cfg, &out, &["--seed", "5"])), 0);
    let steps = fs::read_to_string(out.join("steps.csv")).unwrap();
    let mut lines = steps.lines();
    assert_eq!(lines.next().unwrap(), STEPS_HEADER);
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 150);
    let last = rows.last().unwrap();
    assert_eq!(last[2], summary_field(&out, "description_length_nats"));
    assert_eq!(last[3], summary_field(&out, "total_errors"));
    let flops: u64 = last[5].parse::<u64>().unwrap() + last[6].parse::<u64>().unwrap();
    assert_eq!(flops.to_string(), summary_field(&out, "total_flops"));
    assert_eq!(summary_field(&out, "seed"), "5");
    assert_eq!(summary_field(&out, "config_hash").len(), 64);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with(SUMMARY_HEADER));
    // every float field carries 17 significant digits
    assert!(last[1].contains('.') && last[1].split('e').next().unwrap().len() == 18);
}

#[test]
fn sweep_of_one_equals_run_of_sampled_config() {
    let dir = TempDir::new().unwrap();
    write_channel(dir.path(), 120, 2);
    let cfg = dir.path().join("sweep.txt");
    fs::write(
        &cfg,
        "protocol = mi_rs\ndata = data.pqds\nsweep_runs = 1\nsweep_seed = 17\nsweep_num_streams = 1,3\n",
    )
    .unwrap();
    let out = dir.path().join("sweep");
    let code = main_with_args(["preqmdl", "sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let run_dir = out.join("run_0000");
    let rerun = dir.path().join("rerun");
    assert_eq!(main_with_args(run_args(&run_dir.join("config.txt"), &rerun, &[])), 0);
    for f in ["steps.csv", "summary.csv", "config.txt"] {
        assert_eq!(fs::read(run_dir.join(f)).unwrap(), fs::read(rerun.join(f)).unwrap(), "{f}");
    }
    let index = fs::read_to_string(out.join("sweep_index.csv")).unwrap();
    assert_eq!(index.lines().count(), 2);
    let lr: f64 = index.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((1e-4..=3e-3).contains(&lr));
}

#[test]
fn sweep_index_is_deterministic_across_parallelism() {
    let dir = TempDir::new().unwrap();
    write_channel(dir.path(), 80, 2);
    let cfg = dir.path().join("sweep.txt");
    fs::write(&cfg, "protocol = mi_rb\ndata = data.pqds\nsweep_runs = 4\nsweep_num_streams = 1,4\nbuffer_capacity = 40\n").unwrap();
    let mut indexes = Vec::new();
    for (i, par) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("s{i}"));
        let code = main_with_args([
            "preqmdl",
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--parallelism",
            par,
        ]);
        assert_eq!(code, 0);
        indexes.push(fs::read(out.join("sweep_index.csv")).unwrap());
    }
    assert_eq!(indexes[0], indexes[1]);
}

#[test]
fn self_regret_is_zero_and_pareto_reads_sweep_index() {
    let dir = TempDir::new().unwrap();
    write_channel(dir.path(), 60, 2);
    let cfg = dir.path().join("c.txt");
    fs::write(&cfg, "protocol = mi_rs\ndata = data.pqds\nnum_streams = 1\n").unwrap();
    let out = dir.path().join("a");
    assert_eq!(main_with_args(run_args(&cfg, &out, &[])), 0);
    let regret = cmd_regret(&out, &out.join("steps.csv")).unwrap();
    let values: Vec<f64> = regret.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 60);
    assert!(values.iter().all(|&v| v == 0.0));

    let index = dir.path().join("sweep_index.csv");
    fs::write(&index, "run_id,total_flops,description_length_nats\na,1,10\nb,2,5\nc,3,7\n").unwrap();
    let front = cli::cmd_pareto(&index).unwrap();
    let labels: Vec<&str> = front.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["a", "b"]);
}

#[test]
fn regret_of_mismatched_lengths_is_an_error() {
    let dir = TempDir::new().unwrap();
    write_channel(dir.path(), 60, 2);
    let cfg = dir.path().join("c.txt");
    fs::write(&cfg, "protocol = mi_rs\ndata = data.pqds\nnum_streams = 1\n").unwrap();
    let a = dir.path().join("a");
    assert_eq!(main_with_args(run_args(&cfg, &a, &[])), 0);
    let short = dir.path().join("short.csv");
    let text = fs::read_to_string(a.join("steps.csv")).unwrap();
    fs::write(&short, text.lines().take(10).collect::<Vec<_>>().join("\n")).unwrap();
    assert!(cmd_regret(&a, &short).is_err());
    fs::write(&short, "step,other\n1,2\n").unwrap();
    let err = cmd_regret(&a, &short).unwrap_err().to_string();
    assert!(err.contains("cumulative_loss_nats"), "{err}");
}

#[test]
fn posterior_reports_log_odds() {
    let text = cmd_posterior(&[], &[0.0, 300.0]).unwrap();
    let second: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    let log_p: f64 = second[2].parse().unwrap();
    assert!((log_p + 300.0).abs() < 1e-9);

    let dir = TempDir::new().unwrap();
    for (name, dl) in [("m1", "1.0e1"), ("m2", "1.2e1")] {
        let d = dir.path().join(name);
        fs::create_dir(&d).unwrap();
        fs::write(d.join("summary.csv"), format!("{SUMMARY_HEADER}\n{dl},0,0,0,x\n")).unwrap();
    }
    let text = cmd_posterior(&[dir.path().join("m1"), dir.path().join("m2")], &[]).unwrap();
    let p: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!((p[0] / p[1] - 2f64.exp()).abs() < 1e-9);
}

#[test]
fn replay_from_disk_matches_in_memory() {
    let dir = TempDir::new().unwrap();
    write_channel(dir.path(), 200, 2);
    let body = "protocol = mi_rs\ndata = data.pqds\nnum_streams = 3\nbatch_size = 7\n";
    let mem = parse_config(body).unwrap();
    let mut disk = parse_config(&format!("{body}replay_from_disk = true\n")).unwrap();
    let data_path = dir.path().join("data.pqds");
    let mut mem = mem;
    for c in [&mut mem, &mut disk] {
        c.source = preqmdl::config::DataSource::Pqds(data_path.clone());
    }
    let a = cli::execute(&mem).unwrap();
    let b = cli::execute(&disk).unwrap();
    assert_eq!(a.result.per_step_loss, b.result.per_step_loss);
}

#[test]
fn exit_codes_of_the_binary() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "synthetic = channel\nprotocol = nonsense\n").unwrap();
    let out = bin()
        .args(["run", "--config", bad.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("protocol"), "{err}");

    let missing = dir.path().join("missing.txt");
    fs::write(&missing, "protocol = mi_rs\ndata = nowhere.pqds\n").unwrap();
    let out = bin()
        .args(["run", "--config", missing.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let garbage = dir.path().join("garbage.pqds");
    fs::write(&garbage, b"not a dataset at all, really").unwrap();
    let cfg = dir.path().join("garbage.txt");
    fs::write(&cfg, "protocol = mi_rs\ndata = garbage.pqds\n").unwrap();
    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    let out = bin().args(["oracle-check", "--t-max", "14"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8_lossy(&out.stdout);
    assert_eq!(table.lines().count(), 15);
    assert!(table.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn gen_data_and_import_idx_write_pqds() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("gen.pqds");
    let code = main_with_args([
        "preqmdl",
        "gen-data",
        "--out",
        out.to_str().unwrap(),
        "--n",
        "50",
        "--dim-per-channel",
        "3",
        "--condition-on",
        "0,2",
    ]);
    assert_eq!(code, 0);
    let data = read_sequence(&out).unwrap();
    assert_eq!((data.len(), data.dim()), (50, 9));
    assert!(data.examples().iter().all(|e| e.features[3..6].iter().all(|&x| x == 0.0)));

    let mut images = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2];
    images.extend([51, 255, 0, 102]);
    let labels = vec![0, 0, 8, 1, 0, 0, 0, 2, 7, 3];
    let (ip, lp) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    fs::write(&ip, images).unwrap();
    fs::write(&lp, labels).unwrap();
    let out = dir.path().join("idx.pqds");
    let code = main_with_args([
        "preqmdl",
        "import-idx",
        "--images",
        ip.to_str().unwrap(),
        "--labels",
        lp.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let data = read_sequence(&out).unwrap();
    assert_eq!(data.num_classes(), 8);
    assert_eq!(data.get(0).features, vec![0.2, 1.0]);
    assert_eq!(data.get(1).label, 3);
}
