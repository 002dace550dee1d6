//! Process-level tests: run the compiled binary end to end and check exit
//! codes, emitted artifacts, and cross-run guarantees (determinism, oracle
//! parity) exactly as a user would observe them.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_sketch-optim");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary should spawn")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

/// Small, fast run: tiny task, few steps.
const SMALL_TASK: &str = "
[task]
num_features = 200
num_classes = 8
features_per_example = 3
num_examples = 800

[run]
batch_size = 16
steps = 40
log_interval = 10
";

#[test]
fn train_writes_artifacts_and_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", SMALL_TASK);
    let out = tmp.path().join("out");
    let res = run(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(
        res.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&res.stderr)
    );
    for artifact in ["metrics.csv", "resolved.toml", "state.bin"] {
        assert!(out.join(artifact).is_file(), "missing {artifact}");
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,metric,value\n"));
    assert!(metrics.contains("final_full_loss"));
}

#[test]
fn zero_step_run_emits_only_memory_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", "[run]\nsteps = 0\n");
    let out = tmp.path().join("out");
    let res = run(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 4, "header plus three memory rows, got: {metrics}");
    assert_eq!(lines[0], "step,metric,value");
    assert!(lines[1].starts_with("0,memory_dense_cells,"));
    assert!(lines[2].starts_with("0,memory_actual_cells,"));
    assert!(lines[3].starts_with("0,memory_ratio,"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let body = format!(
        "{SMALL_TASK}
[optimizer]
mode = \"sketched\"
clean_interval = 10
clean_factor = 0.5

[sketch]
depth = 3
width = 32
"
    );
    let cfg = write_config(tmp.path(), "run.toml", &body);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let res = run(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(res.status.success());
    }
    for artifact in ["metrics.csv", "state.bin", "resolved.toml"] {
        assert_eq!(
            fs::read(a.join(artifact)).unwrap(),
            fs::read(b.join(artifact)).unwrap(),
            "{artifact} differs between identical runs"
        );
    }
}

#[test]
fn seed_override_lands_in_resolved_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", "[run]\nsteps = 0\n");
    let out = tmp.path().join("out");
    let res = run(&["train", "--config", &cfg, "--seed", "99", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let resolved = fs::read_to_string(out.join("resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 99"), "resolved.toml: {resolved}");
}

#[test]
fn unknown_config_key_is_exit_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", "[run]\nsteps = 1\nbogus_knob = 3\n");
    let res = run(&["train", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("bogus_knob"), "stderr should name the key: {stderr}");
}

#[test]
fn malformed_toml_is_exit_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", "[run\nsteps = = 1\n");
    let res = run(&["train", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_exit_2() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.toml");
    let res = run(&["train", "--config", missing.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn sketched_mode_without_sketch_section_is_exit_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.toml",
        "[optimizer]\nmode = \"sketched\"\n[run]\nsteps = 1\n",
    );
    let res = run(&["train", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("[sketch]"), "stderr: {stderr}");
}

#[test]
fn out_dir_colliding_with_file_is_exit_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", "[run]\nsteps = 0\n");
    let blocker = tmp.path().join("occupied");
    fs::write(&blocker, b"not a directory").unwrap();
    let res = run(&["train", "--config", &cfg, "--out", blocker.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn powerlaw_without_snapshots_is_exit_2() {
    let tmp = TempDir::new().unwrap();
    let res = run(&["powerlaw", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("snapshots.bin"), "stderr: {stderr}");
}

#[test]
fn powerlaw_reads_snapshots_and_writes_series() {
    let tmp = TempDir::new().unwrap();
    let body = format!("{SMALL_TASK}snapshot_interval = 10\n");
    let cfg = write_config(tmp.path(), "run.toml", &body);
    let out = tmp.path().join("out");
    let res = run(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    assert!(out.join("snapshots.bin").is_file());

    let res = run(&["powerlaw", "--out", out.to_str().unwrap()]);
    assert!(
        res.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&res.stderr)
    );
    let series = fs::read_to_string(out.join("powerlaw.csv")).unwrap();
    assert!(series.starts_with("step,metric,value\n"));
    assert!(series.contains("midpoint_first"));
    assert!(series.contains("jaccard_second"));
    let topk = fs::read_to_string(out.join("powerlaw_topk.csv")).unwrap();
    assert!(topk.starts_with("step,rank,item_id,magnitude\n"));
    // 40 steps at interval 10 -> 4 records, each contributing top-k rows.
    assert_eq!(topk.lines().count(), 1 + 4 * 100);
}

#[test]
fn sketch_bench_writes_rates() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bench.toml",
        "[bench]
depth = 3
width = 128
dim = 1
num_items = 2000
seeds = 3
",
    );
    let out = tmp.path().join("out");
    let res = run(&["sketch-bench", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(
        res.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&res.stderr)
    );
    let bench = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert!(bench.starts_with("seed,kind,violations,components,rate\n"));
    assert!(bench.contains("aggregate,signed_median,"));
    assert!(bench.contains("aggregate,nonneg_min,"));
    assert!(bench.contains("aggregate,nonneg_min_underestimates,"));
    // Per-seed rows for both kinds plus three aggregate rows.
    assert_eq!(bench.lines().count(), 1 + 3 * 2 + 3);
}

/// Every example config in the repository must parse and validate.
#[test]
fn shipped_example_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = sketch_optim_cli::RunConfig::load(&path)
                .unwrap_or_else(|e| panic!("{} does not parse: {e}", path.display()));
            cfg.validate().unwrap_or_else(|e| panic!("{} invalid: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5, "expected the shipped configs, found {seen} in {}", dir.display());
}

/// With exact (injective) storage the whole trajectory must match dense
/// training: identical losses at every logged step in the 64-bit path.
#[test]
fn injective_oracle_matches_dense_losses() {
    let tmp = TempDir::new().unwrap();
    let base = "
precision = \"f64\"

[task]
num_features = 200
num_classes = 8
features_per_example = 3
num_examples = 800

[optimizer]
kind = \"momentum\"
learning_rate = 0.05

[run]
batch_size = 16
steps = 60
log_interval = 10
";
    let dense_cfg = write_config(tmp.path(), "dense.toml", base);
    let oracle_cfg = write_config(
        tmp.path(),
        "oracle.toml",
        &base.replace("kind = \"momentum\"", "kind = \"momentum\"\nmode = \"injective-oracle\""),
    );
    let (d, o) = (tmp.path().join("d"), tmp.path().join("o"));
    for (cfg, out) in [(&dense_cfg, &d), (&oracle_cfg, &o)] {
        let res = run(&["train", "--config", cfg, "--out", out.to_str().unwrap()]);
        assert!(res.status.success());
    }
    let losses = |dir: &Path| -> Vec<(String, f64)> {
        fs::read_to_string(dir.join("metrics.csv"))
            .unwrap()
            .lines()
            .filter(|l| l.contains(",loss,") || l.contains(",final_full_loss,"))
            .map(|l| {
                let mut parts = l.split(',');
                let step = parts.next().unwrap().to_string();
                parts.next();
                (step, parts.next().unwrap().parse().unwrap())
            })
            .collect()
    };
    let (dl, ol) = (losses(&d), losses(&o));
    assert_eq!(dl.len(), ol.len());
    assert!(!dl.is_empty());
    for ((step, a), (_, b)) in dl.iter().zip(&ol) {
        assert!(
            (a - b).abs() <= 1e-6 * a.abs().max(1.0),
            "loss diverges at step {step}: dense {a} vs oracle {b}"
        );
    }
}
