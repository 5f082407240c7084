//! End-to-end behaviour of the `ukan` binary.

use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ukan_cli::train::{build_model, metric_columns, CHECKPOINT_FILE, METRICS_FILE, METRICS_HEADER};
use ukan_cli::{Checkpoint, OptimizerState, RunConfig};
use ukan_core::{AdamState, Tape, Tensor};

fn ukan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ukan")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_MOONS: &str = "
task = moons
model = kan
widths = 2,3,2
grid_min = -1.5
grid_max = 2.5
grid_size = 4
optimizer = sgd
lr = 0.05
epochs = 30
eval_every = 10
batch_size = 32
n_train = 128
n_val = 64
";

#[test]
fn invalid_config_exits_2_with_field_message() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "bad.conf", "task = moons\nlearning_rate = 0.1\n");
    let out = ukan(&["train", "--config", &path, "--out", dir.path().join("run").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("learning_rate"), "{stderr}");
    assert!(!dir.path().join("run").exists(), "nothing written before validation");

    let path = write_config(dir.path(), "bad2.conf", "task = moons\nwidths = 2,4,3\n");
    let out = ukan(&["train", "--config", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`widths`"));
}

#[test]
fn zero_epochs_writes_initial_checkpoint_and_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_MOONS.replace("epochs = 30", "epochs = 0");
    let path = write_config(dir.path(), "zero.conf", &body);
    let run = dir.path().join("run");
    let out = ukan(&["train", "--config", &path, "--out", run.to_str().unwrap(), "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(run.join(METRICS_FILE)).unwrap();
    assert_eq!(csv, format!("{METRICS_HEADER}\n"));

    let ckpt = Checkpoint::load(&run.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ckpt.epoch, 0);
    assert_eq!(ckpt.config.seed, 9);
    let fresh = build_model(&ckpt.config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let restored = ckpt.restore_model().unwrap();
    assert_eq!(fresh.parameters(), restored.parameters());

    let mut entries: Vec<_> = std::fs::read_dir(&run).unwrap().map(|e| e.unwrap().file_name()).collect();
    entries.sort();
    assert_eq!(entries, [CHECKPOINT_FILE, METRICS_FILE]);
}

#[test]
fn same_seed_gives_identical_metric_columns_and_eval_matches_last_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "moons.conf", SMALL_MOONS);
    let mut logs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = ukan(&["train", "--config", &path, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        logs.push(std::fs::read_to_string(out_dir.join(METRICS_FILE)).unwrap());
    }
    let (a, b) = (metric_columns(&logs[0]), metric_columns(&logs[1]));
    assert_eq!(a.len(), 4, "header plus rows at epochs 10, 20, 30");
    assert_eq!(a, b);
    for line in logs[0].lines() {
        assert_eq!(line.split(',').count(), 6, "ragged row: {line}");
    }

    let ckpt = dir.path().join("a").join(CHECKPOINT_FILE);
    let out = ukan(&["eval", "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let row = String::from_utf8(out.stdout).unwrap();
    assert_eq!(row.trim(), a.last().unwrap());
}

#[test]
fn corrupted_checkpoint_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "moons.conf", SMALL_MOONS);
    let run = dir.path().join("run");
    assert!(ukan(&["train", "--config", &path, "--out", run.to_str().unwrap()]).status.success());
    let good = std::fs::read(run.join(CHECKPOINT_FILE)).unwrap();

    // The first parameter tensor's leading dimension, located by re-encoding.
    let ckpt = Checkpoint::from_bytes(&good).unwrap();
    let name = &ckpt.parameters[0].0;
    let name_at = good.windows(name.len()).position(|w| w == name.as_bytes()).unwrap();
    let dim_at = name_at + name.len() + 8;

    let cases: Vec<(&str, Vec<u8>)> = vec![
        ("version", {
            let mut b = good.clone();
            b[8] = 99;
            b
        }),
        ("shape", {
            let mut b = good.clone();
            b[dim_at] += 1;
            b
        }),
        ("truncated", good[..good.len() - 3].to_vec()),
        ("magic", {
            let mut b = good.clone();
            b[0] = b'X';
            b
        }),
    ];
    for (what, bytes) in cases {
        let bad = dir.path().join(format!("{what}.bin"));
        std::fs::write(&bad, bytes).unwrap();
        let out = ukan(&["eval", "--checkpoint", bad.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(4), "{what}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn divergence_exits_3_and_keeps_last_good_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let body = "
task = regression1
model = mlp
widths = 2,8,1
optimizer = sgd
lr = 1e30
epochs = 50
eval_every = 1
n_train = 64
n_val = 16
";
    let path = write_config(dir.path(), "blowup.conf", body);
    let run = dir.path().join("run");
    let out = ukan(&["train", "--config", &path, "--out", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = Checkpoint::load(&run.join(CHECKPOINT_FILE)).unwrap();
    let model = ckpt.restore_model().unwrap();
    assert!(model.parameters().iter().all(|p| p.all_finite()));
    assert!(ckpt.epoch < 50);
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    for (model, extra) in [
        ("kan", "grid_min = -2\ngrid_max = 2\ngrid_size = 6\nbase_branch = true\n"),
        ("ukan", "delta_g = 0.3\nd_pe = 6\nd_femb = 3\nd_hidden = 12\n"),
        ("mlp", ""),
    ] {
        let cfg = RunConfig::parse(&format!("task = regression2\nmodel = {model}\nwidths = 2,4,3,1\n{extra}")).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = build_model(&cfg, &mut rng).unwrap();
        // Move away from the initial parameters with a few Adam steps.
        let mut adam = AdamState::new(&model.parameters());
        let x = Tensor::from_rows(&[[0.3, -0.7], [1.5, 0.25], [-4.0, 2.0]]).unwrap();
        for _ in 0..3 {
            let mut tape = Tape::new();
            model.watch(&mut tape);
            let y = model.forward(&mut tape, &x).unwrap();
            let sq = tape.square(&y).unwrap();
            let loss = tape.mean(&sq).unwrap();
            let grads = model.gradients(&tape.backward(&loss).unwrap()).unwrap();
            let refs: Vec<&Tensor> = grads.iter().collect();
            ukan_core::adam_step(&mut model.parameters_mut(), &refs, &mut adam, 0.01, &Default::default()).unwrap();
        }
        let before = model.predict(&x, 1).unwrap();

        let ckpt = Checkpoint::capture(&cfg, 3, &rng, &model, &OptimizerState::Adam(adam.clone()));
        let bytes = ckpt.to_bytes();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(loaded, ckpt);
        assert_eq!(loaded.to_bytes(), bytes);
        assert_eq!(loaded.optimizer, OptimizerState::Adam(adam));
        assert_eq!(loaded.rng.restore(), rng);

        let after = loaded.restore_model().unwrap().predict(&x, 1).unwrap();
        let bits = |t: &Tensor| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&before), bits(&after));
    }
}

#[test]
fn bench_prints_full_csv() {
    let out = ukan(&[
        "bench", "--orders", "1,3", "--grids", "4,8", "--batch", "64", "--reps", "5", "--d-in", "4", "--d-out", "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], ukan_bench::CSV_HEADER);
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert!(lines.iter().all(|l| l.split(',').count() == 10));

    let out = ukan(&["bench", "--reps", "2"]);
    assert_eq!(out.status.code(), Some(2));
}
