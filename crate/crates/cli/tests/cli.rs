use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const FAST: &str = r#"
siamese_epochs = 1
siamese_pairs_per_epoch = 32
skipgram_epochs = 2
classifier_hidden = [16]
classifier_epochs = 5
ae_epochs = 1
rrt_min_examples = 4
"#;

fn hetddi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetddi"))
        .current_dir(dir)
        .args(args)
        .env_remove("HETDDI_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "stdout:\n{stdout}\nstderr:\n{}", String::from_utf8_lossy(&out.stderr));
    stdout
}

fn err(out: &Output) -> String {
    assert!(!out.status.success(), "expected failure, got:\n{}", String::from_utf8_lossy(&out.stdout));
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&hetddi(dir.path(), &["synth", "--output", "data", "--drugs", "30", "--pairs", "120", "--seed", "1"]));
    fs::write(dir.path().join("fast.toml"), FAST).unwrap();
    dir
}

#[test]
fn ingest_reports_counts_and_rejects_missing_images() {
    let ws = workspace();
    let out = ok(&hetddi(ws.path(), &["ingest", "--data-dir", "data", "--write", "clean"]));
    assert!(out.contains("drugs: 30 images, 30 SMILES"), "{out}");
    assert!(ws.path().join("clean/pairs.csv").exists());

    fs::remove_file(ws.path().join("data/images/D003.pgm")).unwrap();
    let msg = err(&hetddi(ws.path(), &["ingest", "--data-dir", "data"]));
    assert!(msg.contains("D003") && msg.contains("image"), "{msg}");
}

#[test]
fn split_needs_a_seed_and_is_deterministic() {
    let ws = workspace();
    let msg = err(&hetddi(ws.path(), &["split", "--data-dir", "data", "--ratio", "0.8"]));
    assert!(msg.contains("seed"), "{msg}");

    let run = |out: &str, seed: &str| {
        ok(&hetddi(ws.path(), &["split", "--data-dir", "data", "--ratio", "0.8", "--seed", seed, "--out-dir", out]));
        fs::read_to_string(ws.path().join(out).join("split/test.csv")).unwrap()
    };
    assert_eq!(run("a", "3"), run("b", "3"));
    assert_ne!(run("a", "3"), run("c", "4"));
}

#[test]
fn environment_and_flags_layer_over_the_config_file() {
    let ws = workspace();
    fs::write(ws.path().join("seeded.toml"), "seed = 1\nsplit_ratio = 0.5\n").unwrap();
    let count = |out: &str| out.lines().find(|l| l.starts_with("test:")).unwrap().to_string();

    let file = ok(&hetddi(ws.path(), &["split", "--config", "seeded.toml", "--data-dir", "data", "--out-dir", "s1"]));
    let env = Command::new(env!("CARGO_BIN_EXE_hetddi"))
        .current_dir(ws.path())
        .args(["split", "--config", "seeded.toml", "--data-dir", "data", "--out-dir", "s2"])
        .env("HETDDI_SPLIT_RATIO", "0.75")
        .output()
        .unwrap();
    let env = ok(&env);
    let flag = Command::new(env!("CARGO_BIN_EXE_hetddi"))
        .current_dir(ws.path())
        .args(["split", "--config", "seeded.toml", "--data-dir", "data", "--out-dir", "s3", "--ratio", "0.5"])
        .env("HETDDI_SPLIT_RATIO", "0.75")
        .output()
        .unwrap();
    let flag = ok(&flag);
    assert_ne!(count(&file), count(&env));
    assert_eq!(count(&file), count(&flag));

    let msg = err(&hetddi(ws.path(), &["split", "--data-dir", "data", "--seed", "1", "--set", "no_such_key=1"]));
    assert!(msg.contains("no_such_key"), "{msg}");
}

#[test]
fn train_evaluate_and_report_round_trip() {
    let ws = workspace();
    let train = ok(&hetddi(
        ws.path(),
        &["train", "--config", "fast.toml", "--data-dir", "data", "--seed", "2", "--modalities", "img,smiles,rel", "--agg", "sub", "--out-dir", "run"],
    ));
    assert!(train.contains("Our Method (agg=sub)"), "{train}");
    for f in ["config.toml", "report.txt", "report.kv", "split/train.csv", "split/test.csv", "model/classifier.ckpt", "model/siamese.ckpt"] {
        assert!(ws.path().join("run").join(f).exists(), "{f}");
    }

    ok(&hetddi(ws.path(), &["evaluate", "--run", "run"]));
    let kv = |p: &str| fs::read_to_string(ws.path().join(p)).unwrap();
    let f1 = |text: String| text.lines().find(|l| l.starts_with("f1=")).unwrap().to_string();
    assert_eq!(f1(kv("run/report.kv")), f1(kv("run/evaluate/report.kv")));

    ok(&hetddi(ws.path(), &["baseline", "--config", "fast.toml", "--data-dir", "data", "--seed", "2", "--method", "ssim", "--out-dir", "ssim"]));
    let table = ok(&hetddi(ws.path(), &["report", "run", "ssim", "--output", "table.txt"]));
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("Our Method (agg=sub)") && rows[1].starts_with("SSIM"), "{table}");
    assert_eq!(kv("table.txt"), table);
}

#[test]
fn baselines_reject_unknown_methods_and_missing_models() {
    let ws = workspace();
    let msg = err(&hetddi(ws.path(), &["baseline", "--data-dir", "data", "--seed", "1", "--method", "knn"]));
    assert!(msg.contains("knn"), "{msg}");
    ok(&hetddi(ws.path(), &["baseline", "--config", "fast.toml", "--data-dir", "data", "--seed", "1", "--method", "ssim", "--out-dir", "b"]));
    let msg = err(&hetddi(ws.path(), &["evaluate", "--run", "b"]));
    assert!(msg.contains("no trained model"), "{msg}");
}

#[test]
fn fetch_guards_do_not_touch_the_network() {
    let ws = tempfile::tempdir().unwrap();
    let msg = err(&hetddi(ws.path(), &["fetch", "--cid", "2244", "--offline", "--data-dir", "d"]));
    assert!(msg.contains("offline"), "{msg}");
    let msg = err(&hetddi(ws.path(), &["fetch", "--cid", "0", "--base-url", "http://127.0.0.1:9", "--data-dir", "d"]));
    assert!(msg.contains("CID 0"), "{msg}");
    assert!(!ws.path().join("d").exists());
}

#[test]
fn usage_errors_exit_with_status_two() {
    let ws = tempfile::tempdir().unwrap();
    let out = hetddi(ws.path(), &["train", "--agg"]);
    assert_eq!(out.status.code(), Some(2));
    let out = hetddi(ws.path(), &["report"]);
    assert_eq!(out.status.code(), Some(2));
}
