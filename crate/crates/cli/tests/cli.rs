use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 5
[simstore]
"Number of customers" = 60
sim_duration = "5 days"
[train.bc]
max_epochs = 3
[train.dqn]
max_epochs = 3
[eval]
seeds = [1, 2]
"#;

fn simstore(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simstore"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn collect(dir: &Path, out: &str) -> PathBuf {
    ok(&simstore(dir, &["collect", "-c", "run.toml", "--level", "medium", "-o", out]));
    dir.join(out).join("medium.jsonl")
}

#[test]
fn fraud_all_reference_reports_zero() {
    let dir = setup(SMALL);
    let stdout = ok(&simstore(dir.path(), &["eval", "-c", "run.toml", "--policy", "fraud-all", "-o", "out"]));
    assert!(stdout.contains("0.00 ± 0.00"), "{stdout}");
    let report = std::fs::read_to_string(dir.path().join("out/fraud_all.report.jsonl")).unwrap();
    let row: serde_json::Value = serde_json::from_str(report.lines().next().unwrap()).unwrap();
    assert_eq!(row["policy"], "fraud_all");
    assert_eq!(row["normalized_mean"], 0.0);
    assert!(row["per_seed"].as_array().unwrap().iter().all(|s| s["normalized"] == 0.0));

    ok(&simstore(dir.path(), &["report", "out/fraud_all.report.jsonl", "-o", "out"]));
    let table = std::fs::read_to_string(dir.path().join("out/table.md")).unwrap();
    assert!(table.contains("fraud_all"), "{table}");
    assert!(table.contains("0.00 ± 0.00"), "{table}");
}

#[test]
fn foreign_hyperparameter_is_rejected() {
    let dir = setup("[train.dqn]\nbeta = 0.1\n");
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let data = {
        ok(&simstore(dir.path(), &["collect", "-c", "small.toml", "--level", "medium", "-o", "d"]));
        "d/medium.jsonl"
    };
    let out = simstore(dir.path(), &["train", "-c", "run.toml", "-a", "dqn", "-d", data, "-o", "out"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown hyperparameter"), "{err}");
    assert!(err.contains("beta"), "{err}");
    assert!(!dir.path().join("out/dqn.checkpoint.json").exists());
}

#[test]
fn collection_is_reproducible() {
    let dir = setup(SMALL);
    let a = collect(dir.path(), "a");
    let b = collect(dir.path(), "b");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let meta = |p: &Path| std::fs::read(p.with_extension("jsonl.meta.json")).unwrap();
    assert_eq!(meta(&a), meta(&b));
}

#[test]
fn manifest_records_config_and_outputs() {
    let dir = setup(SMALL);
    collect(dir.path(), "out");
    ok(&simstore(dir.path(), &["train", "-c", "run.toml", "-a", "bc", "-d", "out/medium.jsonl", "-o", "out"]));
    let text = std::fs::read_to_string(dir.path().join("out/train.manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&text).unwrap();
    use sha2::Digest;
    let want = hex::encode(sha2::Sha256::digest(SMALL.as_bytes()));
    assert_eq!(m["config_sha256"], want.as_str());
    assert_eq!(m["seed"], 5);
    assert_eq!(m["resolved"]["train"]["max_epochs"], 3);
    let outputs: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert!(outputs.iter().any(|p| p.ends_with("bc.checkpoint.json")), "{outputs:?}");
    assert_eq!(m["inputs"][0]["path"], "out/medium.jsonl");
}

#[test]
fn train_then_eval_checkpoint() {
    let dir = setup(SMALL);
    collect(dir.path(), "out");
    ok(&simstore(dir.path(), &["train", "-c", "run.toml", "-a", "dqn", "-d", "out/medium.jsonl", "-o", "out"]));
    let stdout = ok(&simstore(
        dir.path(),
        &["eval", "-c", "run.toml", "--checkpoint", "out/dqn.checkpoint.json", "-d", "out/medium.jsonl", "-o", "out"],
    ));
    assert!(stdout.contains("over 2 seeds"), "{stdout}");
    assert!(dir.path().join("out/dqn.medium.report.jsonl").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = setup(SMALL);
    assert_eq!(simstore(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        simstore(dir.path(), &["train", "-c", "run.toml", "-a", "sac", "-d", "x.jsonl"]).status.code(),
        Some(2)
    );
    std::fs::write(dir.path().join("bad.toml"), "[simulation]\nx = 1\n").unwrap();
    let out = simstore(dir.path(), &["eval", "-c", "bad.toml", "--policy", "fraud-all"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_datasets_exit_3() {
    let dir = setup(SMALL);
    std::fs::write(dir.path().join("junk.jsonl"), "{\"format\":\"x\"}\n").unwrap();
    let out = simstore(dir.path(), &["train", "-c", "run.toml", "-a", "bc", "-d", "junk.jsonl", "-o", "out"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let good = collect(dir.path(), "d");
    let text = std::fs::read_to_string(&good).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{\"not\": \"a record\"}";
    std::fs::write(dir.path().join("corrupt.jsonl"), lines.join("\n") + "\n").unwrap();
    let out = simstore(dir.path(), &["train", "-c", "run.toml", "-a", "bc", "-d", "corrupt.jsonl", "-o", "out"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let out = simstore(dir.path(), &["train", "-c", "run.toml", "-a", "bc", "-d", "missing.jsonl", "-o", "out"]);
    assert_eq!(out.status.code(), Some(3));
}
