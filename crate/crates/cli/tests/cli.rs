use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ppac(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppac"))
        .args(args)
        .arg("--out-dir")
        .arg(out_dir)
        .output()
        .expect("binary runs")
}

const SMALL: &str = r#"
[graph]
nodes = 3
links = [[0, 1], [1, 2], [2, 0], [0, 2]]

[protocol]
x0 = [1.0, 2.0, 6.0]
k = 2
epsilon = 0.1
max_rounds = 80
seed = 9

[adversary]
members = [1]
target = 0
attack = "least-squares"
"#;

#[test]
fn simulate_is_byte_reproducible_and_hashes_its_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    fs::write(&config, SMALL).unwrap();
    let cfg = config.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(ppac(&["simulate", "--config", cfg], &a).status.success());
    assert!(ppac(&["simulate", "--config", cfg], &b).status.success());
    let csv_a = fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("metrics.csv")).unwrap());
    assert!(String::from_utf8(csv_a).unwrap().starts_with("round,e,pi_0"));

    use sha2::{Digest, Sha256};
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"], hex::encode(Sha256::digest(SMALL.as_bytes())));
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["mode"], "algorithm1");

    let c = dir.path().join("c");
    assert!(ppac(&["simulate", "--config", cfg, "--seed", "10"], &c).status.success());
    assert_ne!(fs::read(c.join("metrics.csv")).unwrap(), fs::read(a.join("metrics.csv")).unwrap());
}

#[test]
fn attack_writes_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    fs::write(&config, format!("{SMALL}\n[sweep]\ntrials = 4\ntrue_x0 = [3.0]\n")).unwrap();
    let out = ppac(&["attack", "--config", config.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = fs::read_to_string(dir.path().join("attack_trials.csv")).unwrap();
    let lines: Vec<&str> = rows.lines().collect();
    assert_eq!(lines[0], "trial,seed,true_x0,estimate");
    assert_eq!(lines.len(), 5);
}

#[test]
fn verify_passes_on_a_preset_and_bad_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = ppac(&["verify", "--preset", "k-sweep"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("verify.json").exists());

    let out = ppac(&["simulate", "--preset", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, SMALL.replace("epsilon = 0.1", "epsilon = 0.9")).unwrap();
    let out = ppac(&["simulate", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
