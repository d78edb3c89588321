//! Command-line error handling, exercised through the built binary.

use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"[corpus]
size = 8
min_len = 3
max_len = 6
train_fraction = 0.5

[backend]
embed_dim = 4
encoder_hidden = 6
decoder_hidden = 6
max_epochs = 2

[agent]
gru_hidden = 4
dense_hidden = 4
baseline_hidden = 4
total_episodes = 10
"#;

fn readspeak(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("run.toml");
    if !config.exists() {
        std::fs::write(&config, CONFIG).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_readspeak"))
        .arg("--config")
        .arg(&config)
        .arg("--out-dir")
        .arg(dir.join("out"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = readspeak(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str], needle: &str) {
    let out = readspeak(dir, args);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{args:?} should fail; stderr: {stderr}"
    );
    assert!(
        stderr.contains(needle),
        "{args:?}: expected {needle:?} in {stderr}"
    );
}

fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data"]);
    dir
}

#[test]
fn unknown_and_invalid_policies() {
    let dir = prepared();
    fails(
        dir.path(),
        &["eval", "--policy", "wue,bogus"],
        "unknown policy \"bogus\"",
    );
    fails(dir.path(), &["eval", "--policy", "w1s"], "k >= 2");
    fails(dir.path(), &["eval", "--policy", "agent"], "needs --agent");
}

#[test]
fn eval_writes_a_table_and_traces() {
    let dir = prepared();
    let stdout = ok(dir.path(), &["eval", "--policy", "WUE,w2s"]);
    assert!(stdout.contains("summary.csv"));
    let table = std::fs::read_to_string(dir.path().join("out/eval/summary.csv")).unwrap();
    let header = table.lines().next().unwrap();
    assert_eq!(
        header,
        "policy,seed,episodes,mean_d_T,median_d_T,mean_mse,mean_return"
    );
    assert_eq!(table.lines().count(), 3);
    assert!(dir.path().join("out/eval/wue").is_dir() && dir.path().join("out/eval/w2s").is_dir());
}

#[test]
fn agent_checkpoint_mismatches_are_reported() {
    let dir = prepared();
    ok(dir.path(), &["train-backend"]);
    let backend = dir.path().join("out/backend.json");
    let backend = backend.to_str().unwrap();
    let learned_agent = dir.path().join("out/learned_agent.json");
    let learned_agent = learned_agent.to_str().unwrap();
    ok(
        dir.path(),
        &["train-agent", "--backend", backend, "--out", learned_agent],
    );
    assert!(dir.path().join("out/learned_agent_curve.csv").exists());

    // trained against the learned backend, evaluated against the oracle
    fails(
        dir.path(),
        &["eval", "--policy", "agent", "--agent", learned_agent],
        "observations",
    );
    // a backend checkpoint where an agent is expected
    fails(
        dir.path(),
        &["eval", "--policy", "agent", "--agent", backend],
        "expected agent checkpoint, found backend",
    );

    let text = std::fs::read_to_string(learned_agent).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let tensors = value["tensors"].as_array_mut().unwrap();
    let dropped = tensors.remove(0)["name"].as_str().unwrap().to_string();
    let missing = dir.path().join("missing.json");
    std::fs::write(&missing, serde_json::to_string(&value).unwrap()).unwrap();
    let missing = missing.to_str().unwrap();
    fails(
        dir.path(),
        &[
            "eval",
            "--backend",
            backend,
            "--policy",
            "agent",
            "--agent",
            missing,
        ],
        &dropped,
    );

    let future = dir.path().join("future.json");
    std::fs::write(
        &future,
        text.replace("\"format_version\": 1", "\"format_version\": 9"),
    )
    .unwrap();
    fails(
        dir.path(),
        &[
            "eval",
            "--backend",
            backend,
            "--policy",
            "agent",
            "--agent",
            future.to_str().unwrap(),
        ],
        "format_version 9",
    );

    ok(
        dir.path(),
        &[
            "eval",
            "--backend",
            backend,
            "--policy",
            "agent",
            "--agent",
            learned_agent,
        ],
    );
}

#[test]
fn malformed_inputs() {
    let dir = prepared();
    ok(dir.path(), &["eval", "--policy", "wue"]);
    let real = std::fs::read_dir(dir.path().join("out/eval/wue"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let first = std::fs::read_to_string(real)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let trace = dir.path().join("bad.ndjson");
    std::fs::write(&trace, format!("{first}\n{{\"j\": oops}}\n")).unwrap();
    fails(
        dir.path(),
        &["plot", "--kind", "path", "--input", trace.to_str().unwrap()],
        "line 2",
    );

    std::fs::write(dir.path().join("run.toml"), "[env.reward]\nomgea = -1.0\n").unwrap();
    fails(dir.path(), &["gen-data"], "omgea");

    let missing = dir.path().join("nowhere");
    fails(
        dir.path(),
        &["eval", "--corpus", missing.to_str().unwrap()],
        "error:",
    );
}
