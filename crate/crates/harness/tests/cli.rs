use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chefs-sim")).args(args).output().unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("tournament.toml");
    let seats: String = (0..4).map(|i| format!("[[seats]]\nid = \"r{i}\"\nkind = \"random\"\n")).collect();
    std::fs::write(&path, format!("n_games = 2\nseed = 1\n{seats}")).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn tournament_then_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("run");
    let run = sim(&["tournament", "--config", &config, "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.lines().filter(|l| l.starts_with('r')).count() == 4, "{stdout}");
    assert!(out.join("games.jsonl").exists());

    let metrics = dir.path().join("metrics");
    let m = sim(&["metrics", "--run", out.to_str().unwrap(), "--out", metrics.to_str().unwrap()]);
    assert!(m.status.success(), "{}", String::from_utf8_lossy(&m.stderr));
    let perf = std::fs::read_to_string(metrics.join("performance.csv")).unwrap();
    assert_eq!(perf.lines().count(), 5);
}

#[test]
fn bad_input_exits_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = sim(&["tournament", "--config", missing.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("chefs-sim:"));

    let three = dir.path().join("three.toml");
    let seats: String = (0..3).map(|i| format!("[[seats]]\nid = \"r{i}\"\nkind = \"random\"\n")).collect();
    std::fs::write(&three, format!("n_games = 1\n{seats}")).unwrap();
    let out = sim(&["selfplay", "--config", three.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seats"));

    let out = sim(&["metrics", "--run", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
}
