use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smarton-sim"))
        .args(args)
        .env_remove("SMARTON_SIM_SEED")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SHORT: &str = "n_periods = 4\nstop = fixed\n[energy]\nentry_level = 3\n";

#[test]
fn simulate_prints_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.ini", SHORT);
    let out = dir.path().join("out");
    let o = sim(&[
        "simulate",
        "--config",
        &cfg,
        "--policy",
        "gt",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(
        text.lines().nth(1).unwrap().starts_with("gt\ttype1\t3\t9\t1\t4\t"),
        "{text}"
    );
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    for f in ["runs.csv", "convergence.csv", "timeline.csv"] {
        assert!(out.join(f).exists());
    }
}

#[test]
fn seed_flag_and_env_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.ini", &format!("seed = 3\n{SHORT}"));
    let seed_col = |o: &Output| {
        stdout(o)
            .lines()
            .nth(1)
            .unwrap()
            .split('\t')
            .nth(4)
            .unwrap()
            .to_string()
    };
    assert_eq!(seed_col(&sim(&["simulate", "--config", &cfg])), "3");
    assert_eq!(seed_col(&sim(&["simulate", "--config", &cfg, "--seed", "11"])), "11");
    let o = Command::new(env!("CARGO_BIN_EXE_smarton-sim"))
        .args(["simulate", "--config", &cfg])
        .env("SMARTON_SIM_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(seed_col(&o), "42");
}

#[test]
fn validation_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.ini", "[learner]\nalpha = 1.5\n");
    let o = sim(&["simulate", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));

    let unknown = write(dir.path(), "u.ini", "[energy]\nvoltage = 3\n");
    let o = sim(&["simulate", "--config", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let o = sim(&[
        "sweep",
        "--scenario",
        "no-such-preset",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fig-perf"));

    let o = sim(&["report", "--in", dir.path().to_str().unwrap(), "--plot", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("conv-vs-ratio"));
}

#[test]
fn runtime_errors_exit_one() {
    let o = sim(&["simulate", "--config", "/nonexistent/scenario.ini"]);
    assert_eq!(o.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["report", "--in", dir.path().to_str().unwrap(), "--plot", "adaptation"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.ini",
        "name = tiny\nn_periods = 400\nstop = phase1\n[sweep]\ncharging_ratio = 3, 6, 9, 12\nseed = 0..2\n",
    );
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = sim(&["sweep", "--scenario", &cfg, "--out", out_s, "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 8);

    let o = sim(&["report", "--in", out_s, "--plot", "conv-vs-ratio"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dat = std::fs::read_to_string(out.join("conv-vs-ratio.dat")).unwrap();
    let rows: Vec<&str> = dat.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4);
    assert!(out.join("conv-vs-ratio.svg").exists());
}

#[test]
fn sweep_seed_env_replaces_the_seed_axis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.ini",
        "n_periods = 2\nstop = fixed\n[sweep]\nseed = 0..5\n",
    );
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_smarton-sim"))
        .args(["sweep", "--scenario", &cfg, "--out", out.to_str().unwrap()])
        .env("SMARTON_SIM_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].split(',').nth(4), Some("9"));
}

#[test]
fn missing_arguments_are_usage_errors() {
    assert_eq!(sim(&["sweep", "--out", "x"]).status.code(), Some(2));
    assert_eq!(
        sim(&["simulate", "--config", "a", "--policy", "sometimes"])
            .status
            .code(),
        Some(2)
    );
}
