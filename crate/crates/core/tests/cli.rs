use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn greengrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greengrid"))
        .args(args)
        .env_remove(greengrid::cli::SEED_ENV)
        .output()
        .expect("spawn greengrid")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_bundled_scenarios() {
    for name in ["ieee37.scenario", "toy.scenario"] {
        let out = greengrid(&["validate", s(&data(name))]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = greengrid(&["validate", s(&data("ieee37.scenario"))]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("31 stations") && text.contains("5 green sites"), "{text}");
}

#[test]
fn missing_trace_exits_one_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("toy.scenario"))
        .unwrap()
        .replace("feeder = \"toy.feeder\"", &format!("feeder = {:?}", s(&data("toy.feeder"))))
        .replace("toy_green.csv", s(&data("toy_green.csv")))
        .replace("toy_users.csv", "no_such_users.csv");
    let scenario = dir.path().join("broken.scenario");
    std::fs::write(&scenario, text).unwrap();
    let out = greengrid(&["run", "--scenario", s(&scenario), "--out", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no_such_users.csv"), "{err}");
}

#[test]
fn invalid_arguments_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = greengrid(&[
        "run",
        "--scenario",
        s(&data("toy.scenario")),
        "--policy",
        "greedy",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("greedy"));
    assert_eq!(greengrid(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(greengrid(&["validate", "/nonexistent/x.scenario"]).status.code(), Some(1));
}

#[test]
fn run_writes_results_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = greengrid(&[
        "run",
        "--scenario",
        s(&data("toy.scenario")),
        "--policy",
        "online,brown-only",
        "--seed",
        "3",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = results.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("slot,policy,e0_kwh,p_loss_kw,capacity_bits_hz,f_bits_per_tonco2_hz,"));
    assert_eq!(lines.count(), 2 * 24);
    for file in ["summary.csv", "comparison.csv", "deltas.csv"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
}

#[test]
fn seed_env_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, seed: &str, env: Option<&str>| {
        let out_dir = dir.path().join(sub);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_greengrid"));
        cmd.args(["run", "--scenario", s(&data("toy.scenario")), "--policy", "online", "--seed", seed, "--out"])
            .arg(&out_dir)
            .env_remove(greengrid::cli::SEED_ENV);
        if let Some(v) = env {
            cmd.env(greengrid::cli::SEED_ENV, v);
        }
        assert!(cmd.status().unwrap().success());
        std::fs::read(out_dir.join("results.csv")).unwrap()
    };
    let by_flag = run("a", "11", None);
    let by_env = run("b", "99", Some("11"));
    let other = run("c", "12", None);
    assert_eq!(by_flag, by_env);
    assert_ne!(by_flag, other);
}

#[test]
fn pareto_on_single_station_toy() {
    let dir = tempfile::tempdir().unwrap();
    let out = greengrid(&[
        "pareto",
        "--scenario",
        s(&data("toy.scenario")),
        "--points",
        "5",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("frontier.csv")).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let cells: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
            (cells[0], cells[1])
        })
        .collect();
    assert_eq!(rows.len(), 5);
    for w in rows.windows(2) {
        assert!(w[1].0 > w[0].0);
        assert!(w[1].1 >= w[0].1 - 1e-9, "{rows:?}");
    }
}

#[test]
fn gridcheck_reports_invariants_and_oracle() {
    let out = greengrid(&["gridcheck", "--scenario", s(&data("toy.scenario"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("min eigenvalue") && text.contains("grid oracle"), "{text}");
}

#[test]
fn library_entry_point_matches_binary_codes() {
    assert_eq!(greengrid::cli::run(["greengrid", "validate", s(&data("toy.scenario"))]), 0);
    assert_eq!(greengrid::cli::run(["greengrid", "validate", "/nonexistent"]), 1);
}
