use std::path::Path;
use std::process::{Command, Output};

fn vtg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtg")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let o = vtg(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn report(dir: &Path, cmd: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{cmd}.json"))).unwrap()).unwrap()
}

fn csv_lines(dir: &Path, cmd: &str) -> Vec<String> {
    std::fs::read_to_string(dir.join(format!("{cmd}.csv"))).unwrap().lines().map(String::from).collect()
}

#[test]
fn audit_covers_all_trees() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["--command", "audit", "--out", out]);
    let r = report(dir.path(), "audit");
    assert_eq!(r["results"]["trees"], 3240);
    assert_eq!(r["results"]["violations"], 0);
    assert_eq!(csv_lines(dir.path(), "audit").len(), 6);
}

#[test]
fn payoff_has_one_row_per_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["--command", "payoff", "--out", out]);
    let lines = csv_lines(dir.path(), "payoff");
    assert_eq!(lines[0], "w_1,w_2,w_3,cost_1,cost_2,cost_3,collective,gini");
    assert_eq!(lines.len(), 9);
    assert!(lines[1].starts_with("0,0,0,"));
    assert!(lines[8].starts_with("0.51,0.51,0.51,"));
    let r = report(dir.path(), "payoff");
    assert_eq!(r["config"]["experiment"]["values"], serde_json::json!([0.0, 0.51]));
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn config_file_selects_scenario_and_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "preset = \"grid\"\n\n[scenario]\nconfigs_sample = 50\n\n[experiment]\ncommand = \"enumerate\"\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "4"]);
    assert_eq!(csv_lines(&out, "enumerate").len(), 51);
    let r = report(&out, "enumerate");
    assert_eq!(r["results"]["ordered_ids"], 258_048);
    assert_eq!(r["config"]["scenario"]["sample_seed"], 4);
}

#[test]
fn csv_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |jobs: &str| {
        let out = dir.path().join(jobs);
        let cfg = dir.path().join("grid.toml");
        std::fs::write(&cfg, "preset = \"grid\"\n[experiment]\nvalues = [0.0, 0.5]\n").unwrap();
        ok(&[
            "--config",
            cfg.to_str().unwrap(),
            "--command",
            "payoff",
            "--configs-sample",
            "150",
            "--seed",
            "9",
            "--jobs",
            jobs,
            "--out",
            out.to_str().unwrap(),
        ]);
        std::fs::read(out.join("payoff.csv")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn montecarlo_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        ok(&["--command", "montecarlo", "--seed", seed, "--out", out.to_str().unwrap()]);
        std::fs::read(out.join("montecarlo.csv")).unwrap()
    };
    let a = run("11", "a");
    assert_eq!(a, run("11", "b"));
    assert_ne!(a, run("12", "c"));
}

#[test]
fn sweep_with_zero_priority_has_no_starvation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["--command", "starvation", "--grid-step", "0.5", "--out", out]);
    let lines = csv_lines(dir.path(), "starvation");
    assert_eq!(lines[0], "w1,w2,w3,starvation");
    assert_eq!(lines.len(), 28);
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        // all-zero priorities normalize to uniform and behave like equal priorities
        if v[..3].contains(&0.0) && v[..3] != [0.0; 3] {
            assert_eq!(v[3], 0.0, "{l}");
        }
    }
}

#[test]
fn remaining_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for cmd in ["tree", "nontermination", "entropy", "equilibrium"] {
        ok(&["--command", cmd, "--grid-step", "1", "--out", out]);
    }
    ok(&["--command", "centralized", "--tie-break", "highest", "--out", out]);
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, "[experiment]\nbudget = 30\n").unwrap();
    for cmd in ["optimize", "summary"] {
        ok(&["--config", cfg.to_str().unwrap(), "--command", cmd, "--configs-sample", "60", "--out", out]);
    }
    assert_eq!(csv_lines(dir.path(), "summary").len(), 4);
    assert_eq!(report(dir.path(), "centralized")["config"]["scenario"]["protocol"]["tie_break"], "highest_id");
    assert_eq!(csv_lines(dir.path(), "equilibrium").len(), 3);
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(vtg(&["--command", "montecarlo", "--out", out]).status.code(), Some(2));
    assert_eq!(vtg(&["--out", out]).status.code(), Some(2));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[scenario.fuel]\nrho = \"fast\"\n").unwrap();
    let o = vtg(&["--config", cfg.to_str().unwrap(), "--command", "payoff", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scenario.fuel.rho"));

    std::fs::write(&cfg, "[scenario.fuel]\ntank = -1.0\n").unwrap();
    assert_eq!(vtg(&["--config", cfg.to_str().unwrap(), "--command", "payoff", "--out", out]).status.code(), Some(2));

    // output path occupied by a file
    let file = dir.path().join("taken");
    std::fs::write(&file, "").unwrap();
    let o = vtg(&["--command", "audit", "--out", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}
