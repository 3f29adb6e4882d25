use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn decfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decfl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn ratings_file(dir: &Path) -> String {
    let mut text = String::new();
    for u in 0..60 {
        for k in 0..5 {
            let item = (u * 7 + k * 3) % 25;
            let rating = 1 + (u + k) % 5;
            text.push_str(&format!("{u}::{item}::{rating}::{}\n", 1000 + u * 10 + k));
        }
    }
    let path = dir.join("ratings.dat");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn column_sum(csv_path: &Path, column: &str) -> f64 {
    let mut r = csv::Reader::from_path(csv_path).unwrap();
    let idx = r
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == column)
        .unwrap();
    r.records()
        .map(|rec| rec.unwrap()[idx].parse::<f64>().unwrap())
        .sum()
}

#[test]
fn run_on_ratings_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = ratings_file(dir.path());
    let cfg = write_config(
        dir.path(),
        "run.json",
        json!({
            "dataset": { "format": "ratings", "path": data, "delimiter": "::", "threshold": 3.0 },
            "devices": 5, "m": 2, "rounds": 20, "seed": 3
        }),
    );
    let out = dir.path().join("out");
    let res = decfl(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    for f in [
        "rounds.csv",
        "selection.csv",
        "energy.csv",
        "convergence.csv",
        "summary.json",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let rounds = out.join("rounds.csv");
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(1.0);
    assert!(close(
        summary["total_time_ms"].as_f64().unwrap(),
        column_sum(&rounds, "time_ms")
    ));
    assert!(close(
        summary["total_energy"].as_f64().unwrap(),
        column_sum(&rounds, "energy")
    ));
    assert_eq!(
        summary["total_ops"].as_f64().unwrap(),
        column_sum(&rounds, "ops")
    );
    assert_eq!(
        summary["total_server_ops"].as_f64().unwrap(),
        column_sum(&rounds, "server_ops")
    );
    assert_eq!(summary["rounds"], 20);
}

#[test]
fn seeds_and_baseline_flags_take_effect() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["run", "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let res = decfl(&args);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
        out
    };
    let a = run("a", &["--seed", "9"]);
    let b = run("b", &["--seed", "9"]);
    let c = run("c", &["--seed", "10"]);
    let rounds = |p: &Path| std::fs::read(p.join("rounds.csv")).unwrap();
    assert_eq!(rounds(&a), rounds(&b));
    assert_ne!(rounds(&a), rounds(&c));
    let d = run("d", &["--baseline", "original"]);
    let summary = std::fs::read_to_string(d.join("summary.json")).unwrap();
    assert!(summary.contains("\"baseline\": \"original\""));
}

#[test]
fn labeled_regression_run_reports_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for i in 0..80 {
        let x1 = (i % 7) as f64 / 7.0;
        let x2 = (i % 5) as f64 / 5.0;
        text.push_str(&format!("{} 1:{x1} 2:{x2}\n", 2.0 * x1 - x2));
    }
    let data = dir.path().join("reg.txt");
    std::fs::write(&data, text).unwrap();
    let cfg = write_config(
        dir.path(),
        "reg.json",
        json!({
            "dataset": { "format": "labeled", "path": data },
            "model": { "kind": "ridge", "lambda": 0.1 },
            "devices": 4, "m": 2, "rounds": 10
        }),
    );
    let out = dir.path().join("out");
    let res = decfl(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let rmse = summary["accuracy"].as_f64().unwrap();
    assert!((0.0..1.0).contains(&rmse), "rmse {rmse}");
}

#[test]
fn invalid_field_exits_nonzero_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", json!({ "theta": 1.5 }));
    let res = decfl(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("theta"));
}

#[test]
fn attack_on_absent_user_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "atk.json", json!({ "attack_user": "nobody" }));
    let res = decfl(&[
        "attack",
        "--config",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("nobody"));
}

#[test]
fn attack_and_select_sim_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let atk = dir.path().join("atk");
    assert!(decfl(&["attack", "--out", atk.to_str().unwrap()])
        .status
        .success());
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(atk.join("attack.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["exact_match"], true);

    let sim = dir.path().join("sim");
    assert!(decfl(&["select-sim", "--out", sim.to_str().unwrap()])
        .status
        .success());
    let trace = std::fs::read_to_string(sim.join("selection.csv")).unwrap();
    assert!(trace.starts_with("k,available,selected,ucb_0,"));
}
