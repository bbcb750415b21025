use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn cpere(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cpere"));
    c.args(args).env_remove("CPERE_OUT_DIR");
    if let Some(d) = env_out {
        c.env("CPERE_OUT_DIR", d);
    }
    c.output().unwrap()
}

fn run_cfg(cfg: &Value, out: &Path) -> Output {
    cpere(
        &["--config", &cfg.to_string(), "--out", out.to_str().unwrap()],
        None,
    )
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(
        r.records()
            .map(|x| x.unwrap().iter().map(String::from).collect()),
    );
    rows
}

fn col(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let i = rows[0]
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[i].clone()).collect()
}

fn dp() -> Value {
    json!({"kind": "dynamical-percolation", "alpha": 1.0, "beta": 1.0})
}

#[test]
fn c1_single_row_matches_bisection() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_cfg(
        &json!({"command": "c1", "lambda": 1.0, "degree": 2, "rho": 0.0}),
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let rows = csv_rows(&dir.path().join("c1.csv"));
    assert_eq!(rows.len(), 2);
    let c1: f64 = col(&rows, "c1")[0].parse().unwrap();
    // Plain bisection on c - 1 - ln(2c) over (0, 1).
    let f = |c: f64| c - 1.0 - (2.0 * c).ln();
    let (mut lo, mut hi) = (1e-12, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((c1 - lo).abs() < 1e-10, "{c1} vs {lo}");
    assert!((c1 - 0.2316).abs() < 1e-3);
    let m: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("c1.manifest.json")).unwrap())
            .unwrap();
    assert!(m["seed"].is_null());
    assert_eq!(m["rows"], json!([]));
}

#[test]
fn identical_runs_give_identical_csv() {
    let cfg = json!({
        "command": "survival", "seed": 5, "dim": 1, "half_width": 15, "lambda": 2.5, "r": 1.0,
        "horizon": 4.0, "reps": 200, "start": "stationary", "background": dp()
    });
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run_cfg(&cfg, a.path()).status.code(), Some(0));
    assert_eq!(run_cfg(&cfg, b.path()).status.code(), Some(0));
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(
        read(a.path(), "survival.csv"),
        read(b.path(), "survival.csv")
    );
    let strip = |d: &Path| {
        let mut m: Value = serde_json::from_slice(&read(d, "survival.manifest.json")).unwrap();
        let o = m.as_object_mut().unwrap();
        o.remove("started_unix_ms");
        o.remove("finished_unix_ms");
        m
    };
    let ma = strip(a.path());
    assert_eq!(ma, strip(b.path()));
    assert_eq!(ma["rows"], json!([{"row": 0, "seed": 5, "replicas": 200}]));
    assert_eq!(ma["config"], cfg);
    let digest = ma["outputs"][0]["sha256"].as_str().unwrap();
    let v = cpere(
        &[
            "--verify",
            a.path().join("survival.manifest.json").to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).contains(digest));
}

#[test]
fn threads_do_not_change_output() {
    let cfg = json!({
        "command": "percolation", "seed": 3, "q": [0.5, 0.7], "k_max": 30, "reps": 300
    });
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let s = cfg.to_string();
    cpere(
        &[
            "--config",
            &s,
            "--out",
            a.path().to_str().unwrap(),
            "--threads",
            "1",
        ],
        None,
    );
    cpere(
        &[
            "--config",
            &s,
            "--out",
            b.path().to_str().unwrap(),
            "--threads",
            "3",
        ],
        None,
    );
    assert_eq!(
        fs::read(a.path().join("percolation.csv")).unwrap(),
        fs::read(b.path().join("percolation.csv")).unwrap()
    );
}

#[test]
fn phase_scan_budget_gives_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "command": "phase-scan", "seed": 2, "dim": 1, "half_width": 10,
        "base": {"lambda": 1.0, "r": 1.0, "alpha": 1.0, "beta": 1.0},
        "axis1": "lambda", "values1": [0.5, 1.5, 3.0], "axis2": "beta", "values2": [0.5, 2.0],
        "horizon": 3.0, "reps": 50, "budget": {"max_replicas": 220}
    });
    let o = run_cfg(&cfg, dir.path());
    assert_eq!(o.status.code(), Some(3));
    let rows = csv_rows(&dir.path().join("phase-scan.csv"));
    assert_eq!(rows.len(), 1 + 4);
    assert_eq!(
        &rows[0][..6],
        ["lambda", "beta", "r", "alpha", "horizon", "p_hat"]
    );
    let m: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("phase-scan.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["partial"], true);
    assert!(m["flags"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f.as_str().unwrap().starts_with("partial")));
}

#[test]
fn config_errors_exit_2_with_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "command": "survival", "seed": 1, "dim": 1, "half_width": 10, "lambda": -1, "lamda": 2,
        "r": 1.0, "horizon": 2.0, "reps": 10, "background": dp()
    });
    let o = run_cfg(&cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains(".lambda: must be finite and non-negative"),
        "{err}"
    );
    assert!(err.contains(".lamda: unknown key"), "{err}");
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    assert_eq!(
        cpere(&["--config", "{not json"], None).status.code(),
        Some(2)
    );
    assert_eq!(
        cpere(&["--config", "/nonexistent/cfg.json"], None)
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn event_budget_exit_3_and_dry_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = json!({
        "command": "survival", "seed": 1, "dim": 2, "half_width": 30, "lambda": 2, "r": 1.0,
        "horizon": 50.0, "reps": 10, "background": dp(), "budget": {"max_events": 1000}
    });
    let s = cfg.to_string();
    let dry = cpere(
        &[
            "--config",
            &s,
            "--dry-run",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(dry.status.code(), Some(3));
    assert_eq!(run_cfg(&cfg, dir.path()).status.code(), Some(3));
    cfg["budget"]["max_events"] = json!(1e9 as u64);
    let dry = cpere(
        &[
            "--config",
            &cfg.to_string(),
            "--dry-run",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(dry.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&dry.stdout).contains("configuration valid"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn env_sets_default_out_dir_and_seed_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"command": "percolation", "seed": 1, "q": [0.8], "k_max": 10, "reps": 50});
    let o = cpere(
        &["--config", &cfg.to_string(), "--seed", "77"],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(0));
    let m: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("percolation.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["seed"], 77);
    assert_eq!(m["config"]["seed"], 77);
    assert_eq!(
        col(&csv_rows(&dir.path().join("percolation.csv")), "seed"),
        ["77"]
    );
}

/// Each command on a small configuration: exit 0 and the expected shape.
#[test]
fn every_command_runs() {
    let cases: Vec<(Value, &str, usize)> = vec![
        (
            json!({"command": "critical", "seed": 1, "dim": 1, "half_width": 30, "r": 1.0, "horizon": 5.0,
                   "start": "full", "background": {"kind": "frozen"},
                   "search": {"lo": 0.0, "hi": 4.0, "tol": 1.0, "reps_per_probe": 100, "max_batches": 1}}),
            "critical",
            0,
        ),
        (
            json!({"command": "duality", "seed": 1, "dim": 1, "half_width": 10, "t_star": 3.0, "lambda": 2.0,
                   "r": 1.0, "alpha": 1.0, "beta": 1.0, "runs": 40}),
            "duality",
            1,
        ),
        (
            json!({"command": "duality", "mode": "distributional", "seed": 1, "dim": 1, "half_width": 15,
                   "lambda": 2.0, "r": 1.0, "background": dp(), "c": [[0]], "a": [[3]], "t": 2.0, "reps": 200}),
            "duality",
            2,
        ),
        (
            json!({"command": "bounds", "kind": "hitting", "seed": 1, "dim": 1, "lambda": 1.0, "c": 0.1,
                   "distances": [3, 6], "reps": 200}),
            "bounds",
            2,
        ),
        (
            json!({"command": "bounds", "kind": "coupling", "seed": 1, "dim": 1, "background": dp(),
                   "t_grid": [0.5, 1.0], "reps": 200}),
            "bounds",
            2,
        ),
        (
            json!({"command": "bounds", "kind": "containment", "seed": 1, "dim": 1, "half_width": 10,
                   "lambda": 1.0, "background": dp(), "horizon": 3.0, "s_grid": [0.0, 1.0, 2.0], "reps": 50}),
            "bounds",
            3,
        ),
        (
            json!({"command": "blocks", "seed": 1, "dim": 1, "lambda": 0.0, "r": 1.0, "background": dp(),
                   "events": ["A1", "A2"], "n": [1], "l": [2, 3], "t": [1.0], "reps": 100}),
            "blocks",
            4,
        ),
        (
            json!({"command": "blocks", "mode": "scale", "seed": 1, "dim": 1, "lambda": 4.0, "r": 1.0,
                   "background": json!({"kind": "dynamical-percolation", "alpha": 3.0, "beta": 1.0}),
                   "epsilon": 0.5, "limits": {"max_n": 2, "max_l": 4, "max_t": 2.0}, "reps": 50}),
            "blocks",
            1,
        ),
    ];
    for (cfg, name, nrows) in cases {
        let dir = tempfile::tempdir().unwrap();
        let o = run_cfg(&cfg, dir.path());
        assert_eq!(
            o.status.code(),
            Some(0),
            "{cfg}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let rows = csv_rows(&dir.path().join(format!("{name}.csv")));
        if nrows > 0 {
            assert_eq!(rows.len() - 1, nrows, "{cfg}");
        } else {
            assert!(rows.len() > 2, "{cfg}");
        }
        let m: Value = serde_json::from_str(
            &fs::read_to_string(dir.path().join(format!("{name}.manifest.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(m["rows"].as_array().unwrap().len(), rows.len() - 1, "{cfg}");
        assert_eq!(
            m["code_version"].as_str().unwrap(),
            concat!("cpere ", env!("CARGO_PKG_VERSION"))
        );
    }
}

#[test]
fn burn_in_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "command": "survival", "seed": 1, "dim": 1, "half_width": 10, "lambda": 2.0, "r": 1.0,
        "horizon": 2.0, "reps": 20, "start": "burn-in", "background": {"kind": "ising", "beta": 0.2}
    });
    assert_eq!(run_cfg(&cfg, dir.path()).status.code(), Some(0));
    let m: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("survival.manifest.json")).unwrap(),
    )
    .unwrap();
    assert!(m["flags"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f.as_str().unwrap().starts_with("burn-in")));
}
