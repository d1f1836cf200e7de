use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn hitl(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hitl"));
    cmd.args(args).env_remove("HITL_WORKERS");
    if let Some(w) = workers {
        cmd.env("HITL_WORKERS", w);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_grid() -> Value {
    json!({"gamma_e": {"min": 0.2, "max": 2.0, "n": 5}, "gamma_i": {"min": 0.0, "max": 1.0, "n": 5}})
}

#[test]
fn simulate_writes_stamped_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ddm.json", &json!({"mode": "ddm"}));
    let out = dir.path().join("out");
    let o = hitl(
        &[
            "simulate",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--trials",
            "500",
            "--seed",
            "9",
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["seed"], 9);
    assert_eq!(summary["config_digest"].as_str().unwrap().len(), 16);
    assert_eq!(summary["performance"]["n_trials"], 500);
    let csv = fs::read_to_string(out.join("trials.csv")).unwrap();
    assert_eq!(csv.lines().count(), 501);
    assert!(csv.starts_with("trial,choice,decision_time,termination\n"));
}

#[test]
fn ddm_accuracy_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ddm.json", &json!({"mode": "ddm", "trials": 100000}));
    let out = dir.path().join("out");
    let o = hitl(
        &["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let perf = &read_json(&out.join("summary.json"))["performance"];
    let (acc, se) = (
        perf["accuracy"].as_f64().unwrap(),
        perf["accuracy_se"].as_f64().unwrap(),
    );
    let exact = 1.0 / (1.0 + (-2.0f64).exp());
    assert!((acc - exact).abs() <= 2.0 * se, "{acc} vs {exact} (se {se})");
}

#[test]
fn digest_ignores_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lip.json", &json!({"mode": "lip", "trials": 200}));
    let mut digests = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = hitl(
            &["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
            None,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        digests.push(read_json(&out.join("summary.json"))["config_digest"].clone());
    }
    assert_eq!(digests[0], digests[1]);
    assert_eq!(
        fs::read(dir.path().join("a/trials.csv")).unwrap(),
        fs::read(dir.path().join("b/trials.csv")).unwrap()
    );
}

#[test]
fn reward_map_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "map.json",
        &json!({"mode": "reward-map", "trials": 200, "seed": 3, "grid": small_grid()}),
    );
    let mut runs = Vec::new();
    for (name, workers) in [("w1", "1"), ("w4", "4"), ("again", "1")] {
        let out = dir.path().join(name);
        let o = hitl(
            &["reward-map", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
            Some(workers),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        runs.push((
            fs::read(out.join("surface.csv")).unwrap(),
            fs::read(out.join("cells.csv")).unwrap(),
        ));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    let csv = String::from_utf8(runs[0].0.clone()).unwrap();
    assert!(csv.starts_with("gamma_E,gamma_I,reward_rate\n"));
    assert_eq!(csv.lines().count(), 26);
    let meta = read_json(&dir.path().join("w1/surface.json"));
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["trials_per_cell"], 200);
}

#[test]
fn supervise_reuses_stored_surface() {
    let dir = tempfile::tempdir().unwrap();
    let direct_cfg = write_config(
        dir.path(),
        "sup.json",
        &json!({"mode": "supervise", "trials": 200, "grid": small_grid()}),
    );
    let direct = dir.path().join("direct");
    let o = hitl(
        &[
            "supervise",
            direct_cfg.to_str().unwrap(),
            "--out",
            direct.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for name in [
        "run.csv",
        "summary.json",
        "gain_trajectory.svg",
        "p0_series.svg",
        "p_bar_series.svg",
        "surface.csv",
    ] {
        assert!(direct.join(name).exists(), "{name}");
    }
    let reuse_cfg = write_config(
        dir.path(),
        "reuse.json",
        &json!({"mode": "supervise", "surface": {
            "csv": direct.join("surface.csv"), "meta": direct.join("surface.json")}}),
    );
    let reused = dir.path().join("reused");
    let o = hitl(
        &[
            "supervise",
            reuse_cfg.to_str().unwrap(),
            "--out",
            reused.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(direct.join("run.csv")).unwrap(),
        fs::read(reused.join("run.csv")).unwrap()
    );
    assert!(!reused.join("surface.csv").exists());

    let run = fs::read_to_string(direct.join("run.csv")).unwrap();
    assert!(run.starts_with("task,m,gamma_E,gamma_I,p0,p1,p,assignment,outcome,p_bar\n"));
    assert_eq!(run.lines().count(), 201);
    let svg = fs::read_to_string(direct.join("p_bar_series.svg")).unwrap();
    assert!(svg.contains("</svg>") && svg.contains("seed 42"));
}

#[test]
fn validation_failure_exits_2_naming_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &json!({"mode": "ddm", "ddm": {"sigma": 0}}));
    let o = hitl(
        &[
            "simulate",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigma > 0"), "{}", stderr(&o));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn threshold_conflict_reports_both_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        &json!({"mode": "supervise", "supervisor": {"engagement": {"theta_on": 0.2, "theta_off": 0.3}}}),
    );
    let o = hitl(&["supervise", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("engagement.theta_on") && err.contains("engagement.theta_off"),
        "{err}"
    );
}

#[test]
fn parse_error_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{\n  \"mode\": \"ddm\",\n  \"seed\": ,\n}").unwrap();
    let o = hitl(&["simulate", path.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn command_must_match_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "map.json", &json!({"mode": "reward-map"}));
    let o = hitl(&["simulate", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("reward-map"));
}

#[test]
fn degenerate_surface_exits_3_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "flat.json",
        &json!({"mode": "reward-map", "trials": 100, "grid": small_grid(),
                "time": {"dt": 0.001, "horizon": 0.002}}),
    );
    let o = hitl(
        &[
            "reward-map",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("hint:"), "{}", stderr(&o));
}

#[test]
fn bad_worker_count_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ddm.json", &json!({"mode": "ddm", "trials": 10}));
    let o = hitl(
        &[
            "simulate",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ],
        Some("0"),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("HITL_WORKERS"));
}
