use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn diffuse(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffuse"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DIFFUSE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\n{}", out.status, String::from_utf8_lossy(&out.stderr));
}

fn rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(str::to_owned)).collect())
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key} = {:?}", row[key]))
}

// 50 tasks need 10 queued before anything is allocated; a single task never gets there
const STALLING: &str = r#"schema_version = 1
name = "stall"
seed = 3

[workload]
objects = 50
locality = 1.0
size = "custom"
transfer_mb = 1.0
working_mb = 1.0
compute_time = 0.1

[pool.provisioner]
min_executors = 0
max_executors = 4
trigger_queue_length = 10
allocation_mode = "all-at-once"

[dispatch]
policy = "max-compute-util"
"#;

#[test]
fn run_preset_writes_reproducible_csv() {
    let dir = TempDir::new().unwrap();
    ok(&diffuse(&["run", "locality30_gz_128cpu", "--out", "a.csv"], dir.path()));
    ok(&diffuse(&["run", "presets/locality30_gz_128cpu.toml", "--out", "b.csv"], dir.path()));
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());

    let r = &rows(&dir.path().join("a.csv"))[0];
    assert_eq!(r["tasks_completed"], r["tasks_total"]);
    let persistent = num(r, "persistent_mb_per_task");
    assert!((persistent - 2.0 / 30.0).abs() / (2.0 / 30.0) < 0.05, "{persistent}");
}

#[test]
fn default_output_lands_in_out_dir() {
    let dir = TempDir::new().unwrap();
    // missing directories are created
    let out = Command::new(env!("CARGO_BIN_EXE_diffuse"))
        .args(["run", "mcu-locality0", "--format", "json"])
        .current_dir(dir.path())
        .env("DIFFUSE_OUT_DIR", dir.path().join("reports/nested"))
        .output()
        .unwrap();
    ok(&out);
    let text = fs::read_to_string(dir.path().join("reports/nested/mcu-locality0.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["scenario"], "mcu-locality0");
    assert!(out.stdout.is_empty());
}

#[test]
fn seed_does_not_change_warm_full_locality_aggregates() {
    let dir = TempDir::new().unwrap();
    ok(&diffuse(&["run", "model-local-disk", "--seed", "1", "--out", "a.csv"], dir.path()));
    ok(&diffuse(&["run", "model-local-disk", "--seed", "99", "--out", "b.csv"], dir.path()));
    let a = &rows(&dir.path().join("a.csv"))[0];
    let b = &rows(&dir.path().join("b.csv"))[0];
    for key in [
        "tasks_completed",
        "makespan",
        "accesses",
        "cache_hits_local",
        "cache_hits_peer",
        "cache_misses",
        "hit_ratio",
        "bytes_local",
        "bytes_peer",
        "bytes_persistent",
        "local_gbps",
        "executor_seconds",
    ] {
        assert_eq!(a[key], b[key], "{key}");
    }
    assert_ne!(a["seed"], b["seed"]);
}

#[test]
fn set_overrides_a_parameter() {
    let dir = TempDir::new().unwrap();
    ok(&diffuse(&["run", "mcu-locality0", "--set", "executors=8", "--out", "r.csv"], dir.path()));
    assert_eq!(rows(&dir.path().join("r.csv"))[0]["executors_peak"], "8");
    let bad = diffuse(&["run", "mcu-locality0", "--set", "nonsense=1", "--out", "x.csv"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn event_log_and_decision_trace() {
    let dir = TempDir::new().unwrap();
    ok(&diffuse(
        &["run", "fca-locality0", "--set", "objects=32", "--out", "r.csv", "--events", "ev.jsonl", "--decisions", "d.csv"],
        dir.path(),
    ));
    let tasks = num(&rows(&dir.path().join("r.csv"))[0], "tasks_completed") as usize;
    let events = fs::read_to_string(dir.path().join("ev.jsonl")).unwrap();
    let mut completed = 0;
    for line in events.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        if v["event"] == "task_complete" {
            completed += 1;
        }
    }
    assert_eq!(completed, tasks);
    let decisions = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(decisions.lines().count(), tasks + 1);
}

#[test]
fn validate_reports_line_numbers_and_exit_codes() {
    let dir = TempDir::new().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, STALLING).unwrap();
    ok(&diffuse(&["validate", "good.toml", "mcu-locality100"], dir.path()));

    fs::write(dir.path().join("bad.toml"), STALLING.replace("objects = 50", "objects = 0")).unwrap();
    let out = diffuse(&["validate", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 6"), "{err}");

    fs::write(dir.path().join("typo.toml"), STALLING.replace("locality = 1.0", "localty = 1.0")).unwrap();
    let out = diffuse(&["validate", "typo.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn invalid_run_leaves_no_report() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.toml"), STALLING.replace("min_executors = 0", "min_executors = 9")).unwrap();
    let out = diffuse(&["run", "bad.toml", "--out", "r.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("r.csv").exists());
    assert!(!dir.path().join("r.csv.tmp").exists());
}

#[test]
fn runtime_failure_exits_two_without_report() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("s.toml"), STALLING.replace("objects = 50", "objects = 1")).unwrap();
    let out = diffuse(&["run", "s.toml", "--out", "r.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stalled"));
    assert!(!dir.path().join("r.csv").exists());
}

#[test]
fn failed_sweep_keeps_completed_rows_as_partial() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("s.toml"), STALLING).unwrap();
    let out = diffuse(&["sweep", "s.toml", "--axis", "objects", "--values", "50,1", "--out", "sw.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("sw.csv").exists());
    let partial = rows(&dir.path().join("sw.csv.partial"));
    assert_eq!(partial.len(), 1);
    assert_eq!(partial[0]["scenario"], "stall[objects=50]");
}

#[test]
fn sweep_rows_are_ordered_and_match_single_runs() {
    let dir = TempDir::new().unwrap();
    ok(&diffuse(
        &["sweep", "mcu-locality100", "--axis", "executors", "--values", "16,4,8,4", "--out", "sw.csv", "--jobs", "2"],
        dir.path(),
    ));
    let sweep = rows(&dir.path().join("sw.csv"));
    let peaks: Vec<&str> = sweep.iter().map(|r| r["executors_peak"].as_str()).collect();
    assert_eq!(peaks, ["4", "8", "16"]);

    ok(&diffuse(&["run", "mcu-locality100", "--set", "executors=8", "--out", "one.csv"], dir.path()));
    let single = &rows(&dir.path().join("one.csv"))[0];
    for (key, value) in single {
        if key != "scenario" {
            assert_eq!(&sweep[1][key], value, "{key}");
        }
    }
}

#[test]
fn unknown_sweep_axis_is_rejected() {
    let dir = TempDir::new().unwrap();
    let out = diffuse(&["sweep", "mcu-locality0", "--axis", "colour", "--values", "1", "--out", "x.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn presets_list_and_dump_round_trip() {
    let dir = TempDir::new().unwrap();
    let out = diffuse(&["presets"], dir.path());
    ok(&out);
    let names: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(|l| l.split_whitespace().next().unwrap().to_owned()).collect();
    assert!(names.len() >= 28);
    assert!(names.iter().any(|n| n == "gpfs_gz_128cpu"));

    let dump = diffuse(&["presets", "fca-locality100"], dir.path());
    ok(&dump);
    fs::write(dir.path().join("copy.toml"), &dump.stdout).unwrap();
    ok(&diffuse(&["run", "copy.toml", "--out", "a.csv"], dir.path()));
    ok(&diffuse(&["run", "fca-locality100", "--out", "b.csv"], dir.path()));
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap());

    assert_eq!(diffuse(&["presets", "no-such-preset"], dir.path()).status.code(), Some(1));
}

#[test]
fn microbench_reports_crossover() {
    let dir = TempDir::new().unwrap();
    let out = diffuse(&["microbench", "--entries", "1", "--lookups", "1000", "--inserts", "10", "--out", "-"], dir.path());
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let crossover = v["prls"]["crossover_nodes"].as_u64().unwrap();
    assert!(crossover > 32_768, "{crossover}");
    assert!(v["microbench"].is_object());
}
