use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn scrubsel(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scrubsel"))
        .env_remove("RUST_LOG")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ingest(out: &Path) -> Output {
    let (smart, busy, cpu, actual) = (
        fixture("smart.csv"),
        fixture("disk_busy.csv"),
        fixture("cpu_busy.csv"),
        fixture("actual.csv"),
    );
    scrubsel(
        out,
        &[
            "ingest",
            "--dataset",
            smart.to_str().unwrap(),
            "--disk-busy",
            busy.to_str().unwrap(),
            "--cpu-busy",
            cpu.to_str().unwrap(),
            "--actual",
            actual.to_str().unwrap(),
        ],
    )
}

fn full_run(out: &Path, extra: &[&str]) {
    let o = ingest(out);
    assert!(o.status.success(), "{}", stderr(&o));
    for stage in [
        vec!["score"],
        vec!["forecast"],
        vec!["schedule"],
        vec!["report"],
    ] {
        let mut args = stage;
        args.extend_from_slice(extra);
        let o = scrubsel(out, &args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn artifacts(out: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn ingest_reports_disk_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = ingest(dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("disks=1200"));
    assert_eq!(manifest(dir.path())["disk_count"], 1200);
}

#[test]
fn bad_schema_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (smart, schema) = (fixture("smart.csv"), fixture("bad_schema.json"));
    let o = scrubsel(
        dir.path(),
        &[
            "ingest",
            "--dataset",
            smart.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("malformed row at line"), "{err}");
    assert!(err.contains("smart.csv"), "{err}");
}

#[test]
fn missing_artifacts_exit_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = scrubsel(dir.path(), &["score"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing artifact"));
}

#[test]
fn reingest_keeps_checksums() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ingest(dir.path()).status.success());
    let first = manifest(dir.path())["artifacts"].clone();
    assert!(ingest(dir.path()).status.success());
    assert_eq!(first, manifest(dir.path())["artifacts"]);
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    full_run(a.path(), &["--seed", "11"]);
    full_run(b.path(), &["--seed", "11"]);
    let (fa, fb) = (artifacts(a.path()), artifacts(b.path()));
    assert!(fa.contains_key("report.json") && fa.contains_key("simulation.json"));
    assert_eq!(fa, fb);
    assert_eq!(
        manifest(a.path())["artifacts"],
        manifest(b.path())["artifacts"]
    );
}

#[test]
fn different_seed_changes_split() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, seed) in [(&a, "1"), (&b, "2")] {
        assert!(ingest(dir.path()).status.success());
        assert!(scrubsel(dir.path(), &["score", "--seed", seed])
            .status
            .success());
    }
    assert_ne!(
        std::fs::read(a.path().join("pvalues.csv")).unwrap(),
        std::fs::read(b.path().join("pvalues.csv")).unwrap()
    );
}

#[test]
fn dry_run_skips_simulation() {
    let dir = tempfile::tempdir().unwrap();
    full_run(dir.path(), &[]);
    assert!(dir.path().join("simulation.json").exists());
    let o = scrubsel(dir.path(), &["schedule", "--dry-run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("simulation=skipped"));
    assert!(dir.path().join("schedule.csv").exists());
    assert!(!dir.path().join("simulation.json").exists());
    assert!(manifest(dir.path())["artifacts"]
        .get("simulation.json")
        .is_none());
}

#[test]
fn schedule_stays_inside_default_window() {
    let dir = tempfile::tempdir().unwrap();
    full_run(dir.path(), &[]);
    let csv = std::fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    let slots: Vec<usize> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(!slots.is_empty());
    assert!(slots.iter().all(|s| *s < 12));
}

#[test]
fn energy_summary_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    full_run(dir.path(), &[]);
    let e: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("energy.json")).unwrap())
            .unwrap();
    let f = |k: &str| e[k].as_f64().unwrap();
    assert_eq!(f("per_disk_wh"), 42.0);
    assert_eq!(
        f("saved_wh"),
        f("scrub_all_energy_wh") - f("selected_energy_wh")
    );
}

#[test]
fn no_idle_window_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    full_run(dir.path(), &[]);
    let o = scrubsel(
        dir.path(),
        &["schedule", "--idle-threshold", "1", "--dry-run"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("warning=no_idle_window"));
    assert!(stdout(&o).contains("assigned=0"));
}

#[test]
fn horizon_mismatch_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    full_run(dir.path(), &[]);
    let o = scrubsel(dir.path(), &["schedule", "--horizon", "24", "--dry-run"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn calibration_reused_across_threshold_sweep() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ingest(dir.path()).status.success());
    assert!(scrubsel(dir.path(), &["score"]).status.success());
    let cal = std::fs::read(dir.path().join("calibration.json")).unwrap();
    let o = scrubsel(
        dir.path(),
        &["score", "--reuse-calibration", "--threshold", "0.05"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("reused_calibration=true"));
    assert_eq!(
        cal,
        std::fs::read(dir.path().join("calibration.json")).unwrap()
    );
    let o = scrubsel(dir.path(), &["score", "--reuse-calibration", "--seed", "3"]);
    assert!(stdout(&o).contains("reused_calibration=false"));
}

#[test]
fn config_file_and_env_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"dataset": {:?}, "k": 7, "threshold": 0.05}}"#,
            fixture("smart.csv").to_str().unwrap()
        ),
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_scrubsel"))
        .env("SCRUBSEL_CONFIG", &cfg)
        .env("SCRUBSEL_OUT", &out)
        .env("SCRUBSEL_SEED", "5")
        .arg("run")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["seed"], 5);
    assert!(out.join("report.json").exists());
    assert!(!out.join("schedule.csv").exists());

    std::fs::write(&cfg, r#"{"k": 7, "unknown": 1}"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_scrubsel"))
        .args(["--config", cfg.to_str().unwrap(), "report"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
