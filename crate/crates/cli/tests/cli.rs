use std::fs;
use std::process::Command;

fn zrplab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_zrplab"));
    c.env("RUST_LOG", "warn");
    c
}

const CONFIG: &str = r#"{
    "p": 1.0,
    "replicas": 2,
    "seed": 1,
    "experiment": {
        "kind": "current_checks",
        "setup": {"kind": "stationary", "beta": 0.5, "half_width": 20},
        "horizon": 50.0,
        "observers": [{"start": 0}],
        "records": 5,
        "tolerance": 1.0
    }
}"#;

#[test]
fn writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, CONFIG).unwrap();
    let run = |out: &str, threads: &str| {
        let status = zrplab()
            .args(["current-checks", "--config"])
            .arg(&cfg)
            .args(["--seed", "9", "--replicas", "4", "--threads", threads, "--out"])
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.code() == Some(0) || status.code() == Some(2), "{status:?}");
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(out).join("report.json")).unwrap()).unwrap();
        report
    };
    let a = run("a", "1");
    let b = run("b", "2");
    assert_eq!(a, b);
    assert_eq!(a["seed"], 9);
    assert_eq!(a["replicas"], 4);
    let csv = fs::read_to_string(dir.path().join("a/currents.csv")).unwrap();
    assert!(csv.starts_with("replica,time,observer_id,gamma\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 5);
    assert!(dir.path().join("a/config.json").exists());
}

#[test]
fn rejects_mismatched_kind() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, CONFIG).unwrap();
    let out = zrplab()
        .args(["hydro-compare", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("current_checks"));
}

#[test]
fn rejects_light_cone_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, CONFIG.replace(r#""start": 0"#, r#""start": 0, "velocity": 1.0"#)).unwrap();
    let out = zrplab().args(["current-checks", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("y")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("light-cone"));
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let cfg = zrplab_core::experiments::ExperimentConfig::from_json(&text)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let stem = path.file_stem().unwrap().to_string_lossy().to_string();
        let prefix = cfg.kind().split('_').next().unwrap();
        assert!(stem.starts_with(prefix), "{stem} holds a {} config", cfg.kind());
        n += 1;
    }
    assert!(n >= 10);
}
