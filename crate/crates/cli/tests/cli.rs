use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mblab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mblab"))
        .args(args)
        .env_remove("MBLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_json(o: &Output) -> serde_json::Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).expect("error JSON on stderr")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn cell_on_defaults_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mblab(&["cell", "--out", out]);
    assert!(o.status.success(), "{o:?}");
    let line = stdout(&o);
    let c0: f64 = line.trim().strip_prefix("c0 = ").unwrap().parse().unwrap();
    assert!(c0.abs() <= 1e-10);
    assert!(dir.path().join("cell_u.bin").exists());
    let header = json(&dir.path().join("cell_u.json"));
    assert_eq!(header["ordering"], "x1-major");
    assert_eq!(header["config_hash"], json(&dir.path().join("cell.json"))["config_hash"]);
}

#[test]
fn unknown_key_exits_1_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "grid.N = 16\ngrid.widht = 3\n").unwrap();
    let o = mblab(&["cell", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = error_json(&o);
    assert_eq!(e["error"], "config");
    let msg = e["message"].as_str().unwrap();
    assert!(msg.contains("grid.widht") && msg.contains("line 2"), "{msg}");

    let o = mblab(&["hetero", "--set", "solver.max_itres=3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(error_json(&o)["message"].as_str().unwrap().contains("solver.max_itres"));
}

#[test]
fn hetero_then_verify_on_the_pendulum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = ["--out", out, "--set", "potential.family=pendulum"];
    let o = mblab(&[&["hetero"], &args[..]].concat());
    assert!(o.status.success(), "{o:?}");
    let o = mblab(&[&["verify"], &args[..]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let checks = json(&dir.path().join("verify.json"));
    let l611 = checks.as_array().unwrap().iter().find(|c| c["id"] == "lemma_6_11").unwrap();
    assert_eq!(l611["status"], "pass");
    let exact = 4.0 * 2f64.sqrt() / std::f64::consts::PI;
    let sum = l611["measured"]["sum"].as_f64().unwrap();
    assert!((sum - exact).abs() < 2e-3, "sum {sum}");

    let o = mblab(&[&["report"], &args[..]].concat());
    assert!(o.status.success());
    let names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(names.iter().any(|n| n.starts_with("hetero_vw_profile_") && n.ends_with(".png")));
    assert!(names.contains(&"hetero_wv_ledger.csv".to_string()));
}

#[test]
fn verify_without_dumps_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mblab(&["verify", "--out", dir.path().to_str().unwrap(), "--set", "grid.N=16"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failing_battery_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--out", dir.path().to_str().unwrap(), "--set", "grid.N=16", "--set", "potential.family=zero"];
    assert!(mblab(&[&["hetero"], &args[..]].concat()).status.success());
    let o = mblab(&[&["verify"], &args[..]].concat());
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"], "verification");
}

#[test]
fn same_config_gives_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = mblab(&["hetero", "--out", d.path().to_str().unwrap(), "--set", "grid.N=16", "--threads", "2"]);
        assert!(o.status.success());
    }
    for f in ["hetero.json", "hetero_vw.bin", "hetero_vw.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn interrupted_run_resumes_to_the_same_result() {
    let full = tempfile::tempdir().unwrap();
    let cut = tempfile::tempdir().unwrap();
    let o = mblab(&["multi", "--out", full.path().to_str().unwrap(), "--set", "grid.N=16"]);
    assert!(o.status.success(), "{o:?}");

    let o = mblab(&[
        "multi",
        "--out",
        cut.path().to_str().unwrap(),
        "--set",
        "grid.N=16",
        "--set",
        "solver.stop_after=4",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "interrupted");
    assert!(cut.path().join("checkpoint.json").exists());

    let o = mblab(&["resume", cut.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!cut.path().join("checkpoint.json").exists());
    let (jx, jy) = (json(&full.path().join("multi.json")), json(&cut.path().join("multi.json")));
    let (x, y) = (jx["objective"].as_f64().unwrap(), jy["objective"].as_f64().unwrap());
    assert!((x - y).abs() <= 1e-10, "{x} vs {y}");
    assert_eq!(jx["geometry_scan"]["smallest_passing"], jy["geometry_scan"]["smallest_passing"]);
    assert!(jx["multi_start"]["objective_spread"].as_f64().unwrap() < 1e-8);

    // finished: resuming again does nothing
    let o = mblab(&["resume", cut.path().to_str().unwrap()]);
    assert!(o.status.success());
}

#[test]
fn resume_refuses_bad_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mblab(&["resume", out]);
    assert_eq!(o.status.code(), Some(1));

    let o = mblab(&["hetero", "--out", out, "--set", "grid.N=16", "--set", "solver.stop_after=2"]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = dir.path().join("config.txt");
    let text = fs::read_to_string(&cfg).unwrap();
    fs::write(&cfg, text.replace("potential.epsilon = 0.3", "potential.epsilon = 0.25")).unwrap();
    let o = mblab(&["resume", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(error_json(&o)["message"].as_str().unwrap().contains("hash"));

    fs::write(&cfg, text).unwrap();
    fs::write(dir.path().join("checkpoint.json"), "{\"config_hash\": ").unwrap();
    let o = mblab(&["resume", out]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_flags_exit_1() {
    let o = mblab(&["cell", "--threads", "many"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"], "config");
}
