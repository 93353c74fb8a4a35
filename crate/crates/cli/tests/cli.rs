use std::process::Command;

fn kp5(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kp5")).args(args).output().unwrap()
}

#[test]
fn resonance_defaults_pass_and_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = kp5(&["resonance", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "resonance");
    assert_eq!(summary["pass"], true);
    assert!(summary["statistic"]["resonance"]["max_residual"].as_f64().unwrap() < 1e-10);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 42);
    assert!(manifest["version"].as_str().unwrap().starts_with('v'));
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(out.join("jacobian.csv").exists());
}

#[test]
fn missing_out_is_a_usage_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_kp5")).arg("resonance").current_dir(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = out.to_str().unwrap();
    assert_eq!(kp5(&["warp", "--out", o]).status.code(), Some(1));
    assert_eq!(kp5(&["kernel", "--bogus=1", "--out", o]).status.code(), Some(1));
    let bad = kp5(&["kernel", "--alpha=-1", "--out", o]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("alpha > 0 required"));
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "unknown_key = 3\n").unwrap();
    assert_eq!(kp5(&["kernel", "--config", cfg.to_str().unwrap(), "--out", o]).status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "seed = 5\nalpha = 2\n").unwrap();
    let mut csvs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("r{k}"));
        let o = kp5(&["modulation", "--config", cfg.to_str().unwrap(), "--seed=11", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!((m["config"]["seed"].as_u64(), m["config"]["alpha"].as_f64()), (Some(11), Some(2.0)));
        csvs.push(std::fs::read(out.join("modulation.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn failed_assertion_exits_2_with_report() {
    // data far outside the contraction regime
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = kp5(&["solve", "--nx=32", "--ny=32", "--t_max=4", "--small_data_delta=1000", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], false);
    assert!(summary["statistic"]["checks"][0]["detail"].as_str().unwrap().contains("divergence"));
    assert!(out.join("manifest.json").exists());
}
