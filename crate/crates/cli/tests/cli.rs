use std::process::Command;

fn rare() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rare"))
}

#[test]
fn validate_accepts_and_rejects_by_key() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.cfg");
    std::fs::write(&good, "bandwidth = 100 MHz\n").unwrap();
    let out = rare().arg("validate").arg(&good).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok: snr sweep"));

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "bandwidth = 100\n").unwrap();
    let out = rare().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("`bandwidth`"));
}

#[test]
fn run_writes_jsonl_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "trajectory_mode = fixed\nsweep_values = 45, 55 dB\nsweep_variable = snr\ntrials = 3\ngrid_s = 32768\ntrajectory_grid = 64\n",
    )
    .unwrap();
    let out = dir.path().join("rows.jsonl");
    let status = rare().args(["run", "-f", "jsonl", "-j", "1", "-o"]).arg(&out).arg(&cfg).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["sweep_value"], 55.0);
    assert_eq!(rows[0]["trajectory_mode"], "fixed");
}

#[test]
fn trajectory_goes_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.cfg");
    std::fs::write(&cfg, "trajectory_grid = 32\n").unwrap();
    let out = rare().arg("trajectory").arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,p_tx,delta,snr_itn,snr_etn,snr_total");
    assert_eq!(text.lines().count(), 33);
}
