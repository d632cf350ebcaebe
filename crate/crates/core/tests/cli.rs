use std::process::{Command, Output};

fn holoflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holoflow")).args(args).output().unwrap()
}

#[test]
fn lists_builtin_scenarios() {
    let o = holoflow(&["list-scenarios"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert!(names.contains(&"flat-torus") && names.contains(&"berger-114"));
}

#[test]
fn flat_torus_identities_pass() {
    let o = holoflow(&["verify-identities", "--scenario", "flat-torus"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pass"], true);
    for e in v["equations"].as_array().unwrap() {
        assert!(e["residualSup"].as_f64().unwrap() < 1e-12);
    }
}

#[test]
fn product_flow_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = holoflow(&["run-flow", "--scenario", "product-s2xs2", "--tEnd", "0.05", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,sup_rm_phat,sup_nabla_phat,sup_a,sup_b,dim_hol,min_eig_g,k0,k1,k2"
    );
    let dims: Vec<&str> = lines.map(|l| l.split(',').nth(5).unwrap()).collect();
    assert!(dims.len() > 1 && dims.iter().all(|d| *d == "2"));
    assert!(dir.path().join("run.json").exists());
}

#[test]
fn berger_report_is_so3() {
    let o = holoflow(&["holonomy-report", "--scenario", "berger-114", "--kmax", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["dim"], 3);
    assert_eq!(v["bergerCandidates"][0]["label"], "SO(3)");
}

#[test]
fn failing_run_exits_one() {
    let o = holoflow(&["run-flow", "--scenario", "warped-t3", "--tEnd", "0.002", "--resolution", "16"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["preserved"], false);
}

#[test]
fn config_errors_exit_two() {
    let o = holoflow(&["run-flow", "--scenario", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown scenario"));
    assert_eq!(holoflow(&["run-flow", "--scenario", "round-s3", "--resolution", "8"]).status.code(), Some(2));
    assert_eq!(holoflow(&["run-flow", "--scenario", "flat-torus", "--dt=-1"]).status.code(), Some(2));
    assert_eq!(holoflow(&["run-flow", "--config", "/nonexistent.toml"]).status.code(), Some(2));
}

#[test]
fn config_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    let sc = holoflow::verify::builtin_scenario("flat-torus").unwrap();
    std::fs::write(&path, sc.to_toml().unwrap()).unwrap();
    let o = holoflow(&["run-flow", "--config", path.to_str().unwrap(), "--tEnd", "0.01"]);
    assert_eq!(o.status.code(), Some(0));
}
