use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_filament-lab")).args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stdout);
    let start = text.find('{').expect("JSON on stdout");
    serde_json::from_str(&text[start..]).expect("stdout is JSON")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn selfsimilar_is_deterministic_across_output_directories() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&d1, &d2] {
        let o = run(&["selfsimilar", "--a", "0.5", "--h", "0.01", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
        let j = stdout_json(&o);
        assert_eq!(j["status"], "ok");
        assert_eq!(j["summary"]["checks_passed"], true);
    }
    let (m1, m2) = (manifest(d1.path()), manifest(d2.path()));
    assert_eq!(m1["config_hash"], m2["config_hash"]);
    assert_eq!(m1["files"], m2["files"]);
    for f in ["profile.csv", "constants.json", "plot/angle_sweep.dat"] {
        assert!(d1.path().join(f).exists(), "{f}");
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let d = tempfile::tempdir().unwrap();
    let conf = d.path().join("run.conf");
    std::fs::write(&conf, "a = 0.7\nh = 0.01\n").unwrap();
    let out = d.path().join("o");
    let o = run(&["--config", conf.to_str().unwrap(), "selfsimilar", "--a", "0.4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let m = manifest(&out);
    let config = m["config"].as_str().unwrap();
    assert!(config.contains("a = 4.0000000000000002e-1"), "{config}");
    assert!(config.contains("h = 1.0000000000000000e-2"), "{config}");
}

#[test]
fn invalid_input_reports_json_and_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    for args in [
        vec!["selfsimilar", "--a", "-1", "--out", out],
        vec!["selfsimilar", "--a", "zero", "--out", out],
        vec!["selfsimilar", "--bogus", "1", "--out", out],
        vec!["trace", "--method", "guess", "--out", out],
        vec!["verify", "--suite", "other", "--out", out],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let j = stdout_json(&o);
        assert_eq!(j["status"], "error", "{args:?}");
        assert_eq!(j["exit_code"], 1);
    }
    let conf = d.path().join("bad.conf");
    std::fs::write(&conf, "route = synthesis\n").unwrap();
    let o = run(&["--config", conf.to_str().unwrap(), "selfsimilar", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_and_version_exit_zero() {
    assert!(run(&["--help"]).status.success());
    assert!(run(&["--version"]).status.success());
    assert!(run(&["evolve", "--help"]).status.success());
}

#[test]
fn verify_exit_codes_follow_the_verdict() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("pass");
    let o = run(&["verify", "--only", "1,5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["passed"], 2);
    let out = d.path().join("fail");
    let o = run(&["verify", "--only", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout_json(&o)["status"], "failed");
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));
}
