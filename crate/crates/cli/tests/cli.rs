use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn voltreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voltreg")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn bundle(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let o = voltreg(&["gen-data", "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    data
}

#[test]
fn gen_data_run_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let data = bundle(tmp.path());
    let scn = data.join("ieee37_cloudy_ovr.json");
    let scn = scn.to_str().unwrap();
    let (a, b) = (tmp.path().join("ovr"), tmp.path().join("avr"));
    let o = voltreg(&["run", "--scenario", scn, "--start", "1440", "--steps", "10", "--out", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(text(&o).contains("tap operations"));
    assert!(a.join("metrics.json").is_file() && a.join("horizons.csv").is_file());
    let o = voltreg(&[
        "run", "--scenario", scn, "--method", "avr", "--start", "1440", "--steps", "10", "--out", b.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(!b.join("horizons.csv").exists());
    let o = voltreg(&["compare", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(text(&o).contains("over-voltage node-minutes"));
}

#[test]
fn validate_lin_and_dump_lp() {
    let tmp = tempfile::tempdir().unwrap();
    let data = bundle(tmp.path());
    let scn = data.join("ieee37_cloudy_ovr.json");
    let out = tmp.path().join("vl");
    let o = voltreg(&[
        "validate-lin", "--scenario", scn.to_str().unwrap(), "--steps", "20", "--stride", "5", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(text(&o).starts_with("cases 4 "));
    assert!(out.join("lin_error.csv").is_file());
    let lp = tmp.path().join("h.lp");
    let o = voltreg(&["dump-lp", "--scenario", scn.to_str().unwrap(), "--step", "1440", "--out", lp.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(lp).unwrap().contains("General"));
}

#[test]
fn bad_input_exits_nonzero() {
    let o = voltreg(&["run", "--scenario", "/nonexistent.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("loading scenario"));
    let tmp = tempfile::tempdir().unwrap();
    let data = bundle(tmp.path());
    let scn = data.join("ieee37_cloudy_ovr.json");
    let o = voltreg(&["sweep-alpha", "--scenario", scn.to_str().unwrap(), "--alphas=-0.1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = voltreg(&["run", "--scenario", scn.to_str().unwrap(), "--start", "99999"]);
    assert_eq!(o.status.code(), Some(1));
    let o = voltreg(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}
