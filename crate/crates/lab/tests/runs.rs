use std::fs;
use std::path::Path;
use std::process::Command;

use pnlab::output::MANIFEST;
use pnlab::sweep::{run_sweep, AGGREGATE, COLUMNS};
use pnlab::{load_config, run_scenario, verify_manifest, RunOutput, Status};

fn cfg(text: &str) -> pnlab::ScenarioConfig {
    load_config(text, None).unwrap()
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let m = verify_manifest(dir).unwrap();
    m.files.iter().map(|f| (f.path.clone(), fs::read(dir.join(&f.path)).unwrap())).collect()
}

#[test]
fn collision_run_passes_and_lists_its_files() {
    let tmp = tempfile::tempdir().unwrap();
    let m = run_scenario(&cfg("scenario = \"two_collide\""), tmp.path()).unwrap();
    assert_eq!(m.status, Status::Pass);
    assert!(!m.files.is_empty());
    let tc = m.metric("t_c").unwrap();
    assert!((tc * 8.0 * std::f64::consts::PI.powi(2) - 1.0).abs() < 1e-3, "{tc}");
    verify_manifest(tmp.path()).unwrap();
}

#[test]
fn missing_or_altered_file_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let m = run_scenario(&cfg("scenario = \"two_collide\""), tmp.path()).unwrap();
    let first = tmp.path().join(&m.files[0].path);
    let bytes = fs::read(&first).unwrap();
    fs::write(&first, [&bytes[..], b"x"].concat()).unwrap();
    assert!(verify_manifest(tmp.path()).is_err());
    fs::remove_file(&first).unwrap();
    assert!(verify_manifest(tmp.path()).is_err());
}

#[test]
fn repeated_runs_write_identical_tables() {
    let c = cfg("scenario = \"three_simple\"");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_scenario(&c, a.path()).unwrap();
    run_scenario(&c, b.path()).unwrap();
    let (fa, fb) = (read_all(a.path()), read_all(b.path()));
    assert_eq!(fa, fb);
    assert!(fa.iter().any(|(p, _)| p.ends_with(".csv")));
}

#[test]
fn config_errors_are_reported_before_running() {
    assert!(load_config("", None).is_err());
    assert!(load_config("scenario = \"nope\"", None).is_err());
    assert!(load_config("scenario = \"two_collide\"\nunknown_key = 1", None).is_err());
    assert!(load_config("scenario = \"two_collide\"", Some("layer")).is_err());
    assert!(load_config("scenario = \"two_collide\"\nepsilon = 0.0", None).is_err());
    assert!(load_config("scenario = \"two_collide\"\npositions = [1, 0]", None).is_err());
    assert!(load_config("scenario = \"two_collide\"\n[nested]\na = 1", None).is_err());
}

#[test]
fn sweep_aggregates_rows_in_value_order() {
    let tmp = tempfile::tempdir().unwrap();
    let base = cfg("scenario = \"particles\"\npositions = [0.0, 1.0]\nt_max = 1.0");
    let mut out = RunOutput::create(tmp.path()).unwrap();
    let rows = run_sweep(&base, "s", &[0.75, 0.25, 0.5], &mut out, 2).unwrap();
    assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), vec![0.25, 0.5, 0.75]);
    assert!(rows.iter().all(|r| r.status == Status::Pass));
    out.finish(&base, None).unwrap();
    verify_manifest(tmp.path()).unwrap();
    let text = fs::read_to_string(tmp.path().join(AGGREGATE)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], COLUMNS.join(","));
    assert_eq!(lines.len(), 4);
    // pair T_c = s/((2s+1)γ) grows with s at θ0 = 1 for γ fixed
    let tc: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(tc.windows(2).all(|w| w[0] < w[1]), "{tc:?}");
    assert!(tmp.path().join("runs/000").join(MANIFEST).exists());
}

#[test]
fn empty_sweep_writes_a_header_only_table() {
    let tmp = tempfile::tempdir().unwrap();
    let base = cfg("scenario = \"two_collide\"");
    let mut out = RunOutput::create(tmp.path()).unwrap();
    assert!(run_sweep(&base, "s", &[], &mut out, 4).unwrap().is_empty());
    let text = fs::read_to_string(tmp.path().join(AGGREGATE)).unwrap();
    assert_eq!(text.trim_end(), COLUMNS.join(","));
    assert!(run_sweep(&base, "no_such_key", &[1.0], &mut out, 1).is_err());
}

#[test]
fn bad_sweep_row_is_an_error_row() {
    let tmp = tempfile::tempdir().unwrap();
    let base = cfg("scenario = \"two_collide\"");
    let mut out = RunOutput::create(tmp.path()).unwrap();
    let rows = run_sweep(&base, "s", &[0.5, 1.5], &mut out, 2).unwrap();
    assert_eq!(rows[0].status, Status::Pass);
    assert_eq!(rows[1].status, Status::Error);
    assert!(rows[1].error.is_some());
}

fn pnlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pnlab"))
}

#[test]
fn cli_lists_the_registry() {
    let o = pnlab().arg("list").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in pnlab::scenario_names() {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.toml");
    fs::write(&good, "scenario = \"two_collide\"\n").unwrap();
    let o = pnlab().args(["two_collide", "--config"]).arg(&good).arg("--out").arg(tmp.path().join("run")).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    verify_manifest(&tmp.path().join("run")).unwrap();

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "scenario = \"two_collide\"\ns = 2.0\n").unwrap();
    let o = pnlab().args(["two_collide", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert!(err.get("message").is_some(), "{err}");

    let o = pnlab().args(["two_collide"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let o = pnlab()
        .args(["two_collide", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(tmp.path().join("sw"))
        .args(["--sweep", "s=0.25,0.5", "--threads", "2"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("sw").join(AGGREGATE).exists());
}
