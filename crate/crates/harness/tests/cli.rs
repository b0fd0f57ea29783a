use std::fs;
use std::path::Path;
use std::process::Command;

use twosex_harness::scenarios::bundled;
use twosex_harness::ScenarioConfig;

fn lab(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_twosex-lab"))
        .args(args)
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn run_into(dir: &Path, config: &str, extra: &[&str]) -> i32 {
    let mut args = vec!["run", "--config", config, "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    lab(&args).0
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn empty_scenario_reports_zeros_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_into(tmp.path(), "@empty", &[]), 0);
    let s = summary(tmp.path());
    assert_eq!(s["initial_m_norm"], 0.0);
    assert_eq!(s["control"]["final_m_ratio"], 0.0);
    assert_eq!(s["control"]["final_f_ratio"], 0.0);
    assert_eq!(s["control"]["cost"], 0.0);
    assert_eq!(s["passed"], true);
}

#[test]
fn every_table_carries_the_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_into(tmp.path(), "@male-only", &[]), 0);
    let hash = summary(tmp.path())["config_hash"].as_str().unwrap().to_string();
    let echo = fs::read_to_string(tmp.path().join("config.toml")).unwrap();
    assert_eq!(ScenarioConfig::parse(&echo).unwrap().hash(), hash);
    let mut tables = 0;
    for (name, bytes) in files(tmp.path()) {
        if !name.ends_with(".csv") {
            continue;
        }
        tables += 1;
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("config_hash,"), "{name}");
        assert!(lines.all(|l| l.starts_with(&format!("{hash},"))), "{name}");
    }
    assert!(tables >= 4);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        assert_eq!(run_into(dir, "@obs-admissible", &["--seed", "7"]), 0);
    }
    assert_eq!(files(a.path()), files(b.path()));
    assert_eq!(summary(a.path())["seed"], 7);
}

#[test]
fn seed_override_changes_the_hash() {
    let base = bundled("obs-admissible").unwrap();
    let mut other = base.clone();
    other.seed += 1;
    assert_ne!(base.hash(), other.hash());
}

#[test]
fn echo_round_trips() {
    let (code, text) = lab(&["echo", "--config", "@desk-both"]);
    assert_eq!(code, 0);
    let parsed = ScenarioConfig::parse(&text).unwrap();
    assert_eq!(parsed, bundled("desk-both").unwrap());
    assert_eq!(parsed.echo(), text);
}

#[test]
fn critical_horizon_is_refused_before_solving() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_into(tmp.path(), "@short-horizon", &[]), 2);
    let names: Vec<String> = files(tmp.path()).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["config.toml", "error.txt"]);
    assert_eq!(lab(&["validate", "--config", "@short-horizon"]).0, 2);
    assert_eq!(lab(&["validate", "--config", "@desk-both"]).0, 0);
}

#[test]
fn bad_configs_exit_with_status_two() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "name = \"bad\"\nunknown_key = 1\n").unwrap();
    assert_eq!(lab(&["run", "--config", path.to_str().unwrap()]).0, 2);
    assert_eq!(lab(&["run", "--config", "@no-such-scenario"]).0, 2);
    assert_eq!(lab(&["run", "--config", "/no/such/file.toml"]).0, 2);
}

#[test]
fn overflowing_data_abort_with_status_three() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("huge.toml");
    fs::write(
        &path,
        r#"name = "huge"
[grid]
nx = 8
na = 10
horizon = 0.5
[[initial.f]]
kind = "bump"
amplitude = 1e308
center = 0.5
half_width = 0.2
"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run_into(&out, path.to_str().unwrap(), &[]), 3);
    assert!(out.join("config.toml").exists() && out.join("error.txt").exists());
}

#[test]
fn missed_thresholds_exit_with_status_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = bundled("desk-both").unwrap();
    cfg.thresholds.final_ratio = 1e-12;
    let path = tmp.path().join("strict.toml");
    fs::write(&path, cfg.echo()).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run_into(&out, path.to_str().unwrap(), &[]), 1);
    assert_eq!(summary(&out)["passed"], false);
}

#[test]
fn study_verb_honours_the_level_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let (code, _) = lab(&["study", "--config", "@study-temporal", "--level", "2", "--out", dir]);
    assert_eq!(code, 0);
    assert_eq!(summary(tmp.path())["study"].as_array().unwrap().len(), 2);
}

#[test]
fn single_synthesis_pipeline_writes_its_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = bundled("desk-both").unwrap();
    cfg.pipeline = twosex_harness::Pipeline::Hum;
    cfg.fixpoint.initial = twosex::fixpoint::InitialGuess::FreeRun;
    let path = tmp.path().join("hum.toml");
    fs::write(&path, cfg.echo()).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run_into(&out, path.to_str().unwrap(), &[]), 0);
    let names: Vec<String> = files(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(
        names,
        [
            "config.toml",
            "final_state.csv",
            "krylov.csv",
            "summary.json",
            "traces.csv"
        ]
    );
    assert!(summary(&out).get("fixpoint").is_none());
}
