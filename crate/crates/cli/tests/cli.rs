use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sgl_cli::commands::{SweepSummary, PLOT_SCRIPTS};
use sgl_cli::config::{load_config, parse_config, RunConfig};
use tempfile::TempDir;

fn sgl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgl")).args(args).output().expect("run sgl")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_SWEEP: &str = r#"{
  // 2 x 3 grid on a coarse mesh
  "name": "small",
  "sweep": {
    "kind": "CrossCap", "x0": [0.3, 0.4], "eps": [0.04, 0.02],
    "h_grid": { "type": "explicit", "values": [0.45, 0.5, 0.55] },
    "mesh": { "n_background": 32, "n_theta": 32 },
    "richardson": false
  }
}"#;

fn reference_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/torus-reference.json")
}

#[test]
fn committed_reference_config_matches_the_builtin() {
    let cfg = load_config(&reference_path()).unwrap();
    assert_eq!(cfg, RunConfig::torus_reference());
    assert_eq!(cfg.sweep.as_ref().unwrap().grid().unwrap().len(), 84);
}

#[test]
fn config_round_trips_through_json() {
    let cfg = RunConfig::torus_reference();
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(parse_config(&text).unwrap(), cfg);
}

#[test]
fn missing_field_exits_2_and_names_it() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.json", r#"{ "sweep": { "kind": "CrossCap", "x0": [0.3, 0.4], "h_grid": { "type": "eps_rule" } } }"#);
    let o = sgl(&["--config", &cfg, "--out", tmp.path().to_str().unwrap(), "sweep"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`eps`"), "{}", stderr(&o));
}

#[test]
fn unknown_field_and_bad_values_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let cfg = write(tmp.path(), "typo.json", r#"{ "sweeep": {} }"#);
    assert_eq!(code(&sgl(&["--config", &cfg, "--out", out, "spectrum"])), 2);
    let cfg = write(tmp.path(), "neg.json", &SMALL_SWEEP.replace("[0.04, 0.02]", "[-0.04]"));
    assert_eq!(code(&sgl(&["--config", &cfg, "--out", out, "sweep"])), 2);
}

#[test]
fn torus_only_spectrum_has_lambda1_near_4pi2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "torus.json", r#"{ "name": "torus" }"#);
    let o = sgl(&["--config", &cfg, "--out", tmp.path().to_str().unwrap(), "spectrum"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("spectrum.json")).unwrap()).unwrap();
    let l1 = s["spectrum"]["eigenvalues"][1].as_f64().unwrap();
    let four_pi2 = 4.0 * std::f64::consts::PI.powi(2);
    assert!((l1 / four_pi2 - 1.0).abs() < 0.01, "{l1}");
    assert!(tmp.path().join("mesh.txt").exists());
}

#[test]
fn crosscap_spectrum_writes_quasimode_report() {
    let tmp = TempDir::new().unwrap();
    // The cutoff band of the green quasimode needs the default annulus resolution.
    let cfg = write(tmp.path(), "cfg.json", &SMALL_SWEEP.replace(r#""mesh": { "n_background": 32, "n_theta": 32 },"#, ""));
    let out = tmp.path().join("out");
    let o = sgl(&["--config", &cfg, "--out", out.to_str().unwrap(), "spectrum", "--eps", "0.01", "--h", "0.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["spectrum.json", "quasimodes.json", "mesh.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let q: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("quasimodes.json")).unwrap()).unwrap();
    let q = q.as_array().unwrap();
    assert_eq!(q.len(), 2);
    assert!(q[0]["delta"].as_f64().unwrap() > q[1]["delta"].as_f64().unwrap(), "{q:?}");
}

#[test]
fn sweep_resumes_checks_and_detects_tampering() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "cfg.json", SMALL_SWEEP);
    let out = tmp.path().join("run");
    let o_str = out.to_str().unwrap();
    let first = sgl(&["--config", &cfg, "--out", o_str, "sweep"]);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let csv = std::fs::read(out.join("sweep.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&csv).lines().count(), 7);

    let again = sgl(&["--config", &cfg, "--out", o_str, "sweep"]);
    assert_eq!(code(&again), 0);
    assert!(String::from_utf8_lossy(&again.stdout).contains("0 computed, 6 reused"));
    assert_eq!(std::fs::read(out.join("sweep.csv")).unwrap(), csv, "resume reproduces the CSV");

    // Drop the finer eps from the records: only those points are recomputed.
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    let kept: Vec<&str> = records.lines().filter(|l| !l.contains("\"eps\":0.02")).collect();
    std::fs::write(out.join("records.jsonl"), kept.join("\n") + "\n").unwrap();
    let partial = sgl(&["--config", &cfg, "--out", o_str, "sweep"]);
    assert!(String::from_utf8_lossy(&partial.stdout).contains("3 computed, 3 reused"), "{:?}", partial);
    assert_eq!(std::fs::read(out.join("sweep.csv")).unwrap(), csv);

    assert_eq!(code(&sgl(&["--out", o_str, "check"])), 0);
    let mut tampered = csv.clone();
    let mid = tampered.len() / 2;
    tampered[mid] ^= 1;
    std::fs::write(out.join("sweep.csv"), tampered).unwrap();
    let o = sgl(&["--out", o_str, "check"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("sweep.csv: hash mismatch"));

    let other = write(tmp.path(), "other.json", &SMALL_SWEEP.replace("0.55", "0.6"));
    let o = sgl(&["--config", &other, "--out", o_str, "sweep"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("different config"));
}

#[test]
fn worker_count_does_not_change_the_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "cfg.json", &SMALL_SWEEP.replace("[0.04, 0.02]", "[0.04]"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&sgl(&["--config", &cfg, "--out", a.to_str().unwrap(), "--workers", "1", "sweep"])), 0);
    assert_eq!(code(&sgl(&["--config", &cfg, "--out", b.to_str().unwrap(), "--workers", "2", "sweep"])), 0);
    assert_eq!(std::fs::read(a.join("sweep.csv")).unwrap(), std::fs::read(b.join("sweep.csv")).unwrap());
}

#[test]
fn plot_emits_scripts_over_emitted_data_only() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "cfg.json", SMALL_SWEEP);
    let out = tmp.path().join("run");
    assert_eq!(code(&sgl(&["--config", &cfg, "--out", out.to_str().unwrap(), "sweep"])), 0);
    let o = sgl(&["--out", out.to_str().unwrap(), "plot"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let plots = out.join("plots");
    for s in PLOT_SCRIPTS {
        let text = std::fs::read_to_string(plots.join(s)).unwrap();
        for quoted in text.split('\'').skip(1).step_by(2).filter(|q| q.ends_with(".dat")) {
            assert!(plots.join(quoted).exists(), "{s} references missing {quoted}");
        }
    }
    let mass = std::fs::read_to_string(plots.join("mass.dat")).unwrap();
    let shares: Vec<f64> = mass
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(shares.len(), 6);
    assert!(shares.iter().all(|c| (0.0..=1.0).contains(c)));
}

#[test]
fn plot_rejects_empty_and_malformed_csv() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let empty = write(tmp.path(), "empty.csv", "");
    assert_eq!(code(&sgl(&["--out", out, "plot", "--csv", &empty])), 2);
    let header = sgl_lab::record::SweepRecord::csv_header().join(",");
    let only_header = write(tmp.path(), "header.csv", &format!("{header}\n"));
    assert_eq!(code(&sgl(&["--out", out, "plot", "--csv", &only_header])), 2);
    let bad = write(tmp.path(), "bad.csv", "a,b\n1,2\n");
    assert_eq!(code(&sgl(&["--out", out, "plot", "--csv", &bad])), 2);
    let short = write(tmp.path(), "short.csv", &format!("{header}\n0.01,0.5\n"));
    assert_eq!(code(&sgl(&["--out", out, "plot", "--csv", &short])), 2);
    assert_eq!(code(&sgl(&["--out", out, "plot", "--csv", "/nonexistent.csv"])), 2);
}

#[test]
fn main1_mode_i_is_not_applicable_on_the_torus() {
    let tmp = TempDir::new().unwrap();
    let o = sgl(&["--out", tmp.path().to_str().unwrap(), "verify", "main1", "--mode", "i"]);
    assert_eq!(code(&o), 4);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("verify/verdict_main1_vanishing_point.json")).unwrap())
            .unwrap();
    assert_eq!(v["status"], "not_applicable");
    assert!(v["details"]["notice"].as_str().unwrap().contains("torus"));
}

#[test]
fn sweep_exit_code_needs_ninety_percent() {
    let s = |failed| SweepSummary { total: 20, computed: 20, reused: 0, failed };
    assert_eq!(s(2).exit_code(), 0);
    assert_eq!(s(3).exit_code(), 3);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&sgl(&["verify", "nonsense"])), 2);
    assert_eq!(code(&sgl(&["spectrum", "--eps", "0.01"])), 2);
}
