use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn cdl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn cdl_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdl"))
        .args(args)
        .env("CDL_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_reference_scenario() {
    let o = cdl(&[
        "validate",
        "--config",
        scenario("ref3.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["network"]["window"], 2);
}

#[test]
fn validate_degenerate_covariance() {
    let o = cdl(&[
        "validate",
        "--config",
        scenario("invalid/degenerate.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["model_error"]["kind"], "DegenerateCovariance");
}

#[test]
fn validate_disconnected_network() {
    let o = cdl(&[
        "validate",
        "--quiet",
        "--config",
        scenario("invalid/disconnected.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(o.stdout.is_empty());
}

#[test]
fn malformed_and_unknown_keys_are_config_errors() {
    let o = cdl(&[
        "validate",
        "--config",
        scenario("invalid/malformed.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("identity2.json")).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, text.replace("\"k_max\"", "\"horizon\"")).unwrap();
    let o = cdl(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizon"));

    let o = cdl(&[
        "validate",
        "--config",
        dir.path().join("missing.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn analyze_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let o = cdl(&[
        "analyze",
        "--quiet",
        "--config",
        scenario("identity2.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let analysis = json(&out.join("analysis.json"));
    assert_eq!(analysis["chernoff_information"], 0.25);
    assert_eq!(analysis["delta_bound_violations"], 0);
    let curves = std::fs::read_to_string(out.join("exact_curves.csv")).unwrap();
    assert_eq!(curves.lines().next(), Some("k,node,alpha,beta,pe,log10_pe"));
    // centralized plus two nodes over k = 1..=64
    assert_eq!(curves.lines().count(), 1 + 3 * 64);
    let delta = std::fs::read_to_string(out.join("delta_diagnostic.csv")).unwrap();
    assert!(delta.starts_with("k,node,hypothesis,mu,delta,delta_from_moments,bound\n"));
    let decay = json(&out.join("decay_report.json"));
    assert!(decay["worst_slack_ratio"].as_f64().unwrap() <= 1.0);

    let manifest = json(&out.join("manifest.json"));
    let cfg = std::fs::read(scenario("identity2.json")).unwrap();
    let files: Vec<&str> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["file"].as_str().unwrap())
        .collect();
    assert_eq!(
        files,
        [
            "exact_curves.csv",
            "delta_diagnostic.csv",
            "decay_report.json",
            "analysis.json"
        ]
    );
    let digest: String = Sha256::digest(&cfg)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    assert_eq!(manifest["config_sha256"], digest.as_str());
}

#[test]
fn analyze_correlated_chernoff() {
    let dir = tempfile::tempdir().unwrap();
    let o = cdl(&[
        "analyze",
        "--quiet",
        "--config",
        scenario("corr2.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let c = json(&dir.path().join("analysis.json"))["chernoff_information"]
        .as_f64()
        .unwrap();
    assert!((c - 1.0 / 6.0).abs() <= 1e-12, "{c}");
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = cdl(&[
        "analyze",
        "--config",
        scenario("identity2.json").to_str().unwrap(),
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn small_sample_simulation_is_waived() {
    let dir = tempfile::tempdir().unwrap();
    let o = cdl(&[
        "simulate",
        "--quiet",
        "--config",
        scenario("ref3.json").to_str().unwrap(),
        "--trials",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&dir.path().join("comparison.json"));
    assert_eq!(report["n_trials"], 10);
    assert_eq!(report["wide_intervals"], true);
    assert_eq!(report["agreement"]["waived"], true);
}

#[test]
fn simulation_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let o = cdl_env(
            &[
                "simulate",
                "--quiet",
                "--config",
                scenario("random5.json").to_str().unwrap(),
                "--trials",
                "1500",
                "--seed",
                "77",
                "--out",
                out.to_str().unwrap(),
            ],
            threads,
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(out);
    }
    for f in ["mc_curves.csv", "comparison.json", "manifest.json"] {
        let a = std::fs::read(outputs[0].join(f)).unwrap();
        let b = std::fs::read(outputs[1].join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let csv = std::fs::read_to_string(outputs[0].join("mc_curves.csv")).unwrap();
    assert!(csv.lines().any(|l| l.contains(",mc,")));
    assert!(csv.lines().any(|l| l.contains(",exact,")));
}

#[test]
fn trajectory_dumps_are_optional() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("identity2.json")).unwrap();
    let cfg = dir.path().join("dump.json");
    std::fs::write(
        &cfg,
        text.replace(
            "\"master_seed\": 1",
            "\"master_seed\": 1, \"trajectory_dumps\": 2",
        ),
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = cdl(&[
        "simulate",
        "--quiet",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "50",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let traj = std::fs::read_to_string(out.join("trajectories/h1_trial1.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("k,D,x_1,x_2"));
    assert_eq!(traj.lines().count(), 65);
}
