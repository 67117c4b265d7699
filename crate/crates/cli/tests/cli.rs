use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn iqswitch(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iqswitch"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn iqswitch")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

const SMALL_CONFIG: &str = r#"{
    "n": 2, "epsilon": 0.1, "seed": 3,
    "warmup_slots": 1000, "sample_slots": 20000, "replications": 3,
    "diagnostics": {"ssc": true, "gg1_coupling": true}
}"#;

#[test]
fn match_reads_text_and_json() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("q.txt"), "5 1 0\n0 5 1\n1 0 5\n").unwrap();
    std::fs::write(dir.path().join("q.json"), "[[5,1,0],[0,5,1],[1,0,5]]").unwrap();
    for file in ["q.txt", "q.json"] {
        let v = stdout_json(&iqswitch(&["match", file], dir.path()));
        assert_eq!(v["weight"], 15);
        assert_eq!(v["permutation"], serde_json::json!([0, 1, 2]));
        let duals: f64 = v["w"]
            .as_array()
            .unwrap()
            .iter()
            .chain(v["w_tilde"].as_array().unwrap())
            .map(|x| x.as_f64().unwrap())
            .sum();
        assert_eq!(duals, 15.0);
    }
    std::fs::write(dir.path().join("bad.txt"), "1 -2\n3 4\n").unwrap();
    assert_eq!(
        iqswitch(&["match", "bad.txt"], dir.path()).status.code(),
        Some(1)
    );
}

#[test]
fn project_reports_certificates() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.txt"), "1 0\n0 1\n").unwrap();
    let v = stdout_json(&iqswitch(&["project", "x.txt"], dir.path()));
    let para = &v["q_para"];
    for i in 0..2 {
        for j in 0..2 {
            assert!((para[i][j].as_f64().unwrap() - 0.5).abs() < 1e-9);
        }
    }
    assert!(v["kkt_residual"].as_f64().unwrap() <= 1e-8);
    assert!((v["norms"]["q_perp"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn bounds_from_each_source() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&iqswitch(
        &["bounds", "--bernoulli", "2", "0.05"],
        dir.path(),
    ));
    assert_eq!(v["terms"]["r"], 2.0);
    assert!((v["terms"]["m_r"].as_f64().unwrap() - 391.7).abs() < 0.05);
    assert_eq!(v["applicable"], true);

    let v = stdout_json(&iqswitch(
        &["bounds", "--bernoulli", "2", "0.05", "--r", "3"],
        dir.path(),
    ));
    assert_eq!(v["terms"]["r"], 3.0);

    std::fs::write(dir.path().join("cfg.json"), r#"{"n": 3, "epsilon": 0.1}"#).unwrap();
    let v = stdout_json(&iqswitch(&["bounds", "--config", "cfg.json"], dir.path()));
    assert!((v["terms"]["universal_lower_bound"].as_f64().unwrap() - 8.1).abs() < 1e-9);

    let v = stdout_json(&iqswitch(
        &["bounds", "--scaling", "4", "5", "1"],
        dir.path(),
    ));
    assert_eq!(v["applicable"], true);

    let out = iqswitch(
        &["bounds", "--bernoulli", "2", "0.05", "--r", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(iqswitch(&["bounds"], dir.path()).status.code(), Some(1));
}

#[test]
fn simulate_writes_reproducible_results() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), SMALL_CONFIG).unwrap();
    let a = iqswitch(
        &["simulate", "--config", "cfg.json", "--out", "a.json"],
        dir.path(),
    );
    let b = iqswitch(
        &["simulate", "--config", "cfg.json", "--out", "b.json"],
        dir.path(),
    );
    let v = stdout_json(&a);
    assert_eq!(v["replications"], 3);
    assert!(v["ssc"]["mean_norm_qperp"].as_f64().unwrap() > 0.0);
    assert!(v["gg1"]["mean_phi_row"].is_array());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(
        std::fs::read(dir.path().join("a.json")).unwrap(),
        std::fs::read(dir.path().join("b.json")).unwrap()
    );

    let c = iqswitch(
        &["simulate", "--config", "cfg.json", "--seed", "4"],
        dir.path(),
    );
    assert!(c.status.success());
    assert_ne!(a.stdout, c.stdout);
    assert!(dir.path().join("results.json").exists());
}

#[test]
fn sweep_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), SMALL_CONFIG).unwrap();
    let out = iqswitch(
        &[
            "sweep",
            "--config",
            "cfg.json",
            "--eps",
            "0.2,0.1",
            "--out-dir",
            "out",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("eps,mean,ci,scaled_mean,ulb,thm_lb,thm_ub,ssc_ratio")
    );
    assert_eq!(lines.count(), 2);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), csv);
    let json: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/sweep.json")).unwrap())
            .unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);

    let bad = iqswitch(
        &["sweep", "--config", "cfg.json", "--eps", "0.1,0.2"],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"n": 2, "epsilon": 0.1, "nu": [0.9, 0.1, 0.5, 0.5]}"#,
    )
    .unwrap();
    for args in [
        &["simulate", "--config", "bad.json"][..],
        &["simulate", "--config", "missing.json"][..],
        &["project", "missing.txt"][..],
        &["frobnicate"][..],
    ] {
        assert_eq!(
            iqswitch(args, dir.path()).status.code(),
            Some(1),
            "{args:?}"
        );
    }
    assert_eq!(iqswitch(&["--help"], dir.path()).status.code(), Some(0));
}
