use std::path::Path;
use std::process::Command;

const TINY: &str = r#"{
    "name": "cli",
    "seed": 3,
    "model": {
        "truth": {"structure": {"kind": "beam", "theory": "timoshenko", "elements": 6}},
        "nominal": {"structure": {"kind": "beam", "theory": "euler-bernoulli", "elements": 6}}
    },
    "excitation": {
        "dt": 0.002, "duration": 0.3,
        "train": [{"kind": "sinusoid", "x": 4.0, "amplitude": 1e5, "omega": 40.0}],
        "test": [{"kind": "sinusoid", "x": 4.0, "amplitude": 9e4, "omega": 30.0}]
    },
    "sensors": {"positions": [2.0, 5.0, 8.0], "noise_levels": [1.0]},
    "modal": {"count": 2},
    "gp": {"optimizer": {"starts": 1, "max_iters": 30}},
    "surrogate": {"hidden": 3, "max_epochs": 10, "restarts": 1}
}"#;

fn mre(stage: &str, config: &Path, out: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mre"));
    c.arg(stage).arg("--config").arg(config).arg("--out").arg(out);
    c
}

fn code(mut c: Command) -> i32 {
    c.output().unwrap().status.code().unwrap()
}

#[test]
fn stages_run_in_order_and_report_prints_table_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, TINY).unwrap();
    let out = tmp.path().join("run");
    for s in ["simulate", "infer", "train-surrogate", "predict"] {
        assert_eq!(code(mre(s, &cfg, &out)), 0, "{s}");
    }
    let o = mre("report", &cfg, &out).output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("results_table.csv"));
    assert!(out.join("noise_1/prediction_manifest.json").is_file());
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, TINY).unwrap();
    let empty = tmp.path().join("empty");

    let o = mre("report", &cfg, &empty).output().unwrap();
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("manifest.json") && err.contains("noise_1/inference.json"), "{err}");

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, TINY.replace("\"seed\": 3,", "\"seed\": 3, \"sede\": 1,")).unwrap();
    assert_eq!(code(mre("simulate", &bad, &empty)), 2);
    assert_eq!(code(mre("simulate", &tmp.path().join("absent.json"), &empty)), 2);

    let mut threads = mre("simulate", &cfg, &empty);
    threads.env("MRE_THREADS", "zero");
    assert_eq!(code(threads), 2);
}

#[test]
fn seed_flag_changes_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, TINY).unwrap();
    let out = tmp.path().join("run");
    assert_eq!(code(mre("simulate", &cfg, &out)), 0);
    let mut c = mre("infer", &cfg, &out);
    c.args(["--seed", "4"]);
    assert_eq!(code(c), 4);
}
