use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use mre::*;
use mre_core::config::ExperimentConfig;
use mre_core::pipeline::io::read_json;
use mre_core::pipeline::{predict, Stage, Workspace};
use mre_core::modal::BasisArtifact;
use mre_core::surrogate::SurrogateArtifact;
use nalgebra::{DMatrix, DVector};

const TINY: &str = r#"{
    "name": "ffi",
    "seed": 9,
    "model": {
        "truth": {"structure": {"kind": "beam", "theory": "timoshenko", "elements": 6}},
        "nominal": {"structure": {"kind": "beam", "theory": "euler-bernoulli", "elements": 6}}
    },
    "excitation": {
        "dt": 0.002, "duration": 0.3,
        "train": [{"kind": "sinusoid", "x": 4.0, "amplitude": 1e5, "omega": 40.0}],
        "test": [{"kind": "sinusoid", "x": 4.0, "amplitude": 9e4, "omega": 30.0}]
    },
    "sensors": {"positions": [2.0, 5.0, 8.0], "noise_levels": [0.0]},
    "modal": {"count": 2},
    "gp": {"optimizer": {"starts": 1, "max_iters": 30}},
    "surrogate": {"hidden": 3, "max_epochs": 10, "restarts": 1}
}"#;

fn c(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = mre_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn setup() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, TINY).unwrap();
    let out = tmp.path().join("run");
    (tmp, cfg, out)
}

#[test]
fn null_and_bad_arguments_are_reported() {
    let mut ws = ptr::null_mut();
    let st = unsafe { mre_workspace_open(ptr::null(), ptr::null(), false, 0, &mut ws) };
    assert_eq!(st, MreStatus::InvalidArgument);
    assert!(last_error().contains("config_path"));
    assert!(ws.is_null());

    let missing = CString::new("/nonexistent/cfg.json").unwrap();
    let st = unsafe { mre_workspace_open(missing.as_ptr(), ptr::null(), false, 0, &mut ws) };
    assert_eq!(st, MreStatus::Config);

    assert_eq!(unsafe { mre_surrogate_modes(ptr::null()) }, 0);
    unsafe {
        mre_workspace_free(ptr::null_mut());
        mre_surrogate_free(ptr::null_mut());
        mre_rectified_free(ptr::null_mut());
    }
}

#[test]
fn staged_run_matches_library() {
    let (_tmp, cfg, out) = setup();
    let mut ws = ptr::null_mut();
    let st = unsafe { mre_workspace_open(c(&cfg).as_ptr(), c(&out).as_ptr(), false, 0, &mut ws) };
    assert_eq!(st, MreStatus::Ok);
    assert_eq!(unsafe { mre_workspace_run(ws, MreStage::Infer, ptr::null()) }, MreStatus::PipelineOrder);
    for stage in [MreStage::Simulate, MreStage::Infer, MreStage::TrainSurrogate, MreStage::Predict, MreStage::Report] {
        assert_eq!(unsafe { mre_workspace_run(ws, stage, ptr::null()) }, MreStatus::Ok, "{stage:?}");
    }
    unsafe { mre_workspace_free(ws) };

    let sur_path = out.join("noise_0/surrogate.json");
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { mre_surrogate_load(c(&sur_path).as_ptr(), &mut s) }, MreStatus::Ok);
    assert_eq!(unsafe { mre_surrogate_modes(s) }, 2);
    let art: SurrogateArtifact = read_json(&sur_path).unwrap();
    let lib = art.to_surrogate().unwrap();
    let (q, qd) = ([1e-4, -2e-5], [3e-3, 1e-3]);
    let mut eta = [0.0; 2];
    assert_eq!(
        unsafe { mre_surrogate_evaluate(s, q.as_ptr(), qd.as_ptr(), 2, eta.as_mut_ptr()) },
        MreStatus::Ok
    );
    let want = lib.evaluate(&DVector::from_vec(vec![q[0], q[1], qd[0], qd[1]]));
    assert_eq!(eta.as_slice(), want.as_slice());
    assert_eq!(
        unsafe { mre_surrogate_evaluate(s, q.as_ptr(), qd.as_ptr(), 3, eta.as_mut_ptr()) },
        MreStatus::InvalidArgument
    );

    let basis_path = out.join("basis.json");
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { mre_rectified_new(c(&basis_path).as_ptr(), s, &mut r) }, MreStatus::Ok);
    unsafe { mre_surrogate_free(s) };
    let steps = 50;
    let p = DMatrix::from_fn(2, steps, |i, k| 1e3 * ((k as f64) * 0.1 + i as f64).sin());
    let mut got = vec![0.0; 2 * steps];
    let mut extrap = -1.0;
    let st = unsafe {
        mre_rectified_predict(r, p.as_slice().as_ptr(), 2, steps, 0.002, 10, got.as_mut_ptr(), &mut extrap)
    };
    assert_eq!(st, MreStatus::Ok);
    unsafe { mre_rectified_free(r) };
    let basis = read_json::<BasisArtifact>(&basis_path).unwrap().to_basis().unwrap();
    let pred = predict(&basis, &lib, &p, 0.002, 10).unwrap();
    assert_eq!(got.as_slice(), pred.q.as_slice());
    assert_eq!(extrap, pred.extrapolation_fraction);

    // the handle API and the library agree on the staged artifacts too
    let lib_ws = Workspace::new(ExperimentConfig::load(&cfg).unwrap(), Some(out.clone()), None).unwrap();
    assert!(lib_ws.run(Stage::Report, None).is_ok());
}

#[test]
fn header_compiles_and_links_from_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let syntax = Command::new(&cc)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/smoke.c"))
        .status()
        .unwrap();
    assert!(syntax.success());
    // linking needs the static library, which `cargo build` produces
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib_dir = deps.parent().unwrap();
    let lib = lib_dir.join("libmre.a");
    if !lib.is_file() {
        eprintln!("{} not built; link step skipped", lib.display());
        return;
    }
    let (tmp, cfg, out) = setup();
    let exe = tmp.path().join("smoke");
    let status = Command::new(&cc)
        .arg(crate_dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&exe).arg(&cfg).arg(&out).output().unwrap();
    assert!(run.status.success(), "{:?} {}", run.status, String::from_utf8_lossy(&run.stderr));
    assert!(out.join("manifest.json").is_file());
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
