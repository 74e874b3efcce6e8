use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use hybridproj_ffi::*;

fn last_error() -> String {
    let p = hp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn section4(n: usize, m: usize) -> *mut HpProblem {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { hp_problem_section4(n, m, &mut p) }, HpStatus::Ok);
    assert!(!p.is_null());
    p
}

fn solve(p: *const HpProblem) -> *mut HpReport {
    let mut r = ptr::null_mut();
    let status = unsafe { hp_solve(p, &mut r) };
    assert_eq!(status, HpStatus::Ok, "{}", last_error());
    r
}

fn final_x(r: *const HpReport) -> Vec<f64> {
    let mut x = vec![0.0; unsafe { hp_report_dim(r) }];
    assert_eq!(unsafe { hp_report_x(r, x.as_mut_ptr(), x.len()) }, HpStatus::Ok);
    x
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(hp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn section4_budget_run() {
    let p = section4(50, 60);
    unsafe {
        assert_eq!(hp_problem_dim(p), 1);
        assert_eq!(hp_problem_set_max_iter(p, 40), HpStatus::Ok);
        let r = solve(p);
        assert_eq!(hp_report_iterations(r), 40);
        assert_eq!(hp_report_stop_reason(r), HpStopReason::Budget);
        assert_eq!(hp_report_history_len(r), 40);
        let x = final_x(r);
        let xi1 = -1.0 + 2.0 / 51.0;
        assert!(x[0] > xi1 && x[0] < 1.0, "{x:?}");
        assert!(hp_report_wall_time_ms(r) >= 0.0);

        let mut row = [0.0; 4];
        assert_eq!(hp_report_history_row(r, 39, row.as_mut_ptr()), HpStatus::Ok);
        assert!((row[0] - x[0].abs()).abs() < 1e-15);
        assert_eq!(hp_report_history_row(r, 40, row.as_mut_ptr()), HpStatus::InvalidArgument);

        let s = hp_report_summary_json(r);
        let json: serde_json::Value = serde_json::from_str(CStr::from_ptr(s).to_str().unwrap()).unwrap();
        hp_string_free(s);
        assert_eq!(json["iterations"], 40);
        assert_eq!(json["stop_reason"], "budget");
        assert_eq!(json["problem"], "section4");

        hp_report_free(r);
        hp_problem_free(p);
    }
}

#[test]
fn workers_do_not_change_the_iterate() {
    let p = section4(200, 300);
    let xs: Vec<Vec<f64>> = [1usize, 2, 8]
        .iter()
        .map(|&w| unsafe {
            assert_eq!(hp_problem_set_max_iter(p, 30), HpStatus::Ok);
            assert_eq!(hp_problem_set_workers(p, w), HpStatus::Ok);
            let r = solve(p);
            let x = final_x(r);
            hp_report_free(r);
            x
        })
        .collect();
    unsafe { hp_problem_free(p) };
    assert!(xs.iter().all(|x| x[0].to_bits() == xs[0][0].to_bits()), "{xs:?}");
}

#[test]
fn affine_problem_reaches_its_solution() {
    let cfg = r#"{
        "problem": {"preset": "cor2", "parts": {
            "base": {"type": "interval", "lo": -1.0, "hi": 1.0},
            "operators": [{"type": "affine", "scale": 1.0, "shift": [0.5]}],
            "maps": [{"map": {"type": "identity"}}]
        }},
        "x0": [0.9],
        "schedule": {"r": {"type": "constant", "value": 0.5}},
        "max_iter": 500
    }"#;
    let cfg = CString::new(cfg).unwrap();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(hp_problem_from_json(cfg.as_ptr(), &mut p), HpStatus::Ok, "{}", last_error());
        assert_eq!(hp_problem_stop_at_solution(p, 1e-6), HpStatus::Ok, "{}", last_error());
        let r = solve(p);
        assert_eq!(hp_report_stop_reason(r), HpStopReason::Reference);
        assert!((final_x(r)[0] - 0.5).abs() <= 1e-6);
        hp_report_free(r);
        hp_problem_free(p);
    }
}

#[test]
fn x0_and_mode_setters() {
    let p = section4(10, 10);
    unsafe {
        let bad = [0.0, 0.0];
        assert_eq!(hp_problem_set_x0(p, bad.as_ptr(), 2), HpStatus::InvalidArgument);
        assert!(last_error().contains("x0"));
        let x0 = [-1.0];
        assert_eq!(hp_problem_set_x0(p, x0.as_ptr(), 1), HpStatus::Ok);
        assert_eq!(hp_problem_set_mode(p, HpMode::Algorithm1), HpStatus::Ok);
        assert_eq!(hp_problem_set_max_iter(p, 0), HpStatus::Ok);
        let r = solve(p);
        assert_eq!(final_x(r), vec![-1.0]);
        assert_eq!(hp_report_iterations(r), 0);
        hp_report_free(r);
        hp_problem_free(p);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(hp_problem_from_json(ptr::null(), &mut p), HpStatus::NullPointer);
        assert_eq!(hp_problem_section4(0, 0, ptr::null_mut()), HpStatus::NullPointer);

        let unknown = CString::new(r#"{"problem": {"preset": "section4", "n_ops": 2, "n_maps": 2}, "bogus": 1}"#).unwrap();
        assert_eq!(hp_problem_from_json(unknown.as_ptr(), &mut p), HpStatus::InvalidConfig);
        assert!(last_error().contains("bogus"));
        assert!(p.is_null());

        let empty = CString::new(r#"{"problem": {"preset": "section4", "n_ops": 0, "n_maps": 3}}"#).unwrap();
        assert_ne!(hp_problem_from_json(empty.as_ptr(), &mut p), HpStatus::Ok);
        assert!(p.is_null());

        let p = section4(5, 5);
        assert_eq!(hp_problem_stop_at_residual(p, -1.0), HpStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(hp_solve(p, &mut r), HpStatus::InvalidConfig);
        assert!(r.is_null());
        let mut x = [0.0; 3];
        assert_eq!(hp_report_x(ptr::null(), x.as_mut_ptr(), 3), HpStatus::NullPointer);
        assert_eq!(hp_problem_set_max_iter(ptr::null_mut(), 3), HpStatus::NullPointer);
        hp_problem_free(p);
        hp_problem_free(ptr::null_mut());
        hp_report_free(ptr::null_mut());
        hp_string_free(ptr::null_mut());
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

fn include_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = include_dir().join("hybridproj.h");
    for (cc, lang) in [("cc", "c"), ("c++", "c++")] {
        let out = Command::new(cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&header)
            .output()
            .expect("C compiler available");
        assert!(out.status.success(), "{cc}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn c_program_links_against_staticlib() {
    let lib = target_dir().join("libhybridproj_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(include_dir())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(summary["iterations"], 25);
}
