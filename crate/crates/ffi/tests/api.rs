use std::ffi::{CStr, CString};
use std::ptr;

use fldisc_ffi::*;

fn scenario(map: &str, lifted: bool, h: f64) -> *mut FldScenario {
    let preset = CString::new("unicycle").unwrap();
    let map = CString::new(map).unwrap();
    let mut s = ptr::null_mut();
    let status = unsafe { fld_scenario_new(preset.as_ptr(), map.as_ptr(), lifted, h, &mut s) };
    assert_eq!(status, FldStatus::Ok);
    assert!(!s.is_null());
    s
}

fn last_error() -> String {
    let p = fld_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn dimensions_and_initial_state() {
    let s = scenario("explicit-euler", true, 0.01);
    let (mut d, mut m) = (0usize, 0usize);
    unsafe {
        assert_eq!(fld_scenario_dims(s, &mut d, &mut m), FldStatus::Ok);
        assert_eq!((d, m), (5, 2));
        let mut xi = [0.0; 5];
        assert_eq!(fld_scenario_initial_state(s, xi.as_mut_ptr(), xi.len()), FldStatus::Ok);
        assert_eq!(xi, [0.5, 0.2, 0.1, 0.2, 0.0]);
        fld_scenario_free(s);
    }
}

#[test]
fn step_phi_and_inverse() {
    let s = scenario("explicit-euler", true, 0.01);
    let xi0 = [0.5, 0.2, 0.1, 0.2, 0.0];
    let mut next = [0.0; 5];
    let mut z = [0.0; 5];
    let mut back = [0.0; 5];
    unsafe {
        assert_eq!(
            fld_scenario_step(s, xi0.as_ptr(), 5, [0.0, 0.0].as_ptr(), 2, next.as_mut_ptr(), 5),
            FldStatus::Ok
        );
        assert!((next[0] - 0.502401).abs() < 1e-14);
        assert_eq!(fld_scenario_phi(s, xi0.as_ptr(), 5, z.as_mut_ptr(), 5), FldStatus::Ok);
        assert!((z[0] - 0.46).abs() < 1e-15);
        assert_eq!(fld_scenario_phi_inverse(s, z.as_ptr(), 5, back.as_mut_ptr(), 5), FldStatus::Ok);
        assert!(back.iter().zip(&xi0).all(|(a, b)| (a - b).abs() < 1e-14));
        fld_scenario_free(s);
    }
}

#[test]
fn closed_loop_run_and_linearity() {
    let s = scenario("explicit-euler", true, 0.01);
    let mut states = vec![0.0; 1001 * 5];
    let (mut steps, mut err, mut residual) = (0usize, 0.0, 1.0);
    unsafe {
        assert_eq!(
            fld_scenario_simulate(s, 10.0, states.as_mut_ptr(), states.len(), &mut steps, &mut err),
            FldStatus::Ok
        );
        assert_eq!(fld_scenario_linearity_residual(s, 1000, &mut residual), FldStatus::Ok);
        fld_scenario_free(s);
    }
    assert_eq!(steps, 1000);
    assert!((1e-3..1e-1).contains(&err));
    let last = &states[1000 * 5..];
    assert!(last.iter().map(|x| x * x).sum::<f64>().sqrt() < 0.05 * 0.5831);
    assert!(residual <= 1e-9);
}

#[test]
fn audits_report_verdicts() {
    for (lifted, expected) in [(false, FldVerdict::NotLinearizable), (true, FldVerdict::LinearizableConsistent)] {
        let s = scenario("explicit-euler", lifted, 0.01);
        let mut verdict = FldVerdict::Inconclusive;
        let mut json = ptr::null_mut();
        unsafe {
            assert_eq!(fld_scenario_audit(s, 1, &mut verdict, &mut json), FldStatus::Ok);
            assert!(!json.is_null());
            assert!(CStr::from_ptr(json).to_str().unwrap().contains("\"verdict\""));
            fld_string_free(json);
            fld_scenario_free(s);
        }
        assert_eq!(verdict, expected);
    }
}

#[test]
fn errors_are_reported_with_codes() {
    let preset = CString::new("unicycle").unwrap();
    let bad_map = CString::new("rk4").unwrap();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(
            fld_scenario_new(preset.as_ptr(), bad_map.as_ptr(), false, 0.01, &mut s),
            FldStatus::InvalidArgument
        );
        assert!(s.is_null());
        assert!(last_error().contains("rk4"));
        assert_eq!(
            fld_scenario_new(ptr::null(), bad_map.as_ptr(), false, 0.01, &mut s),
            FldStatus::NullPointer
        );
    }
    let s = scenario("explicit-euler", false, 0.01);
    let mut mu = [0.0; 2];
    unsafe {
        let singular = [0.0, 0.0, 0.0, 1.0, 1.0];
        assert_eq!(
            fld_scenario_feedback(s, singular.as_ptr(), 5, [1.0, 0.0].as_ptr(), 2, mu.as_mut_ptr(), 2),
            FldStatus::Singular
        );
        assert_eq!(
            fld_scenario_feedback(s, singular.as_ptr(), 4, [1.0, 0.0].as_ptr(), 2, mu.as_mut_ptr(), 2),
            FldStatus::Dimension
        );
        assert!(last_error().contains("expected 5"));
        fld_scenario_free(s);
        fld_scenario_free(ptr::null_mut());
    }
}

#[test]
fn version_and_header() {
    let v = unsafe { CStr::from_ptr(fld_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/fldisc.h")).unwrap();
    for name in [
        "fld_scenario_new",
        "fld_scenario_step",
        "fld_scenario_audit",
        "fld_last_error",
        "FLD_STATUS_SINGULAR",
        "typedef struct FldScenario FldScenario",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
