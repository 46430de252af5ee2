use std::ffi::{CStr, CString};
use std::ptr;

use contend_ffi::*;

fn last_error() -> String {
    let p = contend_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn bundled(name: &str) -> *mut ContendScenario {
    let name = CString::new(name).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { contend_scenario_bundled(name.as_ptr(), &mut s) },
        CONTEND_OK
    );
    s
}

#[test]
fn matrix_m_round_trip_through_handles() {
    let s = bundled("matrix_m");
    let (mut n, mut k) = (0usize, 0usize);
    unsafe {
        assert_eq!(contend_scenario_num_apps(s, &mut n), CONTEND_OK);
        assert_eq!(contend_scenario_num_resources(s, &mut k), CONTEND_OK);
    }
    assert_eq!((n, k), (5, 5));

    let mut t = ptr::null_mut();
    assert_eq!(unsafe { contend_run(s, 3, 7, &mut t) }, CONTEND_OK);
    let mut periods = 0usize;
    assert_eq!(
        unsafe { contend_trace_num_periods(t, &mut periods) },
        CONTEND_OK
    );
    assert_eq!(periods, 3);
    let held: Vec<i64> = (0..5)
        .map(|a| {
            let mut r = -2;
            assert_eq!(
                unsafe { contend_trace_assignment(t, 2, a, &mut r) },
                CONTEND_OK
            );
            r
        })
        .collect();
    assert_eq!(held, vec![1, 1, 0, 4, 4]);
    let mut revenue = 0.0;
    assert_eq!(
        unsafe { contend_trace_revenue(t, &mut revenue) },
        CONTEND_OK
    );
    assert!(revenue > 0.0);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("t.csv").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { contend_trace_write(t, path.as_ptr(), CONTEND_FORMAT_TABLE) },
        CONTEND_OK
    );
    let table = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 3 * 5);
    assert_eq!(
        unsafe { contend_trace_write(t, path.as_ptr(), 9) },
        CONTEND_ERR_RANGE
    );

    unsafe {
        contend_trace_free(t);
        contend_scenario_free(s);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { contend_scenario_parse(ptr::null(), &mut s) },
        CONTEND_ERR_NULL
    );
    assert!(last_error().contains("source"));

    let bad = CString::new("[[resources]]\nid = \"a\"\nslots = 0\n\n[[applications]]\nid = \"x\"\n[[applications.phases]]\nperiods = 1\nvaluations = { a = 1.0 }\n").unwrap();
    assert_eq!(
        unsafe { contend_scenario_parse(bad.as_ptr(), &mut s) },
        CONTEND_ERR_INVALID
    );
    assert!(last_error().contains("slots ≥ 1"), "{}", last_error());
    assert!(s.is_null());

    let garbage = CString::new("resources = 3").unwrap();
    assert_eq!(
        unsafe { contend_scenario_parse(garbage.as_ptr(), &mut s) },
        CONTEND_ERR_PARSE
    );

    let missing = CString::new("/nonexistent/scenario.toml").unwrap();
    assert_eq!(
        unsafe { contend_scenario_load(missing.as_ptr(), &mut s) },
        CONTEND_ERR_IO
    );

    let nope = CString::new("nope").unwrap();
    assert_eq!(
        unsafe { contend_scenario_bundled(nope.as_ptr(), &mut s) },
        CONTEND_ERR_RANGE
    );

    let t = bundled("hmmer_mcf");
    let mut trace = ptr::null_mut();
    assert_eq!(unsafe { contend_run(t, 2, 0, &mut trace) }, CONTEND_OK);
    let mut r = 0;
    assert_eq!(
        unsafe { contend_trace_assignment(trace, 5, 0, &mut r) },
        CONTEND_ERR_RANGE
    );
    assert_eq!(
        unsafe { contend_trace_assignment(trace, 0, 2, &mut r) },
        CONTEND_ERR_RANGE
    );
    unsafe {
        contend_trace_free(trace);
        contend_scenario_free(t);
        contend_trace_free(ptr::null_mut());
    }
}

#[test]
fn brute_force_and_equilibrium() {
    let values = [
        1.9, 1.7, 1.5, 1.0, 0.9, //
        1.6, 1.3, 1.1, 0.8, 0.7, //
        1.4, 1.0, 0.6, 0.5, 0.4, //
        0.3, 0.6, 0.9, 1.2, 1.4, //
        0.7, 0.8, 1.1, 1.4, 1.7,
    ];
    let slots = [1u32, 2, 4, 8, 16];
    let mut assignment = [0i64; 5];
    let mut total = 0.0;
    let rc = unsafe {
        contend_brute_force(
            values.as_ptr(),
            5,
            5,
            slots.as_ptr(),
            assignment.as_mut_ptr(),
            &mut total,
        )
    };
    assert_eq!(rc, CONTEND_OK);
    assert!((total - 7.5).abs() < 1e-9);
    assert_eq!(assignment[2], 0);

    let mut b = 0.0;
    assert_eq!(
        unsafe { contend_equilibrium_bid(5, 2, 0.8, &mut b) },
        CONTEND_OK
    );
    assert!((b - 0.6).abs() < 1e-12);
    assert_eq!(
        unsafe { contend_equilibrium_bid(2, 2, 0.8, &mut b) },
        CONTEND_ERR_RANGE
    );
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(contend_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
