use reliable_fw_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn cs(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = rfw_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(pairs: &[(&str, &str)]) -> *mut RfwConfig {
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(rfw_config_new(&mut c), RfwStatus::Ok);
        for (k, v) in pairs {
            assert_eq!(rfw_config_set(c, cs(k).as_ptr(), cs(v).as_ptr()), RfwStatus::Ok, "{k}={v}");
        }
    }
    c
}

#[test]
fn builtin_problem_round_trip() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(rfw_problem_new(cs("quad-box").as_ptr(), 3, 0, 7, &mut p), RfwStatus::Ok);
        assert_eq!(rfw_problem_dim(p), 3);
        assert_eq!(rfw_problem_constraints(p), 6);
        let c = config(&[("variant", "convex-deterministic"), ("horizon", "40"), ("seed", "3")]);
        let mut r = ptr::null_mut();
        assert_eq!(rfw_run(p, c, &mut r), RfwStatus::Ok);

        let mut s = RfwRunStats::default();
        assert_eq!(rfw_run_stats(r, &mut s), RfwStatus::Ok);
        assert_eq!(s.horizon, 40);
        assert_eq!(s.iterations, 40);
        assert_eq!(s.sfo_count, 40);
        assert!(s.nfo_count > 0.0);
        assert!(s.f_out.is_finite());

        let mut x = [0.0; 3];
        assert_eq!(rfw_run_x_out(r, x.as_mut_ptr(), 3), RfwStatus::Ok);
        let mut xt = [0.0; 3];
        assert_eq!(rfw_run_iterate(r, s.t0, xt.as_mut_ptr(), 3), RfwStatus::Ok);
        assert_eq!(x, xt);

        let mut small = [0.0; 2];
        assert_eq!(rfw_run_x_out(r, small.as_mut_ptr(), 2), RfwStatus::BufferTooSmall);
        assert_eq!(rfw_run_iterate(r, 40, xt.as_mut_ptr(), 3), RfwStatus::InvalidArgument);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let path_c = cs(path.to_str().unwrap());
        assert_eq!(rfw_run_write_trace(r, path_c.as_ptr()), RfwStatus::Ok);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,eta,rho,n_t,N_t,f"));
        assert_eq!(text.lines().count(), 41);

        rfw_run_free(r);
        rfw_config_free(c);
        rfw_problem_free(p);
    }
}

#[test]
fn custom_quadratic_over_a_triangle() {
    // x ≥ 0, y ≥ 0, x + y ≤ 1 with the target outside the hypotenuse
    let a = [-1.0, 0.0, 0.0, -1.0, 1.0, 1.0];
    let b = [0.0, 0.0, 1.0];
    let center = [1.0, 1.0];
    let x0 = [0.2, 0.2];
    unsafe {
        let mut p = ptr::null_mut();
        let st = rfw_problem_quadratic(a.as_ptr(), b.as_ptr(), 3, 2, center.as_ptr(), x0.as_ptr(), &mut p);
        assert_eq!(st, RfwStatus::Ok);
        let c = config(&[("variant", "4"), ("horizon", "200"), ("sigma", "0.001")]);
        let mut r = ptr::null_mut();
        assert_eq!(rfw_run(p, c, &mut r), RfwStatus::Ok);
        let mut x = [0.0; 2];
        assert_eq!(rfw_run_x_out(r, x.as_mut_ptr(), 2), RfwStatus::Ok);
        // minimiser is (0.5, 0.5); the iterates approach it from inside
        assert!((x[0] - 0.5).abs() < 0.1 && (x[1] - 0.5).abs() < 0.1, "{x:?}");
        assert!(x[0] + x[1] <= 1.0 + 1e-6);
        rfw_run_free(r);
        rfw_config_free(c);
        rfw_problem_free(p);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(rfw_problem_new(cs("nope").as_ptr(), 2, 4, 0, &mut p), RfwStatus::UnknownName);
        assert!(last_error().contains("nope"));
        assert!(p.is_null());
        assert_eq!(rfw_problem_new(ptr::null(), 2, 4, 0, &mut p), RfwStatus::NullPointer);

        let c = config(&[]);
        assert_eq!(rfw_config_set(c, cs("eps").as_ptr(), cs("abc").as_ptr()), RfwStatus::Config);
        assert_eq!(rfw_config_set(c, cs("colour").as_ptr(), cs("red").as_ptr()), RfwStatus::Config);
        assert_eq!(rfw_config_set(c, cs("trials").as_ptr(), cs("3").as_ptr()), RfwStatus::Config);
        assert_eq!(rfw_config_set(c, cs("variant").as_ptr(), cs("fast").as_ptr()), RfwStatus::UnknownName);

        // start point on the boundary
        let a = [1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0];
        let b = [1.0, 0.0, 1.0, 0.0];
        let x0 = [1.0, 0.5];
        let center = [2.0, 0.5];
        assert_eq!(
            rfw_problem_quadratic(a.as_ptr(), b.as_ptr(), 4, 2, center.as_ptr(), x0.as_ptr(), &mut p),
            RfwStatus::Ok
        );
        assert_eq!(rfw_config_set(c, cs("horizon").as_ptr(), cs("5").as_ptr()), RfwStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(rfw_run(p, c, &mut r), RfwStatus::InfeasibleStart);
        assert!(r.is_null());
        assert_eq!(rfw_run(ptr::null(), c, &mut r), RfwStatus::NullPointer);

        // mismatched shapes are caught before any solve
        let bad = [1.0, 2.0];
        assert_eq!(
            rfw_problem_quadratic(bad.as_ptr(), b.as_ptr(), 0, 2, center.as_ptr(), x0.as_ptr(), &mut p),
            RfwStatus::InvalidArgument
        );

        rfw_problem_free(p);
        rfw_config_free(c);
        rfw_problem_free(ptr::null_mut());
        rfw_run_free(ptr::null_mut());
    }
}

#[test]
fn status_messages_are_static_strings() {
    for s in [RfwStatus::Ok, RfwStatus::Numerical, RfwStatus::Panic] {
        let m = unsafe { CStr::from_ptr(rfw_status_message(s)) };
        assert!(!m.to_bytes().is_empty());
    }
    let v = unsafe { CStr::from_ptr(rfw_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
