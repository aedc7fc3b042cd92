use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use greenwood_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(gw_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn build(spec: &str, ns: &[usize], c: f64, side: GwSide, m: usize) -> *mut GwQuantileTable {
    let mut table = ptr::null_mut();
    let status = unsafe { gw_table_build(cstr(spec).as_ptr(), ns.as_ptr(), ns.len(), c, side, m, 1, &mut table) };
    assert_eq!(status, GwStatus::Ok, "{}", last_error());
    table
}

#[test]
fn statistics() {
    let mut s = 0.0;
    let x = [1.0, -1.0, 2.0];
    assert_eq!(unsafe { gw_modified_greenwood(x.as_ptr(), 3, &mut s) }, GwStatus::Ok);
    assert_eq!(s, 0.375);
    assert_eq!(
        unsafe { gw_classical_greenwood(x.as_ptr(), 3, &mut s) },
        GwStatus::InvalidSample
    );
    assert!(last_error().contains("positive"));
    assert_eq!(
        unsafe { gw_modified_greenwood(ptr::null(), 3, &mut s) },
        GwStatus::NullPointer
    );
    assert_eq!(
        unsafe { gw_modified_greenwood(x.as_ptr(), 3, ptr::null_mut()) },
        GwStatus::NullPointer
    );
    assert_eq!(
        unsafe { gw_modified_greenwood(x.as_ptr(), 1, &mut s) },
        GwStatus::InvalidSample
    );
    let y = [4.0; 8];
    assert_eq!(unsafe { gw_classical_greenwood(y.as_ptr(), 8, &mut s) }, GwStatus::Ok);
    assert_eq!(s, 0.125);
}

#[test]
fn sampling_is_reproducible() {
    let (mut a, mut b) = ([0.0; 64], [0.0; 64]);
    let spec = cstr("t(3)");
    unsafe {
        assert_eq!(gw_sample(spec.as_ptr(), 4, 2, a.as_mut_ptr(), 64), GwStatus::Ok);
        assert_eq!(gw_sample(spec.as_ptr(), 4, 2, b.as_mut_ptr(), 64), GwStatus::Ok);
    }
    assert_eq!(a, b);
    let bad = cstr("cauchy(1)");
    assert_eq!(
        unsafe { gw_sample(bad.as_ptr(), 4, 2, a.as_mut_ptr(), 64) },
        GwStatus::InvalidArgument
    );
}

#[test]
fn table_handles() {
    let table = build("gpd(0.5)", &[30, 60], 0.05, GwSide::Lower, 2000);
    assert_eq!(unsafe { gw_table_len(table) }, 2);
    let mut v = 0.0;
    let spec = cstr("gpd(0.5,3)");
    assert_eq!(
        unsafe { gw_table_critical_value(table, spec.as_ptr(), 30, 0.05, GwSide::Lower, &mut v) },
        GwStatus::Ok
    );
    assert!(v > 1.0 / 30.0 && v < 1.0);
    assert_eq!(
        unsafe { gw_table_critical_value(table, spec.as_ptr(), 31, 0.05, GwSide::Lower, &mut v) },
        GwStatus::MissingEntry
    );
    assert!(last_error().contains("n=31"), "{}", last_error());

    let dir = tempfile::tempdir().unwrap();
    let path = cstr(dir.path().join("t.json").to_str().unwrap());
    assert_eq!(unsafe { gw_table_save(table, path.as_ptr()) }, GwStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { gw_table_load(path.as_ptr(), &mut loaded) }, GwStatus::Ok);
    let mut w = 0.0;
    unsafe { gw_table_critical_value(loaded, spec.as_ptr(), 30, 0.05, GwSide::Lower, &mut w) };
    assert_eq!(v, w);

    let missing = cstr(dir.path().join("none.json").to_str().unwrap());
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { gw_table_load(missing.as_ptr(), &mut none) }, GwStatus::Io);
    assert!(none.is_null());
    assert_eq!(unsafe { gw_table_len(ptr::null()) }, 0);
    unsafe {
        gw_table_free(table);
        gw_table_free(loaded);
        gw_table_free(ptr::null_mut());
    }
}

#[test]
fn running_tests() {
    let table = build("stable(1.5)", &[40], 0.025, GwSide::Lower, 2000);
    let upper = build("stable(1.5)", &[40], 0.025, GwSide::Upper, 2000);
    let mut hi = 0.0;
    let spec = cstr("stable(1.5)");
    unsafe { gw_table_critical_value(upper, spec.as_ptr(), 40, 0.025, GwSide::Upper, &mut hi) };

    let mut x = [0.0; 40];
    unsafe { gw_sample(spec.as_ptr(), 3, 0, x.as_mut_ptr(), 40) };
    let mut r = GwTestResult {
        statistic: 0.0,
        lower_threshold: 0.0,
        upper_threshold: 0.0,
        n: 0,
        reject: false,
    };
    // The table lacks the upper entry the two-sided test also needs.
    let status = unsafe {
        gw_test_run(
            table,
            GwTestKind::MgTwoSided,
            spec.as_ptr(),
            0.05,
            x.as_ptr(),
            40,
            &mut r,
        )
    };
    assert_eq!(status, GwStatus::MissingEntry);
    let status = unsafe { gw_test_run(table, GwTestKind::MgTwoSided, ptr::null(), 0.05, x.as_ptr(), 40, &mut r) };
    assert_eq!(status, GwStatus::NullPointer);

    let y = [1.0, -1.0].repeat(20);
    let status = unsafe {
        gw_test_run(
            ptr::null(),
            GwTestKind::JarqueBera,
            ptr::null(),
            0.05,
            y.as_ptr(),
            40,
            &mut r,
        )
    };
    assert_eq!(status, GwStatus::Ok, "{}", last_error());
    assert!(r.lower_threshold.is_nan() && r.upper_threshold > 0.0 && r.n == 40);
    let status = unsafe { gw_test_run(ptr::null(), GwTestKind::Mg2, ptr::null(), 0.05, y.as_ptr(), 40, &mut r) };
    assert_eq!(status, GwStatus::InvalidArgument);
    let status = unsafe { gw_test_run(ptr::null(), GwTestKind::Mg2, ptr::null(), 1.5, y.as_ptr(), 40, &mut r) };
    assert_eq!(status, GwStatus::InvalidArgument);
    unsafe {
        gw_table_free(table);
        gw_table_free(upper);
    }
}

#[test]
fn static_strings() {
    let v = unsafe { CStr::from_ptr(gw_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let s = unsafe { CStr::from_ptr(gw_status_string(GwStatus::MissingEntry)) };
    assert_eq!(s.to_str().unwrap(), "missing quantile table entry");
}

fn target_dir() -> PathBuf {
    // .../target/<profile>/deps/c_abi-<hash>
    std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf()
}

#[test]
fn c_program_links_against_the_header() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libgreenwood_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
}
