use std::f64::consts::PI;
use std::ffi::CStr;
use std::ptr;

use fracpme_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(fracpme_last_error()) }.to_string_lossy().into_owned()
}

fn gaussian(n: usize) -> Vec<f64> {
    (0..n).map(|i| (-(2.0 * PI * i as f64 / n as f64 - PI).powi(2)).exp()).collect()
}

fn params(m: f64, k: usize) -> FracpmeParams {
    FracpmeParams { gamma: 0.5, s: 0.5, m, a: 0.0, t_final: 1.0, k }
}

unsafe fn solve(p: &FracpmeParams, w0: &[f64]) -> (FracpmeStatus, *mut FracpmeHistory) {
    let mut h = ptr::null_mut();
    let status = fracpme_solve(p, 1, w0.len(), 2.0 * PI, w0.as_ptr(), w0.len(), ptr::null(), 0, &mut h);
    (status, h)
}

#[test]
fn mittag_leffler_matches_library() {
    let mut out = 0.0;
    let status = unsafe { fracpme_mittag_leffler(0.5, -1.0, &mut out) };
    assert_eq!(status, FracpmeStatus::Ok);
    assert_eq!(out, fracpme::fracops::mittag_leffler(0.5, -1.0).unwrap());
    assert_eq!(unsafe { fracpme_mittag_leffler(0.5, 1.0, &mut out) }, FracpmeStatus::OutOfRange);
    assert!(last_error().contains("argument"));
    assert_eq!(unsafe { fracpme_mittag_leffler(0.5, -1.0, ptr::null_mut()) }, FracpmeStatus::NullPointer);
}

#[test]
fn solve_round_trip_matches_core() {
    let w0 = gaussian(64);
    let p = params(2.0, 20);
    let (status, h) = unsafe { solve(&p, &w0) };
    assert_eq!(status, FracpmeStatus::Ok, "{}", last_error());
    let grid = fracpme::Grid::new(1, 64, 2.0 * PI).unwrap();
    let core = fracpme::stepper::solve(
        &fracpme::Params::new(0.5, 0.5, 2.0, 0.0, 1.0, 20).unwrap(),
        &fracpme::Field::new(&grid, w0.clone()).unwrap(),
        None,
    )
    .unwrap();
    unsafe {
        assert_eq!(fracpme_history_len(h), 21);
        assert_eq!(fracpme_history_field_len(h), 64);
        let mut buf = vec![0.0; 64];
        for j in [0, 7, 20] {
            assert_eq!(fracpme_history_copy_step(h, j, buf.as_mut_ptr(), 64), FracpmeStatus::Ok);
            assert_eq!(buf.as_slice(), core.field(j).values());
        }
        let (mut t, mut m0, mut m) = (0.0, 0.0, 0.0);
        assert_eq!(fracpme_history_mass(h, 0, &mut t, &mut m0), FracpmeStatus::Ok);
        assert_eq!(fracpme_history_mass(h, 20, &mut t, &mut m), FracpmeStatus::Ok);
        assert_eq!(t, 1.0);
        assert!((m - m0).abs() < 1e-10);
        assert_eq!(fracpme_history_copy_step(h, 21, buf.as_mut_ptr(), 64), FracpmeStatus::OutOfRange);
        assert_eq!(fracpme_history_copy_step(h, 0, buf.as_mut_ptr(), 63), FracpmeStatus::InvalidArgument);
        fracpme_history_free(h);
    }
}

#[test]
fn invalid_inputs_report_status() {
    let w0 = gaussian(32);
    unsafe {
        let (status, h) = solve(&params(1.0, 0), &w0);
        assert_eq!(status, FracpmeStatus::InvalidArgument);
        assert!(h.is_null());
        assert!(last_error().contains("k must be"));

        let mut h = ptr::null_mut();
        let p = params(1.0, 4);
        let status = fracpme_solve(&p, 1, 32, 2.0 * PI, w0.as_ptr(), 31, ptr::null(), 0, &mut h);
        assert_eq!(status, FracpmeStatus::InvalidArgument);
        let status = fracpme_solve(&p, 1, 32, 2.0 * PI, ptr::null(), 32, ptr::null(), 0, &mut h);
        assert_eq!(status, FracpmeStatus::NullPointer);
        let status = fracpme_solve(ptr::null(), 1, 32, 2.0 * PI, w0.as_ptr(), 32, ptr::null(), 0, &mut h);
        assert_eq!(status, FracpmeStatus::NullPointer);
        let forcing = vec![0.0; 3 * 32];
        let status = fracpme_solve(&p, 1, 32, 2.0 * PI, w0.as_ptr(), 32, forcing.as_ptr(), forcing.len(), &mut h);
        assert_eq!(status, FracpmeStatus::InvalidArgument);

        assert_eq!(fracpme_history_len(ptr::null()), 0);
        fracpme_history_free(ptr::null_mut());
    }
}

#[test]
fn forcing_enters_the_mass() {
    let n = 32;
    let k = 8;
    let w0 = vec![0.0; n];
    let forcing = vec![1.0; k * n];
    let p = FracpmeParams { gamma: 0.5, s: 0.5, m: 1.0, a: 0.0, t_final: 1.0, k };
    unsafe {
        let mut h = ptr::null_mut();
        let status = fracpme_solve(&p, 1, n, 2.0 * PI, w0.as_ptr(), n, forcing.as_ptr(), forcing.len(), &mut h);
        assert_eq!(status, FracpmeStatus::Ok, "{}", last_error());
        let (mut t, mut m) = (0.0, 0.0);
        assert_eq!(fracpme_history_mass(h, k, &mut t, &mut m), FracpmeStatus::Ok);
        // spatially constant data stay constant, so the state is mass / |cell|
        let mut buf = vec![0.0; n];
        assert_eq!(fracpme_history_copy_step(h, k, buf.as_mut_ptr(), n), FracpmeStatus::Ok);
        assert!(m > 0.0);
        for v in &buf {
            assert!((v - m / (2.0 * PI)).abs() < 1e-12);
        }
        fracpme_history_free(h);
    }
}

#[test]
fn frac_laplacian_scales_modes() {
    let n = 64;
    let input: Vec<f64> = (0..n).map(|i| (2.0 * 2.0 * PI * i as f64 / n as f64).cos()).collect();
    let mut out = vec![0.0; n];
    for s in [0.25, 0.5, 1.0] {
        let status = unsafe { fracpme_frac_laplacian(1, n, 2.0 * PI, s, input.as_ptr(), out.as_mut_ptr(), n) };
        assert_eq!(status, FracpmeStatus::Ok);
        let factor = 4f64.powf(s);
        for (o, i) in out.iter().zip(&input) {
            assert!((o - factor * i).abs() < 1e-12);
        }
    }
    let status = unsafe { fracpme_frac_laplacian(1, n, 2.0 * PI, 1.5, input.as_ptr(), out.as_mut_ptr(), n) };
    assert_ne!(status, FracpmeStatus::Ok);
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/fracpme.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["fracpme_solve", "fracpme_history_free", "fracpme_last_error", "FRACPME_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"fracpme.h\"\nint main(void) { double v; return fracpme_mittag_leffler(0.5, -1.0, &v) == FRACPME_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    for (compiler, std) in [("cc", "-std=c99"), ("c++", "-std=c++11")] {
        let lang = if compiler == "cc" { "c" } else { "c++" };
        match std::process::Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", std, "-x", lang, "-I", include])
            .arg(&src)
            .output()
        {
            Ok(out) => assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr)),
            Err(e) => eprintln!("skipping {compiler} probe: {e}"),
        }
    }
}
