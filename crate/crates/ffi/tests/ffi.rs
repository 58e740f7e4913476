use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use gft_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = gft_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn network_lifecycle() {
    let mut net = ptr::null_mut();
    let status = unsafe { gft_network_new(cstr("4-3q2-2").as_ptr(), 7, &mut net) };
    assert_eq!(status, GftStatus::Ok);
    let (mut d_in, mut d_out) = (0usize, 0usize);
    assert_eq!(unsafe { gft_network_dims(net, &mut d_in, &mut d_out) }, GftStatus::Ok);
    assert_eq!((d_in, d_out), (4, 2));

    let x = [0.5, -1.0, 2.0, 0.0, 1.0, 1.0, 1.0, 1.0];
    let mut out = [0.0; 4];
    assert_eq!(unsafe { gft_network_predict(net, x.as_ptr(), 2, out.as_mut_ptr(), 4) }, GftStatus::Ok);
    let mut small = [0.0; 3];
    assert_eq!(
        unsafe { gft_network_predict(net, x.as_ptr(), 2, small.as_mut_ptr(), 3) },
        GftStatus::BufferTooSmall
    );

    let dir = tempfile::tempdir().unwrap();
    let path = cstr(dir.path().join("net.bin").to_str().unwrap());
    assert_eq!(unsafe { gft_network_save(net, path.as_ptr()) }, GftStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { gft_network_load(path.as_ptr(), &mut loaded) }, GftStatus::Ok);
    let mut again = [0.0; 4];
    assert_eq!(unsafe { gft_network_predict(loaded, x.as_ptr(), 2, again.as_mut_ptr(), 4) }, GftStatus::Ok);
    assert_eq!(out, again);

    unsafe {
        gft_network_free(net);
        gft_network_free(loaded);
        gft_network_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_codes() {
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { gft_network_new(cstr("4-3q9").as_ptr(), 0, &mut net) }, GftStatus::Validation);
    assert!(last_error().contains("4-3q9"));
    assert!(net.is_null());
    assert_eq!(unsafe { gft_network_new(ptr::null(), 0, &mut net) }, GftStatus::NullPointer);
    assert_eq!(unsafe { gft_network_new(cstr("4-2").as_ptr(), 0, ptr::null_mut()) }, GftStatus::NullPointer);

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"GFTCKPT\0garbage-garbage").unwrap();
    let p = cstr(junk.to_str().unwrap());
    assert_eq!(unsafe { gft_network_load(p.as_ptr(), &mut net) }, GftStatus::Checkpoint);
    let missing = cstr(dir.path().join("none.bin").to_str().unwrap());
    assert_eq!(unsafe { gft_network_load(missing.as_ptr(), &mut net) }, GftStatus::Io);

    let (mut s, mut p2, mut a) = (false, false, false);
    let bad = cstr("p cnf 3 1\n1 2 0\n");
    assert_eq!(unsafe { gft_hardness_verify(bad.as_ptr(), &mut s, &mut p2, &mut a) }, GftStatus::Parse);

    let cfg = cstr("arch = 4-2\ndataset = synthetic:4,8,0,1\niterations = 1\nk0 = 1.5\n");
    let mut acc = 0.0;
    assert_eq!(unsafe { gft_train(cfg.as_ptr(), &mut net, &mut acc) }, GftStatus::Config);
    assert!(last_error().contains("k0"));
}

#[test]
fn accounting_and_hardness() {
    let mut bits = 0u64;
    assert_eq!(unsafe { gft_model_bits(cstr("784-256q2-10").as_ptr(), &mut bits) }, GftStatus::Ok);
    assert_eq!(bits, 784 * 256 * 2 + 256 * 10 * 32);

    let mut e = 0.0;
    assert_eq!(unsafe { gft_energy_pj(53_600_000, 0, 2, 1, &mut e) }, GftStatus::Ok);
    assert!((e - 7.836_32e8).abs() < 1e-3);
    assert_eq!(unsafe { gft_energy_pj(0, 1000, 2, 3, &mut e) }, GftStatus::Ok);
    assert!((e - 14_400.0).abs() < 1e-9);
    assert_eq!(unsafe { gft_energy_pj(0, 1000, 5, 1, &mut e) }, GftStatus::Validation);

    let (mut s, mut p, mut a) = (false, false, false);
    let sat = cstr("p cnf 3 1\n1 -2 3 0\n");
    assert_eq!(unsafe { gft_hardness_verify(sat.as_ptr(), &mut s, &mut p, &mut a) }, GftStatus::Ok);
    assert!(s && p && a);
    let mut unsat = String::from("p cnf 3 8\n");
    for mask in 0..8 {
        for v in 1..=3 {
            let lit = if mask >> (v - 1) & 1 == 1 { v } else { -v };
            unsat.push_str(&format!("{lit} "));
        }
        unsat.push_str("0\n");
    }
    let unsat = cstr(&unsat);
    assert_eq!(unsafe { gft_hardness_verify(unsat.as_ptr(), &mut s, &mut p, &mut a) }, GftStatus::Ok);
    assert!(!s && !p && a);
}

#[test]
fn trains_and_evaluates() {
    let cfg = cstr("arch = 8-16q2-2q2\ndataset = synthetic:8,256,0.1,2\niterations = 300\nbatch_size = 32\nseed = 3\n");
    let mut net = ptr::null_mut();
    let mut acc = 0.0;
    assert_eq!(unsafe { gft_train(cfg.as_ptr(), &mut net, &mut acc) }, GftStatus::Ok);
    assert!(acc > 0.8, "{acc}");
    let (mut eval_acc, mut loss) = (0.0, 0.0);
    let ds = cstr("synthetic:8,256,0.1,2");
    assert_eq!(unsafe { gft_network_evaluate(net, ds.as_ptr(), &mut eval_acc, &mut loss) }, GftStatus::Ok);
    assert_eq!(eval_acc, acc);
    assert!(loss.is_finite());
    unsafe { gft_network_free(net) };
}

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "gft.h"

int main(void) {
    GftNetwork *net = NULL;
    if (gft_network_new("3-2q2", 1, &net) != GFT_STATUS_OK) return 1;
    size_t d_in = 0, d_out = 0;
    gft_network_dims(net, &d_in, &d_out);
    if (d_in != 3 || d_out != 2) return 2;
    double x[3] = {1.0, 0.0, -1.0};
    double y[2];
    if (gft_network_predict(net, x, 1, y, 2) != GFT_STATUS_OK) return 3;
    gft_network_free(net);
    if (gft_network_new("3-2q1", 1, &net) != GFT_STATUS_VALIDATION) return 4;
    if (strstr(gft_last_error_message(), "3-2q1") == NULL) return 5;
    uint64_t bits = 0;
    gft_model_bits("10-4q4", &bits);
    printf("bits=%llu\n", (unsigned long long)bits);
    return bits == 10 * 4 * 4 ? 0 : 6;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("gft.h").exists(), "header not generated");
    let lib = target_dir().join("libgft_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let out = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("C compiler available");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "bits=160");
}
