//! Compile and run a C program against the generated header and static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "ccrf.h"

int main(void) {
    double r[4] = {0.0, 1.0, 1.0, 0.0};
    double z[2] = {1.0, 0.0};
    double y[2];
    double logdet;
    CcrfSystem *sys = NULL;
    if (ccrf_system_assemble(r, 2, &sys) != CCRF_STATUS_OK) return 1;
    if (ccrf_system_map_infer(sys, z, 1, y) != CCRF_STATUS_OK) return 2;
    if (ccrf_system_logdet(sys, &logdet) != CCRF_STATUS_OK) return 3;
    ccrf_system_free(sys);
    if (fabs(y[0] - 2.0 / 3.0) > 1e-12 || fabs(logdet - log(3.0)) > 1e-12) return 4;
    r[1] = 0.5;
    if (ccrf_system_assemble(r, 2, &sys) != CCRF_STATUS_INVALID_PRECISION) return 5;
    printf("%s\n", ccrf_last_error_message());
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps/
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib_dir = target_dir();
    let staticlib = lib_dir.join("libccrf_ffi.a");
    assert!(staticlib.exists(), "missing {}", staticlib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    let exe = tmp.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&staticlib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler");
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).contains("symmetric"));
}
