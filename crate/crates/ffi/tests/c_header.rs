//! Compiles a small C program against the generated header and the shared
//! library, then runs it on a freshly built index.

mod common;

use std::path::PathBuf;
use std::process::Command;

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mvr.h")).unwrap();
    for name in [
        "mvr_index_open",
        "mvr_index_free",
        "mvr_index_search",
        "mvr_index_doc_id",
        "mvr_index_dim",
        "mvr_index_num_docs",
        "mvr_search_params_default",
        "mvr_last_error",
        "MVR_STATUS_OK",
        "typedef struct MvrIndex MvrIndex",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn c_program_links_and_searches() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler on PATH, skipping");
        return;
    }
    let lib_dir = target_dir();
    assert!(lib_dir.join("libmvr_ffi.so").exists() || lib_dir.join("libmvr_ffi.dylib").exists());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/c_smoke.c"))
        .arg(concat!("-I", env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(format!("-L{}", lib_dir.display()))
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .args(["-lmvr_ffi", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");

    let path = dir.path().join("idx");
    common::build_index(&path);
    let out = Command::new(&exe).arg(&path).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "smoke failed: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.starts_with("ok 10 d"), "{stdout}");
}
