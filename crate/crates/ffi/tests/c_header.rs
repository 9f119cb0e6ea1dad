use std::path::{Path, PathBuf};
use std::process::Command;

fn artifact_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_generated_header() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib_dir = artifact_dir();
    assert!(
        lib_dir.join("libreliable_fw_ffi.so").exists(),
        "shared library not found in {}",
        lib_dir.display()
    );
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(root.join("tests/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lreliable_fw_ffi")
        .status()
        .expect("C compiler");
    assert!(status.success());
    let run = Command::new(&exe).env("LD_LIBRARY_PATH", &lib_dir).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("iterations=50 sfo=50"), "{stdout}");
}
