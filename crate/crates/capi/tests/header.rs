use std::path::{Path, PathBuf};
use std::process::Command;

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ec3.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).expect("build script writes include/ec3.h");
    for decl in [
        "typedef struct Ec3Input Ec3Input;",
        "typedef struct Ec3Result Ec3Result;",
        "typedef struct Ec3Config {",
        "EC3_STATUS_OK = 0",
        "EC3_STATUS_VALIDATION = 2",
        "EC3_STATUS_NUMERICAL = 3",
        "EC3_STATUS_IO = 4",
        "EC3_MODE_IEC3 = 1",
        "struct Ec3Config ec3_config_default(void);",
        "const char *ec3_last_error_message(void);",
        "enum Ec3Status ec3_fuse(",
        "enum Ec3Status ec3_result_copy_distributions(",
        "void ec3_result_free(struct Ec3Result *result);",
        "enum Ec3Status ec3_auc(",
    ] {
        assert!(text.contains(decl), "missing {decl:?}");
    }
}

fn have(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok_and(|o| o.status.success())
}

/// Compiles the C smoke program against the static library and runs it.
#[test]
fn c_program_links_and_runs() {
    if !have("cc") {
        eprintln!("skipping: no C compiler");
        return;
    }
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join("libec3.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"));
    let bin = dir.join("ec3_smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(
        out.status.success(),
        "smoke program failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with(env!("CARGO_PKG_VERSION")), "{stdout}");
}
