use std::process::{Command, Output};

use ppid_core::protocol::{Capability, CapabilityRegistry, Role};

fn ppid(args: &[&str], dir: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppid"))
        .args(args)
        .current_dir(dir)
        .env_remove("PPID_CONFIG")
        .output()
        .unwrap()
}

#[test]
fn capabilities_per_role() {
    let dir = tempfile::tempdir().unwrap();
    for (role, name) in [(Role::Cs, "cs"), (Role::Tps, "tps"), (Role::Sp, "sp")] {
        let out = ppid(&["capabilities", "--role", name], dir.path());
        assert!(out.status.success());
        let reg: CapabilityRegistry = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(reg, CapabilityRegistry::for_role(role));
        assert_eq!(reg.allows(Capability::LoadSecretKey), role == Role::Cs);
    }
}

#[test]
fn bench_refuses_short_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = ppid(&["bench", "--iterations", "10"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 100 iterations"));
}

#[test]
fn exit_codes_for_config_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "colour = \"blue\"\n").unwrap();
    let out = ppid(&["--config", bad.to_str().unwrap(), "capabilities", "--role", "cs"], dir.path());
    assert_eq!(out.status.code(), Some(3));

    let out = ppid(&["--key-dir", "missing", "serve-tps"], dir.path());
    assert_eq!(out.status.code(), Some(4));

    let out = ppid(&["enroll", "--input", "missing.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}
