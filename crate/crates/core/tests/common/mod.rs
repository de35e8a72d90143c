//! Helpers shared by the CLI tests and the acceptance harness.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SALT: &str = "000102030405060708090a0b0c0d0e0f";
pub const COMMITTED_AT: &str = "2026-01-01T00:00:00Z";

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Runs the binary in `cwd` with a pinned rayon pool size.
pub fn csi(cwd: &Path, threads: usize, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csi"))
        .args(args)
        .current_dir(cwd)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .env_remove("CSI_OUTPUT_DIR")
        .output()
        .expect("spawn csi")
}

fn f(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

/// Every subcommand, in dependency order. Output paths are relative to the
/// working directory so that two runs in different directories can be
/// compared byte for byte.
pub fn invocations() -> Vec<(&'static str, Vec<String>)> {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    vec![
        ("score", s(&["score", "--record", &f("compensatory_arm.json"), "--weights", &f("weights.json")])),
        (
            "stability",
            s(&[
                "stability",
                "--record",
                &f("compensatory_arm.json"),
                "--weights",
                &f("weights.json"),
                "--seed",
                "7",
                "--bootstrap-n",
                "500",
                "--out-dir",
                "stability",
            ]),
        ),
        (
            "lottery-commit",
            s(&[
                "lottery-commit",
                "--seed",
                "42",
                "--salt",
                SALT,
                "--committed-at",
                COMMITTED_AT,
                "--out-dir",
                "lottery",
            ]),
        ),
        (
            "lottery-draw",
            s(&["lottery-draw", "--families", &f("families.json"), "--seed", "42", "--out-dir", "lottery"]),
        ),
        (
            "lottery-reveal-verify",
            s(&[
                "lottery-reveal-verify",
                "--commitment",
                "lottery/commitment.txt",
                "--reveal",
                "lottery/reveal.txt",
                "--families",
                &f("families.json"),
                "--draws",
                "lottery/draws.json",
            ]),
        ),
        ("classify-scaffold", s(&["classify-scaffold", "--record", &f("contorted_arm.json"), "--out-dir", "scaffold"])),
        (
            "tier",
            s(&[
                "tier",
                "--record",
                &f("compensatory_arm.json"),
                "--weights",
                &f("weights.json"),
                "--seed",
                "7",
                "--thresholds",
                &f("thresholds.json"),
            ]),
        ),
        (
            "simulate",
            s(&[
                "simulate",
                "--agent",
                &f("agent.json"),
                "--families",
                &f("families.json"),
                "--seed",
                "11",
                "--salt",
                SALT,
                "--committed-at",
                COMMITTED_AT,
                "--out-dir",
                "sim",
            ]),
        ),
        (
            "report",
            s(&[
                "report",
                "--record",
                "sim/synthetic-b.record.json",
                &f("compensatory_arm.json"),
                &f("percent_scale.json"),
                "--compare",
                "--weights",
                &f("weights.json"),
                "--seed",
                "3",
                "--bootstrap-n",
                "500",
                "--thresholds",
                &f("thresholds.json"),
                "--out-dir",
                "report",
            ]),
        ),
    ]
}

/// Runs every subcommand in a fresh directory and collects stdout, exit
/// status and every file written, keyed by name.
pub fn run_all(dir: &Path, threads: usize) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for (name, args) in invocations() {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = csi(dir, threads, &argv);
        assert!(o.status.success(), "{name} failed: {}", String::from_utf8_lossy(&o.stderr));
        out.insert(format!("{name}:stdout"), o.stdout);
    }
    collect_files(dir, dir, &mut out);
    out
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            collect_files(root, &p, out);
        } else {
            let key = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            out.insert(key, std::fs::read(&p).unwrap());
        }
    }
}

/// Names of outputs that differ between the two maps.
pub fn differences(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Vec<String> {
    let keys: std::collections::BTreeSet<_> = a.keys().chain(b.keys()).collect();
    keys.into_iter().filter(|k| a.get(*k) != b.get(*k)).cloned().collect()
}
