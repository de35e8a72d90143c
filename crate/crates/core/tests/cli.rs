mod common;

use std::fs;

use common::{csi, differences, fixture, run_all, COMMITTED_AT, SALT};
use csi_core::report::EvaluationReport;
use csi_core::synthetic::ExpectedIndices;

fn fx(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

fn stdout(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn score_line_format() {
    let dir = tempfile::tempdir().unwrap();
    let o = csi(dir.path(), 1, &["score", "--record", &fx("compensatory_arm.json"), "--weights", &fx("weights.json")]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o);
    assert!(line.starts_with("S_equal=0.580 S_prior[0.60..0.90]="), "{line}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let invalid = csi(p, 1, &["score", "--record", &fx("nine_domains.json"), "--weights", &fx("weights.json")]);
    assert_eq!(invalid.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("missing domain A"));
    let missing = csi(p, 1, &["score", "--record", "no-such-file.json", "--weights", &fx("weights.json")]);
    assert_eq!(missing.status.code(), Some(2));
    let usage = csi(p, 1, &["score"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn tampered_reveal_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = csi(
        p,
        1,
        &["lottery-commit", "--seed", "42", "--salt", SALT, "--committed-at", COMMITTED_AT, "--out-dir", "."],
    );
    assert!(o.status.success());
    let ok = csi(p, 1, &["lottery-reveal-verify", "--commitment", "commitment.txt", "--reveal", "reveal.txt"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let reveal = fs::read_to_string(p.join("reveal.txt")).unwrap();
    fs::write(p.join("reveal.txt"), reveal.replacen("42", "43", 1)).unwrap();
    let bad = csi(p, 1, &["lottery-reveal-verify", "--commitment", "commitment.txt", "--reveal", "reveal.txt"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn explicit_tier_without_components_caps_at_b() {
    let dir = tempfile::tempdir().unwrap();
    let o = csi(dir.path(), 1, &["tier", "--s-prior", "0.95", "--csi", "0.95", "--dcsi-72h", "0.9"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("tier B"), "{}", stdout(&o));
    let with_floors =
        ["tier", "--s-prior", "0.95", "--csi", "0.95", "--dcsi-72h", "0.9", "--thresholds", &fx("thresholds.json")];
    let o = csi(dir.path(), 1, &with_floors);
    let text = stdout(&o);
    assert!(text.starts_with("tier B") && text.contains("component_floors: missing"), "{text}");
    assert!(!text.contains("NaN"));
    let o = csi(dir.path(), 1, &["tier", "--s-prior", "0.72", "--csi", "0.78"]);
    assert!(stdout(&o).starts_with("tier A"));
}

#[test]
fn output_dir_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("via-env");
    fs::create_dir(&target).unwrap();
    let o = std::process::Command::new(env!("CARGO_BIN_EXE_csi"))
        .args(["classify-scaffold", "--record", &fx("compensatory_arm.json")])
        .current_dir(dir.path())
        .env("CSI_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(target.join("scaffold.json").exists());
}

#[test]
fn simulated_record_lands_in_its_bands() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = csi(
        p,
        2,
        &[
            "simulate",
            "--agent",
            &fx("agent.json"),
            "--families",
            &fx("families.json"),
            "--seed",
            "11",
            "--out-dir",
            ".",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = csi(
        p,
        2,
        &[
            "report",
            "--record",
            "synthetic-b.record.json",
            "--weights",
            &fx("weights.json"),
            "--seed",
            "1",
            "--out-dir",
            ".",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let expected: ExpectedIndices =
        serde_json::from_str(&fs::read_to_string(p.join("synthetic-b.expected.json")).unwrap()).unwrap();
    // Without --compare the file holds a single report.
    let r: EvaluationReport = serde_json::from_str(&fs::read_to_string(p.join("report.json")).unwrap()).unwrap();
    assert!(expected.pcsi.unwrap().contains(r.pcsi.available().unwrap().pcsi));
    assert!(expected.dcsi.unwrap().contains(r.dcsi.available().unwrap().dcsi));
    assert!(expected.ecsi.unwrap().contains(r.ecsi.available().unwrap().ecsi));
}

#[test]
fn outputs_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let one = run_all(a.path(), 1);
    let four = run_all(b.path(), 4);
    assert!(one.len() > 15, "{:?}", one.keys().collect::<Vec<_>>());
    assert_eq!(differences(&one, &four), Vec::<String>::new());
}
