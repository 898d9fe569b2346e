//! Runs the `specsketch` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn specsketch(args: &[&str], input: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specsketch")).arg(input).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn triangle_verifies_and_round_trips_to_disk() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "tri.txt", "# triangle\nn 3\n+ 0 1\n+ 1 2\n+ 0 2\n");
    let out = dir.path().join("out.txt");
    let ck = dir.path().join("ck.bin");
    let res = specsketch(
        &["--variant", "n32", "--verify", "--qjl", "16", "--out", out.to_str().unwrap(), "--checkpoint", ck.to_str().unwrap()],
        &input,
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "0 1 1\n0 2 1\n1 2 1\n");
    let report = String::from_utf8(res.stderr).unwrap();
    assert!(report.contains("verified       true"), "{report}");
    let size: usize = report
        .lines()
        .find_map(|l| l.strip_prefix("sketch bytes"))
        .and_then(|v| v.trim().parse().ok())
        .expect("report lists sketch bytes");
    assert_eq!(size as u64, std::fs::metadata(&ck).unwrap().len());
}

#[test]
fn stream_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "dup.txt", "n 4\n+ 0 1\n+ 0 1\n");
    let res = specsketch(&["--variant", "n32"], &input);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 3"));
}

#[test]
fn bad_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "empty.txt", "n 4\n");
    assert_eq!(specsketch(&["--eps", "2"], &input).status.code(), Some(2));
    assert!(!specsketch(&["--variant", "fast"], &input).status.success());
    assert!(!specsketch(&["--seed", "not-hex"], &input).status.success());
}

#[test]
fn stdout_output_when_no_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.txt", "n 3\n+ 1 2\n+ 0 1\n");
    let res = specsketch(&["--variant", "ballcarve", "--qjl", "16"], &input);
    assert!(res.status.success());
    assert_eq!(String::from_utf8(res.stdout).unwrap(), "0 1 1\n1 2 1\n");
}

#[test]
fn variants_agree_with_oracle_on_same_stream() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("n 10\n");
    for u in 0..10 {
        for v in u + 1..10 {
            if (u * 7 + v * 3) % 4 != 0 {
                text.push_str(&format!("+ {u} {v}\n"));
            }
        }
    }
    let input = write(dir.path(), "g.txt", &text);
    for v in ["brute", "ballcarve", "n32"] {
        let res = specsketch(&["--variant", v, "--verify", "--seed", "abc", "--qjl", "24"], &input);
        assert!(res.status.success(), "{v}: {}", String::from_utf8_lossy(&res.stderr));
    }
}
