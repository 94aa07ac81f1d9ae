//! The `brwlab` binary end to end: exit codes, output files and reruns.

use std::path::Path;
use std::process::{Command, Output};

fn brwlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brwlab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("BRWLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn bad_input_exits_with_the_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["estimate-prob", "--n", "256", "--replicas", "0"],
        &["estimate-prob", "--set", "no_such_key=1"],
        &["run", "--set", "experiment=nothing"],
        &["greens-table", "--kind", "G", "--out", "x.bin"],
    ];
    for args in cases {
        let o = brwlab(args, dir.path());
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn identity_report_is_written_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = brwlab(&["verify-identities", "--mc-trees", "20000", "--gate", "--out", "r.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = std::fs::read_to_string(dir.path().join("r.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let rows = v.as_array().unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["pass"] == serde_json::Value::Bool(true)));
}

#[test]
fn experiment_reruns_are_byte_identical_and_report_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "estimate-prob", "--n", "32,64", "--replicas", "60", "--seed", "7", "--out-dir", out, "--set",
            "table_radius=6",
        ]
    };
    for (out, threads) in [("a", "threads=1"), ("b", "threads=4")] {
        let mut a = args(out);
        a.extend(["--set", threads]);
        let o = brwlab(&a, dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ja = std::fs::read(dir.path().join("a/results.jsonl")).unwrap();
    let jb = std::fs::read(dir.path().join("b/results.jsonl")).unwrap();
    assert!(!ja.is_empty());
    assert_eq!(ja, jb);

    let o = brwlab(&["report", "--input", "a/results.jsonl", "--out-dir", "plots"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("plots/logn_p_with-nozero.csv")).unwrap();
    assert!(csv.starts_with("x,y,yerr\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn tables_come_out_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let o = brwlab(&["greens-table", "--dim", "5", "--radius", "3", "--out", "g.bin"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(brwlab::greens::GreensTable::load(&dir.path().join("g.bin")).is_ok());
    let o = brwlab(&["greens-table", "--dim", "5", "--radius", "3", "--kind", "G", "--sigma-sq", "2", "--csv", "--out", "G.csv"], dir.path());
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(dir.path().join("G.csv")).unwrap();
    assert!(csv.starts_with("c1,c2,c3,c4,c5,orbit_size,value\n"));
}
