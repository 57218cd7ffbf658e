//! End-to-end checks of the command line binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcpoly"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary spawns");
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().expect("binary exits")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code present")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mcpoly-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_tmp(name: &str, content: &str) -> PathBuf {
    let p = tmp(name);
    std::fs::write(&p, content).unwrap();
    p
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn aifv_solve_encode_decode_round_trip() {
    let probs = write_tmp("probs.txt", "1/2\n1/4\n1/8\n1/8\n");
    let code_path = tmp("code.json");
    let out = run(&[
        "aifv",
        "solve",
        "--probs",
        path_str(&probs),
        "--m",
        "3",
        "--output",
        path_str(&code_path),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("cost"));

    let enc = run_stdin(&["aifv", "encode", "--code", path_str(&code_path)], "cbab\n");
    assert_eq!(code(&enc), 0);
    let bits = stdout(&enc).trim().to_string();
    assert!(bits.chars().all(|c| c == '0' || c == '1'));

    let dec = run_stdin(
        &["aifv", "decode", "--code", path_str(&code_path), "--count", "4"],
        &format!("{bits}\n"),
    );
    assert_eq!(code(&dec), 0);
    assert_eq!(stdout(&dec).trim(), "cbab");
}

#[test]
fn aifv_solve_is_deterministic_and_code_file_reloads() {
    let probs = write_tmp("probs-det.txt", "1/2\n1/4\n1/4\n");
    let c1 = tmp("det1.json");
    let c2 = tmp("det2.json");
    for c in [&c1, &c2] {
        let out = run(&["aifv", "solve", "--probs", path_str(&probs), "--output", path_str(c)]);
        assert_eq!(code(&out), 0);
    }
    let a = std::fs::read_to_string(&c1).unwrap();
    let b = std::fs::read_to_string(&c2).unwrap();
    assert_eq!(a, b, "same input must produce the same code file");
    // the emitted file parses back through the library
    let (parsed, _) = mcpoly::io::code_from_json(&a).unwrap();
    assert_eq!(parsed.trees.len(), 2);
}

#[test]
fn parse_errors_exit_2() {
    let bad = write_tmp("bad.json", "{ not json");
    let out = run(&["solve", "--input", path_str(&bad)]);
    assert_eq!(code(&out), 2);
    // missing file is also a parse failure
    let out = run(&["solve", "--input", "/nonexistent/definitely-missing.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn validation_errors_exit_3() {
    // probabilities do not sum to one
    let probs = write_tmp("bad-probs.txt", "1/2\n1/4\n");
    let out = run(&["aifv", "solve", "--probs", path_str(&probs)]);
    assert_eq!(code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn budget_errors_exit_4() {
    let gen = run(&["gen", "--kind", "chain", "--m", "2", "--states", "3", "--seed", "7"]);
    assert_eq!(code(&gen), 0);
    let inst = write_tmp("budget-inst.json", &stdout(&gen));
    let out = run(&[
        "solve",
        "--input",
        path_str(&inst),
        "--method",
        "ellipsoid",
        "--budget",
        "1",
    ]);
    assert_eq!(code(&out), 4, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn json_errors_flag_emits_json() {
    let probs = write_tmp("bad-probs-json.txt", "1/2\n1/4\n");
    let out = run(&["--json-errors", "aifv", "solve", "--probs", path_str(&probs)]);
    assert_eq!(code(&out), 3);
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"], "validation");
    assert!(!err["message"].as_str().unwrap().is_empty());
}

#[test]
fn gen_is_deterministic() {
    let a = run(&["gen", "--kind", "source", "--n", "5", "--b", "5", "--seed", "42"]);
    let b = run(&["gen", "--kind", "source", "--n", "5", "--b", "5", "--seed", "42"]);
    assert_eq!(code(&a), 0);
    assert_eq!(stdout(&a), stdout(&b));
    let c = run(&["gen", "--kind", "source", "--n", "5", "--b", "5", "--seed", "43"]);
    assert_ne!(stdout(&a), stdout(&c));
}

#[test]
fn envelope_dump_rows_are_consistent() {
    let gen = run(&["gen", "--kind", "chain", "--m", "2", "--states", "4", "--seed", "3"]);
    assert_eq!(code(&gen), 0);
    let inst = write_tmp("dump-inst.json", &stdout(&gen));
    let out = run(&[
        "envelope-dump",
        "--input",
        path_str(&inst),
        "--from",
        "0",
        "--to",
        "1",
        "--step",
        "1/8",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,g0,g1,h");
    let mut rows = 0;
    for line in lines {
        let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 4);
        let (g0, g1, h) = (vals[1], vals[2], vals[3]);
        assert!((h - g0.min(g1)).abs() < 1e-9, "h is not the lower envelope in {line}");
        rows += 1;
    }
    assert_eq!(rows, 9);
}

#[test]
fn oracle_reports_verdicts() {
    let gen = run(&["gen", "--kind", "chain", "--m", "2", "--states", "3", "--seed", "11"]);
    let inst = write_tmp("oracle-inst.json", &stdout(&gen));
    // far above any envelope: must be outside with a separating plane
    let out = run(&["oracle", "--input", path_str(&inst), "--x", "1/2", "--y", "1000"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["verdict"], "outside");
    assert!(v["hyperplane"].is_object());
    // below the floor of zero from inside the box: y = -1 is outside too
    let out = run(&["oracle", "--input", path_str(&inst), "--x", "1/2", "--y=-1"]);
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["verdict"], "outside");
}
