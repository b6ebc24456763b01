use std::path::Path;
use std::process::{Command, Output};

fn mcdl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcdl")).args(args).output().expect("mcdl runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn chain10(dir: &Path) -> String {
    let text: String = (1..10).map(|i| format!("{i}\t{}\n", i + 1)).collect();
    write(dir, "chain10.tsv", &text)
}

#[test]
fn chain_closure_on_four_workers() {
    let dir = tempfile::tempdir().unwrap();
    let arc = chain10(dir.path());
    let prog = write(dir.path(), "tc.dl", "tc(X,Y) <- arc(X,Y).\ntc(X,Y) <- tc(X,Z), arc(Z,Y).\n");
    let o = mcdl(&[
        "run", "--program", &prog, "--facts", &format!("arc={arc}"), "--query", "tc(X,Y).", "--engine", "psn",
        "--workers", "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let rows: Vec<Vec<i64>> = out.lines().map(|l| l.split('\t').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 45);
    assert!(rows.windows(2).all(|w| w[0] < w[1]), "rows are sorted by value");
    let stats: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(stats["result_size"], 45);
}

#[test]
fn output_and_stats_files() {
    let dir = tempfile::tempdir().unwrap();
    let arc = chain10(dir.path());
    let out = dir.path().join("out.tsv");
    let stats = dir.path().join("stats.json");
    let o = mcdl(&[
        "run", "--program", "tc", "--facts", &format!("arc={arc}"), "--query", "tc(3,Y).", "--output",
        out.to_str().unwrap(), "--stats-out", stats.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 7);
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(s["iterations"], 9);
}

#[test]
fn shortest_paths_pass_the_check() {
    let o = mcdl(&["check-prem", "--program", "spath"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("Proven"), "{}", stdout(&o));
}

#[test]
fn refuted_recursion_prints_counterexample_facts() {
    let o = mcdl(&["check-prem", "--program", "rollup"]);
    assert!(!o.status.success());
    let text = stdout(&o);
    assert!(text.contains("Refuted") && text.contains("counterexample"), "{text}");
    assert!(text.lines().any(|l| l.trim_start().starts_with("repr(") && l.ends_with(").")), "{text}");
}

#[test]
fn grid150_edge_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid150.tsv");
    let o = mcdl(&["gen-graph", "grid", "150", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 45_300);
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.dl", "p(X) <- q(X");
    assert!(!mcdl(&["run", "--program", &bad]).status.success());
    // The layered rollup recursion is refused unless asked for.
    assert!(!mcdl(&["run", "--program", "rollup", "--sample"]).status.success());
    let o = mcdl(&["run", "--program", "rollup", "--sample", "--allow-unverified", "--query", "myrupt(T,1,V,N,P)."]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 3);
    // A diverging recursion runs into the iteration cap.
    let prog = write(dir.path(), "grow.dl", "n(X) <- s(X).\nn(Y) <- n(X), Y = X + 1.\n");
    let s = write(dir.path(), "s.tsv", "0\n");
    let o = mcdl(&["run", "--program", &prog, "--facts", &format!("s={s}"), "--max-iterations", "50"]);
    assert!(!o.status.success());
    assert!(!mcdl(&["gen-graph", "ring", "5"]).status.success());
}

#[test]
fn bench_reports_json() {
    let o = mcdl(&["bench", "--program", "tc", "--graph", "grid8", "--runs", "3", "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(r["runs_ms"].as_array().unwrap().len(), 3);
    assert_eq!(r["result_size"], mcdl_workbench::gen::grid_tc_size(8));
}

#[test]
fn explain_shows_trees_and_plan() {
    let o = mcdl(&["explain", "--program", "sg", "--workers", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("OR1 sg(X, Y)") && text.contains("decomposable") && text.contains("total cost"), "{text}");
}
