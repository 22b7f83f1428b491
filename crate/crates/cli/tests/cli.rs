use std::fs;
use std::path::Path;
use std::process::Command;

fn soac(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_soac")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn cost_line(report: &str) -> String {
    report.lines().find(|l| l.starts_with("cost: ")).unwrap().to_string()
}

fn gen_random(dir: &Path, name: &str, seed: u64) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap().to_string();
    let seed = seed.to_string();
    let (code, _) = soac(&[
        "gen",
        "random",
        "--vertices",
        "6",
        "--arcs",
        "9",
        "--agents",
        "3",
        "--seed",
        &seed,
        "-o",
        &p,
    ]);
    assert_eq!(code, 0);
    p
}

#[test]
fn dp_and_oracle_print_the_same_cost_line() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..8 {
        let file = gen_random(dir.path(), "x.soac", seed);
        let (c1, oracle) = soac(&["oracle", &file]);
        let (c2, dp) = soac(&["dp", &file]);
        let (c3, minmax) = soac(&["minmax", &file, "--alpha", "0"]);
        assert_eq!((c1, c2, c3), (0, 0, 0));
        assert_eq!(cost_line(&oracle), cost_line(&dp), "seed {seed}");
        assert_eq!(cost_line(&minmax), cost_line(&dp), "seed {seed}");
        let (_, mm_oracle) = soac(&["minmax", &file, "--alpha", "1", "--oracle"]);
        let (_, mm_dp) = soac(&["minmax", &file, "--alpha", "1", "--dp"]);
        assert_eq!(cost_line(&mm_oracle), cost_line(&mm_dp), "seed {seed}");
    }
}

#[test]
fn knapsack_generator_reproduces_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("m.txt");
    fs::write(&src, "muks\nk 2\ntarget 2 1\nvector 1 0\nvector 1 1\nvector 0 1\n").unwrap();
    let out = dir.path().join("m.soac");
    let (code, _) = soac(&["gen", "muks-k2n", src.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (code, report) = soac(&["oracle", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(
        report.contains("cost: 1\n") && report.contains("decision: yes\n"),
        "{report}"
    );

    fs::write(&src, "muks\nk 3\ntarget 2 1\nvector 1 0\nvector 1 1\nvector 0 1\n").unwrap();
    let (_, text) = soac(&["gen", "muks-planar", src.to_str().unwrap()]);
    fs::write(&out, text).unwrap();
    let (code, report) = soac(&["dp", out.to_str().unwrap()]);
    assert_eq!(code, 1, "{report}");
    assert!(report.contains("decision: no\n"));
}

#[test]
fn edp_and_formula_sources_generate() {
    let dir = tempfile::tempdir().unwrap();
    let edp = dir.path().join("e.txt");
    fs::write(&edp, "edp\nright 2\npair 0 3\npair 1 4\n").unwrap();
    let (code, text) = soac(&["gen", "edp", edp.to_str().unwrap()]);
    assert_eq!(code, 0);
    let file = dir.path().join("e.soac");
    fs::write(&file, text).unwrap();
    let (code, report) = soac(&["oracle", file.to_str().unwrap(), "--memo"]);
    assert_eq!((code, cost_line(&report)), (0, "cost: 0".to_string()));

    let cnf = dir.path().join("f.txt");
    fs::write(&cnf, "cnf\nvariables 3\nclause 0 1 2\nclause 2 0 1\nclause 1 2 0\n").unwrap();
    let (code, text) = soac(&["gen", "sat13", cnf.to_str().unwrap()]);
    assert_eq!(code, 0);
    fs::write(&file, text).unwrap();
    let (code, report) = soac(&["oracle", file.to_str().unwrap(), "--memo"]);
    assert_eq!((code, cost_line(&report)), (0, "cost: 0".to_string()));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let file = gen_random(dir.path(), "x.soac", 3);
    assert_eq!(soac(&["oracle", &file, "--lambda", "0"]).0, 1);
    assert_eq!(soac(&["oracle", &file, "--lambda", "100"]).0, 0);
    assert_eq!(soac(&["oracle", &file, "--budget", "1"]).0, 3);
    assert_eq!(soac(&["dp", &file, "--budget", "1"]).0, 3);
    assert_eq!(soac(&["oracle", "/nonexistent.soac"]).0, 2);
    assert_eq!(soac(&["minmax", &file]).0, 2);
    assert_eq!(soac(&["frobnicate"]).0, 2);
    let bad = dir.path().join("bad.soac");
    fs::write(&bad, "soac 1\nvertices 2\narc 0 0 lat 1\n").unwrap();
    assert_eq!(soac(&["dp", bad.to_str().unwrap()]).0, 2);
}

#[test]
fn decompose_writes_a_usable_layout() {
    let dir = tempfile::tempdir().unwrap();
    let file = gen_random(dir.path(), "x.soac", 5);
    let layout = dir.path().join("l.txt");
    let (code, report) = soac(&["decompose", &file, "--exact", "-o", layout.to_str().unwrap()]);
    assert_eq!(code, 0);
    let width = report.lines().next().unwrap().to_string();
    let (code, dp) = soac(&["dp", &file, "--layout", layout.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(dp.starts_with(&format!("{width}\n")));
    assert_eq!(cost_line(&dp), cost_line(&soac(&["oracle", &file]).1));
}

#[test]
fn bench_agrees_and_catches_corruption() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..5 {
        gen_random(dir.path(), &format!("r{seed}.soac"), seed);
    }
    let d = dir.path().to_str().unwrap();
    let (code, report) = soac(&["bench", d]);
    assert_eq!(code, 0, "{report}");
    assert!(report.contains("bench: 5 instances, all agree"));
    let (code, report) = soac(&["bench", d, "--fault-inject"]);
    assert_eq!(code, 4);
    assert!(report.contains("MISMATCH"));
}
