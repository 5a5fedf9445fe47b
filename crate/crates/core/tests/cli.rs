//! The batch front end end to end: files, sidecars, determinism and exit codes.

use std::path::PathBuf;

use qudit_mbqc::cli::{run, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qudit-mbqc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("qudit-mbqc").chain(args.iter().copied()))
}

fn rows(path: &PathBuf) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn percolate_is_reproducible_and_thread_independent() {
    let (a, b) = (scratch("perc-a.csv"), scratch("perc-b.csv"));
    let base = ["percolate", "--d", "3", "--L", "6,8", "--trials", "300", "--seed", "11"];
    let with_out = |p: &PathBuf, threads: &str| {
        let mut v: Vec<&str> = base.to_vec();
        let p = p.to_str().unwrap().to_string();
        v.extend(["--threads", threads, "--out"]);
        let code = run(std::iter::once("qudit-mbqc".to_string()).chain(v.iter().map(|s| s.to_string())).chain([p]));
        assert_eq!(code, EXIT_OK);
    };
    with_out(&a, "1");
    with_out(&b, "2");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let r = rows(&a);
    assert_eq!(r.len(), 2);
    assert_eq!(&r[0][0], "honeycomb");
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.with_extension("csv.meta.json")).unwrap()).unwrap();
    assert!(meta["schema"].as_str().unwrap().starts_with("qudit-mbqc/"));
    assert_eq!(meta["config"]["seed"], 11);
}

#[test]
fn full_deletion_never_spans() {
    let out = scratch("stab.csv");
    let code = cli(&["stability", "--d", "3", "--L", "8", "--p-grid", "0,1", "--patterns", "5", "--deletions", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let r = rows(&out);
    assert_eq!(r.len(), 2);
    assert_eq!(r[1][6].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn reduce_writes_a_passing_schedule() {
    let out = scratch("reduce.json");
    assert_eq!(cli(&["reduce", "--d", "3", "--L", "10", "--w", "2", "--seed", "1", "--out", out.to_str().unwrap()]), EXIT_OK);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["schema"], "qudit-mbqc/reduction/1");
    assert_eq!(doc["passed"], true);
    assert_eq!(doc["final_graph"]["edges"].as_array().unwrap().len(), 4);
}

#[test]
fn verify_symmetry_passes() {
    let out = scratch("verify.json");
    assert_eq!(cli(&["verify", "--suite", "symmetry", "--d", "3", "--out", out.to_str().unwrap()]), EXIT_OK);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["passed"], true);
}

#[test]
fn configuration_errors_exit_2() {
    assert_eq!(cli(&["percolate", "--d", "4"]), EXIT_CONFIG);
    assert_eq!(cli(&["verify", "--suite", "rules", "--d", "2"]), EXIT_CONFIG);
    assert_eq!(cli(&["reduce", "--k", "3", "--d", "3"]), EXIT_CONFIG);
    assert_eq!(cli(&["stability", "--p-grid", "0..1.5:0.1"]), EXIT_CONFIG);
    assert_eq!(cli(&["frobnicate"]), EXIT_CONFIG);
    assert_ne!(EXIT_CHECK_FAILED, EXIT_CONFIG);
}
