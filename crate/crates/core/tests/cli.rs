use std::fs;
use std::process::{Command, Output};

use prefix_dag::trie::BitString;
use prefix_dag::{fold, LeafTrie, NextHopDist};

const BIN: &str = env!("CARGO_BIN_EXE_prefix-dag");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn bounds_profile_for_binary_uniform() {
    let o = run(&[
        "bounds", "--height", "16", "--delta", "2", "--format", "json",
    ]);
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["entropy"], 1.0);
    assert_eq!(v["m_bits"], 131168.0);
    assert_eq!(v["kstar"], 4);
    assert_eq!(v["per_level"].as_array().unwrap().len(), 17);
    assert_eq!(v["totals"]["basic"], 2098688.0);
}

#[test]
fn bounds_csv_columns() {
    let o = run(&[
        "bounds", "--height", "8", "--probs", "0.9,0.1", "--format", "csv",
    ]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("level,zone,entropy_term,pow2_cap,delta_cap_log2,min_bound")
    );
    assert_eq!(lines.count(), 9);
}

#[test]
fn fold_constant_trie() {
    let o = run(&["fold", "--height", "2", "--probs", "1.0", "--seed", "1"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("# widths: 1 1 1"));

    let o = run(&[
        "fold", "--height", "2", "--probs", "1.0", "--format", "json",
    ]);
    assert_eq!(
        json(&o)["memory"]["per_level_widths"],
        serde_json::json!([1, 1, 1])
    );
}

#[test]
fn fold_csv_columns() {
    let o = run(&["fold", "--height", "6", "--delta", "3", "--format", "csv"]);
    let text = stdout(&o);
    assert_eq!(
        text.lines().next(),
        Some("level,width,cap_pow2,cap_delta,entropy_bound,min_bound")
    );
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn validate_passes_on_skewed_binary() {
    let o = run(&[
        "validate", "--height", "12", "--probs", "0.9,0.1", "--trials", "100", "--seed", "7",
        "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["violations"], serde_json::json!([]));
    assert_eq!(v["per_level"].as_array().unwrap().len(), 13);
}

#[test]
fn validate_thread_cap_does_not_change_results() {
    let args = [
        "validate", "--height", "8", "--delta", "3", "--trials", "30", "--format", "json",
    ];
    let a = run(&args);
    let b = Command::new(BIN)
        .args(args)
        .env("PREFIX_DAG_THREADS", "1")
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);

    let bad = Command::new(BIN)
        .args(args)
        .env("PREFIX_DAG_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn generate_fold_lookup_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trie.txt");
    let path_s = path.to_str().unwrap();
    let o = run(&[
        "generate",
        "--height",
        "10",
        "--probs",
        "0.5,0.3,0.2",
        "--seed",
        "3",
        "--output",
        path_s,
    ]);
    assert!(o.status.success());

    let dist = NextHopDist::from_probs(&[0.5, 0.3, 0.2]).unwrap();
    let trie = LeafTrie::random(10, &dist, 3).unwrap();
    let mut expected = Vec::new();
    trie.write_to(3, &mut expected).unwrap();
    assert_eq!(fs::read(&path).unwrap(), expected);

    let o = run(&["fold", "--input", path_s]);
    let dump = stdout(&o);
    let dag = fold(&trie);
    assert!(dump.starts_with(&dag.dump()));

    for a in [0u32, 1, 511, 777, 1023] {
        let addr = BitString::new(a, 10).unwrap().to_string();
        let o = run(&[
            "lookup",
            "--input",
            path_s,
            "--address",
            &addr,
            "--format",
            "json",
        ]);
        assert!(o.status.success());
        let v = json(&o);
        let want = trie.lookup(&addr.parse().unwrap()).unwrap();
        assert_eq!(v["trie"], want.0);
        assert_eq!(v["dag"], want.0);
        assert_eq!(v["agree"], true);
    }
}

#[test]
fn prefix_table_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.txt");
    fs::write(&path, "# test table\n0/1 1\n01/2 2\n128.0.0.0/1 3\n").unwrap();
    let p = path.to_str().unwrap();

    let o = run(&["lookup", "--input", p, "--height", "2", "--address", "01"]);
    assert_eq!(stdout(&o).trim(), "01 trie=2 dag=2");
    let o = run(&["lookup", "--input", p, "--height", "2", "--address", "11"]);
    assert_eq!(stdout(&o).trim(), "11 trie=3 dag=3");

    let o = run(&["report", "--input", p, "--height", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(
        text.lines().next(),
        Some("level,width,cap_pow2,cap_delta,entropy_bound,min_bound")
    );
    assert!(text.lines().nth(1).unwrap().starts_with("0,3,"));
}

#[test]
fn simulate_reports_exact_and_bound() {
    let o = run(&[
        "simulate", "--probs", "0.9,0.1", "--m", "16", "--trials", "2000", "--format", "json",
    ]);
    assert!(o.status.success());
    let v = json(&o);
    let exact = v["exact"].as_f64().unwrap();
    assert!((exact - 1.8146979811).abs() < 1e-9);
    assert_eq!(v["bound"], 2.0);
    let mean = v["mean"].as_f64().unwrap();
    let se = v["std"].as_f64().unwrap() / 2000f64.sqrt();
    assert!((mean - exact).abs() <= 3.0 * se);
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["bounds", "--probs", "0.5,0.5", "--delta", "2"][..],
        &["bounds", "--height", "31"],
        &["bounds", "--probs", "0.5,0.4"],
        &["simulate"],
        &["lookup", "--height", "3", "--address", "01"],
        &["fold", "--input", "/nonexistent/trie.txt"],
        &["frobnicate"],
    ] {
        let o = run(args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn json_outputs_parse() {
    for args in [
        &["bounds", "--height", "24", "--format", "json"][..],
        &["report", "--height", "6", "--format", "json"],
        &[
            "lookup",
            "--height",
            "4",
            "--address",
            "0101",
            "--format",
            "json",
        ],
        &[
            "validate", "--height", "6", "--trials", "5", "--format", "json",
        ],
    ] {
        let o = run(args);
        assert!(o.status.success(), "{args:?}");
        serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap();
    }
}
