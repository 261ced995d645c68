use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agedebt::config::parse_config;

fn agedebt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agedebt")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const TWO_NODE: &str = "[network]\nnodes = 2\nedges = [\"1-2:0.9\"]\n\n[[flows]]\nsource = 1\ndestinations = [2]\n\n[sim]\nhorizon = 50\n";

#[test]
fn validate_reports_line_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.toml", TWO_NODE);
    let out = agedebt(&["validate", "--config", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));

    let bad = write(dir.path(), "bad.toml", &TWO_NODE.replace("destinations = [2]", "destinations = [7]"));
    let out = agedebt(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5") && err.contains("destination 7"), "{err}");

    let out = agedebt(&["validate", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_arguments_are_config_errors() {
    assert_eq!(agedebt(&["run"]).status.code(), Some(1));
    assert_eq!(agedebt(&["run", "--config", "x", "--seed", "minus"]).status.code(), Some(1));
    assert_eq!(agedebt(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "dp.toml", &format!("{TWO_NODE}\n[[policy]]\nname = \"dp\"\ndp = {{ cap = 30, max_states = 5 }}\n"));
    let c = cfg.to_str().unwrap();
    assert_eq!(agedebt(&["run", "--config", c]).status.code(), Some(2));
    assert_eq!(agedebt(&["dp", "--config", c]).status.code(), Some(2));
    let out_path = dir.path().join("sweep.csv");
    let out = agedebt(&["sweep", "--config", c, "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    // The CSV is still written, with the failed rows left empty.
    let csv = std::fs::read_to_string(out_path).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn run_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", TWO_NODE);
    let out = agedebt(&["run", "--config", cfg.to_str().unwrap(), "--horizon", "10", "--policy", "max-weight", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,pair,A,B,Q,alpha,action_index"));
    assert_eq!(lines.count(), 10);
}

#[test]
fn dp_exports_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{TWO_NODE}\n[[policy]]\nname = \"dp\"\ndp = {{ cap = 8 }}\n"));
    let table = dir.path().join("t.csv");
    let out = agedebt(&["dp", "--config", cfg.to_str().unwrap(), "--out", table.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(table).unwrap();
    assert_eq!(text.lines().next(), Some("A_1_2,action_index,relative_value"));
    assert_eq!(text.lines().count(), 1 + 8);
}

#[test]
fn graphs_counts_and_listing() {
    let dir = tempfile::tempdir().unwrap();
    let list = dir.path().join("g.csv");
    let out = agedebt(&["graphs", "--n", "4", "--n", "5", "--out", list.to_str().unwrap()]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "n,count\n4,6\n5,21\ntotal,27\n");
    assert_eq!(std::fs::read_to_string(list).unwrap().lines().count(), 1 + 27);
    assert_eq!(agedebt(&["graphs", "--n", "9"]).status.code(), Some(1));
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg, "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
