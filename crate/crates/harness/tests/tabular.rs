use std::fs;

use cqhpo_core::{Configuration, Objective, ParamSpace, ParamSpec, ParamValue};
use cqhpo_harness::tabular::{load_tabular, sidecar_path, write_tabular, BenchError, TableEntry, TabularBenchmark};
use cqhpo_harness::{SyntheticKind, SyntheticSpec};

const SPACE: &str = r#"
[[params]]
name = "lr"
kind = "continuous"
lo = 0.0
hi = 1.0

[[params]]
name = "depth"
kind = "integer"
lo = 1
hi = 10

[[params]]
name = "booster"
kind = "categorical"
levels = ["gbtree", "dart"]
"#;

fn write_pair(dir: &std::path::Path, csv: &str) -> std::path::PathBuf {
    let path = dir.join("bench.csv");
    fs::write(&path, csv).unwrap();
    fs::write(sidecar_path(&path), SPACE).unwrap();
    path
}

#[test]
fn three_rows_load_as_three_entries() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pair(
        dir.path(),
        "lr,depth,booster,__performance,__runtime_seconds\n0.1,3,gbtree,0.8,12.5\n0.5,7,dart,0.85,30\n0.9,1,gbtree,0.7,2\n",
    );
    let bench = load_tabular(&path).unwrap();
    assert_eq!(bench.name(), "bench");
    assert_eq!(bench.len(), 3);
    assert!(bench.has_runtimes());
    let c = Configuration::new(vec![ParamValue::Float(0.5), ParamValue::Int(7), ParamValue::Level("dart".into())]);
    let e = bench.evaluate(&c).unwrap();
    assert_eq!((e.performance, e.runtime_seconds), (0.85, 30.0));
}

#[test]
fn unknown_level_names_the_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pair(dir.path(), "lr,depth,booster,__performance\n0.1,3,gbtree,0.8\n0.2,3,linear,0.8\n");
    let err = load_tabular(&path).unwrap_err();
    match &err {
        BenchError::Row { line, column, .. } => assert_eq!((*line, column.as_str()), (3, "booster")),
        other => panic!("unexpected error {other}"),
    }
    assert!(err.to_string().contains("booster"));
}

#[test]
fn non_finite_performance_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pair(dir.path(), "lr,depth,booster,__performance\n0.1,3,gbtree,NaN\n");
    let err = load_tabular(&path).unwrap_err().to_string();
    assert!(err.contains("line 2") && err.contains("__performance"), "{err}");
}

#[test]
fn header_problems_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pair(dir.path(), "lr,depth,__performance\n0.1,3,0.5\n");
    assert!(load_tabular(&path).unwrap_err().to_string().contains("missing column `booster`"));
    let path = write_pair(dir.path(), "lr,depth,booster,extra,__performance\n0.1,3,dart,1,0.5\n");
    assert!(load_tabular(&path).unwrap_err().to_string().contains("unknown column `extra`"));
}

#[test]
fn duplicates_keep_the_last_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pair(dir.path(), "lr,depth,booster,__performance\n0.1,3,gbtree,0.1\n0.2,3,gbtree,0.2\n0.1,3,gbtree,0.3\n");
    let bench = load_tabular(&path).unwrap();
    assert_eq!(bench.len(), 2);
    assert_eq!(bench.get(&bench.configs()[0]).unwrap().performance, 0.3);
    assert!(!bench.has_runtimes());
}

#[test]
fn round_trip_preserves_rows() {
    let dir = tempfile::tempdir().unwrap();
    for kind in SyntheticKind::ALL {
        let bench = SyntheticSpec { resolution: Some(7), ..SyntheticSpec::new(kind) }.materialize();
        let path = dir.path().join(format!("{}.csv", kind.name()));
        write_tabular(&bench, &path).unwrap();
        let back = load_tabular(&path).unwrap();
        assert_eq!(back.space(), bench.space());
        assert_eq!(back.configs(), bench.configs());
        for (c, e) in bench.entries() {
            assert_eq!(back.get(c), Some(e));
        }
    }
}

#[test]
fn invalid_rows_are_rejected_on_insert() {
    let space = ParamSpace::new(vec![ParamSpec::integer("k", 0, 3)]).unwrap();
    let mut bench = TabularBenchmark::new("t", space);
    let entry = TableEntry { performance: 1.0, runtime_seconds: None };
    assert!(bench.insert(Configuration::new(vec![ParamValue::Int(9)]), entry).is_err());
    let bad = TableEntry { performance: f64::INFINITY, runtime_seconds: None };
    assert!(bench.insert(Configuration::new(vec![ParamValue::Int(1)]), bad).is_err());
}
