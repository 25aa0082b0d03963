use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn seigmap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seigmap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn arc_writes_fixture() {
    let dir = TempDir::new().unwrap();
    ok(seigmap(&["arc", "--out", "arc.csv"], dir.path()));
    let text = fs::read_to_string(dir.path().join("arc.csv")).unwrap();
    assert_eq!(text.lines().count(), 400);
    assert!(text.lines().all(|l| l.split(',').count() == 3));
}

#[test]
fn arc_sweep_shrinks_the_endpoint_gap() {
    let dir = TempDir::new().unwrap();
    let out = ok(seigmap(&["arc", "--sweep", "0.01,0.05,0.1,1"], dir.path()));
    let gaps: Vec<f64> = out
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(gaps.len(), 4);
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn embed_then_classify() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(seigmap(&["arc", "--out", "arc.csv"], p));
    fs::write(p.join("potential.json"), json!([{"type": "pair", "indices": [0, 399]}]).to_string()).unwrap();
    let out = ok(seigmap(
        &["embed", "--input", "arc.csv", "--alpha", "0.1", "--potential", "potential.json", "--out", "e.json"],
        p,
    ));
    assert!(out.contains("400 points, 2 dimensions"), "{out}");
    let e: Value = serde_json::from_str(&fs::read_to_string(p.join("e.json")).unwrap()).unwrap();
    assert_eq!(e["shape"], json!([400, 2]));

    let head: Vec<usize> = (0..10).collect();
    let mid: Vec<usize> = (195..205).collect();
    fs::write(p.join("groups.json"), json!([["head", head], ["mid", mid]]).to_string()).unwrap();
    let out = ok(seigmap(
        &["classify", "--embedding", "e.json", "--fit", "groups.json", "--save-model", "m.json", "--out", "labels.txt"],
        p,
    ));
    assert!(out.contains("zero-class: 0"), "{out}");
    let labels = fs::read_to_string(p.join("labels.txt")).unwrap();
    assert_eq!(labels.lines().count(), 400);
    assert_eq!(labels.lines().next(), Some("head"));

    // a saved model reloads, and a huge threshold sends everything to the zero class
    let out = ok(seigmap(
        &["classify", "--embedding", "e.json", "--model", "m.json", "--threshold", "1e9"],
        p,
    ));
    assert!(out.contains("zero-class: 400"), "{out}");
}

#[test]
fn classify_scores_against_truth() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(seigmap(&["arc", "--out", "arc.csv"], p));
    ok(seigmap(&["embed", "--input", "arc.csv", "--out", "e.json"], p));
    let arc = fs::read_to_string(p.join("arc.csv")).unwrap();
    let labeled: String = arc
        .lines()
        .enumerate()
        .map(|(i, l)| format!("{l},{}\n", if i < 200 { "a" } else { "b" }))
        .collect();
    fs::write(p.join("truth.csv"), labeled).unwrap();
    let a: Vec<usize> = (0..10).collect();
    let b: Vec<usize> = (390..400).collect();
    fs::write(p.join("groups.json"), json!([["a", a], ["b", b]]).to_string()).unwrap();
    let out = ok(seigmap(
        &["classify", "--embedding", "e.json", "--fit", "groups.json", "--truth", "truth.csv", "--label-column", "3"],
        p,
    ));
    let rate: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("error rate: "))
        .unwrap()
        .trim_end_matches('%')
        .parse()
        .unwrap();
    assert!(rate < 10.0, "{out}");
}

#[test]
fn bench_runs_on_a_small_manifest() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    // two lattice clusters, class 1 shifted away from class 0
    let mut rows = String::new();
    for i in 0..30 {
        let (x, y) = ((i % 6) as f64 * 0.3, (i / 6) as f64 * 0.3);
        rows.push_str(&format!("{x},{y},0\n{},{},1\n", x + 4.0, y + 4.0));
    }
    fs::write(p.join("toy.csv"), rows).unwrap();
    fs::write(
        p.join("manifest.toml"),
        "[[dataset]]\nid = \"toy\"\npath = \"toy.csv\"\nlabel_column = 2\n",
    )
    .unwrap();
    let out = ok(seigmap(
        &[
            "bench", "--dataset", "toy", "--manifest", "manifest.toml", "--train", "10", "--reps", "3", "--k", "5",
            "--sigma", "1", "--alpha", "0.1,1", "--no-honest", "--out", "t.csv", "--json", "r.json",
        ],
        p,
    ));
    assert!(out.contains("toy"), "{out}");
    let csv = fs::read_to_string(p.join("t.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
    let r: Value = serde_json::from_str(&fs::read_to_string(p.join("r.json")).unwrap()).unwrap();
    for cell in r["cells"].as_array().unwrap() {
        assert_eq!(cell["per_rep"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let out = seigmap(&["embed", "--input", "missing.csv", "--out", "e.json"], p);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));

    ok(seigmap(&["arc", "--out", "arc.csv"], p));
    fs::write(p.join("potential.json"), json!([{"type": "diag", "indices": [400]}]).to_string()).unwrap();
    let out = seigmap(
        &["embed", "--input", "arc.csv", "--alpha", "1", "--potential", "potential.json", "--out", "e.json"],
        p,
    );
    assert!(!out.status.success());

    let out = seigmap(&["classify", "--embedding", "e.json"], p);
    assert!(!out.status.success());
}
