use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoadic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn data(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn analyze_normalizer() {
    let out = run(&["analyze", "--group", "N_{-7,0}", "--level", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["order"], 256);
    assert_eq!(v["minus_id"], true);
    assert_eq!(v["level_stable"], true);
    assert_eq!(v["level_stable_gl2"], false);
    assert_eq!(v["torsion"], serde_json::json!([1, 2]));
    assert_eq!(v["c2_count"], 2);
    assert_eq!(
        v["cyclic_subgroups"][1]["generator"],
        serde_json::json!([8, 8])
    );
}

#[test]
fn analyze_inline_and_file_groups_agree() {
    let inline = r#"{"generators": [[[-1,0],[0,-1]],[[0,1],[-7,0]],[[3,0],[0,3]],[[2,1],[-7,2]],[[-1,0],[0,1]]], "ambient": [-7, 0]}"#;
    let a = run(&["analyze", "--group", inline, "--level", "4"]);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    std::fs::write(&path, inline).unwrap();
    let b = run(&[
        "analyze",
        "--group-file",
        path.to_str().unwrap(),
        "--level",
        "4",
    ]);
    let c = run(&["analyze", "--group", path.to_str().unwrap(), "--level", "4"]);
    let named = json(&run(&["analyze", "--group", "N_{-7,0}", "--level", "4"]));
    for v in [json(&a), json(&b), json(&c)] {
        assert_eq!(v["order"], named["order"]);
        assert_eq!(v["torsion"], named["torsion"]);
        assert_eq!(v["level_stable"], named["level_stable"]);
    }
}

#[test]
fn push_lands_on_expected_level() {
    let out = run(&[
        "push",
        "--group",
        "TableA.49a.E1",
        "--level",
        "5",
        "--kernel",
        "16,16",
        "--order",
        "2",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(json(&out)["level"], 4);

    let wrong_order = run(&[
        "push",
        "--group",
        "TableA.49a.E1",
        "--level",
        "5",
        "--kernel",
        "16,16",
        "--order",
        "4",
    ]);
    assert_eq!(wrong_order.status.code(), Some(2));
    let unstable = run(&[
        "push",
        "--group",
        "TableA.49a.E1",
        "--level",
        "5",
        "--kernel",
        "16,0",
        "--order",
        "2^1",
    ]);
    assert_eq!(unstable.status.code(), Some(2));
}

#[test]
fn graph_writes_dot() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("g.dot");
    let out = run(&[
        "graph",
        "--group",
        "TableA.32a.E1",
        "--level",
        "6",
        "--dot",
        dot.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["shape"], "T4");
    assert_eq!(v["vertices"].as_array().unwrap().len(), 4);
    let text = std::fs::read_to_string(&dot).unwrap();
    assert!(text.starts_with("graph"));
    assert_eq!(text.matches("--").count(), 3);

    assert_eq!(
        run(&["graph", "--group", "TableA.32a.E1", "--level", "4"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn verify_tables_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = run(&["verify-tables", "--json", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["total"], 21);
    assert_eq!(v["passed"], 21);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(saved, v);
    let table = String::from_utf8_lossy(&out.stderr);
    assert!(table.contains("21/21 rows pass at level 5 (16 graph-torsion types)"));
}

#[test]
fn verify_tables_negative_fixtures() {
    let out = run(&[
        "verify-tables",
        "--fixtures",
        &data("negative/non_surjective_det.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    let checks = v["rows"][0]["checks"].as_array().unwrap();
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"DET"), "{failed:?}");
}

#[test]
fn malformed_fixtures_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("empty.json", ""),
        ("garbage.json", "{not json"),
        ("version.json", r#"{"version": 2, "rows": []}"#),
        (
            "unknown.json",
            r#"{"version": 1, "rows": [{"row_id": "x", "graph_type": "L2(2)", "torsion_config": [[2],[2]],
                "vertices": [{"id": "E1", "group": "nope"}, {"id": "E2", "group": "nope"}],
                "edges_2": [[1, 2]], "edges_odd": []}]}"#,
        ),
    ];
    for (name, text) in cases {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        let out = run(&["verify-tables", "--fixtures", path.to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let missing = run(&["verify-tables", "--fixtures", "/nonexistent/fixture.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn verify_single_row() {
    let out = run(&["verify-tables", "--row", "TableA.32a"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["total"], 1);
    assert_eq!(
        run(&["verify-tables", "--row", "nope"]).status.code(),
        Some(2)
    );
}

#[test]
fn hensel_golden() {
    let out = run(&["hensel", "--poly", "1,0,7", "--seed", "1", "--level", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["root"], 29);
    assert_eq!(v["residue"], 0);
    assert_eq!(v["start_j"], 3);
    assert_eq!(v["poly"], "7x^2 + 1");
    assert_eq!(v["chain"].as_array().unwrap().len(), 5);

    let bad = run(&["hensel", "--poly", "1,0,1", "--seed", "0", "--level", "4"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn catalog_listing() {
    let out = run(&["catalog", "--list"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let names: Vec<&str> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["name"].as_str().unwrap())
        .collect();
    for n in ["N_{-1,1}", "G_{4,b}+c1", "TableA.49a.E1", "c1"] {
        assert!(names.contains(&n), "{n}");
    }
    let one = run(&["catalog", "--name", "N_{-7,0}", "--level", "2"]);
    assert_eq!(json(&one)["level"], 2);
    assert_eq!(
        run(&["catalog", "--name", "nope", "--level", "2"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec![],
        vec!["analyze"],
        vec!["analyze", "--group", "N_{-1,1}", "--level", "9"],
        vec!["analyze", "--group", "N_{-1,1}", "--level", "1"],
        vec!["analyze", "--group", "{\"generators\": []}"],
        vec!["bogus"],
    ] {
        assert_eq!(run(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn output_is_deterministic() {
    let a = run(&["graph", "--group", "TableA.64a.E1", "--level", "6"]);
    let b = run(&["graph", "--group", "TableA.64a.E1", "--level", "6"]);
    assert_eq!(a.stdout, b.stdout);
}
