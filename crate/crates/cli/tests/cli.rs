use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linkhodge"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON report")
}

#[test]
fn gen_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["gen", "--family", "octahedron", "-o", "oct.wsc"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["validate", "oct.wsc"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["valid"], true);
    assert_eq!(v["config"]["args"]["command"]["name"], "validate");
}

#[test]
fn validate_rejects_broken_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.wsc"),
        "{\"format\":\"wsc-v1\",\"include_empty\":false,\"empty_weight\":1}\n{\"s\":[1,2],\"m\":1}\n",
    )
    .unwrap();
    let out = run(&["validate", "bad.wsc"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["valid"], false);
}

#[test]
fn usage_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(64));
    assert_eq!(
        run(&["defect", "--family", "nope", "--levels", "3"], dir.path())
            .status
            .code(),
        Some(64)
    );
    assert_eq!(run(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn classify_tree_link_is_transient() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "classify-link",
            "--family",
            "cone_over_tree",
            "--rho",
            "apex",
            "--levels",
            "10..16",
            "--csv",
            "r.csv",
        ],
        dir.path(),
    );
    let v = json(&out);
    assert_eq!(v["result"]["verdict"], "Transient");
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.starts_with("# {"));
    assert_eq!(csv.lines().count(), 2 + 7);
}

#[test]
fn star_link_is_recurrent() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&run(
        &["classify-link", "--family", "star_link", "--levels", "12"],
        dir.path(),
    ));
    assert_eq!(v["result"]["verdict"], "Recurrent");
}

#[test]
fn strict_undetermined_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["classify-link", "--graph", "lattice:2", "--levels", "1..4"];
    assert_eq!(run(&args, dir.path()).status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(run(&strict, dir.path()).status.code(), Some(2));
}

#[test]
fn defect_matches_prediction_on_tree_cone() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&run(
        &[
            "defect",
            "--family",
            "cone_over_tree",
            "--rho",
            "apex",
            "--levels",
            "10..16",
            "--check-property",
        ],
        dir.path(),
    ));
    let w = &v["result"]["witness"];
    let predicted = w["predicted"].as_f64().unwrap();
    let last = w["defects"]
        .as_array()
        .unwrap()
        .last()
        .unwrap()
        .as_f64()
        .unwrap();
    assert!((last - predicted).abs() < 0.01 * predicted);
    assert_eq!(v["result"]["property"]["verdict"], "Fails");
}

#[test]
fn path_cone_bound_holds() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&run(
        &[
            "defect",
            "--family",
            "cone_over_path",
            "--levels",
            "3..6",
            "--bound-forms",
            "10",
        ],
        dir.path(),
    ));
    for b in v["result"]["bounds"].as_array().unwrap() {
        assert_eq!(b["violations"], 0);
    }
}

#[test]
fn tprime_modes() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&run(
        &[
            "tprime",
            "--family",
            "cone_over_tree:2",
            "--sigma",
            "0,1",
            "--mode",
            "local:0",
            "--levels",
            "10..13",
        ],
        dir.path(),
    ));
    assert_eq!(v["result"]["solvable"], true);
    assert_eq!(v["result"]["report"]["bounded"], true);
    let v = json(&run(
        &[
            "tprime",
            "--family",
            "octahedron",
            "--sigma",
            "0,2",
            "--mode",
            "global",
            "--levels",
            "0",
        ],
        dir.path(),
    ));
    assert_eq!(v["result"]["solvable"], false);
}

#[test]
fn hodge_and_spectrum_on_torus() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&run(
        &["hodge", "--family", "torus_grid:7x7", "--samples", "3"],
        dir.path(),
    ));
    let betti: Vec<u64> = v["result"]["betti"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["betti"].as_u64().unwrap())
        .collect();
    assert_eq!(betti, [1, 2, 1]);
    let v = json(&run(
        &[
            "spectrum",
            "--family",
            "full_simplex:3",
            "--tag",
            "up",
            "--degree",
            "0",
        ],
        dir.path(),
    ));
    let ev: Vec<f64> = v["result"]["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(ev[0].abs() < 1e-12 && ev[1..].iter().all(|x| (x - 4.0).abs() < 1e-12));
}

#[test]
fn links_report_components() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&run(
        &["links", "--family", "octahedron", "--rho", "0"],
        dir.path(),
    ));
    assert_eq!(v["result"]["components"].as_array().unwrap().len(), 1);
    assert_eq!(v["result"]["balancedness"]["sup"], 1.0);
}

#[test]
fn deterministic_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "walk",
        "--lattice",
        "3",
        "--walks",
        "20000",
        "--seed",
        "11",
        "--deterministic",
        "-o",
        "r.json",
    ];
    let mut reports = Vec::new();
    for _ in 0..2 {
        assert!(run(&args, dir.path()).status.success());
        reports.push(std::fs::read(dir.path().join("r.json")).unwrap());
    }
    assert!(!reports[0].is_empty());
    assert_eq!(reports[0], reports[1]);
    let v: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(v["result"]["seed"], 11);
    assert_eq!(v["config"]["args"]["seed"], 11);
}
