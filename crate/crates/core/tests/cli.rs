use std::path::Path;
use std::process::{Command, Output};

use subspace_embed::fixtures::{write_suite, SuitePaths};
use subspace_embed::io::{read_emb1, BasisDocument};

fn subembed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subembed"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    subembed(args).status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn suite() -> (tempfile::TempDir, SuitePaths) {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_suite(dir.path()).unwrap();
    (dir, paths)
}

#[test]
fn fit_writes_output_and_report() {
    let (dir, s) = suite();
    let report = dir.path().join("report.json");
    assert_eq!(
        code(&["fit", "--config", p(&s.run_configs[0]), "--report", p(&report)]),
        0
    );
    let fitted = read_emb1(dir.path().join("anarsa_fitted.emb1")).unwrap();
    assert_eq!(fitted.len(), 1);
    assert!(fitted.get("anarsa").is_some());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["class_name"], "anarsa");
}

#[test]
fn fit_seq_writes_every_class() {
    let (dir, s) = suite();
    assert_eq!(code(&["fit-seq", "--config", p(&s.seq_config)]), 0);
    for name in ["anarsa", "malapua"] {
        assert!(dir.path().join(format!("{name}_fitted.emb1")).exists());
    }
}

#[test]
fn fit_missing_exemplars_names_the_path() {
    let (dir, s) = suite();
    std::fs::remove_file(&s.exemplars).unwrap();
    let out = subembed(&["fit", "--config", p(&s.run_configs[0])]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("anarsa_exemplars.emb1"), "{stderr}");
    assert!(!dir.path().join("anarsa_fitted.emb1").exists());
}

#[test]
fn fit_rejects_unknown_config_keys() {
    let (dir, s) = suite();
    let text = std::fs::read_to_string(&s.run_configs[0]).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, text.replacen('{', "{\"lambda3\": 1.0,", 1)).unwrap();
    assert_eq!(code(&["fit", "--config", p(&bad)]), 2);
}

#[test]
fn pca_with_labels_reports_ratios() {
    let (dir, s) = suite();
    let out = dir.path().join("basis.json");
    let args = [
        "pca",
        "--input",
        p(&s.hierarchical),
        "--labels",
        p(&s.hierarchical_labels),
        "--out",
        p(&out),
    ];
    assert_eq!(code(&args), 0);
    let doc = BasisDocument::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc.suggested_k, Some(1));
    assert_eq!(doc.components.len(), doc.eigenvalues.len());

    let too_large = ["pca", "--input", p(&s.hierarchical), "--k", "999", "--out", p(&out)];
    assert_eq!(code(&too_large), 2);
}

#[test]
fn classify_writes_csv() {
    let (dir, s) = suite();
    let out = dir.path().join("acc.csv");
    let args = [
        "eval",
        "classify",
        "--classes",
        p(&s.three_class_classes),
        "--images",
        p(&s.three_class_images),
        "--labels",
        p(&s.three_class_labels),
        "--out",
        p(&out),
    ];
    assert_eq!(code(&args), 0);
    let csv = std::fs::read_to_string(out).unwrap();
    assert!(csv.starts_with("class,correct,total,accuracy\n"));
    assert!(csv.contains("overall,7,9,"), "{csv}");
}

#[test]
fn classify_with_unlabelled_image_is_invalid() {
    let (dir, s) = suite();
    let labels = dir.path().join("short.csv");
    std::fs::write(&labels, "name,label\nr0,red\n").unwrap();
    let args = [
        "eval",
        "classify",
        "--classes",
        p(&s.three_class_classes),
        "--images",
        p(&s.three_class_images),
        "--labels",
        p(&labels),
    ];
    assert_eq!(code(&args), 2);
}

#[test]
fn retrieve_and_neighbors() {
    let (_dir, s) = suite();
    let query = format!("{}:red", p(&s.three_class_classes));
    let out = subembed(&[
        "eval",
        "retrieve",
        "--query",
        &query,
        "--gallery",
        p(&s.three_class_images),
        "--labels",
        p(&s.three_class_labels),
        "--k",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["precision"], 1.0);

    let query = format!("{}:anarsa", p(&s.vocab));
    assert_eq!(
        code(&["neighbors", "--query", &query, "--vocab", p(&s.vocab), "--n", "3"]),
        0
    );
    let missing = format!("{}:nosuchword", p(&s.vocab));
    assert_eq!(
        code(&["neighbors", "--query", &missing, "--vocab", p(&s.vocab), "--n", "3"]),
        2
    );
}

#[test]
fn baseline_filter_project_gradcheck() {
    let (dir, s) = suite();
    let out = dir.path().join("means.emb1");
    let args = [
        "baseline",
        "mean-image",
        "--exemplars",
        p(&s.held_out),
        "--labels",
        p(&s.held_out_labels),
        "--out",
        p(&out),
    ];
    assert_eq!(code(&args), 0);
    assert_eq!(read_emb1(&out).unwrap().len(), 2);

    assert_eq!(
        code(&[
            "filter-negatives",
            "--candidates",
            p(&s.vocab),
            "--exemplars",
            p(&s.exemplars),
            "--keep",
            "3"
        ]),
        0
    );
    assert_eq!(
        code(&[
            "filter-negatives",
            "--candidates",
            p(&s.vocab),
            "--exemplars",
            p(&s.exemplars),
            "--keep",
            "0"
        ]),
        2
    );

    let coords = dir.path().join("coords.json");
    assert_eq!(
        code(&["project2d", "--input", p(&s.hierarchical), "--out", p(&coords)]),
        0
    );

    assert_eq!(code(&["gradcheck", "--seed", "3"]), 0);
}

#[test]
fn usage_errors_exit_two_and_write_errors_exit_one() {
    let (_dir, s) = suite();
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["fit"]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
    let report = s.dir.join("missing-dir").join("report.json");
    assert_eq!(
        code(&["fit", "--config", p(&s.run_configs[0]), "--report", p(&report)]),
        1
    );
}
