//! End-to-end runs of the command line front end.

use std::path::{Path, PathBuf};

use porehom::io::cli::{dispatch, StudyReport};
use porehom::io::output::Manifest;

fn config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/default.cfg")
        .display()
        .to_string()
}

fn run(args: &[&str]) -> i32 {
    dispatch(std::iter::once("porehom").chain(args.iter().copied()))
}

fn files(dir: &Path, prefix: &str, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_string_lossy();
            name.starts_with(prefix) && name.ends_with(suffix)
        })
        .collect();
    v.sort();
    v
}

fn assert_manifest_complete(dir: &Path) {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    let manifest: Manifest = serde_json::from_str(&text).unwrap();
    let listed: Vec<&str> = manifest.files.iter().map(|f| f.path.as_str()).collect();
    for entry in std::fs::read_dir(dir).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().into_owned();
        assert!(
            listed.contains(&name.as_str()),
            "{name} missing from manifest"
        );
    }
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&[]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["cell"]), 2);
    assert_eq!(
        run(&["micro", "--config", "x.cfg", "--trace-point", "1"]),
        2
    );
    assert_eq!(run(&["macro", "--config", "x.cfg", "--tensor", "1,0"]), 2);
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.cfg");
    assert_eq!(run(&["cell", "--config", missing.to_str().unwrap()]), 1);

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "params.dleta = 0.01\n").unwrap();
    assert_eq!(run(&["cell", "--config", bad.to_str().unwrap()]), 1);

    let out = dir.path().join("out");
    let cfg = config();
    // 1.2 is not a multiple of 0.25
    assert_eq!(
        run(&[
            "mesh",
            "--config",
            &cfg,
            "--eps",
            "0.25",
            "--out",
            out.to_str().unwrap()
        ]),
        1
    );
}

#[test]
fn cell_then_macro_from_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let cell_out = dir.path().join("cell");
    assert_eq!(
        run(&[
            "cell",
            "--config",
            &cfg,
            "--out",
            cell_out.to_str().unwrap()
        ]),
        0
    );
    assert!(cell_out.join("cell_report.json").is_file());
    assert_manifest_complete(&cell_out);

    let macro_out = dir.path().join("macro");
    let report = cell_out.join("cell_report.json");
    assert_eq!(
        run(&[
            "macro",
            "--config",
            &cfg,
            "--cell-report",
            report.to_str().unwrap(),
            "--t-final",
            "0.2",
            "--h-macro",
            "0.1",
            "--out",
            macro_out.to_str().unwrap(),
        ]),
        0
    );
    // samples at t = 0, 0.1, 0.2
    assert_eq!(files(&macro_out, "macro_", ".vtk").len(), 3);
    assert_manifest_complete(&macro_out);
}

#[test]
fn macro_with_tensor_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let out = dir.path().join("m");
    assert_eq!(
        run(&[
            "macro",
            "--config",
            &cfg,
            "--tensor",
            "0.8,0,0.8",
            "--t-final",
            "0.1",
            "--h-macro",
            "0.1",
            "--out",
            out.to_str().unwrap(),
        ]),
        0
    );
    assert!(out.join("macro_trace.csv").is_file());
}

#[test]
fn micro_writes_one_snapshot_per_regular_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let out = dir.path().join("micro");
    assert_eq!(
        run(&[
            "micro",
            "--config",
            &cfg,
            "--t-final",
            "0.5",
            "--h-micro",
            "0.25",
            "--trace-point",
            "0.6,0.5",
            "--trace-point",
            "0.02,0.02",
            "--out",
            out.to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(files(&out, "micro_", ".vtk").len(), 6);
    let header = std::fs::read_to_string(out.join("micro_trace.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert!(header.contains("u_p1"));
    assert_manifest_complete(&out);
}

#[test]
fn converge_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let out = dir.path().join("study");
    assert_eq!(
        run(&[
            "converge",
            "--config",
            &cfg,
            "--eps",
            "0.2",
            "--t-final",
            "0.1",
            "--h-micro",
            "0.25",
            "--h-macro",
            "0.1",
            "--out",
            out.to_str().unwrap(),
        ]),
        0
    );
    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    let report: StudyReport = serde_json::from_str(&text).unwrap();
    assert_eq!(
        serde_json::to_string_pretty(&report).unwrap().trim(),
        text.trim()
    );
    assert_eq!(report.rows.len(), 1);
    assert!(report.rows[0].norm_u_c_l2.is_finite());
    let norms = std::fs::read_to_string(out.join("norms.csv")).unwrap();
    assert_eq!(norms.lines().count(), 2);
    assert_manifest_complete(&out);
}
