//! Command-line behavior: exports, re-rendering, sweeps and exit codes.

use std::fs;
use std::path::Path;
use std::process::Command;

use sha2::{Digest, Sha256};

const SMALL: &str = "[explore]\nn_step = 300000\n[codebook]\nk = 40\n[similarity]\nn_min = 3\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sensorimotor"))
}

fn hashes(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timings.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), format!("{:x}", Sha256::digest(fs::read(&p).unwrap()))))
        .collect();
    out.sort();
    out
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path
}

#[test]
fn run_exports_everything_and_report_rerenders_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("run");
    let status = bin().args(["run", "--scenario", "default", "--seed", "4", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["scenario"], "default");
    assert_eq!(report["seed"], 4);
    assert_eq!(report["config"]["explore"]["n_step"], 300000);
    for name in report["artifacts"].as_array().unwrap() {
        assert!(out.join(name.as_str().unwrap()).is_file(), "missing {name}");
    }
    for name in ["ncut.csv", "similarity.csv", "heatmap.pgm", "codebook.json", "recon_0.ppm", "recon_0.json", "timings.json"] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let pgm = fs::read(out.join("heatmap.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n40 40\n255\n"));
    assert_eq!(pgm.len(), b"P5\n40 40\n255\n".len() + 1600);
    assert!(fs::read_to_string(out.join("ncut.csv")).unwrap().starts_with("N,ncut,delta\n"));

    let before = hashes(&out);
    let rr = bin().arg("report").arg("--in").arg(&out).output().unwrap();
    assert!(rr.status.success());
    assert_eq!(hashes(&out), before);
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let run = |dir: &str, threads: &str| {
        let out = tmp.path().join(dir);
        let s = bin()
            .env("RAYON_NUM_THREADS", threads)
            .args(["run", "--scenario", "linked", "--seed", "2", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(s.success());
        hashes(&out)
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "3"));
}

#[test]
fn steps_flag_overrides_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("o");
    let s = bin().args(["run", "--steps", "250000", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(s.success());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["explore"]["n_step"], 250000);
    assert_eq!(report["seed"], 1);
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("sw");
    let s = bin()
        .args(["sweep", "--scenario", "sweep_p_obj", "--values", "0.1,0.4", "--seeds", "1,2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(s.success());
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 4);
    assert!(lines[1].starts_with("grid.p_obj,0.1,1,"));
    assert!(lines[4].starts_with("grid.p_obj,0.4,2,"));
    for v in ["0.1", "0.4"] {
        for seed in [1, 2] {
            assert!(out.join(format!("grid.p_obj={v}")).join(format!("seed_{seed}")).join("report.json").is_file());
        }
    }
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code();
    assert_eq!(code(&["run", "--scenario", "nonsense"]), Some(1));
    assert_eq!(code(&["run", "--steps", "0"]), Some(1));
    assert_eq!(code(&["run", "--bogus-flag"]), Some(1));
    assert_eq!(code(&["sweep", "--scenario", "default"]), Some(1));
    assert_eq!(code(&["report", "--in", "/definitely/not/here"]), Some(2));
    assert_eq!(code(&["--help"]), Some(0));

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[grid]\nunknown_field = 3\n").unwrap();
    assert_eq!(bin().args(["run", "--config"]).arg(&bad).output().unwrap().status.code(), Some(1));
    // Too few steps for any admitted row: the clustering cannot proceed.
    fs::write(&bad, "[explore]\nn_step = 50\n").unwrap();
    let out = tmp.path().join("o");
    assert_eq!(bin().args(["run", "--config"]).arg(&bad).arg("--out").arg(&out).output().unwrap().status.code(), Some(2));
}
