use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sidl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sidl"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = sidl(&[
        "run",
        "--algo",
        "ucirc",
        "--synthetic",
        "n=20,N=500,L=10,q=3,s=4,snr=30",
        "--iters",
        "50",
        "--seed",
        "7",
        "-o",
        path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("ucirc seed=7"), "{stdout}");
    for f in [
        "objective.csv",
        "utilization.csv",
        "recovery.csv",
        "generators.simx",
        "dictionary.simx",
    ] {
        assert!(out.join("seed-7").join(f).exists(), "{f}");
    }
    let o = sidl(&["report", path(&out)]);
    assert_eq!(code(&o), 0);
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.starts_with("algorithm"));
    assert_eq!(table.lines().count(), 2);
}

#[test]
fn deterministic_csvs_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("r{i}"));
        let o = sidl(&[
            "--deterministic",
            "run",
            "--algo",
            "ucdla_block",
            "--synthetic",
            "n=16,N=200,L=4,q=2,s=3,snr=25",
            "-K",
            "10",
            "--seeds",
            "3",
            "-o",
            path(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let files: Vec<Vec<u8>> = ["objective.csv", "utilization.csv", "recovery.csv"]
            .iter()
            .map(|f| fs::read(out.join("seed-3").join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn gen_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = sidl(&[
        "gen",
        "--synthetic",
        "n=10,N=40,L=3,q=2,s=2,seed=1",
        "--out",
        path(&data),
    ]);
    assert_eq!(code(&o), 0);
    assert!(data.join("Y.simx").exists() && data.join("occurrences.csv").exists());

    let out = dir.path().join("sweep");
    let o = sidl(&[
        "sweep",
        "--algo",
        "ucirc,block",
        "--synthetic",
        "n=10,N=60,L=3,q=2,s=2",
        "-K",
        "4",
        "--seeds",
        "0..2",
        "--param",
        "snr",
        "--values",
        "10,30",
        "-o",
        path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv::Reader::from_path(out.join("sweep.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 2 * 2 * 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // Haar filters have two taps
    let o = sidl(&[
        "run",
        "--algo",
        "wdla",
        "--images",
        "-n",
        "4",
        "-m",
        "5",
        "--init",
        "haar",
        "-o",
        path(dir.path()),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = sidl(&["run", "--algo", "nonsense", "--synthetic", "n=8,N=10,L=2,q=2,s=1"]);
    assert_eq!(code(&o), 2);
    let o = sidl(&[
        "run",
        "--algo",
        "ucirc",
        "--matrix",
        "/nonexistent/file.simx",
        "-o",
        path(dir.path()),
    ]);
    assert_eq!(code(&o), 1);
    let o = sidl(&["report", path(dir.path())]);
    assert_eq!(code(&o), 1);
}
