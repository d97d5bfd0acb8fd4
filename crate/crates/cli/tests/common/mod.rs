#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SIM_CONFIG: &str = "\
nu = 0.3, 0.3
alpha = 0.7, 0.9, 0.6, 1.0
beta = 1.5, 2.0, 2.0, 3.5
horizon = 200
delta = 1
";

pub fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hawkes-agg"));
    cmd.args(args).env_remove("HAWKES_AGG_THREADS");
    if let Some(t) = threads {
        cmd.env("HAWKES_AGG_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args, None);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

pub fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file of a directory with its bytes, sorted by name.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}
