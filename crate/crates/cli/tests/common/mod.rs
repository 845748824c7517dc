#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn moirl<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_moirl"))
        .args(args)
        .output()
        .expect("failed to launch moirl")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes preset `name` into `dir` and returns its path.
pub fn preset_file(dir: &Path, name: &str) -> std::path::PathBuf {
    let path = dir.join(format!("{name}.toml"));
    let out = moirl(["preset", name, "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    path
}

/// Writes the demonstration for the environment at `env` next to it.
pub fn demo_file(dir: &Path, env: &Path) -> std::path::PathBuf {
    let path = dir.join("demo.csv");
    let out = moirl([
        "demo",
        "--env",
        env.to_str().unwrap(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    path
}

/// Metrics CSV with the wall-clock column dropped.
pub fn metrics_without_clock(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| line.rsplit_once(',').map_or(line, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}
