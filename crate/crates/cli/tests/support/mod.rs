#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_readoutchar"));
    c.env_remove("READOUTCHAR_THREADS");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

pub fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn write_config(dir: &Path, name: &str, value: &serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

/// Reduced shot counts that keep every protocol well inside its guards.
pub fn quick_plan() -> serde_json::Value {
    serde_json::json!({
        "sweep_points": 25,
        "sweep_shots": 20000,
        "ringdown_shots": 20000,
        "efficiency_shots": 5000,
        "efficiency_bins": 24,
        "readout_shots": 5000,
        "readout_bins": 100
    })
}

pub fn device(chi: f64, kappa: f64, eta: f64) -> serde_json::Value {
    serde_json::json!({
        "omega_r": 37699.11184307752,
        "chi": chi,
        "kappa": kappa,
        "eta": eta,
        "drive_gain": 1.3,
        "operating": { "nbar": 2.0 }
    })
}

/// Every file in `dir`, sorted, excluding the wall-clock timing record.
pub fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}
