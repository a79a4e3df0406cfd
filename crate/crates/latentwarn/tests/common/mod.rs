//! Helpers for driving the binary from integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use latentwarn::io::write_table;
use latentwarn_core::Matrix;
use serde_json::json;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_latentwarn"))
}

pub fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    p
}

pub fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes `coords` as if `embed` had produced them, so later stages can run
/// on a known trajectory.
pub fn fake_embedding(out: &Path, coords: &Matrix, dt: f64) {
    fs::create_dir_all(out).unwrap();
    let meta = json!({
        "directed": true,
        "kernel": {"epsilon": 1.0, "directed": true, "gradient_source": "finite-difference-of-data"},
        "eigenvalues": [0.9],
        "coordinate_offset": 0,
        "dimension": {"mode": "fixed", "gaps": [], "chosen": coords.cols()},
        "kernel_summary": {"max_row_sum_error": 0.0, "symmetric": false, "lambda_1": 0.9},
        "flipped": [],
        "rows": coords.rows(),
        "dt": dt
    });
    fs::write(out.join("embedding_directed.json"), meta.to_string()).unwrap();
    let names = latentwarn::io::numbered("phi", coords.cols());
    write_table(&out.join("embedding_directed_coordinates.csv"), Some(&names), coords).unwrap();
}
