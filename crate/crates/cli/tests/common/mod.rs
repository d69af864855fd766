#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use psc_core::{solve_operating_point, ExperimentalDataset, ModelParameters, OperatingProblem};

pub fn psc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psc"))
        .args(args)
        .output()
        .expect("psc binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn generating_k(r: f64) -> f64 {
    1e-4 * (r / 1000.0).powf(-0.7)
}

pub fn geometric(start: f64, stop: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| start * (stop / start).powf(i as f64 / (count - 1) as f64))
        .collect()
}

pub fn forward(r_ext: f64, k: f64, x: f64, params: &ModelParameters) -> (f64, f64) {
    let pt = solve_operating_point(&OperatingProblem::new(r_ext, k, x, *params).unwrap()).unwrap();
    (pt.v, pt.i)
}

/// Noiseless forward-model data on a geometric 100 Ω – 1 MΩ grid with the
/// default alternating split.
pub fn synthetic_dataset(count: usize) -> ExperimentalDataset {
    let p = ModelParameters::default();
    let points: Vec<(f64, f64, f64)> = geometric(100.0, 1e6, count)
        .into_iter()
        .map(|r| {
            let (v, i) = forward(r, generating_k(r), p.x0, &p);
            (r, v, i)
        })
        .collect();
    ExperimentalDataset::with_default_split(&points).unwrap()
}

pub fn write_dataset(dir: &Path, name: &str, data: &ExperimentalDataset) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, data.to_csv()).unwrap();
    path
}

/// Parses a CSV with a header into rows of numbers.
pub fn read_rows(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.trim().parse().unwrap()).collect())
        .collect()
}

/// Every file in `dir` with its bytes, sorted by name.
pub fn snapshot_dir(dir: &Path, skip: &[&str]) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .filter(|(name, _)| !skip.contains(&name.as_str()))
        .map(|(name, path)| (name, std::fs::read(path).unwrap()))
        .collect();
    files.sort();
    files
}
