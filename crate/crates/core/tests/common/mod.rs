#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use expand_cluster::cli::{self, ExperimentConfig};

/// Default `synth-data` output: 2000 digits, 1000 garments, 8x8, seed 1.
pub fn synthetic_dir(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    fs::create_dir_all(&data).unwrap();
    cli::write_synthetic_sets(&data, 2000, 1000, 8, 1).unwrap();
    data
}

/// Loads a config shipped under `configs/` with its data paths pointed at
/// `data` and its output at `out`.
pub fn shipped_config(name: &str, data: &Path, out: &Path) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let text = fs::read_to_string(&path).unwrap();
    let mut cfg = ExperimentConfig::from_toml_str(&text, &path).unwrap();
    let rebase = |p: &mut PathBuf| *p = data.join(p.file_name().unwrap());
    rebase(&mut cfg.teacher.images);
    rebase(&mut cfg.teacher.labels);
    for e in &mut cfg.eval {
        rebase(&mut e.images);
        rebase(&mut e.labels);
    }
    cfg.output_dir = out.to_path_buf();
    cfg.validate(&path).unwrap();
    cfg
}

/// Rows of a CSV file as string vectors, header excluded.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}
