mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use expand_cluster::cli::OUTPUT_DIR_ENV;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_expand-cluster"));
    c.env_remove(OUTPUT_DIR_ENV);
    c
}

fn run(cmd: &str, config: &Path, extra: &[&str]) -> Output {
    bin().arg(cmd).arg("--config").arg(config).args(extra).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn tiny_data(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let out = bin()
        .args(["synth-data", "--n", "300", "--ood", "50", "--side", "6", "--out"])
        .arg(&data)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    data
}

/// A run small enough for debug builds: r = 3 teacher, three width-6 students.
fn tiny_config(dir: &Path, data: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"
seed = 4
output_dir = "run"

[teacher]
images = "{data}/digits-images.idx"
labels = "{data}/digits-labels.idx"
r = 3
train = {{ learning_rate = 3e-3, batch_size = 64, max_steps = 100 }}

[query]
base_subset = 100

[query.augmentation]
strategy = "biased_noise"
magnitude = 1.0

[students]
n = 3
rho = 2
train = {{ learning_rate = 5e-3, batch_size = 64, max_steps = 150, eval_every = 50 }}

[reconstruct]
gamma = 0.5
beta = 1.0
fine_tune = {{ learning_rate = 1e-3, batch_size = 1000, max_steps = 20, eval_every = 10 }}

[[eval]]
name = "garments"
images = "{data}/garments-images.idx"
labels = "{data}/garments-labels.idx"
{extra}
"#,
        data = data.display()
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = tiny_config(dir.path(), &data, "");
    let out = run("pipeline", &cfg, &[]);
    let root = dir.path().join("run");
    assert!(matches!(code(&out), 0 | 4), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["teacher.ecm", "queries.ecq", "students_summary.csv", "report.csv", "losses.csv", "variability.csv", "histogram.csv"] {
        assert!(root.join(f).is_file(), "missing {f}");
    }
    let report = fs::read_to_string(root.join("report.csv")).unwrap();
    assert!(report.starts_with("Method,r,N,m/r,<d(w)>,max d(w),<d(a)>,max d(a),Q"), "{report}");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = tiny_config(dir.path(), &data, "[metrics]\nbinz = 3\n");
    let out = run("train-teacher", &cfg, &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("binz"));
}

#[test]
fn missing_dataset_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = tiny_config(dir.path(), &data, "");
    fs::remove_file(data.join("digits-images.idx")).unwrap();
    let out = run("pipeline", &cfg, &[]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("run").exists());
}

#[test]
fn unclusterable_students_exit_4_with_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = tiny_config(dir.path(), &data, "");
    // a cut at 1e-15 with every student required accepts nothing
    let text = fs::read_to_string(&cfg).unwrap().replace("gamma = 0.5\nbeta = 1.0", "gamma = 1.0\nbeta = 15.0");
    fs::write(&cfg, text).unwrap();
    let out = run("pipeline", &cfg, &[]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("run/report.csv")).unwrap();
    let row = report.lines().nth(1).unwrap();
    assert!(row.contains(",0.00,nan,"), "{row}");
    assert!(!dir.path().join("run/reconstructed.ecm").exists());
}

#[test]
fn stage_without_its_inputs_fails() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = tiny_config(dir.path(), &data, "");
    let out = run("build-queries", &cfg, &[]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("teacher model not found"));
}

#[test]
fn students_do_not_depend_on_jobs_and_resume_reuses_models() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = tiny_config(dir.path(), &data, "");
    assert_eq!(code(&run("train-teacher", &cfg, &[])), 0);
    assert_eq!(code(&run("build-queries", &cfg, &[])), 0);
    let root = dir.path().join("run");
    let other = dir.path().join("other");
    fs::create_dir_all(&other).unwrap();
    for f in ["teacher.ecm", "queries.ecq", "standardization.toml"] {
        fs::copy(root.join(f), other.join(f)).unwrap();
    }

    assert_eq!(code(&run("train-students", &cfg, &["--jobs", "1"])), 0);
    let out = run("train-students", &cfg, &["--jobs", "3", "--out", other.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    for i in 0..3 {
        let name = format!("students/student_{i:03}.ecm");
        assert_eq!(fs::read(root.join(&name)).unwrap(), fs::read(other.join(&name)).unwrap(), "{name}");
    }

    let kept = fs::read(root.join("students/student_000.ecm")).unwrap();
    fs::remove_file(root.join("students/student_001.ecm")).unwrap();
    assert_eq!(code(&run("train-students", &cfg, &["--resume"])), 0);
    assert_eq!(fs::read(root.join("students/student_000.ecm")).unwrap(), kept);
    assert_eq!(
        fs::read(root.join("students/student_001.ecm")).unwrap(),
        fs::read(other.join("students/student_001.ecm")).unwrap()
    );
    let rows = common::csv_rows(&root.join("students_summary.csv"));
    let status: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(status, ["resumed", "trained", "resumed"]);
}

#[test]
fn output_dir_environment_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = tiny_config(dir.path(), &data, "");
    let elsewhere = dir.path().join("elsewhere");
    let out = bin().env(OUTPUT_DIR_ENV, &elsewhere).arg("train-teacher").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(elsewhere.join("teacher.ecm").is_file());
    assert!(!dir.path().join("run").exists());
}
