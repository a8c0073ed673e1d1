//! Experiment orchestration: a TOML config drives teacher training, query
//! construction, student training, reconstruction and diagnostics.
//!
//! Every stage reads its inputs from and writes its outputs to one run
//! directory (see [`RunLayout`]), so stages can be run one at a time or
//! chained with [`cmd_pipeline`]. Relative paths in a config file are
//! resolved against the directory containing that file.
//!
//! Seeds: each stage uses `seed + <stage seed>` where `seed` is the
//! top-level value and the stage seed is the `seed` field of that stage's
//! train or augmentation table. Student `i` adds `i` on top.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{AugmentationKind, AugmentationSpec};
use crate::data::{self, ImageDataset, QuerySet, Standardization};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::metrics;
use crate::network::Mlp;
use crate::reconstruct::{self, ReconstructionReport, TableRow};
use crate::train::{self, HistoryPoint, StudentEnsemble, TrainConfig};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "EC_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub teacher: TeacherSection,
    pub query: QuerySection,
    pub students: StudentSection,
    #[serde(default)]
    pub reconstruct: ReconstructSection,
    #[serde(default)]
    pub eval: Vec<EvalSet>,
    #[serde(default)]
    pub metrics: MetricsSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherSection {
    /// IDX image file.
    pub images: PathBuf,
    /// IDX label file.
    pub labels: PathBuf,
    /// Average-pooling factor applied before anything else.
    #[serde(default = "one")]
    pub downsample: usize,
    /// Train on a seeded random subset of this size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<usize>,
    pub r: usize,
    #[serde(default = "teacher_train_defaults")]
    pub train: TrainConfig,
}

fn one() -> usize {
    1
}

fn teacher_train_defaults() -> TrainConfig {
    TrainConfig { learning_rate: 1e-3, batch_size: 256, max_steps: 2000, ..TrainConfig::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySection {
    /// Build queries from a seeded subset of the teacher's training images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_subset: Option<usize>,
    pub augmentation: AugmentationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentSection {
    pub n: usize,
    #[serde(default = "default_rho")]
    pub rho: usize,
    #[serde(default = "student_train_defaults")]
    pub train: TrainConfig,
}

fn default_rho() -> usize {
    4
}

fn student_train_defaults() -> TrainConfig {
    TrainConfig {
        learning_rate: 6e-3,
        batch_size: 128,
        max_steps: 60_000,
        eval_every: 470,
        target_loss: 1e-14,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSection {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "fine_tune_defaults")]
    pub fine_tune: TrainConfig,
}

fn default_gamma() -> f64 {
    0.75
}

fn default_beta() -> f64 {
    3.0
}

fn fine_tune_defaults() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        batch_size: 1 << 20,
        max_steps: 5000,
        eval_every: 10,
        target_loss: 1e-16,
        ..TrainConfig::default()
    }
}

impl Default for ReconstructSection {
    fn default() -> Self {
        Self { gamma: default_gamma(), beta: default_beta(), fine_tune: fine_tune_defaults() }
    }
}

/// An extra image set on which student imitation losses and teacher
/// variability are reported. It is standardised with the teacher's constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSet {
    pub name: String,
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Extra augmentations of the teacher's images whose pre-activation
    /// variability is reported next to the query set's.
    #[serde(default)]
    pub variability_strategies: Vec<AugmentationSpec>,
}

fn default_bins() -> usize {
    50
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { histogram_bins: default_bins(), variability_strategies: Vec::new() }
    }
}

fn config_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_path_buf(), message: message.into() }
}

impl ExperimentConfig {
    /// Parses TOML. Paths are left as written.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(origin, e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config serialisation: {e}")))
    }

    /// Reads, parses, resolves relative paths and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(path, e.to_string()))?;
        let mut cfg = Self::from_toml_str(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate(path)?;
        Ok(cfg)
    }

    /// Makes every relative path relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.teacher.images);
        fix(&mut self.teacher.labels);
        for e in &mut self.eval {
            fix(&mut e.images);
            fix(&mut e.labels);
        }
    }

    /// Cheap checks run before any compute: value ranges and path existence.
    pub fn validate(&self, origin: &Path) -> Result<()> {
        let bad = |field: &str, msg: String| Err(config_err(origin, format!("{field}: {msg}")));
        if self.teacher.r == 0 {
            return bad("teacher.r", "must be >= 1".into());
        }
        if self.teacher.downsample == 0 {
            return bad("teacher.downsample", "must be >= 1".into());
        }
        if self.teacher.subset == Some(0) {
            return bad("teacher.subset", "must be >= 1".into());
        }
        if self.query.base_subset == Some(0) {
            return bad("query.base_subset", "must be >= 1".into());
        }
        if self.students.n < 2 {
            return bad("students.n", format!("must be >= 2, got {}", self.students.n));
        }
        if self.students.rho == 0 {
            return bad("students.rho", "must be >= 1".into());
        }
        let g = self.reconstruct.gamma;
        if !(g > 0.0 && g <= 1.0) {
            return bad("reconstruct.gamma", format!("must lie in (0, 1], got {g}"));
        }
        if !(self.reconstruct.beta.is_finite()) {
            return bad("reconstruct.beta", "must be finite".into());
        }
        if self.metrics.histogram_bins == 0 {
            return bad("metrics.histogram_bins", "must be >= 1".into());
        }
        for (field, cfg) in [
            ("teacher.train", &self.teacher.train),
            ("students.train", &self.students.train),
            ("reconstruct.fine_tune", &self.reconstruct.fine_tune),
        ] {
            if let Err(e) = cfg.validate() {
                return bad(field, e.to_string());
            }
        }
        let mut paths = vec![("teacher.images", &self.teacher.images), ("teacher.labels", &self.teacher.labels)];
        for e in &self.eval {
            paths.push(("eval.images", &e.images));
            paths.push(("eval.labels", &e.labels));
        }
        for (field, p) in paths {
            if !p.is_file() {
                return bad(field, format!("{} does not exist", p.display()));
            }
        }
        Ok(())
    }

    fn stage_cfg(&self, cfg: &TrainConfig) -> TrainConfig {
        TrainConfig { seed: self.seed.wrapping_add(cfg.seed), ..cfg.clone() }
    }

    fn augmentation(&self) -> AugmentationSpec {
        let spec = &self.query.augmentation;
        AugmentationSpec::new(spec.kind.clone(), self.seed.wrapping_add(spec.seed))
    }
}

/// File names inside a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn teacher_model(&self) -> PathBuf {
        self.root.join("teacher.ecm")
    }
    pub fn teacher_history(&self) -> PathBuf {
        self.root.join("teacher_history.csv")
    }
    pub fn standardization(&self) -> PathBuf {
        self.root.join("standardization.toml")
    }
    pub fn queries(&self) -> PathBuf {
        self.root.join("queries.ecq")
    }
    pub fn student_model(&self, i: usize) -> PathBuf {
        self.root.join("students").join(format!("student_{i:03}.ecm"))
    }
    pub fn student_history(&self, i: usize) -> PathBuf {
        self.root.join("students").join(format!("student_{i:03}_history.csv"))
    }
    pub fn students_summary(&self) -> PathBuf {
        self.root.join("students_summary.csv")
    }
    pub fn reconstructed_model(&self) -> PathBuf {
        self.root.join("reconstructed.ecm")
    }
    pub fn fine_tune_history(&self) -> PathBuf {
        self.root.join("fine_tune_history.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.csv")
    }
    pub fn matches(&self) -> PathBuf {
        self.root.join("matches.csv")
    }
    pub fn losses(&self) -> PathBuf {
        self.root.join("losses.csv")
    }
    pub fn variability(&self) -> PathBuf {
        self.root.join("variability.csv")
    }
    pub fn histogram(&self) -> PathBuf {
        self.root.join("histogram.csv")
    }
}

/// `--jobs` and `--resume`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub jobs: usize,
    pub resume: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1, resume: false }
    }
}

/// Process exit status for an error: 2 config, 3 divergence,
/// 4 empty reconstruction, 1 anything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Argument(_) => 2,
        Error::Divergence { .. } => 3,
        Error::EmptyReconstruction(_) => 4,
        _ => 1,
    }
}

fn load_artifact<T>(path: &Path, what: &str, load: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    if !path.is_file() {
        return Err(Error::Consistency(format!("{what} not found at {}", path.display())));
    }
    load(path)
}

/// Teacher training images after downsampling, subsetting and standardising.
pub fn prepare_teacher_data(cfg: &ExperimentConfig) -> Result<(ImageDataset, Standardization)> {
    let t = &cfg.teacher;
    let raw = data::load_idx(&t.images, &t.labels)?.downsample(t.downsample)?;
    let raw = match t.subset {
        Some(k) => data::subset(&raw, k, cfg.seed)?,
        None => raw,
    };
    data::standardize(&raw)
}

fn prepare_eval_sets(cfg: &ExperimentConfig, stats: &Standardization) -> Result<Vec<(String, ImageDataset)>> {
    cfg.eval
        .iter()
        .map(|e| {
            let raw = data::load_idx(&e.images, &e.labels)?.downsample(cfg.teacher.downsample)?;
            Ok((e.name.clone(), stats.apply(&raw)))
        })
        .collect()
}

fn write_standardization(path: &Path, stats: &Standardization) -> Result<()> {
    let text = toml::to_string(stats).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

/// Trains the teacher and writes `teacher.ecm`, `teacher_history.csv` and
/// `standardization.toml`.
pub fn cmd_train_teacher(cfg: &ExperimentConfig, layout: &RunLayout) -> Result<train::TeacherRun> {
    let (ds, stats) = prepare_teacher_data(cfg)?;
    let run = train::train_teacher(&ds, cfg.teacher.r, &cfg.stage_cfg(&cfg.teacher.train))?;
    run.teacher.save(layout.teacher_model())?;
    train::write_history_csv(&layout.teacher_history(), [(0, run.history.as_slice())])?;
    write_standardization(&layout.standardization(), &stats)?;
    let last = run.history.last().expect("history starts at step 0");
    println!(
        "teacher: r={} d={} c={} n={} steps={} loss={:.4e} train accuracy={:.4}",
        cfg.teacher.r,
        ds.dim(),
        run.teacher.output_dim(),
        ds.len(),
        last.step,
        last.loss,
        run.train_accuracy
    );
    Ok(run)
}

/// Augments the teacher's images, labels them with the teacher and writes
/// `queries.ecq`.
pub fn cmd_build_queries(cfg: &ExperimentConfig, layout: &RunLayout) -> Result<QuerySet> {
    let teacher = load_artifact(&layout.teacher_model(), "teacher model", |p| Mlp::load(p))?;
    let (ds, stats) = prepare_teacher_data(cfg)?;
    if teacher.input_dim() != ds.dim() {
        return Err(Error::Shape(format!(
            "teacher expects {} inputs, dataset images have {} pixels",
            teacher.input_dim(),
            ds.dim()
        )));
    }
    let base = match cfg.query.base_subset {
        Some(k) => data::subset(&ds, k, cfg.seed.wrapping_add(cfg.query.augmentation.seed))?,
        None => ds,
    };
    let spec = cfg.augmentation();
    let aug = spec.apply(&base, stats.background())?;
    let qs = train::query_teacher(&teacher, &aug)?;
    data::save_queryset(&qs, layout.queries())?;
    println!("queries: Q={} strategy={} base={}", qs.len(), qs.provenance, base.len());
    Ok(qs)
}

/// Final losses of the trained students, by ensemble index.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentsOutcome {
    /// `(index, final loss)` for every student with a model file.
    pub trained: Vec<(usize, f64)>,
    /// `(index, message)` for every student that diverged.
    pub diverged: Vec<(usize, String)>,
    /// Indices reused from an earlier run under `--resume`.
    pub resumed: Vec<usize>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Trains `N` students on the stored queries and writes one model and one
/// history file per student plus `students_summary.csv`. A diverging
/// student is recorded and skipped; fewer than two survivors is an error.
pub fn cmd_train_students(cfg: &ExperimentConfig, layout: &RunLayout, opts: RunOptions) -> Result<StudentsOutcome> {
    let teacher = load_artifact(&layout.teacher_model(), "teacher model", |p| Mlp::load(p))?;
    let qs = load_artifact(&layout.queries(), "query set", |p| data::load_queryset(p))?;
    let n = cfg.students.n;
    let r_student = cfg.students.rho * teacher.hidden_width();
    let scfg = cfg.stage_cfg(&cfg.students.train);

    let mut resumed = Vec::new();
    let mut todo = Vec::new();
    for i in 0..n {
        let path = layout.student_model(i);
        if opts.resume && path.is_file() && Mlp::load(&path).is_ok() {
            resumed.push(i);
        } else {
            todo.push(i);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    let results: Vec<(usize, Result<(Mlp, Vec<HistoryPoint>)>)> = pool.install(|| {
        todo.par_iter()
            .map(|&i| {
                let res = train::train_ensemble_member(&qs, r_student, i, &scfg).and_then(|(net, hist)| {
                    net.save(layout.student_model(i))?;
                    train::write_history_csv(&layout.student_history(i), [(i, hist.as_slice())])?;
                    Ok((net, hist))
                });
                (i, res)
            })
            .collect()
    });

    let mut diverged = Vec::new();
    let mut first_divergence = None;
    for (i, res) in results {
        match res {
            Ok(_) => {}
            Err(e @ Error::Divergence { .. }) => {
                diverged.push((i, e.to_string()));
                first_divergence.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    let mut trained = Vec::new();
    for i in 0..n {
        if diverged.iter().any(|(j, _)| *j == i) {
            continue;
        }
        let net = Mlp::load(layout.student_model(i))?;
        trained.push((i, net.mse(qs.inputs.view(), qs.targets.view())?));
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["student", "status", "final_loss"]).map_err(train::csv_err)?;
    for i in 0..n {
        let (status, loss) = match trained.iter().find(|(j, _)| *j == i) {
            Some((_, l)) => (if resumed.contains(&i) { "resumed" } else { "trained" }, format!("{l:e}")),
            None => ("diverged", "nan".to_string()),
        };
        w.write_record([i.to_string(), status.to_string(), loss]).map_err(train::csv_err)?;
    }
    write_atomic(&layout.students_summary(), &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    let mut losses: Vec<f64> = trained.iter().map(|(_, l)| *l).collect();
    losses.sort_by(f64::total_cmp);
    if let (Some(lo), Some(hi)) = (losses.first(), losses.last()) {
        println!(
            "students: N={n} width={r_student} trained={} resumed={} diverged={} loss min={lo:.3e} median={:.3e} max={hi:.3e}",
            trained.len() - resumed.len(),
            resumed.len(),
            diverged.len(),
            median(&losses)
        );
    }
    if trained.len() < 2 {
        return Err(first_divergence
            .unwrap_or_else(|| Error::Consistency(format!("only {} students available", trained.len()))));
    }
    Ok(StudentsOutcome { trained, diverged, resumed })
}

fn load_students(cfg: &ExperimentConfig, layout: &RunLayout) -> Result<Vec<(usize, Mlp)>> {
    let mut out = Vec::new();
    for i in 0..cfg.students.n {
        let path = layout.student_model(i);
        if path.is_file() {
            out.push((i, Mlp::load(&path)?));
        }
    }
    if out.len() < 2 {
        return Err(Error::Consistency(format!(
            "{} student models under {}, need at least 2",
            out.len(),
            layout.root.display()
        )));
    }
    Ok(out)
}

/// Clusters the students' neurons, collapses and fine-tunes, and writes
/// `report.csv` (one row before and one after fine-tuning), `matches.csv`,
/// `reconstructed.ecm` and the diagnostics CSVs.
///
/// With no accepted cluster an `m = 0` report is still written and
/// [`Error::EmptyReconstruction`] is returned.
pub fn cmd_reconstruct(cfg: &ExperimentConfig, layout: &RunLayout) -> Result<ReconstructionReport> {
    let teacher = load_artifact(&layout.teacher_model(), "teacher model", |p| Mlp::load(p))?;
    let qs = load_artifact(&layout.queries(), "query set", |p| data::load_queryset(p))?;
    let students = load_students(cfg, layout)?;
    let (r, d, c) = (teacher.hidden_width(), teacher.input_dim(), teacher.output_dim());
    let nets: Vec<Mlp> = students.iter().map(|(_, s)| s.clone()).collect();
    let mut ens = StudentEnsemble::from_students(nets, r, cfg.students.rho)?;
    ens.indices = students.iter().map(|(i, _)| *i).collect();
    let n = ens.len();

    let extraction = reconstruct::extract_neurons(&ens)?;
    let clusters = reconstruct::cluster_neurons(&extraction.vectors, n, cfg.reconstruct.gamma, cfg.reconstruct.beta)?;
    let row = |method: String, report: ReconstructionReport| TableRow { method, r, n, report, q: qs.len() };
    println!(
        "clustering: {} vectors ({} zero-norm dropped), {} clusters, {} accepted (need {} of {} students)",
        extraction.vectors.len(),
        extraction.flagged,
        clusters.clusters.len(),
        clusters.n_accepted(),
        clusters.min_students,
        n
    );

    if clusters.n_accepted() == 0 {
        let report = ReconstructionReport::empty(r);
        reconstruct::write_table_csv(&layout.report(), &[row(qs.provenance.clone(), report.clone())])?;
        reconstruct::write_matches_csv(&layout.matches(), &report)?;
        write_diagnostics(cfg, layout, &teacher, &qs, &students)?;
        return Err(Error::EmptyReconstruction(format!(
            "no cluster spans {} of {} students at threshold {:e}",
            clusters.min_students, n, clusters.threshold
        )));
    }

    let collapsed = reconstruct::collapse(&clusters, d, c, &reconstruct::mean_output_bias(&ens))?;
    let before = reconstruct::evaluate_reconstruction(&collapsed, &teacher)?;
    let (tuned, history) = reconstruct::fine_tune(collapsed, &qs, &cfg.stage_cfg(&cfg.reconstruct.fine_tune))?;
    let after = reconstruct::evaluate_reconstruction(&tuned, &teacher)?;

    tuned.save(layout.reconstructed_model())?;
    train::write_history_csv(&layout.fine_tune_history(), [(0, history.as_slice())])?;
    reconstruct::write_table_csv(
        &layout.report(),
        &[row(format!("{} collapsed", qs.provenance), before.clone()), row(qs.provenance.clone(), after.clone())],
    )?;
    reconstruct::write_matches_csv(&layout.matches(), &after)?;
    write_diagnostics(cfg, layout, &teacher, &qs, &students)?;
    println!("before fine-tuning:\n{before}");
    println!("after fine-tuning (loss {:.3e}):\n{after}", history.last().map_or(f64::NAN, |h| h.loss));
    Ok(after)
}

/// `losses.csv`, `variability.csv` and `histogram.csv`.
fn write_diagnostics(
    cfg: &ExperimentConfig,
    layout: &RunLayout,
    teacher: &Mlp,
    qs: &QuerySet,
    students: &[(usize, Mlp)],
) -> Result<()> {
    let (ds, stats) = prepare_teacher_data(cfg)?;
    let evals = prepare_eval_sets(cfg, &stats)?;

    let mut sets: Vec<(String, QuerySet)> = vec![("queries".to_string(), qs.clone())];
    for (name, e) in &evals {
        let targets = teacher.predict(e.images.view())?;
        sets.push((name.clone(), QuerySet::new(e.images.clone(), targets, name.clone())?));
    }
    let named: Vec<(String, &Mlp)> = students.iter().map(|(i, s)| (format!("student_{i:03}"), s)).collect();
    let set_refs: Vec<(String, &QuerySet)> = sets.iter().map(|(n, q)| (n.clone(), q)).collect();
    metrics::write_losses_csv(&layout.losses(), &metrics::scatter_table(&named, &set_refs)?)?;

    let mut var_rows = vec![(qs.provenance.clone(), metrics::preactivation_variability(teacher, qs.inputs.view())?)];
    for spec in &cfg.metrics.variability_strategies {
        let spec = AugmentationSpec::new(spec.kind.clone(), cfg.seed.wrapping_add(spec.seed));
        let aug = spec.apply(&ds, stats.background())?;
        var_rows.push((spec.to_string(), metrics::preactivation_variability(teacher, aug.inputs.view())?));
    }
    for (name, e) in &evals {
        var_rows.push((name.clone(), metrics::preactivation_variability(teacher, e.images.view())?));
    }
    metrics::write_variability_csv(&layout.variability(), &var_rows)?;

    let hist = metrics::preactivation_histogram(teacher, qs.inputs.view(), cfg.metrics.histogram_bins)?;
    metrics::write_histogram_csv(&layout.histogram(), &hist)
}

/// All four stages in order, stopping at the first failure.
pub fn cmd_pipeline(cfg: &ExperimentConfig, layout: &RunLayout, opts: RunOptions) -> Result<ReconstructionReport> {
    cmd_train_teacher(cfg, layout)?;
    cmd_build_queries(cfg, layout)?;
    cmd_train_students(cfg, layout, opts)?;
    cmd_reconstruct(cfg, layout)
}

/// Writes the procedural digit and garment sets as IDX pairs:
/// `digits-images.idx`, `digits-labels.idx`, `garments-images.idx`,
/// `garments-labels.idx`.
pub fn write_synthetic_sets(dir: &Path, n: usize, n_ood: usize, side: usize, seed: u64) -> Result<()> {
    if n == 0 || n_ood == 0 || side < 2 {
        return Err(Error::Argument("need n >= 1, ood >= 1 and side >= 2".into()));
    }
    let digits = crate::synthetic::digits(n, side, seed);
    data::write_idx(&digits, dir.join("digits-images.idx"), dir.join("digits-labels.idx"))?;
    let garments = crate::synthetic::garments(n_ood, side, seed.wrapping_add(1));
    data::write_idx(&garments, dir.join("garments-images.idx"), dir.join("garments-labels.idx"))?;
    println!("synthetic data: {n} digits and {n_ood} garments of {side}x{side} in {}", dir.display());
    Ok(())
}

/// Config for the desk-scale recovery run on data written by
/// [`write_synthetic_sets`] into `data_dir`.
pub fn desk_config(data_dir: &Path, output_dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        seed: 0,
        output_dir: output_dir.to_path_buf(),
        teacher: TeacherSection {
            images: data_dir.join("digits-images.idx"),
            labels: data_dir.join("digits-labels.idx"),
            downsample: 1,
            subset: None,
            r: 8,
            train: TrainConfig { seed: 5, ..teacher_train_defaults() },
        },
        query: QuerySection {
            base_subset: None,
            augmentation: AugmentationSpec::new(AugmentationKind::BiasedNoise { magnitude: 1.0 }, 11),
        },
        students: StudentSection { n: 8, rho: 4, train: TrainConfig { seed: 100, ..student_train_defaults() } },
        reconstruct: ReconstructSection::default(),
        eval: vec![EvalSet {
            name: "garments".into(),
            images: data_dir.join("garments-images.idx"),
            labels: data_dir.join("garments-labels.idx"),
        }],
        metrics: MetricsSection {
            variability_strategies: vec![AugmentationSpec::new(
                AugmentationKind::UniformNoise { lo: -1.0, hi: 1.0, copies: 2 },
                11,
            )],
            ..MetricsSection::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [teacher]
        images = "a.idx"
        labels = "b.idx"
        r = 4

        [query.augmentation]
        strategy = "identity"

        [students]
        n = 3
    "#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL, Path::new("x.toml")).unwrap();
        assert_eq!(cfg.students.rho, 4);
        assert_eq!(cfg.reconstruct.gamma, 0.75);
        assert_eq!(cfg.reconstruct.beta, 3.0);
        assert_eq!(cfg.teacher.downsample, 1);
        assert_eq!(cfg.query.augmentation.kind, AugmentationKind::Identity);
        assert_eq!(cfg.metrics.histogram_bins, 50);
    }

    #[test]
    fn shipped_desk_config_matches_builder() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
        let text = fs::read_to_string(&path).unwrap();
        let cfg = ExperimentConfig::from_toml_str(&text, &path).unwrap();
        assert_eq!(cfg, desk_config(Path::new("../data"), Path::new("../runs/desk")));
    }

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = desk_config(Path::new("data"), Path::new("out"));
        cfg.metrics.variability_strategies.push(AugmentationSpec::new(AugmentationKind::HvFlips, 3));
        cfg.query.base_subset = Some(50);
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text, Path::new("x.toml")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_field_is_a_config_error_with_location() {
        let text = MINIMAL.replace("r = 4", "r = 4\nwidth = 9");
        let err = ExperimentConfig::from_toml_str(&text, Path::new("x.toml")).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        let msg = err.to_string();
        assert!(msg.contains("width") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn validation_rejects_bad_values_before_touching_files() {
        let base = ExperimentConfig::from_toml_str(MINIMAL, Path::new("x.toml")).unwrap();
        let mut cfg = base.clone();
        cfg.teacher.r = 0;
        assert!(cfg.validate(Path::new("x.toml")).unwrap_err().to_string().contains("teacher.r"));
        let mut cfg = base.clone();
        cfg.students.n = 1;
        assert!(cfg.validate(Path::new("x.toml")).unwrap_err().to_string().contains("students.n"));
        let mut cfg = base.clone();
        cfg.reconstruct.gamma = 0.0;
        assert!(cfg.validate(Path::new("x.toml")).unwrap_err().to_string().contains("gamma"));
        // ranges pass, then the missing image file is reported
        let err = base.validate(Path::new("x.toml")).unwrap_err();
        assert!(err.to_string().contains("teacher.images"), "{err}");
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL, Path::new("x.toml")).unwrap();
        cfg.eval.push(EvalSet { name: "e".into(), images: "/abs/e.idx".into(), labels: "e-l.idx".into() });
        cfg.resolve_paths(Path::new("/cfgdir"));
        assert_eq!(cfg.teacher.images, PathBuf::from("/cfgdir/a.idx"));
        assert_eq!(cfg.eval[0].images, PathBuf::from("/abs/e.idx"));
        assert_eq!(cfg.eval[0].labels, PathBuf::from("/cfgdir/e-l.idx"));
        assert_eq!(cfg.output_dir, PathBuf::from("/cfgdir/runs/default"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Divergence { step: 3, loss: f64::NAN }), 3);
        assert_eq!(exit_code(&Error::EmptyReconstruction("x".into())), 4);
        assert_eq!(exit_code(&Error::Format("x".into())), 1);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[1.0, 2.0, 4.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 4.0, 8.0]), 3.0);
    }
}
