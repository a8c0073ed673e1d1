//! Optimisation: Adam, a reduce-on-plateau learning-rate schedule, teacher
//! training on labelled images, teacher querying and student ensembles.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentedSet;
use crate::data::{ImageDataset, QuerySet};
use crate::error::{Error, Result};
use crate::network::{Gradients, InitScheme, Mlp};

/// Relative improvement a loss needs to reset the plateau counter.
const PLATEAU_REL_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Evaluations without improvement before the learning rate drops.
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub plateau_min_lr: f64,
    /// Steps between full-set evaluations; `0` means one epoch.
    pub eval_every: usize,
    /// Stop once the full-set loss is at or below this value.
    pub target_loss: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 256,
            max_steps: 10_000,
            plateau_patience: 10,
            plateau_factor: 0.5,
            plateau_min_lr: 1e-7,
            eval_every: 0,
            target_loss: 1e-12,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.plateau_min_lr >= 0.0) {
            return bad("plateau_min_lr must be >= 0");
        }
        Ok(())
    }

    fn eval_interval(&self, n_rows: usize) -> usize {
        if self.eval_every > 0 {
            self.eval_every
        } else {
            n_rows.div_ceil(self.batch_size).max(1)
        }
    }
}

/// `floor(epochs · dataset_size / batch_size)`.
pub fn steps_for(epochs: u64, dataset_size: u64, batch_size: u64) -> u64 {
    assert!(batch_size > 0, "batch size must be positive");
    ((epochs as u128 * dataset_size as u128) / batch_size as u128) as u64
}

/// First and second moment estimates for a list of parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(block_lens: &[usize], beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn for_net(net: &Mlp, cfg: &TrainConfig) -> Self {
        let lens: Vec<usize> = net.slices().iter().map(|s| s.len()).collect();
        Self::new(&lens, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    }

    /// One bias-corrected Adam update over matching parameter/gradient blocks.
    pub fn step_blocks(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "block count mismatch");
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Adam update of every parameter block of `net`.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState, lr: f64) {
    let mut params = net.slices_mut();
    state.step_blocks(&mut params, &grads.slices(), lr);
}

/// Reduce-on-plateau learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    min_lr: f64,
    best: f64,
    bad_evals: usize,
    reductions: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64) -> Self {
        Self { lr, factor, patience, min_lr, best: f64::INFINITY, bad_evals: 0, reductions: 0 }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.learning_rate, cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_min_lr)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn reductions(&self) -> usize {
        self.reductions
    }

    /// Records one evaluation and returns the learning rate to use next.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best * (1.0 - PLATEAU_REL_THRESHOLD) || self.best.is_infinite() {
            self.best = loss;
            self.bad_evals = 0;
        } else {
            self.bad_evals += 1;
            if self.bad_evals >= self.patience {
                let next = (self.lr * self.factor).max(self.min_lr);
                if next < self.lr {
                    self.lr = next;
                    self.reductions += 1;
                }
                self.bad_evals = 0;
            }
        }
        self.lr
    }
}

/// One row of a loss history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// A differentiable training objective over a fixed set of rows.
trait Objective {
    fn n_rows(&self) -> usize;
    fn batch(&self, net: &Mlp, rows: Option<&[usize]>) -> Result<(Gradients, f64)>;
    fn full_loss(&self, net: &Mlp) -> Result<f64>;
}

struct Imitation<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView2<'a, f64>,
}

impl Objective for Imitation<'_> {
    fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    fn batch(&self, net: &Mlp, rows: Option<&[usize]>) -> Result<(Gradients, f64)> {
        match rows {
            None => net.backward_mse(self.x, self.y),
            Some(rows) => {
                let xb = self.x.select(Axis(0), rows);
                let yb = self.y.select(Axis(0), rows);
                net.backward_mse(xb.view(), yb.view())
            }
        }
    }

    fn full_loss(&self, net: &Mlp) -> Result<f64> {
        net.mse(self.x, self.y)
    }
}

struct CrossEntropy<'a> {
    x: ArrayView2<'a, f64>,
    labels: &'a [u8],
}

/// Mean softmax cross-entropy and `∂L/∂logits`.
fn softmax_xent(logits: &Array2<f64>, labels: &[u8]) -> (f64, Array2<f64>) {
    let n = logits.nrows().max(1) as f64;
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (mut row, &label) in grad.outer_iter_mut().zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let z: f64 = row.sum();
        row /= z;
        loss -= row[label as usize].ln();
        row[label as usize] -= 1.0;
    }
    grad /= n;
    (loss / n, grad)
}

impl Objective for CrossEntropy<'_> {
    fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    fn batch(&self, net: &Mlp, rows: Option<&[usize]>) -> Result<(Gradients, f64)> {
        let step = |x: ArrayView2<f64>, labels: &[u8]| -> Result<(Gradients, f64)> {
            let trace = net.forward(x)?;
            let (loss, d_out) = softmax_xent(&trace.out, labels);
            Ok((net.backward_from_output(x, &trace, &d_out), loss))
        };
        match rows {
            None => step(self.x, self.labels),
            Some(rows) => {
                let xb = self.x.select(Axis(0), rows);
                let lb: Vec<u8> = rows.iter().map(|&i| self.labels[i]).collect();
                step(xb.view(), &lb)
            }
        }
    }

    fn full_loss(&self, net: &Mlp) -> Result<f64> {
        let out = net.predict(self.x)?;
        Ok(softmax_xent(&out, self.labels).0)
    }
}

/// Epoch-wise shuffled mini-batches; the last short batch is kept.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, batch: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // separate stream from the init draws under the same seed
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, batch, rng }
    }

    /// `None` means "the whole set, unshuffled".
    fn next(&mut self) -> Option<&[usize]> {
        if self.batch >= self.order.len() {
            return None;
        }
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let rows = &self.order[self.pos..end];
        self.pos = end;
        Some(rows)
    }
}

fn fit(mut net: Mlp, objective: &dyn Objective, cfg: &TrainConfig) -> Result<(Mlp, Vec<HistoryPoint>)> {
    cfg.validate()?;
    let mut history = Vec::new();
    let mut sched = PlateauScheduler::from_config(cfg);
    let loss0 = objective.full_loss(&net)?;
    if !loss0.is_finite() {
        return Err(Error::Divergence { step: 0, loss: loss0 });
    }
    history.push(HistoryPoint { step: 0, loss: loss0, lr: sched.lr() });
    if cfg.max_steps == 0 || loss0 <= cfg.target_loss {
        return Ok((net, history));
    }
    let n = objective.n_rows();
    let interval = cfg.eval_interval(n);
    let mut batcher = Batcher::new(n, cfg.batch_size, cfg.seed);
    let mut adam = AdamState::for_net(&net, cfg);
    let mut lr = sched.lr();
    for step in 1..=cfg.max_steps {
        let (grads, loss) = objective.batch(&net, batcher.next())?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        adam_step(&mut net, &grads, &mut adam, lr);
        if step % interval == 0 || step == cfg.max_steps {
            let full = objective.full_loss(&net)?;
            if !full.is_finite() || !net.is_finite() {
                return Err(Error::Divergence { step, loss: full });
            }
            lr = sched.observe(full);
            history.push(HistoryPoint { step, loss: full, lr });
            if full <= cfg.target_loss {
                break;
            }
        }
    }
    Ok((net, history))
}

/// Trained teacher plus its loss history.
#[derive(Debug, Clone)]
pub struct TeacherRun {
    pub teacher: Mlp,
    pub history: Vec<HistoryPoint>,
    pub train_accuracy: f64,
}

/// Fraction of rows whose arg-max logit equals the label.
pub fn accuracy(net: &Mlp, ds: &ImageDataset) -> Result<f64> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let out = net.predict(ds.images.view())?;
    let hits = out
        .outer_iter()
        .zip(&ds.labels)
        .filter(|(row, &l)| {
            let arg = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0;
            arg == l as usize
        })
        .count();
    Ok(hits as f64 / ds.len() as f64)
}

/// Trains a width-`r` classifier on a standardised dataset with softmax
/// cross-entropy. The output dimension is the number of label classes.
pub fn train_teacher(ds: &ImageDataset, r: usize, cfg: &TrainConfig) -> Result<TeacherRun> {
    if r == 0 {
        return Err(Error::Argument("teacher width must be >= 1".into()));
    }
    if ds.is_empty() {
        return Err(Error::Argument("teacher training set is empty".into()));
    }
    let c = ds.n_classes().max(2);
    let init = Mlp::init(r, ds.dim(), c, InitScheme::UniformFanIn, cfg.seed)?;
    let objective = CrossEntropy { x: ds.images.view(), labels: &ds.labels };
    let (teacher, history) = fit(init, &objective, cfg)?;
    let train_accuracy = accuracy(&teacher, ds)?;
    Ok(TeacherRun { teacher, history, train_accuracy })
}

/// Labels every augmented input with the teacher's logits.
pub fn query_teacher(teacher: &Mlp, aug: &AugmentedSet) -> Result<QuerySet> {
    let targets = teacher.predict(aug.inputs.view())?;
    QuerySet::new(aug.inputs.clone(), targets, aug.spec.to_string())
}

/// Fits `init` to a query set with the imitation loss.
pub fn train_student_from(init: Mlp, qs: &QuerySet, cfg: &TrainConfig) -> Result<(Mlp, Vec<HistoryPoint>)> {
    if init.input_dim() != qs.inputs.ncols() || init.output_dim() != qs.targets.ncols() {
        return Err(Error::Shape(format!(
            "student is {}→{}, queries are {}→{}",
            init.input_dim(),
            init.output_dim(),
            qs.inputs.ncols(),
            qs.targets.ncols()
        )));
    }
    let objective = Imitation { x: qs.inputs.view(), y: qs.targets.view() };
    fit(init, &objective, cfg)
}

/// Fits a freshly initialised width-`r_student` network (seeded by `cfg.seed`).
pub fn train_student(qs: &QuerySet, r_student: usize, cfg: &TrainConfig) -> Result<(Mlp, Vec<HistoryPoint>)> {
    let init = Mlp::init(r_student, qs.inputs.ncols(), qs.targets.ncols(), InitScheme::UniformFanIn, cfg.seed)?;
    train_student_from(init, qs, cfg)
}

#[derive(Debug)]
pub struct StudentEnsemble {
    pub students: Vec<Mlp>,
    /// Ensemble index of each entry of `students` (seed offset).
    pub indices: Vec<usize>,
    pub rho: usize,
    pub teacher_r: usize,
    pub final_losses: Vec<f64>,
    pub histories: Vec<Vec<HistoryPoint>>,
    /// Students that diverged, by ensemble index.
    pub failures: Vec<(usize, Error)>,
}

impl StudentEnsemble {
    /// Wraps already-trained students (e.g. loaded from disk).
    pub fn from_students(students: Vec<Mlp>, teacher_r: usize, rho: usize) -> Result<Self> {
        if students.is_empty() {
            return Err(Error::Argument("ensemble has no students".into()));
        }
        let n = students.len();
        Ok(Self {
            students,
            indices: (0..n).collect(),
            rho,
            teacher_r,
            final_losses: vec![f64::NAN; n],
            histories: vec![Vec::new(); n],
            failures: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.students.len()
    }

    pub fn is_empty(&self) -> bool {
        self.students.is_empty()
    }
}

/// Trains one student with seed `cfg.seed + index`.
pub fn train_ensemble_member(qs: &QuerySet, r_student: usize, index: usize, cfg: &TrainConfig) -> Result<(Mlp, Vec<HistoryPoint>)> {
    let cfg = TrainConfig { seed: cfg.seed.wrapping_add(index as u64), ..cfg.clone() };
    train_student(qs, r_student, &cfg)
}

/// Trains `n` students of width `rho · teacher_r` on up to `jobs` threads.
/// Results are ordered by ensemble index and do not depend on `jobs`.
pub fn train_ensemble(qs: &QuerySet, teacher_r: usize, rho: usize, n: usize, cfg: &TrainConfig, jobs: usize) -> Result<StudentEnsemble> {
    if n < 2 {
        return Err(Error::Argument(format!("ensemble needs N >= 2, got {n}")));
    }
    if teacher_r == 0 || rho == 0 {
        return Err(Error::Argument("teacher width and rho must be >= 1".into()));
    }
    cfg.validate()?;
    let r_student = rho * teacher_r;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| train_ensemble_member(qs, r_student, i, cfg))
            .collect()
    });
    let mut ens = StudentEnsemble {
        students: Vec::new(),
        indices: Vec::new(),
        rho,
        teacher_r,
        final_losses: Vec::new(),
        histories: Vec::new(),
        failures: Vec::new(),
    };
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok((net, hist)) => {
                ens.final_losses.push(hist.last().map_or(f64::NAN, |h| h.loss));
                ens.students.push(net);
                ens.histories.push(hist);
                ens.indices.push(i);
            }
            Err(e) => ens.failures.push((i, e)),
        }
    }
    Ok(ens)
}

/// Writes loss histories as CSV with columns `step,loss,lr,student_index`
/// (0 for the teacher and for fine-tuning).
pub fn write_history_csv<'a>(path: &Path, runs: impl IntoIterator<Item = (usize, &'a [HistoryPoint])>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "loss", "lr", "student_index"]).map_err(csv_err)?;
    for (idx, hist) in runs {
        for h in hist {
            w.write_record(&[h.step.to_string(), format!("{:e}", h.loss), format!("{:e}", h.lr), idx.to_string()])
                .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    crate::io_util::write_atomic(path, &bytes)
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn steps_formula_examples() {
        assert_eq!(steps_for(10, 60_000, 600), 1000);
        assert_eq!(steps_for(1, 5, 2), 2);
        assert_eq!(steps_for(7, 13, 1), 91);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut net = Mlp::init(2, 3, 1, InitScheme::UniformFanIn, 1).unwrap();
        let before = net.clone();
        let cfg = TrainConfig::default();
        let mut st = AdamState::for_net(&net, &cfg);
        st.m[0][0] = 1.0;
        st.v[0][0] = 1.0;
        let g = Gradients::zeros_like(&net);
        adam_step(&mut net, &g, &mut st, 1e-3);
        assert!(st.m[0][0] < 1.0 && st.v[0][0] < 1.0);
        // bias-corrected m is non-zero here, so only the untouched blocks stay exact
        assert_eq!(net.a, before.a);
        let mut fresh = AdamState::for_net(&before, &cfg);
        let mut net2 = before.clone();
        adam_step(&mut net2, &g, &mut fresh, 1e-3);
        assert_eq!(net2, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut st = AdamState::new(&[3], 0.9, 0.999, 1e-8);
        let mut p = vec![0.0, 0.0, 0.0];
        let g = [3.0, -0.5, 1e-3];
        st.step_blocks(&mut [&mut p[..]], &[&g[..]], 0.01);
        for (pi, gi) in p.iter().zip(g) {
            assert!((pi.abs() - 0.01).abs() < 1e-6 * 0.01 / gi.abs().min(1.0));
            assert_eq!(pi.signum(), -gi.signum());
        }
    }

    #[test]
    fn adam_minimises_square() {
        let mut st = AdamState::new(&[1], 0.9, 0.999, 1e-8);
        let mut theta = [1.0];
        for _ in 0..100 {
            let g = [2.0 * theta[0]];
            st.step_blocks(&mut [&mut theta[..]], &[&g[..]], 0.1);
        }
        assert!(theta[0].abs() < 0.05, "{}", theta[0]);
    }

    #[test]
    fn plateau_reduces_once_per_event() {
        let mut s = PlateauScheduler::new(1.0, 0.5, 3, 0.2);
        assert_eq!(s.observe(1.0), 1.0);
        assert_eq!(s.observe(1.0), 1.0);
        assert_eq!(s.observe(1.0), 1.0);
        assert_eq!(s.observe(1.0), 0.5);
        assert_eq!(s.observe(1.0), 0.5);
        assert_eq!(s.observe(0.5), 0.5);
        for _ in 0..3 {
            s.observe(0.9);
        }
        assert_eq!(s.lr(), 0.25);
        for _ in 0..30 {
            s.observe(0.9);
        }
        assert_eq!(s.lr(), 0.2);
        assert_eq!(s.reductions(), 3);
    }

    #[test]
    fn zero_steps_returns_init() {
        let ds = crate::synthetic::digits(40, 4, 1);
        let (ds, _) = crate::data::standardize(&ds).unwrap();
        let cfg = TrainConfig { max_steps: 0, seed: 5, ..Default::default() };
        let run = train_teacher(&ds, 3, &cfg).unwrap();
        assert_eq!(run.teacher, Mlp::init(3, 16, 10, InitScheme::UniformFanIn, 5).unwrap());
    }

    #[test]
    fn student_initialised_at_teacher_stops_immediately() {
        let teacher = Mlp::init(4, 3, 2, InitScheme::UniformFanIn, 2).unwrap();
        let x = Array2::from_shape_fn((20, 3), |(i, j)| ((i * 3 + j) as f64).sin());
        let qs = QuerySet::new(x.clone(), teacher.predict(x.view()).unwrap(), "t").unwrap();
        let (net, hist) = train_student_from(teacher.clone(), &qs, &TrainConfig::default()).unwrap();
        assert_eq!(net, teacher);
        assert_eq!(hist.len(), 1);
        assert_eq!(hist[0].loss, 0.0);
    }

    #[test]
    fn divergence_is_reported() {
        let teacher = Mlp::init(2, 2, 1, InitScheme::UniformFanIn, 2).unwrap();
        let qs = QuerySet::new(array![[1.0, 2.0]], array![[f64::NAN]], "nan").unwrap();
        let err = train_student_from(teacher, &qs, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 0, .. }));
    }

    #[test]
    fn softmax_xent_gradient_sums_to_zero() {
        let logits = array![[1.0, 2.0, 0.5], [-1.0, 0.0, 3.0]];
        let (loss, g) = softmax_xent(&logits, &[1, 2]);
        assert!(loss > 0.0);
        for row in g.outer_iter() {
            assert!(row.sum().abs() < 1e-15);
        }
    }

    #[test]
    fn batcher_covers_every_row_each_epoch() {
        let mut b = Batcher::new(10, 3, 4);
        for _ in 0..3 {
            let mut seen = Vec::new();
            for _ in 0..4 {
                seen.extend_from_slice(b.next().unwrap());
            }
            seen.sort();
            assert_eq!(seen, (0..10).collect::<Vec<_>>());
        }
    }
}
