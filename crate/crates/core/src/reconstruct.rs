//! Reconstruction from an ensemble of over-wide students.
//!
//! Hidden neurons of all students are pooled as unit vectors `[w; b] / ‖[w; b]‖`,
//! clustered with average linkage under cosine distance, cut at
//! `τ = 10^(−β)`, and every cluster that draws neurons from at least
//! `⌈γ·N⌉` distinct students becomes one neuron of the reconstructed network.
//! The collapsed network is then fine-tuned on the query set.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::data::QuerySet;
use crate::error::{Error, Result};
use crate::network::Mlp;
use crate::train::{csv_err, train_student_from, HistoryPoint, StudentEnsemble, TrainConfig};

/// Neurons whose `[w; b]` norm is below this are excluded as zero-norm.
pub const ZERO_NORM: f64 = 1e-12;

/// `1 − cos(u, v)`, clamped to `[0, 2]`. Zero vectors are at distance 1 from everything.
pub fn cosine_distance(u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    let (nu, nv) = (u.dot(&u).sqrt(), v.dot(&v).sqrt());
    if nu == 0.0 || nv == 0.0 {
        return 1.0;
    }
    (1.0 - u.dot(&v) / (nu * nv)).clamp(0.0, 2.0)
}

/// `[w_i; b_i]` of every hidden neuron, one row per neuron.
pub fn neuron_rows(net: &Mlp) -> Array2<f64> {
    concatenate(Axis(1), &[net.w.view(), net.b.view().insert_axis(Axis(1))]).expect("r rows in both blocks")
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronVector {
    /// Unit-norm `[w; b]`, length `d + 1`.
    pub direction: Array1<f64>,
    pub raw_norm: f64,
    /// Column of the output weights fed by this neuron, length `c`.
    pub outgoing: Array1<f64>,
    pub student_index: usize,
    pub neuron_index: usize,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub vectors: Vec<NeuronVector>,
    /// Zero-norm neurons that were dropped.
    pub flagged: usize,
}

pub fn extract_neurons(ensemble: &StudentEnsemble) -> Result<Extraction> {
    if ensemble.is_empty() {
        return Err(Error::Argument("cannot extract neurons from an empty ensemble".into()));
    }
    let mut vectors = Vec::new();
    let mut flagged = 0;
    for (s, net) in ensemble.students.iter().enumerate() {
        let rows = neuron_rows(net);
        for (i, row) in rows.outer_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if !(norm >= ZERO_NORM) {
                flagged += 1;
                continue;
            }
            vectors.push(NeuronVector {
                direction: &row / norm,
                raw_norm: norm,
                outgoing: net.a.column(i).to_owned(),
                student_index: s,
                neuron_index: i,
            });
        }
    }
    Ok(Extraction { vectors, flagged })
}

/// One merge of the dendrogram: slots `a` and `b` joined at `height`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Average-linkage agglomerative clustering over a symmetric distance matrix
/// (nearest-neighbour chain). Each merge is labelled by the lowest original
/// index in each of the two merged clusters. Ties go to the lowest index.
pub fn average_linkage(dist: &Array2<f64>) -> Vec<Merge> {
    let n = dist.nrows();
    assert_eq!(n, dist.ncols(), "distance matrix must be square");
    let mut d = dist.clone();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::new();
    for _ in 1..n {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active cluster remains"));
        }
        let (x, y, h) = loop {
            let a = *chain.last().unwrap();
            let prev = if chain.len() >= 2 { Some(chain[chain.len() - 2]) } else { None };
            // prefer the previous chain element on ties so the chain terminates
            let mut best = prev.map(|p| (p, d[[a, p]]));
            for k in 0..n {
                if !active[k] || k == a {
                    continue;
                }
                match best {
                    Some((_, bd)) if d[[a, k]] >= bd => {}
                    _ => best = Some((k, d[[a, k]])),
                }
            }
            let (b, bd) = best.expect("at least two active clusters");
            if Some(b) == prev {
                chain.pop();
                chain.pop();
                break (a, b, bd);
            }
            chain.push(b);
        };
        let (keep, gone) = (x.min(y), x.max(y));
        let (nk, ng) = (size[keep] as f64, size[gone] as f64);
        for k in 0..n {
            if active[k] && k != keep && k != gone {
                let v = (nk * d[[keep, k]] + ng * d[[gone, k]]) / (nk + ng);
                d[[keep, k]] = v;
                d[[k, keep]] = v;
            }
        }
        size[keep] += size[gone];
        active[gone] = false;
        merges.push(Merge { a: keep, b: gone, height: h });
    }
    merges
}

/// Flat clusters from all merges at height `<= threshold`, each sorted and
/// ordered by lowest member.
pub fn cut_dendrogram(n: usize, merges: &[Merge], threshold: f64) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for m in merges.iter().filter(|m| m.height <= threshold) {
        let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

#[derive(Debug, Clone)]
pub struct Cluster {
    pub members: Vec<NeuronVector>,
    /// Indices into the input vector list.
    pub member_indices: Vec<usize>,
    pub distinct_students: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct ClusterResult {
    pub clusters: Vec<Cluster>,
    pub gamma: f64,
    pub beta: f64,
    /// Dendrogram cut height `10^(−β)`.
    pub threshold: f64,
    pub n_students: usize,
    /// `⌈γ·N⌉`.
    pub min_students: usize,
}

impl ClusterResult {
    pub fn accepted(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter().filter(|c| c.accepted)
    }

    pub fn n_accepted(&self) -> usize {
        self.accepted().count()
    }
}

/// `⌈γ·N⌉`, robust to `γ·N` landing a hair above an integer.
pub fn min_students(gamma: f64, n_students: usize) -> usize {
    ((gamma * n_students as f64) - 1e-9).ceil().max(1.0) as usize
}

pub fn pairwise_cosine(vectors: &[NeuronVector]) -> Array2<f64> {
    let n = vectors.len();
    let mut dirs = Array2::zeros((n, vectors.first().map_or(0, |v| v.direction.len())));
    for (mut row, v) in dirs.outer_iter_mut().zip(vectors) {
        row.assign(&v.direction);
    }
    let mut dist = dirs.dot(&dirs.t());
    dist.mapv_inplace(|c| (1.0 - c).clamp(0.0, 2.0));
    for i in 0..n {
        dist[[i, i]] = 0.0;
    }
    dist
}

pub fn cluster_neurons(vectors: &[NeuronVector], n_students: usize, gamma: f64, beta: f64) -> Result<ClusterResult> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Argument(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let threshold = 10f64.powf(-beta);
    let need = min_students(gamma, n_students);
    let dist = pairwise_cosine(vectors);
    let merges = average_linkage(&dist);
    let clusters = cut_dendrogram(vectors.len(), &merges, threshold)
        .into_iter()
        .map(|idx| {
            let members: Vec<NeuronVector> = idx.iter().map(|&i| vectors[i].clone()).collect();
            let mut students: Vec<usize> = members.iter().map(|m| m.student_index).collect();
            students.sort_unstable();
            students.dedup();
            Cluster { distinct_students: students.len(), accepted: students.len() >= need, members, member_indices: idx }
        })
        .collect();
    Ok(ClusterResult { clusters, gamma, beta, threshold, n_students, min_students: need })
}

/// Mean of the students' output biases.
pub fn mean_output_bias(ensemble: &StudentEnsemble) -> Array1<f64> {
    let c = ensemble.students.first().map_or(0, |s| s.output_dim());
    let mut acc = Array1::zeros(c);
    for s in &ensemble.students {
        acc += &s.c_out;
    }
    acc / ensemble.len().max(1) as f64
}

/// One neuron per accepted cluster. Input weights: norm-weighted mean direction
/// scaled to the mean member norm. Output weights: members summed within a
/// student, then averaged over contributing students.
pub fn collapse(result: &ClusterResult, d: usize, c: usize, output_bias: &Array1<f64>) -> Result<Mlp> {
    let accepted: Vec<&Cluster> = result.accepted().collect();
    if accepted.is_empty() {
        return Err(Error::Argument("collapse needs at least one accepted cluster".into()));
    }
    if output_bias.len() != c {
        return Err(Error::Shape(format!("output bias has length {}, expected {c}", output_bias.len())));
    }
    let m = accepted.len();
    let mut w = Array2::zeros((m, d));
    let mut b = Array1::zeros(m);
    let mut a = Array2::zeros((c, m));
    for (k, cl) in accepted.iter().enumerate() {
        let mut sum = Array1::<f64>::zeros(d + 1);
        let mut norm_total = 0.0;
        let mut per_student: BTreeMap<usize, Array1<f64>> = BTreeMap::new();
        for nv in &cl.members {
            if nv.direction.len() != d + 1 || nv.outgoing.len() != c {
                return Err(Error::Shape("cluster member dimensions disagree with (d, c)".into()));
            }
            sum.scaled_add(nv.raw_norm, &nv.direction);
            norm_total += nv.raw_norm;
            per_student
                .entry(nv.student_index)
                .and_modify(|o| *o += &nv.outgoing)
                .or_insert_with(|| nv.outgoing.clone());
        }
        let mean_norm = norm_total / cl.members.len() as f64;
        let dir_norm = sum.dot(&sum).sqrt();
        let neuron = if dir_norm > 0.0 { sum * (mean_norm / dir_norm) } else { sum };
        w.row_mut(k).assign(&neuron.slice(ndarray::s![..d]));
        b[k] = neuron[d];
        let mut out = Array1::<f64>::zeros(c);
        for o in per_student.values() {
            out += o;
        }
        a.column_mut(k).assign(&(out / per_student.len() as f64));
    }
    Mlp::new(w, b, a, output_bias.clone())
}

/// Imitation fine-tuning of a collapsed network.
pub fn fine_tune(net: Mlp, qs: &QuerySet, cfg: &TrainConfig) -> Result<(Mlp, Vec<HistoryPoint>)> {
    train_student_from(net, qs, cfg)
}

/// Minimum-cost assignment of rows to columns (Hungarian method with
/// potentials). Returns, for each row, its column; with more rows than
/// columns the unmatched rows get `None`.
pub fn min_cost_assignment(cost: &Array2<f64>) -> Vec<Option<usize>> {
    let (rows, cols) = cost.dim();
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let t = cost.t().to_owned();
        let col_to_row = min_cost_assignment(&t);
        let mut out = vec![None; rows];
        for (c, r) in col_to_row.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        return out;
    }
    // 1-based potentials formulation, rows <= cols
    let inf = f64::INFINITY;
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=cols {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=cols {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub recon_index: usize,
    pub teacher_index: usize,
    pub d_w: f64,
    pub d_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub m: usize,
    pub r: usize,
    pub m_over_r: f64,
    pub avg_dw: f64,
    pub max_dw: f64,
    pub avg_da: f64,
    pub max_da: f64,
    /// Sorted by teacher neuron.
    pub matches: Vec<MatchedPair>,
}

impl ReconstructionReport {
    /// Report for a run where no cluster was accepted. Distances are NaN.
    pub fn empty(r: usize) -> Self {
        Self {
            m: 0,
            r,
            m_over_r: 0.0,
            avg_dw: f64::NAN,
            max_dw: f64::NAN,
            avg_da: f64::NAN,
            max_da: f64::NAN,
            matches: Vec::new(),
        }
    }
}

impl fmt::Display for ReconstructionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "recovered neurons  m/r = {}/{} = {:.3}", self.m, self.r, self.m_over_r)?;
        writeln!(f, "input weights      <d(w)> = {:.3e}   max d(w) = {:.3e}", self.avg_dw, self.max_dw)?;
        write!(f, "output weights     <d(a)> = {:.3e}   max d(a) = {:.3e}", self.avg_da, self.max_da)
    }
}

/// Weight of the chordal tie-breaker added to the matching cost.
const TIE_BREAK: f64 = 1e-9;

/// Matches reconstructed to teacher neurons by minimum total cosine
/// distance of `[w; b]` and reports input/output weight distances.
///
/// Cosine costs can tie exactly (a negated neuron swapped with any other
/// costs the same as leaving it in place), so the assignment minimises
/// `d + 1e-9·sqrt(2d)`; the chordal term is concave and favours keeping
/// exact matches together. Reported distances are plain cosine distances.
pub fn evaluate_reconstruction(recon: &Mlp, teacher: &Mlp) -> Result<ReconstructionReport> {
    if recon.input_dim() != teacher.input_dim() || recon.output_dim() != teacher.output_dim() {
        return Err(Error::Shape(format!(
            "reconstruction is {}→{}, teacher is {}→{}",
            recon.input_dim(),
            recon.output_dim(),
            teacher.input_dim(),
            teacher.output_dim()
        )));
    }
    let (m, r) = (recon.hidden_width(), teacher.hidden_width());
    let (rr, tr) = (neuron_rows(recon), neuron_rows(teacher));
    let cost = Array2::from_shape_fn((m, r), |(i, j)| cosine_distance(rr.row(i), tr.row(j)));
    let assignment = min_cost_assignment(&cost.mapv(|d| d + TIE_BREAK * (2.0 * d).sqrt()));
    let mut matches: Vec<MatchedPair> = assignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| {
            j.map(|j| MatchedPair {
                recon_index: i,
                teacher_index: j,
                d_w: cost[[i, j]],
                d_a: cosine_distance(recon.a.column(i), teacher.a.column(j)),
            })
        })
        .collect();
    matches.sort_by_key(|p| p.teacher_index);
    if matches.is_empty() {
        return Ok(ReconstructionReport { m, m_over_r: m as f64 / r as f64, ..ReconstructionReport::empty(r) });
    }
    let k = matches.len() as f64;
    let fold = |f: fn(&MatchedPair) -> f64| {
        let vals: Vec<f64> = matches.iter().map(f).collect();
        (vals.iter().sum::<f64>() / k, vals.iter().fold(0.0_f64, |a, &b| a.max(b)))
    };
    let (avg_dw, max_dw) = fold(|p| p.d_w);
    let (avg_da, max_da) = fold(|p| p.d_a);
    Ok(ReconstructionReport { m, r, m_over_r: m as f64 / r as f64, avg_dw, max_dw, avg_da, max_da, matches })
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub r: usize,
    pub n: usize,
    pub report: ReconstructionReport,
    pub q: usize,
}

pub const TABLE_HEADER: [&str; 9] = ["Method", "r", "N", "m/r", "<d(w)>", "max d(w)", "<d(a)>", "max d(a)", "Q"];

fn sci(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6e}")
    }
}

pub fn table_csv(rows: &[TableRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TABLE_HEADER).map_err(csv_err)?;
    for row in rows {
        let rep = &row.report;
        w.write_record(&[
            row.method.clone(),
            row.r.to_string(),
            row.n.to_string(),
            format!("{:.2}", rep.m_over_r),
            sci(rep.avg_dw),
            sci(rep.max_dw),
            sci(rep.avg_da),
            sci(rep.max_da),
            row.q.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_table_csv(path: &Path, rows: &[TableRow]) -> Result<()> {
    crate::io_util::write_atomic(path, &table_csv(rows)?)
}

/// Per-neuron matched distances: `recon_index,teacher_index,d_w,d_a`.
pub fn write_matches_csv(path: &Path, report: &ReconstructionReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["recon_index", "teacher_index", "d_w", "d_a"]).map_err(csv_err)?;
    for p in &report.matches {
        w.write_record(&[p.recon_index.to_string(), p.teacher_index.to_string(), sci(p.d_w), sci(p.d_a)])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    crate::io_util::write_atomic(path, &bytes)
}
