//! Diagnostics: imitation losses on arbitrary sets (out-of-distribution
//! overfitting checks), pre-activation variability, and pooled
//! pre-activation histograms. Standard deviations are population (ddof = 0).

use std::path::Path;

use ndarray::{Array1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::QuerySet;
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::network::Mlp;
use crate::train::csv_err;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub dataset_name: String,
    pub loss: f64,
    pub q: usize,
}

/// Imitation loss of `student` against `teacher` logits on `x`.
pub fn imitation_loss(student: &Mlp, teacher: &Mlp, x: ArrayView2<f64>, dataset_name: &str) -> Result<LossPoint> {
    let target = teacher.predict(x)?;
    let loss = student.mse(x, target.view())?;
    Ok(LossPoint { dataset_name: dataset_name.to_string(), loss, q: x.nrows() })
}

/// Imitation loss against a query set's stored teacher logits.
pub fn query_loss(student: &Mlp, qs: &QuerySet, dataset_name: &str) -> Result<LossPoint> {
    let loss = student.mse(qs.inputs.view(), qs.targets.view())?;
    Ok(LossPoint { dataset_name: dataset_name.to_string(), loss, q: qs.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariabilityStats {
    /// Standard deviation of each neuron's pre-activation over the rows.
    pub per_neuron_std: Array1<f64>,
    pub mean_std: f64,
    /// `std(per_neuron_std) / sqrt(r)`.
    pub sem_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn preactivation_variability(teacher: &Mlp, x: ArrayView2<f64>) -> Result<VariabilityStats> {
    let pre = teacher.preactivations(x)?;
    let per_neuron_std: Array1<f64> = pre
        .axis_iter(Axis(1))
        .map(|col| mean_std(col.iter().copied()).1)
        .collect();
    let (mean, spread) = mean_std(per_neuron_std.iter().copied());
    let r = per_neuron_std.len().max(1) as f64;
    Ok(VariabilityStats { mean_std: mean, sem_std: spread / r.sqrt(), per_neuron_std })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` uniform edges over `[min, max]` of the pooled values.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Moments of the pooled values themselves (not of the binned data).
    pub mean: f64,
    pub std: f64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Pooled histogram of all `r · Q` pre-activations.
pub fn preactivation_histogram(teacher: &Mlp, x: ArrayView2<f64>, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Argument("histogram needs at least one bin".into()));
    }
    let pre = teacher.preactivations(x)?;
    let (lo, hi) = pre.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (mean, std) = mean_std(pre.iter().copied());
    let mut counts = vec![0u64; bins];
    if pre.is_empty() {
        return Ok(Histogram { edges: vec![0.0; bins + 1], counts, mean, std });
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    for &v in pre.iter() {
        let k = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts, mean, std })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub student: String,
    pub dataset: String,
    pub q: usize,
    pub loss: f64,
}

/// Every student against every evaluation set.
pub fn scatter_table(students: &[(String, &Mlp)], eval_sets: &[(String, &QuerySet)]) -> Result<Vec<ScatterRow>> {
    let mut rows = Vec::with_capacity(students.len() * eval_sets.len());
    for (sname, student) in students {
        for (dname, qs) in eval_sets {
            let lp = query_loss(student, qs, dname)?;
            rows.push(ScatterRow { student: sname.clone(), dataset: lp.dataset_name, q: lp.q, loss: lp.loss });
        }
    }
    Ok(rows)
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
}

/// `losses.csv`: `student,dataset,Q,loss`.
pub fn write_losses_csv(path: &Path, rows: &[ScatterRow]) -> Result<()> {
    write_csv(
        path,
        &["student", "dataset", "Q", "loss"],
        rows.iter().map(|r| vec![r.student.clone(), r.dataset.clone(), r.q.to_string(), format!("{:e}", r.loss)]),
    )
}

/// `variability.csv`: `strategy,mean_std,sem_std`.
pub fn write_variability_csv(path: &Path, rows: &[(String, VariabilityStats)]) -> Result<()> {
    write_csv(
        path,
        &["strategy", "mean_std", "sem_std"],
        rows.iter().map(|(s, v)| vec![s.clone(), format!("{:e}", v.mean_std), format!("{:e}", v.sem_std)]),
    )
}

/// `histogram.csv`: `bin_lo,bin_hi,count`.
pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> Result<()> {
    write_csv(
        path,
        &["bin_lo", "bin_hi", "count"],
        hist.counts
            .iter()
            .enumerate()
            .map(|(i, c)| vec![format!("{:e}", hist.edges[i]), format!("{:e}", hist.edges[i + 1]), c.to_string()]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::InitScheme;
    use ndarray::{array, Array2};

    fn teacher() -> Mlp {
        let mut t = Mlp::init(4, 3, 2, InitScheme::UniformFanIn, 8).unwrap();
        t.b.assign(&array![0.3, -0.1, 0.0, 0.2]);
        t
    }

    #[test]
    fn self_loss_is_zero() {
        let t = teacher();
        let x = Array2::from_shape_fn((7, 3), |(i, j)| (i as f64) - j as f64 * 0.5);
        assert_eq!(imitation_loss(&t, &t, x.view(), "x").unwrap().loss, 0.0);
    }

    #[test]
    fn repeated_row_has_no_variability() {
        let x = Array2::from_shape_fn((5, 3), |(_, j)| j as f64 + 0.25);
        let v = preactivation_variability(&teacher(), x.view()).unwrap();
        assert!(v.per_neuron_std.iter().all(|&s| s < 1e-15));
    }

    #[test]
    fn two_point_std_is_half_projection() {
        let t = teacher();
        let x0 = array![0.2, -1.0, 0.5];
        let a = array![1.0, 0.5, -2.0];
        let x = ndarray::stack(Axis(0), &[x0.view(), (&x0 + &a).view()]).unwrap();
        let v = preactivation_variability(&t, x.view()).unwrap();
        for i in 0..4 {
            let expected = t.w.row(i).dot(&a).abs() / 2.0;
            assert!((v.per_neuron_std[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_mass_and_degenerate_values() {
        let t = teacher();
        let x = Array2::from_shape_fn((11, 3), |(i, j)| ((i * j) as f64).cos());
        let h = preactivation_histogram(&t, x.view(), 7).unwrap();
        assert_eq!(h.total(), 4 * 11);
        assert_eq!(h.edges.len(), 8);

        let same = Array2::from_elem((6, 3), 1.0);
        let one = Mlp::new(array![[1.0, 1.0, 1.0]], array![0.0], array![[1.0], [1.0]], array![0.0, 0.0]).unwrap();
        let h = preactivation_histogram(&one, same.view(), 5).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.total(), 6);
        assert!(preactivation_histogram(&one, same.view(), 0).is_err());
    }

    #[test]
    fn scatter_cross_product() {
        let t = teacher();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64);
        let qs_a = QuerySet::new(x.clone(), t.predict(x.view()).unwrap(), "a").unwrap();
        let qs_b = QuerySet::new(x.clone(), Array2::zeros((4, 2)), "b").unwrap();
        let rows = scatter_table(&[("s0".into(), &t)], &[("train".into(), &qs_a), ("ood".into(), &qs_b)]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].loss, 0.0);
        assert!(rows[1].loss > 0.0);
        assert_eq!(rows, scatter_table(&[("s0".into(), &t)], &[("train".into(), &qs_a), ("ood".into(), &qs_b)]).unwrap());
    }
}
