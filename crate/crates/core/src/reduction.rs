//! Reduction of clusters to a multi-label classification problem.
//!
//! Every cluster becomes one row of a binary label matrix and one row of a
//! predicted-probability matrix, both with `M + 1` columns. Column `M` is the
//! background class: it is labelled when the cluster has no original boxes,
//! and it gets probability 1 when no prediction in the cluster has a
//! positive score.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1};

use crate::clustering::Cluster;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMatrices {
    /// `N x (M + 1)` binary label matrix.
    pub labels: Array2<u8>,
    /// `N x (M + 1)` predicted probabilities.
    pub probs: Array2<f64>,
    /// Row `k` was built from `clusters[k]`.
    pub clusters: Vec<Cluster>,
    pub num_classes: usize,
}

impl ReducedMatrices {
    pub fn rows(&self) -> usize {
        self.labels.nrows()
    }

    /// Total column count, `M + 1`.
    pub fn columns(&self) -> usize {
        self.num_classes + 1
    }

    pub fn background(&self) -> usize {
        self.num_classes
    }

    /// Writes both matrices as tab-separated text, one line per cluster.
    pub fn write_debug_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let cols = self.columns();
        write!(out, "cluster_id\timage_id")?;
        for m in 0..cols {
            let name = if m == self.num_classes {
                "bg".to_string()
            } else {
                m.to_string()
            };
            write!(out, "\ty_{name}")?;
        }
        for m in 0..cols {
            let name = if m == self.num_classes {
                "bg".to_string()
            } else {
                m.to_string()
            };
            write!(out, "\tp_{name}")?;
        }
        writeln!(out)?;
        for (k, c) in self.clusters.iter().enumerate() {
            write!(out, "{}\t{}", c.id, c.image_id)?;
            for v in self.labels.row(k) {
                write!(out, "\t{v}")?;
            }
            for v in self.probs.row(k) {
                write!(out, "\t{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Reduces one cluster to a `(label row, probability row)` pair of length
/// `num_classes + 1`.
pub fn reduce_cluster(cluster: &Cluster, num_classes: usize) -> Result<(Array1<u8>, Array1<f64>)> {
    let mut y = Array1::<u8>::zeros(num_classes + 1);
    let mut p = Array1::<f64>::zeros(num_classes + 1);

    for b in cluster.members() {
        if b.class >= num_classes {
            return Err(Error::InvalidInput(format!(
                "box {} in cluster {} has class {} but only {} classes exist",
                b.id, cluster.id, b.class, num_classes
            )));
        }
    }

    for b in &cluster.original {
        y[b.class] = 1;
    }
    if y.iter().all(|&v| v == 0) {
        y[num_classes] = 1;
    }

    for b in &cluster.predicted {
        let score = b.score().ok_or_else(|| {
            Error::InvalidInput(format!("predicted box {} carries no score", b.id))
        })?;
        if score > p[b.class] {
            p[b.class] = score;
        }
    }
    if p.iter().take(num_classes).sum::<f64>() == 0.0 {
        p[num_classes] = 1.0;
    }

    Ok((y, p))
}

/// Stacks the reduced rows of all clusters in the order given.
pub fn reduce_dataset(clusters: Vec<Cluster>, num_classes: usize) -> Result<ReducedMatrices> {
    let n = clusters.len();
    let mut labels = Array2::<u8>::zeros((n, num_classes + 1));
    let mut probs = Array2::<f64>::zeros((n, num_classes + 1));
    for (k, c) in clusters.iter().enumerate() {
        let (y, p) = reduce_cluster(c, num_classes)?;
        labels.row_mut(k).assign(&y);
        probs.row_mut(k).assign(&p);
    }
    Ok(ReducedMatrices {
        labels,
        probs,
        clusters,
        num_classes,
    })
}

/// Checks the row invariants of a reduced pair. Returns a description of the
/// first violation.
pub fn check_row(y: ArrayView1<u8>, p: ArrayView1<f64>) -> std::result::Result<(), String> {
    let m = y.len() - 1;
    if y.iter().all(|&v| v == 0) {
        return Err("label row is empty".into());
    }
    let any_real_label = y.iter().take(m).any(|&v| v == 1);
    if any_real_label == (y[m] == 1) {
        return Err("background label must be set exactly when no real label is".into());
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err("probability outside [0, 1]".into());
    }
    let any_real_prob = p.iter().take(m).any(|&v| v > 0.0);
    let bg = p[m];
    if !(bg == 0.0 || bg == 1.0) || any_real_prob == (bg == 1.0) {
        return Err("background probability must be 1 exactly when all real probabilities are 0".into());
    }
    Ok(())
}
