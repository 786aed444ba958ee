//! One-vs-rest confident learning over reduced cluster matrices.
//!
//! Each column `m` (real classes and background) is treated as a binary
//! problem with given label `Y[k, m]` and probability `P[k, m]`:
//!
//! * per-class confident thresholds are the mean probability of the rows
//!   labelled `m` (`t_pos`) and the mean of `1 - p` over the remaining rows
//!   (`t_neg`);
//! * a labelled row falls in the off-diagonal cell of the confident joint
//!   when `1 - p >= t_neg`, an unlabelled row when `p >= t_pos`;
//! * prune-by-noise-rate: for each off-diagonal cell holding `n` rows, the
//!   `n` rows with the lowest self-confidence among the rows sharing that
//!   given label become issues for class `m`.
//!
//! Self-confidence is `p` for labelled rows and `1 - p` otherwise; the
//! quality score of a row is its minimum over all columns.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::Cluster;
use crate::dataset::{AnnotationId, ImageId};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::reduction::ReducedMatrices;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassThresholds {
    /// Mean probability over rows labelled with the class.
    pub positive: Vec<Option<f64>>,
    /// Mean of `1 - p` over rows not labelled with the class.
    pub negative: Vec<Option<f64>>,
}

pub fn compute_thresholds(r: &ReducedMatrices) -> ClassThresholds {
    let cols = r.columns();
    let mut pos_sum = vec![0.0; cols];
    let mut pos_n = vec![0usize; cols];
    let mut neg_sum = vec![0.0; cols];
    let mut neg_n = vec![0usize; cols];
    for (y, p) in r.labels.rows().into_iter().zip(r.probs.rows()) {
        for m in 0..cols {
            if y[m] == 1 {
                pos_sum[m] += p[m];
                pos_n[m] += 1;
            } else {
                neg_sum[m] += 1.0 - p[m];
                neg_n[m] += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    ClassThresholds {
        positive: (0..cols).map(|m| mean(pos_sum[m], pos_n[m])).collect(),
        negative: (0..cols).map(|m| mean(neg_sum[m], neg_n[m])).collect(),
    }
}

/// Per-row outcome of [`detect_issues`].
#[derive(Debug, Clone, PartialEq)]
pub struct RowResult {
    /// Minimum self-confidence over all columns; lower is more suspicious.
    pub quality_score: f64,
    pub flagged: bool,
    /// Columns whose confident-joint issue set contains this row.
    pub flagged_classes: Vec<usize>,
    /// Column attaining the quality score (lowest index on ties).
    pub weakest_class: usize,
}

fn self_confidence(label: u8, p: f64) -> f64 {
    if label == 1 {
        p
    } else {
        1.0 - p
    }
}

/// Issue rows of one column, ascending.
fn class_issues(r: &ReducedMatrices, th: &ClassThresholds, m: usize) -> Vec<usize> {
    let labels = r.labels.column(m);
    let probs = r.probs.column(m);
    let mut issues = Vec::new();

    for given in [1u8, 0u8] {
        let count = (0..r.rows())
            .filter(|&k| labels[k] == given)
            .filter(|&k| match given {
                1 => th.negative[m].is_some_and(|t| 1.0 - probs[k] >= t),
                _ => th.positive[m].is_some_and(|t| probs[k] >= t),
            })
            .count();
        if count == 0 {
            continue;
        }
        let mut candidates: Vec<(f64, usize)> = (0..r.rows())
            .filter(|&k| labels[k] == given)
            .map(|k| (self_confidence(given, probs[k]), k))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        issues.extend(candidates.into_iter().take(count).map(|(_, k)| k));
    }
    issues.sort_unstable();
    issues
}

/// Scores every row and flags confident-joint issues.
pub fn detect_issues(r: &ReducedMatrices, th: &ClassThresholds) -> Vec<RowResult> {
    let cols = r.columns();
    let per_class: Vec<Vec<usize>> = (0..cols)
        .into_par_iter()
        .map(|m| class_issues(r, th, m))
        .collect();

    let mut rows: Vec<RowResult> = r
        .labels
        .rows()
        .into_iter()
        .zip(r.probs.rows())
        .map(|(y, p)| {
            let mut weakest_class = 0;
            let mut quality_score = f64::INFINITY;
            for m in 0..cols {
                let s = self_confidence(y[m], p[m]);
                if s < quality_score {
                    quality_score = s;
                    weakest_class = m;
                }
            }
            RowResult {
                quality_score,
                flagged: false,
                flagged_classes: Vec::new(),
                weakest_class,
            }
        })
        .collect();

    for (m, issues) in per_class.iter().enumerate() {
        for &k in issues {
            rows[k].flagged = true;
            rows[k].flagged_classes.push(m);
        }
    }
    rows
}

/// Decides which rows are reported as suspicious.
pub trait FlagPolicy: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn is_flagged(&self, row: &RowResult) -> bool;
}

/// Parameter-free mode: a row is suspicious when it belongs to any
/// confident-joint issue set.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConfidentJoint;

impl FlagPolicy for ConfidentJoint {
    fn name(&self) -> &'static str {
        "confident_joint"
    }

    fn is_flagged(&self, row: &RowResult) -> bool {
        !row.flagged_classes.is_empty()
    }
}

/// Sweepable mode: a row is suspicious when its quality score lies below
/// `tau`. `tau = 0` flags nothing and `tau >= 1` flags everything.
#[derive(Debug, Clone, Copy)]
pub struct ScoreThreshold {
    pub tau: f64,
}

impl ScoreThreshold {
    pub fn new(tau: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&tau) {
            Ok(Self { tau })
        } else {
            Err(Error::InvalidInput(format!("tau must lie in [0, 1], got {tau}")))
        }
    }
}

impl FlagPolicy for ScoreThreshold {
    fn name(&self) -> &'static str {
        "score_threshold"
    }

    fn is_flagged(&self, row: &RowResult) -> bool {
        flagged_at(row.quality_score, self.tau)
    }
}

/// Score-threshold decision shared by the flag policy and the ROC sweep.
pub fn flagged_at(quality_score: f64, tau: f64) -> bool {
    tau >= 1.0 || quality_score < tau
}

type PolicyFactory = fn(Option<f64>) -> Result<Box<dyn FlagPolicy>>;

/// Flag policies selectable by name.
pub struct PolicyRegistry {
    factories: HashMap<&'static str, PolicyFactory>,
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        let mut reg = Self {
            factories: HashMap::new(),
        };
        reg.register("confident_joint", |_| Ok(Box::new(ConfidentJoint)));
        reg.register("score_threshold", |tau| {
            let tau = tau.ok_or_else(|| {
                Error::InvalidInput("score_threshold mode needs a tau value".into())
            })?;
            Ok(Box::new(ScoreThreshold::new(tau)?))
        });
        reg
    }
}

impl PolicyRegistry {
    pub fn register(&mut self, name: &'static str, factory: PolicyFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut names: Vec<_> = self.factories.keys().copied().collect();
        names.sort_unstable();
        names
    }

    pub fn create(&self, name: &str, tau: Option<f64>) -> Result<Box<dyn FlagPolicy>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::InvalidInput(format!(
                "unknown CL mode '{name}' (known: {})",
                self.names().join(", ")
            ))
        })?;
        factory(tau)
    }
}

/// Re-decides the `flagged` bit of every row under `policy`.
pub fn apply_policy(rows: &mut [RowResult], policy: &dyn FlagPolicy) {
    for row in rows.iter_mut() {
        row.flagged = policy.is_flagged(row);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    WrongLabel,
    MissingRegion,
    Ok,
}

impl VerdictKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerdictKind::WrongLabel => "wrong_label",
            VerdictKind::MissingRegion => "missing_region",
            VerdictKind::Ok => "ok",
        }
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome for one original annotation, or for one background cluster.
///
/// Background clusters (predictions only) carry no annotation id; their
/// `region` is the hull of the predicted boxes. They are `missing_region`
/// when flagged and `ok` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxVerdict {
    pub annotation_id: Option<AnnotationId>,
    pub cluster_id: usize,
    pub image_id: ImageId,
    pub quality_score: f64,
    pub flagged: bool,
    /// Dense column indices; the background column is `num_classes`.
    pub flagged_classes: Vec<usize>,
    pub kind: VerdictKind,
    pub region: Option<BBox>,
}

impl BoxVerdict {
    pub fn is_background(&self) -> bool {
        self.annotation_id.is_none()
    }
}

fn hull_of(cluster: &Cluster) -> Option<BBox> {
    let mut it = cluster.predicted.iter().map(|b| b.bbox);
    let first = it.next()?;
    Some(it.fold(first, |acc, b| acc.hull(&b)))
}

/// Maps row results back onto annotations.
pub fn map_to_boxes(r: &ReducedMatrices, rows: &[RowResult]) -> Result<Vec<BoxVerdict>> {
    if rows.len() != r.rows() {
        return Err(Error::InvalidInput(format!(
            "{} row results for {} matrix rows",
            rows.len(),
            r.rows()
        )));
    }
    let mut out = Vec::with_capacity(rows.len());
    for (cluster, row) in r.clusters.iter().zip(rows) {
        let flagged_classes = if !row.flagged {
            Vec::new()
        } else if row.flagged_classes.is_empty() {
            vec![row.weakest_class]
        } else {
            row.flagged_classes.clone()
        };
        if cluster.is_background() {
            out.push(BoxVerdict {
                annotation_id: None,
                cluster_id: cluster.id,
                image_id: cluster.image_id,
                quality_score: row.quality_score,
                flagged: row.flagged,
                flagged_classes,
                kind: if row.flagged {
                    VerdictKind::MissingRegion
                } else {
                    VerdictKind::Ok
                },
                region: hull_of(cluster),
            });
        } else {
            for b in &cluster.original {
                out.push(BoxVerdict {
                    annotation_id: Some(b.id),
                    cluster_id: cluster.id,
                    image_id: cluster.image_id,
                    quality_score: row.quality_score,
                    flagged: row.flagged,
                    flagged_classes: flagged_classes.clone(),
                    kind: if row.flagged {
                        VerdictKind::WrongLabel
                    } else {
                        VerdictKind::Ok
                    },
                    region: None,
                });
            }
        }
    }
    Ok(out)
}
