//! Scoring detector verdicts against a noise ledger.
//!
//! The evaluated population is fixed before any threshold is applied:
//!
//! * every annotation verdict is one item, positive when its annotation is
//!   in the ledger;
//! * every record removed by `missing` noise is one positive item. It is
//!   represented by the background verdict it was matched to (greedy
//!   one-to-one matching by descending IoU, on the same image), or is never
//!   detected when nothing matched;
//! * background verdicts left unmatched are negative items.
//!
//! An item is predicted positive at threshold `tau` by
//! [`flagged_at`](crate::confident_learning::flagged_at).

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::confident_learning::{flagged_at, BoxVerdict};
use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::noise::{NoiseKind, NoiseLedger};

pub const DEFAULT_MATCH_IOU: f64 = 0.5;

/// `0.0, 0.1, ..., 1.0`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }

    pub fn tpr(&self) -> Option<f64> {
        (self.positives() > 0).then(|| self.tp as f64 / self.positives() as f64)
    }

    pub fn fpr(&self) -> Option<f64> {
        (self.negatives() > 0).then(|| self.fp as f64 / self.negatives() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auroc: f64,
}

/// Verdicts and ledger resolved into scored positive / negative items.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredItems {
    /// Scores of positive items; `None` for removed boxes nothing matched.
    positives: Vec<Option<f64>>,
    negatives: Vec<f64>,
}

impl ScoredItems {
    pub fn build(verdicts: &[BoxVerdict], ledger: &NoiseLedger, match_iou: f64) -> Result<Self> {
        let present: HashSet<u64> = verdicts.iter().filter_map(|v| v.annotation_id).collect();
        let mut noisy_ids = HashSet::new();
        let mut removed = Vec::new();
        for e in &ledger.entries {
            if e.noise_type == NoiseKind::Missing {
                if present.contains(&e.annotation_id) {
                    return Err(Error::InvalidInput(format!(
                        "annotation {} is recorded as removed but still has a verdict; \
                         verdicts and ledger describe different datasets",
                        e.annotation_id
                    )));
                }
                let rec = e.removed.ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "missing-noise entry {} has no removed record",
                        e.annotation_id
                    ))
                })?;
                removed.push(rec);
            } else {
                if !present.contains(&e.annotation_id) {
                    return Err(Error::InvalidInput(format!(
                        "ledger annotation {} has no verdict; verdicts and ledger \
                         describe different datasets",
                        e.annotation_id
                    )));
                }
                noisy_ids.insert(e.annotation_id);
            }
        }

        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for v in verdicts {
            if let Some(id) = v.annotation_id {
                if noisy_ids.contains(&id) {
                    positives.push(Some(v.quality_score));
                } else {
                    negatives.push(v.quality_score);
                }
            }
        }

        let background: Vec<&BoxVerdict> = verdicts
            .iter()
            .filter(|v| v.annotation_id.is_none() && v.region.is_some())
            .collect();
        let mut by_image: HashMap<u64, Vec<usize>> = HashMap::new();
        for (j, v) in background.iter().enumerate() {
            by_image.entry(v.image_id).or_default().push(j);
        }
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, rec) in removed.iter().enumerate() {
            for &j in by_image.get(&rec.image_id).into_iter().flatten() {
                let overlap = iou(&rec.bbox, &background[j].region.unwrap());
                if overlap >= match_iou {
                    pairs.push((overlap, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut record_match: Vec<Option<usize>> = vec![None; removed.len()];
        let mut verdict_used = vec![false; background.len()];
        for (_, i, j) in pairs {
            if record_match[i].is_none() && !verdict_used[j] {
                record_match[i] = Some(j);
                verdict_used[j] = true;
            }
        }
        positives.extend(
            record_match
                .iter()
                .map(|m| m.map(|j| background[j].quality_score)),
        );
        negatives.extend(
            background
                .iter()
                .zip(&verdict_used)
                .filter(|(_, &used)| !used)
                .map(|(v, _)| v.quality_score),
        );

        Ok(Self {
            positives,
            negatives,
        })
    }

    pub fn confusion_at(&self, tau: f64) -> Confusion {
        let tp = self
            .positives
            .iter()
            .filter(|s| s.is_some_and(|s| flagged_at(s, tau)))
            .count();
        let fp = self.negatives.iter().filter(|&&s| flagged_at(s, tau)).count();
        Confusion {
            tp,
            fp,
            tn: self.negatives.len() - fp,
            fn_: self.positives.len() - tp,
        }
    }

    /// Every distinct score plus the 0 and 1 endpoints, ascending.
    pub fn dense_thresholds(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .positives
            .iter()
            .flatten()
            .chain(self.negatives.iter())
            .copied()
            .chain([0.0, 1.0])
            .collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    pub fn roc_curve(&self, thresholds: &[f64]) -> Result<RocCurve> {
        if self.positives.is_empty() {
            return Err(Error::NoNoise(
                "the ledger is empty, so the true positive rate is undefined".into(),
            ));
        }
        if self.negatives.is_empty() {
            return Err(Error::InvalidInput(
                "no clean items to evaluate, so the false positive rate is undefined".into(),
            ));
        }
        if thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput("thresholds must be sorted ascending".into()));
        }
        if thresholds.first() != Some(&0.0) || thresholds.last() != Some(&1.0) {
            return Err(Error::InvalidInput(
                "thresholds must start at 0 and end at 1".into(),
            ));
        }

        let mut pos: Vec<f64> = self.positives.iter().flatten().copied().collect();
        let mut neg = self.negatives.clone();
        pos.sort_by(f64::total_cmp);
        neg.sort_by(f64::total_cmp);
        let below = |v: &[f64], tau: f64| {
            if tau >= 1.0 {
                v.len()
            } else {
                v.partition_point(|&s| s < tau)
            }
        };
        let (np, nn) = (self.positives.len() as f64, self.negatives.len() as f64);
        let points: Vec<RocPoint> = thresholds
            .iter()
            .map(|&tau| RocPoint {
                threshold: tau,
                fpr: below(&neg, tau) as f64 / nn,
                tpr: below(&pos, tau) as f64 / np,
            })
            .collect();
        let area = auroc(&points.iter().map(|p| (p.fpr, p.tpr)).collect::<Vec<_>>())?;
        Ok(RocCurve {
            points,
            auroc: area,
        })
    }
}

pub fn confusion_at(
    verdicts: &[BoxVerdict],
    ledger: &NoiseLedger,
    tau: f64,
    match_iou: f64,
) -> Result<Confusion> {
    Ok(ScoredItems::build(verdicts, ledger, match_iou)?.confusion_at(tau))
}

pub fn roc_curve(
    verdicts: &[BoxVerdict],
    ledger: &NoiseLedger,
    thresholds: &[f64],
    match_iou: f64,
) -> Result<RocCurve> {
    ScoredItems::build(verdicts, ledger, match_iou)?.roc_curve(thresholds)
}

/// Trapezoidal area under `(fpr, tpr)` points, sorted by fpr and anchored at
/// `(0, 0)` and `(1, 1)`.
pub fn auroc(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "AUROC needs at least 2 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points
        .iter()
        .find(|(f, t)| !(0.0..=1.0).contains(f) || !(0.0..=1.0).contains(t))
    {
        return Err(Error::InvalidInput(format!(
            "ROC point ({}, {}) lies outside the unit square",
            p.0, p.1
        )));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if pts[0] != (0.0, 0.0) {
        pts.insert(0, (0.0, 0.0));
    }
    if *pts.last().unwrap() != (1.0, 1.0) {
        pts.push((1.0, 1.0));
    }
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum())
}

/// Median; mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}
