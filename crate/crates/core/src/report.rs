//! Suspicious-annotation report assembled from box verdicts.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::confident_learning::{BoxVerdict, VerdictKind};
use crate::dataset::{Dataset, ImageId};
use crate::geometry::BBox;
use crate::noise::AnnotationRecord;
use crate::reduction::ReducedMatrices;

pub const BACKGROUND_LABEL: &str = "background";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub category_id: u64,
    pub bbox: BBox,
    pub score: f64,
}

/// One flagged cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub cluster_id: usize,
    pub image_id: ImageId,
    pub annotation_ids: Vec<u64>,
    pub verdict_kind: VerdictKind,
    pub quality_score: f64,
    /// Source category ids, or `"background"`.
    pub flagged_class_ids: Vec<String>,
    pub original_members: Vec<AnnotationRecord>,
    pub predicted_members: Vec<PredictionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportSummary {
    pub mode: String,
    pub clusters: usize,
    pub flagged_rows: usize,
    pub flagged_annotations: usize,
    pub missing_regions: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub summary: ReportSummary,
    pub findings: Vec<Finding>,
}

fn class_label(ds: &Dataset, class: usize) -> String {
    ds.category_id_of(class)
        .map_or_else(|| BACKGROUND_LABEL.to_string(), |id| id.to_string())
}

pub fn build_report(ds: &Dataset, r: &ReducedMatrices, verdicts: &[BoxVerdict], mode: &str) -> Report {
    let row_of: HashMap<usize, usize> = r.clusters.iter().enumerate().map(|(k, c)| (c.id, k)).collect();
    let mut flagged: BTreeMap<usize, Vec<&BoxVerdict>> = BTreeMap::new();
    for v in verdicts.iter().filter(|v| v.flagged) {
        flagged.entry(v.cluster_id).or_default().push(v);
    }

    let findings: Vec<Finding> = flagged
        .into_iter()
        .filter_map(|(cluster_id, vs)| {
            let cluster = &r.clusters[*row_of.get(&cluster_id)?];
            let head = vs[0];
            Some(Finding {
                cluster_id,
                image_id: cluster.image_id,
                annotation_ids: vs.iter().filter_map(|v| v.annotation_id).collect(),
                verdict_kind: head.kind,
                quality_score: head.quality_score,
                flagged_class_ids: head.flagged_classes.iter().map(|&m| class_label(ds, m)).collect(),
                original_members: cluster
                    .original
                    .iter()
                    .map(|b| AnnotationRecord::from_box(ds, b))
                    .collect(),
                predicted_members: cluster
                    .predicted
                    .iter()
                    .map(|b| PredictionRecord {
                        category_id: ds.category_id_of(b.class).unwrap_or_default(),
                        bbox: b.bbox,
                        score: b.score().unwrap_or_default(),
                    })
                    .collect(),
                region: head.region,
            })
        })
        .collect();

    Report {
        summary: ReportSummary {
            mode: mode.to_string(),
            clusters: r.rows(),
            flagged_rows: findings.len(),
            flagged_annotations: findings.iter().map(|f| f.annotation_ids.len()).sum(),
            missing_regions: findings
                .iter()
                .filter(|f| f.verdict_kind == VerdictKind::MissingRegion)
                .count(),
        },
        findings,
    }
}
