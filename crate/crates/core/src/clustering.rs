//! Per-image single-linkage clustering of original and predicted boxes.
//!
//! Cutting a single-linkage dendrogram at distance `1 - t` yields the
//! connected components of the graph joining every pair of boxes with
//! `iou >= t`, so the clustering is a union-find pass over all pairs of one
//! image. Pairs exactly at the threshold are merged.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dataset::{AnnotatedBox, Dataset, ImageId, PredictionSet};
use crate::error::{Error, Result};
use crate::geometry::iou;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: usize,
    pub image_id: ImageId,
    pub original: Vec<AnnotatedBox>,
    pub predicted: Vec<AnnotatedBox>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.original.len() + self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A cluster without original boxes stands for background.
    pub fn is_background(&self) -> bool {
        self.original.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = &AnnotatedBox> {
        self.original.iter().chain(self.predicted.iter())
    }
}

/// Ordering key of a member: originals before predictions, then by id.
/// Prediction ids live in their own namespace, hence the source rank.
fn member_key(b: &AnnotatedBox) -> (bool, u64) {
    (!b.is_original(), b.id)
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] += 1;
        }
    }
}

fn check_threshold(iou_threshold: f64) -> Result<()> {
    if iou_threshold > 0.0 && iou_threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "IoU threshold must lie strictly between 0 and 1, got {iou_threshold}"
        )))
    }
}

/// Clusters the boxes of a single image. Cluster ids are local (`0..`),
/// ordered by each cluster's smallest member.
pub fn cluster_image(boxes: &[AnnotatedBox], iou_threshold: f64) -> Result<Vec<Cluster>> {
    check_threshold(iou_threshold)?;
    let Some(first) = boxes.first() else {
        return Ok(Vec::new());
    };
    if let Some(other) = boxes.iter().find(|b| b.image_id != first.image_id) {
        return Err(Error::InvalidInput(format!(
            "cluster_image got boxes from images {} and {}",
            first.image_id, other.image_id
        )));
    }
    Ok(cluster_unchecked(first.image_id, boxes, iou_threshold))
}

fn cluster_unchecked(image_id: ImageId, boxes: &[AnnotatedBox], iou_threshold: f64) -> Vec<Cluster> {
    let n = boxes.len();
    let mut sets = DisjointSet::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if iou(&boxes[i].bbox, &boxes[j].bbox) >= iou_threshold {
                sets.union(i, j);
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<&AnnotatedBox>> = BTreeMap::new();
    for (i, b) in boxes.iter().enumerate() {
        groups.entry(sets.find(i)).or_default().push(b);
    }
    let mut groups: Vec<Vec<&AnnotatedBox>> = groups.into_values().collect();
    for g in groups.iter_mut() {
        g.sort_by_key(|b| member_key(b));
    }
    groups.sort_by_key(|g| member_key(g[0]));

    groups
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            let (original, predicted) = members.into_iter().copied().partition(|b| b.is_original());
            Cluster {
                id,
                image_id,
                original,
                predicted,
            }
        })
        .collect()
}

/// Clusters every image of the dataset together with its predictions.
/// Boxes of different images never share a cluster. Cluster ids are global
/// and ordered by (image id, smallest member).
pub fn cluster_dataset(ds: &Dataset, preds: &PredictionSet, iou_threshold: f64) -> Result<Vec<Cluster>> {
    check_threshold(iou_threshold)?;
    let mut per_image: BTreeMap<ImageId, Vec<AnnotatedBox>> = BTreeMap::new();
    for a in ds.annotations() {
        per_image.entry(a.image_id).or_default().push(*a);
    }
    for p in &preds.boxes {
        if ds.image(p.image_id).is_none() {
            return Err(Error::DanglingReference {
                what: "prediction",
                id: p.id,
                target: "image",
                target_id: p.image_id,
            });
        }
        per_image.entry(p.image_id).or_default().push(*p);
    }

    let per_image: Vec<(ImageId, Vec<AnnotatedBox>)> = per_image.into_iter().collect();
    let clustered: Vec<Vec<Cluster>> = per_image
        .par_iter()
        .map(|(image_id, boxes)| cluster_unchecked(*image_id, boxes, iou_threshold))
        .collect();

    let mut out: Vec<Cluster> = clustered.into_iter().flatten().collect();
    for (id, c) in out.iter_mut().enumerate() {
        c.id = id;
    }
    Ok(out)
}
