//! In-memory dataset model shared by every stage.
//!
//! Category ids from the source file are remapped to a dense class index
//! `0..M`; column `M` of the reduced matrices is the background class.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub type AnnotationId = u64;
pub type ImageId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: ImageId,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub file_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    Original,
    Predicted { score: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotatedBox {
    pub id: AnnotationId,
    pub image_id: ImageId,
    /// Dense class index in `0..M`.
    pub class: usize,
    pub bbox: BBox,
    pub source: Source,
}

impl AnnotatedBox {
    pub fn original(id: AnnotationId, image_id: ImageId, class: usize, bbox: BBox) -> Self {
        Self {
            id,
            image_id,
            class,
            bbox,
            source: Source::Original,
        }
    }

    pub fn predicted(id: AnnotationId, image_id: ImageId, class: usize, bbox: BBox, score: f64) -> Self {
        Self {
            id,
            image_id,
            class,
            bbox,
            source: Source::Predicted { score },
        }
    }

    pub fn is_original(&self) -> bool {
        matches!(self.source, Source::Original)
    }

    pub fn score(&self) -> Option<f64> {
        match self.source {
            Source::Original => None,
            Source::Predicted { score } => Some(score),
        }
    }
}

/// A validated, immutable ground-truth dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<ImageInfo>,
    categories: Vec<Category>,
    annotations: Vec<AnnotatedBox>,
    image_index: HashMap<ImageId, usize>,
}

impl Dataset {
    /// Validates ids and references and clamps every box to its image.
    pub fn new(
        images: Vec<ImageInfo>,
        categories: Vec<Category>,
        mut annotations: Vec<AnnotatedBox>,
    ) -> Result<Self> {
        let mut image_index = HashMap::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            if img.width == 0 || img.height == 0 {
                return Err(Error::InvalidInput(format!(
                    "image {} has zero width or height",
                    img.id
                )));
            }
            if image_index.insert(img.id, i).is_some() {
                return Err(Error::DuplicateId {
                    what: "image",
                    id: img.id,
                });
            }
        }
        let mut seen = HashSet::with_capacity(categories.len());
        for c in &categories {
            if !seen.insert(c.id) {
                return Err(Error::DuplicateId {
                    what: "category",
                    id: c.id,
                });
            }
        }
        let mut seen = HashSet::with_capacity(annotations.len());
        for ann in annotations.iter_mut() {
            if !seen.insert(ann.id) {
                return Err(Error::DuplicateId {
                    what: "annotation",
                    id: ann.id,
                });
            }
            if !ann.is_original() {
                return Err(Error::InvalidInput(format!(
                    "annotation {} is marked as a prediction",
                    ann.id
                )));
            }
            if ann.class >= categories.len() {
                return Err(Error::InvalidInput(format!(
                    "annotation {} has class index {} but there are {} categories",
                    ann.id,
                    ann.class,
                    categories.len()
                )));
            }
            let img = image_index
                .get(&ann.image_id)
                .map(|&i| &images[i])
                .ok_or(Error::DanglingReference {
                    what: "annotation",
                    id: ann.id,
                    target: "image",
                    target_id: ann.image_id,
                })?;
            ann.bbox = ann
                .bbox
                .clip_to(img.width as f64, img.height as f64)
                .ok_or_else(|| Error::DegenerateBox {
                    what: "annotation",
                    id: ann.id,
                    reason: format!("{:?} lies outside image {}", ann.bbox.to_array(), img.id),
                })?;
        }
        Ok(Self {
            images,
            categories,
            annotations,
            image_index,
        })
    }

    pub fn images(&self) -> &[ImageInfo] {
        &self.images
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn annotations(&self) -> &[AnnotatedBox] {
        &self.annotations
    }

    /// Number of real classes `M`.
    pub fn num_classes(&self) -> usize {
        self.categories.len()
    }

    pub fn image(&self, id: ImageId) -> Option<&ImageInfo> {
        self.image_index.get(&id).map(|&i| &self.images[i])
    }

    pub fn class_of(&self, category_id: u64) -> Option<usize> {
        self.categories.iter().position(|c| c.id == category_id)
    }

    pub fn category_id_of(&self, class: usize) -> Option<u64> {
        self.categories.get(class).map(|c| c.id)
    }

    /// Builds a category-id lookup table for bulk remapping.
    pub fn class_lookup(&self) -> HashMap<u64, usize> {
        self.categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id, i))
            .collect()
    }

    pub fn max_annotation_id(&self) -> Option<AnnotationId> {
        self.annotations.iter().map(|a| a.id).max()
    }

    /// Returns a copy with the annotation list replaced, re-validated.
    pub fn with_annotations(&self, annotations: Vec<AnnotatedBox>) -> Result<Self> {
        Dataset::new(self.images.clone(), self.categories.clone(), annotations)
    }
}

/// Out-of-sample detector output for the images of a [`Dataset`].
///
/// The caller is responsible for making sure the model that produced these
/// boxes never saw the audited images during training.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    pub boxes: Vec<AnnotatedBox>,
    pub note: String,
}

impl PredictionSet {
    pub fn new(boxes: Vec<AnnotatedBox>, note: impl Into<String>) -> Self {
        Self {
            boxes,
            note: note.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(id: u64) -> ImageInfo {
        ImageInfo {
            id,
            width: 100,
            height: 50,
            file_name: format!("{id}.jpg"),
        }
    }

    fn cat(id: u64) -> Category {
        Category {
            id,
            name: format!("c{id}"),
        }
    }

    fn ann(id: u64, image_id: u64, x: f64, y: f64, w: f64, h: f64) -> AnnotatedBox {
        AnnotatedBox::original(id, image_id, 0, BBox::new(x, y, w, h).unwrap())
    }

    #[test]
    fn clamps_overflowing_boxes() {
        let ds = Dataset::new(vec![img(1)], vec![cat(5)], vec![ann(1, 1, 90., 40., 20., 20.)]).unwrap();
        assert_eq!(ds.annotations()[0].bbox, BBox::new(90., 40., 10., 10.).unwrap());
    }

    #[test]
    fn rejects_box_outside_image() {
        let err = Dataset::new(vec![img(1)], vec![cat(5)], vec![ann(1, 1, 200., 0., 5., 5.)]).unwrap_err();
        assert!(matches!(err, Error::DegenerateBox { .. }));
    }

    #[test]
    fn duplicate_and_dangling_ids() {
        let err = Dataset::new(vec![img(1), img(1)], vec![cat(5)], vec![]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { what: "image", .. }));
        let err = Dataset::new(vec![img(1)], vec![cat(5), cat(5)], vec![]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { what: "category", .. }));
        let err = Dataset::new(
            vec![img(1)],
            vec![cat(5)],
            vec![ann(3, 1, 0., 0., 1., 1.), ann(3, 1, 0., 0., 1., 1.)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId { what: "annotation", .. }));
        let err = Dataset::new(vec![img(1)], vec![cat(5)], vec![ann(3, 2, 0., 0., 1., 1.)]).unwrap_err();
        assert!(matches!(err, Error::DanglingReference { target_id: 2, .. }));
    }

    #[test]
    fn dense_class_mapping() {
        let ds = Dataset::new(vec![img(1)], vec![cat(17), cat(3)], vec![]).unwrap();
        assert_eq!(ds.class_of(3), Some(1));
        assert_eq!(ds.category_id_of(0), Some(17));
        assert_eq!(ds.class_of(4), None);
        assert_eq!(ds.num_classes(), 2);
    }
}
