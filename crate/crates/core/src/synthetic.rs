//! Seeded synthetic datasets with an idealised detector.
//!
//! Ground-truth boxes are placed without overlap; each gets one prediction
//! of the true class whose edges are jittered by a small fraction of the box
//! size. Used by the benchmark harness and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{AnnotatedBox, Category, Dataset, ImageInfo, PredictionSet};
use crate::error::Result;
use crate::geometry::{iou, BBox};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub images: usize,
    /// Inclusive range of ground-truth boxes per image.
    pub boxes_per_image: (usize, usize),
    pub num_classes: usize,
    pub image_size: (u32, u32),
    /// Inclusive range of the box side length in pixels.
    pub side: (f64, f64),
    /// Inclusive range of width / height.
    pub aspect: (f64, f64),
    /// Maximum edge displacement of a prediction, as a fraction of the box
    /// dimension.
    pub jitter: f64,
    pub min_prediction_iou: f64,
    pub score: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            images: 500,
            boxes_per_image: (8, 12),
            num_classes: 10,
            image_size: (640, 480),
            side: (32.0, 96.0),
            aspect: (0.8, 1.25),
            jitter: 0.02,
            min_prediction_iou: 0.8,
            score: 0.9,
            seed: 0,
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 200;

fn place_box(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig, taken: &[BBox]) -> Option<BBox> {
    let (iw, ih) = (cfg.image_size.0 as f64, cfg.image_size.1 as f64);
    for _ in 0..PLACEMENT_ATTEMPTS {
        let side = rng.random_range(cfg.side.0..=cfg.side.1);
        let aspect = rng.random_range(cfg.aspect.0..=cfg.aspect.1);
        let w = (side * aspect.sqrt()).min(iw);
        let h = (side / aspect.sqrt()).min(ih);
        let x = rng.random_range(0.0..=iw - w);
        let y = rng.random_range(0.0..=ih - h);
        let b = BBox::new(x, y, w, h).ok()?;
        if taken.iter().all(|t| t.intersection_area(&b) == 0.0) {
            return Some(b);
        }
    }
    None
}

fn jitter(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig, b: &BBox) -> BBox {
    let (iw, ih) = (cfg.image_size.0 as f64, cfg.image_size.1 as f64);
    loop {
        let mut d = |scale: f64| rng.random_range(-cfg.jitter..=cfg.jitter) * scale;
        let x1 = b.x() + d(b.width());
        let x2 = b.right() + d(b.width());
        let y1 = b.y() + d(b.height());
        let y2 = b.bottom() + d(b.height());
        if let Some(p) = BBox::from_corners(x1, y1, x2, y2)
            .ok()
            .and_then(|p| p.clip_to(iw, ih))
        {
            if iou(&p, b) >= cfg.min_prediction_iou {
                return p;
            }
        }
    }
}

/// Builds a clean dataset and its idealised predictions.
pub fn generate(cfg: &SyntheticConfig) -> Result<(Dataset, PredictionSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let images: Vec<ImageInfo> = (0..cfg.images as u64)
        .map(|id| ImageInfo {
            id,
            width: cfg.image_size.0,
            height: cfg.image_size.1,
            file_name: format!("synthetic_{id:06}.png"),
        })
        .collect();
    let categories: Vec<Category> = (1..=cfg.num_classes as u64)
        .map(|id| Category {
            id,
            name: format!("class_{id}"),
        })
        .collect();

    let mut annotations = Vec::new();
    let mut predictions = Vec::new();
    for img in &images {
        let count = rng.random_range(cfg.boxes_per_image.0..=cfg.boxes_per_image.1);
        let mut taken: Vec<BBox> = Vec::with_capacity(count);
        for _ in 0..count {
            let Some(b) = place_box(&mut rng, cfg, &taken) else {
                break;
            };
            taken.push(b);
            let class = rng.random_range(0..cfg.num_classes);
            let pred = jitter(&mut rng, cfg, &b);
            annotations.push(AnnotatedBox::original(annotations.len() as u64 + 1, img.id, class, b));
            predictions.push(AnnotatedBox::predicted(
                predictions.len() as u64,
                img.id,
                class,
                pred,
                cfg.score,
            ));
        }
    }
    let ds = Dataset::new(images, categories, annotations)?;
    Ok((ds, PredictionSet::new(predictions, format!("synthetic seed {}", cfg.seed))))
}
