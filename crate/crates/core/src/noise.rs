//! Artificial annotation noise with an exact ledger of what was changed.
//!
//! Each noise kind is a [`NoiseModel`] registered by name in a
//! [`NoiseRegistry`]. All models draw from one ChaCha stream seeded with
//! [`NoiseSpec::seed`], so the same dataset and spec always produce the same
//! noisy dataset and ledger.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedBox, AnnotationId, Dataset, ImageId};
use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    UniformLabel,
    Location,
    Scale,
    Spurious,
    Missing,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 5] = [
        NoiseKind::UniformLabel,
        NoiseKind::Location,
        NoiseKind::Scale,
        NoiseKind::Spurious,
        NoiseKind::Missing,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::UniformLabel => "uniform_label",
            NoiseKind::Location => "location",
            NoiseKind::Scale => "scale",
            NoiseKind::Spurious => "spurious",
            NoiseKind::Missing => "missing",
        }
    }

    pub fn needs_amplitude(&self) -> bool {
        matches!(self, NoiseKind::Location | NoiseKind::Scale)
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown noise kind '{s}'")))
    }
}

pub const DEFAULT_SPURIOUS_SIZE: (f64, f64) = (0.02, 0.40);

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Share of annotations affected.
    pub fraction: f64,
    /// Location / scale only.
    pub amplitude: Option<f64>,
    pub seed: u64,
    /// Spurious box side range as a fraction of the image side.
    pub spurious_size: (f64, f64),
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, fraction: f64, amplitude: Option<f64>, seed: u64) -> Result<Self> {
        let spec = Self {
            kind,
            fraction,
            amplitude,
            seed,
            spurious_size: DEFAULT_SPURIOUS_SIZE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::InvalidSpec(format!(
                "fraction must lie in [0, 1], got {}",
                self.fraction
            )));
        }
        match (self.kind.needs_amplitude(), self.amplitude) {
            (true, None) => {
                return Err(Error::InvalidSpec(format!(
                    "{} noise requires an amplitude",
                    self.kind
                )))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidSpec(format!(
                    "{} noise takes no amplitude",
                    self.kind
                )))
            }
            (true, Some(a)) if !(0.0..=1.0).contains(&a) => {
                return Err(Error::InvalidSpec(format!(
                    "amplitude must lie in [0, 1], got {a}"
                )))
            }
            _ => {}
        }
        let (lo, hi) = self.spurious_size;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "spurious size range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"
            )));
        }
        Ok(())
    }

    /// Number of annotations touched for a dataset of `annotations` boxes.
    pub fn target_count(&self, annotations: usize) -> usize {
        (self.fraction * annotations as f64).round() as usize
    }
}

/// An annotation as written to ledgers, keyed by its source category id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: AnnotationId,
    pub image_id: ImageId,
    pub category_id: u64,
    pub bbox: BBox,
}

impl AnnotationRecord {
    pub fn from_box(ds: &Dataset, b: &AnnotatedBox) -> Self {
        Self {
            id: b.id,
            image_id: b.image_id,
            category_id: ds.category_id_of(b.class).expect("class index within dataset"),
            bbox: b.bbox,
        }
    }

    pub fn to_box(&self, ds: &Dataset) -> Result<AnnotatedBox> {
        let class = ds.class_of(self.category_id).ok_or(Error::DanglingReference {
            what: "ledger record",
            id: self.id,
            target: "category",
            target_id: self.category_id,
        })?;
        Ok(AnnotatedBox::original(self.id, self.image_id, class, self.bbox))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub annotation_id: AnnotationId,
    pub noise_type: NoiseKind,
    /// Pre-perturbation record (label, location, scale).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<AnnotationRecord>,
    /// Record as it appears in the noisy dataset (label, location, scale,
    /// spurious).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noisy: Option<AnnotationRecord>,
    /// Record dropped from the dataset (missing).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed: Option<AnnotationRecord>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseLedger {
    pub entries: Vec<LedgerEntry>,
}

impl NoiseLedger {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Re-applies the ledger to the clean dataset.
    pub fn replay(&self, clean: &Dataset) -> Result<Dataset> {
        let mut annotations = clean.annotations().to_vec();
        let position: HashMap<AnnotationId, usize> =
            annotations.iter().enumerate().map(|(i, a)| (a.id, i)).collect();
        let mut removed = HashSet::new();
        let mut added = Vec::new();
        for e in &self.entries {
            let missing_record = || {
                Error::InvalidInput(format!(
                    "ledger entry for annotation {} ({}) lacks its record",
                    e.annotation_id, e.noise_type
                ))
            };
            match e.noise_type {
                NoiseKind::UniformLabel | NoiseKind::Location | NoiseKind::Scale => {
                    let &i = position.get(&e.annotation_id).ok_or(Error::DanglingReference {
                        what: "ledger entry",
                        id: e.annotation_id,
                        target: "annotation",
                        target_id: e.annotation_id,
                    })?;
                    annotations[i] = e.noisy.ok_or_else(missing_record)?.to_box(clean)?;
                }
                NoiseKind::Spurious => added.push(e.noisy.ok_or_else(missing_record)?.to_box(clean)?),
                NoiseKind::Missing => {
                    removed.insert(e.annotation_id);
                }
            }
        }
        annotations.retain(|a| !removed.contains(&a.id));
        annotations.extend(added);
        clean.with_annotations(annotations)
    }
}

/// One kind of artificial annotation noise.
pub trait NoiseModel: Send + Sync {
    fn kind(&self) -> NoiseKind;

    /// Perturbs `count` annotations (or adds `count` new ones) and returns
    /// the new annotation list together with the ledger entries.
    fn apply(
        &self,
        ds: &Dataset,
        spec: &NoiseSpec,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<AnnotatedBox>, Vec<LedgerEntry>)>;
}

/// `count` distinct annotation indices, ascending.
fn choose_targets(ds: &Dataset, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx = index::sample(rng, ds.annotations().len(), count).into_vec();
    idx.sort_unstable();
    idx
}

fn image_size(ds: &Dataset, image_id: ImageId) -> (f64, f64) {
    let img = ds.image(image_id).expect("annotations reference known images");
    (img.width as f64, img.height as f64)
}

/// Shared driver for the kinds that modify existing annotations in place.
fn perturb_each<F>(
    ds: &Dataset,
    kind: NoiseKind,
    count: usize,
    rng: &mut ChaCha8Rng,
    mut perturb: F,
) -> Result<(Vec<AnnotatedBox>, Vec<LedgerEntry>)>
where
    F: FnMut(&AnnotatedBox, &mut ChaCha8Rng) -> Result<AnnotatedBox>,
{
    let mut annotations = ds.annotations().to_vec();
    let mut entries = Vec::with_capacity(count);
    for i in choose_targets(ds, count, rng) {
        let before = annotations[i];
        let after = perturb(&before, rng)?;
        annotations[i] = after;
        entries.push(LedgerEntry {
            annotation_id: before.id,
            noise_type: kind,
            original: Some(AnnotationRecord::from_box(ds, &before)),
            noisy: Some(AnnotationRecord::from_box(ds, &after)),
            removed: None,
        });
    }
    Ok((annotations, entries))
}

/// Replaces the label with one of the other `M - 1` labels, uniformly.
#[derive(Debug, Default)]
pub struct UniformLabel;

impl NoiseModel for UniformLabel {
    fn kind(&self) -> NoiseKind {
        NoiseKind::UniformLabel
    }

    fn apply(
        &self,
        ds: &Dataset,
        _spec: &NoiseSpec,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<AnnotatedBox>, Vec<LedgerEntry>)> {
        let m = ds.num_classes();
        if count > 0 && m < 2 {
            return Err(Error::InvalidSpec(
                "label noise needs at least two categories".into(),
            ));
        }
        perturb_each(ds, self.kind(), count, rng, |b, rng| {
            let mut class = rng.random_range(0..m - 1);
            if class >= b.class {
                class += 1;
            }
            Ok(AnnotatedBox { class, ..*b })
        })
    }
}

/// Moves the box center by `amplitude * (w + h) / 2` in direction `angle`,
/// then shifts the box back inside the image.
pub fn displace(bbox: &BBox, amplitude: f64, angle: f64, image: (f64, f64)) -> Option<BBox> {
    let len = amplitude * (bbox.width() + bbox.height()) / 2.0;
    let moved = BBox::new(
        bbox.x() + len * angle.cos(),
        bbox.y() + len * angle.sin(),
        bbox.width(),
        bbox.height(),
    )
    .ok()?;
    moved.shift_into(image.0, image.1)
}

/// Scales the box about its center by `factor` and clips it to the image.
pub fn rescale(bbox: &BBox, factor: f64, image: (f64, f64)) -> Option<BBox> {
    let (cx, cy) = bbox.center();
    let w = bbox.width() * factor;
    let h = bbox.height() * factor;
    BBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
        .ok()?
        .clip_to(image.0, image.1)
}

#[derive(Debug, Default)]
pub struct Location;

impl NoiseModel for Location {
    fn kind(&self) -> NoiseKind {
        NoiseKind::Location
    }

    fn apply(
        &self,
        ds: &Dataset,
        spec: &NoiseSpec,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<AnnotatedBox>, Vec<LedgerEntry>)> {
        let amplitude = spec.amplitude.unwrap_or_default();
        perturb_each(ds, self.kind(), count, rng, |b, rng| {
            let angle = rng.random_range(0.0..TAU);
            let bbox = displace(&b.bbox, amplitude, angle, image_size(ds, b.image_id)).ok_or_else(
                || Error::DegenerateBox {
                    what: "annotation",
                    id: b.id,
                    reason: "displacement left no area inside the image".into(),
                },
            )?;
            Ok(AnnotatedBox { bbox, ..*b })
        })
    }
}

/// Grows by `1 + amplitude` or shrinks by its reciprocal, on a fair coin.
#[derive(Debug, Default)]
pub struct Scale;

impl NoiseModel for Scale {
    fn kind(&self) -> NoiseKind {
        NoiseKind::Scale
    }

    fn apply(
        &self,
        ds: &Dataset,
        spec: &NoiseSpec,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<AnnotatedBox>, Vec<LedgerEntry>)> {
        let grow = 1.0 + spec.amplitude.unwrap_or_default();
        perturb_each(ds, self.kind(), count, rng, |b, rng| {
            let factor = if rng.random_bool(0.5) { grow } else { 1.0 / grow };
            let bbox = rescale(&b.bbox, factor, image_size(ds, b.image_id)).ok_or_else(|| {
                Error::DegenerateBox {
                    what: "annotation",
                    id: b.id,
                    reason: "rescaling left no area inside the image".into(),
                }
            })?;
            Ok(AnnotatedBox { bbox, ..*b })
        })
    }
}

/// Adds boxes of random size, position, and label on random images.
#[derive(Debug, Default)]
pub struct Spurious;

impl NoiseModel for Spurious {
    fn kind(&self) -> NoiseKind {
        NoiseKind::Spurious
    }

    fn apply(
        &self,
        ds: &Dataset,
        spec: &NoiseSpec,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<AnnotatedBox>, Vec<LedgerEntry>)> {
        let mut annotations = ds.annotations().to_vec();
        if count == 0 {
            return Ok((annotations, Vec::new()));
        }
        if ds.images().is_empty() || ds.num_classes() == 0 {
            return Err(Error::InvalidSpec(
                "spurious noise needs at least one image and one category".into(),
            ));
        }
        let (lo, hi) = spec.spurious_size;
        let first_id = ds.max_annotation_id().map_or(0, |id| id + 1);
        let mut entries = Vec::with_capacity(count);
        for next_id in (first_id..).take(count) {
            let img = &ds.images()[rng.random_range(0..ds.images().len())];
            let (iw, ih) = (img.width as f64, img.height as f64);
            let x = rng.random_range(0.0..iw);
            let y = rng.random_range(0.0..ih);
            let w = (rng.random_range(lo..=hi) * iw).min(iw - x);
            let h = (rng.random_range(lo..=hi) * ih).min(ih - y);
            let class = rng.random_range(0..ds.num_classes());
            let b = AnnotatedBox::original(next_id, img.id, class, BBox::new(x, y, w, h)?);
            annotations.push(b);
            entries.push(LedgerEntry {
                annotation_id: b.id,
                noise_type: self.kind(),
                original: None,
                noisy: Some(AnnotationRecord::from_box(ds, &b)),
                removed: None,
            });
        }
        Ok((annotations, entries))
    }
}

#[derive(Debug, Default)]
pub struct Missing;

impl NoiseModel for Missing {
    fn kind(&self) -> NoiseKind {
        NoiseKind::Missing
    }

    fn apply(
        &self,
        ds: &Dataset,
        _spec: &NoiseSpec,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<AnnotatedBox>, Vec<LedgerEntry>)> {
        let targets = choose_targets(ds, count, rng);
        let entries = targets
            .iter()
            .map(|&i| {
                let b = &ds.annotations()[i];
                LedgerEntry {
                    annotation_id: b.id,
                    noise_type: self.kind(),
                    original: None,
                    noisy: None,
                    removed: Some(AnnotationRecord::from_box(ds, b)),
                }
            })
            .collect();
        let drop: HashSet<usize> = targets.into_iter().collect();
        let annotations = ds
            .annotations()
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, a)| *a)
            .collect();
        Ok((annotations, entries))
    }
}

/// Noise models selectable by kind.
pub struct NoiseRegistry {
    models: BTreeMap<NoiseKind, Box<dyn NoiseModel>>,
}

impl Default for NoiseRegistry {
    fn default() -> Self {
        let mut reg = Self {
            models: BTreeMap::new(),
        };
        reg.register(Box::new(UniformLabel));
        reg.register(Box::new(Location));
        reg.register(Box::new(Scale));
        reg.register(Box::new(Spurious));
        reg.register(Box::new(Missing));
        reg
    }
}

impl NoiseRegistry {
    pub fn register(&mut self, model: Box<dyn NoiseModel>) {
        self.models.insert(model.kind(), model);
    }

    pub fn get(&self, kind: NoiseKind) -> Option<&dyn NoiseModel> {
        self.models.get(&kind).map(|m| m.as_ref())
    }

    pub fn inject(&self, ds: &Dataset, spec: &NoiseSpec) -> Result<(Dataset, NoiseLedger)> {
        spec.validate()?;
        let model = self
            .get(spec.kind)
            .ok_or_else(|| Error::InvalidSpec(format!("no model registered for {}", spec.kind)))?;
        let count = spec.target_count(ds.annotations().len());
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (annotations, entries) = model.apply(ds, spec, count, &mut rng)?;
        Ok((ds.with_annotations(annotations)?, NoiseLedger { entries }))
    }
}

/// Injects noise with the built-in models.
pub fn inject(ds: &Dataset, spec: &NoiseSpec) -> Result<(Dataset, NoiseLedger)> {
    NoiseRegistry::default().inject(ds, spec)
}
