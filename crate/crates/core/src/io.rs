//! File formats: COCO ground truth, COCO detection results, noise ledgers,
//! reports and ROC tables.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedBox, Category, Dataset, ImageInfo, PredictionSet};
use crate::error::{Error, Result};
use crate::evaluation::RocCurve;
use crate::geometry::BBox;
use crate::noise::NoiseLedger;
use crate::report::Report;

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    images: Vec<ImageInfo>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<Category>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default, skip_deserializing)]
    area: f64,
    #[serde(default, skip_deserializing)]
    iscrowd: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoDetection {
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    score: f64,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_json<'a, T: Deserialize<'a>>(text: &'a str, origin: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn to_bbox(raw: [f64; 4], what: &'static str, id: u64) -> Result<BBox> {
    BBox::try_from(raw).map_err(|_| Error::DegenerateBox {
        what,
        id,
        reason: format!("{raw:?} needs finite coordinates and positive width and height"),
    })
}

/// Path of the machine-readable mirror written next to a tabular file.
pub fn json_mirror(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    parse_ground_truth(&read_text(path)?, path)
}

pub fn parse_ground_truth(text: &str, origin: &Path) -> Result<Dataset> {
    let raw: CocoFile = parse_json(text, origin)?;
    let mut lookup = HashMap::with_capacity(raw.categories.len());
    for (i, c) in raw.categories.iter().enumerate() {
        if lookup.insert(c.id, i).is_some() {
            return Err(Error::DuplicateId {
                what: "category",
                id: c.id,
            });
        }
    }
    let annotations = raw
        .annotations
        .into_iter()
        .map(|a| {
            let class = *lookup.get(&a.category_id).ok_or(Error::DanglingReference {
                what: "annotation",
                id: a.id,
                target: "category",
                target_id: a.category_id,
            })?;
            Ok(AnnotatedBox::original(a.id, a.image_id, class, to_bbox(a.bbox, "annotation", a.id)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(raw.images, raw.categories, annotations)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = CocoFile {
        images: ds.images().to_vec(),
        annotations: ds
            .annotations()
            .iter()
            .map(|a| CocoAnnotation {
                id: a.id,
                image_id: a.image_id,
                category_id: ds.category_id_of(a.class).expect("validated class"),
                bbox: a.bbox.to_array(),
                area: a.bbox.area(),
                iscrowd: 0,
            })
            .collect(),
        categories: ds.categories().to_vec(),
    };
    write_json(&file, path.as_ref())
}

/// Loads COCO detection results. Prediction ids are their positions in the
/// file; boxes are clipped to their images.
pub fn load_predictions(path: impl AsRef<Path>, ds: &Dataset) -> Result<PredictionSet> {
    let path = path.as_ref();
    parse_predictions(&read_text(path)?, path, ds)
}

pub fn parse_predictions(text: &str, origin: &Path, ds: &Dataset) -> Result<PredictionSet> {
    let raw: Vec<CocoDetection> = parse_json(text, origin)?;
    let lookup = ds.class_lookup();
    let boxes = raw
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let id = i as u64;
            if !(0.0..=1.0).contains(&d.score) {
                return Err(Error::InvalidScore {
                    index: i,
                    score: d.score,
                });
            }
            let img = ds.image(d.image_id).ok_or(Error::DanglingReference {
                what: "prediction",
                id,
                target: "image",
                target_id: d.image_id,
            })?;
            let class = *lookup.get(&d.category_id).ok_or(Error::DanglingReference {
                what: "prediction",
                id,
                target: "category",
                target_id: d.category_id,
            })?;
            let bbox = to_bbox(d.bbox, "prediction", id)?
                .clip_to(img.width as f64, img.height as f64)
                .ok_or_else(|| Error::DegenerateBox {
                    what: "prediction",
                    id,
                    reason: format!("{:?} lies outside image {}", d.bbox, img.id),
                })?;
            Ok(AnnotatedBox::predicted(id, d.image_id, class, bbox, d.score))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionSet::new(boxes, origin.display().to_string()))
}

pub fn save_predictions(preds: &PredictionSet, ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let raw: Vec<CocoDetection> = preds
        .boxes
        .iter()
        .map(|b| CocoDetection {
            image_id: b.image_id,
            category_id: ds.category_id_of(b.class).expect("validated class"),
            bbox: b.bbox.to_array(),
            score: b.score().unwrap_or_default(),
        })
        .collect();
    write_json(&raw, path.as_ref())
}

pub fn save_ledger(ledger: &NoiseLedger, path: impl AsRef<Path>) -> Result<()> {
    write_json(ledger, path.as_ref())
}

pub fn load_ledger(path: impl AsRef<Path>) -> Result<NoiseLedger> {
    let path = path.as_ref();
    parse_json(&read_text(path)?, path)
}

const REPORT_HEADER: [&str; 6] = [
    "cluster_id",
    "image_id",
    "annotation_ids",
    "verdict_kind",
    "quality_score",
    "flagged_class_ids",
];

/// Writes the report table to `path` and its JSON mirror next to it.
pub fn save_report(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(REPORT_HEADER)?;
    for f in &report.findings {
        let ids: Vec<String> = f.annotation_ids.iter().map(|i| i.to_string()).collect();
        w.write_record([
            f.cluster_id.to_string(),
            f.image_id.to_string(),
            ids.join(";"),
            f.verdict_kind.to_string(),
            f.quality_score.to_string(),
            f.flagged_class_ids.join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_json(report, &json_mirror(path))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = json_mirror(path.as_ref());
    parse_json(&read_text(&path)?, &path)
}

/// Writes `threshold,fpr,tpr` rows followed by an `# auroc,<value>` line,
/// plus a JSON mirror.
pub fn save_roc(curve: &RocCurve, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in &curve.points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    let mut inner = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    writeln!(inner, "# auroc,{}", curve.auroc).map_err(|e| Error::io(path, e))?;
    inner.flush().map_err(|e| Error::io(path, e))?;
    write_json(curve, &json_mirror(path))
}

/// Reads `(fpr, tpr)` pairs from a table with `fpr` and `tpr` columns.
/// Lines starting with `#` are ignored.
pub fn load_roc_points(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: format!("missing '{name}' column"),
        })
    };
    let (fi, ti) = (col("fpr")?, col("tpr")?);
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: i + 1,
                    message: format!("expected a number, got {:?}", rec.get(i).unwrap_or("")),
                })
        };
        points.push((num(fi)?, num(ti)?));
    }
    Ok(points)
}
