//! Finding suspicious bounding-box annotations with confident learning.
//!
//! Ground-truth and predicted boxes are clustered per image by IoU, each
//! cluster is reduced to one row of a multi-label problem with an extra
//! background column, and one-vs-rest confident learning scores every row.
//! Low-scoring rows map back to the annotations (or the unannotated regions)
//! that deserve a second look.
//!
//! ```
//! use noisybox::{geometry::BBox, geometry::iou};
//! let a = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
//! let b = BBox::new(5.0, 0.0, 10.0, 10.0).unwrap();
//! assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
//! ```

pub mod clustering;
pub mod confident_learning;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod noise;
pub mod pipeline;
pub mod reduction;
pub mod report;
pub mod synthetic;

pub use clustering::{cluster_dataset, Cluster};
pub use confident_learning::{BoxVerdict, FlagPolicy, PolicyRegistry, VerdictKind};
pub use dataset::{AnnotatedBox, Dataset, PredictionSet};
pub use error::{Error, Result};
pub use evaluation::RocCurve;
pub use geometry::BBox;
pub use noise::{NoiseKind, NoiseLedger, NoiseModel, NoiseRegistry, NoiseSpec};
pub use pipeline::{detect, evaluate, Detection};
